//! Token and character n-gram metrics.

use std::collections::{HashMap, HashSet};

use rust_stemmers::{Algorithm, Stemmer};

use super::{tokenize, MetricError};

type Counts<'a> = HashMap<&'a [String], usize>;

fn ngrams(tokens: &[String], n: usize) -> Counts<'_> {
    let mut out = HashMap::new();
    if n == 0 || tokens.len() < n {
        return out;
    }
    for w in tokens.windows(n) {
        *out.entry(w).or_insert(0) += 1;
    }
    out
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// (keep F1, delete precision, add F1) for one n-gram order.
fn sari_order(source: &[String], candidate: &[String], references: &[Vec<String>], n: usize) -> (f64, f64, f64) {
    let numref = references.len();
    let s: HashMap<&[String], usize> = ngrams(source, n).into_iter().map(|(g, c)| (g, c * numref)).collect();
    let c: HashMap<&[String], usize> = ngrams(candidate, n).into_iter().map(|(g, c)| (g, c * numref)).collect();
    let mut r: HashMap<&[String], usize> = HashMap::new();
    for reference in references {
        for (g, k) in ngrams(reference, n) {
            *r.entry(g).or_insert(0) += k;
        }
    }
    let get = |m: &HashMap<&[String], usize>, g: &[String]| m.get(g).copied().unwrap_or(0);

    // keep: n-grams of the source the candidate retains
    let keep_sys: HashMap<&[String], usize> =
        s.iter().filter_map(|(g, &k)| Some((*g, k.min(get(&c, g)))).filter(|(_, v)| *v > 0)).collect();
    let keep_all: HashMap<&[String], usize> =
        s.iter().filter_map(|(g, &k)| Some((*g, k.min(get(&r, g)))).filter(|(_, v)| *v > 0)).collect();
    let keep = if keep_sys.is_empty() && keep_all.is_empty() {
        1.0
    } else {
        let good = |g: &[String]| get(&keep_sys, g).min(get(&r, g)) as f64;
        let p = if keep_sys.is_empty() {
            0.0
        } else {
            keep_sys.iter().map(|(g, &k)| good(g) / k as f64).sum::<f64>() / keep_sys.len() as f64
        };
        let rc = if keep_all.is_empty() {
            0.0
        } else {
            keep_all.iter().map(|(g, &k)| good(g) / k as f64).sum::<f64>() / keep_all.len() as f64
        };
        f1(p, rc)
    };

    // delete: n-grams of the source the candidate drops
    let del_sys: HashMap<&[String], usize> =
        s.iter().filter_map(|(g, &k)| Some((*g, k.saturating_sub(get(&c, g)))).filter(|(_, v)| *v > 0)).collect();
    let del_all_empty = s.iter().all(|(g, &k)| k <= get(&r, g));
    let delete = if del_sys.is_empty() && del_all_empty {
        1.0
    } else if del_sys.is_empty() {
        0.0
    } else {
        del_sys
            .iter()
            .map(|(g, &k)| k.saturating_sub(get(&r, g)) as f64 / k as f64)
            .sum::<f64>()
            / del_sys.len() as f64
    };

    // add: n-gram types the candidate introduces (set based)
    let add_sys: HashSet<&[String]> = c.keys().filter(|g| !s.contains_key(*g)).copied().collect();
    let add_all: HashSet<&[String]> = r.keys().filter(|g| !s.contains_key(*g)).copied().collect();
    let add = if add_sys.is_empty() && add_all.is_empty() {
        1.0
    } else {
        let good = add_sys.intersection(&add_all).count() as f64;
        let p = if add_sys.is_empty() { 0.0 } else { good / add_sys.len() as f64 };
        let rc = if add_all.is_empty() { 0.0 } else { good / add_all.len() as f64 };
        f1(p, rc)
    };
    (keep, delete, add)
}

/// SARI over n = 1..4.
///
/// Source and candidate n-gram counts are multiplied by the number of
/// references; reference counts are summed. Keep and add are F1 scores,
/// delete is precision only. A class where both the system's operations and
/// the references' operations are empty scores 1. The result is the mean
/// over n of (keep + delete + add) / 3.
pub fn sari(source: &str, candidate: &str, references: &[&str]) -> Result<f64, MetricError> {
    let src = tokenize(source);
    if src.is_empty() || references.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let cand = tokenize(candidate);
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r)).collect();
    let mut total = 0.0;
    for n in 1..=4 {
        let (k, d, a) = sari_order(&src, &cand, &refs, n);
        total += (k + d + a) / 3.0;
    }
    Ok(total / 4.0)
}

/// Character n-gram F-score.
///
/// Whitespace is removed and case is kept. Precision and recall are averaged
/// over the orders 1..=`n_max` for which both strings have n-grams, then
/// combined as F-beta. Returns 0 when no order qualifies.
pub fn chrf(candidate: &str, reference: &str, n_max: usize, beta: f64) -> Result<f64, MetricError> {
    let r: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    if r.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let c: Vec<char> = candidate.chars().filter(|c| !c.is_whitespace()).collect();
    let (mut p_sum, mut r_sum, mut orders) = (0.0, 0.0, 0usize);
    for n in 1..=n_max {
        if c.len() < n || r.len() < n {
            continue;
        }
        fn count(xs: &[char], n: usize) -> HashMap<&[char], usize> {
            let mut m = HashMap::new();
            for w in xs.windows(n) {
                *m.entry(w).or_insert(0) += 1;
            }
            m
        }
        let (cc, rc) = (count(&c, n), count(&r, n));
        let matches: usize = cc.iter().map(|(g, &k)| k.min(rc.get(g).copied().unwrap_or(0))).sum();
        p_sum += matches as f64 / (c.len() - n + 1) as f64;
        r_sum += matches as f64 / (r.len() - n + 1) as f64;
        orders += 1;
    }
    if orders == 0 {
        return Ok(0.0);
    }
    let (p, rc) = (p_sum / orders as f64, r_sum / orders as f64);
    let b2 = beta * beta;
    if p + rc == 0.0 {
        return Ok(0.0);
    }
    Ok((1.0 + b2) * p * rc / (b2 * p + rc))
}

/// chrF with the usual settings (n up to 6, beta 2).
pub fn chrf_default(candidate: &str, reference: &str) -> Result<f64, MetricError> {
    chrf(candidate, reference, 6, 2.0)
}

/// Clipped n-gram statistics of one candidate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BleuStats {
    pub matches: Vec<usize>,
    pub totals: Vec<usize>,
    pub cand_len: usize,
    pub ref_len: usize,
}

pub fn bleu_stats(candidate: &[String], references: &[Vec<String>], max_n: usize) -> BleuStats {
    let mut matches = vec![0; max_n];
    let mut totals = vec![0; max_n];
    for n in 1..=max_n {
        let cand = ngrams(candidate, n);
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for r in references {
            for (g, k) in ngrams(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(k);
            }
        }
        matches[n - 1] = cand.iter().map(|(g, &k)| k.min(max_ref.get(g).copied().unwrap_or(0))).sum();
        totals[n - 1] = candidate.len().saturating_sub(n - 1);
    }
    // closest reference length, ties to the shorter
    let c = candidate.len();
    let ref_len = references
        .iter()
        .map(Vec::len)
        .min_by_key(|&l| (l.abs_diff(c), l))
        .unwrap_or(0);
    BleuStats { matches, totals, cand_len: c, ref_len }
}

fn combine(stats: &BleuStats, smooth: bool) -> f64 {
    // Orders with no candidate n-grams are left out (effective order).
    let orders: Vec<usize> = (0..stats.totals.len()).filter(|&i| stats.totals[i] > 0).collect();
    if orders.is_empty() || stats.matches[0] == 0 {
        return 0.0;
    }
    let any_zero = orders.iter().any(|&i| stats.matches[i] == 0);
    if any_zero && !smooth {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for &i in &orders {
        let (m, t) = (stats.matches[i] as f64, stats.totals[i] as f64);
        let p = if any_zero && i >= 1 { (m + 1.0) / (t + 1.0) } else { m / t };
        log_sum += p.ln();
    }
    let (c, r) = (stats.cand_len as f64, stats.ref_len as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    (bp * (log_sum / orders.len() as f64).exp()).clamp(0.0, 1.0)
}

fn tokenized_refs(references: &[&str]) -> Result<Vec<Vec<String>>, MetricError> {
    if references.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r)).collect();
    if refs.iter().all(Vec::is_empty) {
        return Err(MetricError::EmptyInput);
    }
    Ok(refs)
}

/// Sentence BLEU with add-one smoothing of orders n ≥ 2 whenever some
/// order has no match. The order is capped at the candidate length.
pub fn bleu(candidate: &str, references: &[&str], max_n: usize) -> Result<f64, MetricError> {
    let refs = tokenized_refs(references)?;
    let cand = tokenize(candidate);
    Ok(combine(&bleu_stats(&cand, &refs, max_n), true))
}

/// Sentence BLEU without smoothing: 0 as soon as one order has no match.
pub fn bleu_unsmoothed(candidate: &str, references: &[&str], max_n: usize) -> Result<f64, MetricError> {
    let refs = tokenized_refs(references)?;
    let cand = tokenize(candidate);
    Ok(combine(&bleu_stats(&cand, &refs, max_n), false))
}

/// Corpus BLEU: statistics are summed over all pairs before combining,
/// without smoothing.
pub fn corpus_bleu(pairs: &[(&str, Vec<&str>)], max_n: usize) -> Result<f64, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mut total = BleuStats { matches: vec![0; max_n], totals: vec![0; max_n], cand_len: 0, ref_len: 0 };
    for (cand, refs) in pairs {
        let s = bleu_stats(&tokenize(cand), &tokenized_refs(refs)?, max_n);
        for i in 0..max_n {
            total.matches[i] += s.matches[i];
            total.totals[i] += s.totals[i];
        }
        total.cand_len += s.cand_len;
        total.ref_len += s.ref_len;
    }
    Ok(combine(&total, false))
}

pub(crate) fn lcs_tokens(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    for x in a {
        let mut cur = vec![0usize; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        prev = cur;
    }
    prev[b.len()]
}

/// ROUGE-L F1 over tokens.
pub fn rouge_l(candidate: &str, reference: &str) -> Result<f64, MetricError> {
    let r = tokenize(reference);
    if r.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let c = tokenize(candidate);
    let l = lcs_tokens(&c, &r);
    if l == 0 {
        return Ok(0.0);
    }
    Ok(f1(l as f64 / c.len() as f64, l as f64 / r.len() as f64))
}

/// Counts and chunks of a METEOR alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeteorAlignment {
    pub exact: usize,
    pub stem: usize,
    pub chunks: usize,
}

/// Assignments explored exhaustively before falling back to pairing
/// occurrences in order.
const MAX_ENUMERATION: u64 = 50_000;

/// Number of chunks in an alignment given as (candidate, reference) pairs.
pub fn count_chunks(pairs: &[(usize, usize)]) -> usize {
    let mut sorted = pairs.to_vec();
    sorted.sort_unstable();
    let mut chunks = 0;
    for (k, &(c, r)) in sorted.iter().enumerate() {
        if k == 0 || !(c == sorted[k - 1].0 + 1 && r == sorted[k - 1].1 + 1) {
            chunks += 1;
        }
    }
    chunks
}

/// Candidate and reference positions of one matching class.
struct Class {
    cand: Vec<usize>,
    refs: Vec<usize>,
}

impl Class {
    fn size(&self) -> usize {
        self.cand.len().min(self.refs.len())
    }

    fn choices(&self) -> u64 {
        // injective maps from the smaller side into the larger
        let (small, large) = if self.cand.len() <= self.refs.len() {
            (self.cand.len() as u64, self.refs.len() as u64)
        } else {
            (self.refs.len() as u64, self.cand.len() as u64)
        };
        (0..small).fold(1u64, |acc, i| acc.saturating_mul(large - i))
    }

    fn in_order(&self) -> Vec<(usize, usize)> {
        self.cand.iter().zip(&self.refs).map(|(&c, &r)| (c, r)).collect()
    }
}

fn classes_by<F: Fn(usize) -> String, G: Fn(usize) -> String>(
    cand: &[usize],
    refs: &[usize],
    ck: F,
    rk: G,
) -> Vec<Class> {
    let mut map: std::collections::BTreeMap<String, Class> = std::collections::BTreeMap::new();
    for &c in cand {
        map.entry(ck(c)).or_insert_with(|| Class { cand: vec![], refs: vec![] }).cand.push(c);
    }
    for &r in refs {
        if let Some(class) = map.get_mut(&rk(r)) {
            class.refs.push(r);
        }
    }
    map.into_values().filter(|c| c.size() > 0).collect()
}

/// Every injective pairing of the smaller side of `class` into the larger.
fn pairings(class: &Class) -> Vec<Vec<(usize, usize)>> {
    fn rec(small: &[usize], large: &[usize], used: &mut Vec<bool>, cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>, swap: bool) {
        if cur.len() == small.len() {
            out.push(cur.clone());
            return;
        }
        let s = small[cur.len()];
        for (j, &l) in large.iter().enumerate() {
            if used[j] {
                continue;
            }
            used[j] = true;
            cur.push(if swap { (l, s) } else { (s, l) });
            rec(small, large, used, cur, out, swap);
            cur.pop();
            used[j] = false;
        }
    }
    let swap = class.cand.len() > class.refs.len();
    let (small, large) = if swap { (&class.refs, &class.cand) } else { (&class.cand, &class.refs) };
    let mut out = Vec::new();
    rec(small, large, &mut vec![false; large.len()], &mut Vec::new(), &mut out, swap);
    out
}

fn best_completion(classes: &[Class], acc: &mut Vec<(usize, usize)>, best: &mut Option<(usize, Vec<(usize, usize)>)>) {
    let Some((first, rest)) = classes.split_first() else {
        let ch = count_chunks(acc);
        if best.as_ref().map_or(true, |(b, _)| ch < *b) {
            *best = Some((ch, acc.clone()));
        }
        return;
    };
    for p in pairings(first) {
        let len = acc.len();
        acc.extend(p);
        best_completion(rest, acc, best);
        acc.truncate(len);
    }
}

/// Aligns candidate to reference: exact matches first, then stem matches
/// among the words left over. Match counts are fixed by the word and stem
/// multisets; among the alignments reaching them, the one with the fewest
/// chunks is chosen (exhaustively when there are at most 50,000 of them,
/// otherwise by pairing occurrences in order).
pub fn meteor_align(cand: &[String], reference: &[String]) -> MeteorAlignment {
    let stemmer = Stemmer::create(Algorithm::English);
    let all_c: Vec<usize> = (0..cand.len()).collect();
    let all_r: Vec<usize> = (0..reference.len()).collect();
    let exact = classes_by(&all_c, &all_r, |i| cand[i].clone(), |j| reference[j].clone());
    let exact_n: usize = exact.iter().map(Class::size).sum();

    // Leftover counts per word type do not depend on which occurrences were
    // paired, so the stem classes' sizes are fixed; positions are chosen
    // jointly below.
    let stem_of = |w: &str| stemmer.stem(w).into_owned();
    let mut budget = exact.iter().fold(1u64, |a, c| a.saturating_mul(c.choices()));

    let finish_stems = |exact_pairs: &[(usize, usize)]| -> Vec<Class> {
        let used_c: HashSet<usize> = exact_pairs.iter().map(|p| p.0).collect();
        let used_r: HashSet<usize> = exact_pairs.iter().map(|p| p.1).collect();
        let left_c: Vec<usize> = all_c.iter().copied().filter(|i| !used_c.contains(i)).collect();
        let left_r: Vec<usize> = all_r.iter().copied().filter(|j| !used_r.contains(j)).collect();
        classes_by(&left_c, &left_r, |i| stem_of(&cand[i]), |j| stem_of(&reference[j]))
    };
    let in_order_exact: Vec<(usize, usize)> = exact.iter().flat_map(Class::in_order).collect();
    let stem_classes = finish_stems(&in_order_exact);
    let stem_n: usize = stem_classes.iter().map(Class::size).sum();
    budget = stem_classes.iter().fold(budget, |a, c| a.saturating_mul(c.choices()));

    let pairs = if budget <= MAX_ENUMERATION {
        let mut best: Option<(usize, Vec<(usize, usize)>)> = None;
        let mut exact_best: Vec<Vec<(usize, usize)>> = Vec::new();
        collect_all(&exact, &mut Vec::new(), &mut exact_best);
        for e in exact_best {
            let stems = finish_stems(&e);
            let mut acc = e.clone();
            best_completion(&stems, &mut acc, &mut best);
        }
        best.map(|(_, p)| p).unwrap_or_default()
    } else {
        let mut p = in_order_exact;
        p.extend(stem_classes.iter().flat_map(Class::in_order));
        p
    };
    MeteorAlignment { exact: exact_n, stem: stem_n, chunks: count_chunks(&pairs) }
}

fn collect_all(classes: &[Class], acc: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
    let Some((first, rest)) = classes.split_first() else {
        out.push(acc.clone());
        return;
    };
    for p in pairings(first) {
        let len = acc.len();
        acc.extend(p);
        collect_all(rest, acc, out);
        acc.truncate(len);
    }
}

/// METEOR from an alignment: Fmean = 10PR / (R + 9P), penalty
/// 0.5 (chunks / m)^3, score Fmean (1 - penalty).
pub fn meteor_from(alignment: MeteorAlignment, cand_len: usize, ref_len: usize) -> f64 {
    let m = alignment.exact + alignment.stem;
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / cand_len as f64;
    let r = m as f64 / ref_len as f64;
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (alignment.chunks as f64 / m as f64).powi(3);
    fmean * (1.0 - penalty)
}

/// METEOR with exact and stem matching (no synonym stage).
pub fn meteor(candidate: &str, reference: &str) -> Result<f64, MetricError> {
    let r = tokenize(reference);
    if r.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let c = tokenize(candidate);
    if c.is_empty() {
        return Ok(0.0);
    }
    Ok(meteor_from(meteor_align(&c, &r), c.len(), r.len()))
}
