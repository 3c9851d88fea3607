use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ROUGE_BETA: f64 = 1.2;
pub const CIDER_SIGMA: f64 = 6.0;
const MAX_N: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaptionScores {
    pub cider_at_05: f64,
    pub bleu4_at_05: f64,
    pub rouge_l_at_05: f64,
    pub n_samples: usize,
    /// Samples whose box IoU reached the gate.
    pub n_passing: usize,
}

/// Lowercases and splits on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

type Counts<'a> = HashMap<&'a [String], usize>;

fn ngrams(tokens: &[String], n: usize) -> Counts<'_> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w).or_insert(0) += 1;
        }
    }
    out
}

/// Corpus BLEU-4 with uniform weights and brevity penalty against the closest
/// reference length (shorter wins ties). No smoothing: any zero n-gram
/// precision gives 0.
pub fn bleu4(cands: &[Vec<String>], refs: &[Vec<Vec<String>>]) -> f64 {
    let mut matched = [0usize; MAX_N];
    let mut total = [0usize; MAX_N];
    let (mut cand_len, mut ref_len) = (0usize, 0usize);
    for (c, rs) in cands.iter().zip(refs) {
        cand_len += c.len();
        ref_len += rs
            .iter()
            .map(Vec::len)
            .min_by_key(|&l| (l.abs_diff(c.len()), l))
            .unwrap_or(0);
        for n in 1..=MAX_N {
            let cc = ngrams(c, n);
            let mut max_ref: Counts = HashMap::new();
            for r in rs {
                for (g, k) in ngrams(r, n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(k);
                }
            }
            for (g, k) in &cc {
                matched[n - 1] += (*k).min(max_ref.get(g).copied().unwrap_or(0));
                total[n - 1] += k;
            }
        }
    }
    if cand_len == 0 || matched.contains(&0) {
        return 0.0;
    }
    let log_p: f64 = (0..MAX_N)
        .map(|i| (matched[i] as f64 / total[i] as f64).ln())
        .sum::<f64>()
        / MAX_N as f64;
    let bp = if cand_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    bp * log_p.exp()
}

fn lcs(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F-measure against multiple references, taking the best precision
/// and best recall over references before combining.
pub fn rouge_l(cand: &[String], refs: &[Vec<String>]) -> f64 {
    if cand.is_empty() {
        return 0.0;
    }
    let (mut p, mut r) = (0.0f64, 0.0f64);
    for rf in refs.iter().filter(|r| !r.is_empty()) {
        let l = lcs(cand, rf) as f64;
        p = p.max(l / cand.len() as f64);
        r = r.max(l / rf.len() as f64);
    }
    if p == 0.0 || r == 0.0 {
        return 0.0;
    }
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * p * r / (r + b2 * p)
}

struct TfIdf {
    vecs: Vec<HashMap<Vec<String>, f64>>,
    norms: [f64; MAX_N],
    len: usize,
}

fn tfidf(tokens: &[String], df: &HashMap<Vec<String>, usize>, log_n: f64) -> TfIdf {
    let mut vecs = Vec::with_capacity(MAX_N);
    let mut norms = [0.0; MAX_N];
    for n in 1..=MAX_N {
        let mut v = HashMap::new();
        for (g, tf) in ngrams(tokens, n) {
            let d = (df.get(g).copied().unwrap_or(0).max(1) as f64).ln();
            let w = tf as f64 * (log_n - d);
            norms[n - 1] += w * w;
            v.insert(g.to_vec(), w);
        }
        vecs.push(v);
    }
    TfIdf {
        vecs,
        norms: norms.map(f64::sqrt),
        len: tokens.len(),
    }
}

fn cider_sim(h: &TfIdf, r: &TfIdf) -> f64 {
    let delta = h.len as f64 - r.len as f64;
    let penalty = (-(delta * delta) / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
    let mut sum = 0.0;
    for n in 0..MAX_N {
        let mut val: f64 = h.vecs[n]
            .iter()
            .map(|(g, w)| r.vecs[n].get(g).map_or(0.0, |rw| w.min(*rw) * rw))
            .sum();
        if h.norms[n] != 0.0 && r.norms[n] != 0.0 {
            val /= h.norms[n] * r.norms[n];
        }
        sum += val * penalty;
    }
    sum / MAX_N as f64
}

/// Per-sample CIDEr-D (×10). Document frequencies come from the references of
/// all given samples.
pub fn cider_d(cands: &[Vec<String>], refs: &[Vec<Vec<String>>]) -> Vec<f64> {
    let mut df: HashMap<Vec<String>, usize> = HashMap::new();
    for rs in refs {
        let mut seen: HashSet<&[String]> = HashSet::new();
        for r in rs {
            for n in 1..=MAX_N {
                seen.extend(ngrams(r, n).into_keys());
            }
        }
        for g in seen {
            *df.entry(g.to_vec()).or_insert(0) += 1;
        }
    }
    let log_n = (refs.len().max(1) as f64).ln();
    cands
        .iter()
        .zip(refs)
        .map(|(c, rs)| {
            let h = tfidf(c, &df, log_n);
            let total: f64 = rs.iter().map(|r| cider_sim(&h, &tfidf(r, &df, log_n))).sum();
            10.0 * total / rs.len() as f64
        })
        .collect()
}

/// Caption metrics gated at box IoU ≥ `iou_gate`: gated-out samples score 0.
///
/// BLEU-4 is corpus BLEU over the passing samples scaled by the passing share;
/// ROUGE-L and CIDEr-D are per-sample means over all samples.
pub fn caption_scores(
    preds: &[String],
    refs: &[Vec<String>],
    box_ious: &[f64],
    iou_gate: f64,
) -> Result<CaptionScores> {
    let n = preds.len();
    if refs.len() != n || box_ious.len() != n {
        return Err(Error::invalid(format!(
            "caption inputs disagree in length: {n} predictions, {} reference sets, {} IoUs",
            refs.len(),
            box_ious.len()
        )));
    }
    if let Some(i) = refs.iter().position(|r| r.is_empty()) {
        return Err(Error::invalid(format!("sample {i} has no reference captions")));
    }
    let cands: Vec<Vec<String>> = preds.iter().map(|p| tokenize(p)).collect();
    let toks: Vec<Vec<Vec<String>>> = refs
        .iter()
        .map(|rs| rs.iter().map(|r| tokenize(r)).collect())
        .collect();
    let pass: Vec<bool> = box_ious.iter().map(|&x| x >= iou_gate).collect();
    let n_pass = pass.iter().filter(|&&p| p).count();
    if n == 0 {
        return Ok(CaptionScores {
            cider_at_05: 0.0,
            bleu4_at_05: 0.0,
            rouge_l_at_05: 0.0,
            n_samples: 0,
            n_passing: 0,
        });
    }

    let (pc, pr): (Vec<_>, Vec<_>) = cands
        .iter()
        .zip(&toks)
        .zip(&pass)
        .filter(|(_, &p)| p)
        .map(|((c, r), _)| (c.clone(), r.clone()))
        .unzip();
    let bleu = bleu4(&pc, &pr) * n_pass as f64 / n as f64;
    let gated_mean = |scores: &mut dyn Iterator<Item = f64>| {
        scores.zip(&pass).map(|(s, &p)| if p { s } else { 0.0 }).sum::<f64>() / n as f64
    };
    let rouge = gated_mean(&mut cands.iter().zip(&toks).map(|(c, r)| rouge_l(c, r)));
    let cider = gated_mean(&mut cider_d(&cands, &toks).into_iter());
    Ok(CaptionScores {
        cider_at_05: cider,
        bleu4_at_05: bleu,
        rouge_l_at_05: rouge,
        n_samples: n,
        n_passing: n_pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn tokenizer() {
        assert_eq!(tokenize("A white, cabinet.  In-the corner!"), s(&["a", "white", "cabinet", "in", "the", "corner"]));
    }

    #[test]
    fn exact_match_is_one() {
        let preds = s(&["a brown wooden chair next to the desk", "the tall lamp stands in the corner"]);
        let refs: Vec<Vec<String>> = preds.iter().map(|p| vec![p.clone()]).collect();
        let r = caption_scores(&preds, &refs, &[1.0, 1.0], 0.5).unwrap();
        assert!((r.bleu4_at_05 - 1.0).abs() < 1e-12);
        assert!((r.rouge_l_at_05 - 1.0).abs() < 1e-12);
        assert!(r.cider_at_05 > 0.0);
    }

    #[test]
    fn gating_zeroes_everything() {
        let preds = s(&["a chair here now", "a lamp over there"]);
        let refs: Vec<Vec<String>> = preds.iter().map(|p| vec![p.clone()]).collect();
        let r = caption_scores(&preds, &refs, &[0.0, 0.49], 0.5).unwrap();
        assert_eq!((r.bleu4_at_05, r.rouge_l_at_05, r.cider_at_05), (0.0, 0.0, 0.0));
    }

    #[test]
    fn half_gated_scales() {
        let preds = s(&["a chair here now", "a lamp over there"]);
        let refs: Vec<Vec<String>> = preds.iter().map(|p| vec![p.clone()]).collect();
        let r = caption_scores(&preds, &refs, &[1.0, 0.2], 0.5).unwrap();
        assert!((r.bleu4_at_05 - 0.5).abs() < 1e-12);
        assert!((r.rouge_l_at_05 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rouge_hand_value() {
        // LCS("a b c d", "a c e") = 2 → P = 1/2, R = 2/3.
        let f = rouge_l(&s(&["a", "b", "c", "d"]), &[s(&["a", "c", "e"])]);
        let (p, r, b2) = (0.5, 2.0 / 3.0, 1.44);
        assert!((f - (1.0 + b2) * p * r / (r + b2 * p)).abs() < 1e-15);
    }

    #[test]
    fn bad_inputs() {
        assert!(caption_scores(&s(&["a"]), &[vec![]], &[1.0], 0.5).is_err());
        assert!(caption_scores(&s(&["a"]), &[s(&["a"])], &[], 0.5).is_err());
    }

    #[test]
    fn cider_identical_pair_is_ten() {
        // Two samples, disjoint vocabularies: each candidate's vector equals its
        // reference's, so every n-gram similarity is exactly 1.
        let c = vec![s(&["red", "chair", "by", "window", "side"]), s(&["blue", "lamp", "on", "small", "desk"])];
        let refs: Vec<Vec<Vec<String>>> = c.iter().map(|x| vec![x.clone()]).collect();
        for v in cider_d(&c, &refs) {
            assert!((v - 10.0).abs() < 1e-12);
        }
    }
}
