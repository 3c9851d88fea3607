//! Bipartite matching for detection scoring.

/// Maximum-weight assignment on a dense `rows × cols` weight matrix
/// (Hungarian algorithm with potentials, O(k³) for `k = max(rows, cols)`).
/// Returns, for each row, its assigned column if any. Missing cells of the
/// padded square problem have weight 0.
pub fn max_weight_assignment(weights: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    let k = rows.max(cols);
    if k == 0 {
        return Vec::new();
    }
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            -weights[i][j]
        } else {
            0.0
        }
    };

    // 1-based arrays; index 0 is the virtual source.
    let mut u = vec![0.0; k + 1];
    let mut v = vec![0.0; k + 1];
    let mut p = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];
    for i in 1..=k {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=k {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=k {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut out = vec![None; rows];
    for j in 1..=k {
        let i = p[j];
        if i >= 1 && i <= rows && j <= cols {
            out[i - 1] = Some(j - 1);
        }
    }
    out
}

/// Maximum-cardinality matching over pairs with `score ≥ thresh`, ties broken
/// by maximum total score. Scores are assumed to lie in [0, 1].
pub fn maximum_matching(scores: &[Vec<f64>], thresh: f64) -> Vec<(usize, usize)> {
    let rows = scores.len();
    let cols = scores.first().map_or(0, Vec::len);
    // Any extra edge outweighs the largest possible total score gain.
    let bonus = (rows.min(cols) + 1) as f64;
    let weights: Vec<Vec<f64>> = scores
        .iter()
        .map(|r| r.iter().map(|&s| if s >= thresh { bonus + s } else { 0.0 }).collect())
        .collect();
    max_weight_assignment(&weights)
        .into_iter()
        .enumerate()
        .filter_map(|(i, j)| j.filter(|&j| scores[i][j] >= thresh).map(|j| (i, j)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Best (cardinality, total) over all partial matchings.
    fn brute(scores: &[Vec<f64>], thresh: f64) -> (usize, f64) {
        fn go(i: usize, scores: &[Vec<f64>], thresh: f64, used: &mut Vec<bool>) -> (usize, f64) {
            if i == scores.len() {
                return (0, 0.0);
            }
            let mut best = go(i + 1, scores, thresh, used);
            for j in 0..used.len() {
                if !used[j] && scores[i][j] >= thresh {
                    used[j] = true;
                    let (c, t) = go(i + 1, scores, thresh, used);
                    used[j] = false;
                    let cand = (c + 1, t + scores[i][j]);
                    if cand.0 > best.0 || (cand.0 == best.0 && cand.1 > best.1) {
                        best = cand;
                    }
                }
            }
            best
        }
        let cols = scores.first().map_or(0, Vec::len);
        go(0, scores, thresh, &mut vec![false; cols])
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let r = rng.random_range(0..=6);
            let c = rng.random_range(0..=6);
            let scores: Vec<Vec<f64>> = (0..r)
                .map(|_| {
                    (0..c)
                        .map(|_| if rng.random_bool(0.4) { 0.0 } else { rng.random::<f64>() })
                        .collect()
                })
                .collect();
            let m = maximum_matching(&scores, 0.25);
            let total: f64 = m.iter().map(|&(i, j)| scores[i][j]).sum();
            let (bc, bt) = brute(&scores, 0.25);
            assert_eq!(m.len(), bc);
            assert!((total - bt).abs() < 1e-9);
            let mut cols: Vec<usize> = m.iter().map(|p| p.1).collect();
            cols.sort_unstable();
            cols.dedup();
            assert_eq!(cols.len(), m.len());
        }
    }

    #[test]
    fn cardinality_beats_score() {
        // Greedy on score would take (0,0) and leave row 1 unmatched.
        let scores = vec![vec![0.9, 0.3], vec![0.8, 0.0]];
        let m = maximum_matching(&scores, 0.25);
        assert_eq!(m, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn empty_inputs() {
        assert!(maximum_matching(&[], 0.5).is_empty());
        assert!(maximum_matching(&[vec![], vec![]], 0.5).is_empty());
    }
}
