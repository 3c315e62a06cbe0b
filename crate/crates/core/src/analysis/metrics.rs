use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchStats {
    /// Matched / predicted; 1 when nothing was predicted.
    pub precision: f64,
    /// Matched / true; 1 when there is nothing to find.
    pub recall: f64,
    /// Root-mean-square distance of matched pairs; `None` without matches.
    pub rmse: Option<f64>,
    pub matched: usize,
}

/// Greedy nearest-pair matching of `predicted` to `truth` within `radius`.
pub fn match_detections(predicted: &[(f64, f64)], truth: &[(f64, f64)], radius: f64) -> MatchStats {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in predicted.iter().enumerate() {
        for (j, t) in truth.iter().enumerate() {
            let d2 = (p.0 - t.0).powi(2) + (p.1 - t.1).powi(2);
            if d2 <= radius * radius {
                pairs.push((d2, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let (mut used_p, mut used_t) = (vec![false; predicted.len()], vec![false; truth.len()]);
    let (mut matched, mut sq) = (0usize, 0.0);
    for (d2, i, j) in pairs {
        if used_p[i] || used_t[j] {
            continue;
        }
        used_p[i] = true;
        used_t[j] = true;
        matched += 1;
        sq += d2;
    }
    let ratio = |n: usize| if n == 0 { 1.0 } else { matched as f64 / n as f64 };
    MatchStats {
        precision: ratio(predicted.len()),
        recall: ratio(truth.len()),
        rmse: (matched > 0).then(|| (sq / matched as f64).sqrt()),
        matched,
    }
}
