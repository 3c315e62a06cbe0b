use serde::{Deserialize, Serialize};

use super::{AnalysisError, Detection};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub id: usize,
    /// Strictly increasing in `frame`.
    pub detections: Vec<Detection>,
}

fn dist(a: &Detection, b: &Detection) -> f64 {
    let dz = match (a.z, b.z) {
        (Some(p), Some(q)) => p - q,
        _ => 0.0,
    };
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + dz * dz).sqrt()
}

/// Links per-frame detections into traces.
///
/// At each frame the globally nearest (trace, detection) pair within
/// `max_displacement` is joined first, then the next nearest among the
/// remaining ones, and so on. A trace whose last detection is more than
/// `max_gap + 1` frames old is closed. Unmatched detections start new
/// traces. Each detection's `frame` is set to its index in `frames`.
pub fn link_traces(frames: &[Vec<Detection>], max_displacement: f64, max_gap: usize) -> Vec<Trace> {
    let mut traces: Vec<Trace> = Vec::new();
    let mut open: Vec<usize> = Vec::new();
    for (t, dets) in frames.iter().enumerate() {
        open.retain(|&k| t - traces[k].detections.last().expect("non-empty trace").frame <= max_gap + 1);
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for &k in &open {
            let last = traces[k].detections.last().expect("non-empty trace");
            for (j, d) in dets.iter().enumerate() {
                let r = dist(last, d);
                if r <= max_displacement {
                    pairs.push((r, k, j));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut trace_used = vec![false; traces.len()];
        let mut det_used = vec![false; dets.len()];
        for (_, k, j) in pairs {
            if trace_used[k] || det_used[j] {
                continue;
            }
            trace_used[k] = true;
            det_used[j] = true;
            traces[k].detections.push(Detection { frame: t, ..dets[j].clone() });
        }
        for (j, d) in dets.iter().enumerate() {
            if !det_used[j] {
                let id = traces.len();
                traces.push(Trace { id, detections: vec![Detection { frame: t, ..d.clone() }] });
                open.push(id);
            }
        }
    }
    traces
}

/// Component-wise mean of per-observation prediction vectors.
pub fn average_trace_predictions(observations: &[Vec<f64>]) -> Result<Vec<f64>, AnalysisError> {
    let first = observations.first().ok_or(AnalysisError::EmptyTrace)?;
    let mut sum = vec![0.0; first.len()];
    for o in observations {
        if o.len() != sum.len() {
            return Err(AnalysisError::DimensionMismatch { expected: sum.len(), found: o.len() });
        }
        for (s, v) in sum.iter_mut().zip(o) {
            *s += v;
        }
    }
    let n = observations.len() as f64;
    Ok(sum.into_iter().map(|s| s / n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input() {
        assert!(link_traces(&[], 5.0, 0).is_empty());
        assert!(matches!(average_trace_predictions(&[]), Err(AnalysisError::EmptyTrace)));
    }

    #[test]
    fn gap_closing() {
        let f = vec![vec![Detection::at(1.0, 1.0)], vec![], vec![Detection::at(1.5, 1.0)], vec![], vec![], vec![Detection::at(2.0, 1.0)]];
        let t = link_traces(&f, 2.0, 1);
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].detections.iter().map(|d| d.frame).collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(t[1].detections[0].frame, 5);
    }

    #[test]
    fn means() {
        assert_eq!(average_trace_predictions(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap(), vec![2.0]);
        assert_eq!(average_trace_predictions(&[vec![4.0, -1.0]]).unwrap(), vec![4.0, -1.0]);
    }
}
