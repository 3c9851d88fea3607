use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{box_iou, OrientedBox3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundingResult {
    pub acc_025: f64,
    pub acc_05: f64,
    pub n_samples: usize,
    pub n_parse_failures: usize,
    /// Mean IoU over all samples (failures count as 0).
    pub mean_iou: f64,
}

fn check_ids<A, B>(preds: &[(String, A)], gts: &[(String, B)]) -> Result<()> {
    if preds.len() != gts.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} ground-truth samples",
            preds.len(),
            gts.len()
        )));
    }
    if let Some(((p, _), (g, _))) = preds.iter().zip(gts).find(|((p, _), (g, _))| p != g) {
        return Err(Error::invalid(format!(
            "sample id mismatch: prediction {p:?} aligned with ground truth {g:?}"
        )));
    }
    Ok(())
}

/// Acc@0.25 and Acc@0.5: a sample succeeds at τ when its prediction parsed and
/// `IoU ≥ τ`. `None` marks a parse failure.
pub fn grounding_accuracy(
    preds: &[(String, Option<OrientedBox3>)],
    gts: &[(String, OrientedBox3)],
) -> Result<GroundingResult> {
    check_ids(preds, gts)?;
    let n = preds.len();
    let ious: Vec<Option<f64>> = preds
        .iter()
        .zip(gts)
        .map(|((_, p), (_, g))| p.as_ref().map(|p| box_iou(p, g)))
        .collect();
    let count = |tau: f64| ious.iter().filter(|v| v.is_some_and(|x| x >= tau)).count();
    let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    Ok(GroundingResult {
        acc_025: frac(count(0.25)),
        acc_05: frac(count(0.5)),
        n_samples: n,
        n_parse_failures: ious.iter().filter(|v| v.is_none()).count(),
        mean_iou: if n == 0 {
            0.0
        } else {
            ious.iter().map(|v| v.unwrap_or(0.0)).sum::<f64>() / n as f64
        },
    })
}

/// Share of samples whose predicted anchor frame equals the ground truth.
pub fn frame_accuracy(preds: &[(String, Option<usize>)], gts: &[(String, usize)]) -> Result<f64> {
    check_ids(preds, gts)?;
    if preds.is_empty() {
        return Ok(0.0);
    }
    let hits = preds
        .iter()
        .zip(gts)
        .filter(|((_, p), (_, g))| *p == Some(*g))
        .count();
    Ok(hits as f64 / preds.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;

    fn cube(x: f64) -> OrientedBox3 {
        OrientedBox3::axis_aligned(Vec3::new(x, 0.0, 0.0), Vec3::new(1.0, 1.0, 1.0)).unwrap()
    }

    fn ids<T: Clone>(v: &[T]) -> Vec<(String, T)> {
        v.iter().enumerate().map(|(i, x)| (format!("s{i}"), x.clone())).collect()
    }

    #[test]
    fn perfect_and_failed() {
        let gts = ids(&[cube(0.0), cube(1.0)]);
        let perfect = ids(&[Some(cube(0.0)), Some(cube(1.0))]);
        let r = grounding_accuracy(&perfect, &gts).unwrap();
        assert_eq!((r.acc_025, r.acc_05), (1.0, 1.0));
        let failed = ids(&[None, None]);
        let r = grounding_accuracy(&failed, &gts).unwrap();
        assert_eq!((r.acc_025, r.acc_05, r.n_parse_failures), (0.0, 0.0, 2));
    }

    #[test]
    fn one_third_counts_only_at_quarter() {
        // Unit cubes offset by half an edge: overlap 1/2, union 3/2.
        let gts = ids(&[cube(0.0)]);
        let preds = ids(&[Some(cube(0.5))]);
        let r = grounding_accuracy(&preds, &gts).unwrap();
        assert_eq!((r.acc_025, r.acc_05), (1.0, 0.0));
    }

    #[test]
    fn id_mismatch_rejected() {
        let gts = vec![("a".to_string(), cube(0.0))];
        let preds = vec![("b".to_string(), Some(cube(0.0)))];
        assert!(grounding_accuracy(&preds, &gts).is_err());
        assert!(grounding_accuracy(&[], &gts).is_err());
    }

    #[test]
    fn frames() {
        let gts = ids(&[2usize, 3]);
        let preds = ids(&[Some(2usize), None]);
        assert_eq!(frame_accuracy(&preds, &gts).unwrap(), 0.5);
    }
}
