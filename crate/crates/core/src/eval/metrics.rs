//! Task metrics. All are higher-is-better.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample Pearson correlation, computed in two passes.
pub fn pearson_r(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::shape(format!("{} predictions", y.len()), y_hat.len()));
    }
    if y.len() < 2 {
        return Err(Error::UndefinedMetric("pearson r needs at least two points".into()));
    }
    let n = y.len() as f64;
    let my = y.iter().sum::<f64>() / n;
    let mp = y_hat.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in y.iter().zip(y_hat) {
        let (da, db) = (a - my, b - mp);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedMetric("pearson r of a constant vector".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Correct a correlation for measurement error in both variables.
/// The result is not clamped and may exceed 1.
pub fn disattenuated_r(r: f64, r_xx: f64, r_yy: f64) -> Result<f64> {
    for (name, v) in [("r_xx", r_xx), ("r_yy", r_yy)] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::Config(format!("reliability {name} must be in (0, 1], got {v}")));
        }
    }
    Ok(r / (r_xx * r_yy).sqrt())
}

/// Unweighted mean of per-class F1. A class with no true positives scores 0,
/// including a class absent from both vectors.
pub fn macro_f1(y: &[usize], y_hat: &[usize], n_classes: usize) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::shape(format!("{} predictions", y.len()), y_hat.len()));
    }
    if n_classes == 0 {
        return Err(Error::Config("macro F1 needs at least one class".into()));
    }
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fn_ = vec![0usize; n_classes];
    for (i, (&a, &b)) in y.iter().zip(y_hat).enumerate() {
        if a >= n_classes || b >= n_classes {
            return Err(Error::data_at(i, format!("label outside 0..{n_classes}")));
        }
        if a == b {
            tp[a] += 1;
        } else {
            fn_[a] += 1;
            fp[b] += 1;
        }
    }
    let total: f64 = (0..n_classes)
        .map(|c| {
            if tp[c] == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / (2 * tp[c] + fp[c] + fn_[c]) as f64
            }
        })
        .sum();
    Ok(total / n_classes as f64)
}

/// The score a bootstrap replicate reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Metric {
    PearsonR,
    DisattenuatedR { r_xx: f64, r_yy: f64 },
    MacroF1 { n_classes: usize },
}

impl Metric {
    pub fn score(&self, y: &[f64], y_hat: &[f64]) -> Result<f64> {
        match *self {
            Metric::PearsonR => pearson_r(y, y_hat),
            Metric::DisattenuatedR { r_xx, r_yy } => disattenuated_r(pearson_r(y, y_hat)?, r_xx, r_yy),
            Metric::MacroF1 { n_classes } => {
                let a: Vec<usize> = y.iter().map(|&v| v as usize).collect();
                let b: Vec<usize> = y_hat.iter().map(|&v| v as usize).collect();
                macro_f1(&a, &b, n_classes)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pearson_fixtures() {
        assert_eq!(pearson_r(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(pearson_r(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!(matches!(pearson_r(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::UndefinedMetric(_))));
        assert!(matches!(pearson_r(&[1.0], &[1.0]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn pearson_matches_textbook_formula() {
        // One-pass raw-moment form as an independent oracle.
        let (y, p) = ([1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 4.0, 3.0]);
        let n = 4.0;
        let (sx, sy): (f64, f64) = (y.iter().sum(), p.iter().sum());
        let sxy: f64 = y.iter().zip(&p).map(|(a, b)| a * b).sum();
        let sxx: f64 = y.iter().map(|a| a * a).sum();
        let syy: f64 = p.iter().map(|a| a * a).sum();
        let oracle = (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt());
        assert!((pearson_r(&y, &p).unwrap() - oracle).abs() < 1e-12);
        assert!((oracle - 0.8).abs() < 1e-12);
    }

    #[test]
    fn disattenuation() {
        assert_eq!(disattenuated_r(0.0, 0.7, 0.77).unwrap(), 0.0);
        assert_eq!(disattenuated_r(0.42, 1.0, 1.0).unwrap(), 0.42);
        assert!((disattenuated_r(0.3, 0.7, 0.77).unwrap() - 0.40862).abs() < 1e-5);
        assert!(disattenuated_r(0.3, 0.0, 0.5).unwrap_err().is_config());
        assert!(disattenuated_r(0.3, 0.5, 1.5).is_err());
    }

    #[test]
    fn f1_fixtures() {
        assert_eq!(macro_f1(&[0, 1, 1, 0], &[0, 1, 1, 0], 2).unwrap(), 1.0);
        assert!((macro_f1(&[0, 0, 1, 1], &[0, 0, 0, 0], 2).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(macro_f1(&[0, 1, 2, 3], &[0, 1, 2, 3], 4).unwrap(), 1.0);
        // Class 2 is absent from both vectors and contributes zero.
        assert!((macro_f1(&[0, 1], &[0, 1], 3).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(macro_f1(&[0, 2], &[0, 1], 2), Err(Error::Data { row: Some(1), .. })));
    }

    proptest! {
        #[test]
        fn pearson_symmetric_and_affine_invariant(
            pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..40),
            scale in 0.1f64..10.0,
            shift in -50.0f64..50.0,
        ) {
            let (y, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            if let Ok(r) = pearson_r(&y, &p) {
                prop_assert_eq!(r, pearson_r(&p, &y).unwrap());
                let moved: Vec<f64> = p.iter().map(|v| v * scale + shift).collect();
                prop_assert!((pearson_r(&y, &moved).unwrap() - r).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }

        #[test]
        fn f1_invariant_under_relabeling(
            pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60),
            perm in Just([0usize, 1, 2, 3]).prop_shuffle(),
        ) {
            let (y, p): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let f = macro_f1(&y, &p, 4).unwrap();
            let y2: Vec<usize> = y.iter().map(|&c| perm[c]).collect();
            let p2: Vec<usize> = p.iter().map(|&c| perm[c]).collect();
            prop_assert!((macro_f1(&y2, &p2, 4).unwrap() - f).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&f));
        }
    }
}
