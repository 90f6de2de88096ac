//! Estimators with standard errors.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Mean, sample standard deviation and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(x: &[f64]) -> Self {
        let n = x.len();
        assert!(n > 1, "need at least two samples");
        let mean = x.iter().sum::<f64>() / n as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        Self { mean, sd, se: sd / (n as f64).sqrt(), n }
    }
}

fn central_moment(x: &[f64], mean: f64, p: i32) -> f64 {
    x.iter().map(|v| (v - mean).powi(p)).sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance and its large-sample standard error
/// `sqrt((m4 - s^4 (n-3)/(n-1)) / n)`.
pub fn variance_with_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let s = Summary::of(x);
    let var = s.sd * s.sd;
    let m4 = central_moment(x, s.mean, 4);
    let v = ((m4 - var * var * (n - 3.0) / (n - 1.0)) / n).max(0.0);
    (var, v.sqrt())
}

/// Sample covariance and the standard error of the mean of the centered
/// products.
pub fn covariance_with_se(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let prods: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    let s = Summary::of(&prods);
    (s.mean * n as f64 / (n - 1) as f64, s.se)
}

/// Mean over `batches` consecutive batches, with the standard error of the
/// batch means. Trailing values that do not fill a batch are dropped.
pub fn batch_means(x: &[f64], batches: usize) -> Summary {
    assert!(batches >= 2 && x.len() >= batches);
    let size = x.len() / batches;
    let means: Vec<f64> = (0..batches).map(|b| x[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64).collect();
    Summary::of(&means)
}

/// Skewness, excess kurtosis and the Jarque–Bera normality p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normality {
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub jarque_bera: f64,
    pub p_value: f64,
}

pub fn normality(x: &[f64]) -> Normality {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let m2 = central_moment(x, mean, 2);
    if m2 == 0.0 {
        return Normality { skewness: 0.0, excess_kurtosis: 0.0, jarque_bera: 0.0, p_value: 1.0 };
    }
    let skewness = central_moment(x, mean, 3) / m2.powf(1.5);
    let excess_kurtosis = central_moment(x, mean, 4) / (m2 * m2) - 3.0;
    let jb = n / 6.0 * (skewness * skewness + excess_kurtosis * excess_kurtosis / 4.0);
    let p_value = 1.0 - ChiSquared::new(2.0).expect("two degrees of freedom").cdf(jb);
    Normality { skewness, excess_kurtosis, jarque_bera: jb, p_value }
}

/// `(estimate - target) / se`, or `None` when undefined.
pub fn z_score(estimate: f64, se: f64, target: f64) -> Option<f64> {
    if se > 0.0 {
        Some((estimate - target) / se)
    } else if estimate == target {
        Some(0.0)
    } else {
        None
    }
}

/// One estimated quantity with its theoretical target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
    pub target: Option<f64>,
    pub z: Option<f64>,
}

impl EstimateRecord {
    pub fn new(name: impl Into<String>, estimate: f64, std_error: f64, samples: usize, target: Option<f64>) -> Self {
        let z = target.and_then(|t| z_score(estimate, std_error, t));
        Self { name: name.into(), estimate, std_error, samples, target, z }
    }

    pub fn from_samples(name: impl Into<String>, x: &[f64], target: Option<f64>) -> Self {
        let s = Summary::of(x);
        Self::new(name, s.mean, s.se, s.n, target)
    }

    /// `|z| <= k`, treating a missing target as a pass.
    pub fn within(&self, k: f64) -> bool {
        match (self.target, self.z) {
            (None, _) => true,
            (Some(_), Some(z)) => z.abs() <= k,
            (Some(_), None) => false,
        }
    }
}
