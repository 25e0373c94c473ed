//! Small sample statistics used for multi-seed comparisons.

use statrs::distribution::{ContinuousCDF, StudentsT};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; 0 for fewer than two samples.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn standard_error(xs: &[f64]) -> f64 {
    (sample_variance(xs) / xs.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchTest {
    pub t: f64,
    pub dof: f64,
    /// One-sided p-value for `mean(a) < mean(b)`.
    pub p_less: f64,
}

/// Welch's unequal-variance t-test, one-sided alternative `mean(a) < mean(b)`.
/// Needs at least two samples on each side.
pub fn welch_less(a: &[f64], b: &[f64]) -> Option<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sample_variance(a) / na, sample_variance(b) / nb);
    let se2 = va + vb;
    let diff = mean(a) - mean(b);
    if se2 == 0.0 {
        let p = if diff < 0.0 { 0.0 } else { 1.0 };
        return Some(WelchTest { t: f64::NAN, dof: f64::NAN, p_less: p });
    }
    let t = diff / se2.sqrt();
    let dof = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, dof).ok()?;
    Some(WelchTest { t, dof, p_less: dist.cdf(t) })
}
