use super::{add_gaussian_noise, EstimationOptions, ObjectiveConstants, StochasticObjective};
use crate::error::{Error, Result};
use crate::rng::SampleKey;

/// Diagonal quadratic with additive isotropic Gaussian gradient noise.
///
/// Every constant is exact: `L = max eigenvalue`, `M = d * sigma^2`, `F* = 0`.
/// The second-moment bound only holds on a ball around the minimizer, so it is
/// reported for `opts.radius`: `M_G = L^2 r^2 + M`.
#[derive(Debug, Clone)]
pub struct NoisyQuadratic {
    eigenvalues: Vec<f64>,
    minimizer: Vec<f64>,
    sigma: f64,
}

impl NoisyQuadratic {
    pub fn new(eigenvalues: Vec<f64>, minimizer: Option<Vec<f64>>, sigma: f64) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidObjective("quadratic needs at least one eigenvalue".into()));
        }
        if eigenvalues.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
            return Err(Error::InvalidObjective("quadratic eigenvalues must be > 0".into()));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidObjective("noise level sigma must be >= 0".into()));
        }
        let minimizer = minimizer.unwrap_or_else(|| vec![0.0; eigenvalues.len()]);
        if minimizer.len() != eigenvalues.len() {
            return Err(Error::DimensionMismatch { expected: eigenvalues.len(), actual: minimizer.len() });
        }
        Ok(NoisyQuadratic { eigenvalues, minimizer, sigma })
    }

    pub fn minimizer(&self) -> &[f64] {
        &self.minimizer
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl StochasticObjective for NoisyQuadratic {
    fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    fn loss(&self, w: &[f64]) -> f64 {
        0.5 * w
            .iter()
            .zip(&self.minimizer)
            .zip(&self.eigenvalues)
            .map(|((wi, mi), li)| li * (wi - mi) * (wi - mi))
            .sum::<f64>()
    }

    fn gradient_into(&self, w: &[f64], out: &mut [f64]) {
        for (((o, wi), mi), li) in out.iter_mut().zip(w).zip(&self.minimizer).zip(&self.eigenvalues) {
            *o = li * (wi - mi);
        }
    }

    fn add_sample_gradient(&self, w: &[f64], key: SampleKey, acc: &mut [f64]) {
        for (((a, wi), mi), li) in acc.iter_mut().zip(w).zip(&self.minimizer).zip(&self.eigenvalues) {
            *a += li * (wi - mi);
        }
        if self.sigma > 0.0 {
            add_gaussian_noise(&mut key.stream(), self.sigma, acc);
        }
    }

    fn constants(&self, w0: &[f64], opts: &EstimationOptions) -> ObjectiveConstants {
        let lipschitz = self.eigenvalues.iter().copied().fold(0.0, f64::max);
        let variance = self.dim() as f64 * self.sigma * self.sigma;
        ObjectiveConstants {
            lipschitz,
            variance,
            second_moment: lipschitz * lipschitz * opts.radius * opts.radius + variance,
            f_star: 0.0,
            initial_gap: self.loss(w0),
            estimated: false,
            box_radius: Some(opts.radius),
        }
    }
}
