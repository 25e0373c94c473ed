//! Stochastic objectives with exact gradient oracles and known (or estimated)
//! smoothness / noise constants.

mod logistic;
mod nonconvex;
mod quadratic;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SampleKey;

pub use logistic::SyntheticLogistic;
pub use nonconvex::NonconvexTest;
pub use quadratic::NoisyQuadratic;

/// Config-file description of an objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveSpec {
    /// `F(w) = 1/2 (w - w*)^T diag(eigenvalues) (w - w*)`, stochastic gradients
    /// perturbed by isotropic Gaussian noise of standard deviation `sigma`.
    NoisyQuadratic {
        eigenvalues: Vec<f64>,
        #[serde(default)]
        minimizer: Option<Vec<f64>>,
        sigma: f64,
    },
    /// L2-regularized logistic regression on a two-class Gaussian dataset
    /// generated from `data_seed`. Stochastic gradients sample one example
    /// uniformly with replacement.
    SyntheticLogistic {
        dim: usize,
        samples: usize,
        separation: f64,
        #[serde(default = "default_l2")]
        l2: f64,
        data_seed: u64,
    },
    /// `F(w) = sum_i w_i^2 / 2 + amplitude * sin^2(w_i)`, nonconvex once
    /// `amplitude > 1/2`; additive Gaussian gradient noise.
    NonconvexTest { dim: usize, amplitude: f64, sigma: f64 },
}

fn default_l2() -> f64 {
    0.01
}

impl ObjectiveSpec {
    pub fn dim(&self) -> usize {
        match self {
            ObjectiveSpec::NoisyQuadratic { eigenvalues, .. } => eigenvalues.len(),
            ObjectiveSpec::SyntheticLogistic { dim, .. } | ObjectiveSpec::NonconvexTest { dim, .. } => *dim,
        }
    }

    pub fn build(&self) -> Result<Objective> {
        Ok(match self {
            ObjectiveSpec::NoisyQuadratic { eigenvalues, minimizer, sigma } => {
                Objective::NoisyQuadratic(NoisyQuadratic::new(eigenvalues.clone(), minimizer.clone(), *sigma)?)
            }
            ObjectiveSpec::SyntheticLogistic { dim, samples, separation, l2, data_seed } => {
                Objective::SyntheticLogistic(SyntheticLogistic::generate(*dim, *samples, *separation, *l2, *data_seed)?)
            }
            ObjectiveSpec::NonconvexTest { dim, amplitude, sigma } => {
                Objective::NonconvexTest(NonconvexTest::new(*dim, *amplitude, *sigma)?)
            }
        })
    }
}

/// Smoothness, noise and lower-bound constants consumed by the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConstants {
    /// Lipschitz constant of the gradient.
    #[serde(rename = "L")]
    pub lipschitz: f64,
    /// Variance bound on a single stochastic gradient.
    #[serde(rename = "M")]
    pub variance: f64,
    /// Second-moment bound on a single stochastic gradient.
    #[serde(rename = "M_G")]
    pub second_moment: f64,
    #[serde(rename = "F_star")]
    pub f_star: f64,
    /// `F(w_1) - F*` for the run's initial point.
    #[serde(rename = "F1_minus_Fstar")]
    pub initial_gap: f64,
    /// Set when any constant comes from sampling rather than a closed form.
    #[serde(default)]
    pub estimated: bool,
    /// Radius of the region over which the second-moment bound holds.
    #[serde(default)]
    pub box_radius: Option<f64>,
}

impl ObjectiveConstants {
    pub fn check(&self) -> Result<()> {
        let ok = self.lipschitz > 0.0
            && self.variance >= 0.0
            && self.second_moment >= self.variance
            && self.initial_gap >= 0.0
            && [self.lipschitz, self.variance, self.second_moment, self.f_star, self.initial_gap]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidObjective(format!("inconsistent constants {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimationOptions {
    /// Budget of gradient evaluations spent on each estimated constant.
    pub samples: usize,
    /// Radius of the sampling region around the minimizer.
    pub radius: f64,
    pub seed: u64,
}

impl Default for EstimationOptions {
    fn default() -> Self {
        EstimationOptions { samples: 100_000, radius: 10.0, seed: 0 }
    }
}

/// Gradient oracle interface shared by every objective. Inputs are assumed to
/// have the right dimension; [`Objective`] performs the checks.
pub trait StochasticObjective: Send + Sync {
    fn dim(&self) -> usize;

    fn loss(&self, w: &[f64]) -> f64;

    fn gradient_into(&self, w: &[f64], out: &mut [f64]);

    /// Adds one stochastic gradient sample, drawn from the stream of `key`, to `acc`.
    fn add_sample_gradient(&self, w: &[f64], key: SampleKey, acc: &mut [f64]);

    fn constants(&self, w0: &[f64], opts: &EstimationOptions) -> ObjectiveConstants;
}

/// A materialized objective.
#[derive(Debug, Clone)]
pub enum Objective {
    NoisyQuadratic(NoisyQuadratic),
    SyntheticLogistic(SyntheticLogistic),
    NonconvexTest(NonconvexTest),
}

impl Objective {
    pub fn as_dyn(&self) -> &dyn StochasticObjective {
        match self {
            Objective::NoisyQuadratic(o) => o,
            Objective::SyntheticLogistic(o) => o,
            Objective::NonconvexTest(o) => o,
        }
    }

    pub fn dim(&self) -> usize {
        self.as_dyn().dim()
    }

    pub fn check_dim(&self, w: &[f64]) -> Result<()> {
        if w.len() == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.dim(), actual: w.len() })
        }
    }

    pub fn loss(&self, w: &[f64]) -> Result<f64> {
        self.check_dim(w)?;
        Ok(self.as_dyn().loss(w))
    }

    pub fn full_gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(w)?;
        let mut out = vec![0.0; w.len()];
        self.as_dyn().gradient_into(w, &mut out);
        Ok(out)
    }

    pub fn stochastic_gradient(&self, w: &[f64], key: SampleKey) -> Result<Vec<f64>> {
        self.check_dim(w)?;
        let mut out = vec![0.0; w.len()];
        self.as_dyn().add_sample_gradient(w, key, &mut out);
        Ok(out)
    }

    /// `||grad F(w)||^2`.
    pub fn grad_norm_sq(&self, w: &[f64]) -> Result<f64> {
        Ok(norm_sq(&self.full_gradient(w)?))
    }

    pub fn constants(&self, w0: &[f64], opts: &EstimationOptions) -> Result<ObjectiveConstants> {
        self.check_dim(w0)?;
        Ok(self.as_dyn().constants(w0, opts))
    }
}

pub(crate) fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub(crate) fn add_gaussian_noise(rng: &mut ChaCha8Rng, sigma: f64, acc: &mut [f64]) {
    for a in acc.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *a += sigma * z;
    }
}

/// Uniform point in the Euclidean ball of radius `radius` around `center`.
pub(crate) fn sample_ball(rng: &mut ChaCha8Rng, center: &[f64], radius: f64) -> Vec<f64> {
    let dir: Vec<f64> = center.iter().map(|_| rng.sample(StandardNormal)).collect();
    let norm = norm_sq(&dir).sqrt().max(f64::MIN_POSITIVE);
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / center.len() as f64);
    center.iter().zip(&dir).map(|(c, d)| c + r * d / norm).collect()
}
