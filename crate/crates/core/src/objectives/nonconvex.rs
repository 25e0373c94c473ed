use rand::Rng;

use super::{add_gaussian_noise, norm_sq, sample_ball, EstimationOptions, ObjectiveConstants, StochasticObjective};
use crate::error::{Error, Result};
use crate::rng::{SampleKey, AUX_WORKER};

/// Separable nonconvex test function `sum_i w_i^2/2 + a sin^2(w_i)` with
/// additive Gaussian gradient noise. The curvature along each axis is
/// `1 + 2a cos(2 w_i)`, negative somewhere once `a > 1/2`. `F* = 0`.
#[derive(Debug, Clone)]
pub struct NonconvexTest {
    dim: usize,
    amplitude: f64,
    sigma: f64,
}

impl NonconvexTest {
    pub fn new(dim: usize, amplitude: f64, sigma: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidObjective("nonconvex test needs dim >= 1".into()));
        }
        if !(amplitude.is_finite() && amplitude >= 0.0 && sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidObjective("amplitude and sigma must be >= 0".into()));
        }
        Ok(NonconvexTest { dim, amplitude, sigma })
    }
}

impl StochasticObjective for NonconvexTest {
    fn dim(&self) -> usize {
        self.dim
    }

    fn loss(&self, w: &[f64]) -> f64 {
        w.iter().map(|x| 0.5 * x * x + self.amplitude * x.sin().powi(2)).sum()
    }

    fn gradient_into(&self, w: &[f64], out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(w) {
            *o = x + self.amplitude * (2.0 * x).sin();
        }
    }

    fn add_sample_gradient(&self, w: &[f64], key: SampleKey, acc: &mut [f64]) {
        for (a, x) in acc.iter_mut().zip(w) {
            *a += x + self.amplitude * (2.0 * x).sin();
        }
        if self.sigma > 0.0 {
            add_gaussian_noise(&mut key.stream(), self.sigma, acc);
        }
    }

    /// All of `L`, `M`, `M_G` are sampled over the ball of `opts.radius`
    /// around the origin. `L` probes finite-difference curvature along
    /// random axes and random directions.
    fn constants(&self, w0: &[f64], opts: &EstimationOptions) -> ObjectiveConstants {
        let d = self.dim;
        let origin = vec![0.0; d];
        let mut rng = SampleKey::new(opts.seed, AUX_WORKER, 1, 0).stream();
        let points = (opts.samples / 4).max(1);
        let h = 1e-5;
        let mut lipschitz: f64 = 0.0;
        let mut max_grad_sq: f64 = 0.0;
        let mut g0 = vec![0.0; d];
        let mut g1 = vec![0.0; d];
        for _ in 0..points {
            let w = sample_ball(&mut rng, &origin, opts.radius);
            self.gradient_into(&w, &mut g0);
            max_grad_sq = max_grad_sq.max(norm_sq(&g0));
            let axis = rng.random_range(0..d);
            let mut shifted = w.clone();
            shifted[axis] += h;
            self.gradient_into(&shifted, &mut g1);
            let diff: Vec<f64> = g1.iter().zip(&g0).map(|(a, b)| a - b).collect();
            lipschitz = lipschitz.max(norm_sq(&diff).sqrt() / h);
        }

        let draws = opts.samples.max(1);
        let mut full = vec![0.0; d];
        self.gradient_into(&origin, &mut full);
        let mut variance = 0.0;
        let mut sample = vec![0.0; d];
        for s in 0..draws {
            sample.fill(0.0);
            self.add_sample_gradient(&origin, SampleKey::new(opts.seed, AUX_WORKER, 2, s), &mut sample);
            variance += sample.iter().zip(&full).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        variance /= draws as f64;

        ObjectiveConstants {
            lipschitz,
            variance,
            second_moment: max_grad_sq + variance,
            f_star: 0.0,
            initial_gap: self.loss(w0),
            estimated: true,
            box_radius: Some(opts.radius),
        }
    }
}
