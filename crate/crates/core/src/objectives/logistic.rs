use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{norm_sq, sample_ball, EstimationOptions, ObjectiveConstants, StochasticObjective};
use crate::error::{Error, Result};
use crate::rng::{SampleKey, AUX_WORKER};

/// L2-regularized logistic regression over a synthetic two-class dataset.
///
/// Example `i` has label `+1` for even `i` and `-1` for odd `i`; its features
/// are `y_i * separation / 2 * u + N(0, I)` for a random unit direction `u`.
/// Everything is reproducible from `(data_seed, samples, dim)`.
#[derive(Debug, Clone)]
pub struct SyntheticLogistic {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
    l2: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl SyntheticLogistic {
    pub fn generate(dim: usize, samples: usize, separation: f64, l2: f64, data_seed: u64) -> Result<Self> {
        if dim == 0 || samples == 0 {
            return Err(Error::InvalidObjective("logistic needs dim >= 1 and samples >= 1".into()));
        }
        if !(l2.is_finite() && l2 >= 0.0) || !separation.is_finite() {
            return Err(Error::InvalidObjective("logistic l2 must be >= 0 and separation finite".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(data_seed);
        let mut dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = norm_sq(&dir).sqrt().max(f64::MIN_POSITIVE);
        dir.iter_mut().for_each(|x| *x /= norm);

        let mut features = Vec::with_capacity(samples * dim);
        let mut labels = Vec::with_capacity(samples);
        for i in 0..samples {
            let y = if i % 2 == 0 { 1.0 } else { -1.0 };
            labels.push(y);
            for u in &dir {
                let z: f64 = rng.sample(StandardNormal);
                features.push(y * 0.5 * separation * u + z);
            }
        }
        Ok(SyntheticLogistic { dim, features, labels, l2 })
    }

    pub fn samples(&self) -> usize {
        self.labels.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    fn margin(&self, i: usize, w: &[f64]) -> f64 {
        self.labels[i] * self.row(i).iter().zip(w).map(|(x, w)| x * w).sum::<f64>()
    }

    /// Adds the gradient of example `i`'s term (including regularization).
    fn add_example_gradient(&self, i: usize, w: &[f64], acc: &mut [f64]) {
        let coef = -self.labels[i] * sigmoid(-self.margin(i, w));
        for ((a, x), wi) in acc.iter_mut().zip(self.row(i)).zip(w) {
            *a += coef * x + self.l2 * wi;
        }
    }

    /// `lambda_max(X^T X) / (4n) + l2` via power iteration on the Gram matrix.
    fn smoothness(&self) -> f64 {
        let d = self.dim;
        let n = self.samples();
        let mut gram = vec![0.0; d * d];
        for i in 0..n {
            let x = self.row(i);
            for a in 0..d {
                for b in 0..d {
                    gram[a * d + b] += x[a] * x[b];
                }
            }
        }
        let mut v = vec![1.0 / (d as f64).sqrt(); d];
        let mut lambda = 0.0;
        for _ in 0..1000 {
            let mut next = vec![0.0; d];
            for a in 0..d {
                next[a] = (0..d).map(|b| gram[a * d + b] * v[b]).sum();
            }
            let norm = norm_sq(&next).sqrt();
            if norm == 0.0 {
                break;
            }
            next.iter_mut().for_each(|x| *x /= norm);
            let converged = (norm - lambda).abs() <= 1e-13 * norm;
            lambda = norm;
            v = next;
            if converged {
                break;
            }
        }
        // Power iteration approaches lambda_max from below; pad by a relative
        // 1e-9 so the reported constant stays an upper bound.
        lambda * (1.0 + 1e-9) / (4.0 * n as f64) + self.l2
    }

    /// Approximate minimizer by gradient descent and a certified lower bound on
    /// `F*` (`F(w) - ||grad||^2 / (2 l2)` by strong convexity, else 0).
    fn minimize(&self, lipschitz: f64) -> (Vec<f64>, f64) {
        let mut w = vec![0.0; self.dim];
        let mut g = vec![0.0; self.dim];
        let step = 1.0 / lipschitz;
        for _ in 0..20_000 {
            self.gradient_into(&w, &mut g);
            if norm_sq(&g) < 1e-24 {
                break;
            }
            for (wi, gi) in w.iter_mut().zip(&g) {
                *wi -= step * gi;
            }
        }
        self.gradient_into(&w, &mut g);
        let lower = if self.l2 > 0.0 { (self.loss(&w) - norm_sq(&g) / (2.0 * self.l2)).max(0.0) } else { 0.0 };
        (w, lower)
    }
}

impl StochasticObjective for SyntheticLogistic {
    fn dim(&self) -> usize {
        self.dim
    }

    fn loss(&self, w: &[f64]) -> f64 {
        let n = self.samples();
        let data: f64 = (0..n).map(|i| softplus(-self.margin(i, w))).sum::<f64>() / n as f64;
        data + 0.5 * self.l2 * norm_sq(w)
    }

    fn gradient_into(&self, w: &[f64], out: &mut [f64]) {
        let n = self.samples();
        out.fill(0.0);
        for i in 0..n {
            let coef = -self.labels[i] * sigmoid(-self.margin(i, w));
            for (o, x) in out.iter_mut().zip(self.row(i)) {
                *o += coef * x;
            }
        }
        for (o, wi) in out.iter_mut().zip(w) {
            *o = *o / n as f64 + self.l2 * wi;
        }
    }

    fn add_sample_gradient(&self, w: &[f64], key: SampleKey, acc: &mut [f64]) {
        let i = key.stream().random_range(0..self.samples());
        self.add_example_gradient(i, w, acc);
    }

    /// `L` is analytic; `M` and `M_G` are maxima of the exact per-point
    /// variance / second moment over random points in a ball around the
    /// minimizer, so only the point locations are sampled.
    fn constants(&self, w0: &[f64], opts: &EstimationOptions) -> ObjectiveConstants {
        let lipschitz = self.smoothness();
        let (center, f_star) = self.minimize(lipschitz);
        let n = self.samples();
        let points = (opts.samples / n).max(1);
        let mut rng = SampleKey::new(opts.seed, AUX_WORKER, 0, 0).stream();
        let mut variance: f64 = 0.0;
        let mut second_moment: f64 = 0.0;
        let mut full = vec![0.0; self.dim];
        let mut single = vec![0.0; self.dim];
        for _ in 0..points {
            let w = sample_ball(&mut rng, &center, opts.radius);
            self.gradient_into(&w, &mut full);
            let mut second = 0.0;
            for i in 0..n {
                single.fill(0.0);
                self.add_example_gradient(i, &w, &mut single);
                second += norm_sq(&single);
            }
            second /= n as f64;
            second_moment = second_moment.max(second);
            variance = variance.max((second - norm_sq(&full)).max(0.0));
        }
        ObjectiveConstants {
            lipschitz,
            variance,
            second_moment: second_moment.max(variance),
            f_star,
            initial_gap: (self.loss(w0) - f_star).max(0.0),
            estimated: true,
            box_radius: Some(opts.radius),
        }
    }
}
