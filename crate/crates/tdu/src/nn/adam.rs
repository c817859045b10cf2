//! Adam optimizer over [`MlpParams`].

use crate::nn::mlp::{MlpGrad, MlpParams};

/// Adam hyper-parameters and per-parameter moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// First-moment estimate, co-shaped with the parameters.
    pub m: MlpGrad,
    /// Second-moment estimate, co-shaped with the parameters.
    pub v: MlpGrad,
    /// Completed step count.
    pub t: u64,
}

impl AdamState {
    /// Fresh optimizer state for `params` with the given learning rate and
    /// standard moment decays (0.9, 0.999, eps 1e-8).
    pub fn new(params: &MlpParams, lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    /// One Adam update with bias correction, applied in place.
    pub fn step(&mut self, params: &mut MlpParams, grad: &MlpGrad) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((pl, gl), (ml, vl)) in params
            .layers
            .iter_mut()
            .zip(grad.layers.iter())
            .zip(self.m.layers.iter_mut().zip(self.v.layers.iter_mut()))
        {
            let dst = pl.weights.iter_mut().chain(pl.bias.iter_mut());
            let g = gl.weights.iter().chain(gl.bias.iter());
            let m = ml.weights.iter_mut().chain(ml.bias.iter_mut());
            let v = vl.weights.iter_mut().chain(vl.bias.iter_mut());
            for (((p, &g), m), v) in dst.zip(g).zip(m).zip(v) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *p -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp::InitScheme;
    use crate::nn::rng::RngStream;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut rng = RngStream::new(0);
        let mut p = MlpParams::init(&[2, 3, 1], &mut rng, InitScheme::HeUniform).unwrap();
        let before = p.clone();
        let mut adam = AdamState::new(&p, 1e-3);
        let g = p.zeros_like();
        adam.step(&mut p, &g);
        assert_eq!(p, before);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        // From m = v = 0, one step moves each parameter by ~ -lr * sign(g).
        let mut rng = RngStream::new(1);
        let mut p = MlpParams::init(&[2, 2], &mut rng, InitScheme::HeUniform).unwrap();
        let before = p.clone();
        let mut adam = AdamState::new(&p, 1e-3);
        let mut g = p.zeros_like();
        for (i, v) in g.layers[0].weights.iter_mut().enumerate() {
            *v = if i % 2 == 0 { 0.7 } else { -2.3 };
        }
        adam.step(&mut p, &g);
        for i in 0..4 {
            let moved = p.layers[0].weights[i] - before.layers[0].weights[i];
            let expected = if i % 2 == 0 { -1e-3 } else { 1e-3 };
            assert!((moved - expected).abs() < 1e-6, "i={i} moved={moved}");
        }
    }

    #[test]
    fn norm_decreases_on_quadratic() {
        // 100 steps on f(w) = ||w||^2 starting from w = 1: after warmup the
        // norm shrinks monotonically.
        let mut rng = RngStream::new(2);
        let mut p = MlpParams::init(&[4, 4], &mut rng, InitScheme::FixedScale(0.0)).unwrap();
        for v in p.iter_mut() {
            *v = 1.0;
        }
        let mut adam = AdamState::new(&p, 0.01);
        let norm = |q: &MlpParams| q.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut prev = norm(&p);
        for step in 0..100 {
            let mut g = p.zeros_like();
            let layer = &mut g.layers[0];
            for (gv, pv) in layer
                .weights
                .iter_mut()
                .chain(layer.bias.iter_mut())
                .zip(p.iter())
            {
                *gv = 2.0 * pv;
            }
            adam.step(&mut p, &g);
            let cur = norm(&p);
            if step >= 5 {
                assert!(cur < prev, "step {step}: {cur} !< {prev}");
            }
            prev = cur;
        }
    }
}
