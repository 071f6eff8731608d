//! Adaptive-moment gradient steps restricted to parameter ranges.

use std::ops::Range;

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    /// Update count per parameter, for bias correction when only some
    /// ranges are stepped.
    t: Vec<u32>,
}

impl Adam {
    pub fn new(n: usize, step_size: f64) -> Self {
        Adam {
            step_size,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: vec![0; n],
        }
    }

    /// Applies one update to the parameters in `ranges`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], ranges: &[Range<usize>]) {
        assert_eq!(params.len(), grad.len());
        for r in ranges {
            for i in r.clone() {
                let g = grad[i];
                self.t[i] += 1;
                self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
                self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
                let t = self.t[i] as i32;
                let mh = self.m[i] / (1.0 - self.beta1.powi(t));
                let vh = self.v[i] / (1.0 - self.beta2.powi(t));
                params[i] -= self.step_size * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}
