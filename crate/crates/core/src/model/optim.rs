use std::ops::Range;

/// Adam with bias correction and optional decoupled weight decay on
/// selected parameter ranges.
#[derive(Debug, Clone)]
pub(crate) struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    decayed: Vec<Range<usize>>,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            decayed: Vec::new(),
        }
    }

    pub fn with_weight_decay(mut self, weight_decay: f64, decayed: Vec<Range<usize>>) -> Self {
        self.weight_decay = weight_decay;
        self.decayed = decayed;
        self
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
        if self.weight_decay > 0.0 {
            let keep = 1.0 - lr * self.weight_decay;
            for r in &self.decayed {
                params[r.clone()].iter_mut().for_each(|p| *p *= keep);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut adam = Adam::new(3);
        let mut p = vec![1.0, 1.0, 1.0];
        adam.step(&mut p, &[2.0, -0.5, 0.0], 0.1);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] - 1.1).abs() < 1e-6);
        assert_eq!(p[2], 1.0);
    }

    #[test]
    fn decay_shrinks_only_selected_ranges() {
        let mut adam = Adam::new(2).with_weight_decay(0.5, std::iter::once(0..1).collect());
        let mut p = vec![2.0, 2.0];
        adam.step(&mut p, &[0.0, 0.0], 0.1);
        assert!((p[0] - 1.9).abs() < 1e-12);
        assert_eq!(p[1], 2.0);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut adam = Adam::new(1);
        let mut p = vec![5.0];
        for _ in 0..2000 {
            let g = [2.0 * (p[0] - 2.0)];
            adam.step(&mut p, &g, 0.05);
        }
        assert!((p[0] - 2.0).abs() < 1e-2);
    }
}
