//! Adadelta parameter updates and plateau-driven learning-rate decay.

/// Adadelta keeps running second moments of gradients and updates, so the
/// effective step size adapts per parameter without a hand-tuned base rate:
///
/// ```text
/// E[g^2]  <- rho E[g^2] + (1 - rho) g^2
/// dx      =  -lr * sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
/// E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2
/// x       <- x + dx
/// ```
#[derive(Clone, Debug)]
pub struct Adadelta {
    pub rho: f64,
    pub eps: f64,
    grad_sq: Vec<f64>,
    step_sq: Vec<f64>,
}

impl Adadelta {
    pub fn new(n: usize, rho: f64, eps: f64) -> Adadelta {
        Adadelta { rho, eps, grad_sq: vec![0.0; n], step_sq: vec![0.0; n] }
    }

    /// Applies one update in place. `lr` is the base rate times any plateau
    /// multiplier.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        debug_assert_eq!(params.len(), grads.len());
        debug_assert_eq!(params.len(), self.grad_sq.len());
        for i in 0..params.len() {
            let g = grads[i];
            self.grad_sq[i] = self.rho * self.grad_sq[i] + (1.0 - self.rho) * g * g;
            let dx = -lr * ((self.step_sq[i] + self.eps).sqrt()
                / (self.grad_sq[i] + self.eps).sqrt())
                * g;
            self.step_sq[i] = self.rho * self.step_sq[i] + (1.0 - self.rho) * dx * dx;
            params[i] += dx;
        }
    }
}

/// Halves (by `factor`) the learning-rate multiplier after `patience`
/// consecutive epochs without a strict improvement in validation loss.
#[derive(Clone, Debug)]
pub struct PlateauSchedule {
    patience: usize,
    factor: f64,
    best: f64,
    stagnant: usize,
    multiplier: f64,
}

impl PlateauSchedule {
    pub fn new(patience: usize, factor: f64) -> PlateauSchedule {
        PlateauSchedule {
            patience,
            factor,
            best: f64::INFINITY,
            stagnant: 0,
            multiplier: 1.0,
        }
    }

    /// Records one epoch's validation loss and returns the multiplier to use
    /// from the next update on.
    pub fn observe(&mut self, val_loss: f64) -> f64 {
        if val_loss < self.best {
            self.best = val_loss;
            self.stagnant = 0;
        } else {
            self.stagnant += 1;
            if self.stagnant >= self.patience {
                self.multiplier *= self.factor;
                self.stagnant = 0;
            }
        }
        self.multiplier
    }

    pub fn multiplier(&self) -> f64 {
        self.multiplier
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_matches_scalar_recurrence() {
        let mut opt = Adadelta::new(1, 0.95, 1e-6);
        let mut x = vec![0.0f64];
        opt.step(&mut x, &[1.0], 1.0);
        // E[g^2] = 0.05, dx = -sqrt(1e-6) / sqrt(0.05 + 1e-6).
        let want = -(1e-6f64).sqrt() / (0.05f64 + 1e-6).sqrt();
        assert!((x[0] - want).abs() < 1e-15, "{} vs {want}", x[0]);
    }

    #[test]
    fn two_steps_match_hand_rolled_state() {
        let (rho, eps) = (0.95, 1e-6);
        let mut opt = Adadelta::new(1, rho, eps);
        let mut x = vec![1.0f64];
        let grads = [0.5, -0.25];

        let mut eg2 = 0.0;
        let mut edx2 = 0.0;
        let mut want = 1.0;
        for &g in &grads {
            eg2 = rho * eg2 + (1.0 - rho) * g * g;
            let dx = -((edx2 + eps).sqrt() / (eg2 + eps).sqrt()) * g;
            edx2 = rho * edx2 + (1.0 - rho) * dx * dx;
            want += dx;
        }
        opt.step(&mut x, &[grads[0]], 1.0);
        opt.step(&mut x, &[grads[1]], 1.0);
        assert!((x[0] - want).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut opt = Adadelta::new(3, 0.95, 1e-6);
        let mut x = vec![1.0, -2.0, 0.5];
        opt.step(&mut x, &[0.0; 3], 1.0);
        assert_eq!(x, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_scales_linearly_with_rate() {
        let mut a = Adadelta::new(1, 0.95, 1e-6);
        let mut b = Adadelta::new(1, 0.95, 1e-6);
        let mut xa = vec![0.0f64];
        let mut xb = vec![0.0f64];
        a.step(&mut xa, &[2.0], 1.0);
        b.step(&mut xb, &[2.0], 0.5);
        assert!((xb[0] - 0.5 * xa[0]).abs() < 1e-15);
    }

    #[test]
    fn constant_loss_halves_rate_on_the_eleventh_epoch() {
        let mut sched = PlateauSchedule::new(10, 0.5);
        for epoch in 1..=10 {
            assert_eq!(sched.observe(0.7), 1.0, "epoch {epoch}");
        }
        assert_eq!(sched.observe(0.7), 0.5); // epoch 11
        for epoch in 12..=20 {
            assert_eq!(sched.observe(0.7), 0.5, "epoch {epoch}");
        }
        assert_eq!(sched.observe(0.7), 0.25); // epoch 21
    }

    #[test]
    fn improvement_resets_the_stagnation_counter() {
        let mut sched = PlateauSchedule::new(3, 0.5);
        sched.observe(1.0);
        sched.observe(1.0);
        sched.observe(1.0); // stagnant 2
        assert_eq!(sched.observe(0.5), 1.0); // improvement, reset
        sched.observe(0.5);
        sched.observe(0.5);
        assert_eq!(sched.observe(0.5), 0.5); // three stagnant epochs again
    }
}
