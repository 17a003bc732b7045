/// Minimum decrease in validation loss that counts as an improvement.
pub const IMPROVEMENT_EPS: f64 = 1e-8;

fn improves(val: f64, best: f64) -> bool {
    val < best - IMPROVEMENT_EPS
}

/// Multiplies the learning rate by `factor` once the validation loss has
/// failed to improve for `patience` consecutive epochs, then starts counting
/// again.
#[derive(Clone, Debug, PartialEq)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub best: f64,
    pub bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize) -> Self {
        Self {
            lr,
            factor,
            patience,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Records one epoch and returns the learning rate for the next.
    pub fn step(&mut self, val_loss: f64) -> f64 {
        if improves(val_loss, self.best) {
            self.best = val_loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs == self.patience {
                self.lr *= self.factor;
                self.bad_epochs = 0;
            }
        }
        self.lr
    }
}

/// Stops once more than `patience` epochs have passed since the best
/// validation loss.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            since_best: 0,
        }
    }

    /// Records one epoch. Returns `true` when the epoch set a new best.
    pub fn record(&mut self, val_loss: f64) -> bool {
        if improves(val_loss, self.best) {
            self.best = val_loss;
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since_best > self.patience
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lrs(trace: &[f64]) -> Vec<f64> {
        let mut s = PlateauScheduler::new(1e-3, 0.1, 6);
        trace.iter().map(|&v| s.step(v)).collect()
    }

    /// Index (0-based) of the epoch at which training stops, if any.
    fn stop_epoch(trace: &[f64], patience: usize) -> Option<usize> {
        let mut es = EarlyStopping::new(patience);
        trace.iter().position(|&v| {
            es.record(v);
            es.should_stop()
        })
    }

    #[test]
    fn scheduler_traces() {
        let decreasing: Vec<f64> = (0..20).map(|i| 1.0 - i as f64 * 0.01).collect();
        assert!(lrs(&decreasing).iter().all(|&lr| lr == 1e-3));

        // Best at epoch 0, then six epochs without improvement.
        let flat = [0.5; 7];
        let out = lrs(&flat);
        assert!(out[..6].iter().all(|&lr| lr == 1e-3));
        assert!((out[6] - 1e-4).abs() < 1e-18);

        let mut s = PlateauScheduler::new(1e-3, 0.1, 6);
        s.step(0.5);
        for _ in 0..5 {
            s.step(0.5);
        }
        assert_eq!(s.bad_epochs, 5);
        s.step(0.4);
        assert_eq!(s.bad_epochs, 0);
        assert_eq!(s.lr, 1e-3);
    }

    #[test]
    fn early_stop_traces() {
        let improving: Vec<f64> = (0..50).map(|i| 1.0 / (1.0 + i as f64)).collect();
        assert_eq!(stop_epoch(&improving, 5), None);
        let flat = [0.5; 7];
        assert_eq!(stop_epoch(&flat, 5), Some(6));
        assert_eq!(stop_epoch(&flat, 10), None);
    }

    #[test]
    fn tiny_changes_do_not_count() {
        let mut es = EarlyStopping::new(5);
        es.record(1.0);
        assert!(!es.record(1.0 - 1e-9));
        assert!(es.record(1.0 - 1e-7));
    }
}
