use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestartMode {
    /// The n-th restart sets `lr = restart_fraction^n · base_lr`.
    #[default]
    Geometric,
    /// Every restart sets `lr = restart_fraction · base_lr`.
    Constant,
}

impl std::str::FromStr for RestartMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geometric" => Ok(Self::Geometric),
            "constant" => Ok(Self::Constant),
            _ => Err(Error::invalid(format!("unknown restart mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub base_lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    pub restart_fraction: f64,
    pub restart_mode: RestartMode,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self { base_lr: 6e-4, factor: 0.9, patience: 4, min_lr: 5e-7, restart_fraction: 0.9, restart_mode: RestartMode::Geometric }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x.is_finite() && x > 0.0 && x < 1.0;
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return Err(Error::invalid("lr must be positive"));
        }
        if !unit(self.factor) || !unit(self.restart_fraction) {
            return Err(Error::invalid("scheduler factor and restart fraction must lie in (0, 1)"));
        }
        if !(self.min_lr.is_finite() && self.min_lr > 0.0 && self.min_lr < self.base_lr) {
            return Err(Error::invalid("min_lr must be positive and below lr"));
        }
        Ok(())
    }
}

/// Reduce-on-plateau over a lower-is-better metric. After `patience + 1`
/// consecutive epochs without a strict improvement the rate is multiplied by
/// `factor`; a decay that would go below `min_lr` becomes a restart instead.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scheduler {
    pub config: SchedulerConfig,
    pub lr: f64,
    pub best: Option<f64>,
    pub stagnant_epochs: usize,
    pub restarts: u32,
}

impl Scheduler {
    pub fn new(config: SchedulerConfig) -> Self {
        Self { lr: config.base_lr, config, best: None, stagnant_epochs: 0, restarts: 0 }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn update(&mut self, metric: f64) -> Result<f64> {
        if !metric.is_finite() {
            return Err(Error::invalid("scheduler metric must be finite"));
        }
        if self.best.is_none_or(|b| metric < b) {
            self.best = Some(metric);
            self.stagnant_epochs = 0;
            return Ok(self.lr);
        }
        self.stagnant_epochs += 1;
        if self.stagnant_epochs > self.config.patience {
            self.stagnant_epochs = 0;
            let decayed = self.lr * self.config.factor;
            if decayed < self.config.min_lr {
                self.restart();
            } else {
                self.lr = decayed;
            }
        }
        Ok(self.lr)
    }

    fn restart(&mut self) {
        self.restarts += 1;
        let c = &self.config;
        let exponent = match c.restart_mode {
            RestartMode::Geometric => self.restarts as i32,
            RestartMode::Constant => 1,
        };
        self.lr = c.restart_fraction.powi(exponent) * c.base_lr;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decays_after_patience_plus_one_stagnant_epochs() {
        let mut s = Scheduler::new(SchedulerConfig::default());
        s.update(1.0).unwrap();
        for _ in 0..4 {
            assert_eq!(s.update(1.0).unwrap(), 6e-4);
        }
        assert!((s.update(1.0).unwrap() - 5.4e-4).abs() < 1e-18);
    }

    #[test]
    fn restart_when_decay_would_cross_floor() {
        let mut s = Scheduler::new(SchedulerConfig::default());
        s.update(1.0).unwrap();
        s.lr = 5.2e-7;
        for _ in 0..5 {
            s.update(2.0).unwrap();
        }
        assert_eq!(s.restarts, 1);
        assert!((s.lr - 0.9 * 6e-4).abs() < 1e-18);
        s.lr = 5.2e-7;
        for _ in 0..5 {
            s.update(2.0).unwrap();
        }
        assert!((s.lr - 0.81 * 6e-4).abs() < 1e-18);

        let mut c = Scheduler::new(SchedulerConfig { restart_mode: RestartMode::Constant, ..Default::default() });
        for _ in 0..2 {
            c.lr = 5.2e-7;
            for _ in 0..6 {
                c.update(1.0).unwrap();
            }
            assert!((c.lr - 5.4e-4).abs() < 1e-18);
        }
    }

    #[test]
    fn improving_metric_never_decays() {
        let mut s = Scheduler::new(SchedulerConfig::default());
        for e in 0..100 {
            assert_eq!(s.update(100.0 - e as f64).unwrap(), 6e-4);
        }
        assert!(s.update(f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn lr_stays_in_range(metrics in prop::collection::vec(0.0f64..1.0, 1..1000)) {
            let mut s = Scheduler::new(SchedulerConfig { min_lr: 5e-4, ..Default::default() });
            for m in metrics {
                let lr = s.update(m).unwrap();
                prop_assert!(lr > 0.0 && lr <= 6e-4);
            }
        }
    }
}
