//! Learning-rate and weight-decay utilities plus the hyperparameter grid.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cosine annealing from `eta_max` at epoch 0 to `eta_min` at epoch `t_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub eta_max: f64,
    #[serde(default)]
    pub eta_min: f64,
    pub t_max: u32,
}

impl ScheduleConfig {
    pub fn new(eta_max: f64, eta_min: f64, t_max: u32) -> Result<Self> {
        let cfg = Self {
            eta_max,
            eta_min,
            t_max,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta_max > 0.0) || !self.eta_max.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "eta_max must be positive, got {}",
                self.eta_max
            )));
        }
        if !(self.eta_min >= 0.0) || self.eta_min > self.eta_max {
            return Err(Error::InvalidParameter(format!(
                "eta_min must lie in [0, eta_max], got {}",
                self.eta_min
            )));
        }
        if self.t_max == 0 {
            return Err(Error::InvalidParameter("t_max must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        let opt = OptimizerConfig::default();
        Self {
            eta_max: opt.learning_rate,
            eta_min: 0.0,
            t_max: opt.epochs,
        }
    }
}

/// Learning rate at integer epoch `t`.
pub fn cosine_lr(config: &ScheduleConfig, t: u32) -> Result<f64> {
    config.validate()?;
    if t > config.t_max {
        return Err(Error::InvalidParameter(format!(
            "epoch {t} outside [0, {}]",
            config.t_max
        )));
    }
    // eta_min + (eta_max - eta_min) * w, written as a convex combination so
    // the endpoints come out exactly.
    let w = 0.5 * (1.0 + (t as f64 * PI / config.t_max as f64).cos());
    Ok(config.eta_max * w + config.eta_min * (1.0 - w))
}

/// `(epoch, lr)` for every epoch in `0..=t_max`.
pub fn schedule_table(config: &ScheduleConfig) -> Result<Vec<(u32, f64)>> {
    (0..=config.t_max)
        .map(|t| cosine_lr(config, t).map(|lr| (t, lr)))
        .collect()
}

/// One decoupled weight-decay update: `theta - lr * grad - lr * lambda_wd * theta`.
///
/// The decay shrinks the parameters directly instead of being folded into the
/// gradient as an L2 penalty.
pub fn decoupled_wd_step(theta: &[f64], grad: &[f64], lr: f64, lambda_wd: f64) -> Result<Vec<f64>> {
    if theta.len() != grad.len() {
        return Err(Error::Length {
            expected: theta.len(),
            found: grad.len(),
        });
    }
    let shrink = 1.0 - lr * lambda_wd;
    Ok(theta
        .iter()
        .zip(grad)
        .map(|(&p, &g)| shrink * p - lr * g)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub lambda_wd: f64,
    pub batch_size: u32,
    pub epochs: u32,
}

impl Default for OptimizerConfig {
    /// The best configuration found by the reference grid search.
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            lambda_wd: 1e-5,
            batch_size: 4,
            epochs: 9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub learning_rates: Vec<f64>,
    pub weight_decays: Vec<f64>,
    pub batch_sizes: Vec<u32>,
    #[serde(default = "default_epochs")]
    pub epochs: u32,
}

fn default_epochs() -> u32 {
    OptimizerConfig::default().epochs
}

impl GridSpec {
    /// Learning rates {1e-5, 2e-5, 3e-5}, weight decays {1e-4, 1e-5}, batch sizes {4, 8}.
    pub fn reference() -> Self {
        Self {
            learning_rates: vec![1e-5, 2e-5, 3e-5],
            weight_decays: vec![1e-4, 1e-5],
            batch_sizes: vec![4, 8],
            epochs: default_epochs(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn unique_f64(name: &str, v: &[f64], allow_zero: bool) -> Result<()> {
            if v.is_empty() {
                return Err(Error::InvalidParameter(format!("{name} must not be empty")));
            }
            for (i, &x) in v.iter().enumerate() {
                let ok = x.is_finite() && (x > 0.0 || (allow_zero && x == 0.0));
                if !ok {
                    return Err(Error::InvalidParameter(format!("{name} contains invalid value {x}")));
                }
                if v[..i].contains(&x) {
                    return Err(Error::InvalidParameter(format!("{name} repeats {x}")));
                }
            }
            Ok(())
        }
        unique_f64("learning_rates", &self.learning_rates, false)?;
        unique_f64("weight_decays", &self.weight_decays, true)?;
        if self.batch_sizes.is_empty() {
            return Err(Error::InvalidParameter("batch_sizes must not be empty".into()));
        }
        for (i, &b) in self.batch_sizes.iter().enumerate() {
            if b == 0 || self.batch_sizes[..i].contains(&b) {
                return Err(Error::InvalidParameter(format!("batch_sizes contains invalid or repeated {b}")));
            }
        }
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Cartesian product ordered by (learning rate, weight decay, batch size), ascending.
pub fn enumerate_grid(spec: &GridSpec) -> Result<Vec<OptimizerConfig>> {
    spec.validate()?;
    let mut lrs = spec.learning_rates.clone();
    let mut wds = spec.weight_decays.clone();
    let mut bss = spec.batch_sizes.clone();
    lrs.sort_by(f64::total_cmp);
    wds.sort_by(f64::total_cmp);
    bss.sort_unstable();

    let mut out = Vec::with_capacity(lrs.len() * wds.len() * bss.len());
    for &learning_rate in &lrs {
        for &lambda_wd in &wds {
            for &batch_size in &bss {
                out.push(OptimizerConfig {
                    learning_rate,
                    lambda_wd,
                    batch_size,
                    epochs: spec.epochs,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints_and_midpoint() {
        let c = ScheduleConfig::new(3e-5, 1e-6, 10).unwrap();
        assert_eq!(cosine_lr(&c, 0).unwrap(), 3e-5);
        assert_eq!(cosine_lr(&c, 10).unwrap(), 1e-6);
        assert!((cosine_lr(&c, 5).unwrap() - (3e-5 + 1e-6) / 2.0).abs() < 1e-12);
        assert!(cosine_lr(&c, 11).is_err());
    }

    #[test]
    fn cosine_default_schedule() {
        let rows = schedule_table(&ScheduleConfig::default()).unwrap();
        assert_eq!(rows.len(), 10);
        assert_eq!(rows[0].1, 1e-5);
        assert_eq!(rows[9].1, 0.0);
        assert!(rows.windows(2).all(|w| w[1].1 <= w[0].1));
    }

    #[test]
    fn schedule_config_validation() {
        assert!(ScheduleConfig::new(0.0, 0.0, 5).is_err());
        assert!(ScheduleConfig::new(1e-3, 2e-3, 5).is_err());
        assert!(ScheduleConfig::new(1e-3, 0.0, 0).is_err());
    }

    #[test]
    fn weight_decay_examples() {
        assert_eq!(decoupled_wd_step(&[0.3, -2.0], &[1.0, 4.0], 0.0, 0.5).unwrap(), vec![0.3, -2.0]);
        let s = decoupled_wd_step(&[1.0], &[0.0], 0.1, 0.01).unwrap();
        assert!((s[0] - 0.999).abs() < 1e-15);
        let s = decoupled_wd_step(&[1.0, 2.0], &[0.5, -1.0], 0.1, 0.0).unwrap();
        assert_eq!(s, vec![1.0 - 0.1 * 0.5, 2.0 + 0.1]);
        assert!(decoupled_wd_step(&[1.0], &[], 0.1, 0.0).is_err());
    }

    #[test]
    fn grid_examples() {
        let grid = enumerate_grid(&GridSpec::reference()).unwrap();
        assert_eq!(grid.len(), 12);
        assert_eq!(grid[0], OptimizerConfig { learning_rate: 1e-5, lambda_wd: 1e-5, batch_size: 4, epochs: 9 });
        assert_eq!(grid[0], OptimizerConfig::default());

        let single = GridSpec { learning_rates: vec![1e-3], weight_decays: vec![0.0], batch_sizes: vec![2], epochs: 3 };
        assert_eq!(enumerate_grid(&single).unwrap().len(), 1);

        let cube = GridSpec { learning_rates: vec![2e-3, 1e-3], weight_decays: vec![0.1, 0.0], batch_sizes: vec![8, 2], epochs: 1 };
        let g = enumerate_grid(&cube).unwrap();
        assert_eq!(g.len(), 8);
        for i in 0..g.len() {
            for j in 0..i {
                assert_ne!(g[i], g[j]);
            }
        }
        let keys: Vec<_> = g.iter().map(|c| (c.learning_rate, c.lambda_wd, c.batch_size)).collect();
        let mut sorted = keys.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(keys, sorted);
    }

    #[test]
    fn grid_validation() {
        let mut g = GridSpec::reference();
        g.batch_sizes.push(4);
        assert!(enumerate_grid(&g).is_err());
        let mut g = GridSpec::reference();
        g.learning_rates.clear();
        assert!(enumerate_grid(&g).is_err());
    }
}
