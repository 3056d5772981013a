use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear-beta noise schedule with `alpha_bar(0) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    config: ScheduleConfig,
    alpha_bar: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    /// Number of discrete noise levels `T`.
    pub train_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    /// Sampling / inversion grid resolution.
    pub sample_steps: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            train_steps: 1000,
            beta_start: 1e-4,
            beta_end: 2e-2,
            sample_steps: 50,
        }
    }
}

impl NoiseSchedule {
    pub fn new(config: ScheduleConfig) -> Result<Self> {
        let t = config.train_steps;
        if t == 0 || config.sample_steps == 0 || config.sample_steps > t {
            return Err(Error::Config(format!(
                "need 0 < sample_steps ({}) <= train_steps ({t})",
                config.sample_steps
            )));
        }
        if !(0.0 < config.beta_start && config.beta_start <= config.beta_end && config.beta_end < 1.0) {
            return Err(Error::Config("betas must satisfy 0 < start <= end < 1".into()));
        }
        let mut alpha_bar = Vec::with_capacity(t + 1);
        alpha_bar.push(1.0);
        let mut acc = 1.0f64;
        for i in 0..t {
            let beta = if t == 1 {
                config.beta_start
            } else {
                config.beta_start + (config.beta_end - config.beta_start) * i as f64 / (t - 1) as f64
            };
            acc *= 1.0 - beta;
            alpha_bar.push(acc);
        }
        Ok(Self { config, alpha_bar })
    }

    pub fn config(&self) -> &ScheduleConfig {
        &self.config
    }

    /// `T`, the top noise level.
    pub fn max_t(&self) -> usize {
        self.config.train_steps
    }

    pub fn sample_steps(&self) -> usize {
        self.config.sample_steps
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    /// Grid timestep `t_k = round(k T / S)` for `k` in `0..=S`.
    pub fn grid_timestep(&self, k: usize) -> usize {
        let (t, s) = (self.config.train_steps, self.config.sample_steps);
        ((k * t) as f64 / s as f64).round() as usize
    }

    /// Grid index whose cached features serve a model evaluation at `t`.
    pub fn grid_index(&self, t: usize) -> usize {
        let (tt, s) = (self.config.train_steps, self.config.sample_steps);
        ((t as f64 * s as f64 / tt as f64).round() as usize).clamp(1, s)
    }

    /// Descending timesteps visited when sampling from `t_start` to 0.
    pub fn sampling_timesteps(&self, t_start: usize) -> Vec<usize> {
        let mut ts = vec![t_start];
        for k in (0..self.config.sample_steps).rev() {
            let t = self.grid_timestep(k);
            if t < t_start {
                ts.push(t);
            }
        }
        ts
    }

    pub fn check_t(&self, t: usize) -> Result<()> {
        if t > self.config.train_steps {
            return Err(Error::InvalidValue(format!(
                "timestep {t} outside [0, {}]",
                self.config.train_steps
            )));
        }
        Ok(())
    }

    /// Noise level for a fraction of `T`.
    pub fn level(&self, fraction: f64) -> usize {
        (fraction * self.config.train_steps as f64).round() as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_bar_is_monotone_with_identity_at_zero() {
        let s = NoiseSchedule::new(ScheduleConfig::default()).unwrap();
        assert_eq!(s.alpha_bar(0), 1.0);
        for t in 1..=s.max_t() {
            assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
        }
        assert!(s.alpha_bar(1000) < 1e-4);
    }

    #[test]
    fn grid_and_sampling_sequence() {
        let s = NoiseSchedule::new(ScheduleConfig::default()).unwrap();
        assert_eq!(s.grid_timestep(50), 1000);
        assert_eq!(s.grid_timestep(1), 20);
        assert_eq!(s.sampling_timesteps(60), vec![60, 40, 20, 0]);
        assert_eq!(s.sampling_timesteps(1), vec![1, 0]);
        assert_eq!(s.sampling_timesteps(750).len(), 1 + 38);
        assert_eq!(s.grid_index(1000), 50);
        assert_eq!(s.grid_index(1), 1);
        assert_eq!(s.grid_index(750), 38);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = ScheduleConfig {
            sample_steps: 2000,
            ..Default::default()
        };
        assert!(NoiseSchedule::new(bad).is_err());
        let s = NoiseSchedule::new(ScheduleConfig::default()).unwrap();
        assert!(s.check_t(1001).is_err());
    }
}
