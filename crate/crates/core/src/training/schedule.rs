//! Cosine annealing with warm restarts, evaluated per epoch.

use crate::config::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleConfig {
    pub lr0: f64,
    pub eta_min: f64,
    /// Length of the first cycle in epochs.
    pub t0: f64,
    /// Growth factor of successive cycle lengths.
    pub t_mult: f64,
    pub total_epochs: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            lr0: 1e-4,
            eta_min: 1e-8,
            t0: 10.0,
            t_mult: 2.0,
            total_epochs: 50,
        }
    }
}

/// Position inside a restart cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CyclePos {
    pub index: usize,
    pub start: f64,
    pub length: f64,
    pub local: f64,
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.lr0 > 0.0 && self.eta_min >= 0.0 && self.eta_min <= self.lr0) {
            return Err(ConfigError::new("schedule needs 0 <= eta_min <= lr0 and lr0 > 0"));
        }
        if !(self.t0 > 0.0 && self.t_mult >= 1.0) {
            return Err(ConfigError::new("schedule needs t0 > 0 and t_mult >= 1"));
        }
        Ok(())
    }

    /// Cycle containing `t`. A cycle covers `[start, start + length)`, so
    /// a boundary belongs to the cycle it starts.
    pub fn cycle(&self, t: f64) -> CyclePos {
        let (mut index, mut start, mut length) = (0, 0.0, self.t0);
        while t >= start + length {
            start += length;
            length *= self.t_mult;
            index += 1;
        }
        CyclePos {
            index,
            start,
            length,
            local: t - start,
        }
    }

    /// Learning rate `local` epochs into a cycle of `length` epochs;
    /// `local == length` gives the annealed floor.
    pub fn lr_in_cycle(&self, local: f64, length: f64) -> f64 {
        let cos = (std::f64::consts::PI * local / length).cos();
        self.eta_min + (self.lr0 - self.eta_min) * (1.0 + cos) / 2.0
    }

    /// Learning rate at fractional epoch `t >= 0`.
    pub fn lr_at(&self, t: f64) -> f64 {
        let c = self.cycle(t.max(0.0));
        self.lr_in_cycle(c.local, c.length)
    }

    /// Epochs at which a new cycle begins, up to `total_epochs`.
    pub fn restarts(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let (mut start, mut length) = (self.t0, self.t0 * self.t_mult);
        while start < self.total_epochs as f64 {
            out.push(start);
            start += length;
            length *= self.t_mult;
        }
        out
    }
}
