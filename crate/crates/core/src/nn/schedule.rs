use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Staged learning rate: start at `initial_rate`, divide by `decay_factor`
/// after each stage down to `floor_rate`. A stage lasts `batches_per_stage`
/// batches unless the loss stagnates first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LrSchedule {
    pub initial_rate: f64,
    pub decay_factor: f64,
    pub floor_rate: f64,
    pub batches_per_stage: usize,
    pub stagnation_window: usize,
    pub stagnation_rel_tol: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            initial_rate: 1e-3,
            decay_factor: 10.0,
            floor_rate: 1e-5,
            batches_per_stage: 2000,
            stagnation_window: 100,
            stagnation_rel_tol: 1e-4,
        }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.floor_rate > 0.0 && self.initial_rate >= self.floor_rate) {
            return Err(Error::Config(format!(
                "need initial_rate >= floor_rate > 0, got {} and {}",
                self.initial_rate, self.floor_rate
            )));
        }
        if self.decay_factor.is_nan() || self.decay_factor <= 1.0 {
            return Err(Error::Config(format!("decay_factor must exceed 1, got {}", self.decay_factor)));
        }
        if self.batches_per_stage == 0 || self.stagnation_window == 0 {
            return Err(Error::Config("stage length and stagnation window must be positive".into()));
        }
        Ok(())
    }

    /// One rate per stage, e.g. `[1e-3, 1e-4, 1e-5]` for the defaults.
    pub fn rates(&self) -> Vec<f64> {
        let stages = ((self.initial_rate / self.floor_rate).ln() / self.decay_factor.ln() + 1e-9).floor() as i32 + 1;
        (0..stages).map(|i| self.initial_rate / self.decay_factor.powi(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleStep {
    /// Rate to use for the next batch.
    pub lr: f64,
    pub stage: usize,
    pub stage_ended: bool,
    pub stagnated: bool,
    pub finished: bool,
}

/// Stateful driver for [`LrSchedule`]; feed it one loss per batch.
#[derive(Debug, Clone)]
pub struct Scheduler {
    schedule: LrSchedule,
    rates: Vec<f64>,
    stage: usize,
    stage_losses: Vec<f64>,
    finished: bool,
}

impl Scheduler {
    pub fn new(schedule: LrSchedule) -> Result<Self> {
        schedule.validate()?;
        let rates = schedule.rates();
        Ok(Scheduler { schedule, rates, stage: 0, stage_losses: Vec::new(), finished: false })
    }

    pub fn lr(&self) -> f64 {
        self.rates[self.stage.min(self.rates.len() - 1)]
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    fn stagnated(&self) -> bool {
        let w = self.schedule.stagnation_window;
        let n = self.stage_losses.len();
        if n <= w {
            return false;
        }
        let best_before = self.stage_losses[..n - w].iter().copied().fold(f64::INFINITY, f64::min);
        let best_recent = self.stage_losses[n - w..].iter().copied().fold(f64::INFINITY, f64::min);
        let improvement = (best_before - best_recent) / best_before.abs().max(f64::MIN_POSITIVE);
        improvement < self.schedule.stagnation_rel_tol
    }

    pub fn observe(&mut self, loss: f64) -> ScheduleStep {
        if self.finished {
            return ScheduleStep { lr: self.lr(), stage: self.stage, stage_ended: false, stagnated: false, finished: true };
        }
        self.stage_losses.push(loss);
        let stagnated = self.stagnated();
        let stage_ended = stagnated || self.stage_losses.len() >= self.schedule.batches_per_stage;
        if stage_ended {
            self.stage_losses.clear();
            self.stage += 1;
            self.finished = self.stage >= self.rates.len();
        }
        ScheduleStep { lr: self.lr(), stage: self.stage, stage_ended, stagnated, finished: self.finished }
    }
}

/// Replays `history` through a fresh scheduler and reports the state after
/// the last loss.
pub fn schedule_next(schedule: LrSchedule, history: &[f64]) -> Result<ScheduleStep> {
    let mut s = Scheduler::new(schedule)?;
    let mut last = ScheduleStep { lr: s.lr(), stage: 0, stage_ended: false, stagnated: false, finished: false };
    for &l in history {
        last = s.observe(l);
        if last.finished {
            break;
        }
    }
    Ok(last)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_rates() {
        let r = LrSchedule::default().rates();
        assert_eq!(r.len(), 3);
        for (got, want) in r.iter().zip([1e-3, 1e-4, 1e-5]) {
            assert!((got - want).abs() <= 1e-15 * want);
        }
    }

    #[test]
    fn decreasing_loss_runs_full_stage() {
        let mut s = Scheduler::new(LrSchedule::default()).unwrap();
        for i in 0..1999 {
            let step = s.observe((-0.01 * i as f64).exp());
            assert!(!step.stage_ended, "stopped at {i}");
        }
        assert!(s.observe(0.0).stage_ended);
    }

    #[test]
    fn constant_loss_stagnates() {
        let mut s = Scheduler::new(LrSchedule::default()).unwrap();
        let mut ended_at = None;
        for i in 0..500 {
            if s.observe(1.0).stage_ended {
                ended_at = Some(i);
                break;
            }
        }
        assert_eq!(ended_at, Some(100));
    }

    #[test]
    fn three_full_stages_then_stop() {
        let sched = LrSchedule::default();
        let mut s = Scheduler::new(sched).unwrap();
        let mut seen = vec![s.lr()];
        let mut finished_after = None;
        for i in 0..10_000 {
            let step = s.observe(1.0 / (i as f64 + 1.0));
            if step.finished {
                finished_after = Some(i + 1);
                break;
            }
            if step.stage_ended {
                seen.push(step.lr);
            }
        }
        assert_eq!(finished_after, Some(6000));
        assert_eq!(seen.len(), 3);
        assert!((seen[2] - 1e-5).abs() < 1e-18);
    }

    #[test]
    fn replay_matches_streaming() {
        let hist: Vec<f64> = (0..2500).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let step = schedule_next(LrSchedule::default(), &hist).unwrap();
        assert_eq!(step.stage, 1);
        assert!((step.lr - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn invalid_schedules_rejected() {
        let bad = LrSchedule { decay_factor: 1.0, ..Default::default() };
        assert!(Scheduler::new(bad).is_err());
        let bad = LrSchedule { floor_rate: 1e-2, ..Default::default() };
        assert!(Scheduler::new(bad).is_err());
    }
}
