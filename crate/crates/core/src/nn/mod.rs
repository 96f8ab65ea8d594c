//! Dense networks, the AdaBelief optimizer and the staged learning-rate schedule.

mod mlp;
mod optim;
mod schedule;

pub use mlp::{init_mlp, Activation, BoundMlp, Dense, Mlp, MlpSpec};
pub use optim::{AdaBelief, AdaBeliefConfig};
pub use schedule::{schedule_next, LrSchedule, ScheduleStep, Scheduler};
