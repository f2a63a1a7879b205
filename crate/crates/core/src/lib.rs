//! Publishers' games under proportional ranking functions: exposure
//! competition between strategic content providers, no-regret learning
//! dynamics over it, certification of approximate Nash equilibria, audits of
//! the concavity characterization, and the welfare experiments built on top.


// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod learners;
pub mod model;
pub mod oracle;

pub use error::{Error, Result};
pub use learners::{LearnerKind, LearnerSpec, LearnerState, RegretLedger, StepSchedule};
pub use model::{
    Activation, ActivationFamily, DemandDistribution, Point, Profile, PublishersGame, SemiMetric,
};
