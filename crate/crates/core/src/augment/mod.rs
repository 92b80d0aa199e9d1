//! Augmentation primitives and the policy pool that composes them into views.

pub mod geometric;
pub mod masking;
pub mod notch;
pub mod photometric;
pub mod pool;

pub use pool::{
    apply_policy, make_views, AppliedPolicy, AugPolicy, PolicyKind, PoolConfig, SampledParams, ViewBatch,
};
