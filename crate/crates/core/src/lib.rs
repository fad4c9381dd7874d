//! Data augmentation for intersectional fairness.
//!
//! Small intersectional groups are augmented with examples synthesized from
//! their lattice parents by generators trained to match the group's
//! distribution under the maximum mean discrepancy. A classifier is then
//! retrained on the augmented, equally sampled data and evaluated with
//! intersectional fairness metrics estimated by bootstrap.

pub mod classifier;
pub mod data;
pub mod evaluation;
pub mod fairness;
pub mod generator;
pub mod mmd;
pub mod optim;
pub mod pipeline;
pub mod synth;
pub mod util;
