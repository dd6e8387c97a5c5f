//! One-step abductive multi-target learning on noisy polygon labels.
//!
//! The crate covers the whole pipeline: checked propositional reasonings,
//! target abduction from polygons, a synthetic corpus with a ground-truth
//! oracle, multi-target joint losses and a small pixel classifier, noisy-label
//! baseline losses, logical assessment metrics, and the experiment harness.

pub mod logic;
pub mod imaging;
pub mod synthgen;
pub mod mtl;
pub mod baselines;
pub mod laf;
pub mod experiment;
