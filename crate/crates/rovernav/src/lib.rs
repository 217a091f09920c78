//! Rover navigation workbench.
//!
//! A self-contained visuomotor pipeline for a skid-steer rover in a
//! randomized obstacle world: episode simulation, a synthetic segmented
//! camera, bicubic preprocessing, a from-scratch neural policy trained with
//! PPO, baseline controllers, and an evaluation harness with a
//! success/collision/fall/timeout outcome taxonomy.
//!
//! Start with the runnable programs under `examples/`, or the `rovernav`
//! binary (`train`, `eval`, `render`, `preprocess`, `replay` subcommands).

pub mod camera;
pub mod nn;
pub mod preprocess;
pub mod world;
