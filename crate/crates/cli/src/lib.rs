//! IO, configuration, and experiment orchestration around `ivus-core`:
//! training runs, paired trained-vs-random evaluation, subsampling-factor
//! sweeps, and frame rendering.

pub mod config;
pub mod pgm;
pub mod run;
