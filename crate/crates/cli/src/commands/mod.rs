pub mod curate;
pub mod eval;
pub mod report;
pub mod split;
pub mod synth;
pub mod train;
