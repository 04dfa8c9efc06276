pub mod admm;
pub mod cli;
pub mod domain;
pub mod error;
pub mod eval;
pub mod io;
pub mod partition;
pub mod pipeline;
pub mod plot;
pub mod projection;
pub mod smoother;
pub mod synth;
