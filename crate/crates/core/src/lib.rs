pub mod contiguity;
pub mod error;
pub mod io;
pub mod oracle;
pub mod recurrence;
pub mod rng;
pub mod scaling;
pub mod srw;
pub mod stats;
pub mod walk;
