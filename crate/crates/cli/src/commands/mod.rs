pub mod bench;
pub mod eval;
pub mod guard;
pub mod memory;
pub mod serve;
