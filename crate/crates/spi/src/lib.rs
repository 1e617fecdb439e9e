//! Synchronous pi-calculus toolchain: syntax, parser, affine usage checker,
//! instant-based interpreter and a harness for its metatheory.

pub mod harness;
pub mod parser;
pub mod semantics;
pub mod syntax;
pub mod typecheck;
pub mod types;
pub mod usage;
