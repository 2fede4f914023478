pub mod analyze;
pub mod eval;
pub mod infer;
pub mod ingest;
pub mod train;
