//! On-disk containers, external tensor ingestion and report emission.

pub mod blockfile;
pub mod bytes;
pub mod compressed;
pub mod ingest;
pub mod report;

pub use blockfile::BlockFile;
pub use compressed::CompressedFile;
pub use ingest::{export_external, ingest_external, Layout};
