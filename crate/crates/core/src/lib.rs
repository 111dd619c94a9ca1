pub mod aggregate;
pub mod features;
pub mod ingest;
pub mod linkage;
pub mod par;
pub mod runtime;
pub mod stats;
pub mod store;
pub mod synth;
