pub mod aggregation;
pub mod evaluation;
pub mod ids;
pub mod ingestion;
pub mod metrics;
pub mod sampling;
pub mod synth;
pub mod terminology;
pub mod wmve;
