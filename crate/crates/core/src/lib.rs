pub mod bench;
pub mod config;
pub mod datalake;
pub mod entities;
pub mod ontology;
pub mod orchestrator;
pub mod query_pipeline;
pub mod rdf;
pub mod sparql;
pub mod store;
pub mod vkg;
