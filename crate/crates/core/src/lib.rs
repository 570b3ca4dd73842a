//! Gravity-model analysis of citation-mediated knowledge flows.
//!
//! The pipeline reads a publication corpus, assigns each publication to a
//! territory by prevalence of its affiliations, aggregates citations into
//! dyadic flows between territories, and fits the log-linear gravity model
//! `ln C = ln k + a ln M_i + b ln M_j + g ln d` per category and context.

pub mod cli;
pub mod geodesy;
pub mod flows;
pub mod ingest;
pub mod mass;
pub mod model;
pub mod regress;
pub mod report;
pub mod stats;
pub mod synth;
pub mod territory;
