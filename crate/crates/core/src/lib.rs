//! Dual-loop orchestration engine for robotic chemistry experiments, with a
//! deterministic simulated bench, mock model services and SR/CR evaluation.

pub mod chem;
pub mod grammar;
pub mod rng;
pub mod image;
pub mod visualprompt;
pub mod simlab;
pub mod gateway;
pub mod orchestrator;
pub mod metrics;
pub mod episodestore;
