pub mod bench;
pub mod chem;
pub mod config;
pub mod descriptors;
pub mod ingest;
pub mod manifest;
pub mod par;
pub mod pipeline;
pub mod pref;
pub mod render;
pub mod rng;
pub mod score;
pub mod similarity;
pub mod synth;
pub mod synthetic;
pub mod templates;
