pub mod cli;
pub mod config;
pub mod entity;
pub mod eval;
pub mod inference;
pub mod jsonl;
pub mod mitigation;
pub mod model;
pub mod ner;
pub mod pipeline;
pub mod runner;
pub mod selector;
pub mod sentence;
pub mod stub;
