//! Harness around the certified-memory core: a deterministic mock model
//! provider, scripted scenarios, a randomized market workload, the platform
//! HTTP service and the `certmem` command line.

pub mod cli;
pub mod client;
pub mod dataset;
pub mod mock;
pub mod scenario;
pub mod seal;
pub mod server;
pub mod workload;
pub mod world;
