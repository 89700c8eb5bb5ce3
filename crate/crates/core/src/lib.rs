pub mod alloc;
pub mod dist;
pub mod error;
pub mod quad;
pub mod stats;
pub mod targets;
pub mod tu;
pub mod ntu;
pub mod poa;
pub mod config;
pub mod sim;
pub mod cli;
