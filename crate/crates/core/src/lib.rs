pub mod abstraction;
pub mod closed_loop;
pub mod config;
pub mod error;
pub mod network;
pub mod plant;
pub mod quantization;
pub mod robust;
pub mod spec;
pub mod synthesis;
pub mod transition;

pub use error::{Error, Result};
