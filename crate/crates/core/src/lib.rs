pub mod batch;
pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod kv;
pub mod npg;
pub mod policy;
pub mod sim;
pub mod sysid;
pub mod task;
pub mod value;
