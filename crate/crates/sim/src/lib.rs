pub mod protocol;
pub mod report;
pub mod server;
