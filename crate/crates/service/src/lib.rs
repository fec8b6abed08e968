//! HTTP service and command-line front end for the diffscope engine, backed
//! by a content-addressed on-disk trajectory cache.

pub mod api;
pub mod cache;
pub mod cli;
