//! Command implementations behind the `semgkit` binary.

pub mod benchmark;
pub mod commands;
pub mod config;
pub mod data;
pub mod exit;
pub mod import;
pub mod report;

use sha2::{Digest, Sha256};

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
