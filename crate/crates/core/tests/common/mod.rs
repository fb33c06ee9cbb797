#![allow(dead_code)]

pub mod contracts;
pub mod fixtures;
pub mod gradcheck;
pub mod oracles;
