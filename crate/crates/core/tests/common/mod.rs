#![allow(dead_code)]

pub mod fd_oracle;
pub mod fields;
pub mod heat;
pub mod longwave;
