pub mod benchmark;
pub mod fit;
pub mod oracle;
pub mod predict;
pub mod simulate;
