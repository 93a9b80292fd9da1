//! Production cell controller built on multiway rendezvous.

pub mod bridge;
pub mod cell_types;
pub mod checks;
pub mod controller;
pub mod geometry;
pub mod protocol;
pub mod simulator;
pub mod sync_core;
