//! Seeded synthetic data: artificial languages and the fixture set used by
//! the end-to-end tests.

pub mod audio;
pub mod fixture;
pub mod text;
