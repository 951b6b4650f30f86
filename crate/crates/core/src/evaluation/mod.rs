//! Candidate registration, session lifecycle, result cards and storage.

pub mod application;
pub mod card;
pub mod service;
pub mod session;
pub mod store;
