//! Desk-scale robot imitation learning.
//!
//! The crate covers the whole loop: a planar simulator behind a gym-style
//! environment interface ([`env`], [`sim2d`]), demonstration collection
//! ([`collect`]), a chunked episode file format ([`datastore`]), a small
//! neural-network substrate ([`neuro`]), three policy families ([`policies`]),
//! success-rate evaluation ([`bench`]) and the CLI / websocket surface
//! ([`gateway`]).

pub mod env;
pub mod sim2d;
pub mod datastore;
pub mod collect;
pub mod neuro;
pub mod policies;
pub mod bench;
pub mod gateway;
