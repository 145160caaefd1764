//! Digital-twin driven network slicing for LEO non-terrestrial networks.
//!
//! The crate is split along the three layers of a twin-enabled network:
//!
//! * [`envsim`] is the physical layer. It draws fading channels and URLLC
//!   arrivals, and turns a resource-block allocation into realized rates.
//! * [`twin`] is the twin layer. It keeps a (possibly stale) snapshot of the
//!   physical state, summarizes history and scores its own fidelity.
//! * [`policy`] and [`nn`] are the application layer: a static orthogonal
//!   slicer, a QoS-penalized oracle, and a feedforward allocator trained by
//!   imitating the oracle on twin snapshots.
//!
//! [`metrics`] computes spectral efficiency and URLLC outage statistics, and
//! [`experiment`] wires everything into the sync → decide → advance loop.

pub mod domain;
pub mod envsim;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod nn;
pub mod par;
pub mod policy;
pub mod scenario;
pub mod twin;

pub use error::{Error, Result};
