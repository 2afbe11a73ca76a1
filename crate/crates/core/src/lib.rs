//! Certified agent memory.
//!
//! An agent's paid model-API interactions are measured inside a simulated
//! certification enclave into per-field salted commitments, per-interaction
//! digests and a chained anchored root. Sellers disclose chosen fields of a
//! chosen (possibly non-contiguous) subset of interactions; buyers verify the
//! disclosure against the root without seeing hidden content. A platform
//! registers agents into gangs by attestation, escrows payment, releases it
//! only against enclave-signed delivery receipts, and keeps reputation,
//! anchors and lineage.
//!
//! Modules, bottom-up: [`canon`], [`ledger`], [`enclave`], [`gang`],
//! [`market`]. [`par`] holds the rayon/sequential execution switch.

pub mod canon;
pub mod clock;
pub mod enclave;
pub mod gang;
pub mod ledger;
pub mod market;
pub mod par;

pub use par::Exec;
