//! Puncturable signatures over a Bloom filter, with the supporting cast:
//! an executable ideal-functionality oracle for trace-equivalence testing
//! and a discrete-slot proof-of-stake simulator that uses the scheme for
//! block signing.
//!
//! A puncturable signature lets the holder of a secret key permanently
//! revoke its own ability to sign any message carrying a given prefix.
//! Here the punctured prefixes are tracked by a Bloom filter: puncturing
//! inserts the prefix and deletes the secret-key shares at the filter
//! positions it maps to, so signing for that prefix becomes impossible —
//! there is nothing left to sign with, and no amount of state rollback
//! short of restoring the deleted shares brings it back.

pub mod algebra;
pub mod bloom;
pub mod chainsim;
pub mod codec;
pub mod ideal;
pub mod ps;
