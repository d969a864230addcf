//! Centralized numeric tolerances.

use serde::{Deserialize, Serialize};

/// Default tolerances used by validation and decision routines.
///
/// Every structural check in the crate pulls its threshold from one of these
/// fields so that a single record pins the numeric contract.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Most negative effect eigenvalue a POVM may carry.
    pub psd: f64,
    /// Allowed deviation of the effect sum from the identity.
    pub complete: f64,
    /// Allowed `||E^2 - E||_F` for an effect to count as projective.
    pub pvm: f64,
    /// Allowed Frobenius norm of a commutator to count as commuting.
    pub commute: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            psd: 1e-9,
            complete: 1e-9,
            pvm: 1e-9,
            commute: 1e-10,
        }
    }
}
