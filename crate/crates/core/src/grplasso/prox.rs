use nalgebra::DVector;

use crate::scalar::Real;

/// Proximal map of `threshold·‖·‖₂`: `(1 − threshold/‖v‖)₊ · v`.
///
/// Returns an exact zero vector when `‖v‖ ≤ threshold`.
pub fn prox_group<T: Real>(v: &DVector<T>, threshold: T) -> DVector<T> {
    let norm = v.norm();
    if norm <= threshold {
        return DVector::zeros(v.len());
    }
    if threshold == T::zero() {
        return v.clone();
    }
    v * ((norm - threshold) / norm)
}
