use nalgebra::DVector;

use crate::error::{NgcError, Result};
use crate::scalar::Real;

/// `v / ‖v‖`, or the zero vector for `v = 0`. In one dimension this is the sign.
pub fn direction<T: Real>(v: &DVector<T>) -> DVector<T> {
    let norm = v.norm();
    if norm == T::zero() {
        DVector::zeros(v.len())
    } else {
        v / norm
    }
}

/// Whether `‖D(β + u) − D(β)‖ < 2δ`, given `‖u‖ < δ‖β‖`.
///
/// The bound always holds under the precondition, so a `false` return means
/// a numerical defect.
pub fn direction_perturbation_check<T: Real>(beta: &DVector<T>, u: &DVector<T>, delta: T) -> Result<bool> {
    if beta.len() != u.len() {
        return Err(NgcError::Dimension("beta and u lengths differ".into()));
    }
    let nb = beta.norm();
    if nb == T::zero() {
        return Err(NgcError::Precondition("beta must be nonzero".into()));
    }
    if !(u.norm() < delta * nb) {
        return Err(NgcError::Precondition("requires ||u|| < delta ||beta||".into()));
    }
    let r = direction(&(beta + u)) - direction(beta);
    Ok(r.norm() < delta + delta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_maps_to_zero() {
        assert_eq!(direction(&DVector::<f64>::zeros(3)), DVector::zeros(3));
    }

    #[test]
    fn three_four_five() {
        let d = direction(&DVector::from_vec(vec![3.0f64, 4.0]));
        assert!((d[0] - 0.6).abs() < 1e-15 && (d[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn scalar_is_sign() {
        assert_eq!(direction(&DVector::from_vec(vec![-2.5f32]))[0], -1.0);
        assert_eq!(direction(&DVector::from_vec(vec![0.1]))[0], 1.0);
    }

    #[test]
    fn collinear_shrink() {
        let b = DVector::from_vec(vec![1.0, -2.0, 2.0]);
        let u = &b * -0.5;
        assert!(direction_perturbation_check(&b, &u, 0.6).unwrap());
        assert!(direction_perturbation_check(&b, &(&b * 0.0), 0.1).unwrap());
    }

    #[test]
    fn precondition_enforced() {
        let b = DVector::from_vec(vec![1.0, 0.0]);
        let u = DVector::from_vec(vec![0.0, 1.0]);
        assert!(direction_perturbation_check(&b, &u, 0.5).is_err());
        assert!(direction_perturbation_check(&(&b * 0.0), &u, 0.5).is_err());
    }
}
