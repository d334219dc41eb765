//! Mean absolute error and root-mean-square error.

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("length mismatch: {estimates} estimates vs {truth} ground-truth values")]
    LengthMismatch { estimates: usize, truth: usize },
    #[error("empty input")]
    Empty,
}

fn check<T>(est: &[T], truth: &[T]) -> Result<(), MetricsError> {
    if est.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            estimates: est.len(),
            truth: truth.len(),
        });
    }
    if est.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

/// `1/N sum |est - truth|`, in the units of the inputs.
pub fn mae<T: Scalar>(est: &[T], truth: &[T]) -> Result<T, MetricsError> {
    check(est, truth)?;
    let sum: T = est.iter().zip(truth).map(|(&e, &t)| (e - t).abs()).sum();
    Ok(sum / T::from_usize_lossy(est.len()))
}

/// `sqrt(1/N sum (est - truth)^2)`, in the units of the inputs.
pub fn rmse<T: Scalar>(est: &[T], truth: &[T]) -> Result<T, MetricsError> {
    check(est, truth)?;
    let sum: T = est
        .iter()
        .zip(truth)
        .map(|(&e, &t)| (e - t) * (e - t))
        .sum();
    Ok((sum / T::from_usize_lossy(est.len())).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_computed() {
        let est = [1.0f64, 2.0, 3.0];
        let truth = [1.0, 1.0, 3.0];
        assert!((mae(&est, &truth).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((rmse(&est, &truth).unwrap() - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((rmse(&est, &truth).unwrap() - 0.5774).abs() < 1e-4);
    }

    #[test]
    fn identity_and_bias() {
        let t = [0.3, -1.0, 7.5, 2.0];
        assert_eq!(mae(&t, &t).unwrap(), 0.0);
        assert_eq!(rmse(&t, &t).unwrap(), 0.0);
        let b = 0.25;
        let e: Vec<f64> = t.iter().map(|x| x + b).collect();
        assert!((mae(&e, &t).unwrap() - b).abs() < 1e-12);
        assert!((rmse(&e, &t).unwrap() - b).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert_eq!(
            mae(&[1.0], &[1.0, 2.0]),
            Err(MetricsError::LengthMismatch {
                estimates: 1,
                truth: 2
            })
        );
        assert_eq!(rmse::<f64>(&[], &[]), Err(MetricsError::Empty));
    }

    proptest! {
        #[test]
        fn mae_never_exceeds_rmse(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..64)) {
            let (e, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let a = mae(&e, &t).unwrap();
            let r = rmse(&e, &t).unwrap();
            prop_assert!(a <= r * (1.0 + 1e-12) + 1e-12);
        }
    }
}
