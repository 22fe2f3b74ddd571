use nalgebra::DMatrix;

use crate::error::{invalid, Result};

/// Mutual information `½ log det(I + σ⁻² K)` between noisy observations and the GP.
pub fn information_gain(k: &DMatrix<f64>, noise: f64) -> Result<f64> {
    if !k.is_square() {
        return Err(invalid("kernel matrix must be square"));
    }
    if !(noise > 0.0) {
        return Err(invalid("noise variance must be positive"));
    }
    let n = k.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let scale = k.amax().max(1.0);
    for i in 0..n {
        for j in 0..i {
            if (k[(i, j)] - k[(j, i)]).abs() > 1e-10 * scale {
                return Err(invalid(format!("kernel matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    let mut a = (k + k.transpose()) * (0.5 / noise);
    for i in 0..n {
        a[(i, i)] += 1.0;
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| invalid("kernel matrix is not positive semidefinite"))?;
    Ok(chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_scalar() {
        assert_eq!(information_gain(&DMatrix::zeros(0, 0), 1.0).unwrap(), 0.0);
        let v = information_gain(&DMatrix::from_element(1, 1, 1.0), 1.0).unwrap();
        assert!((v - 0.5 * 2f64.ln()).abs() < 1e-15);
        assert!((v - 0.34657).abs() < 1e-5);
    }

    #[test]
    fn rejects_indefinite_and_asymmetric() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -5.0]);
        assert!(information_gain(&bad, 1.0).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.1, 1.0]);
        assert!(information_gain(&asym, 1.0).is_err());
    }
}
