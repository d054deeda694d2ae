//! ZF and MMSE digital precoders with per-column power normalisation.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Equivalent channels with a larger 2-norm condition number are rejected by ZF.
pub const ZF_MAX_CONDITION: f64 = 1e8;

fn normalize_columns(mut d: DMatrix<Complex64>, rho: f64) -> Result<DMatrix<Complex64>> {
    for mut col in d.column_iter_mut() {
        let norm = col.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Precoding("zero or non-finite precoder column".into()));
        }
        col *= Complex64::from(rho.sqrt() / norm);
    }
    Ok(d)
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(Error::validation("rho", "must be > 0"))
    }
}

/// D = H^H (H H^H)^{-1} Gamma, with Gamma scaling every column to power `rho`
/// (analog beamformer treated as having orthonormal columns).
pub fn zf_precoder(h_eq: &DMatrix<Complex64>, rho: f64) -> Result<DMatrix<Complex64>> {
    check_rho(rho)?;
    let sv = h_eq.singular_values();
    let max = sv.max();
    let min = sv.min();
    if !(min > 0.0) || max / min > ZF_MAX_CONDITION {
        return Err(Error::Precoding(format!(
            "equivalent channel ill-conditioned (condition number {:.3e})",
            max / min
        )));
    }
    let hh = h_eq.adjoint();
    let gram = h_eq * &hh;
    let inv = gram
        .try_inverse()
        .ok_or_else(|| Error::Precoding("singular Gram matrix".into()))?;
    normalize_columns(hh * inv, rho)
}

/// D = H^H (H H^H + (K sigma2 / rho) I)^{-1}, columns scaled to power `rho`.
pub fn mmse_precoder(h_eq: &DMatrix<Complex64>, rho: f64, sigma2: f64) -> Result<DMatrix<Complex64>> {
    check_rho(rho)?;
    let k = h_eq.nrows();
    let hh = h_eq.adjoint();
    let reg = Complex64::from(k as f64 * sigma2 / rho);
    let mut gram = h_eq * &hh;
    for i in 0..k {
        gram[(i, i)] += reg;
    }
    let inv = gram
        .try_inverse()
        .ok_or_else(|| Error::Precoding("singular regularised Gram matrix".into()))?;
    normalize_columns(hh * inv, rho)
}

/// MMSE applied directly to the K x N channel (every antenna has its own RF chain).
pub fn fully_digital_mmse(h: &DMatrix<Complex64>, rho: f64, sigma2: f64) -> Result<DMatrix<Complex64>> {
    mmse_precoder(h, rho, sigma2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, k: usize) -> DMatrix<Complex64> {
        DMatrix::from_fn(k, k, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    #[test]
    fn zf_identity_and_diagonal() {
        let eye = DMatrix::<Complex64>::identity(4, 4);
        let d = zf_precoder(&eye, 1.0).unwrap();
        assert!((d - &eye).norm() < 1e-12);
        let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::new(2.0, 0.0),
            Complex64::new(0.0, 0.5),
            Complex64::new(-3.0, 1.0),
        ]));
        let d = zf_precoder(&diag, 2.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    assert!((d[(i, j)].norm() - 2f64.sqrt()).abs() < 1e-12);
                } else {
                    assert!(d[(i, j)].norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zf_cancels_leakage() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let h = random_matrix(&mut rng, 4);
            let d = zf_precoder(&h, 1.0).unwrap();
            let e = &h * &d;
            for i in 0..4 {
                for j in 0..4 {
                    if i != j {
                        assert!(e[(i, j)].norm() <= 1e-9 * h.norm());
                    }
                }
                assert!((d.column(i).norm_squared() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zf_rejects_singular() {
        let h = DMatrix::from_element(2, 2, Complex64::new(1.0, 0.0));
        assert!(matches!(zf_precoder(&h, 1.0), Err(Error::Precoding(_))));
    }

    #[test]
    fn mmse_identity_and_power() {
        let eye = DMatrix::<Complex64>::identity(4, 4);
        let d = mmse_precoder(&eye, 3.0, 0.1).unwrap();
        assert!((d - eye * Complex64::from(3f64.sqrt())).norm() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = random_matrix(&mut rng, 4);
        let d = mmse_precoder(&h, 0.7, 0.2).unwrap();
        for c in d.column_iter() {
            assert!((c.norm_squared() - 0.7).abs() < 1e-9);
        }
    }

    #[test]
    fn mmse_tends_to_zf() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = random_matrix(&mut rng, 4);
        let zf = zf_precoder(&h, 1.0).unwrap();
        let mmse = mmse_precoder(&h, 1.0, 1e-12).unwrap();
        for (a, b) in zf.column_iter().zip(mmse.column_iter()) {
            // same direction up to a complex scalar
            let inner = a.dotc(&b);
            assert!((inner.norm() - a.norm() * b.norm()).abs() < 1e-6);
        }
    }

    #[test]
    fn fully_digital_has_antenna_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = DMatrix::from_fn(2, 16, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let d = fully_digital_mmse(&h, 1.0, 0.01).unwrap();
        assert_eq!(d.shape(), (16, 2));
    }
}
