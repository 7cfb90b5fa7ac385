use nalgebra::{Cholesky, DMatrix, Dyn};

/// Cholesky factorization with escalating diagonal jitter.
///
/// Tries the plain factorization first, then adds `1e-10 · mean(diag)` and
/// grows it tenfold up to `1e-6 · mean(diag)`. Returns the factor and the
/// jitter that was applied, or `None` when every attempt failed.
pub fn cholesky_jittered(mat: &DMatrix<f64>) -> Option<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(mat.clone()) {
        if factor_is_usable(&c) {
            return Some((c, 0.0));
        }
    }
    let n = mat.nrows();
    if n == 0 {
        return None;
    }
    let mean_diag = mat.diagonal().iter().sum::<f64>() / n as f64;
    if !mean_diag.is_finite() || mean_diag <= 0.0 {
        return None;
    }
    let mut scale = 1e-10;
    while scale <= 1e-6 * 1.000_001 {
        let jitter = scale * mean_diag;
        let mut m = mat.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(m) {
            if factor_is_usable(&c) {
                log::debug!("cholesky needed jitter {jitter:e}");
                return Some((c, jitter));
            }
        }
        scale *= 10.0;
    }
    None
}

fn factor_is_usable(c: &Cholesky<f64, Dyn>) -> bool {
    c.l_dirty().diagonal().iter().all(|d| d.is_finite() && *d > 0.0)
}

/// `log |A|` from its Cholesky factor.
pub fn log_det(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singular_matrix_gets_jitter() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (c, jitter) = cholesky_jittered(&m).expect("jitter should rescue a PSD matrix");
        assert!(jitter > 0.0 && jitter <= 1e-6);
        assert!(c.l().diagonal().iter().all(|d| *d > 0.0));
    }

    #[test]
    fn indefinite_matrix_fails() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(cholesky_jittered(&m).is_none());
    }

    #[test]
    fn log_det_matches_product() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let (c, _) = cholesky_jittered(&m).unwrap();
        assert!((log_det(&c) - 11f64.ln()).abs() < 1e-14);
    }
}
