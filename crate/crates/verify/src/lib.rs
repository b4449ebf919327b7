//! Reference computations the acceptance suite checks pipeline output
//! against. Written from the definitions, sharing no code with the core
//! crate.

use nalgebra::DMatrix;

pub fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

/// RMS of `a - b` relative to RMS of `b`.
pub fn relative_rms_error(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    rms(&d) / rms(b)
}

/// Trapezoid L2 norm of a vector signal given as channels.
pub fn l2_norm(time: &[f64], channels: &[&[f64]]) -> f64 {
    let sq = |k: usize| channels.iter().map(|c| c[k] * c[k]).sum::<f64>();
    (1..time.len())
        .map(|k| 0.5 * (time[k] - time[k - 1]) * (sq(k) + sq(k - 1)))
        .sum::<f64>()
        .sqrt()
}

/// `|got - want| <= tol * |want|`.
pub fn within(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol * want.abs()
}

pub fn sign_pattern(v: &[f64]) -> Vec<i8> {
    v.iter().map(|x| if *x > 0.0 { 1 } else if *x < 0.0 { -1 } else { 0 }).collect()
}

/// Smallest eigenvalue of the symmetric part.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    s.symmetric_eigenvalues().min()
}

pub fn peak_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l2_of_unit_step() {
        let t: Vec<f64> = (0..=1000).map(|k| k as f64 * 1e-3).collect();
        let one = vec![1.0; t.len()];
        assert!((l2_norm(&t, &[&one]) - 1.0).abs() < 1e-12);
        assert!((l2_norm(&t, &[&one, &one]) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn patterns_and_eigenvalues() {
        assert_eq!(sign_pattern(&[1.0, -2.0, 0.0]), vec![1, -1, 0]);
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!((min_symmetric_eigenvalue(&m) - 1.0).abs() < 1e-12);
        assert!(within(1.05, 1.0, 0.1) && !within(1.2, 1.0, 0.1));
    }
}
