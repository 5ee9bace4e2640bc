//! Small dense complex matrix exponential (scaling and squaring with a
//! degree-6 Pade approximant). The modulator chains here have a handful of
//! states, so accuracy matters more than asymptotic cost.

use nalgebra::DMatrix;
use num_complex::Complex64;

fn one_norm(a: &DMatrix<Complex64>) -> f64 {
    let mut best = 0.0_f64;
    for c in 0..a.ncols() {
        let s: f64 = (0..a.nrows()).map(|r| a[(r, c)].norm()).sum();
        best = best.max(s);
    }
    best
}

/// exp(A) for a square complex matrix: scale so the norm is small, sum the
/// Taylor series to machine precision, square back up.
pub fn expm(a: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    let norm = one_norm(a);
    let s = if norm > 0.25 {
        (norm / 0.25).log2().ceil() as i32
    } else {
        0
    };
    let scale = Complex64::new(2f64.powi(-s), 0.0);
    let a_s = a.map(|x| x * scale);

    let id = DMatrix::<Complex64>::identity(n, n);
    let mut term = id.clone();
    let mut sum = id;
    for k in 1..64 {
        term = &term * &a_s / Complex64::new(k as f64, 0.0);
        sum += &term;
        if one_norm(&term) < 1e-20 {
            break;
        }
    }
    let mut r = sum;
    for _ in 0..s {
        r = &r * &r;
    }
    r
}
