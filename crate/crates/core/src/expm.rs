//! Dense matrix exponential by Taylor series with scaling and squaring.

use faer::Mat;

use crate::C64;

const TAYLOR_DEGREE: usize = 18;

fn norm_1(a: &Mat<C64>) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `e^A` for square `A`. The argument is scaled to `‖A‖₁/2^s ≤ 1/2`, where
/// a degree-18 Taylor polynomial is accurate to well below rounding.
pub fn expm(a: &Mat<C64>) -> Mat<C64> {
    assert_eq!(a.nrows(), a.ncols(), "expm needs a square matrix");
    let n = a.nrows();
    let theta = norm_1(a);
    let s = if theta > 0.5 {
        (theta / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scale = 0.5f64.powi(s);
    let b = Mat::from_fn(n, n, |i, j| a[(i, j)] * scale);
    let id = Mat::<C64>::identity(n, n);
    // Horner form of Σ_k B^k / k!.
    let mut p = id.clone();
    for k in (1..=TAYLOR_DEGREE).rev() {
        let bp = &b * &p;
        let inv = 1.0 / k as f64;
        p = Mat::from_fn(n, n, |i, j| id[(i, j)] + bp[(i, j)] * inv);
    }
    for _ in 0..s {
        p = &p * &p;
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::Side;

    fn max_diff(a: &Mat<C64>, b: &Mat<C64>) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                m = m.max((a[(i, j)] - b[(i, j)]).norm());
            }
        }
        m
    }

    #[test]
    fn diagonal_and_zero() {
        let d = [C64::new(-3.0, 1.0), C64::new(0.5, -7.0), C64::new(0.0, 0.0)];
        let a = Mat::from_fn(3, 3, |i, j| if i == j { d[i] } else { C64::new(0.0, 0.0) });
        let e = expm(&a);
        for i in 0..3 {
            assert!((e[(i, i)] - d[i].exp()).norm() < 1e-13);
        }
        let z = expm(&Mat::<C64>::zeros(4, 4));
        assert_eq!(max_diff(&z, &Mat::identity(4, 4)), 0.0);
    }

    #[test]
    fn nilpotent_block() {
        // exp([[0, x], [0, 0]]) = [[1, x], [0, 1]].
        let x = C64::new(2.5, -1.0);
        let a = Mat::from_fn(2, 2, |i, j| if (i, j) == (0, 1) { x } else { C64::new(0.0, 0.0) });
        let e = expm(&a);
        assert!((e[(0, 1)] - x).norm() < 1e-14);
        assert!((e[(0, 0)] - 1.0).norm() < 1e-14);
    }

    #[test]
    fn hermitian_generator_matches_eigendecomposition() {
        let n = 6;
        let h = Mat::from_fn(n, n, |i, j| {
            let v = C64::new(((i * 7 + j * 3) % 5) as f64 - 2.0, (i as f64 - j as f64) * 0.3);
            if i == j {
                C64::new(v.re * 3.0, 0.0)
            } else {
                v
            }
        });
        let h = Mat::from_fn(n, n, |i, j| 0.5 * (h[(i, j)] + h[(j, i)].conj()));
        let t = 3.7;
        let u = expm(&Mat::from_fn(n, n, |i, j| h[(i, j)] * C64::new(0.0, -t)));
        let evd = h.self_adjoint_eigen(Side::Lower).unwrap();
        let (s, v) = (evd.S().column_vector(), evd.U());
        let want = Mat::from_fn(n, n, |i, j| {
            (0..n)
                .map(|k| v[(i, k)] * C64::new(0.0, -t * s[k].re).exp() * v[(j, k)].conj())
                .sum::<C64>()
        });
        assert!(max_diff(&u, &want) < 1e-12, "{}", max_diff(&u, &want));
    }
}
