use num_complex::Complex64;

use super::{ComplexMatrix, RngStream};
use crate::error::{Error, Result};

/// Pivots in `[-PSD_TOLERANCE, 0]` are treated as exact zeros.
pub const PSD_TOLERANCE: f64 = 1e-10;

const MAX_SWEEPS: usize = 100;

/// Lower-triangular `L` with `L L^H = a` and real nonnegative diagonal.
///
/// Semi-definite input is accepted: a pivot that lands in `[-1e-10, 0]` is
/// clamped to zero and the column below it is zeroed.
pub fn cholesky(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    a.ensure_hermitian()?;
    let n = a.rows();
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut pivot = a[(j, j)].re;
        for k in 0..j {
            pivot -= l[(j, k)].norm_sqr();
        }
        if pivot < -PSD_TOLERANCE {
            return Err(Error::NotPositiveSemiDefinite { pivot: j, value: pivot });
        }
        let d = pivot.max(0.0).sqrt();
        l[(j, j)] = Complex64::new(d, 0.0);
        for i in j + 1..n {
            if d == 0.0 {
                continue;
            }
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Draws `mean + L w` with `L` the Cholesky factor of `cov` and `w ~ CN(0, I)`.
pub fn sample_cscg(
    stream: &mut RngStream,
    mean: &[Complex64],
    cov: &ComplexMatrix,
) -> Result<Vec<Complex64>> {
    if cov.rows() != mean.len() {
        return Err(Error::DimensionMismatch(format!(
            "mean of length {} with {}x{} covariance",
            mean.len(),
            cov.rows(),
            cov.cols()
        )));
    }
    let l = cholesky(cov)?;
    Ok(sample_with_factor(stream, mean, &l))
}

/// Like [`sample_cscg`] with a precomputed lower-triangular factor.
pub fn sample_with_factor(
    stream: &mut RngStream,
    mean: &[Complex64],
    factor: &ComplexMatrix,
) -> Vec<Complex64> {
    let n = mean.len();
    let w: Vec<Complex64> = (0..n).map(|_| stream.standard_complex()).collect();
    (0..n)
        .map(|i| {
            let row = factor.row(i);
            mean[i] + row[..=i].iter().zip(&w).map(|(&a, &b)| a * b).sum::<Complex64>()
        })
        .collect()
}

/// Eigendecomposition of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct HermitianEig {
    /// Sorted descending.
    pub values: Vec<f64>,
    /// Column `i` is the unit eigenvector for `values[i]`.
    pub vectors: ComplexMatrix,
}

impl HermitianEig {
    pub fn max(&self) -> f64 {
        self.values[0]
    }

    pub fn min(&self) -> f64 {
        *self.values.last().expect("nonempty spectrum")
    }

    /// `V diag(values) V^H`.
    pub fn reconstruct(&self) -> ComplexMatrix {
        self.reconstruct_with(|v| v)
    }

    /// `V diag(f(values)) V^H`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let n = self.values.len();
        let v = &self.vectors;
        let mapped: Vec<f64> = self.values.iter().map(|&x| f(x)).collect();
        ComplexMatrix::from_fn(n, n, |p, q| {
            (0..n).map(|i| v[(p, i)] * v[(q, i)].conj() * mapped[i]).sum()
        })
    }
}

fn off_diagonal_norm(a: &ComplexMatrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for p in 0..n {
        for q in 0..n {
            if p != q {
                s += a[(p, q)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigensolver for complex Hermitian matrices.
pub fn hermitian_eig(a: &ComplexMatrix) -> Result<HermitianEig> {
    a.ensure_hermitian()?;
    let n = a.rows();
    if n == 0 {
        return Err(Error::EmptyInput("eigendecomposition of a 0x0 matrix"));
    }
    let mut w = a.clone();
    // Symmetrize exactly so the rotations preserve Hermitian structure.
    for p in 0..n {
        w[(p, p)] = Complex64::new(w[(p, p)].re, 0.0);
        for q in p + 1..n {
            let z = 0.5 * (w[(p, q)] + w[(q, p)].conj());
            w[(p, q)] = z;
            w[(q, p)] = z.conj();
        }
    }
    let mut v = ComplexMatrix::identity(n);
    let scale = w.frobenius_norm();
    let tol = 1e-15 * scale;

    let mut sweeps = 0;
    loop {
        let off = off_diagonal_norm(&w);
        if off <= tol || off == 0.0 {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence { sweeps, residual: off });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                rotate(&mut w, &mut v, p, q);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w[(j, j)].re.total_cmp(&w[(i, i)].re));
    let values = order.iter().map(|&i| w[(i, i)].re).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(HermitianEig { values, vectors })
}

/// Annihilates `w[p,q]` with `w <- J^H w J`, accumulating `v <- v J`.
fn rotate(w: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize) {
    let apq = w[(p, q)];
    let b = apq.norm();
    if b < 1e-300 {
        return;
    }
    // Phase that makes the (p,q) element real and positive.
    let phase = apq / b;
    let app = w[(p, p)].re;
    let aqq = w[(q, q)].re;
    let theta = (aqq - app) / (2.0 * b);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let t = if theta == 0.0 { 1.0 } else { t };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    // J restricted to (p,q): [[c, s], [-s e^{-i phi}, c e^{-i phi}]].
    let jpp = Complex64::new(c, 0.0);
    let jpq = Complex64::new(s, 0.0);
    let jqp = -phase.conj() * s;
    let jqq = phase.conj() * c;

    let n = w.rows();
    for r in 0..n {
        let wp = w[(r, p)];
        let wq = w[(r, q)];
        w[(r, p)] = wp * jpp + wq * jqp;
        w[(r, q)] = wp * jpq + wq * jqq;
        let vp = v[(r, p)];
        let vq = v[(r, q)];
        v[(r, p)] = vp * jpp + vq * jqp;
        v[(r, q)] = vp * jpq + vq * jqq;
    }
    for c_ in 0..n {
        let wp = w[(p, c_)];
        let wq = w[(q, c_)];
        w[(p, c_)] = jpp.conj() * wp + jqp.conj() * wq;
        w[(q, c_)] = jpq.conj() * wp + jqq.conj() * wq;
    }
    w[(p, q)] = Complex64::new(0.0, 0.0);
    w[(q, p)] = Complex64::new(0.0, 0.0);
    w[(p, p)] = Complex64::new(w[(p, p)].re, 0.0);
    w[(q, q)] = Complex64::new(w[(q, q)].re, 0.0);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn cholesky_identity_and_diagonal() {
        let l = cholesky(&ComplexMatrix::identity(4)).unwrap();
        assert_eq!(l, ComplexMatrix::identity(4));
        let l = cholesky(&ComplexMatrix::diagonal(&[4.0, 9.0])).unwrap();
        assert_eq!(l, ComplexMatrix::diagonal(&[2.0, 3.0]));
    }

    #[test]
    fn cholesky_exponential_correlation_round_trip() {
        let a = ComplexMatrix::exponential_correlation(3, 0.5);
        let l = cholesky(&a).unwrap();
        let back = l.matmul(&l.adjoint()).unwrap();
        assert!(back.sub(&a).unwrap().max_abs() <= 1e-12);
        for i in 0..3 {
            assert!(l[(i, i)].im == 0.0 && l[(i, i)].re >= 0.0);
            for j in i + 1..3 {
                assert_eq!(l[(i, j)], c(0.0));
            }
        }
    }

    #[test]
    fn cholesky_reports_failing_pivot() {
        let a = ComplexMatrix::from_real(2, 2, &[1.0, 2.0, 2.0, 1.0]).unwrap();
        match cholesky(&a) {
            Err(Error::NotPositiveSemiDefinite { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("expected PSD error, got {other:?}"),
        }
    }

    #[test]
    fn cholesky_clamps_semidefinite() {
        let a = ComplexMatrix::from_real(2, 2, &[1.0, 1.0, 1.0, 1.0]).unwrap();
        let l = cholesky(&a).unwrap();
        assert_eq!(l[(1, 1)], c(0.0));
        assert!(l.matmul(&l.adjoint()).unwrap().sub(&a).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn zero_covariance_returns_mean() {
        let mut s = RngStream::new(1, 2);
        let mean = vec![Complex64::new(1.5, -2.0), Complex64::new(0.0, 3.0)];
        let z = sample_cscg(&mut s, &mean, &ComplexMatrix::zeros(2, 2)).unwrap();
        assert_eq!(z, mean);
    }

    #[test]
    fn eig_identity() {
        let e = hermitian_eig(&ComplexMatrix::identity(3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn eig_textbook_two_by_two() {
        let a = ComplexMatrix::from_real(2, 2, &[2.0, 1.0, 1.0, 2.0]).unwrap();
        let e = hermitian_eig(&a).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eig_complex_two_by_two() {
        // [[1, i], [-i, 1]] has eigenvalues 2 and 0.
        let mut a = ComplexMatrix::identity(2);
        a[(0, 1)] = Complex64::new(0.0, 1.0);
        a[(1, 0)] = Complex64::new(0.0, -1.0);
        let e = hermitian_eig(&a).unwrap();
        assert!((e.values[0] - 2.0).abs() < 1e-14);
        assert!(e.values[1].abs() < 1e-14);
        assert!(e.reconstruct().sub(&a).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let a = ComplexMatrix::from_real(2, 2, &[1.0, 2.0, 0.0, 1.0]).unwrap();
        assert!(matches!(hermitian_eig(&a), Err(Error::NotHermitian { .. })));
    }
}
