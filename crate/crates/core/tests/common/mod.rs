//! Test-only oracles, independent of the library's implementation paths.
#![allow(dead_code)]

use iccss::numerics::{Complex64, ComplexMatrix, RngStream};

pub fn random_hermitian(n: usize, stream: &mut RngStream) -> ComplexMatrix {
    let b = ComplexMatrix::from_fn(n, n, |_, _| stream.standard_complex());
    b.add(&b.adjoint()).unwrap().scale(0.5)
}

pub fn random_psd(n: usize, stream: &mut RngStream) -> ComplexMatrix {
    let b = ComplexMatrix::from_fn(n, n, |_, _| stream.standard_complex());
    let mut a = b.matmul(&b.adjoint()).unwrap();
    // Exact Hermitian symmetry.
    for p in 0..n {
        a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
        for q in p + 1..n {
            a[(q, p)] = a[(p, q)].conj();
        }
    }
    a
}

type Poly = Vec<Complex64>;

fn poly_mul(a: &Poly, b: &Poly) -> Poly {
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn permutations(n: usize) -> Vec<(Vec<usize>, f64)> {
    fn rec(prefix: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out.into_iter()
        .map(|p| {
            let mut inversions = 0;
            for i in 0..n {
                for j in i + 1..n {
                    if p[i] > p[j] {
                        inversions += 1;
                    }
                }
            }
            (p, if inversions % 2 == 0 { 1.0 } else { -1.0 })
        })
        .collect()
}

/// Coefficients (ascending powers of lambda) of det(A - lambda I) by Leibniz expansion.
pub fn characteristic_polynomial(a: &ComplexMatrix) -> Vec<Complex64> {
    let n = a.rows();
    let mut total = vec![Complex64::new(0.0, 0.0); n + 1];
    for (perm, sign) in permutations(n) {
        let mut term: Poly = vec![Complex64::new(sign, 0.0)];
        for (i, &j) in perm.iter().enumerate() {
            let factor = if i == j {
                vec![a[(i, i)], Complex64::new(-1.0, 0.0)]
            } else {
                vec![a[(i, j)]]
            };
            term = poly_mul(&term, &factor);
        }
        for (k, c) in term.into_iter().enumerate() {
            total[k] += c;
        }
    }
    total
}

fn poly_eval(p: &[Complex64], x: Complex64) -> Complex64 {
    p.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c)
}

/// Roots by Durand-Kerner iteration followed by Newton polishing, sorted descending by real part.
pub fn polynomial_roots(p: &[Complex64]) -> Vec<f64> {
    let n = p.len() - 1;
    let lead = p[n];
    let monic: Vec<Complex64> = p.iter().map(|c| c / lead).collect();
    let mut roots: Vec<Complex64> =
        (0..n).map(|k| Complex64::new(0.4, 0.9).powu(k as u32)).collect();
    for _ in 0..2000 {
        let mut delta = 0.0f64;
        for i in 0..n {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            let step = poly_eval(&monic, roots[i]) / denom;
            roots[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-15 {
            break;
        }
    }
    let deriv: Vec<Complex64> =
        monic.iter().enumerate().skip(1).map(|(k, c)| c * k as f64).collect();
    for r in roots.iter_mut() {
        for _ in 0..5 {
            let d = poly_eval(&deriv, *r);
            if d.norm() > 0.0 {
                *r -= poly_eval(&monic, *r) / d;
            }
        }
    }
    let mut out: Vec<f64> = roots.iter().map(|r| r.re).collect();
    out.sort_by(|a, b| b.total_cmp(a));
    out
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let rx = ranks(x);
    let ry = ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Majority-vote detection probability by exhaustive enumeration of all 2^K report patterns.
pub fn majority_pd_enumerated(p_correct: f64, k: usize) -> f64 {
    let need = (k + 2) / 2;
    (0u32..(1 << k))
        .filter(|mask| mask.count_ones() as usize >= need)
        .map(|mask| {
            let ones = mask.count_ones() as i32;
            p_correct.powi(ones) * (1.0 - p_correct).powi(k as i32 - ones)
        })
        .sum()
}

pub fn binomial_std_err(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}
