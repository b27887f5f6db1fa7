//! Eigenvalues of small real matrices: balancing, reduction to upper
//! Hessenberg form by stabilized elementary similarity transforms, then the
//! Francis double-shift QR iteration.

use num_complex::Complex64;

use super::DenseMatrix;
use crate::error::{Error, Result};

/// All eigenvalues of a real square matrix, with multiplicity.
///
/// Order is unspecified. Fails if the QR iteration needs more than `100·n`
/// sweeps in total.
pub fn eigenvalues(a: &DenseMatrix<f64>) -> Result<Vec<Complex64>> {
    if !a.is_square() {
        return Err(Error::InvalidInput("eigenvalues require a square matrix".into()));
    }
    if a.as_slice().iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("matrix entries must be finite".into()));
    }
    let n = a.rows();
    let mut h: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    balance(&mut h);
    to_hessenberg(&mut h);
    hessenberg_qr(&mut h)
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &DenseMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

fn balance(a: &mut [Vec<f64>]) {
    const RADIX: f64 = 2.0;
    let n = a.len();
    let sqrdx = RADIX * RADIX;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[j][i].abs();
                    r += a[i][j].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= sqrdx;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= sqrdx;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                let g = 1.0 / f;
                for j in 0..n {
                    a[i][j] *= g;
                }
                for row in a.iter_mut() {
                    row[i] *= f;
                }
            }
        }
    }
}

fn to_hessenberg(a: &mut [Vec<f64>]) {
    let n = a.len();
    for m in 1..n.saturating_sub(1) {
        let mut x: f64 = 0.0;
        let mut piv = m;
        for j in m..n {
            if a[j][m - 1].abs() > x.abs() {
                x = a[j][m - 1];
                piv = j;
            }
        }
        if piv != m {
            a.swap(piv, m);
            for row in a.iter_mut() {
                row.swap(piv, m);
            }
        }
        if x != 0.0 {
            for i in (m + 1)..n {
                let mut y = a[i][m - 1];
                if y != 0.0 {
                    y /= x;
                    a[i][m - 1] = 0.0;
                    for j in m..n {
                        a[i][j] -= y * a[m][j];
                    }
                    for row in a.iter_mut() {
                        row[m] += y * row[i];
                    }
                }
            }
        }
    }
    for (i, row) in a.iter_mut().enumerate() {
        for v in row.iter_mut().take(i.saturating_sub(1)) {
            *v = 0.0;
        }
    }
}

#[allow(clippy::many_single_char_names)]
fn hessenberg_qr(a: &mut [Vec<f64>]) -> Result<Vec<Complex64>> {
    let n = a.len() as isize;
    let mut wr = vec![Complex64::new(0.0, 0.0); n as usize];
    let eps = f64::EPSILON;
    let max_total = 100 * n as usize;
    let mut total = 0usize;

    let mut anorm = 0.0;
    for i in 0..n as usize {
        for j in i.saturating_sub(1)..n as usize {
            anorm += a[i][j].abs();
        }
    }

    let at = |a: &[Vec<f64>], i: isize, j: isize| a[i as usize][j as usize];

    let mut nn = n - 1;
    let mut t = 0.0;
    while nn >= 0 {
        let mut its = 0usize;
        loop {
            // Look for a negligible subdiagonal element.
            let mut l = nn;
            while l > 0 {
                let mut s = at(a, l - 1, l - 1).abs() + at(a, l, l).abs();
                if s == 0.0 {
                    s = anorm;
                }
                if at(a, l, l - 1).abs() <= eps * s {
                    a[l as usize][(l - 1) as usize] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = at(a, nn, nn);
            if l == nn {
                wr[nn as usize] = Complex64::new(x + t, 0.0);
                nn -= 1;
                break;
            }
            let mut y = at(a, nn - 1, nn - 1);
            let mut w = at(a, nn, nn - 1) * at(a, nn - 1, nn);
            if l == nn - 1 {
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let mut z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    z = p + z.copysign(p);
                    let hi = x + z;
                    let lo = if z != 0.0 { x - w / z } else { hi };
                    wr[(nn - 1) as usize] = Complex64::new(hi, 0.0);
                    wr[nn as usize] = Complex64::new(lo, 0.0);
                } else {
                    wr[nn as usize] = Complex64::new(x + p, -z);
                    wr[(nn - 1) as usize] = Complex64::new(x + p, z);
                }
                nn -= 2;
                break;
            }
            if total >= max_total {
                return Err(Error::NoConvergence {
                    what: "Hessenberg QR iteration",
                    iterations: total,
                });
            }
            if its > 0 && its.is_multiple_of(10) {
                // Exceptional shift.
                t += x;
                for i in 0..=nn as usize {
                    a[i][i] -= x;
                }
                let s = at(a, nn, nn - 1).abs() + at(a, nn - 1, nn - 2).abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            total += 1;

            // Form the shift and look for two consecutive small subdiagonal elements.
            let mut m = nn - 2;
            let (mut p, mut q, mut r);
            loop {
                let z = at(a, m, m);
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / at(a, m + 1, m) + at(a, m, m + 1);
                q = at(a, m + 1, m + 1) - z - rr - ss;
                r = at(a, m + 2, m + 1);
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = at(a, m, m - 1).abs() * (q.abs() + r.abs());
                let v = p.abs() * (at(a, m - 1, m - 1).abs() + z.abs() + at(a, m + 1, m + 1).abs());
                if u <= eps * v {
                    break;
                }
                m -= 1;
            }
            for i in m..(nn - 1) {
                a[(i + 2) as usize][i as usize] = 0.0;
                if i != m {
                    a[(i + 2) as usize][(i - 1) as usize] = 0.0;
                }
            }

            // Double QR step on rows l..nn, columns m..nn.
            let mut k = m;
            while k < nn {
                if k != m {
                    p = at(a, k, k - 1);
                    q = at(a, k + 1, k - 1);
                    r = if k + 1 != nn { at(a, k + 2, k - 1) } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = (p * p + q * q + r * r).sqrt().copysign(p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            a[k as usize][(k - 1) as usize] = -at(a, k, k - 1);
                        }
                    } else {
                        a[k as usize][(k - 1) as usize] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    let z = r / s;
                    q /= p;
                    r /= p;
                    let (ku, k1, k2) = (k as usize, (k + 1) as usize, (k + 2) as usize);
                    for j in ku..=(nn as usize) {
                        let mut pp = a[ku][j] + q * a[k1][j];
                        if k + 1 != nn {
                            pp += r * a[k2][j];
                            a[k2][j] -= pp * z;
                        }
                        a[k1][j] -= pp * y;
                        a[ku][j] -= pp * x;
                    }
                    let mmin = if nn < k + 3 { nn } else { k + 3 };
                    for i in (l as usize)..=(mmin as usize) {
                        let mut pp = x * a[i][ku] + y * a[i][k1];
                        if k + 1 != nn {
                            pp += z * a[i][k2];
                            a[i][k2] -= pp * r;
                        }
                        a[i][k1] -= pp * q;
                        a[i][ku] -= pp;
                    }
                }
                k += 1;
            }
            if l >= nn - 1 {
                break;
            }
        }
    }
    Ok(wr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::determinant;
    use proptest::prelude::*;

    fn sorted_re(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap()));
        v
    }

    #[test]
    fn diagonal_matrix() {
        let ev = sorted_re(eigenvalues(&DenseMatrix::from_diagonal(&[3.0, 1.0, 2.0])).unwrap());
        for (e, want) in ev.iter().zip([1.0, 2.0, 3.0]) {
            assert!((e - Complex64::new(want, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn rotation_has_imaginary_pair() {
        let a = DenseMatrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap();
        let ev = sorted_re(eigenvalues(&a).unwrap());
        assert!((ev[0] - Complex64::new(0.0, -1.0)).norm() < 1e-14);
        assert!((ev[1] - Complex64::new(0.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn one_by_one_and_zero() {
        let ev = eigenvalues(&DenseMatrix::from_diagonal(&[-4.5])).unwrap();
        assert_eq!(ev, vec![Complex64::new(-4.5, 0.0)]);
        let ev = eigenvalues(&DenseMatrix::<f64>::zeros(4, 4)).unwrap();
        assert!(ev.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn companion_matrix_roots() {
        // x^3 - 6x^2 + 11x - 6 = (x-1)(x-2)(x-3)
        let a = DenseMatrix::from_rows(&[
            vec![6.0, -11.0, 6.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
        ])
        .unwrap();
        let ev = sorted_re(eigenvalues(&a).unwrap());
        for (e, want) in ev.iter().zip([1.0, 2.0, 3.0]) {
            assert!((e.re - want).abs() < 1e-12 && e.im.abs() < 1e-12);
        }
    }

    #[test]
    fn spectral_radius_matches_power_iteration_bound() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for n in 2..=8 {
            let data: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let a = DenseMatrix::from_row_major(n, n, data).unwrap();
            let rho = spectral_radius(&a).unwrap();
            // Gelfand: ρ ≤ ‖Aᵐ‖^{1/m} for every m, with equality in the limit.
            for m in [1u32, 4, 16] {
                assert!(rho <= a.pow(m).norm_inf().powf(1.0 / m as f64) * (1.0 + 1e-10));
            }
            let bound = a.pow(400).norm_inf().powf(1.0 / 400.0);
            assert!((bound - rho).abs() <= 0.05 * rho, "n={n} rho={rho} bound={bound}");
        }
    }

    fn random_matrix() -> impl Strategy<Value = DenseMatrix<f64>> {
        (1usize..=16).prop_flat_map(|n| {
            proptest::collection::vec(-1.0f64..1.0, n * n)
                .prop_map(move |v| DenseMatrix::from_row_major(n, n, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn trace_equals_eigenvalue_sum(a in random_matrix()) {
            let ev = eigenvalues(&a).unwrap();
            let sum: Complex64 = ev.iter().sum();
            let trace: f64 = a.diagonal().iter().sum();
            prop_assert!((sum.re - trace).abs() <= 1e-10 * a.norm_inf().max(1.0));
            prop_assert!(sum.im.abs() <= 1e-10 * a.norm_inf().max(1.0));
        }

        #[test]
        fn gram_matrix_has_nonnegative_real_spectrum(a in random_matrix()) {
            let g = a.transpose().matmul(&a);
            let scale = g.norm_inf().max(1.0);
            for z in eigenvalues(&g).unwrap() {
                prop_assert!(z.im.abs() <= 1e-10 * scale);
                prop_assert!(z.re >= -1e-10 * scale);
            }
        }

        #[test]
        fn determinant_equals_eigenvalue_product(a in random_matrix()) {
            let det = determinant(&a);
            prop_assume!(det.abs() > 1e-3);
            let prod: Complex64 = eigenvalues(&a).unwrap().iter().product();
            prop_assert!((prod.re - det).abs() <= 1e-8 * det.abs());
            prop_assert!(prod.im.abs() <= 1e-8 * det.abs());
        }
    }
}
