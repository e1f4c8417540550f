//! Complex Schur decomposition `A = Q T Q^H` by single-shift QR on the
//! Hessenberg form, following the structure of LAPACK's zlahqr: Wilkinson
//! shifts, exceptional shifts every ten stalled sweeps, and Givens bulge
//! chasing applied to the full matrix so that `T` is complete.

use nalgebra::linalg::Hessenberg;

use crate::error::{Error, Result};
use crate::lattice::{CMat, C64};

fn cabs1(z: C64) -> f64 {
    z.re.abs() + z.im.abs()
}

/// Rotation `[[c, s], [-conj(s), c]]` mapping (x, y) to (r, 0).
fn givens(x: C64, y: C64) -> (f64, C64) {
    let (ax, ay) = (x.norm(), y.norm());
    if ay == 0.0 {
        return (1.0, C64::new(0.0, 0.0));
    }
    if ax == 0.0 {
        return (0.0, y.conj() / ay);
    }
    let r = ax.hypot(ay);
    (ax / r, (x / ax) * y.conj() / r)
}

fn rotate_rows(h: &mut CMat, p: usize, c: f64, s: C64, cols: std::ops::Range<usize>) {
    for j in cols {
        let (a, b) = (h[(p, j)], h[(p + 1, j)]);
        h[(p, j)] = a * c + s * b;
        h[(p + 1, j)] = -s.conj() * a + b * c;
    }
}

fn rotate_cols(h: &mut CMat, p: usize, c: f64, s: C64, rows: std::ops::Range<usize>) {
    for i in rows {
        let (a, b) = (h[(i, p)], h[(i, p + 1)]);
        h[(i, p)] = a * c + b * s.conj();
        h[(i, p + 1)] = -a * s + b * c;
    }
}

pub fn complex_schur(a: &CMat) -> Result<(CMat, CMat)> {
    let n = a.nrows();
    let (mut q, mut h) = Hessenberg::new(a.clone()).unpack();
    if n == 1 {
        return Ok((q, h));
    }
    let eps = f64::EPSILON;
    let smlnum = f64::MIN_POSITIVE * (n as f64 / eps);
    let itmax = 30 * n.max(10);

    let mut hi = n - 1;
    let mut its_total = 0;
    while hi > 0 {
        let mut its = 0;
        loop {
            // look for a negligible subdiagonal entry in the active block
            let mut l = hi;
            while l > 0 {
                let sub = cabs1(h[(l, l - 1)]);
                if sub <= smlnum {
                    break;
                }
                let mut tst = cabs1(h[(l - 1, l - 1)]) + cabs1(h[(l, l)]);
                if tst == 0.0 {
                    if l >= 2 {
                        tst += h[(l - 1, l - 2)].re.abs();
                    }
                    if l < hi {
                        tst += h[(l + 1, l)].re.abs();
                    }
                }
                if sub <= eps * tst {
                    break;
                }
                l -= 1;
            }
            if l > 0 {
                h[(l, l - 1)] = C64::new(0.0, 0.0);
            }
            if l == hi {
                break;
            }
            if its_total >= itmax {
                return Err(Error::NoConvergence {
                    dim: n,
                    max_iter: itmax,
                });
            }

            let shift = if its > 0 && its % 20 == 0 {
                h[(hi, hi)] + 0.75 * h[(hi, hi - 1)].re.abs()
            } else if its > 0 && its % 10 == 0 {
                h[(l, l)] + 0.75 * h[(l + 1, l)].re.abs()
            } else {
                wilkinson(&h, hi)
            };

            // implicit single-shift sweep over rows/cols l..=hi
            let (c, s) = givens(h[(l, l)] - shift, h[(l + 1, l)]);
            rotate_rows(&mut h, l, c, s, l..n);
            rotate_cols(&mut h, l, c, s, 0..(l + 3).min(hi + 1));
            rotate_cols(&mut q, l, c, s, 0..n);
            for k in l + 1..hi {
                let (c, s) = givens(h[(k, k - 1)], h[(k + 1, k - 1)]);
                rotate_rows(&mut h, k, c, s, k - 1..n);
                h[(k + 1, k - 1)] = C64::new(0.0, 0.0);
                rotate_cols(&mut h, k, c, s, 0..(k + 3).min(hi + 1));
                rotate_cols(&mut q, k, c, s, 0..n);
            }
            its += 1;
            its_total += 1;
        }
        hi -= 1;
    }
    for r in 1..n {
        for c in 0..r {
            h[(r, c)] = C64::new(0.0, 0.0);
        }
    }
    Ok((q, h))
}

/// Eigenvalue of the trailing 2×2 block closest to its last diagonal entry.
fn wilkinson(h: &CMat, i: usize) -> C64 {
    let mut t = h[(i, i)];
    let u = h[(i - 1, i)].sqrt() * h[(i, i - 1)].sqrt();
    let s = cabs1(u);
    if s != 0.0 {
        let x = 0.5 * (h[(i - 1, i - 1)] - t);
        let sx = cabs1(x);
        let s = s.max(sx);
        let mut y = s * ((x / s) * (x / s) + (u / s) * (u / s)).sqrt();
        if sx > 0.0 {
            let xs = x / sx;
            if xs.re * y.re + xs.im * y.im < 0.0 {
                y = -y;
            }
        }
        t -= u * (u / (x + y));
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn check(a: &CMat) {
        let (q, t) = complex_schur(a).unwrap();
        let n = a.nrows();
        assert!((q.adjoint() * &q - CMat::identity(n, n)).norm() < 1e-13 * n as f64);
        assert!((&q * &t * q.adjoint() - a).norm() <= 1e-13 * a.norm().max(1e-300) * n as f64);
        for r in 1..n {
            for c in 0..r {
                assert_eq!(t[(r, c)], C64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn symmetric_tridiagonal_stagnation_cases() {
        for n in [2, 3, 4, 5, 8, 40] {
            for (diag, off) in [(0.0, 1e-12), (0.0, 1.0), (0.1, 1e-12)] {
                let mut m = CMat::identity(n, n) * C64::new(0.0, diag);
                for i in 0..n - 1 {
                    m[(i, i + 1)] = C64::new(off, 0.0);
                    m[(i + 1, i)] = C64::new(off, 0.0);
                }
                check(&m);
            }
        }
    }

    #[test]
    fn random_and_structured() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for n in [1, 2, 7, 30, 64] {
            let m = CMat::from_fn(n, n, |_, _| {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            check(&m);
        }
        // Jordan block and zero matrix
        let mut j = CMat::zeros(5, 5);
        for i in 0..4 {
            j[(i, i + 1)] = C64::new(1.0, 0.0);
        }
        check(&j);
        check(&CMat::zeros(4, 4));
    }
}
