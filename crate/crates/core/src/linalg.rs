//! Dense symmetric eigensolver: Householder reduction to tridiagonal form
//! followed by the implicit QL algorithm (the EISPACK `tred2`/`tql2` pair).

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Eigen-decomposition `A = V diag(values) V^T` of a symmetric matrix.
/// Eigenvalues are sorted ascending; column `j` of `V` belongs to `values[j]`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen<T> {
    pub values: Vec<T>,
    n: usize,
    /// Row-major `n x n`.
    vectors: Vec<T>,
}

impl<T: Scalar> SymmetricEigen<T> {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Eigenvector of `values[j]`, unit length.
    pub fn vector(&self, j: usize) -> Vec<T> {
        (0..self.n).map(|k| self.vectors[k * self.n + j]).collect()
    }
}

/// Decomposes the symmetric `n x n` row-major matrix `a`. Only symmetry up
/// to rounding is assumed; the lower triangle drives the reduction.
pub fn symmetric_eigen<T: Scalar>(a: &[T], n: usize) -> Result<SymmetricEigen<T>> {
    if a.len() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n * n,
            actual: a.len(),
        });
    }
    if n == 0 {
        return Ok(SymmetricEigen {
            values: Vec::new(),
            n,
            vectors: Vec::new(),
        });
    }
    let mut v = a.to_vec();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tridiagonalize(n, &mut v, &mut d, &mut e);
    ql_implicit(n, &mut v, &mut d, &mut e)?;
    Ok(SymmetricEigen { values: d, n, vectors: v })
}

#[allow(clippy::needless_range_loop)]
fn tridiagonalize<T: Scalar>(n: usize, v: &mut [T], d: &mut [T], e: &mut [T]) {
    let zero = T::zero();
    let at = |r: usize, c: usize| r * n + c;

    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }

    for i in (1..n).rev() {
        let mut scale = zero;
        let mut h = zero;
        for k in 0..i {
            scale = scale + d[k].abs();
        }
        if scale == zero {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = zero;
                v[at(j, i)] = zero;
            }
        } else {
            for k in 0..i {
                d[k] = d[k] / scale;
                h = h + d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > zero {
                g = -g;
            }
            e[i] = scale * g;
            h = h - f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = zero;
            }

            for j in 0..i {
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                for k in (j + 1)..i {
                    g = g + v[at(k, j)] * d[k];
                    e[k] = e[k] + v[at(k, j)] * f;
                }
                e[j] = g;
            }
            f = zero;
            for j in 0..i {
                e[j] = e[j] / h;
                f = f + e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] = e[j] - hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[at(k, j)] = v[at(k, j)] - (f * e[k] + g * d[k]);
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = zero;
            }
        }
        d[i] = h;
    }

    // Accumulate the Householder transformations.
    for i in 0..(n - 1) {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = T::one();
        let h = d[i + 1];
        if h != zero {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = zero;
                for k in 0..=i {
                    g = g + v[at(k, i + 1)] * v[at(k, j)];
                }
                for k in 0..=i {
                    v[at(k, j)] = v[at(k, j)] - g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = zero;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = zero;
    }
    v[at(n - 1, n - 1)] = T::one();
    e[0] = zero;
}

fn ql_implicit<T: Scalar>(n: usize, v: &mut [T], d: &mut [T], e: &mut [T]) -> Result<()> {
    let zero = T::zero();
    let one = T::one();
    let at = |r: usize, c: usize| r * n + c;
    let max_iter = 30 * n.max(1);

    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = zero;

    let mut f = zero;
    let mut tst1 = zero;
    let eps = T::epsilon();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }

        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > max_iter {
                    return Err(Error::NoConvergence(max_iter));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (T::two() * e[l]);
                let mut r = p.hypot(one);
                if p < zero {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di = *di - h;
                }
                f = f + h;

                p = d[m];
                let mut c = one;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = zero;
                let mut s2 = zero;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        let vk1 = v[at(k, i + 1)];
                        let vk = v[at(k, i)];
                        v[at(k, i + 1)] = s * vk + c * vk1;
                        v[at(k, i)] = c * vk - s * vk1;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] = d[l] + f;
        e[l] = zero;
    }

    // Selection sort keeps eigenvector columns paired with their values.
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        let mut p = d[i];
        for (j, &dj) in d.iter().enumerate().skip(i + 1) {
            if dj < p {
                k = j;
                p = dj;
            }
        }
        if k != i {
            d.swap(i, k);
            for r in 0..n {
                v.swap(at(r, i), at(r, k));
            }
        }
    }
    Ok(())
}
