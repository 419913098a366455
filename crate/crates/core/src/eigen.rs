//! Dense symmetric eigensolvers.
//!
//! Two independent routes are provided: cyclic Jacobi rotations, and
//! Householder tridiagonalization followed by the implicit QL iteration.
//! [`sym_eigh`] picks Jacobi for small matrices and the tridiagonal route
//! otherwise; tests cross-check one against the other.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::math;

/// Jacobi is used up to this size by [`sym_eigh`].
pub const JACOBI_MAX_DIM: usize = 48;
const JACOBI_SWEEPS: usize = 100;
const QL_ITERATIONS: usize = 60;

/// Eigenpairs of a symmetric matrix, eigenvalues ascending. `vectors[k]` is
/// the unit eigenvector of `values[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

impl SymEigen {
    /// `max_k ‖H v_k − λ_k v_k‖`.
    pub fn max_residual(&self, h: &Matrix) -> f64 {
        self.values
            .iter()
            .zip(&self.vectors)
            .map(|(&l, v)| {
                let hv = h.matvec(v);
                math::sqrt(
                    hv.iter()
                        .zip(v)
                        .map(|(a, b)| (a - l * b) * (a - l * b))
                        .sum(),
                )
            })
            .fold(0.0, f64::max)
    }

    /// `V Λ Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.values.len();
        Matrix::from_fn(n, n, |r, c| {
            self.values
                .iter()
                .zip(&self.vectors)
                .map(|(&l, v)| l * v[r] * v[c])
                .sum()
        })
    }

    fn sorted(mut values: Vec<f64>, vectors: Vec<Vec<f64>>) -> Self {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let vectors = order.iter().map(|&k| vectors[k].clone()).collect();
        values = order.iter().map(|&k| values[k]).collect();
        Self { values, vectors }
    }
}

fn check_square(h: &Matrix) -> Result<usize> {
    if h.rows() != h.cols() {
        return Err(Error::ShapeMismatch {
            context: "symmetric eigenproblem",
            expected: h.rows(),
            got: h.cols(),
        });
    }
    Ok(h.rows())
}

/// Eigenvalues, ascending.
pub fn sym_eigs(h: &Matrix) -> Result<Vec<f64>> {
    Ok(sym_eigh(h)?.values)
}

/// Eigenvalues and eigenvectors of the symmetric part of `h`.
pub fn sym_eigh(h: &Matrix) -> Result<SymEigen> {
    if check_square(h)? <= JACOBI_MAX_DIM {
        sym_eigh_jacobi(h)
    } else {
        sym_eigh_tridiagonal(h)
    }
}

/// Cyclic Jacobi with the classical threshold strategy.
pub fn sym_eigh_jacobi(h: &Matrix) -> Result<SymEigen> {
    let n = check_square(h)?;
    let mut a = h.symmetrized();
    let mut v = Matrix::identity(n);
    let scale = a.frobenius();
    if n <= 1 || scale == 0.0 {
        return Ok(finish(a, v));
    }
    for _ in 0..JACOBI_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| a[(p, q)] * a[(p, q)])
            .sum();
        if math::sqrt(off) <= 1e-15 * scale {
            return Ok(finish(a, v));
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + math::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / math::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    Err(Error::NoConvergence {
        sweeps: JACOBI_SWEEPS,
    })
}

fn finish(a: Matrix, v: Matrix) -> SymEigen {
    let n = a.rows();
    let values = (0..n).map(|k| a[(k, k)]).collect();
    let vectors = (0..n).map(|k| v.column(k)).collect();
    SymEigen::sorted(values, vectors)
}

/// Householder reduction to tridiagonal form and implicit QL with shifts.
pub fn sym_eigh_tridiagonal(h: &Matrix) -> Result<SymEigen> {
    let n = check_square(h)?;
    let mut v = h.symmetrized();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    if n == 0 {
        return Ok(SymEigen {
            values: Vec::new(),
            vectors: Vec::new(),
        });
    }
    tridiagonalize(&mut v, &mut d, &mut e);
    ql_implicit(&mut v, &mut d, &mut e)?;
    let vectors = (0..n).map(|k| v.column(k)).collect();
    Ok(SymEigen::sorted(d, vectors))
}

fn tridiagonalize(v: &mut Matrix, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
                v[(j, i)] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = math::sqrt(h);
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[(j, i)] = f;
                g = e[j] + v[(j, j)] * f;
                for k in j + 1..i {
                    g += v[(k, j)] * d[k];
                    e[k] += v[(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[(n - 1, i)] = v[(i, i)];
        v[(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[(k, i + 1)] * v[(k, j)];
                }
                for k in 0..=i {
                    v[(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1, j)];
        v[(n - 1, j)] = 0.0;
    }
    v[(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

fn ql_implicit(v: &mut Matrix, d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > QL_ITERATIONS {
                    return Err(Error::NoConvergence {
                        sweeps: QL_ITERATIONS,
                    });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = math::hypot(p, 1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = math::hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v[(k, i + 1)];
                        v[(k, i + 1)] = s * v[(k, i)] + c * h;
                        v[(k, i)] = c * v[(k, i)] - s * h;
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
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}
