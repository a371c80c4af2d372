//! Small dense linear-algebra helpers: a cyclic-Jacobi symmetric eigensolver,
//! singular values derived from it, and the PSD checks used across the crate.
//!
//! Everything here targets desk-scale problems (matrices up to a few dozen
//! rows); no attempt is made at large-scale performance.

use nalgebra::{DMatrix, DVector};

/// Convergence threshold for the Jacobi sweeps, relative to the Frobenius
/// norm of the input.
const JACOBI_TOL: f64 = 1e-12;

/// Hard cap on Jacobi sweeps; convergence is quadratic so this is generous.
const JACOBI_MAX_SWEEPS: usize = 64;

/// Symmetrize in place: `M <- (M + M^T) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    debug_assert_eq!(m.nrows(), m.ncols());
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Max absolute asymmetry `|M - M^T|` over all entries.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Eigenvalues of a symmetric matrix, sorted ascending, via cyclic Jacobi
/// rotations. The input is assumed symmetric; only the value of
/// `(M + M^T)/2` matters.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    jacobi(m, false).0
}

/// Eigen decomposition of a symmetric matrix: `(values, vectors)` with
/// eigenvalues ascending and eigenvectors in the matching columns.
pub fn symmetric_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let (vals, vecs) = jacobi(m, true);
    (vals, vecs.expect("vectors requested"))
}

fn jacobi(m: &DMatrix<f64>, want_vectors: bool) -> (Vec<f64>, Option<DMatrix<f64>>) {
    assert_eq!(m.nrows(), m.ncols(), "matrix must be square");
    let n = m.nrows();
    let mut a = m.clone();
    symmetrize(&mut a);
    let mut v = if want_vectors { Some(DMatrix::identity(n, n)) } else { None };

    let scale = a.norm().max(f64::MIN_POSITIVE);
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&a) <= JACOBI_TOL * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= JACOBI_TOL * scale * 1e-3 {
                    continue;
                }
                // Standard symmetric Schur rotation annihilating a[p][q].
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                apply_rotation(&mut a, p, q, c, s);
                if let Some(v) = v.as_mut() {
                    for i in 0..n {
                        let vip = v[(i, p)];
                        let viq = v[(i, q)];
                        v[(i, p)] = c * vip - s * viq;
                        v[(i, q)] = s * vip + c * viq;
                    }
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let vecs = v.map(|v| {
        let mut sorted = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            sorted.set_column(dst, &v.column(src));
        }
        sorted
    });
    (vals, vecs)
}

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            sum += 2.0 * a[(i, j)] * a[(i, j)];
        }
    }
    sum.sqrt()
}

/// Two-sided application of the rotation `J(p, q, c, s)`: `A <- J^T A J`,
/// keeping A exactly symmetric.
fn apply_rotation(a: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    let n = a.nrows();
    let app = a[(p, p)];
    let aqq = a[(q, q)];
    let apq = a[(p, q)];
    a[(p, p)] = c * c * app - 2.0 * s * c * apq + s * s * aqq;
    a[(q, q)] = s * s * app + 2.0 * s * c * apq + c * c * aqq;
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for i in 0..n {
        if i == p || i == q {
            continue;
        }
        let aip = a[(i, p)];
        let aiq = a[(i, q)];
        a[(i, p)] = c * aip - s * aiq;
        a[(p, i)] = a[(i, p)];
        a[(i, q)] = s * aip + c * aiq;
        a[(q, i)] = a[(i, q)];
    }
}

/// Singular values of an arbitrary rectangular matrix, sorted descending.
///
/// Computed as square roots of the eigenvalues of the Gram matrix of the
/// smaller side; tiny negative eigenvalues from roundoff clamp to zero.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let gram = if m.nrows() <= m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    let mut svs: Vec<f64> = symmetric_eigenvalues(&gram)
        .into_iter()
        .map(|l| l.max(0.0).sqrt())
        .collect();
    svs.reverse();
    svs
}

/// Largest singular value (spectral norm). Zero for an all-zero matrix.
pub fn sigma_max(m: &DMatrix<f64>) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(m)[0]
}

/// Symmetric PSD square root `S` with `S S^T = M` (eigenvalue clamping at 0).
/// Used to sample Gaussian vectors with a possibly singular covariance.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = symmetric_eigen(m);
    let n = m.nrows();
    let mut scaled = vecs.clone();
    for (j, &l) in vals.iter().enumerate() {
        let root = l.max(0.0).sqrt();
        for i in 0..n {
            scaled[(i, j)] *= root;
        }
    }
    scaled * vecs.transpose()
}

/// Gershgorin lower bound on the smallest eigenvalue of a symmetric matrix.
/// Cheap necessary check before paying for a full eigensolve.
pub fn gershgorin_min_bound(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut bound = f64::INFINITY;
    for i in 0..n {
        let mut radius = 0.0;
        for j in 0..n {
            if j != i {
                radius += m[(i, j)].abs();
            }
        }
        bound = bound.min(m[(i, i)] - radius);
    }
    bound
}

/// True when every entry is finite.
pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// True when every entry is finite.
pub fn vec_all_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}
