//! Symmetric 3x3 matrices, enough for the information matrix of `(theta1, theta2, b)`.

use crate::scalar::Scalar;

pub type Mat3<F> = [[F; 3]; 3];

/// Eigen-decomposition by cyclic Jacobi rotations. Returns eigenvalues and a
/// matrix whose columns are the matching unit eigenvectors.
pub fn sym_eigen3<F: Scalar>(a: &Mat3<F>) -> ([F; 3], Mat3<F>) {
    let mut m = *a;
    let mut v = identity();
    let two = F::c(2.0);
    for _sweep in 0..64 {
        let off = m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2];
        let scale = m[0][0] * m[0][0] + m[1][1] * m[1][1] + m[2][2] * m[2][2] + two * off;
        if off <= F::epsilon() * F::epsilon() * scale || off == F::zero() {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if m[p][q] == F::zero() {
                continue;
            }
            let theta = (m[q][q] - m[p][p]) / (two * m[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + F::one()).sqrt());
            let c = F::one() / (t * t + F::one()).sqrt();
            let s = t * c;
            for k in 0..3 {
                let (mkp, mkq) = (m[k][p], m[k][q]);
                m[k][p] = c * mkp - s * mkq;
                m[k][q] = s * mkp + c * mkq;
            }
            for k in 0..3 {
                let (mpk, mqk) = (m[p][k], m[q][k]);
                m[p][k] = c * mpk - s * mqk;
                m[q][k] = s * mpk + c * mqk;
            }
            for row in v.iter_mut() {
                let (vkp, vkq) = (row[p], row[q]);
                row[p] = c * vkp - s * vkq;
                row[q] = s * vkp + c * vkq;
            }
        }
    }
    ([m[0][0], m[1][1], m[2][2]], v)
}

fn identity<F: Scalar>() -> Mat3<F> {
    let (o, z) = (F::one(), F::zero());
    [[o, z, z], [z, o, z], [z, z, o]]
}

/// `sum_k f(lambda_k) v_k v_k'` over the eigenpairs.
fn spectral_map<F: Scalar>(vals: &[F; 3], vecs: &Mat3<F>, f: impl Fn(F) -> F) -> Mat3<F> {
    let mut out = [[F::zero(); 3]; 3];
    for k in 0..3 {
        let w = f(vals[k]);
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = out[i][j] + w * vecs[i][k] * vecs[j][k];
            }
        }
    }
    out
}

/// Inverse of a symmetric matrix, or the pseudo-inverse over its clearly
/// positive eigenvalues when it is not positive definite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymInverse<F> {
    pub matrix: Mat3<F>,
    pub positive_definite: bool,
    pub eigenvalues: [F; 3],
}

pub fn sym_inverse<F: Scalar>(a: &Mat3<F>) -> SymInverse<F> {
    let (vals, vecs) = sym_eigen3(a);
    let largest = vals.iter().fold(F::zero(), |m, &x| m.max(x.abs()));
    let cut = largest * F::c(1e3) * F::epsilon();
    let positive_definite = largest > F::zero() && vals.iter().all(|&x| x > cut);
    let matrix = spectral_map(&vals, &vecs, |x| if x > cut { F::one() / x } else { F::zero() });
    SymInverse { matrix: symmetrize(matrix), positive_definite, eigenvalues: vals }
}

pub fn symmetrize<F: Scalar>(mut a: Mat3<F>) -> Mat3<F> {
    let half = F::c(0.5);
    for i in 0..3 {
        for j in i + 1..3 {
            let s = half * (a[i][j] + a[j][i]);
            a[i][j] = s;
            a[j][i] = s;
        }
    }
    a
}

pub fn mat_vec<F: Scalar>(a: &Mat3<F>, x: &[F; 3]) -> [F; 3] {
    let mut out = [F::zero(); 3];
    for i in 0..3 {
        out[i] = a[i][0] * x[0] + a[i][1] * x[1] + a[i][2] * x[2];
    }
    out
}
