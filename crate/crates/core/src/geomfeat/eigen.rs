//! Non-iterative eigen-decomposition of symmetric 3×3 matrices.
//!
//! Eigenvalues come from the trigonometric solution of the characteristic
//! cubic. The eigenvector of the best-separated eigenvalue is taken from the
//! largest cross product of two rows of `A - λI`; the other two come from a
//! 2×2 rotation in its orthogonal complement, so the basis is orthonormal by
//! construction. Final eigenvalues are Rayleigh quotients of the vectors.

use std::f64::consts::TAU;

use crate::error::{Error, Result};

pub type Mat3 = [[f64; 3]; 3];
pub type Vec3 = [f64; 3];

/// Ascending eigenvalues with matching unit eigenvectors (`vectors[i]`
/// belongs to `values[i]`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenTriple {
    pub values: [f64; 3],
    pub vectors: [Vec3; 3],
}

impl EigenTriple {
    /// Clamps round-off negatives to zero, for positive semi-definite input.
    pub fn clamped(mut self) -> Self {
        for v in &mut self.values {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        self
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

pub(crate) fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn scaled(a: &Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn mat_vec(m: &Mat3, v: &Vec3) -> Vec3 {
    [dot(&m[0], v), dot(&m[1], v), dot(&m[2], v)]
}

/// Largest asymmetry `|C_ij - C_ji|`.
pub fn asymmetry(c: &Mat3) -> f64 {
    (c[0][1] - c[1][0])
        .abs()
        .max((c[0][2] - c[2][0]).abs())
        .max((c[1][2] - c[2][1]).abs())
}

pub fn eigen3(c: &Mat3) -> Result<EigenTriple> {
    let asym = asymmetry(c);
    if !(asym <= 1e-9) {
        return Err(Error::domain(format!(
            "eigen3 requires a symmetric matrix (asymmetry {asym:e})"
        )));
    }
    if c.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::domain("eigen3 requires finite entries"));
    }
    Ok(solve_symmetric(c))
}

fn solve_symmetric(c: &Mat3) -> EigenTriple {
    // Only the upper triangle is read.
    let max_abs = [c[0][0], c[0][1], c[0][2], c[1][1], c[1][2], c[2][2]]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if max_abs == 0.0 {
        return EigenTriple {
            values: [0.0; 3],
            vectors: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        };
    }
    let inv = 1.0 / max_abs;
    let a00 = c[0][0] * inv;
    let a01 = c[0][1] * inv;
    let a02 = c[0][2] * inv;
    let a11 = c[1][1] * inv;
    let a12 = c[1][2] * inv;
    let a22 = c[2][2] * inv;
    let a: Mat3 = [[a00, a01, a02], [a01, a11, a12], [a02, a12, a22]];

    let off = a01 * a01 + a02 * a02 + a12 * a12;
    if off == 0.0 {
        let mut order = [0usize, 1, 2];
        let diag = [a00, a11, a22];
        order.sort_by(|&i, &j| diag[i].total_cmp(&diag[j]));
        let mut vectors = [[0.0; 3]; 3];
        let mut values = [0.0; 3];
        for (slot, &axis) in order.iter().enumerate() {
            values[slot] = diag[axis] * max_abs;
            vectors[slot][axis] = 1.0;
        }
        return EigenTriple { values, vectors };
    }

    let q = (a00 + a11 + a22) / 3.0;
    let b00 = a00 - q;
    let b11 = a11 - q;
    let b22 = a22 - q;
    let p = ((b00 * b00 + b11 * b11 + b22 * b22 + 2.0 * off) / 6.0).sqrt();
    let c00 = b11 * b22 - a12 * a12;
    let c01 = a01 * b22 - a12 * a02;
    let c02 = a01 * a12 - b11 * a02;
    let det = (b00 * c00 - a01 * c01 + a02 * c02) / (p * p * p);
    let half_det = (0.5 * det).clamp(-1.0, 1.0);
    let angle = half_det.acos() / 3.0;
    let beta2 = 2.0 * angle.cos();
    let beta0 = 2.0 * (angle + TAU / 3.0).cos();
    let beta1 = -(beta0 + beta2);
    // Repeated roots can round out of order.
    let mut betas = [beta0, beta1, beta2];
    betas.sort_by(f64::total_cmp);
    let values = betas.map(|b| q + p * b);

    // Start from the eigenvalue farthest from the other two.
    let known = if half_det >= 0.0 {
        isolated_vector(&a, values[2])
    } else {
        isolated_vector(&a, values[0])
    };
    let (p1, p2) = complement_pair(&a, &known);
    let (e0, e1, e2) = (known, p1, p2);

    // Rayleigh quotients recover accuracy lost by acos near repeated roots.
    let mut pairs = [e0, e1, e2].map(|e| (dot(&e, &mat_vec(&a, &e)), e));
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    EigenTriple {
        values: pairs.map(|(v, _)| v * max_abs),
        vectors: pairs.map(|(_, e)| e),
    }
}

/// Eigenvector of an eigenvalue of multiplicity one.
fn isolated_vector(a: &Mat3, lambda: f64) -> Vec3 {
    let r0 = [a[0][0] - lambda, a[0][1], a[0][2]];
    let r1 = [a[0][1], a[1][1] - lambda, a[1][2]];
    let r2 = [a[0][2], a[1][2], a[2][2] - lambda];
    let candidates = [cross(&r0, &r1), cross(&r0, &r2), cross(&r1, &r2)];
    let (best, norm2) = candidates
        .iter()
        .map(|v| (v, dot(v, v)))
        .fold((&candidates[0], -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
    if norm2 <= 0.0 {
        return [1.0, 0.0, 0.0];
    }
    scaled(best, 1.0 / norm2.sqrt())
}

fn orthogonal_complement(w: &Vec3) -> (Vec3, Vec3) {
    let u = if w[0].abs() > w[1].abs() {
        let inv = 1.0 / (w[0] * w[0] + w[2] * w[2]).sqrt();
        [-w[2] * inv, 0.0, w[0] * inv]
    } else {
        let inv = 1.0 / (w[1] * w[1] + w[2] * w[2]).sqrt();
        [0.0, w[2] * inv, -w[1] * inv]
    };
    let v = cross(w, &u);
    (u, v)
}

/// Both eigenvectors inside the plane orthogonal to `known`, from a
/// Jacobi rotation of the projected 2×2 block.
fn complement_pair(a: &Mat3, known: &Vec3) -> (Vec3, Vec3) {
    let (u, v) = orthogonal_complement(known);
    let au = mat_vec(a, &u);
    let av = mat_vec(a, &v);
    let m00 = dot(&u, &au);
    let m01 = dot(&u, &av);
    let m11 = dot(&v, &av);
    let theta = 0.5 * (2.0 * m01).atan2(m00 - m11);
    let (s, c) = theta.sin_cos();
    let p = [
        c * u[0] + s * v[0],
        c * u[1] + s * v[1],
        c * u[2] + s * v[2],
    ];
    (p, cross(known, &p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn check_decomposition(c: &Mat3, t: &EigenTriple, tol: f64) {
        let scale = c.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        assert!(t.values[0] <= t.values[1] && t.values[1] <= t.values[2]);
        for i in 0..3 {
            for j in 0..3 {
                let d = dot(&t.vectors[i], &t.vectors[j]);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-9, "orthonormality {i}{j}: {d}");
            }
            let cv = mat_vec(c, &t.vectors[i]);
            for k in 0..3 {
                let r = cv[k] - t.values[i] * t.vectors[i][k];
                assert!(r.abs() <= tol * scale, "residual {r} for eigenpair {i}");
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                let rec: f64 = (0..3)
                    .map(|k| t.values[k] * t.vectors[k][i] * t.vectors[k][j])
                    .sum();
                assert!((rec - c[i][j]).abs() <= 1e-9 * scale.max(1.0), "reconstruction");
            }
        }
        let trace = c[0][0] + c[1][1] + c[2][2];
        assert!((t.sum() - trace).abs() <= 1e-9 * scale.max(1.0));
    }

    #[test]
    fn diagonal_matrix() {
        let c = [[3.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 2.0]];
        let t = eigen3(&c).unwrap();
        assert_eq!(t.values, [1.0, 2.0, 3.0]);
        assert_eq!(t.vectors[0][1].abs(), 1.0);
        assert_eq!(t.vectors[1][2].abs(), 1.0);
        assert_eq!(t.vectors[2][0].abs(), 1.0);
    }

    #[test]
    fn isotropic_matrix() {
        let s = 1.0 / 3.0;
        let c = [[s, 0.0, 0.0], [0.0, s, 0.0], [0.0, 0.0, s]];
        let t = eigen3(&c).unwrap();
        for v in t.values {
            assert!((v - s).abs() < 1e-15);
        }
        check_decomposition(&c, &t, 1e-12);
    }

    #[test]
    fn zero_and_rank_one() {
        let t = eigen3(&[[0.0; 3]; 3]).unwrap();
        assert_eq!(t.values, [0.0; 3]);
        let v = [1.0 / 3f64.sqrt(); 3];
        let c = [0, 1, 2].map(|i| [0, 1, 2].map(|j| 2.0 * v[i] * v[j]));
        let t = eigen3(&c).unwrap();
        check_decomposition(&c, &t, 1e-12);
        assert!((t.values[2] - 2.0).abs() < 1e-12);
        assert!(t.values[0].abs() < 1e-12 && t.values[1].abs() < 1e-12);
    }

    #[test]
    fn asymmetric_rejected() {
        let c = [[1.0, 0.5, 0.0], [0.4, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(matches!(eigen3(&c), Err(Error::Domain(_))));
    }

    proptest! {
        #[test]
        fn random_psd_reconstructs(g in prop::array::uniform9(-2.0f64..2.0)) {
            // C = G Gᵀ is symmetric positive semi-definite.
            let gm = [[g[0], g[1], g[2]], [g[3], g[4], g[5]], [g[6], g[7], g[8]]];
            let c = [0, 1, 2].map(|i| [0, 1, 2].map(|j| dot(&gm[i], &gm[j])));
            let t = eigen3(&c).unwrap();
            check_decomposition(&c, &t, 1e-7);
        }

        #[test]
        fn random_symmetric_reconstructs(u in prop::array::uniform6(-5.0f64..5.0)) {
            let c = [[u[0], u[1], u[2]], [u[1], u[3], u[4]], [u[2], u[4], u[5]]];
            let t = eigen3(&c).unwrap();
            check_decomposition(&c, &t, 1e-7);
        }

        #[test]
        fn near_degenerate_pairs(eps in 0.0f64..1e-6, th in 0.0f64..6.3, ph in 0.0f64..3.1) {
            // Rotated diag(1, 1 + eps, 3) exercises the clustered branch.
            let (s, c) = th.sin_cos();
            let (sp, cp) = ph.sin_cos();
            let r = [[c * cp, -s, c * sp], [s * cp, c, s * sp], [-sp, 0.0, cp]];
            let d = [1.0, 1.0 + eps, 3.0];
            let m = [0, 1, 2].map(|i| [0, 1, 2].map(|j| (0..3).map(|k| r[i][k] * d[k] * r[j][k]).sum::<f64>()));
            let t = eigen3(&m).unwrap();
            check_decomposition(&m, &t, 1e-7);
        }
    }
}
