//! Initial target planes and rotation axes.
//!
//! The plane normal of a patch is the direction most orthogonal to the
//! weighted main principal directions of its samples (smallest eigenvector
//! of `Σ w q qᵀ`), and the plane passes through the barycenter of the
//! patch normals. The axis moment of a rotational patch is the least-squares
//! moment making every normal line coplanar with the axis, restricted to
//! the plane orthogonal to the axis direction.

use nalgebra::{Matrix3, SymmetricEigen};

use crate::sampling::Plane;
use crate::{Error, Result, Vec3};

/// Weighted main principal directions and Gauss image of one patch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlaneFitProblem {
    /// `(q_k, w_k)` pairs.
    pub directions: Vec<(Vec3, f64)>,
    pub normals: Vec<Vec3>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneInit {
    pub plane: Plane,
    /// Smallest eigenvalue was not simple.
    pub ambiguous: bool,
    /// `vᵀ Q v` at the returned direction.
    pub objective: f64,
}

/// Flips `v` so its largest-magnitude component is positive.
pub fn canonical_sign(v: Vec3) -> Vec3 {
    let k = v.iamax();
    if v[k] < 0.0 {
        -v
    } else {
        v
    }
}

pub fn direction_matrix(directions: &[(Vec3, f64)]) -> Matrix3<f64> {
    directions.iter().fold(Matrix3::zeros(), |acc, (q, w)| acc + q * q.transpose() * *w)
}

pub fn init_plane(problem: &PlaneFitProblem) -> Result<PlaneInit> {
    if problem.directions.is_empty() || problem.normals.is_empty() {
        return Err(Error::Initialization("patch has no samples".into()));
    }
    if problem.directions.iter().any(|(_, w)| !(0.0..=1.0).contains(w)) {
        return Err(Error::Initialization("direction weights must lie in [0, 1]".into()));
    }
    let q = direction_matrix(&problem.directions);
    if !q.iter().all(|x| x.is_finite()) {
        return Err(Error::Initialization("non-finite principal directions".into()));
    }
    let eig = SymmetricEigen::new(q);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lo = eig.eigenvalues[order[0]];
    let scale = eig.eigenvalues[order[2]].abs().max(1.0);
    let ambiguous = eig.eigenvalues[order[1]] - lo <= 1e-12 * scale;
    let v = canonical_sign(eig.eigenvectors.column(order[0]).normalize());

    let barycenter = problem.normals.iter().sum::<Vec3>() / problem.normals.len() as f64;
    let d = -v.dot(&barycenter);
    Ok(PlaneInit {
        plane: Plane::new(v, d),
        ambiguous,
        objective: (v.transpose() * q * v)[0],
    })
}

/// Orthonormal basis `(b1, b2)` of the plane orthogonal to unit `v`, seeded
/// from the coordinate axis along the smallest component of `v`.
pub fn orthonormal_complement(v: &Vec3) -> (Vec3, Vec3) {
    let k = v.iamin();
    let mut e = Vec3::zeros();
    e[k] = 1.0;
    let b1 = (e - v * v.dot(&e)).normalize();
    let b2 = v.cross(&b1);
    (b1, b2)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisMomentInit {
    pub moment: Vec3,
    /// The 2x2 system was singular (all normals parallel to the axis).
    pub degenerate: bool,
    pub objective: f64,
}

/// Plücker coordinates `(n, p × n)` of the normal line through `p`.
pub fn normal_line(p: &Vec3, n: &Vec3) -> (Vec3, Vec3) {
    (*n, p.cross(n))
}

/// Least-squares axis moment `v̄ ⟂ v` minimizing `Σ (v·n̄_k + v̄·n_k)²`.
pub fn init_axis_moment(lines: &[(Vec3, Vec3)], v: &Vec3) -> Result<AxisMomentInit> {
    if lines.len() < 2 {
        return Err(Error::Initialization("axis fit needs at least two normal lines".into()));
    }
    let dir = v.normalize();
    let (b1, b2) = orthonormal_complement(&dir);
    let (mut a11, mut a12, mut a22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (n, nbar) in lines {
        let c = v.dot(nbar);
        let (x, y) = (b1.dot(n), b2.dot(n));
        a11 += x * x;
        a12 += x * y;
        a22 += y * y;
        r1 -= c * x;
        r2 -= c * y;
    }
    let det = a11 * a22 - a12 * a12;
    let objective = |m: &Vec3| lines.iter().map(|(n, nb)| (v.dot(nb) + m.dot(n)).powi(2)).sum::<f64>();
    let trace = a11 + a22;
    if det <= 1e-12 * trace * trace || trace == 0.0 {
        let moment = Vec3::zeros();
        return Ok(AxisMomentInit {
            objective: objective(&moment),
            moment,
            degenerate: true,
        });
    }
    let mu1 = (a22 * r1 - a12 * r2) / det;
    let mu2 = (a11 * r2 - a12 * r1) / det;
    let moment = b1 * mu1 + b2 * mu2;
    Ok(AxisMomentInit {
        objective: objective(&moment),
        moment,
        degenerate: false,
    })
}

/// Point on the axis line `(v, v̄)` closest to the origin: `v × v̄ / ‖v‖²`.
pub fn axis_point(v: &Vec3, moment: &Vec3) -> Vec3 {
    v.cross(moment) / v.norm_squared()
}
