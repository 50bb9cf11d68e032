//! Normals, fundamental forms and curvature at sample points.

use crate::surface::SurfacePoint;
use crate::{Error, Result, Vec3};

/// Default absolute guard on `‖S_u × S_v‖`. Callers working at a known
/// scale should use [`degeneracy_eps`] instead.
pub const DEFAULT_EPS: f64 = 1e-10;

/// Scale-aware guard: `1e-10 · diag²` for a model with bounding-box
/// diagonal `diag`.
pub fn degeneracy_eps(bbox_diagonal: f64) -> f64 {
    let s = if bbox_diagonal > 0.0 { bbox_diagonal } else { 1.0 };
    1e-10 * s * s
}

/// Surface normal `S_u × S_v` divided by `lagged_norm` when given, else
/// normalized exactly.
pub fn unit_normal(su: &Vec3, sv: &Vec3, lagged_norm: Option<f64>) -> Result<Vec3> {
    unit_normal_guarded(su, sv, lagged_norm, DEFAULT_EPS)
}

pub fn unit_normal_guarded(su: &Vec3, sv: &Vec3, lagged_norm: Option<f64>, eps: f64) -> Result<Vec3> {
    let c = su.cross(sv);
    match lagged_norm {
        Some(l) if l > 0.0 && l.is_finite() => Ok(c / l),
        Some(l) => Err(Error::Contract(format!("lagged norm must be positive, got {l}"))),
        None => {
            let n = c.norm();
            if n <= eps || !n.is_finite() {
                return Err(Error::DegenerateParameterization(format!(
                    "|S_u x S_v| = {n:e} at or below {eps:e}"
                )));
            }
            Ok(c / n)
        }
    }
}

/// Derivative data at one sample plus the exactly normalized normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointFrame {
    pub position: Vec3,
    pub su: Vec3,
    pub sv: Vec3,
    pub suu: Vec3,
    pub suv: Vec3,
    pub svv: Vec3,
    pub normal: Vec3,
    /// `‖S_u × S_v‖` at this evaluation; becomes the lagged norm of the
    /// next solver iteration.
    pub cross_norm: f64,
}

impl PointFrame {
    pub fn new(p: &SurfacePoint) -> Result<Self> {
        Self::with_eps(p, DEFAULT_EPS)
    }

    pub fn with_eps(p: &SurfacePoint, eps: f64) -> Result<Self> {
        let normal = unit_normal_guarded(&p.su, &p.sv, None, eps)?;
        Ok(Self {
            position: p.position,
            su: p.su,
            sv: p.sv,
            suu: p.suu,
            suv: p.suv,
            svv: p.svv,
            normal,
            cross_norm: p.su.cross(&p.sv).norm(),
        })
    }
}

/// Symmetric 2x2 matrix `[[a, b], [b, c]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sym2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Sym2 {
    pub fn det(&self) -> f64 {
        self.a * self.c - self.b * self.b
    }
}

/// First and second fundamental forms.
pub fn fundamental_forms(f: &PointFrame) -> Result<(Sym2, Sym2)> {
    let first = Sym2 {
        a: f.su.dot(&f.su),
        b: f.su.dot(&f.sv),
        c: f.sv.dot(&f.sv),
    };
    let scale = first.a * first.c;
    if first.det() <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateParameterization(format!(
            "first fundamental form is singular (det {:e})",
            first.det()
        )));
    }
    let second = Sym2 {
        a: f.normal.dot(&f.suu),
        b: f.normal.dot(&f.suv),
        c: f.normal.dot(&f.svv),
    };
    Ok((first, second))
}

/// Gaussian curvature from the triple-product expansion of `det II`:
/// `K = ([S_uu,S_u,S_v][S_vv,S_u,S_v] - [S_uv,S_u,S_v]²) / ‖S_u × S_v‖⁴`.
pub fn gaussian_curvature(f: &PointFrame) -> Result<f64> {
    let (first, _) = fundamental_forms(f)?;
    let c = f.su.cross(&f.sv);
    let t_uu = f.suu.dot(&c);
    let t_uv = f.suv.dot(&c);
    let t_vv = f.svv.dot(&c);
    let det_i = first.det();
    Ok((t_uu * t_vv - t_uv * t_uv) / (det_i * det_i))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrincipalData {
    /// Curvature of largest magnitude.
    pub kappa1: f64,
    pub kappa2: f64,
    /// Main principal direction (unit, tangent).
    pub q1: Vec3,
    pub q2: Vec3,
    /// Confidence weight `1 - min|κ| / max|κ|`.
    pub weight: f64,
    /// Directions are arbitrary at umbilics.
    pub umbilic: bool,
}

/// Principal curvatures and directions: eigen-decomposition of `I⁻¹ II`.
pub fn principal(f: &PointFrame) -> Result<PrincipalData> {
    let (first, second) = fundamental_forms(f)?;
    let det_i = first.det();
    let gauss = second.det() / det_i;
    let mean = (second.a * first.c - 2.0 * second.b * first.b + second.c * first.a) / (2.0 * det_i);
    let disc = mean * mean - gauss;
    let spread = disc.max(0.0).sqrt();
    let (ka, kb) = (mean + spread, mean - spread);
    let (kappa1, kappa2) = if ka.abs() >= kb.abs() { (ka, kb) } else { (kb, ka) };

    let size = mean.abs().max(spread);
    let umbilic = spread <= 1e-8 * size || size == 0.0;
    let q1 = if umbilic {
        f.su.normalize()
    } else {
        // null vector of (II - κ I), taking the better conditioned row
        let r1 = (second.b - kappa1 * first.b, -(second.a - kappa1 * first.a));
        let r2 = (second.c - kappa1 * first.c, -(second.b - kappa1 * first.b));
        let (x, y) = if r1.0.hypot(r1.1) >= r2.0.hypot(r2.1) { r1 } else { r2 };
        (f.su * x + f.sv * y).normalize()
    };
    // principal directions are orthogonal in 3D
    let q2 = f.normal.cross(&q1).normalize();
    Ok(PrincipalData {
        kappa1,
        kappa2,
        q1,
        q2,
        weight: confidence_weight(kappa1, kappa2),
        umbilic,
    })
}

/// `1 - min(|κ1|, |κ2|) / max(|κ1|, |κ2|)`; flat points get weight 0.
pub fn confidence_weight(kappa1: f64, kappa2: f64) -> f64 {
    let (a, b) = (kappa1.abs(), kappa2.abs());
    let hi = a.max(b);
    if hi == 0.0 {
        return 0.0;
    }
    (1.0 - a.min(b) / hi).clamp(0.0, 1.0)
}
