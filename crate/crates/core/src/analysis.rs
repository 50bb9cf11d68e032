//! Gauss images, curvature maps, principal-direction fields and induced
//! rulings.

use crate::diffgeo::{degeneracy_eps, gaussian_curvature, principal, PointFrame, PrincipalData};
use crate::energy::Problem;
use crate::par;
use crate::sampling::{Patch, Plane};
use crate::surface::SurfaceModel;
use crate::{Error, Result, Vec3};

/// Plane normalized to a unit normal: `(v / ‖v‖, d / ‖v‖)`.
fn unit_plane(plane: &Plane) -> Result<(Vec3, f64)> {
    let len = plane.v.norm();
    if !(len > 0.0 && len.is_finite()) {
        return Err(Error::arg("plane normal must be nonzero"));
    }
    Ok((plane.v / len, plane.d / len))
}

/// Point of the circle `H ∩ S²` closest to the unit vector `n`.
pub fn closest_point_on_circle(n: &Vec3, plane: &Plane) -> Result<Vec3> {
    let (v, d) = unit_plane(plane)?;
    if d.abs() >= 1.0 {
        return Err(Error::arg(format!("degenerate circle: plane distance {} from the origin", d.abs())));
    }
    let radial = n - v * n.dot(&v);
    let len = radial.norm();
    if len <= 1e-12 * n.norm() {
        return Err(Error::arg("normal is parallel to the plane normal; projection is ambiguous"));
    }
    Ok(-v * d + radial * ((1.0 - d * d).sqrt() / len))
}

/// Input for the ruling construction at one sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RulingInput {
    pub p: Vec3,
    pub n: Vec3,
    pub principal: Option<PrincipalData>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RulingSample {
    pub p: Vec3,
    pub n: Vec3,
    /// Closest point of `n` on the target circle.
    pub q: Vec3,
    /// Circle tangent at `q`.
    pub r_t: Vec3,
    /// Sphere tangent at `q` orthogonal to `r_t`; approximates the ruling.
    pub r_o: Vec3,
    /// `|κ1|` below the flatness threshold: the ruling estimate is unreliable.
    pub inflection: bool,
}

/// Circle tangents and ruling estimates for samples sharing one plane.
/// `flat_kappa` is the `|κ1|` threshold below which a sample is flagged.
pub fn induced_rulings(samples: &[RulingInput], plane: &Plane, flat_kappa: f64) -> Result<Vec<RulingSample>> {
    let (v, _) = unit_plane(plane)?;
    samples
        .iter()
        .map(|s| {
            let q = closest_point_on_circle(&s.n, plane)?;
            let r_t = v.cross(&q).normalize();
            let mut r_o = q.cross(&r_t);
            let flip = match &s.principal {
                Some(pd) => r_o.dot(&pd.q2) < 0.0,
                None => r_o.dot(&v) < 0.0,
            };
            if flip {
                r_o = -r_o;
            }
            Ok(RulingSample {
                p: s.p,
                n: s.n,
                q,
                r_t,
                r_o,
                inflection: s.principal.is_none_or(|pd| pd.kappa1.abs() < flat_kappa),
            })
        })
        .collect()
}

/// Ruling estimates for every patch of `problem` at its current state, as
/// `(patch index, sample)` pairs in patch order.
pub fn problem_rulings(problem: &Problem) -> Result<Vec<(usize, RulingSample)>> {
    let model = problem.model();
    let eps = degeneracy_eps(model.bbox_diagonal());
    let flat = 1e-6 / model.bbox_diagonal();
    let pts = model.control_points();
    let inputs: Vec<RulingInput> = problem
        .dev_rows()
        .iter()
        .map(|r| {
            let frame = PointFrame::with_eps(&r.point(pts), eps)?;
            Ok(RulingInput {
                p: frame.position,
                n: frame.normal,
                principal: principal(&frame).ok(),
            })
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (j, patch) in problem.patches().iter().enumerate() {
        let mine: Vec<RulingInput> = patch.sample_ids.iter().map(|&k| inputs[k]).collect();
        out.extend(induced_rulings(&mine, &patch.plane, flat)?.into_iter().map(|s| (j, s)));
    }
    Ok(out)
}

/// Gaussian curvature on a probe lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureMap {
    pub params: Vec<(f64, f64)>,
    /// `None` where the frame was degenerate.
    pub values: Vec<Option<f64>>,
    pub skipped: usize,
    /// Sorted `|K|` of the valid samples.
    sorted_abs: Vec<f64>,
}

impl CurvatureMap {
    pub fn from_frames(params: Vec<(f64, f64)>, frames: Vec<Result<PointFrame>>) -> Self {
        let values: Vec<Option<f64>> = frames
            .into_iter()
            .map(|f| f.and_then(|f| gaussian_curvature(&f)).ok().filter(|k| k.is_finite()))
            .collect();
        let mut sorted_abs: Vec<f64> = values.iter().flatten().map(|k| k.abs()).collect();
        sorted_abs.sort_by(f64::total_cmp);
        let skipped = values.len() - sorted_abs.len();
        Self {
            params,
            values,
            skipped,
            sorted_abs,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.sorted_abs.last().copied().unwrap_or(0.0)
    }

    /// Nearest-rank percentile of `|K|`, `pct` in `[0, 100]`.
    pub fn percentile_abs(&self, pct: f64) -> f64 {
        let n = self.sorted_abs.len();
        if n == 0 {
            return 0.0;
        }
        let rank = ((pct.clamp(0.0, 100.0) / 100.0) * n as f64).ceil() as usize;
        self.sorted_abs[rank.clamp(1, n) - 1]
    }
}

pub fn curvature_map(model: &SurfaceModel, params: &[(f64, f64)], parallel: bool) -> Result<CurvatureMap> {
    let eps = degeneracy_eps(model.bbox_diagonal());
    let points = par::map_slice(params, parallel, |&(u, v)| model.derivatives(u, v));
    let frames = points
        .into_iter()
        .map(|p| p.map(|p| PointFrame::with_eps(&p, eps)))
        .collect::<Result<Vec<_>>>()?;
    Ok(CurvatureMap::from_frames(params.to_vec(), frames))
}

/// Principal curvature data on a lattice; `None` at degenerate frames.
pub fn principal_field(model: &SurfaceModel, params: &[(f64, f64)]) -> Result<Vec<Option<PrincipalData>>> {
    let eps = degeneracy_eps(model.bbox_diagonal());
    params
        .iter()
        .map(|&(u, v)| {
            let p = model.derivatives(u, v)?;
            Ok(PointFrame::with_eps(&p, eps).and_then(|f| principal(&f)).ok())
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchPlane {
    pub patch_id: usize,
    pub v: Vec3,
    pub d: f64,
    /// Max `|n · v + d|` over the patch's samples.
    pub max_distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussImage {
    /// One unit normal per sample.
    pub points: Vec<Vec3>,
    pub planes: Vec<PatchPlane>,
    /// Max of `max_distance` over patches.
    pub thickness: f64,
}

pub fn gauss_image(normals: &[Vec3], patches: &[Patch]) -> GaussImage {
    let points: Vec<Vec3> = normals.iter().map(|n| n.normalize()).collect();
    let planes: Vec<PatchPlane> = patches
        .iter()
        .map(|p| PatchPlane {
            patch_id: p.id,
            v: p.plane.v,
            d: p.plane.d,
            max_distance: p.sample_ids.iter().map(|&k| p.plane.distance(&points[k]).abs()).fold(0.0, f64::max),
        })
        .collect();
    let thickness = planes.iter().map(|p| p.max_distance).fold(0.0, f64::max);
    GaussImage { points, planes, thickness }
}

/// Gauss image of a problem's samples at its current state.
pub fn problem_gauss_image(problem: &Problem) -> Result<GaussImage> {
    Ok(gauss_image(&problem.sample_normals()?, problem.patches()))
}
