//! Parameter lattices and the grouping of samples into patches.

use crate::surface::{SurfaceKind, SurfaceModel};
use crate::{Error, Result, Vec3};

/// Uniform `l_u x l_v` lattice on `[0, 1]²`, endpoints included, stored
/// row-major (`k = i * l_v + j`).
#[derive(Clone, Debug, PartialEq)]
pub struct SampleGrid {
    pub l_u: usize,
    pub l_v: usize,
    pub params: Vec<(f64, f64)>,
}

impl SampleGrid {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn id(&self, i: usize, j: usize) -> usize {
        i * self.l_v + j
    }
}

pub fn make_grid(l_u: usize, l_v: usize) -> Result<SampleGrid> {
    if l_u < 2 || l_v < 2 {
        return Err(Error::arg(format!("sample counts must be at least 2, got {l_u}x{l_v}")));
    }
    let coord = |i: usize, l: usize| if i + 1 == l { 1.0 } else { i as f64 / (l - 1) as f64 };
    let params = (0..l_u)
        .flat_map(|i| (0..l_v).map(move |j| (coord(i, l_u), coord(j, l_v))))
        .collect();
    Ok(SampleGrid { l_u, l_v, params })
}

/// Target plane `v · x + d = 0` of a patch Gauss image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane {
    pub v: Vec3,
    pub d: f64,
}

impl Plane {
    pub fn new(v: Vec3, d: f64) -> Self {
        Self { v, d }
    }

    pub fn distance(&self, n: &Vec3) -> f64 {
        self.v.dot(n) + self.d
    }

    /// Distance of the plane from the origin, `|d| / ‖v‖`.
    pub fn origin_distance(&self) -> f64 {
        self.d.abs() / self.v.norm()
    }
}

impl Default for Plane {
    fn default() -> Self {
        Self { v: Vec3::z(), d: 0.0 }
    }
}

/// A group of samples whose normals share one target plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub id: usize,
    pub sample_ids: Vec<usize>,
    pub plane: Plane,
    /// Moment of the rotation axis `(v, v̄)`; present on rotational patches.
    pub axis_moment: Option<Vec3>,
    /// Prescribed plane offset.
    pub d_target: Option<f64>,
    /// When set, `d` is held at `d_target` and is not a variable.
    pub d_fixed: bool,
    pub rotational: bool,
}

impl Patch {
    pub fn new(id: usize, sample_ids: Vec<usize>) -> Self {
        Self {
            id,
            sample_ids,
            plane: Plane::default(),
            axis_moment: None,
            d_target: None,
            d_fixed: false,
            rotational: false,
        }
    }
}

/// Start offsets of windows of `size` with stride `size - overlap` that cover
/// `0..len`; the last window is shifted inward to end at `len`.
fn window_starts(len: usize, size: usize, overlap: usize) -> Vec<usize> {
    let stride = size - overlap;
    let count = (len - size).div_ceil(stride) + 1;
    (0..count).map(|l| (l * stride).min(len - size)).collect()
}

/// Tiles the grid with overlapping `size_u x size_v` windows.
pub fn group_overlapping(grid: &SampleGrid, size_u: usize, size_v: usize, overlap_u: usize, overlap_v: usize) -> Result<Vec<Patch>> {
    if overlap_u < 1 || overlap_v < 1 || size_u <= overlap_u || size_v <= overlap_v {
        return Err(Error::arg(format!(
            "patch size must exceed overlap >= 1 (size {size_u}x{size_v}, overlap {overlap_u}x{overlap_v})"
        )));
    }
    if size_u > grid.l_u || size_v > grid.l_v {
        return Err(Error::arg(format!(
            "patch {size_u}x{size_v} larger than sample grid {}x{}",
            grid.l_u, grid.l_v
        )));
    }
    let starts_u = window_starts(grid.l_u, size_u, overlap_u);
    let starts_v = window_starts(grid.l_v, size_v, overlap_v);
    let mut patches = Vec::with_capacity(starts_u.len() * starts_v.len());
    for &su in &starts_u {
        for &sv in &starts_v {
            let ids = (su..su + size_u)
                .flat_map(|i| (sv..sv + size_v).map(move |j| grid.id(i, j)))
                .collect();
            patches.push(Patch::new(patches.len(), ids));
        }
    }
    Ok(patches)
}

/// Per-panel sampling: the sample parameters and one patch per panel.
#[derive(Clone, Debug, PartialEq)]
pub struct PanelSampling {
    pub params: Vec<(f64, f64)>,
    pub patches: Vec<Patch>,
}

/// Parameters strictly inside each panel's rectangle, `per_panel.0 x
/// per_panel.1` per panel, panel after panel.
pub fn panel_params(model: &SurfaceModel, per_panel: (usize, usize)) -> Result<Vec<Vec<(f64, f64)>>> {
    let (lu, lv) = per_panel;
    if lu == 0 || lv == 0 {
        return Err(Error::arg("per-panel sample counts must be positive"));
    }
    Ok((0..model.panel_count())
        .map(|r| {
            let ([u0, u1], [v0, v1]) = model.panel_domain(r);
            (0..lu)
                .flat_map(|i| {
                    (0..lv).map(move |j| {
                        let s = (i + 1) as f64 / (lu + 1) as f64;
                        let t = (j + 1) as f64 / (lv + 1) as f64;
                        (u0 + s * (u1 - u0), v0 + t * (v1 - v0))
                    })
                })
                .collect()
        })
        .collect())
}

pub fn group_by_panel(model: &SurfaceModel, per_panel: (usize, usize)) -> Result<PanelSampling> {
    if !matches!(model.kind(), SurfaceKind::PanelGrid { .. }) {
        return Err(Error::arg("per-panel grouping needs a panel-grid surface"));
    }
    let per = panel_params(model, per_panel)?;
    let mut params = Vec::new();
    let mut patches = Vec::with_capacity(per.len());
    for (r, ps) in per.into_iter().enumerate() {
        let ids = (params.len()..params.len() + ps.len()).collect();
        params.extend(ps);
        patches.push(Patch::new(r, ids));
    }
    Ok(PanelSampling { params, patches })
}
