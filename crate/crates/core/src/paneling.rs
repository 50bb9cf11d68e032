//! Reference fitting, patch initialization and the two optimization
//! pipelines: Gauss-image thinning of one surface (`develop`) and paneling of
//! a reference with a grid of developable Bézier panels (`panelize`).
//!
//! A panel type fixes the offset `d` of its Gauss-image plane: a plane
//! panel has `d = 1`, a cylinder of revolution `d = 0`, and a cone of
//! revolution whose rulings meet the axis at angle `φ` has `d = sin φ`.

use std::fmt;

use nalgebra::{Matrix3, SymmetricEigen};

use crate::diffgeo::{degeneracy_eps, gaussian_curvature, principal, PointFrame};
use crate::energy::{EnergyWeights, MomentMode, Problem};
use crate::init::{axis_point, init_axis_moment, init_plane, normal_line, PlaneFitProblem};
use crate::kdtree::ReferenceCloud;
use crate::sampling::{group_by_panel, group_overlapping, make_grid, panel_params, Patch};
use crate::solver::{optimize, IterationRecord, SolveReport, SolverConfig};
use crate::surface::{build_panel_grid, precompute_rows, ControlGrid, Quantity, SurfaceKind, SurfaceModel};
use crate::{Error, Result, Vec3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PanelType {
    FreeDevelopable,
    Cylinder,
    /// Cone of revolution; the angle between rulings and axis in degrees, or
    /// `None` to leave it to the optimization.
    Cone(Option<f64>),
    Plane,
}

impl PanelType {
    /// Prescribed plane offset, or `None` when `d` stays free.
    pub fn d_target(&self) -> Result<Option<f64>> {
        match *self {
            PanelType::FreeDevelopable | PanelType::Cone(None) => Ok(None),
            PanelType::Cylinder => Ok(Some(0.0)),
            PanelType::Plane => Ok(Some(1.0)),
            PanelType::Cone(Some(deg)) => {
                if !(deg > 0.0 && deg < 90.0) {
                    return Err(Error::arg(format!("cone angle must lie in (0, 90) degrees, got {deg}")));
                }
                Ok(Some(deg.to_radians().sin()))
            }
        }
    }

    pub fn rotational(&self) -> bool {
        matches!(self, PanelType::Cylinder | PanelType::Cone(_))
    }
}

impl fmt::Display for PanelType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PanelType::FreeDevelopable => write!(f, "free"),
            PanelType::Cylinder => write!(f, "cylinder"),
            PanelType::Cone(None) => write!(f, "cone"),
            PanelType::Cone(Some(deg)) => write!(f, "cone:{deg}"),
            PanelType::Plane => write!(f, "plane"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PanelSpec {
    pub panel: usize,
    pub kind: PanelType,
}

impl PanelSpec {
    pub fn new(panel: usize, kind: PanelType) -> Self {
        Self { panel, kind }
    }
}

/// Same type for every panel.
pub fn uniform_specs(count: usize, kind: PanelType) -> Vec<PanelSpec> {
    (0..count).map(|r| PanelSpec::new(r, kind)).collect()
}

/// Sets `d_target`, `d_fixed` and `rotational` of each panel patch.
pub fn apply_panel_spec(mut patches: Vec<Patch>, specs: &[PanelSpec]) -> Result<Vec<Patch>> {
    let mut seen = vec![false; patches.len()];
    for s in specs {
        if s.panel >= patches.len() {
            return Err(Error::arg(format!("spec for panel {} but only {} panels", s.panel, patches.len())));
        }
        if std::mem::replace(&mut seen[s.panel], true) {
            return Err(Error::arg(format!("panel {} specified twice", s.panel)));
        }
        let p = &mut patches[s.panel];
        p.d_target = s.kind.d_target()?;
        p.d_fixed = p.d_target.is_some();
        p.rotational = s.kind.rotational();
        if let Some(d) = p.d_target {
            p.plane.d = d;
        }
    }
    if let Some(r) = seen.iter().position(|s| !s) {
        return Err(Error::arg(format!("panel {r} has no spec")));
    }
    Ok(patches)
}

/// Initializes the plane (and axis moment of rotational patches) of every
/// patch from the principal data of `model` at `params`.
pub fn initialize_patches(model: &SurfaceModel, params: &[(f64, f64)], patches: &mut [Patch]) -> Result<()> {
    let eps = degeneracy_eps(model.bbox_diagonal());
    let rows = precompute_rows(model, params)?;
    let pts = model.control_points();
    let mut data = Vec::with_capacity(rows.len());
    for r in &rows {
        let frame =
            PointFrame::with_eps(&r.point(pts), eps).map_err(|e| Error::Initialization(format!("sample ({}, {}): {e}", r.u, r.v)))?;
        let pd = principal(&frame).map_err(|e| Error::Initialization(format!("sample ({}, {}): {e}", r.u, r.v)))?;
        data.push((frame, pd));
    }
    for p in patches.iter_mut() {
        let problem = PlaneFitProblem {
            directions: p.sample_ids.iter().map(|&k| (data[k].1.q1, data[k].1.weight)).collect(),
            normals: p.sample_ids.iter().map(|&k| data[k].0.normal).collect(),
        };
        let init = init_plane(&problem)?;
        p.plane = init.plane;
        if let Some(d) = p.d_target {
            // a prescribed offset d > 0 needs n · v ≈ -d
            let mean: Vec3 = problem.normals.iter().sum();
            if d > 0.0 && p.plane.v.dot(&mean) > 0.0 {
                p.plane.v = -p.plane.v;
            }
            p.plane.d = d;
        }
        if p.rotational {
            let lines: Vec<(Vec3, Vec3)> = p
                .sample_ids
                .iter()
                .map(|&k| normal_line(&data[k].0.position, &data[k].0.normal))
                .collect();
            p.axis_moment = Some(init_axis_moment(&lines, &p.plane.v)?.moment);
        }
    }
    Ok(())
}

/// Closeness sample parameters: `per_panel` per panel on panel grids, an
/// endpoint-inclusive lattice on single surfaces.
pub fn closeness_params(model: &SurfaceModel, per_panel: (usize, usize)) -> Result<Vec<(f64, f64)>> {
    match model.kind() {
        SurfaceKind::PanelGrid { .. } => Ok(panel_params(model, per_panel)?.into_iter().flatten().collect()),
        SurfaceKind::BSpline => Ok(make_grid(per_panel.0, per_panel.1)?.params),
    }
}

/// Flat `rows x cols` control grid spanning the reference's projection onto
/// its two principal axes, oriented like the reference normals.
pub fn pca_seed(reference: &ReferenceCloud, rows: usize, cols: usize) -> Result<ControlGrid> {
    let pts = reference.points();
    let c: Vec3 = pts.iter().sum::<Vec3>() / pts.len() as f64;
    let cov = pts.iter().fold(Matrix3::zeros(), |acc, p| acc + (p - c) * (p - c).transpose());
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let e1: Vec3 = eig.eigenvectors.column(order[0]).into();
    let mut e2: Vec3 = eig.eigenvectors.column(order[1]).into();
    let mean_n: Vec3 = reference.normals().iter().sum();
    if e1.cross(&e2).dot(&mean_n) < 0.0 {
        e2 = -e2;
    }
    let range = |e: &Vec3| {
        pts.iter()
            .map(|p| (p - c).dot(e))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| (lo.min(t), hi.max(t)))
    };
    let (a0, a1) = range(&e1);
    let (b0, b1) = range(&e2);
    if !(a1 > a0 && b1 > b0) {
        return Err(Error::Initialization("reference points do not span a surface".into()));
    }
    ControlGrid::from_fn(rows, cols, |i, j| {
        let s = i as f64 / (rows - 1) as f64;
        let t = j as f64 / (cols - 1) as f64;
        c + e1 * (a0 + s * (a1 - a0)) + e2 * (b0 + t * (b1 - b0))
    })
}

#[derive(Clone, Debug)]
pub struct FitReport {
    pub model: SurfaceModel,
    pub history: Vec<IterationRecord>,
    /// Root mean square tangential distance per logged iteration.
    pub rms: Vec<f64>,
}

/// Fits `model` to the reference with closeness and fairness only.
pub fn fit_to_reference(
    model: SurfaceModel,
    reference: &ReferenceCloud,
    params: &[(f64, f64)],
    w_c: f64,
    w_f: f64,
    config: &SolverConfig,
    parallel: bool,
) -> Result<FitReport> {
    let weights = EnergyWeights {
        w_d: 0.0,
        ..EnergyWeights::new(0.0, 0.0, w_c, w_f)
    };
    let mut problem = Problem::new(model, &[], Vec::new(), weights)?
        .with_closeness(params, reference.clone())?
        .with_parallel(parallel);
    let report = optimize(&mut problem, config)?;
    let n = params.len().max(1) as f64;
    let rms = report.history.iter().map(|h| (h.e_c / n).sqrt()).collect();
    Ok(FitReport {
        model: problem.model().clone(),
        history: report.history,
        rms,
    })
}

/// Per-panel diagnostics after paneling.
#[derive(Clone, Debug, PartialEq)]
pub struct PanelReport {
    pub panel: usize,
    pub kind: PanelType,
    pub v: Vec3,
    pub d: f64,
    /// `|d| / ‖v‖`.
    pub distance: f64,
    /// Axis direction (unit) and the axis point closest to the origin.
    pub axis: Option<(Vec3, Vec3)>,
    /// Max `|n · v + d|` over the panel's samples.
    pub max_plane_distance: f64,
    /// Max `|v · (p × n) + n · v̄|` over the samples of rotational panels.
    pub max_coplanarity: f64,
    /// Max `|K|` over a probe lattice inside the panel.
    pub max_abs_k: f64,
}

#[derive(Clone, Debug)]
pub struct PanelizeOptions {
    pub dev_per_panel: (usize, usize),
    pub closeness_per_panel: (usize, usize),
    pub fit_iterations: usize,
    pub fit_w_c: f64,
    pub fit_w_f: f64,
    pub moment_mode: MomentMode,
    /// Initial control net; `None` uses a flat grid over the reference.
    pub seed: Option<ControlGrid>,
    pub probe_per_panel: (usize, usize),
    pub parallel: bool,
}

impl Default for PanelizeOptions {
    fn default() -> Self {
        Self {
            dev_per_panel: (4, 4),
            closeness_per_panel: (10, 10),
            fit_iterations: 20,
            fit_w_c: 1.0,
            // tangential distance is blind to sliding; any fairness pull
            // then shrinks the net, so fitting runs on closeness alone
            fit_w_f: 0.0,
            moment_mode: MomentMode::Variable,
            seed: None,
            probe_per_panel: (10, 10),
            parallel: crate::par::available(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PanelizeResult {
    pub problem: Problem,
    pub fit: FitReport,
    pub solve: SolveReport,
    pub panels: Vec<PanelReport>,
}

/// Builds, fits and optimizes a `rows x cols` panel grid toward the types
/// in `specs`.
pub fn panelize(
    reference: &ReferenceCloud,
    rows: usize,
    cols: usize,
    specs: &[PanelSpec],
    weights: EnergyWeights,
    config: &SolverConfig,
    options: &PanelizeOptions,
) -> Result<PanelizeResult> {
    let (mut problem, fit) = paneling_problem(reference, rows, cols, specs, weights, config, options)?;
    let solve = optimize(&mut problem, config)?;
    let panels = panel_reports(&problem, specs, options.probe_per_panel)?;
    Ok(PanelizeResult {
        problem,
        fit,
        solve,
        panels,
    })
}

/// The fitting stage of [`panelize`]: returns the paneling problem ready
/// for optimization and the fit report.
pub fn paneling_problem(
    reference: &ReferenceCloud,
    rows: usize,
    cols: usize,
    specs: &[PanelSpec],
    weights: EnergyWeights,
    config: &SolverConfig,
    options: &PanelizeOptions,
) -> Result<(Problem, FitReport)> {
    let seed = match &options.seed {
        Some(s) => s.clone(),
        None => pca_seed(reference, 3 * rows + 1, 3 * cols + 1)?,
    };
    let model = build_panel_grid(rows, cols, seed)?;
    let close = closeness_params(&model, options.closeness_per_panel)?;
    let fit_config = SolverConfig {
        max_iterations: options.fit_iterations,
        ..config.clone()
    };
    let fit = fit_to_reference(
        model,
        reference,
        &close,
        options.fit_w_c,
        options.fit_w_f,
        &fit_config,
        options.parallel,
    )?;
    let sampling = group_by_panel(&fit.model, options.dev_per_panel)?;
    let mut patches = apply_panel_spec(sampling.patches, specs)?;
    initialize_patches(&fit.model, &sampling.params, &mut patches)?;
    let problem = Problem::new(fit.model.clone(), &sampling.params, patches, weights)?
        .with_closeness(&close, reference.clone())?
        .with_moment_mode(options.moment_mode)?
        .with_parallel(options.parallel);
    Ok((problem, fit))
}

/// Diagnostics for every panel of a paneling problem at its current state.
pub fn panel_reports(problem: &Problem, specs: &[PanelSpec], probe: (usize, usize)) -> Result<Vec<PanelReport>> {
    let model = problem.model();
    let normals = problem.sample_normals()?;
    let positions = problem.sample_positions();
    let probes = panel_params(model, probe)?;
    let eps = degeneracy_eps(model.bbox_diagonal());
    let mut out = Vec::with_capacity(problem.patches().len());
    for (j, p) in problem.patches().iter().enumerate() {
        let (v, d) = (p.plane.v, p.plane.d);
        let vbar = p.axis_moment.filter(|_| p.rotational);
        let mut max_plane: f64 = 0.0;
        let mut max_cop: f64 = 0.0;
        for &k in &p.sample_ids {
            let n = normals[k];
            max_plane = max_plane.max((n.dot(&v) + d).abs());
            if let Some(m) = vbar {
                max_cop = max_cop.max((v.dot(&positions[k].cross(&n)) + n.dot(&m)).abs());
            }
        }
        let mut max_k: f64 = 0.0;
        for &(u, w) in &probes[j] {
            if let Ok(frame) = PointFrame::with_eps(&model.derivatives(u, w)?, eps) {
                if let Ok(k) = gaussian_curvature(&frame) {
                    max_k = max_k.max(k.abs());
                }
            }
        }
        let kind = specs.iter().find(|s| s.panel == j).map_or(PanelType::FreeDevelopable, |s| s.kind);
        out.push(PanelReport {
            panel: j,
            kind,
            v,
            d,
            distance: d.abs() / v.norm(),
            axis: vbar.map(|m| (v.normalize(), axis_point(&v, &m))),
            max_plane_distance: max_plane,
            max_coplanarity: max_cop,
            max_abs_k: max_k,
        });
    }
    Ok(out)
}

/// Sampling and patching of a single surface for Gauss-image thinning.
#[derive(Clone, Debug, PartialEq)]
pub struct DevelopSetup {
    pub samples: (usize, usize),
    pub patch_size: (usize, usize),
    pub overlap: (usize, usize),
    pub closeness_samples: (usize, usize),
    pub parallel: bool,
}

impl Default for DevelopSetup {
    fn default() -> Self {
        Self {
            samples: (30, 60),
            patch_size: (5, 5),
            overlap: (2, 2),
            closeness_samples: (30, 60),
            parallel: crate::par::available(),
        }
    }
}

/// Samples `model`, groups overlapping patches, initializes their planes
/// and returns the ready problem. Closeness targets `reference`, or the
/// initial surface itself when none is given.
pub fn develop_problem(
    model: SurfaceModel,
    reference: Option<ReferenceCloud>,
    setup: &DevelopSetup,
    weights: EnergyWeights,
) -> Result<Problem> {
    let grid = make_grid(setup.samples.0, setup.samples.1)?;
    let mut patches = group_overlapping(&grid, setup.patch_size.0, setup.patch_size.1, setup.overlap.0, setup.overlap.1)?;
    initialize_patches(&model, &grid.params, &mut patches)?;
    let close = make_grid(setup.closeness_samples.0, setup.closeness_samples.1)?.params;
    let reference = match reference {
        Some(r) => r,
        None => sample_reference(&model, setup.closeness_samples)?,
    };
    Problem::new(model, &grid.params, patches, weights)?
        .with_closeness(&close, reference)
        .map(|p| p.with_parallel(setup.parallel))
}

/// Points and exact normals of `model` on an endpoint-inclusive lattice.
pub fn sample_reference(model: &SurfaceModel, lattice: (usize, usize)) -> Result<ReferenceCloud> {
    let grid = make_grid(lattice.0, lattice.1)?;
    let rows = precompute_rows(model, &grid.params)?;
    let pts = model.control_points();
    let eps = degeneracy_eps(model.bbox_diagonal());
    let mut points = Vec::with_capacity(rows.len());
    let mut normals = Vec::with_capacity(rows.len());
    for r in &rows {
        points.push(r.eval(Quantity::Value, pts));
        normals.push(crate::diffgeo::unit_normal_guarded(
            &r.eval(Quantity::Du, pts),
            &r.eval(Quantity::Dv, pts),
            None,
            eps,
        )?);
    }
    ReferenceCloud::new(points, normals)
}
