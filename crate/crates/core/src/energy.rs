//! Residual blocks, variable layout and assembly of the stacked
//! least-squares system.
//!
//! Every residual is evaluated against a frozen [`Linearization`] holding the
//! lagged normal lengths, closest-point assignments and (in refit mode) axis
//! moments of the current iterate. With those frozen, developability and
//! rotationality residuals are polynomial in the variables and the Jacobian
//! below is exact.

use crate::diffgeo::degeneracy_eps;
use crate::init::{init_axis_moment, normal_line};
use crate::kdtree::ReferenceCloud;
use crate::par;
use crate::sampling::Patch;
use crate::surface::{precompute_rows, Quantity, SampleRows, SurfaceModel};
use crate::{Error, Result, Vec3};

/// Weights of the energy terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyWeights {
    pub w_d: f64,
    pub w_r: f64,
    pub w_c: f64,
    pub w_f: f64,
    pub w_f1: f64,
    pub w_f2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        Self {
            w_d: 1.0,
            w_r: 0.0,
            w_c: 0.0,
            w_f: 0.0,
            w_f1: 0.0,
            w_f2: 1.0,
            lambda1: 1.0,
            lambda2: 1.0,
        }
    }
}

impl EnergyWeights {
    pub fn new(w_d: f64, w_r: f64, w_c: f64, w_f: f64) -> Self {
        Self {
            w_d,
            w_r,
            w_c,
            w_f,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("w_d", self.w_d),
            ("w_r", self.w_r),
            ("w_c", self.w_c),
            ("w_f", self.w_f),
            ("w_f1", self.w_f1),
            ("w_f2", self.w_f2),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
        ];
        for (name, w) in all {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::arg(format!("weight {name} must be finite and >= 0, got {w}")));
            }
        }
        Ok(())
    }
}

/// How axis moments of rotational patches are updated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MomentMode {
    /// Moments are optimization variables.
    #[default]
    Variable,
    /// Moments are refit by least squares at every linearization.
    Refit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BlockKind {
    Developability,
    UnitLength,
    Coplanarity,
    Pluecker,
    Closeness,
    Fairness1,
    Fairness2,
}

/// Compressed sparse rows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseRows {
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseRows {
    pub fn new() -> Self {
        Self {
            row_ptr: vec![0],
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    /// Appends one row.
    pub fn push_row(&mut self, entries: &[(usize, f64)]) {
        for &(c, v) in entries {
            self.push_entry(c, v);
        }
        self.end_row();
    }

    fn push_entry(&mut self, col: usize, val: f64) {
        self.cols.push(col);
        self.vals.push(val);
    }

    fn end_row(&mut self) {
        self.row_ptr.push(self.cols.len());
    }

    fn append(&mut self, other: &SparseRows, scale: f64) {
        let base = self.cols.len();
        self.cols.extend_from_slice(&other.cols);
        self.vals.extend(other.vals.iter().map(|v| v * scale));
        self.row_ptr.extend(other.row_ptr[1..].iter().map(|p| p + base));
    }

    /// Dense copy, for tests and small systems.
    pub fn to_dense(&self, n_cols: usize) -> Vec<Vec<f64>> {
        (0..self.rows())
            .map(|i| {
                let mut row = vec![0.0; n_cols];
                let (c, v) = self.row(i);
                for (&c, &v) in c.iter().zip(v) {
                    row[c] += v;
                }
                row
            })
            .collect()
    }
}

/// Unweighted residuals of one energy term and their Jacobian rows.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualBlock {
    pub kind: BlockKind,
    pub values: Vec<f64>,
    pub jacobian: SparseRows,
}

impl ResidualBlock {
    pub fn new(kind: BlockKind) -> Self {
        Self {
            kind,
            values: Vec::new(),
            jacobian: SparseRows::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|r| r * r).sum()
    }

    fn push(&mut self, value: f64) {
        self.values.push(value);
        self.jacobian.end_row();
    }

    fn extend(&mut self, other: ResidualBlock) {
        self.values.extend_from_slice(&other.values);
        self.jacobian.append(&other.jacobian, 1.0);
    }
}

/// Slot assignment of the variable vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VariableLayout {
    ctrl: Vec<Option<usize>>,
    v: Vec<usize>,
    d: Vec<Option<usize>>,
    moment: Vec<Option<usize>>,
    len: usize,
}

impl VariableLayout {
    pub fn new(n_ctrl: usize, fixed: &[bool], patches: &[Patch], mode: MomentMode) -> Result<Self> {
        if fixed.len() != n_ctrl {
            return Err(Error::Contract(format!(
                "fixed mask has {} entries for {n_ctrl} control points",
                fixed.len()
            )));
        }
        let mut next = 0;
        let ctrl = fixed
            .iter()
            .map(|&f| {
                (!f).then(|| {
                    next += 3;
                    next - 3
                })
            })
            .collect();
        let (mut v, mut d, mut moment) = (Vec::new(), Vec::new(), Vec::new());
        for p in patches {
            v.push(next);
            next += 3;
            d.push((!p.d_fixed).then(|| {
                next += 1;
                next - 1
            }));
            moment.push((p.rotational && mode == MomentMode::Variable).then(|| {
                next += 3;
                next - 3
            }));
        }
        Ok(Self {
            ctrl,
            v,
            d,
            moment,
            len: next,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn ctrl(&self, i: usize) -> Option<usize> {
        self.ctrl[i]
    }

    pub fn free_ctrl_count(&self) -> usize {
        self.ctrl.iter().flatten().count()
    }

    pub fn v(&self, patch: usize) -> usize {
        self.v[patch]
    }

    pub fn d(&self, patch: usize) -> Option<usize> {
        self.d[patch]
    }

    pub fn moment(&self, patch: usize) -> Option<usize> {
        self.moment[patch]
    }

    /// Slot of control-point coordinate `c`, if the point is free.
    pub fn ctrl_coord(&self, i: usize, c: usize) -> Option<usize> {
        self.ctrl[i].map(|s| s + c)
    }
}

/// Per-iteration frozen data.
#[derive(Clone, Debug, PartialEq)]
pub struct Linearization {
    /// `‖S_u × S_v‖` per developability sample.
    pub lag: Vec<f64>,
    /// Closest reference point and its normal per closeness sample.
    pub targets: Vec<(Vec3, Vec3)>,
    /// Refit axis moments per patch (refit mode, rotational patches only).
    pub moments: Vec<Option<Vec3>>,
}

/// Unweighted energy terms and the weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Energies {
    pub e_d: f64,
    pub e_r: f64,
    pub e_c: f64,
    pub e_f: f64,
    pub total: f64,
}

/// Stacked, weighted residual vector and Jacobian.
#[derive(Clone, Debug)]
pub struct Assembled {
    pub r: Vec<f64>,
    pub jacobian: SparseRows,
    pub energies: Energies,
}

impl Assembled {
    pub fn norm_sq(&self) -> f64 {
        self.r.iter().map(|x| x * x).sum()
    }
}

#[derive(Clone, Debug)]
struct Closeness {
    rows: Vec<SampleRows>,
    reference: ReferenceCloud,
}

/// Decoded variable vector.
#[derive(Clone, Debug)]
pub struct State {
    pub points: Vec<Vec3>,
    pub v: Vec<Vec3>,
    pub d: Vec<f64>,
    /// Variable moments only; refit moments live in the linearization.
    pub moment: Vec<Option<Vec3>>,
}

/// Position, partials and lagged normal of a developability sample.
#[derive(Clone, Copy, Debug)]
struct SampleEval {
    p: Vec3,
    su: Vec3,
    sv: Vec3,
    n: Vec3,
}

/// One optimization problem: the surface, its samples and patches, the
/// optional closeness reference and the weights.
#[derive(Clone, Debug)]
pub struct Problem {
    model: SurfaceModel,
    dev_rows: Vec<SampleRows>,
    patches: Vec<Patch>,
    closeness: Option<Closeness>,
    weights: EnergyWeights,
    fixed: Vec<bool>,
    moment_mode: MomentMode,
    parallel: bool,
    layout: VariableLayout,
}

impl Problem {
    pub fn new(model: SurfaceModel, dev_params: &[(f64, f64)], mut patches: Vec<Patch>, weights: EnergyWeights) -> Result<Self> {
        weights.validate()?;
        let dev_rows = precompute_rows(&model, dev_params)?;
        for p in &mut patches {
            if p.sample_ids.is_empty() {
                return Err(Error::Contract(format!("patch {} has no samples", p.id)));
            }
            if let Some(&k) = p.sample_ids.iter().find(|&&k| k >= dev_rows.len()) {
                return Err(Error::Contract(format!(
                    "patch {} refers to sample {k} of {}",
                    p.id,
                    dev_rows.len()
                )));
            }
            if p.d_fixed {
                p.plane.d = p
                    .d_target
                    .ok_or_else(|| Error::Contract(format!("patch {} has a fixed d without a target", p.id)))?;
            }
        }
        let n_ctrl = model.control().len();
        let fixed = vec![false; n_ctrl];
        let layout = VariableLayout::new(n_ctrl, &fixed, &patches, MomentMode::Variable)?;
        let mut problem = Self {
            model,
            dev_rows,
            patches,
            closeness: None,
            weights,
            fixed,
            moment_mode: MomentMode::Variable,
            parallel: par::available(),
            layout,
        };
        problem.check_moments()?;
        Ok(problem)
    }

    fn check_moments(&mut self) -> Result<()> {
        if self.moment_mode == MomentMode::Variable {
            for p in &mut self.patches {
                if p.rotational && p.axis_moment.is_none() {
                    return Err(Error::Contract(format!("rotational patch {} has no axis moment", p.id)));
                }
            }
        }
        Ok(())
    }

    fn relayout(&mut self) -> Result<()> {
        self.layout = VariableLayout::new(self.model.control().len(), &self.fixed, &self.patches, self.moment_mode)?;
        Ok(())
    }

    /// Adds the closeness term over samples at `params`.
    pub fn with_closeness(mut self, params: &[(f64, f64)], reference: ReferenceCloud) -> Result<Self> {
        if reference.is_empty() {
            return Err(Error::arg("closeness reference is empty"));
        }
        let rows = precompute_rows(&self.model, params)?;
        self.closeness = Some(Closeness { rows, reference });
        Ok(self)
    }

    pub fn with_fixed(mut self, fixed: Vec<bool>) -> Result<Self> {
        self.fixed = fixed;
        self.relayout()?;
        Ok(self)
    }

    pub fn with_moment_mode(mut self, mode: MomentMode) -> Result<Self> {
        self.moment_mode = mode;
        self.check_moments()?;
        self.relayout()?;
        Ok(self)
    }

    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn set_weights(&mut self, weights: EnergyWeights) -> Result<()> {
        weights.validate()?;
        self.weights = weights;
        Ok(())
    }

    pub fn model(&self) -> &SurfaceModel {
        &self.model
    }

    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    pub fn weights(&self) -> &EnergyWeights {
        &self.weights
    }

    pub fn layout(&self) -> &VariableLayout {
        &self.layout
    }

    pub fn moment_mode(&self) -> MomentMode {
        self.moment_mode
    }

    pub fn parallel(&self) -> bool {
        self.parallel
    }

    pub fn dev_rows(&self) -> &[SampleRows] {
        &self.dev_rows
    }

    pub fn closeness_rows(&self) -> Option<&[SampleRows]> {
        self.closeness.as_ref().map(|c| c.rows.as_slice())
    }

    pub fn reference(&self) -> Option<&ReferenceCloud> {
        self.closeness.as_ref().map(|c| &c.reference)
    }

    /// Current variable vector.
    pub fn pack(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.layout.len()];
        for (i, p) in self.model.control_points().iter().enumerate() {
            if let Some(s) = self.layout.ctrl(i) {
                x[s..s + 3].copy_from_slice(p.as_slice());
            }
        }
        for (j, p) in self.patches.iter().enumerate() {
            let s = self.layout.v(j);
            x[s..s + 3].copy_from_slice(p.plane.v.as_slice());
            if let Some(s) = self.layout.d(j) {
                x[s] = p.plane.d;
            }
            if let (Some(s), Some(m)) = (self.layout.moment(j), p.axis_moment) {
                x[s..s + 3].copy_from_slice(m.as_slice());
            }
        }
        x
    }

    pub fn decode(&self, x: &[f64]) -> Result<State> {
        if x.len() != self.layout.len() {
            return Err(Error::Contract(format!(
                "variable vector has {} entries, layout {}",
                x.len(),
                self.layout.len()
            )));
        }
        let v3 = |s: usize| Vec3::new(x[s], x[s + 1], x[s + 2]);
        let points = self
            .model
            .control_points()
            .iter()
            .enumerate()
            .map(|(i, p)| self.layout.ctrl(i).map_or(*p, v3))
            .collect();
        let mut v = Vec::with_capacity(self.patches.len());
        let mut d = Vec::with_capacity(self.patches.len());
        let mut moment = Vec::with_capacity(self.patches.len());
        for (j, p) in self.patches.iter().enumerate() {
            v.push(v3(self.layout.v(j)));
            d.push(self.layout.d(j).map_or(p.plane.d, |s| x[s]));
            moment.push(self.layout.moment(j).map(v3));
        }
        Ok(State { points, v, d, moment })
    }

    /// Writes `x` (and refit moments from `lin`) back into the model and patches.
    pub fn set_state(&mut self, x: &[f64], lin: Option<&Linearization>) -> Result<()> {
        let s = self.decode(x)?;
        self.model.set_control_points(&s.points)?;
        for (j, p) in self.patches.iter_mut().enumerate() {
            p.plane.v = s.v[j];
            p.plane.d = s.d[j];
            if let Some(m) = s.moment[j] {
                p.axis_moment = Some(m);
            } else if let Some(m) = lin.and_then(|l| l.moments.get(j).copied().flatten()) {
                p.axis_moment = Some(m);
            }
        }
        Ok(())
    }

    /// Freezes lagged norms, closest points and refit moments at `x`.
    pub fn linearize(&self, x: &[f64]) -> Result<Linearization> {
        let state = self.decode(x)?;
        let eps = degeneracy_eps(self.model.bbox_diagonal());
        let pts = &state.points;
        let lag: Vec<f64> = par::map_slice(&self.dev_rows, self.parallel, |r| {
            r.eval(Quantity::Du, pts).cross(&r.eval(Quantity::Dv, pts)).norm()
        });
        if let Some((k, l)) = lag.iter().enumerate().find(|(_, l)| l.is_nan() || **l <= eps || !l.is_finite()) {
            let (u, v) = (self.dev_rows[k].u, self.dev_rows[k].v);
            return Err(Error::DegenerateParameterization(format!(
                "|S_u x S_v| = {l:e} at sample {k} (u = {u}, v = {v})"
            )));
        }
        let targets = match &self.closeness {
            Some(c) => par::map_slice(&c.rows, self.parallel, |r| {
                let (_, x, n) = c.reference.closest(&r.eval(Quantity::Value, pts));
                (x, n)
            }),
            None => Vec::new(),
        };
        let moments = if self.moment_mode == MomentMode::Refit {
            let out = par::map_range(self.patches.len(), self.parallel, |j| -> Result<Option<Vec3>> {
                let p = &self.patches[j];
                if !p.rotational {
                    return Ok(None);
                }
                let lines: Vec<(Vec3, Vec3)> = p
                    .sample_ids
                    .iter()
                    .map(|&k| {
                        let r = &self.dev_rows[k];
                        let n = r.eval(Quantity::Du, pts).cross(&r.eval(Quantity::Dv, pts)) / lag[k];
                        normal_line(&r.eval(Quantity::Value, pts), &n)
                    })
                    .collect();
                Ok(Some(init_axis_moment(&lines, &state.v[j])?.moment))
            });
            out.into_iter().collect::<Result<Vec<_>>>()?
        } else {
            vec![None; self.patches.len()]
        };
        Ok(Linearization { lag, targets, moments })
    }

    fn check_lin(&self, lin: &Linearization) -> Result<()> {
        if lin.lag.len() != self.dev_rows.len() {
            return Err(Error::Contract("missing lagged norms for developability samples".into()));
        }
        let nc = self.closeness.as_ref().map_or(0, |c| c.rows.len());
        if lin.targets.len() != nc {
            return Err(Error::Contract("closest-point assignment out of date".into()));
        }
        if lin.moments.len() != self.patches.len() {
            return Err(Error::Contract("moment table does not match patches".into()));
        }
        Ok(())
    }

    fn sample_evals(&self, state: &State, lin: &Linearization) -> Vec<SampleEval> {
        let pts = &state.points;
        par::map_range(self.dev_rows.len(), self.parallel, |k| {
            let r = &self.dev_rows[k];
            let su = r.eval(Quantity::Du, pts);
            let sv = r.eval(Quantity::Dv, pts);
            SampleEval {
                p: r.eval(Quantity::Value, pts),
                su,
                sv,
                n: su.cross(&sv) / lin.lag[k],
            }
        })
    }

    /// Pushes `g_i` (3-vector per control point) entries for the 16 controls
    /// of `rows`, weighted by `coef(t)`.
    fn push_ctrl(&self, jac: &mut SparseRows, rows: &SampleRows, mut grad: impl FnMut(usize) -> Vec3) {
        for (t, &i) in rows.indices.iter().enumerate() {
            if let Some(s) = self.layout.ctrl(i) {
                let g = grad(t);
                jac.push_entry(s, g.x);
                jac.push_entry(s + 1, g.y);
                jac.push_entry(s + 2, g.z);
            }
        }
    }

    fn developability(&self, state: &State, lin: &Linearization, evals: &[SampleEval]) -> (ResidualBlock, ResidualBlock) {
        let parts = par::map_range(self.patches.len(), self.parallel, |j| {
            let patch = &self.patches[j];
            let (v, d) = (state.v[j], state.d[j]);
            let mut block = ResidualBlock::new(BlockKind::Developability);
            for &k in &patch.sample_ids {
                let e = &evals[k];
                let rows = &self.dev_rows[k];
                let inv_lag = 1.0 / lin.lag[k];
                let (cv, vu) = (e.sv.cross(&v), v.cross(&e.su));
                let a = &rows.coeffs[Quantity::Du as usize];
                let b = &rows.coeffs[Quantity::Dv as usize];
                self.push_ctrl(&mut block.jacobian, rows, |t| (cv * a[t] + vu * b[t]) * inv_lag);
                let s = self.layout.v(j);
                for c in 0..3 {
                    block.jacobian.push_entry(s + c, e.n[c]);
                }
                if let Some(s) = self.layout.d(j) {
                    block.jacobian.push_entry(s, 1.0);
                }
                block.push(e.n.dot(&v) + d);
            }
            block
        });
        let mut dev = ResidualBlock::new(BlockKind::Developability);
        for p in parts {
            dev.extend(p);
        }
        let mut unit = ResidualBlock::new(BlockKind::UnitLength);
        let sl = self.weights.lambda1.sqrt();
        for (j, v) in state.v.iter().enumerate() {
            let s = self.layout.v(j);
            for c in 0..3 {
                unit.jacobian.push_entry(s + c, 2.0 * sl * v[c]);
            }
            unit.push(sl * (v.dot(v) - 1.0));
        }
        (dev, unit)
    }

    fn rotationality(&self, state: &State, lin: &Linearization, evals: &[SampleEval]) -> (ResidualBlock, ResidualBlock) {
        let moment_of = |j: usize| state.moment[j].or(lin.moments[j]).unwrap_or_else(Vec3::zeros);
        let parts = par::map_range(self.patches.len(), self.parallel, |j| {
            let patch = &self.patches[j];
            let mut block = ResidualBlock::new(BlockKind::Coplanarity);
            if !patch.rotational {
                return block;
            }
            let (v, vbar) = (state.v[j], moment_of(j));
            for &k in &patch.sample_ids {
                let e = &evals[k];
                let rows = &self.dev_rows[k];
                let inv_lag = 1.0 / lin.lag[k];
                let g = v.cross(&e.p) + vbar;
                let nv = e.n.cross(&v);
                let (sg, gs) = (e.sv.cross(&g), g.cross(&e.su));
                let a = &rows.coeffs[Quantity::Du as usize];
                let b = &rows.coeffs[Quantity::Dv as usize];
                let c = &rows.coeffs[Quantity::Value as usize];
                self.push_ctrl(&mut block.jacobian, rows, |t| nv * c[t] + (sg * a[t] + gs * b[t]) * inv_lag);
                let nbar = e.p.cross(&e.n);
                let s = self.layout.v(j);
                for c in 0..3 {
                    block.jacobian.push_entry(s + c, nbar[c]);
                }
                if let Some(s) = self.layout.moment(j) {
                    for c in 0..3 {
                        block.jacobian.push_entry(s + c, e.n[c]);
                    }
                }
                block.push(v.dot(&nbar) + e.n.dot(&vbar));
            }
            block
        });
        let mut cop = ResidualBlock::new(BlockKind::Coplanarity);
        for p in parts {
            cop.extend(p);
        }
        let mut plk = ResidualBlock::new(BlockKind::Pluecker);
        let sl = self.weights.lambda2.sqrt();
        for (j, patch) in self.patches.iter().enumerate() {
            if !patch.rotational {
                continue;
            }
            let (v, vbar) = (state.v[j], moment_of(j));
            let s = self.layout.v(j);
            for c in 0..3 {
                plk.jacobian.push_entry(s + c, sl * vbar[c]);
            }
            if let Some(s) = self.layout.moment(j) {
                for c in 0..3 {
                    plk.jacobian.push_entry(s + c, sl * v[c]);
                }
            }
            plk.push(sl * v.dot(&vbar));
        }
        (cop, plk)
    }

    fn closeness_block(&self, state: &State, lin: &Linearization) -> ResidualBlock {
        let mut block = ResidualBlock::new(BlockKind::Closeness);
        let Some(c) = &self.closeness else {
            return block;
        };
        let parts = par::map_range(c.rows.len(), self.parallel, |k| {
            let rows = &c.rows[k];
            let (x, n) = lin.targets[k];
            let p = rows.eval(Quantity::Value, &state.points);
            let mut b = ResidualBlock::new(BlockKind::Closeness);
            let coef = &rows.coeffs[Quantity::Value as usize];
            self.push_ctrl(&mut b.jacobian, rows, |t| n * coef[t]);
            b.push((p - x).dot(&n));
            b
        });
        for p in parts {
            block.extend(p);
        }
        block
    }

    fn fairness(&self, state: &State) -> (ResidualBlock, ResidualBlock) {
        let grid = self.model.control();
        let (rows, cols) = (grid.rows(), grid.cols());
        let idx = |i: usize, j: usize| grid.index(i, j);
        let mut first = ResidualBlock::new(BlockKind::Fairness1);
        let mut second = ResidualBlock::new(BlockKind::Fairness2);
        let stencil = |block: &mut ResidualBlock, terms: &[(usize, f64)]| {
            for c in 0..3 {
                let mut value = 0.0;
                for &(i, w) in terms {
                    value += w * state.points[i][c];
                    if let Some(s) = self.layout.ctrl_coord(i, c) {
                        block.jacobian.push_entry(s, w);
                    }
                }
                block.push(value);
            }
        };
        for i in 0..rows {
            for j in 0..cols {
                if i + 1 < rows {
                    stencil(&mut first, &[(idx(i + 1, j), 1.0), (idx(i, j), -1.0)]);
                }
                if j + 1 < cols {
                    stencil(&mut first, &[(idx(i, j + 1), 1.0), (idx(i, j), -1.0)]);
                }
                if i >= 1 && i + 1 < rows {
                    stencil(&mut second, &[(idx(i + 1, j), 1.0), (idx(i, j), -2.0), (idx(i - 1, j), 1.0)]);
                }
                if j >= 1 && j + 1 < cols {
                    stencil(&mut second, &[(idx(i, j + 1), 1.0), (idx(i, j), -2.0), (idx(i, j - 1), 1.0)]);
                }
            }
        }
        (first, second)
    }

    /// All unweighted residual blocks at `x`.
    pub fn blocks(&self, x: &[f64], lin: &Linearization) -> Result<Vec<ResidualBlock>> {
        self.check_lin(lin)?;
        let state = self.decode(x)?;
        let evals = self.sample_evals(&state, lin);
        let (dev, unit) = self.developability(&state, lin, &evals);
        let (cop, plk) = self.rotationality(&state, lin, &evals);
        let close = self.closeness_block(&state, lin);
        let (f1, f2) = self.fairness(&state);
        Ok(vec![dev, unit, cop, plk, close, f1, f2])
    }

    /// Weight applied to a block's energy in the total.
    pub fn block_weight(&self, kind: BlockKind) -> f64 {
        let w = &self.weights;
        match kind {
            BlockKind::Developability | BlockKind::UnitLength => w.w_d,
            BlockKind::Coplanarity | BlockKind::Pluecker => w.w_r,
            BlockKind::Closeness => w.w_c,
            BlockKind::Fairness1 => w.w_f * w.w_f1,
            BlockKind::Fairness2 => w.w_f * w.w_f2,
        }
    }

    pub fn energies_of(&self, blocks: &[ResidualBlock]) -> Energies {
        let w = &self.weights;
        let mut e = Energies::default();
        for b in blocks {
            let v = b.energy();
            match b.kind {
                BlockKind::Developability | BlockKind::UnitLength => e.e_d += v,
                BlockKind::Coplanarity | BlockKind::Pluecker => e.e_r += v,
                BlockKind::Closeness => e.e_c += v,
                BlockKind::Fairness1 => e.e_f += w.w_f1 * v,
                BlockKind::Fairness2 => e.e_f += w.w_f2 * v,
            }
        }
        e.total = w.w_d * e.e_d + w.w_r * e.e_r + w.w_c * e.e_c + w.w_f * e.e_f;
        e
    }

    /// Stacks all blocks scaled by the square roots of their weights.
    pub fn assemble(&self, x: &[f64], lin: &Linearization) -> Result<Assembled> {
        let blocks = self.blocks(x, lin)?;
        let energies = self.energies_of(&blocks);
        let mut r = Vec::new();
        let mut jacobian = SparseRows::new();
        for b in &blocks {
            let s = self.block_weight(b.kind).sqrt();
            if s == 0.0 {
                continue;
            }
            r.extend(b.values.iter().map(|v| v * s));
            jacobian.append(&b.jacobian, s);
        }
        if let Some(&c) = jacobian.cols.iter().find(|&&c| c >= self.layout.len()) {
            return Err(Error::Contract(format!("jacobian column {c} outside layout {}", self.layout.len())));
        }
        Ok(Assembled { r, jacobian, energies })
    }

    /// Exactly normalized normals at the developability samples for the
    /// current model.
    pub fn sample_normals(&self) -> Result<Vec<Vec3>> {
        let pts = self.model.control_points();
        let eps = degeneracy_eps(self.model.bbox_diagonal());
        self.dev_rows
            .iter()
            .map(|r| crate::diffgeo::unit_normal_guarded(&r.eval(Quantity::Du, pts), &r.eval(Quantity::Dv, pts), None, eps))
            .collect()
    }

    pub fn sample_positions(&self) -> Vec<Vec3> {
        let pts = self.model.control_points();
        self.dev_rows.iter().map(|r| r.eval(Quantity::Value, pts)).collect()
    }
}
