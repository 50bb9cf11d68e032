//! Bicubic B-spline surfaces and C⁰ grids of bicubic Bézier panels.
//!
//! Every evaluated quantity (position and partial derivatives up to second
//! order) is a fixed linear combination of the control points. The
//! coefficients are cached per sample in [`SampleRows`], so re-evaluating a
//! sample after a control-point update is a 16-term dot product.

use crate::{Error, Result, Vec3};

pub const DEGREE: usize = 3;

/// Clamped cubic knot vector on `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct KnotVector {
    knots: Vec<f64>,
}

/// The four basis functions that are nonzero on the span containing `u`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BasisValues {
    /// Index of the first active control point.
    pub first: usize,
    pub values: [f64; 4],
}

impl KnotVector {
    /// Validates a clamped cubic knot vector: nondecreasing, four-fold
    /// knots at 0 and 1, interior multiplicity at most three.
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 * (DEGREE + 1) {
            return Err(Error::arg(format!(
                "a cubic knot vector needs at least 8 knots, got {}",
                knots.len()
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::arg("knots must be finite"));
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::arg("knots must be nondecreasing"));
        }
        let n = knots.len();
        if knots[..=DEGREE].iter().any(|&k| k != 0.0) || knots[n - DEGREE - 1..].iter().any(|&k| k != 1.0) {
            return Err(Error::arg("knot vector must be clamped on [0, 1]"));
        }
        let interior = &knots[DEGREE + 1..n - DEGREE - 1];
        let mut run = 1;
        for w in interior.windows(2) {
            if w[0] == w[1] {
                run += 1;
                if run > DEGREE {
                    return Err(Error::arg("interior knot multiplicity exceeds the degree"));
                }
            } else {
                run = 1;
            }
        }
        if interior.first() == Some(&0.0) || interior.last() == Some(&1.0) {
            return Err(Error::arg("interior knots must lie strictly inside (0, 1)"));
        }
        Ok(Self { knots })
    }

    /// Uniform clamped cubic knots for `n_ctrl` control points.
    pub fn uniform_clamped(n_ctrl: usize) -> Result<Self> {
        if n_ctrl < DEGREE + 1 {
            return Err(Error::arg(format!("need at least 4 control points, got {n_ctrl}")));
        }
        let segments = n_ctrl - DEGREE;
        let mut knots = vec![0.0; DEGREE + 1];
        knots.extend((1..segments).map(|i| i as f64 / segments as f64));
        knots.extend(std::iter::repeat_n(1.0, DEGREE + 1));
        Self::new(knots)
    }

    /// Knots of a chain of `segments` cubic Bézier pieces glued with C⁰
    /// continuity: every interior knot has multiplicity three.
    pub fn piecewise_bezier(segments: usize) -> Result<Self> {
        if segments == 0 {
            return Err(Error::arg("panel count must be positive"));
        }
        let mut knots = vec![0.0; DEGREE + 1];
        for i in 1..segments {
            let k = i as f64 / segments as f64;
            knots.extend([k, k, k]);
        }
        knots.extend(std::iter::repeat_n(1.0, DEGREE + 1));
        Self::new(knots)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn n_ctrl(&self) -> usize {
        self.knots.len() - DEGREE - 1
    }

    /// Knot span index `s` with `knots[s] <= u < knots[s + 1]`; `u = 1`
    /// belongs to the last nonempty span.
    pub fn span(&self, u: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain { value: u });
        }
        let last = self.n_ctrl() - 1;
        if u >= self.knots[last + 1] {
            return Ok(last);
        }
        // largest s in [DEGREE, last] with knots[s] <= u
        let (mut lo, mut hi) = (DEGREE, last + 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.knots[mid] <= u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo)
    }

    /// Values of the active basis functions and their first two
    /// derivatives at `u`.
    pub fn basis_derivatives(&self, u: f64) -> Result<(usize, [[f64; 4]; 3])> {
        let s = self.span(u)?;
        Ok((s - DEGREE, self.ders_at_span(s, u)))
    }

    /// Active basis functions (or their `order`-th derivative, `order <= 2`).
    pub fn basis(&self, u: f64, order: usize) -> Result<BasisValues> {
        if order > 2 {
            return Err(Error::arg(format!("derivative order {order} not supported")));
        }
        let (first, ders) = self.basis_derivatives(u)?;
        Ok(BasisValues {
            first,
            values: ders[order],
        })
    }

    fn ders_at_span(&self, s: usize, u: f64) -> [[f64; 4]; 3] {
        const P: usize = DEGREE;
        const N: usize = 2;
        let t = &self.knots;
        let mut ndu = [[0.0f64; P + 1]; P + 1];
        let mut left = [0.0f64; P + 1];
        let mut right = [0.0f64; P + 1];
        ndu[0][0] = 1.0;
        for j in 1..=P {
            left[j] = u - t[s + 1 - j];
            right[j] = t[s + j] - u;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = [[0.0f64; P + 1]; N + 1];
        for j in 0..=P {
            ders[0][j] = ndu[j][P];
        }
        let mut a = [[0.0f64; P + 1]; 2];
        for r in 0..=P {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=N {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = P - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { P - r };
                for j in j1..=j2 {
                    let col = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][col];
                    d += a[s2][j] * ndu[col][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = P as f64;
        for (k, row) in ders.iter_mut().enumerate().skip(1) {
            for x in row.iter_mut() {
                *x *= factor;
            }
            factor *= (P - k) as f64;
        }
        ders
    }
}

/// Row-major grid of control points; `rows` runs along `u`, `cols` along `v`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlGrid {
    rows: usize,
    cols: usize,
    points: Vec<Vec3>,
}

impl ControlGrid {
    pub fn new(rows: usize, cols: usize, points: Vec<Vec3>) -> Result<Self> {
        if rows < DEGREE + 1 || cols < DEGREE + 1 {
            return Err(Error::arg(format!("control grid must be at least 4x4, got {rows}x{cols}")));
        }
        if points.len() != rows * cols {
            return Err(Error::arg(format!("expected {} control points, got {}", rows * cols, points.len())));
        }
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::arg("control points must be finite"));
        }
        Ok(Self { rows, cols, points })
    }

    /// Builds a grid from `f(i, j)`.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Vec3) -> Result<Self> {
        let points = (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .map(|(i, j)| f(i, j))
            .collect();
        Self::new(rows, cols, points)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.cols + j
    }

    pub fn get(&self, i: usize, j: usize) -> Vec3 {
        self.points[self.index(i, j)]
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    /// Replaces all control points; dimensions stay fixed.
    pub fn set_points(&mut self, points: &[Vec3]) -> Result<()> {
        if points.len() != self.points.len() {
            return Err(Error::Contract(format!(
                "control update has {} points, grid has {}",
                points.len(),
                self.points.len()
            )));
        }
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::arg("control points must be finite"));
        }
        self.points.copy_from_slice(points);
        Ok(())
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in &self.points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (hi - lo).norm()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SurfaceKind {
    /// One B-spline surface with uniform clamped knots.
    BSpline,
    /// `rows x cols` bicubic Bézier panels sharing edge control points.
    PanelGrid { rows: usize, cols: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceModel {
    kind: SurfaceKind,
    control: ControlGrid,
    knots_u: KnotVector,
    knots_v: KnotVector,
}

/// Position and partial derivatives at one parameter pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfacePoint {
    pub position: Vec3,
    pub su: Vec3,
    pub sv: Vec3,
    pub suu: Vec3,
    pub suv: Vec3,
    pub svv: Vec3,
}

impl SurfaceModel {
    /// Single B-spline surface with uniform clamped knots in both directions.
    pub fn bspline(control: ControlGrid) -> Result<Self> {
        let knots_u = KnotVector::uniform_clamped(control.rows())?;
        let knots_v = KnotVector::uniform_clamped(control.cols())?;
        Ok(Self {
            kind: SurfaceKind::BSpline,
            control,
            knots_u,
            knots_v,
        })
    }

    /// B-spline surface with caller-supplied (fixed) knot vectors.
    pub fn with_knots(control: ControlGrid, knots_u: KnotVector, knots_v: KnotVector) -> Result<Self> {
        if knots_u.n_ctrl() != control.rows() || knots_v.n_ctrl() != control.cols() {
            return Err(Error::arg(format!(
                "knot vectors expect {}x{} control points, grid is {}x{}",
                knots_u.n_ctrl(),
                knots_v.n_ctrl(),
                control.rows(),
                control.cols()
            )));
        }
        Ok(Self {
            kind: SurfaceKind::BSpline,
            control,
            knots_u,
            knots_v,
        })
    }

    pub fn kind(&self) -> SurfaceKind {
        self.kind
    }

    pub fn control(&self) -> &ControlGrid {
        &self.control
    }

    pub fn control_points(&self) -> &[Vec3] {
        self.control.points()
    }

    pub fn set_control_points(&mut self, points: &[Vec3]) -> Result<()> {
        self.control.set_points(points)
    }

    pub fn knots_u(&self) -> &KnotVector {
        &self.knots_u
    }

    pub fn knots_v(&self) -> &KnotVector {
        &self.knots_v
    }

    /// Panel grid dimensions; a single B-spline counts as one panel.
    pub fn panel_dims(&self) -> (usize, usize) {
        match self.kind {
            SurfaceKind::BSpline => (1, 1),
            SurfaceKind::PanelGrid { rows, cols } => (rows, cols),
        }
    }

    pub fn panel_count(&self) -> usize {
        let (r, c) = self.panel_dims();
        r * c
    }

    /// Parameter rectangle `([u0, u1], [v0, v1])` of panel `r` (row-major).
    pub fn panel_domain(&self, panel: usize) -> ([f64; 2], [f64; 2]) {
        let (rows, cols) = self.panel_dims();
        let (a, b) = (panel / cols, panel % cols);
        (
            [a as f64 / rows as f64, (a + 1) as f64 / rows as f64],
            [b as f64 / cols as f64, (b + 1) as f64 / cols as f64],
        )
    }

    /// Global control indices of the 4x4 Bézier net of panel `r`, row-major.
    pub fn panel_indices(&self, panel: usize) -> Result<[usize; 16]> {
        let SurfaceKind::PanelGrid { rows, cols } = self.kind else {
            return Err(Error::arg("panel indices requested on a single B-spline surface"));
        };
        if panel >= rows * cols {
            return Err(Error::arg(format!("panel {panel} out of range")));
        }
        let (a, b) = (panel / cols, panel % cols);
        let mut out = [0; 16];
        for i in 0..4 {
            for j in 0..4 {
                out[i * 4 + j] = self.control.index(3 * a + i, 3 * b + j);
            }
        }
        Ok(out)
    }

    pub fn rows_at(&self, u: f64, v: f64) -> Result<SampleRows> {
        let (fu, bu) = self.knots_u.basis_derivatives(u)?;
        let (fv, bv) = self.knots_v.basis_derivatives(v)?;
        let mut indices = [0usize; 16];
        let mut coeffs = [[0.0f64; 16]; 6];
        // (order in u, order in v) for each cached quantity
        const ORDERS: [(usize, usize); 6] = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)];
        for a in 0..4 {
            for b in 0..4 {
                let slot = a * 4 + b;
                indices[slot] = self.control.index(fu + a, fv + b);
                for (q, &(ou, ov)) in ORDERS.iter().enumerate() {
                    coeffs[q][slot] = bu[ou][a] * bv[ov][b];
                }
            }
        }
        Ok(SampleRows { u, v, indices, coeffs })
    }

    pub fn eval(&self, u: f64, v: f64) -> Result<Vec3> {
        Ok(self.rows_at(u, v)?.eval(Quantity::Value, self.control.points()))
    }

    pub fn derivatives(&self, u: f64, v: f64) -> Result<SurfacePoint> {
        Ok(self.rows_at(u, v)?.point(self.control.points()))
    }

    pub fn bbox_diagonal(&self) -> f64 {
        self.control.bbox_diagonal()
    }
}

/// Glues `rows x cols` bicubic Bézier panels over a shared global grid of
/// `(3 rows + 1) x (3 cols + 1)` control points.
pub fn build_panel_grid(rows: usize, cols: usize, seed: ControlGrid) -> Result<SurfaceModel> {
    if rows == 0 || cols == 0 {
        return Err(Error::arg(format!("panel grid must be at least 1x1, got {rows}x{cols}")));
    }
    if seed.rows() != 3 * rows + 1 || seed.cols() != 3 * cols + 1 {
        return Err(Error::arg(format!(
            "a {rows}x{cols} panel grid needs {}x{} control points, seed is {}x{}",
            3 * rows + 1,
            3 * cols + 1,
            seed.rows(),
            seed.cols()
        )));
    }
    Ok(SurfaceModel {
        kind: SurfaceKind::PanelGrid { rows, cols },
        control: seed,
        knots_u: KnotVector::piecewise_bezier(rows)?,
        knots_v: KnotVector::piecewise_bezier(cols)?,
    })
}

/// Number of control points of a `rows x cols` panel grid.
pub fn panel_grid_ctrl_count(rows: usize, cols: usize) -> usize {
    (3 * rows + 1) * (3 * cols + 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quantity {
    Value = 0,
    Du = 1,
    Dv = 2,
    Duu = 3,
    Duv = 4,
    Dvv = 5,
}

impl Quantity {
    pub const ALL: [Quantity; 6] = [
        Quantity::Value,
        Quantity::Du,
        Quantity::Dv,
        Quantity::Duu,
        Quantity::Duv,
        Quantity::Dvv,
    ];
}

/// Sparse coefficients of one evaluated quantity over global control indices.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisRow {
    pub entries: Vec<(usize, f64)>,
}

impl BasisRow {
    pub fn apply(&self, points: &[Vec3]) -> Vec3 {
        self.entries.iter().map(|&(i, c)| points[i] * c).sum()
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }
}

/// Cached basis coefficients for all six quantities at one sample. All six
/// share the same 16 control indices.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRows {
    pub u: f64,
    pub v: f64,
    pub indices: [usize; 16],
    pub coeffs: [[f64; 16]; 6],
}

impl SampleRows {
    pub fn eval(&self, q: Quantity, points: &[Vec3]) -> Vec3 {
        let c = &self.coeffs[q as usize];
        let mut acc = Vec3::zeros();
        for (&i, &w) in self.indices.iter().zip(c) {
            acc += points[i] * w;
        }
        acc
    }

    pub fn point(&self, points: &[Vec3]) -> SurfacePoint {
        SurfacePoint {
            position: self.eval(Quantity::Value, points),
            su: self.eval(Quantity::Du, points),
            sv: self.eval(Quantity::Dv, points),
            suu: self.eval(Quantity::Duu, points),
            suv: self.eval(Quantity::Duv, points),
            svv: self.eval(Quantity::Dvv, points),
        }
    }

    pub fn basis_row(&self, q: Quantity) -> BasisRow {
        BasisRow {
            entries: self.indices.iter().copied().zip(self.coeffs[q as usize]).collect(),
        }
    }
}

/// Caches basis rows for every sample parameter pair.
pub fn precompute_rows(model: &SurfaceModel, params: &[(f64, f64)]) -> Result<Vec<SampleRows>> {
    params.iter().map(|&(u, v)| model.rows_at(u, v)).collect()
}
