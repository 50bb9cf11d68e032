//! Closed-form test geometry and least-squares fitting of control nets to
//! parametric functions.

use nalgebra::DMatrix;

use crate::kdtree::ReferenceCloud;
use crate::surface::{build_panel_grid, ControlGrid, KnotVector, SurfaceModel};
use crate::{Error, Result, Vec3};

fn lattice(l: usize) -> Vec<f64> {
    (0..l).map(|i| i as f64 / (l - 1) as f64).collect()
}

/// Rows are samples, columns control points.
fn basis_matrix(knots: &KnotVector, ts: &[f64]) -> Result<DMatrix<f64>> {
    let mut a = DMatrix::zeros(ts.len(), knots.n_ctrl());
    for (r, &t) in ts.iter().enumerate() {
        let b = knots.basis(t, 0)?;
        for k in 0..4 {
            a[(r, b.first + k)] = b.values[k];
        }
    }
    Ok(a)
}

fn pseudo_inverse(a: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let ata = a.transpose() * &a;
    let chol = ata
        .cholesky()
        .ok_or_else(|| Error::arg("too few fitting samples for the control net"))?;
    Ok(chol.solve(&a.transpose()))
}

/// Least-squares control net for `f`, keeping the knots and kind of
/// `template`. The fit is separable over a `samples.0 x samples.1` lattice.
pub fn fit_function(template: &SurfaceModel, f: impl Fn(f64, f64) -> Vec3, samples: (usize, usize)) -> Result<SurfaceModel> {
    let (lu, lv) = samples;
    let (nu, nv) = (template.control().rows(), template.control().cols());
    if lu < nu || lv < nv {
        return Err(Error::arg(format!("need at least {nu}x{nv} fitting samples, got {lu}x{lv}")));
    }
    let (us, vs) = (lattice(lu), lattice(lv));
    let pu = pseudo_inverse(basis_matrix(template.knots_u(), &us)?)?;
    let pv = pseudo_inverse(basis_matrix(template.knots_v(), &vs)?)?;
    let mut points = vec![Vec3::zeros(); nu * nv];
    for c in 0..3 {
        let data = DMatrix::from_fn(lu, lv, |i, j| f(us[i], vs[j])[c]);
        let p = &pu * data * pv.transpose();
        for i in 0..nu {
            for j in 0..nv {
                points[i * nv + j][c] = p[(i, j)];
            }
        }
    }
    let mut model = template.clone();
    model.set_control_points(&points)?;
    Ok(model)
}

/// Flat `rows x cols` grid on the unit square, used as a fitting template.
pub fn unit_grid(rows: usize, cols: usize) -> Result<ControlGrid> {
    ControlGrid::from_fn(rows, cols, |i, j| {
        Vec3::new(i as f64 / (rows - 1) as f64, j as f64 / (cols - 1) as f64, 0.0)
    })
}

/// Fitted single B-spline surface with a `rows x cols` control net.
pub fn fit_bspline(rows: usize, cols: usize, f: impl Fn(f64, f64) -> Vec3) -> Result<SurfaceModel> {
    let template = SurfaceModel::bspline(unit_grid(rows, cols)?)?;
    fit_function(&template, f, (8 * rows, 8 * cols))
}

/// Fitted `rows x cols` panel grid.
pub fn fit_panels(rows: usize, cols: usize, f: impl Fn(f64, f64) -> Vec3) -> Result<SurfaceModel> {
    let template = build_panel_grid(rows, cols, unit_grid(3 * rows + 1, 3 * cols + 1)?)?;
    fit_function(&template, f, (12 * rows + 4, 12 * cols + 4))
}

/// Circular-cylinder sector of radius `radius` around the z axis, opening
/// `angle` radians centered on +x, height `height`. Normals point outward.
pub fn cylinder(radius: f64, angle: f64, height: f64) -> impl Fn(f64, f64) -> Vec3 + Send + Sync + Clone {
    move |u, v| {
        let t = (u - 0.5) * angle;
        Vec3::new(radius * t.cos(), radius * t.sin(), height * (v - 0.5))
    }
}

/// Cylinder sector with a radial bump `amplitude · sin(πu) sin(πv)`.
pub fn bumped_cylinder(radius: f64, angle: f64, height: f64, amplitude: f64) -> impl Fn(f64, f64) -> Vec3 + Send + Sync + Clone {
    move |u, v| {
        let t = (u - 0.5) * angle;
        let r = radius + amplitude * (std::f64::consts::PI * u).sin() * (std::f64::consts::PI * v).sin();
        Vec3::new(r * t.cos(), r * t.sin(), height * (v - 0.5))
    }
}

/// Torus patch with major radius `big`, minor radius `small`, major angle
/// over `theta` and minor angle over `phi` (both `[start, end]`, radians).
/// `u` runs along the major circle. Normals point outward.
pub fn torus(big: f64, small: f64, theta: [f64; 2], phi: [f64; 2]) -> impl Fn(f64, f64) -> Vec3 + Send + Sync + Clone {
    move |u, v| {
        let t = theta[0] + u * (theta[1] - theta[0]);
        let p = phi[0] + v * (phi[1] - phi[0]);
        let w = big + small * p.cos();
        Vec3::new(w * t.cos(), w * t.sin(), small * p.sin())
    }
}

/// Outward unit normal of [`torus`] at `(u, v)`.
pub fn torus_normal(theta: [f64; 2], phi: [f64; 2], u: f64, v: f64) -> Vec3 {
    let t = theta[0] + u * (theta[1] - theta[0]);
    let p = phi[0] + v * (phi[1] - phi[0]);
    Vec3::new(p.cos() * t.cos(), p.cos() * t.sin(), p.sin())
}

/// Cone of revolution with apex at the origin, axis +z and half-angle
/// `half_angle` between rulings and axis. `u` sweeps `arc` radians around
/// the axis, `v` runs along the rulings from distance `t0` to `t1`.
///
/// The angular sweep uses the rational circle parametrization with its
/// denominator folded into the ruling length, so the surface is polynomial
/// of degree (2, 1) and a single bicubic panel reproduces it exactly.
pub fn cone(half_angle: f64, arc: f64, t0: f64, t1: f64) -> impl Fn(f64, f64) -> Vec3 + Send + Sync + Clone {
    let w = (arc / 4.0).tan();
    let (sn, cs) = half_angle.sin_cos();
    move |u, v| {
        let s = (2.0 * u - 1.0) * w;
        let t = t0 + v * (t1 - t0);
        Vec3::new(sn * (1.0 - s * s), sn * 2.0 * s, cs * (1.0 + s * s)) * t
    }
}

/// Elliptic paraboloid `z = a x² + b y²` over `[-1, 1]²`, scaled by `size`.
pub fn paraboloid(a: f64, b: f64, size: f64) -> impl Fn(f64, f64) -> Vec3 + Send + Sync + Clone {
    move |u, v| {
        let (x, y) = (2.0 * u - 1.0, 2.0 * v - 1.0);
        Vec3::new(x, y, a * x * x + b * y * y) * size
    }
}

/// Unit normal of `f` by central differences, oriented as `f_u × f_v`.
pub fn fd_normal(f: &impl Fn(f64, f64) -> Vec3, u: f64, v: f64) -> Vec3 {
    let h = 1e-6;
    let (u0, u1) = ((u - h).max(0.0), (u + h).min(1.0));
    let (v0, v1) = ((v - h).max(0.0), (v + h).min(1.0));
    let fu = (f(u1, v) - f(u0, v)) / (u1 - u0);
    let fv = (f(u, v1) - f(u, v0)) / (v1 - v0);
    fu.cross(&fv).normalize()
}

/// Points and unit normals of `f` on an `l_u x l_v` lattice.
pub fn sample_with_normals(f: &impl Fn(f64, f64) -> Vec3, l_u: usize, l_v: usize) -> (Vec<Vec3>, Vec<Vec3>) {
    let (us, vs) = (lattice(l_u), lattice(l_v));
    let mut points = Vec::with_capacity(l_u * l_v);
    let mut normals = Vec::with_capacity(l_u * l_v);
    for &u in &us {
        for &v in &vs {
            points.push(f(u, v));
            normals.push(fd_normal(f, u, v));
        }
    }
    (points, normals)
}

pub fn reference_cloud(f: &impl Fn(f64, f64) -> Vec3, l_u: usize, l_v: usize) -> Result<ReferenceCloud> {
    let (p, n) = sample_with_normals(f, l_u, l_v);
    ReferenceCloud::new(p, n)
}

/// Triangulated lattice of `f`: vertices row-major, two triangles per cell
/// oriented like `f_u × f_v`.
pub fn triangle_mesh(f: &impl Fn(f64, f64) -> Vec3, l_u: usize, l_v: usize) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let (us, vs) = (lattice(l_u), lattice(l_v));
    let vertices = us
        .iter()
        .flat_map(|&u| vs.iter().map(move |&v| (u, v)))
        .map(|(u, v)| f(u, v))
        .collect();
    let id = |i: usize, j: usize| i * l_v + j;
    let mut faces = Vec::with_capacity(2 * (l_u - 1) * (l_v - 1));
    for i in 0..l_u - 1 {
        for j in 0..l_v - 1 {
            faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    (vertices, faces)
}
