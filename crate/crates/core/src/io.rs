//! Reading reference geometry and writing surfaces and reports.
//!
//! Floats are written with 17 significant digits so that every exported
//! value parses back to the same `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::analysis::{CurvatureMap, GaussImage, RulingSample};
use crate::diffgeo::{degeneracy_eps, unit_normal_guarded};
use crate::kdtree::ReferenceCloud;
use crate::paneling::PanelReport;
use crate::solver::IterationRecord;
use crate::surface::{build_panel_grid, ControlGrid, SurfaceKind, SurfaceModel};
use crate::{Error, Result, Vec3};

/// 17 significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_vec(v: &Vec3) -> String {
    format!("{} {} {}", fmt_f64(v.x), fmt_f64(v.y), fmt_f64(v.z))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes `text`, creating parent directories as needed.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_floats<const N: usize>(fields: &[&str], path: &Path, line: usize) -> Result<[f64; N]> {
    if fields.len() < N {
        return Err(parse_err(path, line, format!("expected {N} numbers, found {}", fields.len())));
    }
    let mut out = [0.0; N];
    for (o, f) in out.iter_mut().zip(fields) {
        let x: f64 = f.parse().map_err(|_| parse_err(path, line, format!("`{f}` is not a number")))?;
        if !x.is_finite() {
            return Err(parse_err(path, line, format!("non-finite value `{f}`")));
        }
        *o = x;
    }
    Ok(out)
}

/// Vertices, normals and triangles read from an OBJ file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObjMesh {
    pub vertices: Vec<Vec3>,
    /// `vn` records in file order.
    pub normals: Vec<Vec3>,
    /// Triangles as vertex indices; polygons are fanned.
    pub triangles: Vec<[usize; 3]>,
    /// Per-corner normal index of each triangle, where given.
    pub triangle_normals: Vec<[Option<usize>; 3]>,
}

fn resolve_index(tok: &str, count: usize, path: &Path, line: usize) -> Result<usize> {
    let i: i64 = tok.parse().map_err(|_| parse_err(path, line, format!("bad index `{tok}`")))?;
    let idx = if i > 0 { i - 1 } else { count as i64 + i };
    if i == 0 || idx < 0 || idx as usize >= count {
        return Err(parse_err(path, line, format!("index {i} out of range ({count} defined)")));
    }
    Ok(idx as usize)
}

/// Parses the `v`, `vn` and `f` records of an OBJ file; other records are
/// ignored. `path` is used for error messages only.
pub fn parse_obj(text: &str, path: &Path) -> Result<ObjMesh> {
    let mut mesh = ObjMesh::default();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut fields = content.split_whitespace();
        let Some(tag) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();
        match tag {
            "v" => {
                let [x, y, z] = parse_floats::<3>(&rest, path, line)?;
                mesh.vertices.push(Vec3::new(x, y, z));
            }
            "vn" => {
                let [x, y, z] = parse_floats::<3>(&rest, path, line)?;
                mesh.normals.push(Vec3::new(x, y, z));
            }
            "f" => {
                if rest.len() < 3 {
                    return Err(parse_err(path, line, "face with fewer than 3 vertices"));
                }
                let mut corners = Vec::with_capacity(rest.len());
                for tok in &rest {
                    let mut parts = tok.split('/');
                    let v = resolve_index(parts.next().unwrap_or(""), mesh.vertices.len(), path, line)?;
                    let n = match parts.nth(1) {
                        Some(s) if !s.is_empty() => Some(resolve_index(s, mesh.normals.len(), path, line)?),
                        _ => None,
                    };
                    corners.push((v, n));
                }
                for i in 1..corners.len() - 1 {
                    let tri = [corners[0], corners[i], corners[i + 1]];
                    mesh.triangles.push(tri.map(|c| c.0));
                    mesh.triangle_normals.push(tri.map(|c| c.1));
                }
            }
            _ => {}
        }
    }
    Ok(mesh)
}

/// Per-vertex unit normals: from `vn` data when available, otherwise the
/// area-weighted average of incident face normals.
pub fn vertex_normals(mesh: &ObjMesh, path: &Path) -> Result<Vec<Vec3>> {
    let n = mesh.vertices.len();
    let mut acc = vec![Vec3::zeros(); n];
    let referenced = mesh.triangle_normals.iter().flatten().any(|c| c.is_some());
    if referenced {
        for (tri, tn) in mesh.triangles.iter().zip(&mesh.triangle_normals) {
            for (&v, c) in tri.iter().zip(tn) {
                if let Some(c) = c {
                    acc[v] += mesh.normals[*c].normalize();
                }
            }
        }
    } else if !mesh.normals.is_empty() && mesh.normals.len() == n {
        acc.clone_from(&mesh.normals);
    } else if !mesh.triangles.is_empty() {
        for t in &mesh.triangles {
            let [a, b, c] = t.map(|i| mesh.vertices[i]);
            // the cross product has length twice the area
            let w = (b - a).cross(&(c - a));
            for &i in t {
                acc[i] += w;
            }
        }
    } else {
        return Err(parse_err(path, 0, "no faces and no vertex normals; normals are required"));
    }
    acc.iter()
        .enumerate()
        .map(|(i, a)| {
            let len = a.norm();
            if len > 0.0 && len.is_finite() {
                Ok(a / len)
            } else {
                Err(parse_err(path, 0, format!("vertex {} has no usable normal", i + 1)))
            }
        })
        .collect()
}

/// Points with normals from whitespace-separated `x y z nx ny nz` lines.
/// `#` starts a comment.
pub fn parse_xyz(text: &str, path: &Path) -> Result<(Vec<Vec3>, Vec<Vec3>)> {
    let mut points = Vec::new();
    let mut normals = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let fields: Vec<&str> = raw.split('#').next().unwrap_or("").split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 6 {
            return Err(parse_err(
                path,
                k + 1,
                format!("expected `x y z nx ny nz`, found {} fields", fields.len()),
            ));
        }
        let [x, y, z, nx, ny, nz] = parse_floats::<6>(&fields, path, k + 1)?;
        let n = Vec3::new(nx, ny, nz);
        let len = n.norm();
        if len == 0.0 {
            return Err(parse_err(path, k + 1, "zero normal"));
        }
        points.push(Vec3::new(x, y, z));
        normals.push(n / len);
    }
    Ok((points, normals))
}

/// Loads a reference cloud from an OBJ mesh or an XYZ file with normals,
/// chosen by extension (`.obj`, otherwise XYZ).
pub fn load_reference(path: &Path) -> Result<ReferenceCloud> {
    let text = read_text(path)?;
    let is_obj = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("obj"));
    let (points, normals) = if is_obj {
        let mesh = parse_obj(&text, path)?;
        let normals = vertex_normals(&mesh, path)?;
        (mesh.vertices, normals)
    } else {
        parse_xyz(&text, path)?
    };
    if points.is_empty() {
        return Err(parse_err(path, 0, "no points"));
    }
    ReferenceCloud::new(points, normals)
}

/// Writes a triangle mesh with per-vertex normals.
pub fn write_mesh(path: &Path, vertices: &[Vec3], normals: &[Vec3], triangles: &[[usize; 3]]) -> Result<()> {
    let mut s = String::new();
    for v in vertices {
        let _ = writeln!(s, "v {}", fmt_vec(v));
    }
    for n in normals {
        let _ = writeln!(s, "vn {}", fmt_vec(n));
    }
    let with_n = normals.len() == vertices.len();
    for t in triangles {
        let [a, b, c] = t.map(|i| i + 1);
        if with_n {
            let _ = writeln!(s, "f {a}//{a} {b}//{b} {c}//{c}");
        } else {
            let _ = writeln!(s, "f {a} {b} {c}");
        }
    }
    write_text(path, &s)
}

/// Path of the control-net file written next to a surface export.
pub fn control_net_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}_ctrl.obj"))
}

/// Quad-tessellates `model` on an `n_u x n_v` parameter lattice (row-major
/// over `u`) with exact unit normals, and writes the control net as
/// polylines to [`control_net_path`].
pub fn export_surface(model: &SurfaceModel, tessellation: (usize, usize), path: &Path) -> Result<()> {
    let (nu, nv) = tessellation;
    if nu < 2 || nv < 2 {
        return Err(Error::arg(format!("tessellation must be at least 2x2, got {nu}x{nv}")));
    }
    let eps = degeneracy_eps(model.bbox_diagonal());
    let mut s = String::new();
    let mut normals = String::new();
    for i in 0..nu {
        for j in 0..nv {
            let (u, v) = (i as f64 / (nu - 1) as f64, j as f64 / (nv - 1) as f64);
            let p = model.derivatives(u, v)?;
            let n = unit_normal_guarded(&p.su, &p.sv, None, eps)?;
            let _ = writeln!(s, "v {}", fmt_vec(&p.position));
            let _ = writeln!(normals, "vn {}", fmt_vec(&n));
        }
    }
    s.push_str(&normals);
    for i in 0..nu - 1 {
        for j in 0..nv - 1 {
            let id = |a: usize, b: usize| a * nv + b + 1;
            let q = [id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)];
            let _ = writeln!(s, "f {0}//{0} {1}//{1} {2}//{2} {3}//{3}", q[0], q[1], q[2], q[3]);
        }
    }
    write_text(path, &s)?;
    write_control_net(model, &control_net_path(path))
}

/// Control points with a type header and row and column polylines; read
/// back by [`load_control_net`].
pub fn write_control_net(model: &SurfaceModel, path: &Path) -> Result<()> {
    let g = model.control();
    let (r, c) = (g.rows(), g.cols());
    let mut s = match model.kind() {
        SurfaceKind::BSpline => format!("# control bspline {r} {c}\n"),
        SurfaceKind::PanelGrid { rows, cols } => format!("# control panels {rows} {cols}\n"),
    };
    for p in g.points() {
        let _ = writeln!(s, "v {}", fmt_vec(p));
    }
    for i in 0..r {
        let ids: Vec<String> = (0..c).map(|j| (g.index(i, j) + 1).to_string()).collect();
        let _ = writeln!(s, "l {}", ids.join(" "));
    }
    for j in 0..c {
        let ids: Vec<String> = (0..r).map(|i| (g.index(i, j) + 1).to_string()).collect();
        let _ = writeln!(s, "l {}", ids.join(" "));
    }
    write_text(path, &s)
}

/// Reads a control net written by [`export_surface`]. The header line
/// `# control bspline <rows> <cols>` or `# control panels <R> <C>` selects
/// the surface type.
pub fn load_control_net(path: &Path) -> Result<SurfaceModel> {
    let text = read_text(path)?;
    let header = text
        .lines()
        .enumerate()
        .find_map(|(k, l)| l.trim().strip_prefix("# control").map(|h| (k + 1, h.trim().to_string())))
        .ok_or_else(|| parse_err(path, 0, "missing `# control bspline|panels <rows> <cols>` header"))?;
    let fields: Vec<&str> = header.1.split_whitespace().collect();
    let dims = |f: &[&str]| -> Option<(usize, usize)> { Some((f.get(1)?.parse().ok()?, f.get(2)?.parse().ok()?)) };
    let (a, b) = dims(&fields).ok_or_else(|| parse_err(path, header.0, "malformed control header"))?;
    let mesh = parse_obj(&text, path)?;
    match fields[0] {
        "bspline" => SurfaceModel::bspline(ControlGrid::new(a, b, mesh.vertices)?),
        "panels" => build_panel_grid(a, b, ControlGrid::new(3 * a + 1, 3 * b + 1, mesh.vertices)?),
        other => Err(parse_err(path, header.0, format!("unknown surface type `{other}`"))),
    }
}

/// Gauss-image points as XYZ and per-patch planes as CSV.
pub fn export_gauss_image(gi: &GaussImage, xyz_path: &Path, csv_path: &Path) -> Result<()> {
    let mut s = String::new();
    for p in &gi.points {
        let _ = writeln!(s, "{}", fmt_vec(p));
    }
    write_text(xyz_path, &s)?;
    let mut c = String::from("patch_id,v_x,v_y,v_z,d,max_distance\n");
    for p in &gi.planes {
        let _ = writeln!(
            c,
            "{},{},{},{},{},{}",
            p.patch_id,
            fmt_f64(p.v.x),
            fmt_f64(p.v.y),
            fmt_f64(p.v.z),
            fmt_f64(p.d),
            fmt_f64(p.max_distance)
        );
    }
    write_text(csv_path, &c)
}

pub const HISTORY_HEADER: &str = "iter,E_total,E_d,E_r,E_c,E_f,step_norm,seconds";

/// One row per logged iteration. Component columns are unweighted; the
/// total is their weighted sum.
pub fn write_history(history: &[IterationRecord], path: &Path) -> Result<()> {
    if history.is_empty() {
        return Err(Error::arg("empty history"));
    }
    let mut s = format!("{HISTORY_HEADER}\n");
    for h in history {
        let cols = [h.e_total, h.e_d, h.e_r, h.e_c, h.e_f, h.step_norm, h.seconds].map(fmt_f64);
        let _ = writeln!(s, "{},{}", h.iteration, cols.join(","));
    }
    write_text(path, &s)
}

/// Parsed history CSV row: iteration and the seven float columns.
pub type HistoryRow = (usize, [f64; 7]);

pub fn read_history(path: &Path) -> Result<Vec<HistoryRow>> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == HISTORY_HEADER => {}
        _ => return Err(parse_err(path, 1, "unexpected header")),
    }
    lines
        .map(|(k, l)| {
            let f: Vec<&str> = l.split(',').collect();
            let it = f[0].parse().map_err(|_| parse_err(path, k + 1, "bad iteration"))?;
            Ok((it, parse_floats::<7>(&f[1..], path, k + 1)?))
        })
        .collect()
}

pub fn write_panel_report(panels: &[PanelReport], path: &Path) -> Result<()> {
    let mut s = String::from(
        "panel,type,v_x,v_y,v_z,d,distance,axis_x,axis_y,axis_z,axis_px,axis_py,axis_pz,max_plane_distance,max_coplanarity,max_abs_k\n",
    );
    for p in panels {
        let axis = match p.axis {
            Some((a, q)) => [a.x, a.y, a.z, q.x, q.y, q.z].map(fmt_f64).join(","),
            None => ",,,,,".to_string(),
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            p.panel,
            p.kind,
            fmt_f64(p.v.x),
            fmt_f64(p.v.y),
            fmt_f64(p.v.z),
            fmt_f64(p.d),
            fmt_f64(p.distance),
            axis,
            fmt_f64(p.max_plane_distance),
            fmt_f64(p.max_coplanarity),
            fmt_f64(p.max_abs_k)
        );
    }
    write_text(path, &s)
}

pub fn write_rulings(rulings: &[(usize, RulingSample)], path: &Path) -> Result<()> {
    let mut s = String::from("patch_id,p_x,p_y,p_z,q_x,q_y,q_z,rt_x,rt_y,rt_z,ro_x,ro_y,ro_z,inflection\n");
    for (j, r) in rulings {
        let nums = [r.p, r.q, r.r_t, r.r_o]
            .iter()
            .flat_map(|v| [v.x, v.y, v.z])
            .map(fmt_f64)
            .collect::<Vec<_>>()
            .join(",");
        let _ = writeln!(s, "{j},{nums},{}", u8::from(r.inflection));
    }
    write_text(path, &s)
}

/// `u,v,K` per probe; `K` is empty where the frame was degenerate.
pub fn write_curvature(map: &CurvatureMap, path: &Path) -> Result<()> {
    let mut s = String::from("u,v,K\n");
    for (&(u, v), k) in map.params.iter().zip(&map.values) {
        let k = k.map(fmt_f64).unwrap_or_default();
        let _ = writeln!(s, "{},{},{k}", fmt_f64(u), fmt_f64(v));
    }
    write_text(path, &s)
}
