//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test --test acceptance`.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use devpanel::analysis::{curvature_map, problem_gauss_image, problem_rulings};
use devpanel::energy::{EnergyWeights, MomentMode, Problem};
use devpanel::init::{direction_matrix, init_plane, PlaneFitProblem};
use devpanel::io::read_history;
use devpanel::paneling::{apply_panel_spec, uniform_specs, PanelType};
use devpanel::sampling::{group_by_panel, group_overlapping, make_grid};
use devpanel::solver::{optimize, IterationRecord, SolverConfig};
use devpanel::surface::{build_panel_grid, ControlGrid, SurfaceModel};
use devpanel::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

/// Accepted-step histories collected for the monotonicity check.
#[derive(Default)]
struct Histories(Vec<(&'static str, Vec<IterationRecord>)>);

fn layout_example() -> Outcome {
    let grid = ok(ControlGrid::from_fn(7, 13, |i, j| Vec3::new(i as f64, j as f64, 0.0)))?;
    let model = ok(SurfaceModel::bspline(grid))?;
    let samples = ok(make_grid(30, 60))?;
    let patches = ok(group_overlapping(&samples, 5, 5, 2, 2))?;
    let n_patches = patches.len();
    let p = ok(Problem::new(model, &samples.params, patches, EnergyWeights::default()))?;
    let (ctrl, vars) = (p.model().control().len(), p.layout().len());
    ensure(ctrl == 91 && n_patches == 200 && vars == 1073, || {
        format!("{ctrl} control points, {n_patches} patches, {vars} variables")
    })?;
    Ok(format!("{ctrl} control points, {n_patches} patches, {vars} variables"))
}

fn panel_layouts() -> Outcome {
    let mut out = Vec::new();
    for (panels, want_ctrl, want_vars) in [(3, 40, 132), (5, 64, 212), (10, 124, 412), (30, 364, 1212)] {
        let seed = ok(ControlGrid::from_fn(3 * panels + 1, 4, |i, j| Vec3::new(i as f64, j as f64, 0.0)))?;
        let model = ok(build_panel_grid(panels, 1, seed))?;
        let s = ok(group_by_panel(&model, (4, 4)))?;
        let patches = ok(apply_panel_spec(s.patches, &uniform_specs(panels, PanelType::FreeDevelopable)))?;
        let p = ok(ok(Problem::new(model, &s.params, patches, EnergyWeights::default()))?.with_moment_mode(MomentMode::Refit))?;
        let (ctrl, vars) = (p.model().control().len(), p.layout().len());
        ensure(ctrl == want_ctrl && vars == want_vars, || {
            format!("{panels} panels: {ctrl} control points, {vars} variables")
        })?;
        out.push(format!("{panels}:{ctrl}/{vars}"));
    }
    Ok(out.join(" "))
}

fn sphere_sweep(count: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).sqrt();
            let t = golden * i as f64;
            Vec3::new(r * t.cos(), r * t.sin(), z)
        })
        .collect()
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

fn plane_oracle() -> Outcome {
    let sweep = sphere_sweep(100_000);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for set in 0..100 {
        let count = rng.random_range(3..40);
        let directions: Vec<(Vec3, f64)> = (0..count).map(|_| (random_unit(&mut rng), rng.random_range(0.0..=1.0))).collect();
        let p = PlaneFitProblem {
            normals: directions.iter().map(|d| d.0).collect(),
            directions,
        };
        let init = ok(init_plane(&p))?;
        let q = direction_matrix(&p.directions);
        let brute = sweep.iter().map(|s| (s.transpose() * q * s)[0]).fold(f64::INFINITY, f64::min);
        let rel = (init.objective - brute).abs() / brute.abs().max(1e-300);
        ensure(init.objective <= brute + 1e-12 && rel <= 1e-3, || {
            format!("set {set}: objective {} vs sweep {brute}", init.objective)
        })?;
        worst = worst.max(rel);
    }
    Ok(format!("worst relative gap {worst:.2e}"))
}

/// Panel problem with every residual block active and random geometry.
fn random_problem(rng: &mut ChaCha8Rng, mode: MomentMode) -> Result<Problem, String> {
    let grid = ok(ControlGrid::from_fn(7, 4, |i, j| {
        Vec3::new(
            i as f64 + rng.random_range(-0.1..0.1),
            j as f64 + rng.random_range(-0.1..0.1),
            0.3 * (i as f64 * 0.7).sin() + 0.2 * (j as f64 * 0.5).cos() + rng.random_range(-0.1..0.1),
        )
    }))?;
    let model = ok(build_panel_grid(2, 1, grid))?;
    let s = ok(group_by_panel(&model, (3, 3)))?;
    let specs = [
        devpanel::paneling::PanelSpec::new(0, PanelType::Cone(None)),
        devpanel::paneling::PanelSpec::new(1, PanelType::Cone(Some(30.0))),
    ];
    let mut patches = ok(apply_panel_spec(s.patches, &specs))?;
    for p in &mut patches {
        p.plane.v = random_unit(rng) * rng.random_range(0.8..1.2);
        p.axis_moment = Some(random_unit(rng) * rng.random_range(0.1..1.0));
    }
    patches[0].plane.d = rng.random_range(-0.5..0.5);
    let pts: Vec<Vec3> = (0..200)
        .map(|_| Vec3::new(rng.random_range(0.0..6.0), rng.random_range(0.0..3.0), rng.random_range(-0.5..0.5)))
        .collect();
    let normals: Vec<Vec3> = (0..200).map(|_| random_unit(rng)).collect();
    let reference = ok(devpanel::kdtree::ReferenceCloud::new(pts, normals))?;
    let weights = EnergyWeights {
        w_f1: 0.4,
        lambda1: 1.5,
        lambda2: 0.8,
        ..EnergyWeights::new(1.3, 0.7, 2.0, 0.5)
    };
    let close = ok(make_grid(4, 4))?.params;
    ok(ok(ok(Problem::new(model, &s.params, patches, weights))?.with_closeness(&close, reference))?.with_moment_mode(mode))
}

fn jacobian_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for state in 0..20 {
        let mode = if state % 2 == 0 { MomentMode::Variable } else { MomentMode::Refit };
        let p = random_problem(&mut rng, mode)?;
        let mut x = p.pack();
        for xi in &mut x {
            *xi += rng.random_range(-0.05..0.05);
        }
        let lin = ok(p.linearize(&x))?;
        let blocks = ok(p.blocks(&x, &lin))?;
        // every block is polynomial of degree <= 4 in x for a fixed
        // linearization, where the five-point stencil is exact
        let h = 1e-2;
        let at = |c: usize, t: f64| -> Result<Vec<Vec<f64>>, String> {
            let mut y = x.clone();
            y[c] += t;
            Ok(ok(p.blocks(&y, &lin))?.into_iter().map(|b| b.values).collect())
        };
        for c in 0..x.len() {
            let (m2, m1, p1, p2) = (at(c, -2.0 * h)?, at(c, -h)?, at(c, h)?, at(c, 2.0 * h)?);
            for (b, block) in blocks.iter().enumerate() {
                let dense = block.jacobian.to_dense(x.len());
                for i in 0..block.values.len() {
                    let fd = (m2[b][i] - 8.0 * m1[b][i] + 8.0 * p1[b][i] - p2[b][i]) / (12.0 * h);
                    let an = dense[i][c];
                    let scale = an.abs().max(fd.abs());
                    if scale < 1e-12 {
                        continue;
                    }
                    let rel = (an - fd).abs() / scale;
                    ensure(rel <= 1e-5, || {
                        format!("state {state}, {:?} row {i} col {c}: {an} vs {fd}", block.kind)
                    })?;
                    worst = worst.max(rel);
                    checked += 1;
                }
            }
        }
    }
    Ok(format!("{checked} entries, worst relative error {worst:.2e}"))
}

fn cylinder_recovery(h: &mut Histories) -> Outcome {
    let (problem, report) = ok(common::cylinder_recovery(true))?;
    let (first, last) = (&report.history[0], &report.history[report.history.len() - 1]);
    let ratio = first.e_d / last.e_d;
    let thickness = ok(problem_gauss_image(&problem))?.thickness;
    h.0.push(("cylinder recovery", report.history.clone()));
    ensure(report.history.len() <= 21 && ratio >= 1e6 && thickness <= 1e-4, || {
        format!(
            "E_d reduced {ratio:.2e}x, thickness {thickness:.2e} after {} iterations",
            last.iteration
        )
    })?;
    Ok(format!("E_d reduced {ratio:.2e}x, thickness {thickness:.2e}"))
}

fn single_panel_thinning(h: &mut Histories) -> Outcome {
    let mut problem = ok(common::paraboloid_problem())?;
    ensure(problem.dev_rows().len() == 169 && problem.layout().len() == 52, || {
        format!("{} samples, {} variables", problem.dev_rows().len(), problem.layout().len())
    })?;
    let probe = ok(make_grid(25, 25))?.params;
    let k0 = ok(curvature_map(problem.model(), &probe, false))?.percentile_abs(90.0);
    let report = ok(optimize(&mut problem, &SolverConfig::with_iterations(10)))?;
    let k1 = ok(curvature_map(problem.model(), &probe, false))?.percentile_abs(90.0);
    let (first, last) = (&report.history[0], &report.history[report.history.len() - 1]);
    let reduction = 1.0 - last.e_d / first.e_d;
    h.0.push(("single panel", report.history.clone()));
    ensure(reduction >= 0.99 && k0 >= 10.0 * k1, || {
        format!("E_d reduced by {:.2}%, p90 |K| {k0:.2e} -> {k1:.2e}", 100.0 * reduction)
    })?;
    Ok(format!("E_d reduced by {:.4}%, p90 |K| {k0:.2e} -> {k1:.2e}", 100.0 * reduction))
}

fn torus_paneling(h: &mut Histories) -> Outcome {
    let r = ok(common::torus_paneling(true))?;
    h.0.push(("torus fit", r.fit.history.clone()));
    h.0.push(("torus paneling", r.solve.history.clone()));
    let worst_plane = r.panels.iter().map(|p| p.max_plane_distance).fold(0.0, f64::max);
    let worst_cop = r.panels.iter().map(|p| p.max_coplanarity).fold(0.0, f64::max);
    ensure(r.panels.len() == 5 && r.panels.iter().all(|p| p.d == 0.0), || {
        "panel offsets not fixed at 0".into()
    })?;
    ensure(r.solve.history.len() <= 11 && worst_plane <= 1e-3 && worst_cop <= 1e-3, || {
        format!("max |n.v| {worst_plane:.2e}, max coplanarity {worst_cop:.2e}")
    })?;
    Ok(format!("max |n.v| {worst_plane:.2e}, max coplanarity {worst_cop:.2e}"))
}

fn cone_round_trip(h: &mut Histories) -> Outcome {
    let r = ok(common::cone_round_trip())?;
    h.0.push(("cone", r.solve.history.clone()));
    let p = &r.panels[0];
    let (axis, _) = p.axis.ok_or("no axis reported")?;
    let angle = axis.cross(&Vec3::z()).norm().atan2(axis.dot(&Vec3::z()).abs());
    let want = common::CONE_HALF_ANGLE.sin();
    ensure((p.distance - want).abs() <= 1e-6 && angle <= 1e-6, || {
        format!("d = {:.9}, axis off by {angle:.2e} rad", p.distance)
    })?;
    Ok(format!("d = {:.9}, axis off by {angle:.2e} rad", p.distance))
}

fn monotonicity(h: &Histories) -> Outcome {
    ensure(h.0.len() >= 5, || format!("only {} histories collected", h.0.len()))?;
    let mut rows = 0;
    for (name, hist) in &h.0 {
        for w in hist.windows(2) {
            ensure(w[1].e_total <= w[0].e_total, || {
                format!(
                    "{name}: energy rose at iteration {}: {} -> {}",
                    w[1].iteration, w[0].e_total, w[1].e_total
                )
            })?;
        }
        for r in hist {
            let rel = (r.residual_sq - r.e_total).abs() / r.e_total.abs().max(1e-300);
            ensure(rel <= 1e-9 || (r.residual_sq - r.e_total).abs() <= 1e-300, || {
                format!(
                    "{name}: iteration {} has |r|^2 {} vs E_total {}",
                    r.iteration, r.residual_sq, r.e_total
                )
            })?;
            rows += 1;
        }
    }
    Ok(format!("{} runs, {rows} logged iterations", h.0.len()))
}

fn induced_rulings() -> Outcome {
    let (problem, _) = ok(common::cylinder_recovery(true))?;
    let rulings = ok(problem_rulings(&problem))?;
    let mut aligned = 0;
    for (_, s) in &rulings {
        let angle = s.r_o.cross(&Vec3::z()).norm().atan2(s.r_o.dot(&Vec3::z()).abs());
        if angle <= 1e-2 {
            aligned += 1;
        }
        let inv = [
            s.r_t.dot(&s.r_o),
            s.r_o.dot(&s.q),
            s.r_t.dot(&s.q),
            s.r_t.norm() - 1.0,
            s.r_o.norm() - 1.0,
            s.q.norm() - 1.0,
        ];
        ensure(inv.iter().all(|x| x.abs() <= 1e-9), || format!("orthogonality violated: {inv:?}"))?;
    }
    let frac = aligned as f64 / rulings.len() as f64;
    ensure(frac >= 0.95, || format!("{:.1}% of samples aligned", 100.0 * frac))?;
    Ok(format!("{:.1}% of {} samples within 1e-2 rad", 100.0 * frac, rulings.len()))
}

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn read_outputs(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files: Vec<(String, Vec<u8>)> = ok(std::fs::read_dir(dir))?
        .map(|e| {
            let e = ok(e)?;
            Ok((e.file_name().to_string_lossy().into_owned(), ok(std::fs::read(e.path()))?))
        })
        .collect::<Result<_, String>>()?;
    files.sort();
    Ok(files)
}

fn cli_run(cmd: &str, config: &Path, out: &Path) -> Result<Duration, String> {
    let t = Instant::now();
    let status = ok(Command::new(env!("CARGO_BIN_EXE_devpanel"))
        .args([cmd, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .stdout(std::process::Stdio::null())
        .status())?;
    ensure(status.code() == Some(0), || format!("`{cmd}` exited with {status}"))?;
    Ok(t.elapsed())
}

fn cli_end_to_end() -> Outcome {
    let tmp = ok(tempfile::tempdir())?;
    let mut out = Vec::new();
    for (cmd, cfg, extra) in [
        ("develop", "cylinder/develop.cfg", None),
        ("panelize", "torus/panelize.cfg", Some("panels.csv")),
    ] {
        let config = scenarios_dir().join(cfg);
        let dir = tmp.path().join(cmd);
        let t1 = cli_run(cmd, &config, &dir)?;
        let first = read_outputs(&dir)?;
        ok(std::fs::remove_dir_all(&dir))?;
        let t2 = cli_run(cmd, &config, &dir)?;
        let second = read_outputs(&dir)?;
        let names: Vec<&str> = first.iter().map(|f| f.0.as_str()).collect();
        for want in ["surface.obj", "surface_ctrl.obj", "gauss.xyz", "gauss_planes.csv", "history.csv"]
            .into_iter()
            .chain(extra)
        {
            ensure(names.contains(&want), || format!("`{cmd}` did not write {want}"))?;
        }
        ensure(first == second, || format!("`{cmd}` outputs differ between runs"))?;
        let slowest = t1.max(t2).as_secs_f64();
        ensure(slowest < 60.0, || format!("`{cmd}` took {slowest:.1} s"))?;
        if cmd == "develop" {
            let rows = ok(read_history(&dir.join("history.csv")))?;
            let ratio = rows[rows.len() - 1].1[1] / rows[0].1[1];
            ensure(ratio <= 1e-6, || format!("develop E_d ratio {ratio:.2e}"))?;
        }
        out.push(format!("{cmd} {slowest:.1} s"));
    }
    Ok(out.join(", ") + ", byte-identical reruns")
}

struct Criterion<'a> {
    id: usize,
    name: &'a str,
    budget: f64,
    run: Box<dyn FnOnce(&mut Histories) -> Outcome + 'a>,
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        Criterion {
            id: 1,
            name: "layout of the 7x13 net with 5x5 patches",
            budget: 1.0,
            run: Box::new(|_| layout_example()),
        },
        Criterion {
            id: 2,
            name: "layout of 3/5/10/30-panel grids",
            budget: 1.0,
            run: Box::new(|_| panel_layouts()),
        },
        Criterion {
            id: 3,
            name: "plane initialization vs sphere sweep",
            budget: 30.0,
            run: Box::new(|_| plane_oracle()),
        },
        Criterion {
            id: 4,
            name: "analytic vs finite-difference Jacobians",
            budget: 60.0,
            run: Box::new(|_| jacobian_check()),
        },
        Criterion {
            id: 5,
            name: "perturbed cylinder recovery",
            budget: 30.0,
            run: Box::new(cylinder_recovery),
        },
        Criterion {
            id: 6,
            name: "single doubly curved panel thinning",
            budget: 10.0,
            run: Box::new(single_panel_thinning),
        },
        Criterion {
            id: 7,
            name: "torus sector with five cylinder panels",
            budget: 30.0,
            run: Box::new(torus_paneling),
        },
        Criterion {
            id: 8,
            name: "cone offset and axis round trip",
            budget: 10.0,
            run: Box::new(cone_round_trip),
        },
        Criterion {
            id: 9,
            name: "monotone energies and residual consistency",
            budget: f64::INFINITY,
            run: Box::new(|h| monotonicity(h)),
        },
        Criterion {
            id: 10,
            name: "induced rulings on the recovered cylinder",
            budget: 30.0,
            run: Box::new(|_| induced_rulings()),
        },
        Criterion {
            id: 11,
            name: "command line end to end",
            budget: 240.0,
            run: Box::new(|_| cli_end_to_end()),
        },
    ];
    let mut histories = Histories::default();
    let mut failed = 0;
    for c in criteria {
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| (c.run)(&mut histories))).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = t.elapsed().as_secs_f64();
        let result = result.and_then(|detail| {
            if secs < c.budget {
                Ok(detail)
            } else {
                Err(format!("{detail}; took {secs:.2} s, budget {} s", c.budget))
            }
        });
        match result {
            Ok(detail) => println!("PASS  [{:>2}] {} ({detail}) {secs:.2} s", c.id, c.name),
            Err(why) => {
                failed += 1;
                println!("FAIL  [{:>2}] {}: {why} {secs:.2} s", c.id, c.name);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
