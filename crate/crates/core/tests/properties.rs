//! Property tests of geometric and optimization invariants.

mod common;

use std::collections::HashSet;
use std::f64::consts::PI;

use nalgebra::{Matrix2, Quaternion, UnitQuaternion, Vector2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use devpanel::analysis::problem_gauss_image;
use devpanel::diffgeo::{gaussian_curvature, principal, PointFrame};
use devpanel::energy::{BlockKind, EnergyWeights, Problem};
use devpanel::init::{direction_matrix, init_axis_moment, init_plane, PlaneFitProblem};
use devpanel::init::axis_point;
use devpanel::paneling::{apply_panel_spec, initialize_patches, develop_problem, panelize, DevelopSetup, PanelSpec, PanelType, PanelizeOptions};
use devpanel::sampling::{group_by_panel, group_overlapping, make_grid};
use devpanel::solver::{optimize, optimize_observed, IterationRecord, SolverConfig};
use devpanel::surface::{build_panel_grid, precompute_rows, ControlGrid, Quantity, SurfaceModel};
use devpanel::synthetic::{cone, cylinder, fit_bspline, fit_panels, paraboloid, reference_cloud};
use devpanel::Vec3;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_unit(r: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Height field over the unit square with random control heights.
fn wavy_grid(r: &mut ChaCha8Rng, rows: usize, cols: usize, amplitude: f64) -> ControlGrid {
    ControlGrid::from_fn(rows, cols, |i, j| {
        Vec3::new(
            i as f64 / (rows - 1) as f64,
            j as f64 / (cols - 1) as f64,
            amplitude * r.random_range(-1.0..1.0),
        )
    })
    .unwrap()
}

fn random_model(seed: u64, panels: bool, a: usize, b: usize) -> SurfaceModel {
    let mut r = rng(seed);
    if panels {
        build_panel_grid(a, b, wavy_grid(&mut r, 3 * a + 1, 3 * b + 1, 0.3)).unwrap()
    } else {
        SurfaceModel::bspline(wavy_grid(&mut r, a + 3, b + 3, 0.3)).unwrap()
    }
}

fn rigid_motion(seed: u64) -> (UnitQuaternion<f64>, Vec3) {
    let mut r = rng(seed);
    let q = Quaternion::new(
        r.random_range(-1.0..1.0),
        r.random_range(-1.0..1.0),
        r.random_range(-1.0..1.0),
        r.random_range(-1.0..1.0),
    );
    let t = Vec3::new(r.random_range(-5.0..5.0), r.random_range(-5.0..5.0), r.random_range(-5.0..5.0));
    (UnitQuaternion::from_quaternion(q), t)
}

fn greville(knots: &[f64], n: usize) -> Vec<f64> {
    (0..n).map(|i| (knots[i + 1] + knots[i + 2] + knots[i + 3]) / 3.0).collect()
}

fn bernstein(t: f64) -> [f64; 4] {
    let s = 1.0 - t;
    [s * s * s, 3.0 * s * s * t, 3.0 * s * t * t, t * t * t]
}

/// Point of the Bézier panel `r` at local parameters `(s, t)` in `[0, 1]²`.
fn panel_point(model: &SurfaceModel, r: usize, s: f64, t: f64) -> Vec3 {
    let idx = model.panel_indices(r).unwrap();
    let pts = model.control_points();
    let (bs, bt) = (bernstein(s), bernstein(t));
    let mut p = Vec3::zeros();
    for i in 0..4 {
        for j in 0..4 {
            p += pts[idx[i * 4 + j]] * (bs[i] * bt[j]);
        }
    }
    p
}

/// Max distance between the shared edges of neighbouring panels.
fn max_seam_gap(model: &SurfaceModel) -> f64 {
    let (rows, cols) = model.panel_dims();
    let mut gap: f64 = 0.0;
    for a in 0..rows {
        for b in 0..cols {
            let r = a * cols + b;
            for k in 0..=10 {
                let t = k as f64 / 10.0;
                if a + 1 < rows {
                    gap = gap.max((panel_point(model, r, 1.0, t) - panel_point(model, r + cols, 0.0, t)).norm());
                }
                if b + 1 < cols {
                    gap = gap.max((panel_point(model, r, t, 1.0) - panel_point(model, r + 1, t, 0.0)).norm());
                }
            }
        }
    }
    gap
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn basis_rows_sum_to_one_and_reproduce_linear_functions(
        n_u in 4usize..10, n_v in 4usize..10, u in 0.0..=1.0f64, v in 0.0..=1.0f64,
        a in -3.0..3.0f64, b in -3.0..3.0f64, c in -3.0..3.0f64,
    ) {
        let knots = |n| devpanel::surface::KnotVector::uniform_clamped(n).unwrap();
        let (ku, kv) = (knots(n_u), knots(n_v));
        let (gu, gv) = (greville(ku.knots(), n_u), greville(kv.knots(), n_v));
        let affine = |x: f64, y: f64| Vec3::new(x, y, a * x + b * y + c);
        let grid = ControlGrid::from_fn(n_u, n_v, |i, j| affine(gu[i], gv[j])).unwrap();
        let model = SurfaceModel::bspline(grid).unwrap();
        let rows = model.rows_at(u, v).unwrap();
        let value = rows.basis_row(Quantity::Value).sum();
        prop_assert!((value - 1.0).abs() <= 1e-12);
        for q in [Quantity::Du, Quantity::Dv, Quantity::Duu, Quantity::Duv, Quantity::Dvv] {
            let row = rows.basis_row(q);
            let size: f64 = row.entries.iter().map(|e| e.1.abs()).sum();
            prop_assert!(row.sum().abs() <= 1e-12 * size.max(1.0));
        }
        let p = model.eval(u, v).unwrap();
        prop_assert!((p - affine(u, v)).norm() <= 1e-12 * (1.0 + affine(u, v).norm()));
    }

    #[test]
    fn panel_grids_are_continuous_across_seams(seed: u64, rows in 1usize..4, cols in 1usize..4) {
        let model = random_model(seed, true, rows, cols);
        prop_assert!(max_seam_gap(&model) <= 1e-12);
        // the global evaluation agrees with the panel it lands in
        for r in 0..model.panel_count() {
            let ([u0, u1], [v0, v1]) = model.panel_domain(r);
            let (s, t) = (0.3, 0.7);
            let p = model.eval(u0 + s * (u1 - u0), v0 + t * (v1 - v0)).unwrap();
            prop_assert!((p - panel_point(&model, r, s, t)).norm() <= 1e-12);
        }
    }

    #[test]
    fn cached_rows_follow_control_updates(seed: u64, panels: bool, a in 1usize..4, b in 1usize..4) {
        let mut model = random_model(seed, panels, a, b);
        let mut r = rng(seed ^ 0x5eed);
        let params: Vec<(f64, f64)> = (0..20).map(|_| (r.random_range(0.0..=1.0), r.random_range(0.0..=1.0))).collect();
        let rows = precompute_rows(&model, &params).unwrap();
        let moved: Vec<Vec3> = model.control_points().iter().map(|p| p + random_unit(&mut r) * 0.5).collect();
        model.set_control_points(&moved).unwrap();
        for (row, &(u, v)) in rows.iter().zip(&params) {
            let cached = row.point(model.control_points());
            let direct = model.derivatives(u, v).unwrap();
            for (x, y) in [
                (cached.position, direct.position),
                (cached.su, direct.su),
                (cached.sv, direct.sv),
                (cached.suu, direct.suu),
                (cached.suv, direct.suv),
                (cached.svv, direct.svv),
            ] {
                prop_assert!((x - y).norm() <= 1e-12 * (1.0 + y.norm()));
            }
        }
    }

    #[test]
    fn principal_curvatures_diagonalize_the_shape_operator(seed: u64, u in 0.0..=1.0f64, v in 0.0..=1.0f64) {
        let model = random_model(seed, false, 3, 4);
        let frame = PointFrame::new(&model.derivatives(u, v).unwrap()).unwrap();
        let pd = principal(&frame).unwrap();
        let k = gaussian_curvature(&frame).unwrap();
        let scale = pd.kappa1.abs().max(pd.kappa2.abs());
        prop_assume!(!pd.umbilic && k.abs() > 1e-6 * scale * scale);
        prop_assert!((pd.kappa1 * pd.kappa2 - k).abs() <= 1e-8 * k.abs());
        // parameter-space coordinates of q1 and q2, then II(x, y) against κ I(x, y)
        let basis = Matrix2::new(frame.su.dot(&frame.su), frame.su.dot(&frame.sv), frame.su.dot(&frame.sv), frame.sv.dot(&frame.sv));
        let inv = basis.try_inverse().unwrap();
        let coords = |q: &Vec3| inv * Vector2::new(frame.su.dot(q), frame.sv.dot(q));
        let second = Matrix2::new(
            frame.normal.dot(&frame.suu), frame.normal.dot(&frame.suv),
            frame.normal.dot(&frame.suv), frame.normal.dot(&frame.svv),
        );
        let (c1, c2) = (coords(&pd.q1), coords(&pd.q2));
        prop_assert!(pd.q1.dot(&pd.q2).abs() <= 1e-12);
        prop_assert!((c1.dot(&(second * c2))).abs() <= 1e-8 * scale);
        prop_assert!((c1.dot(&(second * c1)) - pd.kappa1).abs() <= 1e-8 * scale);
        prop_assert!((c2.dot(&(second * c2)) - pd.kappa2).abs() <= 1e-8 * scale);
    }

    #[test]
    fn patches_tile_with_the_requested_stride_and_overlap(
        l_u in 2usize..40, l_v in 2usize..40, su in 2usize..12, sv in 2usize..12, ou in 1usize..11, ov in 1usize..11,
    ) {
        prop_assume!(su <= l_u && sv <= l_v && ou < su && ov < sv);
        let grid = make_grid(l_u, l_v).unwrap();
        let patches = group_overlapping(&grid, su, sv, ou, ov).unwrap();
        let starts = |l: usize, s: usize, o: usize| (l - s).div_ceil(s - o) + 1;
        let (nu, nv) = (starts(l_u, su, ou), starts(l_v, sv, ov));
        prop_assert_eq!(patches.len(), nu * nv);
        let origin = |p: usize| (patches[p].sample_ids[0] / l_v, patches[p].sample_ids[0] % l_v);
        let ids = |p: usize| patches[p].sample_ids.iter().copied().collect::<HashSet<_>>();
        for a in 0..nu {
            for b in 0..nv {
                let p = a * nv + b;
                prop_assert_eq!(patches[p].sample_ids.len(), su * sv);
                prop_assert_eq!(ids(p).len(), su * sv);
                let (i, j) = origin(p);
                prop_assert_eq!(i, (a * (su - ou)).min(l_u - su));
                prop_assert_eq!(j, (b * (sv - ov)).min(l_v - sv));
                if a + 1 < nu {
                    let shared = ids(p).intersection(&ids(p + nv)).count();
                    if a + 2 < nu {
                        prop_assert_eq!(shared, ou * sv);
                    } else {
                        prop_assert!(shared >= ou * sv);
                    }
                }
                if b + 1 < nv {
                    let shared = ids(p).intersection(&ids(p + 1)).count();
                    if b + 2 < nv {
                        prop_assert_eq!(shared, ov * su);
                    } else {
                        prop_assert!(shared >= ov * su);
                    }
                }
            }
        }
        let covered: HashSet<usize> = patches.iter().flat_map(|p| p.sample_ids.iter().copied()).collect();
        prop_assert_eq!(covered.len(), l_u * l_v);
    }

    #[test]
    fn plane_init_minimizes_the_direction_quadratic(seed: u64, count in 1usize..30) {
        let mut r = rng(seed);
        let problem = PlaneFitProblem {
            directions: (0..count).map(|_| (random_unit(&mut r), r.random_range(0.0..=1.0))).collect(),
            normals: (0..count).map(|_| random_unit(&mut r)).collect(),
        };
        let init = init_plane(&problem).unwrap();
        let v = init.plane.v;
        let q = direction_matrix(&problem.directions);
        prop_assert!((v.norm() - 1.0).abs() <= 1e-12);
        let value = |x: &Vec3| x.dot(&(q * x));
        for _ in 0..2000 {
            let x = random_unit(&mut r);
            prop_assert!(value(&v) <= value(&x) + 1e-12 * q.trace().max(1.0));
        }
    }

    #[test]
    fn axis_moment_is_orthogonal_to_the_axis(seed: u64, count in 2usize..30) {
        let mut r = rng(seed);
        let lines: Vec<(Vec3, Vec3)> = (0..count)
            .map(|_| {
                let n = random_unit(&mut r);
                let p = random_unit(&mut r) * r.random_range(0.0..4.0);
                (n, p.cross(&n))
            })
            .collect();
        let v = random_unit(&mut r) * r.random_range(0.5..2.0);
        let m = init_axis_moment(&lines, &v).unwrap().moment;
        prop_assert!(m.dot(&v).abs() <= 1e-12 * (1.0 + m.norm() * v.norm()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn closeness_vanishes_on_the_reference(seed: u64, l in 4usize..20) {
        let mut r = rng(seed);
        let model = SurfaceModel::bspline(wavy_grid(&mut r, 6, 6, 0.2)).unwrap();
        let setup = DevelopSetup { samples: (10, 10), patch_size: (5, 5), overlap: (2, 2), closeness_samples: (l, l), parallel: false };
        let problem = develop_problem(model, None, &setup, EnergyWeights::new(0.0, 0.0, 1.0, 0.0)).unwrap();
        let x = problem.pack();
        let sys = problem.assemble(&x, &problem.linearize(&x).unwrap()).unwrap();
        prop_assert_eq!(sys.energies.e_c, 0.0);
        prop_assert_eq!(sys.energies.total, 0.0);
    }

    #[test]
    fn rotational_residuals_vanish_on_a_moved_cone(
        motion: u64, half_angle in 0.2..1.3f64, arc in 0.3..2.0f64, t0 in 0.5..1.5f64,
    ) {
        let (rot, t) = rigid_motion(motion);
        let f = cone(half_angle, arc, t0, t0 + 1.0);
        let model = fit_panels(1, 1, move |u, v| rot * f(u, v) + t).unwrap();
        let sampling = group_by_panel(&model, (6, 6)).unwrap();
        let mut patches = apply_panel_spec(sampling.patches, &[PanelSpec::new(0, PanelType::Cone(None))]).unwrap();
        let axis = rot * Vec3::z();
        patches[0].plane.v = axis;
        patches[0].plane.d = half_angle.sin();
        patches[0].axis_moment = Some(t.cross(&axis));
        let problem = Problem::new(model, &sampling.params, patches, EnergyWeights::new(1.0, 1.0, 0.0, 0.0)).unwrap();
        let x = problem.pack();
        let blocks = problem.blocks(&x, &problem.linearize(&x).unwrap()).unwrap();
        for b in &blocks {
            if matches!(b.kind, BlockKind::Developability | BlockKind::Coplanarity | BlockKind::Pluecker) {
                let worst = b.values.iter().fold(0.0f64, |m, r| m.max(r.abs()));
                prop_assert!(worst <= 1e-12 * (1.0 + t.norm()), "{:?} residual {worst:e}", b.kind);
            }
        }
    }

    #[test]
    fn exact_cones_yield_rulings_and_axis(motion: u64, half_angle in 0.2..1.3f64, arc in 0.3..2.0f64, t0 in 0.5..1.5f64) {
        let (rot, t) = rigid_motion(motion);
        let f = cone(half_angle, arc, t0, t0 + 1.0);
        let g = move |u, v| rot * f(u, v) + t;
        let model = fit_panels(1, 1, g.clone()).unwrap();
        let sampling = group_by_panel(&model, (6, 6)).unwrap();
        for &(u, v) in &sampling.params {
            let pd = principal(&PointFrame::new(&model.derivatives(u, v).unwrap()).unwrap()).unwrap();
            let ruling = (g(u, v) - t).normalize();
            let angle = pd.q2.cross(&ruling).norm().asin();
            prop_assert!(angle <= 1e-6, "ruling off by {angle:e} rad");
        }
        let mut patches = apply_panel_spec(sampling.patches, &[PanelSpec::new(0, PanelType::Cone(None))]).unwrap();
        initialize_patches(&model, &sampling.params, &mut patches).unwrap();
        let (v, m) = (patches[0].plane.v, patches[0].axis_moment.unwrap());
        let axis = rot * Vec3::z();
        prop_assert!(v.normalize().cross(&axis).norm().asin() <= 1e-6);
        // the apex lies on the recovered axis line
        let offset = t - axis_point(&v, &m);
        let off_line = (offset - v.normalize() * offset.dot(&v.normalize())).norm();
        prop_assert!(off_line <= 1e-5 * (1.0 + t.norm()), "apex {off_line:e} off the axis");
    }

    #[test]
    fn optimization_commutes_with_rigid_motions(motion: u64) {
        let (rot, t) = rigid_motion(motion);
        let base = fit_bspline(5, 5, paraboloid(0.5, -0.3, 1.0)).unwrap();
        let moved_pts: Vec<Vec3> = base.control_points().iter().map(|p| rot * p + t).collect();
        let moved = SurfaceModel::bspline(ControlGrid::new(5, 5, moved_pts).unwrap()).unwrap();
        let setup = DevelopSetup { samples: (9, 9), patch_size: (5, 5), overlap: (2, 2), closeness_samples: (9, 9), parallel: false };
        let weights = EnergyWeights::new(100.0, 0.0, 1.0, 0.1);
        let config = SolverConfig::with_iterations(5);
        let run = |m: SurfaceModel| {
            let mut p = develop_problem(m, None, &setup, weights).unwrap();
            let report = optimize(&mut p, &config).unwrap();
            (p, report)
        };
        let (p0, r0) = run(base);
        let (p1, r1) = run(moved);
        prop_assert_eq!(r0.history.len(), r1.history.len());
        for (a, b) in r0.history.iter().zip(&r1.history) {
            prop_assert!((a.residual_sq - a.e_total).abs() <= 1e-10 * a.e_total);
            prop_assert!((a.e_total - b.e_total).abs() <= 1e-8 * a.e_total, "iteration {}: {} vs {}", a.iteration, a.e_total, b.e_total);
        }
        for (a, b) in p0.model().control_points().iter().zip(p1.model().control_points()) {
            prop_assert!((rot * a + t - b).norm() <= 1e-8);
        }
    }
}

/// 2x2 paneling of a cylinder sector mixing every panel type.
fn mixed_paneling(cone_deg: f64) -> devpanel::paneling::PanelizeResult {
    let reference = reference_cloud(&cylinder(1.0, PI / 2.0, 2.0), 40, 40).unwrap();
    let specs = [
        PanelSpec::new(0, PanelType::Cone(Some(cone_deg))),
        PanelSpec::new(1, PanelType::Cylinder),
        PanelSpec::new(2, PanelType::Plane),
        PanelSpec::new(3, PanelType::FreeDevelopable),
    ];
    let options = PanelizeOptions {
        fit_iterations: 5,
        parallel: false,
        ..PanelizeOptions::default()
    };
    panelize(
        &reference,
        2,
        2,
        &specs,
        EnergyWeights::new(100.0, 1.0, 1.0, 0.1),
        &SolverConfig::with_iterations(4),
        &options,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn paneling_keeps_prescribed_offsets_seams_and_report_consistency(cone_deg in 5.0..85.0f64) {
        let result = mixed_paneling(cone_deg);
        let problem = &result.problem;
        let expected = [Some(cone_deg.to_radians().sin()), Some(0.0), Some(1.0), None];
        for (j, want) in expected.iter().enumerate() {
            if let Some(d) = want {
                prop_assert_eq!(problem.patches()[j].plane.d.to_bits(), d.to_bits());
                prop_assert_eq!(result.panels[j].d.to_bits(), d.to_bits());
            }
        }
        prop_assert!(max_seam_gap(problem.model()) <= 1e-12);

        // weighted developability residuals, one per sample, panel by panel
        let x = problem.pack();
        let sys = problem.assemble(&x, &problem.linearize(&x).unwrap()).unwrap();
        let sw = problem.weights().w_d.sqrt();
        let mut at = 0;
        for (p, report) in problem.patches().iter().zip(&result.panels) {
            let n = p.sample_ids.len();
            let worst = sys.r[at..at + n].iter().fold(0.0f64, |m, r| m.max(r.abs())) / sw;
            prop_assert!((worst - report.max_plane_distance).abs() <= 1e-12 * (1.0 + worst));
            at += n;
        }
    }
}

/// `(iteration, E_total, thickness)` at the start and after every accepted step.
fn thickness_trace(problem: &mut Problem, iterations: usize) -> Vec<(usize, f64, f64)> {
    let mut trace = Vec::new();
    let mut observe = |p: &Problem, h: &IterationRecord| trace.push((h.iteration, h.e_total, problem_gauss_image(p).unwrap().thickness));
    optimize_observed(problem, &SolverConfig::with_iterations(iterations), Some(&mut observe)).unwrap();
    trace
}

fn assert_strictly_thinning(trace: &[(usize, f64, f64)]) {
    assert!(trace.len() > 1);
    for w in trace.windows(2) {
        assert!(
            w[1].2 <= w[0].2,
            "thickness rose from {:e} to {:e} at iteration {}",
            w[0].2,
            w[1].2,
            w[1].0
        );
    }
}

/// Energy falls at every accepted step and the final Gauss image is at
/// least `factor` times thinner than the initial one.
fn assert_thinning_trend(trace: &[(usize, f64, f64)], factor: f64) {
    for w in trace.windows(2) {
        assert!(w[1].1 < w[0].1, "energy rose at iteration {}", w[1].0);
    }
    let (first, last) = (trace[0].2, trace[trace.len() - 1].2);
    assert!(last * factor <= first, "thickness {first:e} -> {last:e}");
}

#[test]
fn gauss_image_thins_on_cylinder_recovery() {
    let mut problem = common::bumped_cylinder_problem(false).unwrap();
    assert_thinning_trend(&thickness_trace(&mut problem, 20), 100.0);
}

#[test]
fn gauss_image_thins_on_torus_paneling() {
    let mut problem = common::torus_paneling_problem(false).unwrap();
    assert_thinning_trend(&thickness_trace(&mut problem, 10), 100.0);
}

// Once E_d and E_c are of similar weighted size, accepted steps trade one
// for the other: total energy still falls but the max plane distance
// zig-zags by up to an order of magnitude.
#[test]
#[ignore = "does not hold: thickness oscillates while total energy decreases"]
fn gauss_image_thins_monotonically_on_cylinder_recovery() {
    let mut problem = common::bumped_cylinder_problem(false).unwrap();
    assert_strictly_thinning(&thickness_trace(&mut problem, 20));
}

#[test]
#[ignore = "does not hold: the first step thickens the seed Gauss image"]
fn gauss_image_thins_monotonically_on_torus_paneling() {
    let mut problem = common::torus_paneling_problem(false).unwrap();
    assert_strictly_thinning(&thickness_trace(&mut problem, 10));
}

#[test]
fn observed_solve_matches_plain_solve() {
    let (plain, report) = common::cylinder_recovery(false).unwrap();
    let mut observed = common::bumped_cylinder_problem(false).unwrap();
    let mut calls = 0;
    let mut count = |_: &Problem, _: &IterationRecord| calls += 1;
    let again = optimize_observed(&mut observed, &SolverConfig::with_iterations(20), Some(&mut count)).unwrap();
    assert_eq!(calls, report.history.len());
    assert_eq!(plain.pack(), observed.pack());
    assert_eq!(
        report.history.iter().map(|h| h.e_total).collect::<Vec<_>>(),
        again.history.iter().map(|h| h.e_total).collect::<Vec<_>>()
    );
}
