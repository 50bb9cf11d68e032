//! Scenario builders shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use devpanel::energy::{EnergyWeights, Problem};
use devpanel::kdtree::ReferenceCloud;
use devpanel::paneling::{
    develop_problem, paneling_problem, panelize, uniform_specs, DevelopSetup, PanelType, PanelizeOptions, PanelizeResult,
};
use devpanel::solver::{optimize, SolveReport, SolverConfig};
use devpanel::synthetic::{bumped_cylinder, cone, fit_bspline, fit_panels, paraboloid, reference_cloud, torus};
use devpanel::Result;

pub const CYL_RADIUS: f64 = 1.0;
pub const CYL_ANGLE: f64 = PI / 2.0;
pub const CYL_HEIGHT: f64 = 2.0;

/// 30x60 samples grouped in strips five samples wide along the rulings.
pub fn cylinder_setup(parallel: bool) -> DevelopSetup {
    DevelopSetup {
        samples: (30, 60),
        patch_size: (5, 60),
        overlap: (2, 1),
        closeness_samples: (30, 60),
        parallel,
    }
}

/// Cylinder sector with a bump of 1% of the radius, fitted with a 7x13 net.
pub fn bumped_cylinder_problem(parallel: bool) -> Result<Problem> {
    let f = bumped_cylinder(CYL_RADIUS, CYL_ANGLE, CYL_HEIGHT, 0.01 * CYL_RADIUS);
    let model = fit_bspline(7, 13, f)?;
    develop_problem(model, None, &cylinder_setup(parallel), EnergyWeights::new(100.0, 0.0, 0.01, 0.1))
}

pub fn cylinder_recovery(parallel: bool) -> Result<(Problem, SolveReport)> {
    let mut problem = bumped_cylinder_problem(parallel)?;
    let report = optimize(&mut problem, &SolverConfig::with_iterations(20))?;
    Ok((problem, report))
}

/// One anticlastic Bézier panel sampled 13x13 as a single patch.
pub fn paraboloid_problem() -> Result<Problem> {
    let model = fit_bspline(4, 4, paraboloid(0.5, -0.3, 1.0))?;
    let setup = DevelopSetup {
        samples: (13, 13),
        patch_size: (13, 13),
        overlap: (1, 1),
        closeness_samples: (13, 13),
        parallel: false,
    };
    develop_problem(model, None, &setup, EnergyWeights::new(100.0, 0.0, 1.0, 0.0))
}

pub const TORUS_THETA: [f64; 2] = [0.0, 0.5];
pub const TORUS_PHI: [f64; 2] = [-0.7, 0.7];

pub fn torus_reference() -> Result<ReferenceCloud> {
    reference_cloud(&torus(8.0, 2.0, TORUS_THETA, TORUS_PHI), 80, 40)
}

fn torus_options(parallel: bool) -> PanelizeOptions {
    PanelizeOptions {
        parallel,
        ..PanelizeOptions::default()
    }
}

fn torus_weights() -> EnergyWeights {
    EnergyWeights::new(100.0, 1.0, 1.0, 0.1)
}

/// Five cylinder panels in strips across the major angle of a torus sector.
pub fn torus_paneling(parallel: bool) -> Result<PanelizeResult> {
    let reference = torus_reference()?;
    panelize(
        &reference,
        5,
        1,
        &uniform_specs(5, PanelType::Cylinder),
        torus_weights(),
        &SolverConfig::with_iterations(10),
        &torus_options(parallel),
    )
}

/// The problem [`torus_paneling`] optimizes, before optimization.
pub fn torus_paneling_problem(parallel: bool) -> Result<Problem> {
    let reference = torus_reference()?;
    let specs = uniform_specs(5, PanelType::Cylinder);
    let config = SolverConfig::with_iterations(10);
    Ok(paneling_problem(&reference, 5, 1, &specs, torus_weights(), &config, &torus_options(parallel))?.0)
}

pub const CONE_HALF_ANGLE: f64 = PI / 6.0;

/// Exact cone of revolution, one free cone panel.
pub fn cone_round_trip() -> Result<PanelizeResult> {
    let f = cone(CONE_HALF_ANGLE, PI / 6.0, 1.0, 2.0);
    // nearest-point closeness is biased by O(h²) on a coarse cloud, enough
    // to tilt a narrow Gauss-image circle; the seed is already exact
    let reference = reference_cloud(&f, 160, 160)?;
    let options = PanelizeOptions {
        seed: Some(fit_panels(1, 1, &f)?.control().clone()),
        fit_iterations: 0,
        parallel: false,
        ..PanelizeOptions::default()
    };
    panelize(
        &reference,
        1,
        1,
        &uniform_specs(1, PanelType::Cone(None)),
        EnergyWeights::new(100.0, 1.0, 1.0, 0.0),
        &SolverConfig::with_iterations(20),
        &options,
    )
}
