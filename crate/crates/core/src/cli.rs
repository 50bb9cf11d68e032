//! Command-line driver.
//!
//! Exit codes: 0 on success, 2 when the configuration or an input file is
//! invalid, 1 when the computation fails (a `failure.txt` diagnostic is then
//! written to the output directory).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::analysis::{curvature_map, problem_gauss_image, problem_rulings};
use crate::config::RunConfig;
use crate::energy::{EnergyWeights, Problem};
use crate::io;
use crate::kdtree::ReferenceCloud;
use crate::paneling::{develop_problem, fit_to_reference, panelize, pca_seed, DevelopSetup, PanelizeOptions};
use crate::sampling::make_grid;
use crate::solver::{optimize, IterationRecord, SolverConfig};
use crate::surface::SurfaceModel;
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "devpanel",
    version,
    about = "Gauss-image thinning and developable paneling of B-spline surfaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a B-spline surface to a reference mesh.
    Fit(RunArgs),
    /// Thin the Gauss image of a surface toward a developable one.
    Develop(RunArgs),
    /// Approximate a reference with a grid of developable panels.
    Panelize(RunArgs),
    /// Gauss image and curvature of a surface.
    Analyze(RunArgs),
    /// Ruling directions induced by the patch planes of a surface.
    Rulings(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Configuration file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    wd: Option<f64>,
    #[arg(long)]
    wc: Option<f64>,
    #[arg(long)]
    wf: Option<f64>,
    #[arg(long)]
    wr: Option<f64>,
    /// Maximum solver iterations.
    #[arg(long)]
    iters: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn effective_config(&self) -> Result<RunConfig> {
        let mut c = RunConfig::load(&self.config)?;
        for (key, flag, slot) in [
            ("--wd", self.wd, &mut c.weights.w_d),
            ("--wc", self.wc, &mut c.weights.w_c),
            ("--wf", self.wf, &mut c.weights.w_f),
            ("--wr", self.wr, &mut c.weights.w_r),
        ] {
            if let Some(w) = flag {
                if !(w >= 0.0 && w.is_finite()) {
                    return Err(Error::Config {
                        key: key.into(),
                        message: format!("weight must be finite and >= 0, got {w}"),
                    });
                }
                *slot = w;
            }
        }
        if let Some(n) = self.iters {
            c.solver.max_iterations = n;
        }
        if let Some(o) = &self.out {
            c.out.clone_from(o);
        }
        Ok(c)
    }
}

/// Runs the command line `argv` (program name first) and returns the exit
/// code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (name, args) = match &cli.command {
        Command::Fit(a) => ("fit", a),
        Command::Develop(a) => ("develop", a),
        Command::Panelize(a) => ("panelize", a),
        Command::Analyze(a) => ("analyze", a),
        Command::Rulings(a) => ("rulings", a),
    };
    let config = match args.effective_config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let inputs = match Inputs::load(name, &config) {
        Ok(i) => i,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let result = io::write_text(&config.out.join("effective.cfg"), &config.to_text()).and_then(|()| match cli.command {
        Command::Fit(_) => run_fit(&config, &inputs),
        Command::Develop(_) => run_develop(&config, &inputs),
        Command::Panelize(_) => run_panelize(&config, &inputs),
        Command::Analyze(_) => run_analyze(&config, &inputs),
        Command::Rulings(_) => run_rulings(&config, &inputs),
    });
    match result {
        Ok(summary) => {
            print!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            let dump = config.out.join("failure.txt");
            let text = format!("command: {name}\nerror: {e}\n\n# effective configuration\n{}", config.to_text());
            if io::write_text(&dump, &text).is_ok() {
                eprintln!("diagnostics written to {}", dump.display());
            }
            1
        }
    }
}

/// Files read before any computation starts.
struct Inputs {
    surface: Option<SurfaceModel>,
    reference: Option<ReferenceCloud>,
}

impl Inputs {
    fn load(command: &str, c: &RunConfig) -> Result<Self> {
        let missing = |key: &str| Error::Config {
            key: key.into(),
            message: format!("required by `{command}`"),
        };
        let surface = c.surface.as_deref().map(io::load_control_net).transpose()?;
        let reference = c.reference.as_deref().map(io::load_reference).transpose()?;
        match command {
            "fit" | "panelize" if reference.is_none() => return Err(missing("reference")),
            "develop" if surface.is_none() && reference.is_none() => return Err(missing("surface")),
            "analyze" | "rulings" if surface.is_none() => return Err(missing("surface")),
            "panelize" => {
                c.panel_specs()?;
            }
            _ => {}
        }
        c.weights.validate().map_err(|e| Error::Config {
            key: "weights".into(),
            message: e.to_string(),
        })?;
        Ok(Self { surface, reference })
    }
}

fn setup(c: &RunConfig) -> DevelopSetup {
    DevelopSetup {
        samples: c.samples,
        patch_size: c.patch_size,
        overlap: c.overlap,
        closeness_samples: c.closeness_samples,
        parallel: c.parallel,
    }
}

fn fit_bspline_to(c: &RunConfig, reference: &ReferenceCloud) -> Result<(SurfaceModel, Vec<IterationRecord>)> {
    let seed = pca_seed(reference, c.control.0, c.control.1)?;
    let params = make_grid(c.closeness_samples.0, c.closeness_samples.1)?.params;
    let config = SolverConfig {
        max_iterations: c.fit_iterations,
        ..c.solver.clone()
    };
    let fit = fit_to_reference(
        SurfaceModel::bspline(seed)?,
        reference,
        &params,
        c.fit_w_c,
        c.fit_w_f,
        &config,
        c.parallel,
    )?;
    Ok((fit.model, fit.history))
}

fn write_surface_outputs(c: &RunConfig, problem: &Problem, history: Option<&[IterationRecord]>) -> Result<()> {
    io::export_surface(problem.model(), c.tessellation, &c.out.join("surface.obj"))?;
    let gi = problem_gauss_image(problem)?;
    io::export_gauss_image(&gi, &c.out.join("gauss.xyz"), &c.out.join("gauss_planes.csv"))?;
    if let Some(h) = history {
        io::write_history(h, &c.out.join("history.csv"))?;
    }
    Ok(())
}

fn energy_line(label: &str, h: &IterationRecord) -> String {
    format!(
        "{label}: E_total {:.6e}  E_d {:.6e}  E_r {:.6e}  E_c {:.6e}  E_f {:.6e}\n",
        h.e_total, h.e_d, h.e_r, h.e_c, h.e_f
    )
}

fn history_summary(history: &[IterationRecord]) -> String {
    let (first, last) = (&history[0], &history[history.len() - 1]);
    energy_line("initial", first) + &energy_line(&format!("final (iteration {})", last.iteration), last)
}

fn run_fit(c: &RunConfig, inputs: &Inputs) -> Result<String> {
    let reference = inputs.reference.as_ref().expect("checked on load");
    let (model, history) = fit_bspline_to(c, reference)?;
    let problem = develop_problem(model, Some(reference.clone()), &setup(c), c.weights)?;
    write_surface_outputs(c, &problem, Some(&history))?;
    let n = (c.closeness_samples.0 * c.closeness_samples.1) as f64;
    let rms = (history[history.len() - 1].e_c / n).sqrt();
    Ok(format!(
        "fitted {}x{} control net, rms tangential distance {rms:.6e}\n",
        c.control.0, c.control.1
    ))
}

fn run_develop(c: &RunConfig, inputs: &Inputs) -> Result<String> {
    let model = match &inputs.surface {
        Some(m) => m.clone(),
        None => fit_bspline_to(c, inputs.reference.as_ref().expect("checked on load"))?.0,
    };
    let mut problem = develop_problem(model, inputs.reference.clone(), &setup(c), c.weights)?;
    let report = optimize(&mut problem, &c.solver)?;
    write_surface_outputs(c, &problem, Some(&report.history))?;
    let thickness = problem_gauss_image(&problem)?.thickness;
    Ok(history_summary(&report.history) + &format!("Gauss-image thickness {thickness:.6e}, stop: {:?}\n", report.stop))
}

fn run_panelize(c: &RunConfig, inputs: &Inputs) -> Result<String> {
    let reference = inputs.reference.as_ref().expect("checked on load");
    let options = PanelizeOptions {
        dev_per_panel: c.dev_per_panel,
        closeness_per_panel: c.closeness_per_panel,
        fit_iterations: c.fit_iterations,
        fit_w_c: c.fit_w_c,
        fit_w_f: c.fit_w_f,
        moment_mode: c.moment_mode,
        seed: None,
        probe_per_panel: c.probe_per_panel,
        parallel: c.parallel,
    };
    let specs = c.panel_specs()?;
    let r = panelize(reference, c.panels.0, c.panels.1, &specs, c.weights, &c.solver, &options)?;
    write_surface_outputs(c, &r.problem, Some(&r.solve.history))?;
    if !r.fit.history.is_empty() {
        io::write_history(&r.fit.history, &c.out.join("fit_history.csv"))?;
    }
    io::write_panel_report(&r.panels, &c.out.join("panels.csv"))?;
    let mut s = history_summary(&r.solve.history);
    for p in &r.panels {
        let _ = writeln!(
            s,
            "panel {} ({}): max |n.v+d| {:.3e}  max coplanarity {:.3e}  max |K| {:.3e}",
            p.panel, p.kind, p.max_plane_distance, p.max_coplanarity, p.max_abs_k
        );
    }
    Ok(s)
}

/// Problem over the input surface with patch planes initialized but not
/// optimized.
fn analysis_problem(c: &RunConfig, inputs: &Inputs) -> Result<Problem> {
    let model = inputs.surface.clone().expect("checked on load");
    let weights = EnergyWeights { w_c: 0.0, ..c.weights };
    develop_problem(
        model,
        None,
        &DevelopSetup {
            closeness_samples: (2, 2),
            ..setup(c)
        },
        weights,
    )
}

fn run_analyze(c: &RunConfig, inputs: &Inputs) -> Result<String> {
    let problem = analysis_problem(c, inputs)?;
    write_surface_outputs(c, &problem, None)?;
    let params = make_grid(c.probe.0, c.probe.1)?.params;
    let map = curvature_map(problem.model(), &params, c.parallel)?;
    io::write_curvature(&map, &c.out.join("curvature.csv"))?;
    let thickness = problem_gauss_image(&problem)?.thickness;
    Ok(format!(
        "Gauss-image thickness {thickness:.6e}\nmax |K| {:.6e}, 90th percentile |K| {:.6e}, {} degenerate probes\n",
        map.max_abs(),
        map.percentile_abs(90.0),
        map.skipped
    ))
}

fn run_rulings(c: &RunConfig, inputs: &Inputs) -> Result<String> {
    let problem = analysis_problem(c, inputs)?;
    let rulings = problem_rulings(&problem)?;
    io::write_rulings(&rulings, &c.out.join("rulings.csv"))?;
    let flagged = rulings.iter().filter(|(_, r)| r.inflection).count();
    Ok(format!("{} ruling samples, {flagged} flagged near inflection\n", rulings.len()))
}
