//! Run configuration files.
//!
//! A configuration is a list of `key = value` lines; `#` starts a comment.
//! Keys before the first section header are general settings, followed by
//! optional `[weights]`, `[solver]` and `[panels]` sections. Integer pairs
//! may be written `7 13`, `7x13` or `7,13`. Relative paths resolve against
//! the directory of the configuration file.
//!
//! ```text
//! surface = cylinder_ctrl.obj
//! samples = 30 60
//!
//! [weights]
//! w_d = 100
//!
//! [panels]
//! default = cylinder
//! panel 2 = cone:30
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::energy::{EnergyWeights, MomentMode};
use crate::paneling::{PanelSpec, PanelType};
use crate::solver::SolverConfig;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Control net of the input surface.
    pub surface: Option<PathBuf>,
    /// Reference mesh (`.obj`) or point cloud with normals.
    pub reference: Option<PathBuf>,
    pub out: PathBuf,
    /// Control net size of a fitted B-spline surface.
    pub control: (usize, usize),
    pub samples: (usize, usize),
    pub patch_size: (usize, usize),
    pub overlap: (usize, usize),
    pub closeness_samples: (usize, usize),
    /// Panel grid `rows x cols`.
    pub panels: (usize, usize),
    pub dev_per_panel: (usize, usize),
    pub closeness_per_panel: (usize, usize),
    pub probe_per_panel: (usize, usize),
    /// Curvature probe lattice of `analyze`.
    pub probe: (usize, usize),
    pub tessellation: (usize, usize),
    pub fit_iterations: usize,
    pub fit_w_c: f64,
    pub fit_w_f: f64,
    pub moment_mode: MomentMode,
    pub parallel: bool,
    /// Reserved for randomized tie-breaks; the pipelines are deterministic.
    pub seed: u64,
    pub weights: EnergyWeights,
    pub solver: SolverConfig,
    pub panel_types: BTreeMap<usize, PanelType>,
    pub default_panel: Option<PanelType>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            surface: None,
            reference: None,
            out: PathBuf::from("out"),
            control: (7, 13),
            samples: (30, 60),
            patch_size: (5, 5),
            overlap: (2, 2),
            closeness_samples: (30, 60),
            panels: (1, 1),
            dev_per_panel: (4, 4),
            closeness_per_panel: (10, 10),
            probe_per_panel: (10, 10),
            probe: (50, 50),
            tessellation: (33, 33),
            fit_iterations: 20,
            fit_w_c: 1.0,
            fit_w_f: 0.0,
            moment_mode: MomentMode::Variable,
            parallel: crate::par::available(),
            seed: 0,
            weights: EnergyWeights::default(),
            solver: SolverConfig::default(),
            panel_types: BTreeMap::new(),
            default_panel: None,
        }
    }
}

fn cfg_err(key: &str, line: usize, message: impl std::fmt::Display) -> Error {
    Error::Config {
        key: key.to_string(),
        message: format!("line {line}: {message}"),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, line: usize, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| cfg_err(key, line, format!("cannot parse `{value}`")))
}

fn parse_f64(key: &str, line: usize, value: &str) -> Result<f64> {
    let x: f64 = parse_num(key, line, value)?;
    if !x.is_finite() {
        return Err(cfg_err(key, line, "value must be finite"));
    }
    Ok(x)
}

fn parse_pair(key: &str, line: usize, value: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = value
        .split(|c: char| c.is_whitespace() || c == 'x' || c == ',')
        .filter(|s| !s.is_empty())
        .collect();
    match parts.as_slice() {
        [a, b] => Ok((parse_num(key, line, a)?, parse_num(key, line, b)?)),
        _ => Err(cfg_err(key, line, format!("expected two integers, got `{value}`"))),
    }
}

fn parse_bool(key: &str, line: usize, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(cfg_err(key, line, format!("expected true or false, got `{value}`"))),
    }
}

/// Parses `cylinder`, `plane`, `cone`, `cone:<degrees>` or `free`.
pub fn parse_panel_type(value: &str) -> std::result::Result<PanelType, String> {
    let kind = match value {
        "cylinder" => PanelType::Cylinder,
        "plane" => PanelType::Plane,
        "free" => PanelType::FreeDevelopable,
        "cone" => PanelType::Cone(None),
        _ => match value.strip_prefix("cone:") {
            Some(deg) => PanelType::Cone(Some(deg.trim().parse().map_err(|_| format!("bad cone angle `{deg}`"))?)),
            None => return Err(format!("unknown panel type `{value}`")),
        },
    };
    kind.d_target().map_err(|e| e.to_string())?;
    Ok(kind)
}

impl RunConfig {
    /// Reads a configuration file; relative paths inside resolve against
    /// its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            key: "config".into(),
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut c = RunConfig {
            out: base.join("out"),
            ..RunConfig::default()
        };
        let mut section = String::new();
        let mut seen = std::collections::HashSet::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let name = name.trim();
                if !matches!(name, "weights" | "solver" | "panels") {
                    return Err(cfg_err(&format!("[{name}]"), line, "unknown section"));
                }
                section = name.to_string();
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(cfg_err(content, line, "expected `key = value`"));
            };
            let key = key.split_whitespace().collect::<Vec<_>>().join(" ");
            let value = value.trim();
            let qualified = if section.is_empty() {
                key.clone()
            } else {
                format!("{section}.{key}")
            };
            if !seen.insert(qualified.clone()) {
                return Err(cfg_err(&qualified, line, "key given twice"));
            }
            match section.as_str() {
                "" => c.set_general(&key, value, line, base)?,
                "weights" => c.set_weight(&key, value, line)?,
                "solver" => c.set_solver(&key, value, line)?,
                _ => c.set_panel(&key, value, line)?,
            }
        }
        Ok(c)
    }

    fn set_general(&mut self, key: &str, value: &str, line: usize, base: &Path) -> Result<()> {
        let path = || base.join(value);
        match key {
            "surface" => self.surface = Some(path()),
            "reference" => self.reference = Some(path()),
            "out" => self.out = path(),
            "control" => self.control = parse_pair(key, line, value)?,
            "samples" => self.samples = parse_pair(key, line, value)?,
            "patch_size" => self.patch_size = parse_pair(key, line, value)?,
            "overlap" => self.overlap = parse_pair(key, line, value)?,
            "closeness_samples" => self.closeness_samples = parse_pair(key, line, value)?,
            "panels" => self.panels = parse_pair(key, line, value)?,
            "dev_per_panel" => self.dev_per_panel = parse_pair(key, line, value)?,
            "closeness_per_panel" => self.closeness_per_panel = parse_pair(key, line, value)?,
            "probe_per_panel" => self.probe_per_panel = parse_pair(key, line, value)?,
            "probe" => self.probe = parse_pair(key, line, value)?,
            "tessellation" => self.tessellation = parse_pair(key, line, value)?,
            "fit_iterations" => self.fit_iterations = parse_num(key, line, value)?,
            "fit_w_c" => self.fit_w_c = parse_f64(key, line, value)?,
            "fit_w_f" => self.fit_w_f = parse_f64(key, line, value)?,
            "moment_mode" => {
                self.moment_mode = match value {
                    "variable" => MomentMode::Variable,
                    "refit" => MomentMode::Refit,
                    _ => return Err(cfg_err(key, line, format!("expected variable or refit, got `{value}`"))),
                }
            }
            "parallel" => self.parallel = parse_bool(key, line, value)?,
            "seed" => self.seed = parse_num(key, line, value)?,
            _ => return Err(cfg_err(key, line, "unknown key")),
        }
        Ok(())
    }

    fn set_weight(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let x = parse_f64(key, line, value)?;
        if x < 0.0 {
            return Err(cfg_err(key, line, "weights must be >= 0"));
        }
        let w = &mut self.weights;
        *match key {
            "w_d" => &mut w.w_d,
            "w_r" => &mut w.w_r,
            "w_c" => &mut w.w_c,
            "w_f" => &mut w.w_f,
            "w_f1" => &mut w.w_f1,
            "w_f2" => &mut w.w_f2,
            "lambda1" => &mut w.lambda1,
            "lambda2" => &mut w.lambda2,
            _ => return Err(cfg_err(key, line, "unknown weight")),
        } = x;
        Ok(())
    }

    fn set_solver(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let s = &mut self.solver;
        match key {
            "iterations" => s.max_iterations = parse_num(key, line, value)?,
            "mu0" => s.mu0 = Some(parse_f64(key, line, value)?),
            "mu_increase" => s.mu_increase = parse_f64(key, line, value)?,
            "mu_decrease" => s.mu_decrease = parse_f64(key, line, value)?,
            "max_retries" => s.max_retries = parse_num(key, line, value)?,
            "rel_tol" => s.rel_tol = parse_f64(key, line, value)?,
            "step_tol" => s.step_tol = parse_f64(key, line, value)?,
            "log_every" => s.log_every = parse_num(key, line, value)?,
            "record_time" => s.record_time = parse_bool(key, line, value)?,
            _ => return Err(cfg_err(key, line, "unknown solver key")),
        }
        s.validate().map_err(|e| cfg_err(key, line, e))
    }

    fn set_panel(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let kind = parse_panel_type(value).map_err(|m| cfg_err(key, line, m))?;
        if key == "default" {
            self.default_panel = Some(kind);
            return Ok(());
        }
        let r = key
            .strip_prefix("panel ")
            .and_then(|r| r.trim().parse().ok())
            .ok_or_else(|| cfg_err(key, line, "expected `panel <index>` or `default`"))?;
        self.panel_types.insert(r, kind);
        Ok(())
    }

    /// One spec per panel of the grid, filling gaps with the default type.
    pub fn panel_specs(&self) -> Result<Vec<PanelSpec>> {
        let count = self.panels.0 * self.panels.1;
        if let Some((&r, _)) = self.panel_types.range(count..).next() {
            return Err(Error::Config {
                key: format!("panel {r}"),
                message: format!("index outside the {}x{} panel grid", self.panels.0, self.panels.1),
            });
        }
        (0..count)
            .map(|r| {
                let kind = self
                    .panel_types
                    .get(&r)
                    .copied()
                    .or(self.default_panel)
                    .ok_or_else(|| Error::Config {
                        key: format!("panel {r}"),
                        message: "no type given and no `default`".into(),
                    })?;
                Ok(PanelSpec::new(r, kind))
            })
            .collect()
    }

    /// Full configuration text; reading it back gives an equal
    /// configuration with paths made absolute.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let abs = |p: &Path| std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf());
        let pair = |p: (usize, usize)| format!("{} {}", p.0, p.1);
        if let Some(p) = &self.surface {
            let _ = writeln!(s, "surface = {}", abs(p).display());
        }
        if let Some(p) = &self.reference {
            let _ = writeln!(s, "reference = {}", abs(p).display());
        }
        let _ = writeln!(s, "out = {}", abs(&self.out).display());
        for (k, v) in [
            ("control", self.control),
            ("samples", self.samples),
            ("patch_size", self.patch_size),
            ("overlap", self.overlap),
            ("closeness_samples", self.closeness_samples),
            ("panels", self.panels),
            ("dev_per_panel", self.dev_per_panel),
            ("closeness_per_panel", self.closeness_per_panel),
            ("probe_per_panel", self.probe_per_panel),
            ("probe", self.probe),
            ("tessellation", self.tessellation),
        ] {
            let _ = writeln!(s, "{k} = {}", pair(v));
        }
        let _ = writeln!(s, "fit_iterations = {}", self.fit_iterations);
        let _ = writeln!(s, "fit_w_c = {}", self.fit_w_c);
        let _ = writeln!(s, "fit_w_f = {}", self.fit_w_f);
        let mode = match self.moment_mode {
            MomentMode::Variable => "variable",
            MomentMode::Refit => "refit",
        };
        let _ = writeln!(s, "moment_mode = {mode}");
        let _ = writeln!(s, "parallel = {}", self.parallel);
        let _ = writeln!(s, "seed = {}", self.seed);
        let w = &self.weights;
        let _ = writeln!(s, "\n[weights]");
        for (k, v) in [
            ("w_d", w.w_d),
            ("w_r", w.w_r),
            ("w_c", w.w_c),
            ("w_f", w.w_f),
            ("w_f1", w.w_f1),
            ("w_f2", w.w_f2),
            ("lambda1", w.lambda1),
            ("lambda2", w.lambda2),
        ] {
            let _ = writeln!(s, "{k} = {v}");
        }
        let o = &self.solver;
        let _ = writeln!(s, "\n[solver]");
        let _ = writeln!(s, "iterations = {}", o.max_iterations);
        if let Some(m) = o.mu0 {
            let _ = writeln!(s, "mu0 = {m}");
        }
        let _ = writeln!(s, "mu_increase = {}", o.mu_increase);
        let _ = writeln!(s, "mu_decrease = {}", o.mu_decrease);
        let _ = writeln!(s, "max_retries = {}", o.max_retries);
        let _ = writeln!(s, "rel_tol = {}", o.rel_tol);
        let _ = writeln!(s, "step_tol = {}", o.step_tol);
        let _ = writeln!(s, "log_every = {}", o.log_every);
        let _ = writeln!(s, "record_time = {}", o.record_time);
        if self.default_panel.is_some() || !self.panel_types.is_empty() {
            let _ = writeln!(s, "\n[panels]");
            if let Some(d) = self.default_panel {
                let _ = writeln!(s, "default = {d}");
            }
            for (r, t) in &self.panel_types {
                let _ = writeln!(s, "panel {r} = {t}");
            }
        }
        s
    }
}
