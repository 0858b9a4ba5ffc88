//! Experiment pipelines behind the command-line tool.
//!
//! Every command is a pure function of the configuration (including the seed):
//! it writes CSV files, the resolved configuration and a manifest of SHA-256
//! file hashes into the output directory, and reruns reproduce them byte for byte.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::collocation::{assemble_et, assemble_g2, assemble_rt, taylor_factor, CollocationGrid, OperatorMatrix};
use crate::error::{Error, Result};
use crate::io::{create, fmt_sci, write_csv, write_eigenvector_csv, write_spectrum_csv};
use crate::metastability::{
    estimate_metastability, huisinga_bounds, sign_partition, spectral_gap, write_bounds_csv, BoundSource,
    BoundsResult, BoundsRow, McOptions, PartitionResult,
};
use crate::potential::{DynamicsParams, PotentialConfig, PotentialSpec};
use crate::sim::SamplerConfig;
use crate::spectrum::{solve_spectrum, SpectrumResult};
use crate::streams::derive_seed;
use crate::ulam::{build_partition, eigenvalue_stderr, estimate_spatial_ulam, sweep_seed, ulam_spectrum, UlamMatrix};

/// Pipelines offered by the command-line tool.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    /// Eigenvalues of `G2`, `R^t`, `E^t` over the lag-time grid.
    Spectrum,
    /// Ulam reference matrices and spectra.
    Reference,
    /// Eigenvalue errors of both reconstructions against the reference.
    Compare,
    /// Metastable sets, bounds and Monte-Carlo metastability.
    Bounds,
}

impl Command {
    pub fn label(&self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Reference => "reference",
            Command::Compare => "compare",
            Command::Bounds => "bounds",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct SpectrumOptions {
    /// Also report the Smoluchowski operator `exp(t G2)` at unrescaled time.
    pub smoluchowski: bool,
}


#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceOptions {
    /// Dump the dense Ulam matrices.
    pub write_matrix: bool,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        Self { write_matrix: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareOptions {
    /// `[t_min, t_max]` of the slope fit; the whole grid if absent.
    pub window: Option<[f64; 2]>,
    /// Points with `eps <= noise_factor * stderr` are dropped from the fit.
    pub noise_factor: f64,
    pub min_points: usize,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self { window: None, noise_factor: 3.0, min_points: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsOptions {
    /// Walkers per metastable set.
    pub mc_samples: usize,
    /// Spectral floor `a`; `min(0, smallest eigenvalue) - 0.05` if absent.
    pub a_floor: Option<f64>,
    /// Number of metastable sets; the spectral gap of `E^t` if absent.
    pub n_sets: Option<usize>,
    /// Weight initial walkers by `|v_2|`.
    pub weight_by_v2: bool,
    /// Also report bounds from `R^t` (only for `t < 3 / gamma`).
    pub include_rt: bool,
}

impl Default for BoundsOptions {
    fn default() -> Self {
        Self { mc_samples: 10_000, a_floor: None, n_sets: None, weight_by_v2: false, include_rt: false }
    }
}

/// Configuration file contents (TOML).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub beta: f64,
    pub gamma: f64,
    /// Collocation nodes per axis (odd).
    pub grid_n: usize,
    /// Ulam boxes per axis.
    pub partition_n: usize,
    /// Ulam samples per box.
    pub samples: usize,
    /// Integrator step size.
    pub dt: f64,
    pub t_grid: Vec<f64>,
    pub seed: u64,
    /// Number of leading eigenpairs reported.
    pub k: usize,
    pub out: Option<PathBuf>,
    /// Builtin name or inline table.
    pub potential: Option<PotentialConfig>,
    pub spectrum: SpectrumOptions,
    pub reference: ReferenceOptions,
    pub compare: CompareOptions,
    pub bounds: BoundsOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            gamma: 1.0,
            grid_n: 33,
            partition_n: 256,
            samples: 4000,
            dt: 1e-3,
            t_grid: Vec::new(),
            seed: 0,
            k: 8,
            out: None,
            potential: None,
            spectrum: SpectrumOptions::default(),
            reference: ReferenceOptions::default(),
            compare: CompareOptions::default(),
            bounds: BoundsOptions::default(),
        }
    }
}

/// Lag times of the double-well preset.
pub const DOUBLE_WELL_TIMES: [f64; 10] = [0.05, 0.075, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5, 1.0];

impl ExperimentConfig {
    /// `double-well` (1D) or `four-well` (2D) with `beta = gamma = 1` and 33 nodes per axis.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "double-well" | "double_well" => Ok(Self {
                potential: Some(PotentialConfig::Builtin("double-well".into())),
                partition_n: 256,
                samples: 4000,
                t_grid: DOUBLE_WELL_TIMES.to_vec(),
                compare: CompareOptions { window: Some([0.05, 0.4]), ..CompareOptions::default() },
                bounds: BoundsOptions { n_sets: Some(2), ..BoundsOptions::default() },
                ..Self::default()
            }),
            "four-well" | "four_well" => Ok(Self {
                potential: Some(PotentialConfig::Builtin("four-well".into())),
                partition_n: 32,
                samples: 2000,
                t_grid: vec![0.1, 0.5, 1.0],
                bounds: BoundsOptions { n_sets: Some(4), mc_samples: 4000, ..BoundsOptions::default() },
                ..Self::default()
            }),
            other => Err(Error::config("preset", format!("unknown preset `{other}`; use double-well or four-well"))),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            Error::config(field_from_toml_error(&msg, text, e.span()), msg)
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every field needed by `command` before any computation.
    pub fn validate(&self, command: Command) -> Result<Resolved> {
        let potential = self
            .potential
            .as_ref()
            .ok_or_else(|| Error::config("potential", "missing; give a builtin name or an inline table"))?;
        let spec = potential.resolve("potential")?;
        let positive = |field: &str, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be positive and finite, got {x}")))
            }
        };
        positive("beta", self.beta)?;
        positive("gamma", self.gamma)?;
        positive("dt", self.dt)?;
        let params = DynamicsParams::new(self.beta, self.gamma)?;
        let grid = CollocationGrid::new(spec.dim(), self.grid_n).map_err(|e| Error::config("grid_n", e.to_string()))?;
        if self.k < 3 || self.k > grid.len() {
            return Err(Error::config("k", format!("must lie in [3, {}]", grid.len())));
        }
        if self.t_grid.is_empty() {
            return Err(Error::config("t_grid", "must contain at least one lag time"));
        }
        let needs_ulam = matches!(command, Command::Reference | Command::Compare | Command::Bounds);
        let sampler = SamplerConfig::langevin(self.dt, self.seed, 0);
        for (i, &t) in self.t_grid.iter().enumerate() {
            let field = format!("t_grid[{i}]");
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::config(field, format!("must be finite and non-negative, got {t}")));
            }
            if needs_ulam && command != Command::Bounds && t == 0.0 {
                return Err(Error::config(field, "the Ulam reference needs a positive lag time"));
            }
            if needs_ulam {
                sampler.steps_for(t).map_err(|e| Error::config(field, e.to_string()))?;
            }
        }
        if needs_ulam {
            if self.partition_n < 2 {
                return Err(Error::config("partition_n", "must be at least 2"));
            }
            if self.partition_n.pow(spec.dim() as u32) > 4096 {
                return Err(Error::config("partition_n", "at most 4096 boxes in total"));
            }
            if self.samples == 0 {
                return Err(Error::config("samples", "must be at least 1"));
            }
            if self.k > self.partition_n.pow(spec.dim() as u32) {
                return Err(Error::config("k", "exceeds the number of Ulam boxes"));
            }
        }
        if command == Command::Compare {
            let c = &self.compare;
            if let Some([lo, hi]) = c.window {
                if !(lo < hi) {
                    return Err(Error::config("compare.window", "needs t_min < t_max"));
                }
            }
            if c.min_points < 2 {
                return Err(Error::config("compare.min_points", "must be at least 2"));
            }
            if !(c.noise_factor >= 0.0) {
                return Err(Error::config("compare.noise_factor", "must be non-negative"));
            }
        }
        if command == Command::Bounds {
            let b = &self.bounds;
            if b.mc_samples == 0 {
                return Err(Error::config("bounds.mc_samples", "must be at least 1"));
            }
            if let Some(a) = b.a_floor {
                if !(a > -1.0 && a < 1.0) {
                    return Err(Error::config("bounds.a_floor", "must lie in (-1, 1)"));
                }
            }
            if let Some(n) = b.n_sets {
                if n < 2 || n > self.k {
                    return Err(Error::config("bounds.n_sets", format!("must lie in [2, k = {}]", self.k)));
                }
            }
        }
        Ok(Resolved { spec, params, grid })
    }
}

fn field_from_toml_error(msg: &str, text: &str, span: Option<std::ops::Range<usize>>) -> String {
    let pos = span.as_ref().map_or(0, |s| s.start.min(text.len()));
    // dotted prefix from the nearest `[table]` header above the error
    let table = text[..pos]
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('[') && !l.starts_with("[["))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
    let qualify = |key: &str| match &table {
        Some(t) if span.is_some() => format!("{t}.{key}"),
        _ => key.to_string(),
    };
    for marker in ["missing field `", "unknown field `"] {
        if let Some(start) = msg.find(marker) {
            let rest = &msg[start + marker.len()..];
            if let Some(end) = rest.find('`') {
                return qualify(&rest[..end]);
            }
        }
    }
    // otherwise name the key on the offending line
    if span.is_some() {
        let line_start = text[..pos].rfind('\n').map_or(0, |i| i + 1);
        if let Some((key, _)) = text[line_start..].split_once('=') {
            return qualify(key.trim());
        }
    }
    "config".into()
}

/// Validated, computation-ready parts of a configuration.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub spec: PotentialSpec,
    pub params: DynamicsParams,
    pub grid: CollocationGrid,
}

/// One pass/fail line of `--check` mode.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckLine {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    /// Files written, relative to `dir`, in creation order.
    pub files: Vec<String>,
    pub checks: Vec<CheckLine>,
}

impl RunOutput {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn write(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let mut out = create(&self.dir.join(name))?;
        f(&mut out)?;
        out.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn ulam(&mut self, name: &str, u: &UlamMatrix) -> Result<()> {
        u.write(&self.dir.join(name))?;
        self.files.push(name.to_string());
        self.files.push(Path::new(name).with_extension("meta.json").display().to_string());
        Ok(())
    }

    fn manifest(&mut self, command: Command) -> Result<()> {
        let mut hashes = BTreeMap::new();
        for f in &self.files {
            let bytes = std::fs::read(self.dir.join(f))?;
            hashes.insert(f.clone(), hex::encode(Sha256::digest(&bytes)));
        }
        #[derive(Serialize)]
        struct Manifest<'a> {
            command: &'a str,
            version: &'a str,
            files: BTreeMap<String, String>,
        }
        let m = Manifest { command: command.label(), version: env!("CARGO_PKG_VERSION"), files: hashes };
        let mut out = create(&self.dir.join("manifest.json"))?;
        serde_json::to_writer_pretty(&mut out, &m).map_err(|e| Error::Numerical(e.to_string()))?;
        writeln!(out)?;
        out.flush()?;
        Ok(())
    }
}

/// Runs `command`; with `check` the acceptance checks for the command are evaluated too.
pub fn run(command: Command, config: &ExperimentConfig, check: bool) -> Result<RunOutput> {
    let resolved = config.validate(command)?;
    let dir = config.out.clone().unwrap_or_else(|| PathBuf::from("out").join(command.label()));
    let mut out = Outputs { dir: dir.clone(), files: Vec::new() };
    let checks = match command {
        Command::Spectrum => cmd_spectrum(config, &resolved, &mut out)?,
        Command::Reference => cmd_reference(config, &resolved, &mut out)?,
        Command::Compare => cmd_compare(config, &resolved, &mut out)?,
        Command::Bounds => cmd_bounds(config, &resolved, &mut out)?,
    };
    let checks = if check { checks } else { Vec::new() };
    if check {
        out.write("check.csv", |w| {
            let header = ["check", "passed", "detail"].map(String::from);
            let rows = checks.iter().map(|c| vec![c.name.clone(), c.passed.to_string(), c.detail.replace(',', ";")]);
            write_csv(w, &header, rows)
        })?;
    }
    let text = config.to_toml();
    out.write("config.resolved.toml", |w| Ok(w.write_all(text.as_bytes())?))?;
    out.manifest(command)?;
    Ok(RunOutput { dir, files: out.files, checks })
}

/// Process exit code for an error: 2 for configuration problems, 3 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::InvalidInput(_) | Error::DimensionMismatch { .. } => 2,
        _ => 3,
    }
}

fn t_tag(idx: usize) -> String {
    format!("t{idx:02}")
}

fn lambda_header(prefix: &[&str], k: usize) -> Vec<String> {
    let mut h: Vec<String> = prefix.iter().map(|s| s.to_string()).collect();
    h.extend((1..=k).map(|j| format!("lambda_{j}")));
    h
}

fn g2_operator(r: &Resolved) -> Result<OperatorMatrix> {
    assemble_g2(&r.grid, &r.spec, &r.params)
}

fn norm_inf(m: &faer::Mat<f64>) -> f64 {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)].abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn row_sum_defect(m: &faer::Mat<f64>) -> f64 {
    (0..m.nrows()).map(|i| ((0..m.ncols()).map(|j| m[(i, j)]).sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
}

fn cmd_spectrum(cfg: &ExperimentConfig, r: &Resolved, out: &mut Outputs) -> Result<Vec<CheckLine>> {
    let g2 = g2_operator(r)?;
    let g2_spec = solve_spectrum(&g2, cfg.k)?;
    out.write("g2_spectrum.csv", |w| write_spectrum_csv(w, &g2_spec))?;
    out.write("g2_v2.csv", |w| write_eigenvector_csv(w, &g2_spec, 1))?;

    let mut rows = Vec::new();
    let mut checks = Vec::new();
    let kernel = (0..g2.size()).map(|i| (0..g2.size()).map(|j| g2.matrix[(i, j)]).sum::<f64>().abs()).fold(0.0, f64::max);
    let g2_norm = norm_inf(&g2.matrix);
    checks.push(CheckLine::new(
        "g2_kernel",
        kernel <= 1e-12 * g2_norm,
        format!("|G2 1|_inf = {kernel:.3e}, bound {:.3e}", 1e-12 * g2_norm),
    ));
    let imag = g2_spec.eigenvalues.iter().take(8).map(|z| z.im.abs()).fold(0.0, f64::max);
    checks.push(CheckLine::new("g2_real_spectrum", imag <= 1e-8, format!("max |Im lambda| = {imag:.3e}")));

    let mut affine_err: f64 = 0.0;
    let mut et_defect: f64 = 0.0;
    for &t in &cfg.t_grid {
        let rt = assemble_rt(&g2, t, &r.params)?;
        let et = assemble_et(&g2, t)?;
        et_defect = et_defect.max(row_sum_defect(&et.matrix));
        let rt_spec = solve_spectrum(&rt, cfg.k)?;
        let et_spec = solve_spectrum(&et, cfg.k)?;
        let c = taylor_factor(t, r.params.gamma());
        for (a, b) in rt_spec.eigenvalues.iter().zip(&g2_spec.eigenvalues) {
            affine_err = affine_err.max((a.re - (1.0 + c * b.re)).abs());
        }
        for (label, s) in [("Rt", &rt_spec), ("Et", &et_spec)] {
            let mut row = vec![fmt_sci(t), label.to_string()];
            row.extend(s.eigenvalues.iter().map(|z| fmt_sci(z.re)));
            rows.push(row);
        }
        if cfg.spectrum.smoluchowski {
            // exp(t G2) = E^s with s^2 / 2 = t
            let p = assemble_et(&g2, (2.0 * t).sqrt())?;
            let s = solve_spectrum(&p, cfg.k)?;
            let mut row = vec![fmt_sci(t), "Psmol".to_string()];
            row.extend(s.eigenvalues.iter().map(|z| fmt_sci(z.re)));
            rows.push(row);
        }
    }
    out.write("eigenvalues.csv", |w| write_csv(w, &lambda_header(&["t", "operator"], cfg.k), rows))?;
    checks.push(CheckLine::new("et_stochastic", et_defect <= 1e-10, format!("max |E^t 1 - 1| = {et_defect:.3e}")));
    checks.push(CheckLine::new("rt_affine", affine_err <= 1e-10, format!("max deviation {affine_err:.3e}")));
    Ok(checks)
}

/// Published leading eigenvalues of the Ulam reference for the builtin benchmarks.
fn published(cfg: &ExperimentConfig, t: f64) -> Option<(&'static [f64], f64, &'static str)> {
    let name = match &cfg.potential {
        Some(PotentialConfig::Builtin(n)) => n.replace('_', "-"),
        _ => return None,
    };
    if cfg.beta != 1.0 || cfg.gamma != 1.0 {
        return None;
    }
    match (name.as_str(), t) {
        ("double-well", t) if t == 0.1 => Some((&[0.9428], 0.03, "double-well lambda_2 at t=0.1")),
        ("double-well", t) if t == 1.0 => Some((&[0.6620], 0.04, "double-well lambda_2 at t=1")),
        ("four-well", t) if t == 0.1 => Some((
            &[0.9974, 0.9053, 0.8950, 0.8122, 0.4063, 0.3647],
            0.04,
            "four-well leading six at t=0.1",
        )),
        _ => None,
    }
}

struct UlamRun {
    t: f64,
    matrix: UlamMatrix,
    spectrum: SpectrumResult,
    stderr: Vec<f64>,
}

fn ulam_runs(cfg: &ExperimentConfig, r: &Resolved) -> Result<Vec<Option<UlamRun>>> {
    let partition = build_partition(&r.spec, &r.params, cfg.partition_n)?;
    cfg.t_grid
        .iter()
        .enumerate()
        .map(|(idx, &t)| {
            if t == 0.0 {
                return Ok(None);
            }
            let sampler = SamplerConfig::langevin(cfg.dt, sweep_seed(cfg.seed, idx), 0);
            let matrix = estimate_spatial_ulam(&partition, &r.params, t, cfg.samples, &sampler)?;
            let spectrum = ulam_spectrum(&matrix, cfg.k)?;
            let stderr = eigenvalue_stderr(&matrix, cfg.k)?;
            Ok(Some(UlamRun { t, matrix, spectrum, stderr }))
        })
        .collect()
}

fn cmd_reference(cfg: &ExperimentConfig, r: &Resolved, out: &mut Outputs) -> Result<Vec<CheckLine>> {
    let runs: Vec<UlamRun> = ulam_runs(cfg, r)?.into_iter().flatten().collect();
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    let mut flux_rows = Vec::new();
    let mut stochastic = true;
    for (idx, run) in runs.iter().enumerate() {
        if cfg.reference.write_matrix {
            out.ulam(&format!("ulam_{}.csv", t_tag(idx)), &run.matrix)?;
        }
        let m = run.matrix.matrix();
        stochastic &= (0..m.nrows()).all(|i| (0..m.ncols()).map(|j| m[(i, j)]).sum::<f64>() == 1.0);
        for (j, z) in run.spectrum.eigenvalues.iter().enumerate() {
            rows.push(vec![
                fmt_sci(run.t),
                (j + 1).to_string(),
                fmt_sci(z.re),
                fmt_sci(z.im),
                fmt_sci(run.stderr[j]),
                fmt_sci(run.spectrum.residuals[j]),
            ]);
        }
        let flux = run.matrix.flux_asymmetry();
        flux_rows.push(vec![fmt_sci(run.t), fmt_sci(flux.pooled), fmt_sci(flux.noise_scale)]);
        checks.push(CheckLine::new(
            format!("flux_symmetry_t={}", run.t),
            flux.pooled <= 5.0 * flux.noise_scale,
            format!("asymmetry {:.4e}, noise scale {:.4e}", flux.pooled, flux.noise_scale),
        ));
        if let Some((values, tol, what)) = published(cfg, run.t) {
            let ev = run.spectrum.real_eigenvalues();
            // a single published value is lambda_2; longer lists start at lambda_1
            let offset = if values.len() == 1 { 1 } else { 0 };
            let worst = values.iter().enumerate().map(|(j, v)| (ev[j + offset] - v).abs()).fold(0.0, f64::max);
            checks.push(CheckLine::new(
                format!("published_{}", what.replace(' ', "_")),
                worst <= tol,
                format!("max deviation {worst:.4}, tolerance {tol}"),
            ));
            if values.len() == 6 {
                let gap = spectral_gap(&ev)?;
                checks.push(CheckLine::new("four_well_gap", gap == 4, format!("gap after lambda_{gap}")));
            }
        }
    }
    checks.insert(0, CheckLine::new("ulam_rows_stochastic", stochastic, "every row sums to 1 exactly"));
    let header = ["t", "index", "re_lambda", "im_lambda", "stderr", "residual"].map(String::from);
    out.write("reference.csv", |w| write_csv(w, &header, rows))?;
    let header = ["t", "flux_asymmetry", "noise_scale"].map(String::from);
    out.write("flux.csv", |w| write_csv(w, &header, flux_rows))?;
    Ok(checks)
}

/// `|lambda_1(a) - lambda_1(b)| + |lambda_2(a) - lambda_2(b)|`.
pub fn eigen_error(a: &[f64], b: &[f64]) -> f64 {
    (a[0] - b[0]).abs() + (a[1] - b[1]).abs()
}

/// Least-squares slope of `log y` against `log t`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 || points.iter().any(|&(t, y)| !(t > 0.0 && y > 0.0)) {
        return None;
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Slope fit restricted to points inside `window` whose error exceeds the noise.
#[derive(Clone, Debug, PartialEq)]
pub struct SlopeFit {
    pub slope: Option<f64>,
    pub points: Vec<(f64, f64)>,
}

/// `(t, eps, stderr)` triples; keeps those with `eps > noise_factor * stderr`
/// inside the window and fits if at least `min_points` remain.
pub fn fit_error_slope(data: &[(f64, f64, f64)], window: Option<[f64; 2]>, noise_factor: f64, min_points: usize) -> SlopeFit {
    let points: Vec<(f64, f64)> = data
        .iter()
        .filter(|(t, _, _)| window.is_none_or(|[lo, hi]| *t >= lo && *t <= hi))
        .filter(|(_, e, s)| *e > noise_factor * s)
        .map(|&(t, e, _)| (t, e))
        .collect();
    let slope = if points.len() >= min_points { loglog_slope(&points) } else { None };
    SlopeFit { slope, points }
}

fn cmd_compare(cfg: &ExperimentConfig, r: &Resolved, out: &mut Outputs) -> Result<Vec<CheckLine>> {
    let runs: Vec<UlamRun> = ulam_runs(cfg, r)?.into_iter().flatten().collect();
    let g2 = g2_operator(r)?;
    let mut rows = Vec::new();
    let mut eps_r = Vec::new();
    let mut eps_e = Vec::new();
    let mut checks = Vec::new();
    for run in &runs {
        let u = run.spectrum.real_eigenvalues();
        let rt = solve_spectrum(&assemble_rt(&g2, run.t, &r.params)?, 2)?.real_eigenvalues();
        let et = solve_spectrum(&assemble_et(&g2, run.t)?, 2)?.real_eigenvalues();
        let se = run.stderr[0].hypot(run.stderr[1]);
        let (er, ee) = (eigen_error(&rt, &u), eigen_error(&et, &u));
        eps_r.push((run.t, er, se));
        eps_e.push((run.t, ee, se));
        rows.push([run.t, u[1], run.stderr[1], rt[1], et[1], er, ee, se].map(fmt_sci).to_vec());
        if run.t == 0.1 {
            let d = (et[1] - u[1]).abs();
            checks.push(CheckLine::new("et_vs_ulam_t=0.1", d <= 0.03, format!("|difference| = {d:.4}")));
        }
    }
    let header = ["t", "lambda2_ulam", "stderr", "lambda2_R", "lambda2_E", "eps_R", "eps_E", "eps_stderr"]
        .map(String::from);
    out.write("compare.csv", |w| write_csv(w, &header, rows))?;
    let c = &cfg.compare;
    let fits = [
        ("eps_R", fit_error_slope(&eps_r, c.window, c.noise_factor, c.min_points), 3.5),
        ("eps_E", fit_error_slope(&eps_e, c.window, c.noise_factor, c.min_points), 2.5),
    ];
    let mut slope_rows = Vec::new();
    for (name, fit, min_slope) in &fits {
        let (lo, hi) = fit.points.iter().fold((f64::NAN, f64::NAN), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
        slope_rows.push(vec![
            name.to_string(),
            fit.slope.map_or("nan".into(), fmt_sci),
            fit.points.len().to_string(),
            fmt_sci(lo),
            fmt_sci(hi),
        ]);
        checks.push(match fit.slope {
            Some(s) => CheckLine::new(
                format!("slope_{name}"),
                s >= *min_slope,
                format!("slope {s:.3} over {} points, required {min_slope}", fit.points.len()),
            ),
            None => CheckLine::new(
                format!("slope_{name}"),
                false,
                format!("only {} points above the noise floor", fit.points.len()),
            ),
        });
    }
    let header = ["measure", "slope", "n_points", "t_min", "t_max"].map(String::from);
    out.write("slopes.csv", |w| write_csv(w, &header, slope_rows))?;
    Ok(checks)
}

/// `G2` eigenpairs with eigenvalues mapped to those of `E^t` (exact: shared eigenvectors).
fn mapped_spectrum(g2: &SpectrumResult, t: f64, f: impl Fn(f64) -> f64) -> SpectrumResult {
    let mut s = g2.clone();
    s.t = t;
    for z in s.eigenvalues.iter_mut() {
        *z = faer::c64::new(f(z.re), 0.0);
    }
    s
}

struct BoundsCase<'a> {
    source: BoundSource,
    spectrum: &'a SpectrumResult,
    partition: &'a PartitionResult,
}

fn cmd_bounds(cfg: &ExperimentConfig, r: &Resolved, out: &mut Outputs) -> Result<Vec<CheckLine>> {
    let b = &cfg.bounds;
    let g2 = g2_operator(r)?;
    let g2_spec = solve_spectrum(&g2, cfg.k)?;
    let first_t = cfg.t_grid.iter().copied().find(|&t| t > 0.0).unwrap_or(0.1);
    let n_sets = match b.n_sets {
        Some(n) => n,
        None => spectral_gap(&mapped_spectrum(&g2_spec, first_t, |l| (0.5 * first_t * first_t * l).exp()).real_eigenvalues())?,
    };
    let colloc_part = sign_partition(&g2_spec, Some(n_sets))?;
    let colloc_sets = colloc_part.decomposition(n_sets)?;
    for k in 0..colloc_part.tiers.len() {
        out.write(&format!("sets_collocation_tier{}.csv", k + 1), |w| write_tier(w, &colloc_part, k))?;
    }
    let density = r.spec.canonical(r.params.beta(), if r.spec.dim() == 1 { 4096 } else { 256 });
    let v2_weights = |s: &SpectrumResult| s.eigenvector(1).into_iter().map(f64::abs).collect::<Vec<_>>();
    let colloc_weights = v2_weights(&g2_spec);

    let ulam = ulam_runs(cfg, r)?;
    let mut rows = Vec::new();
    let mut detail = Vec::new();
    let mut checks = Vec::new();
    let mut rho_ok = true;
    for (idx, (&t, run)) in cfg.t_grid.iter().zip(&ulam).enumerate() {
        let et = mapped_spectrum(&g2_spec, t, |l| (0.5 * t * t * l).exp());
        let c = taylor_factor(t, r.params.gamma());
        let rt = mapped_spectrum(&g2_spec, t, |l| 1.0 + c * l);
        let mut cases = vec![BoundsCase { source: BoundSource::CollocationEt, spectrum: &et, partition: &colloc_part }];
        if b.include_rt && t * r.params.gamma() < 3.0 {
            cases.push(BoundsCase { source: BoundSource::CollocationRt, spectrum: &rt, partition: &colloc_part });
        }
        let ulam_part;
        if let Some(run) = run {
            ulam_part = sign_partition(&run.spectrum, Some(n_sets))?;
            for k in 0..ulam_part.tiers.len() {
                out.write(&format!("sets_ulam_{}_tier{}.csv", t_tag(idx), k + 1), |w| write_tier(w, &ulam_part, k))?;
            }
            cases.insert(0, BoundsCase { source: BoundSource::Ulam, spectrum: &run.spectrum, partition: &ulam_part });
        }
        // one MC estimate per partition; both collocation sources share theirs
        let mut colloc_mc = None;
        for case in cases {
            let sets =
                if case.source == BoundSource::Ulam { case.partition.decomposition(n_sets)? } else { colloc_sets.clone() };
            let bounds = huisinga_bounds(case.spectrum, &sets, b.a_floor)?;
            rho_ok &= bounds.rho.iter().all(|r| (0.0..=1.0 + 1e-12).contains(r));
            let mc = match (&case.source, &colloc_mc) {
                (BoundSource::Ulam, _) | (_, None) => {
                    let weights = if case.source == BoundSource::Ulam {
                        v2_weights(case.spectrum)
                    } else {
                        colloc_weights.clone()
                    };
                    let opts = McOptions { initial_weights: b.weight_by_v2.then_some(weights.as_slice()) };
                    let seed = derive_seed(cfg.seed, 0xb0_0000 + 16 * idx as u64 + case.source as u64);
                    let sampler = SamplerConfig::langevin(cfg.dt, seed, 0);
                    let mc = estimate_metastability(
                        &density,
                        case.partition.layout,
                        &sets,
                        &r.params,
                        t,
                        b.mc_samples,
                        &sampler,
                        &opts,
                    )?;
                    if case.source != BoundSource::Ulam {
                        colloc_mc = Some(mc.clone());
                    }
                    mc
                }
                (_, Some(mc)) => mc.clone(),
            };
            let row = BoundsRow {
                t,
                upper: bounds.upper,
                lower: bounds.lower,
                mc_sum: mc.sum,
                mc_stderr: mc.sum_stderr,
                source: case.source,
            };
            if t == 0.0 {
                checks.push(CheckLine::new(
                    format!("t0_mc_sum_{}", case.source.label()),
                    mc.sum == n_sets as f64,
                    format!("mc_sum {}", mc.sum),
                ));
            }
            let regime = match case.source {
                BoundSource::Ulam => t <= 0.5,
                BoundSource::CollocationEt => t <= 0.3,
                BoundSource::CollocationRt => false,
            };
            if regime {
                checks.push(CheckLine::new(
                    format!("containment_{}_t={t}", case.source.label()),
                    row.contains(3.0),
                    format!("mc {:.4} +- {:.4} in [{:.4}, {:.4}]", mc.sum, mc.sum_stderr, bounds.lower, bounds.upper),
                ));
            }
            detail.push(detail_row(&bounds, case.source, &mc.fractions));
            rows.push(row);
        }
    }
    checks.push(CheckLine::new("rho_in_unit_interval", rho_ok, "all projection norms in [0, 1]"));
    out.write("bounds.csv", |w| write_bounds_csv(w, &rows))?;
    let mut header: Vec<String> = ["t", "source", "a", "c"].map(String::from).to_vec();
    header.extend((2..=n_sets).map(|j| format!("rho_{j}")));
    header.extend((1..=n_sets).map(|j| format!("p_{j}")));
    out.write("bounds_detail.csv", |w| write_csv(w, &header, detail))?;
    let note = serde_json::json!({
        "n_sets": n_sets,
        "a_floor": b.a_floor.map_or("min(0, smallest computed eigenvalue) - 0.05".to_string(), |a| a.to_string()),
        "caveat": "the lower bound assumes the whole spectrum lies in [a, 1], which is not verified",
        "weight_by_v2": b.weight_by_v2,
    });
    out.write("bounds.meta.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &note).map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(writeln!(w)?)
    })?;
    Ok(checks)
}

fn write_tier<W: Write>(out: &mut W, part: &PartitionResult, tier: usize) -> Result<()> {
    let t = &part.tiers[tier];
    let mut header: Vec<String> = vec!["cell".into()];
    header.extend((0..part.layout.dim).map(|a| format!("q{a}")));
    header.push(format!("sign_v{}", t.eigen_index + 1));
    let rows = (0..part.layout.len()).map(|c| {
        let mut row = vec![c.to_string()];
        row.extend(part.layout.center(c).into_iter().map(fmt_sci));
        row.push(format!("{:+}", t.labels[c]));
        row
    });
    write_csv(out, &header, rows)
}

fn detail_row(b: &BoundsResult, source: BoundSource, fractions: &[f64]) -> Vec<String> {
    let mut row = vec![fmt_sci(b.t), source.label().to_string(), fmt_sci(b.a), fmt_sci(b.c)];
    row.extend(b.rho.iter().copied().map(fmt_sci));
    row.extend(fractions.iter().copied().map(fmt_sci));
    row
}
