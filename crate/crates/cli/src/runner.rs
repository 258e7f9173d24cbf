//! Runs a validated configuration and writes its tables.

use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

use heom_qubit::hierarchy::assemble_with;
use heom_qubit::model::{AmplitudeConvention, Coupling, DensityMatrix, FieldConvention, FieldParams, ModelParams, OuKind};
use heom_qubit::oracles::{monte_carlo_evolution, ou_dephasing_coherence, rwa_bath_excited_population, LindbladRates, McConfig};
use heom_qubit::propagator::{find_steady_state, initial_state, steady_state_direct, Defects, PropagationConfig};
use heom_qubit::study::{evolve, spectrum, steady_state, DepthPolicy, DepthReport, Treatment};
use heom_qubit::HeomError;
use rayon::prelude::*;

use crate::config::{ConfigError, ExperimentConfig, InitialState, RunKind};
use crate::output::{format_number, write_table, Cell, Header, Table};

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Numerical(HeomError),
    Io { path: PathBuf, source: io::Error },
}

impl RunError {
    /// Process exit status: 2 for configuration errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "configuration error: {e}"),
            RunError::Numerical(e) => write!(f, "numerical failure: {e}"),
            RunError::Io { path, source } => write!(f, "cannot write {}: {source}", path.display()),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<HeomError> for RunError {
    fn from(e: HeomError) -> Self {
        match e {
            HeomError::InvalidParameter { name, reason } => RunError::Config(ConfigError::new(name, reason)),
            other => RunError::Numerical(other),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    /// Sweep points or verification checks that failed.
    pub failures: Vec<String>,
    /// One line per verification check or sweep point, for the terminal.
    pub report: Vec<String>,
}

impl RunSummary {
    pub fn success(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary, RunError> {
    match cfg.kind {
        RunKind::Evolve => run_evolve(cfg),
        RunKind::SteadyState => run_steady(cfg),
        RunKind::SteadySweep => run_sweep(cfg),
        RunKind::Spectrum => run_spectrum(cfg),
        RunKind::Verify => run_verify(cfg),
    }
}

fn write(dir: &Path, table: &Table, header: &Header, cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, RunError> {
    write_table(dir, table, header, &cfg.output).map_err(|source| RunError::Io { path: dir.join(&table.name), source })
}

fn depth_text(d: &DepthReport) -> String {
    match (d.compared_with, d.difference) {
        (Some(c), Some(diff)) => format!("{} ({} slots), differs from depth {c} by {diff:e}", d.depth, d.slots),
        (None, Some(diff)) => format!("{} ({} slots), no active directions, difference {diff:e}", d.depth, d.slots),
        _ if d.slots == 1 && d.depth == 0 => "0 (Lindblad master equation)".into(),
        _ => format!("{} ({} slots), fixed", d.depth, d.slots),
    }
}

fn defects_text(d: &Defects) -> String {
    format!("trace {:e}, hermiticity {:e}", d.trace, d.hermiticity)
}

fn field_text(params: &ModelParams) -> String {
    match params.field.processes() {
        Ok(procs) => procs
            .iter()
            .map(|p| format!("{}: delta {}, gamma {}, zero-lag variance {}", p.kind.name(), p.delta, p.gamma, p.variance()))
            .collect::<Vec<_>>()
            .join("; "),
        Err(e) => e.to_string(),
    }
}

/// Metadata shared by every table of a run.
fn base_header(cfg: &ExperimentConfig) -> Header {
    let params = cfg.params();
    let mut h = Header::new(cfg.to_toml());
    h.push("program", format!("heom-qubit {}", env!("CARGO_PKG_VERSION")));
    h.push("run", cfg.kind.name());
    h.push("numbers", "12 significant digits");
    h.push("basis", "index 0 = excited, index 1 = ground; population = rho_00, coherence = rho_01; hbar = 1, frequencies in units of omega0");
    h.push("model", format!("omega0 {}; bath delta_b {}, gamma_b {}, coupling {}", params.tls.omega0, params.bath.delta_b, params.bath.gamma_b, params.bath.coupling.name()));
    h.push("field_processes", field_text(&params));
    h.push(
        "field_convention",
        match params.field.convention {
            FieldConvention::Printed => "printed: zero-lag correlation of each process is delta^2, decay rate gamma",
            FieldConvention::EqThree => "eq-three: correlation (delta^2 / gamma) exp(-gamma |t|)",
        },
    );
    h.push(
        "bath_correlation",
        format!(
            "A exp(-(gamma_b + i omega0) t), A = {} ({}), lambda_b = {}",
            params.bath.amplitude(),
            match params.bath.amplitude_convention {
                AmplitudeConvention::EqFiveFourier => "eq-five-fourier: delta_b^2 gamma_b",
                AmplitudeConvention::BareDeltaSquared => "bare-delta-squared: delta_b^2",
            },
            params.bath.lambda()
        ),
    );
    let rates = LindbladRates::from_params(&params)
        .map(|r| format!("bath {} on D[sigma_-]; field omega {}, xi1 {}, xi2 {} on D[V]", r.bath, r.field[0], r.field[1], r.field[2]))
        .unwrap_or_else(|e| e.to_string());
    h.push("markov", format!("Lindblad equation with white-noise rates 2 A / gamma_b and 2 variance / gamma, no frequency shifts; {rates}"));
    h.push("treatments", cfg.treatments.iter().map(|t| t.name()).collect::<Vec<_>>().join(", "));
    h.push(
        "depth_policy",
        match cfg.hierarchy.depth {
            DepthPolicy::Fixed(l) => format!("fixed {l}"),
            DepthPolicy::Auto(a) => format!(
                "auto from {} in steps of {} up to {}; the deeper of the first pair differing by less than {:e} is reported",
                a.start, a.step, a.max, a.tol
            ),
        },
    );
    h.push("truncation", format!("{}, slot budget {}", cfg.hierarchy.truncation.name(), cfg.hierarchy.slot_budget));
    let p = &cfg.propagation;
    h.push(
        "tolerances",
        format!(
            "rel_tol {:e}, abs_tol {:e}, dt_init {:e}, steady_tol {:e} over steady_window {}, max_steps {}",
            p.rel_tol, p.abs_tol, p.dt_init, p.steady_tol, p.steady_window, p.max_steps
        ),
    );
    h.push("seed", cfg.seed.to_string());
    h
}

fn run_evolve(cfg: &ExperimentConfig) -> Result<RunSummary, RunError> {
    let params = cfg.params();
    let rho0 = cfg.initial.density();
    let mut header = base_header(cfg);
    header.push("initial_state", cfg.initial.name());
    header.push("grid", format!("t = 0, {}, ..., {}", cfg.propagation.sample_stride, cfg.propagation.t_end));
    let mut columns = vec!["time".to_string()];
    let mut series = Vec::new();
    for &t in &cfg.treatments {
        let out = evolve(&params, t, &rho0, &cfg.hierarchy, &cfg.propagation)?;
        header.push(format!("depth.{}", t.name()), depth_text(&out.depth));
        header.push(format!("defects.{}", t.name()), defects_text(&out.defects));
        for q in ["population", "coherence_re", "coherence_im"] {
            columns.push(format!("{}_{q}", t.name()));
        }
        series.push(out);
    }
    let times = series[0].times.clone();
    if series.iter().any(|s| s.times.len() != times.len()) {
        return Err(RunError::Numerical(HeomError::IntegrationFailure { time: 0.0, reason: "treatments sampled on different grids".into() }));
    }
    let mut table = Table::new("evolution", columns);
    table.plot_columns = (0..series.len()).map(|i| 1 + 3 * i).collect();
    for (i, &time) in times.iter().enumerate() {
        let mut row = vec![Cell::Num(time)];
        for s in &series {
            let c = s.states[i].coherence();
            row.extend([Cell::Num(s.states[i].excited_population()), Cell::Num(c.re), Cell::Num(c.im)]);
        }
        table.rows.push(row);
    }
    let files = write(&cfg.output.dir, &table, &header, cfg)?;
    Ok(RunSummary { files, ..Default::default() })
}

fn run_steady(cfg: &ExperimentConfig) -> Result<RunSummary, RunError> {
    let params = cfg.params();
    let mut header = base_header(cfg);
    header.push("initial_state", "excited");
    let columns = ["treatment", "population", "coherence_re", "coherence_im", "depth", "slots", "detection_time"];
    let mut table = Table::new("steady", columns.iter().map(|c| c.to_string()).collect());
    let mut report = Vec::new();
    for &t in &cfg.treatments {
        let out = steady_state(&params, t, &cfg.hierarchy, &cfg.propagation)?;
        header.push(format!("depth.{}", t.name()), depth_text(&out.depth));
        header.push(format!("defects.{}", t.name()), defects_text(&out.defects));
        let c = out.rho.coherence();
        report.push(format!("{}: steady excited population {}", t.name(), format_number(out.population())));
        table.rows.push(vec![
            Cell::Text(t.name().into()),
            Cell::Num(out.population()),
            Cell::Num(c.re),
            Cell::Num(c.im),
            Cell::Int(out.depth.depth as u64),
            Cell::Int(out.depth.slots as u64),
            Cell::Num(out.time.unwrap_or(f64::NAN)),
        ]);
    }
    let files = write(&cfg.output.dir, &table, &header, cfg)?;
    Ok(RunSummary { files, report, ..Default::default() })
}

struct SweepPoint {
    value: f64,
    populations: Vec<Option<f64>>,
    depths: Vec<Option<usize>>,
    defects: Defects,
    errors: Vec<String>,
}

fn sweep_columns(cfg: &ExperimentConfig, axis: &str) -> Vec<String> {
    let mut columns = vec![axis.to_string()];
    columns.extend(cfg.treatments.iter().map(|t| t.name().to_string()));
    columns.extend(cfg.treatments.iter().map(|t| format!("{}_depth", t.name())));
    columns.push("status".into());
    columns
}

fn sweep_row(p: &SweepPoint) -> Vec<Cell> {
    let mut row = vec![Cell::Num(p.value)];
    row.extend(p.populations.iter().map(|x| Cell::Num(x.unwrap_or(f64::NAN))));
    row.extend(p.depths.iter().map(|d| d.map_or(Cell::Text(String::new()), |d| Cell::Int(d as u64))));
    row.push(Cell::Text(if p.errors.is_empty() { "ok".into() } else { p.errors.join("; ") }));
    row
}

fn run_sweep(cfg: &ExperimentConfig) -> Result<RunSummary, RunError> {
    let axis = cfg.sweep.as_ref().ok_or_else(|| ConfigError::new("run.sweep", "a sweep run needs a sweep axis"))?;
    let name = axis.parameter.path();
    let mut header = base_header(cfg);
    header.push("sweep", format!("{name} over {} points; other parameters as in the model line", axis.values.len()));
    header.push("initial_state", "excited");
    let points_dir = cfg.output.dir.join("sweep-points");
    let point_files: Vec<Result<(SweepPoint, Vec<PathBuf>), RunError>> = axis
        .values
        .par_iter()
        .enumerate()
        .map(|(i, &value)| {
            let mut spec = cfg.model.clone();
            spec.set(axis.parameter, value);
            let params = spec.params();
            let mut point = SweepPoint { value, populations: Vec::new(), depths: Vec::new(), defects: Defects::default(), errors: Vec::new() };
            for &t in &cfg.treatments {
                match steady_state(&params, t, &cfg.hierarchy, &cfg.propagation) {
                    Ok(out) => {
                        point.populations.push(Some(out.population()));
                        point.depths.push(Some(out.depth.depth));
                        point.defects.trace = point.defects.trace.max(out.defects.trace);
                        point.defects.hermiticity = point.defects.hermiticity.max(out.defects.hermiticity);
                    }
                    Err(e) => {
                        point.populations.push(None);
                        point.depths.push(None);
                        point.errors.push(format!("{}: {e}", t.name()));
                    }
                }
            }
            let mut table = Table::new(format!("point-{i:04}"), sweep_columns(cfg, &name));
            table.rows.push(sweep_row(&point));
            let mut h = base_header(cfg);
            h.push("sweep_point", format!("{i} of {}, {name} = {value}", axis.values.len()));
            let only_csv = crate::config::OutputOptions { json: false, plot: false, ..cfg.output.clone() };
            let files = write_table(&points_dir, &table, &h, &only_csv)
                .map_err(|source| RunError::Io { path: points_dir.join(&table.name), source })?;
            Ok((point, files))
        })
        .collect();

    let mut summary = RunSummary::default();
    let mut table = Table::new("sweep", sweep_columns(cfg, &name));
    table.plot_columns = (1..=cfg.treatments.len()).collect();
    let mut defects = Defects::default();
    for r in point_files {
        let (point, files) = r?;
        summary.files.extend(files);
        defects.trace = defects.trace.max(point.defects.trace);
        defects.hermiticity = defects.hermiticity.max(point.defects.hermiticity);
        let pops: Vec<String> = point.populations.iter().map(|x| x.map_or("failed".into(), format_number)).collect();
        summary.report.push(format!("{name} = {}: {}", point.value, pops.join(", ")));
        for e in &point.errors {
            summary.failures.push(format!("{name} = {}: {e}", point.value));
        }
        table.rows.push(sweep_row(&point));
    }
    header.push("defects", format!("max over points: {}", defects_text(&defects)));
    header.push("failed_points", summary.failures.len().to_string());
    summary.files.extend(write(&cfg.output.dir, &table, &header, cfg)?);
    Ok(summary)
}

fn run_spectrum(cfg: &ExperimentConfig) -> Result<RunSummary, RunError> {
    let params = cfg.params();
    let (taus, omegas) = (cfg.spectrum.taus(), cfg.spectrum.omegas());
    let mut header = base_header(cfg);
    header.push(
        "correlation",
        "C(tau) = <sigma_+(t1 + tau) sigma_-(t1)> in the steady state, t1 = steady-state detection time + steady_window",
    );
    header.push(
        "spectrum",
        "S(omega) = Re of the trapezoid sum of C(tau) exp(-i omega tau) over [0, tau_max]; negative values down to -1e-3 of the maximum clipped to 0; normalized to maximum 1",
    );
    let g = &cfg.spectrum;
    header.push("grids", format!("tau 0..{} ({} points), omega {}..{} ({} points)", g.tau_max, g.tau_points, g.omega_min, g.omega_max, g.omega_points));
    let mut outs = Vec::new();
    for &t in &cfg.treatments {
        let out = spectrum(&params, t, &cfg.hierarchy, &cfg.propagation, &taus, &omegas)?;
        let n = t.name();
        header.push(format!("depth.{n}"), depth_text(&out.depth));
        header.push(format!("defects.{n}"), defects_text(&out.defects));
        header.push(format!("steady_population.{n}"), format_number(out.steady.excited_population()));
        header.push(
            format!("normalization.{n}"),
            format!("peak {}, most negative before clipping {}", format_number(out.spectrum.peak), format_number(out.spectrum.clipped)),
        );
        outs.push(out);
    }
    let mut spec = Table::new("spectrum", std::iter::once("omega".to_string()).chain(cfg.treatments.iter().map(|t| t.name().to_string())).collect());
    spec.plot_columns = (1..=outs.len()).collect();
    for (i, &w) in omegas.iter().enumerate() {
        let mut row = vec![Cell::Num(w)];
        row.extend(outs.iter().map(|o| Cell::Num(o.spectrum.intensities[i])));
        spec.rows.push(row);
    }
    let mut corr_cols = vec!["tau".to_string()];
    for t in &cfg.treatments {
        corr_cols.push(format!("{}_re", t.name()));
        corr_cols.push(format!("{}_im", t.name()));
    }
    let mut corr = Table::new("correlation", corr_cols);
    corr.plot_columns = (0..outs.len()).map(|i| 1 + 2 * i).collect();
    for (i, &tau) in taus.iter().enumerate() {
        let mut row = vec![Cell::Num(tau)];
        for o in &outs {
            let c = o.correlation.values[i];
            row.extend([Cell::Num(c.re), Cell::Num(c.im)]);
        }
        corr.rows.push(row);
    }
    let mut files = write(&cfg.output.dir, &spec, &header, cfg)?;
    files.extend(write(&cfg.output.dir, &corr, &header, cfg)?);
    Ok(RunSummary { files, ..Default::default() })
}

/// Field and bath parameters used by `verify` when the model leaves the
/// corresponding environment off.
const FALLBACK_FIELD: (f64, f64) = (0.4, 0.4);
const FALLBACK_BATH: (f64, f64) = (0.4, 0.4);

const RWA_ORACLE_TOL: f64 = 1e-4;
const DEPHASING_TOL: f64 = 1e-4;
const POPULATION_DRIFT_TOL: f64 = 1e-10;
const MC_SIGMAS: f64 = 3.0;
const FIELD_STEADY_TOL: f64 = 1e-3;
const RWA_STEADY_MAX: f64 = 1e-3;
const DIRECT_SOLVE_DEPTH: usize = 4;
const DIRECT_SOLVE_TOL: f64 = 1e-6;
const CONSERVATION_TOL: f64 = 1e-10;

struct Check {
    name: &'static str,
    quantity: String,
    deviation: f64,
    tolerance: f64,
    pass: bool,
    detail: String,
}

impl Check {
    fn at_most(name: &'static str, quantity: impl Into<String>, deviation: f64, tolerance: f64, detail: String) -> Self {
        Self { name, quantity: quantity.into(), deviation, tolerance, pass: deviation <= tolerance, detail }
    }

    fn failed(name: &'static str, quantity: impl Into<String>, tolerance: f64, e: &dyn fmt::Display) -> Self {
        Self { name, quantity: quantity.into(), deviation: f64::NAN, tolerance, pass: false, detail: e.to_string() }
    }
}

#[derive(Default)]
struct Audit {
    defects: Defects,
    depth_difference: f64,
}

impl Audit {
    fn record(&mut self, defects: &Defects, depth: &DepthReport) {
        self.defects.trace = self.defects.trace.max(defects.trace);
        self.defects.hermiticity = self.defects.hermiticity.max(defects.hermiticity);
        self.depth_difference = self.depth_difference.max(depth.difference.unwrap_or(0.0));
    }
}

fn field_model(cfg: &ExperimentConfig) -> ModelParams {
    let mut p = cfg.params();
    p.bath = ModelParams::default().bath;
    if p.field.is_off() {
        p = p.with_field(FALLBACK_FIELD.0, FALLBACK_FIELD.1);
    }
    p
}

fn bath_model(cfg: &ExperimentConfig) -> ModelParams {
    let mut p = cfg.params();
    let convention = p.field.convention;
    p.field = FieldParams::off();
    p.field.convention = convention;
    if p.bath.is_off() {
        p.bath.delta_b = FALLBACK_BATH.0;
        p.bath.gamma_b = FALLBACK_BATH.1;
    }
    p.with_coupling(Coupling::Rwa)
}

fn trajectory_cfg(cfg: &ExperimentConfig, stride: f64) -> PropagationConfig {
    PropagationConfig { t_end: cfg.verify.t_end, sample_stride: stride, ..cfg.propagation }
}

fn check_rwa_bath(cfg: &ExperimentConfig, audit: &mut Audit) -> Vec<Check> {
    let p = bath_model(cfg);
    let (gamma_b, amplitude) = (p.bath.gamma_b, p.bath.amplitude());
    let what = format!("excited population sup-norm, gamma_b {gamma_b}, A {amplitude}");
    let out = match evolve(&p, Treatment::Rwa, &DensityMatrix::excited(), &cfg.hierarchy, &trajectory_cfg(cfg, cfg.propagation.sample_stride)) {
        Ok(o) => o,
        Err(e) => return vec![Check::failed("rwa-bath-exact", what, RWA_ORACLE_TOL, &e)],
    };
    audit.record(&out.defects, &out.depth);
    let dev = out
        .times
        .iter()
        .zip(out.populations())
        .map(|(&t, pop)| (pop - rwa_bath_excited_population(t, gamma_b, amplitude)).abs())
        .fold(0.0, f64::max);
    vec![Check::at_most("rwa-bath-exact", what, dev, RWA_ORACLE_TOL, format!("depth {}", out.depth.depth))]
}

fn check_dephasing(cfg: &ExperimentConfig, audit: &mut Audit) -> Vec<Check> {
    let base = field_model(cfg);
    let s = base.field.source(OuKind::Omega);
    let (delta, gamma) = if s.delta > 0.0 { (s.delta, s.gamma) } else { FALLBACK_FIELD };
    let p = ModelParams::default().with_field_convention(base.field.convention).with_field_source(OuKind::Omega, delta, gamma);
    let proc = match p.field.process(OuKind::Omega) {
        Ok(proc) => proc,
        Err(e) => return vec![Check::failed("dephasing-exact", "coherence envelope", DEPHASING_TOL, &e)],
    };
    let rho0 = InitialState::Plus.density();
    let c0 = rho0.coherence().norm();
    let what = format!("coherence envelope sup-norm, omega process delta {delta}, gamma {gamma}");
    let out = match evolve(&p, Treatment::Full, &rho0, &cfg.hierarchy, &trajectory_cfg(cfg, cfg.propagation.sample_stride)) {
        Ok(o) => o,
        Err(e) => return vec![Check::failed("dephasing-exact", what, DEPHASING_TOL, &e)],
    };
    audit.record(&out.defects, &out.depth);
    let (mut env_dev, mut drift) = (0.0f64, 0.0f64);
    for (&t, r) in out.times.iter().zip(&out.states) {
        let env = ou_dephasing_coherence(t, &proc).unwrap_or(f64::NAN);
        env_dev = env_dev.max((r.coherence().norm() / c0 - env).abs());
        drift = drift.max((r.excited_population() - rho0.excited_population()).abs());
    }
    let detail = format!("depth {}", out.depth.depth);
    vec![
        Check::at_most("dephasing-exact", what, env_dev, DEPHASING_TOL, detail.clone()),
        Check::at_most("dephasing-exact", "population drift", drift, POPULATION_DRIFT_TOL, detail),
    ]
}

fn check_monte_carlo(cfg: &ExperimentConfig, audit: &mut Audit) -> Vec<Check> {
    let p = field_model(cfg);
    let v = &cfg.verify;
    let rho0 = InitialState::Plus.density();
    let what = format!("largest |HEOM - MC| / SE over populations and coherences, {} trajectories, seed {}", v.mc_trajectories, cfg.seed);
    let mc_cfg = McConfig { n_trajectories: v.mc_trajectories, dt: v.mc_dt, seed: cfg.seed, t_end: v.t_end, sample_stride: v.check_stride, target_stderr: None };
    let mc = match monte_carlo_evolution(&p, &rho0, &mc_cfg) {
        Ok(m) => m,
        Err(e) => return vec![Check::failed("monte-carlo", what, MC_SIGMAS, &e)],
    };
    let heom = match evolve(&p, Treatment::Full, &rho0, &cfg.hierarchy, &trajectory_cfg(cfg, v.check_stride)) {
        Ok(h) => h,
        Err(e) => return vec![Check::failed("monte-carlo", what, MC_SIGMAS, &e)],
    };
    audit.record(&heom.defects, &heom.depth);
    let (mut worst, mut beyond, mut checks) = (0.0f64, 0, 0);
    for ((h, m), e) in heom.states.iter().zip(&mc.mean).zip(&mc.stderr) {
        let h = h.matrix();
        let pairs = [
            (h[(0, 0)].re, m[(0, 0)].re, e[(0, 0)].re),
            (h[(0, 1)].re, m[(0, 1)].re, e[(0, 1)].re),
            (h[(0, 1)].im, m[(0, 1)].im, e[(0, 1)].im),
        ];
        for (x, y, se) in pairs {
            checks += 1;
            let diff = (x - y).abs();
            if diff > MC_SIGMAS * se + 1e-12 {
                beyond += 1;
            }
            if se > 0.0 {
                worst = worst.max(diff / se);
            }
        }
    }
    let mut c = Check::at_most("monte-carlo", what, worst, MC_SIGMAS, format!("{beyond}/{checks} comparisons beyond tolerance, depth {}", heom.depth.depth));
    c.pass = beyond == 0;
    vec![c]
}

fn check_steady(cfg: &ExperimentConfig, audit: &mut Audit) -> Vec<Check> {
    let mut checks = Vec::new();
    let field = field_model(cfg);
    let what = "|steady population - 1/2| under the field alone";
    match steady_state(&field, Treatment::Full, &cfg.hierarchy, &cfg.propagation) {
        Ok(out) => {
            audit.record(&out.defects, &out.depth);
            checks.push(Check::at_most("field-steady-half", what, (out.population() - 0.5).abs(), FIELD_STEADY_TOL, format!("depth {}", out.depth.depth)));
        }
        Err(e) => checks.push(Check::failed("field-steady-half", what, FIELD_STEADY_TOL, &e)),
    }
    let bath = bath_model(cfg);
    let what = "steady population under the RWA bath alone";
    match steady_state(&bath, Treatment::Rwa, &cfg.hierarchy, &cfg.propagation) {
        Ok(out) => {
            audit.record(&out.defects, &out.depth);
            checks.push(Check::at_most("rwa-bath-steady", what, out.population().abs(), RWA_STEADY_MAX, format!("depth {}", out.depth.depth)));
        }
        Err(e) => checks.push(Check::failed("rwa-bath-steady", what, RWA_STEADY_MAX, &e)),
    }
    checks
}

fn check_direct_solve(cfg: &ExperimentConfig) -> Vec<Check> {
    let mut p = cfg.params();
    if !p.has_dissipation() {
        p = p.with_field(FALLBACK_FIELD.0, FALLBACK_FIELD.1).with_bath(FALLBACK_BATH.0, FALLBACK_BATH.1, Coupling::Full);
    }
    let what = format!("largest entry difference between propagated and directly solved steady states at depth {DIRECT_SOLVE_DEPTH}");
    let run = || -> Result<f64, HeomError> {
        let gen = assemble_with(&p, DIRECT_SOLVE_DEPTH, cfg.hierarchy.truncation, cfg.hierarchy.slot_budget)?;
        let propagated = find_steady_state(&gen, &initial_state(&DensityMatrix::excited(), gen.layout()), &cfg.propagation)?;
        let direct = steady_state_direct(&gen)?;
        Ok((propagated.rho.matrix() - direct.rho.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max))
    };
    match run() {
        Ok(dev) => vec![Check::at_most("steady-direct-solve", what, dev, DIRECT_SOLVE_TOL, String::new())],
        Err(e) => vec![Check::failed("steady-direct-solve", what, DIRECT_SOLVE_TOL, &e)],
    }
}

fn run_verify(cfg: &ExperimentConfig) -> Result<RunSummary, RunError> {
    let mut audit = Audit::default();
    let mut checks = check_rwa_bath(cfg, &mut audit);
    checks.extend(check_dephasing(cfg, &mut audit));
    checks.extend(check_monte_carlo(cfg, &mut audit));
    checks.extend(check_steady(cfg, &mut audit));
    checks.extend(check_direct_solve(cfg));
    checks.push(Check::at_most("conservation", "largest trace defect", audit.defects.trace, CONSERVATION_TOL, String::new()));
    checks.push(Check::at_most("conservation", "largest hermiticity defect", audit.defects.hermiticity, CONSERVATION_TOL, String::new()));
    if let DepthPolicy::Auto(a) = cfg.hierarchy.depth {
        checks.push(Check::at_most("depth-convergence", "largest difference between the accepted depth and the one before", audit.depth_difference, a.tol, String::new()));
    }

    let mut header = base_header(cfg);
    header.push("checks", "each row compares the solver with an independent result; status PASS when deviation <= tolerance");
    header.push("fallbacks", format!("field delta, gamma = {FALLBACK_FIELD:?} and bath delta_b, gamma_b = {FALLBACK_BATH:?} where the model leaves them off"));
    let columns = ["check", "quantity", "deviation", "tolerance", "status", "detail"];
    let mut table = Table::new("verify", columns.iter().map(|c| c.to_string()).collect());
    let mut summary = RunSummary::default();
    for c in &checks {
        let status = if c.pass { "PASS" } else { "FAIL" };
        let line = format!("{status} {}: {} = {} (tolerance {}){}", c.name, c.quantity, format_number(c.deviation), format_number(c.tolerance), if c.detail.is_empty() { String::new() } else { format!("; {}", c.detail) });
        if !c.pass {
            summary.failures.push(line.clone());
        }
        summary.report.push(line);
        table.rows.push(vec![
            Cell::Text(c.name.into()),
            Cell::Text(c.quantity.clone()),
            Cell::Num(c.deviation),
            Cell::Num(c.tolerance),
            Cell::Text(status.into()),
            Cell::Text(c.detail.clone()),
        ]);
    }
    summary.files = write(&cfg.output.dir, &table, &header, cfg)?;
    Ok(summary)
}
