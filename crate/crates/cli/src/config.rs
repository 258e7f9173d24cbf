//! Experiment configuration. The text format is TOML with the sections
//! `model`, `run`, `propagation` and `output`; every key is optional except
//! `run.kind` (which the command line can supply).

use std::fmt;
use std::path::PathBuf;

use heom_qubit::hierarchy::{Truncation, DEFAULT_SLOT_BUDGET};
use heom_qubit::model::{
    AmplitudeConvention, BathParams, Coupling, DensityMatrix, FieldConvention, FieldParams, FieldSource, Mat2,
    ModelParams, OuKind, TlsParams, C64,
};
use heom_qubit::observables::{
    linspace, DEFAULT_OMEGA_MAX, DEFAULT_OMEGA_MIN, DEFAULT_OMEGA_POINTS, DEFAULT_TAU_MAX, DEFAULT_TAU_POINTS,
};
use heom_qubit::propagator::PropagationConfig;
use heom_qubit::study::{AutoDepth, DepthPolicy, HierarchyOptions, Treatment};
use heom_qubit::HeomError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// Dotted path of the offending key, when known.
    pub key: Option<String>,
    /// 1-based line in the configuration text, for syntax and schema errors.
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self { key: Some(key.into()), line: None, message: message.into() }
    }

    fn plain(message: impl Into<String>) -> Self {
        Self { key: None, line: None, message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(key) = &self.key {
            write!(f, "{key}: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    Evolve,
    SteadyState,
    SteadySweep,
    Spectrum,
    Verify,
}

impl RunKind {
    pub const ALL: [RunKind; 5] =
        [RunKind::Evolve, RunKind::SteadyState, RunKind::SteadySweep, RunKind::Spectrum, RunKind::Verify];

    pub fn name(self) -> &'static str {
        match self {
            RunKind::Evolve => "evolve",
            RunKind::SteadyState => "steady",
            RunKind::SteadySweep => "sweep",
            RunKind::Spectrum => "spectrum",
            RunKind::Verify => "verify",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    fn default_treatments(self) -> Vec<Treatment> {
        match self {
            RunKind::SteadyState | RunKind::SteadySweep => Treatment::ALL.to_vec(),
            _ => vec![Treatment::Full],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialState {
    Excited,
    Ground,
    Mixed,
    /// `(|e> + |g>) / sqrt 2`.
    Plus,
}

impl InitialState {
    const ALL: [InitialState; 4] = [InitialState::Excited, InitialState::Ground, InitialState::Mixed, InitialState::Plus];

    pub fn name(self) -> &'static str {
        match self {
            InitialState::Excited => "excited",
            InitialState::Ground => "ground",
            InitialState::Mixed => "mixed",
            InitialState::Plus => "plus",
        }
    }

    pub fn density(self) -> DensityMatrix {
        match self {
            InitialState::Excited => DensityMatrix::excited(),
            InitialState::Ground => DensityMatrix::ground(),
            InitialState::Mixed => DensityMatrix::maximally_mixed(),
            InitialState::Plus => DensityMatrix::from_matrix_unchecked(Mat2::from_element(C64::new(0.5, 0.0))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ProcessOverride {
    pub delta: Option<f64>,
    pub gamma: Option<f64>,
}

/// Model parameters as written in the configuration. The three field
/// processes share `delta_f` and `gamma_f` unless overridden individually.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub omega0: f64,
    pub delta_b: f64,
    pub gamma_b: f64,
    pub coupling: Coupling,
    pub amplitude_convention: AmplitudeConvention,
    pub delta_f: f64,
    pub gamma_f: f64,
    pub field_convention: FieldConvention,
    /// Ordered as `OuKind::ALL`.
    pub overrides: [ProcessOverride; 3],
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            omega0: 1.0,
            delta_b: 0.0,
            gamma_b: 1.0,
            coupling: Coupling::Full,
            amplitude_convention: AmplitudeConvention::default(),
            delta_f: 0.0,
            gamma_f: 1.0,
            field_convention: FieldConvention::default(),
            overrides: [ProcessOverride::default(); 3],
        }
    }
}

impl ModelSpec {
    pub fn params(&self) -> ModelParams {
        let mut sources = [FieldSource { delta: self.delta_f, gamma: self.gamma_f }; 3];
        for (s, o) in sources.iter_mut().zip(&self.overrides) {
            s.delta = o.delta.unwrap_or(s.delta);
            s.gamma = o.gamma.unwrap_or(s.gamma);
        }
        ModelParams {
            tls: TlsParams { omega0: self.omega0 },
            field: FieldParams { sources, convention: self.field_convention },
            bath: BathParams {
                delta_b: self.delta_b,
                gamma_b: self.gamma_b,
                coupling: self.coupling,
                amplitude_convention: self.amplitude_convention,
            },
        }
    }

    pub fn set(&mut self, parameter: SweepParameter, value: f64) {
        match parameter {
            SweepParameter::Omega0 => self.omega0 = value,
            SweepParameter::DeltaB => self.delta_b = value,
            SweepParameter::GammaB => self.gamma_b = value,
            SweepParameter::DeltaF => self.delta_f = value,
            SweepParameter::GammaF => self.gamma_f = value,
            SweepParameter::ProcessDelta(k) => self.overrides[k.index()].delta = Some(value),
            SweepParameter::ProcessGamma(k) => self.overrides[k.index()].gamma = Some(value),
        }
    }

    fn validate(&self) -> Result<()> {
        positive("model.omega0", self.omega0)?;
        non_negative("model.delta_b", self.delta_b)?;
        positive("model.gamma_b", self.gamma_b)?;
        non_negative("model.delta_f", self.delta_f)?;
        positive("model.gamma_f", self.gamma_f)?;
        for (kind, o) in OuKind::ALL.iter().zip(&self.overrides) {
            if let Some(d) = o.delta {
                non_negative(&format!("model.{}.delta", kind.name()), d)?;
            }
            if let Some(g) = o.gamma {
                positive(&format!("model.{}.gamma", kind.name()), g)?;
            }
        }
        self.params().validate().map_err(|e| ConfigError::new("model", e.to_string()))
    }
}

/// Model parameter a sweep may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    Omega0,
    DeltaB,
    GammaB,
    /// Shared strength of all field processes without an override.
    DeltaF,
    GammaF,
    ProcessDelta(OuKind),
    ProcessGamma(OuKind),
}

impl SweepParameter {
    pub fn path(self) -> String {
        match self {
            SweepParameter::Omega0 => "omega0".into(),
            SweepParameter::DeltaB => "delta_b".into(),
            SweepParameter::GammaB => "gamma_b".into(),
            SweepParameter::DeltaF => "delta_f".into(),
            SweepParameter::GammaF => "gamma_f".into(),
            SweepParameter::ProcessDelta(k) => format!("{}.delta", k.name()),
            SweepParameter::ProcessGamma(k) => format!("{}.gamma", k.name()),
        }
    }

    pub fn parse(path: &str) -> Option<Self> {
        let path = path.strip_prefix("model.").unwrap_or(path);
        let simple = [
            SweepParameter::Omega0,
            SweepParameter::DeltaB,
            SweepParameter::GammaB,
            SweepParameter::DeltaF,
            SweepParameter::GammaF,
        ];
        simple
            .into_iter()
            .chain(OuKind::ALL.iter().flat_map(|&k| [SweepParameter::ProcessDelta(k), SweepParameter::ProcessGamma(k)]))
            .find(|p| p.path() == path)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumGrid {
    pub tau_max: f64,
    pub tau_points: usize,
    pub omega_min: f64,
    pub omega_max: f64,
    pub omega_points: usize,
}

impl Default for SpectrumGrid {
    fn default() -> Self {
        Self {
            tau_max: DEFAULT_TAU_MAX,
            tau_points: DEFAULT_TAU_POINTS,
            omega_min: DEFAULT_OMEGA_MIN,
            omega_max: DEFAULT_OMEGA_MAX,
            omega_points: DEFAULT_OMEGA_POINTS,
        }
    }
}

impl SpectrumGrid {
    pub fn taus(&self) -> Vec<f64> {
        linspace(0.0, self.tau_max, self.tau_points)
    }

    pub fn omegas(&self) -> Vec<f64> {
        linspace(self.omega_min, self.omega_max, self.omega_points)
    }
}

/// Settings of the oracle checks run by `verify`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifySettings {
    /// Checks compare trajectories on `[0, t_end]`.
    pub t_end: f64,
    pub mc_trajectories: usize,
    pub mc_dt: f64,
    /// Spacing of the times at which Monte Carlo means are compared.
    pub check_stride: f64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self { t_end: 50.0, mc_trajectories: 10_000, mc_dt: 1e-3, check_stride: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputOptions {
    pub dir: PathBuf,
    /// Also write a JSON mirror of every table.
    pub json: bool,
    /// Also write a gnuplot script next to every table.
    pub plot: bool,
}

impl Default for OutputOptions {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), json: false, plot: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub kind: RunKind,
    pub treatments: Vec<Treatment>,
    pub sweep: Option<SweepAxis>,
    pub propagation: PropagationConfig,
    pub hierarchy: HierarchyOptions,
    pub initial: InitialState,
    /// Seeds the Monte Carlo oracle.
    pub seed: u64,
    pub spectrum: SpectrumGrid,
    pub verify: VerifySettings,
    pub output: OutputOptions,
}

impl ExperimentConfig {
    pub fn params(&self) -> ModelParams {
        self.model.params()
    }

    /// The configuration with every default written out. Parsing the result
    /// gives back `self` except for the output directory, which is omitted.
    pub fn to_toml(&self) -> String {
        let mut raw = self.to_raw();
        if let Some(out) = raw.output.as_mut() {
            out.dir = None;
        }
        toml::to_string(&raw).expect("configuration serializes")
    }

    fn to_raw(&self) -> RawConfig {
        let m = &self.model;
        let process = |k: OuKind| {
            let o = m.overrides[k.index()];
            (o.delta.is_some() || o.gamma.is_some()).then_some(RawProcess { delta: o.delta, gamma: o.gamma })
        };
        let model = RawModel {
            omega0: Some(m.omega0),
            delta_b: Some(m.delta_b),
            gamma_b: Some(m.gamma_b),
            coupling: Some(m.coupling.name().into()),
            amplitude_convention: Some(m.amplitude_convention.name().into()),
            delta_f: Some(m.delta_f),
            gamma_f: Some(m.gamma_f),
            field_convention: Some(m.field_convention.name().into()),
            omega: process(OuKind::Omega),
            xi1: process(OuKind::Xi1),
            xi2: process(OuKind::Xi2),
        };
        let (depth, auto) = match self.hierarchy.depth {
            DepthPolicy::Fixed(l) => (RawDepth::Level(l), None),
            DepthPolicy::Auto(a) => (RawDepth::Name("auto".into()), Some(a)),
        };
        let g = &self.spectrum;
        let v = &self.verify;
        let run = RawRun {
            kind: Some(self.kind.name().into()),
            treatments: Some(self.treatments.iter().map(|t| t.name().to_string()).collect()),
            depth: Some(depth),
            depth_start: auto.map(|a| a.start),
            depth_step: auto.map(|a| a.step),
            depth_max: auto.map(|a| a.max),
            depth_tol: auto.map(|a| a.tol),
            truncation: Some(self.hierarchy.truncation.name().into()),
            slot_budget: Some(self.hierarchy.slot_budget),
            initial_state: Some(self.initial.name().into()),
            seed: Some(self.seed),
            sweep: self.sweep.as_ref().map(|s| RawSweep {
                parameter: s.parameter.path(),
                values: Some(s.values.clone()),
                start: None,
                stop: None,
                points: None,
            }),
            spectrum: Some(RawSpectrum {
                tau_max: Some(g.tau_max),
                tau_points: Some(g.tau_points),
                omega_min: Some(g.omega_min),
                omega_max: Some(g.omega_max),
                omega_points: Some(g.omega_points),
            }),
            verify: Some(RawVerify {
                t_end: Some(v.t_end),
                mc_trajectories: Some(v.mc_trajectories),
                mc_dt: Some(v.mc_dt),
                check_stride: Some(v.check_stride),
            }),
        };
        let p = &self.propagation;
        let propagation = RawPropagation {
            t_end: Some(p.t_end),
            dt_init: Some(p.dt_init),
            rel_tol: Some(p.rel_tol),
            abs_tol: Some(p.abs_tol),
            sample_stride: Some(p.sample_stride),
            steady_tol: Some(p.steady_tol),
            steady_window: Some(p.steady_window),
            max_steps: Some(p.max_steps),
        };
        let output = RawOutput {
            dir: Some(self.output.dir.to_string_lossy().into_owned()),
            json: Some(self.output.json),
            plot: Some(self.output.plot),
        };
        RawConfig { model: Some(model), run: Some(run), propagation: Some(propagation), output: Some(output) }
    }
}

/// Values given on the command line; they take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub kind: Option<RunKind>,
    pub out: Option<PathBuf>,
    pub depth: Option<DepthPolicy>,
    pub treatments: Option<Vec<Treatment>>,
    pub seed: Option<u64>,
}

/// Parse and validate a configuration.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_with(text, &Overrides::default())
}

/// Parse a configuration and apply command-line overrides before
/// validation. A `kind` override must agree with `run.kind` when both are
/// present.
pub fn parse_with(text: &str, overrides: &Overrides) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        ConfigError { key: None, line, message: e.message().trim().to_string() }
    })?;
    build(raw, overrides)
}

/// Text of an embedded configuration block in a previous output file, or
/// the input unchanged if it has none.
pub fn extract_embedded(text: &str) -> String {
    let bare = CONFIG_LINE_PREFIX.trim_end();
    let embedded: Vec<&str> = text
        .lines()
        .filter_map(|l| l.strip_prefix(CONFIG_LINE_PREFIX).or((l.trim_end() == bare).then_some("")))
        .collect();
    if embedded.is_empty() {
        text.to_string()
    } else {
        embedded.join("\n") + "\n"
    }
}

/// Prefix of the header lines that carry the configuration in output files.
pub const CONFIG_LINE_PREFIX: &str = "# | ";

fn positive(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::new(key, format!("must be finite and > 0, got {v}")))
    }
}

fn non_negative(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(ConfigError::new(key, format!("must be finite and >= 0, got {v}")))
    }
}

fn pick<T: Copy>(key: &str, value: Option<&str>, options: &[T], name: impl Fn(T) -> &'static str, default: T) -> Result<T> {
    let Some(s) = value else { return Ok(default) };
    options.iter().copied().find(|&o| name(o) == s).ok_or_else(|| {
        let names: Vec<&str> = options.iter().map(|&o| name(o)).collect();
        ConfigError::new(key, format!("unknown value {s:?}, expected one of {}", names.join(", ")))
    })
}

fn build(raw: RawConfig, overrides: &Overrides) -> Result<ExperimentConfig> {
    let run = raw.run.unwrap_or_default();
    let kind = match (run.kind.as_deref(), overrides.kind) {
        (None, None) => return Err(ConfigError::new("run.kind", "missing; set it or pass a subcommand")),
        (None, Some(k)) => k,
        (Some(s), k) => {
            let parsed = RunKind::parse(s).ok_or_else(|| {
                let names: Vec<&str> = RunKind::ALL.iter().map(|k| k.name()).collect();
                ConfigError::new("run.kind", format!("unknown value {s:?}, expected one of {}", names.join(", ")))
            })?;
            if let Some(k) = k.filter(|&k| k != parsed) {
                return Err(ConfigError::new(
                    "run.kind",
                    format!("configuration is for {:?} but the subcommand is {:?}", parsed.name(), k.name()),
                ));
            }
            parsed
        }
    };

    let model = build_model(raw.model.unwrap_or_default())?;

    let treatments = match (&overrides.treatments, &run.treatments) {
        (Some(t), _) => t.clone(),
        (None, Some(names)) => names
            .iter()
            .map(|n| {
                Treatment::parse(n)
                    .ok_or_else(|| ConfigError::new("run.treatments", format!("unknown treatment {n:?}, expected full, rwa or markov")))
            })
            .collect::<Result<Vec<_>>>()?,
        (None, None) => kind.default_treatments(),
    };
    if treatments.is_empty() {
        return Err(ConfigError::new("run.treatments", "at least one treatment is required"));
    }
    for (i, t) in treatments.iter().enumerate() {
        if treatments[..i].contains(t) {
            return Err(ConfigError::new("run.treatments", format!("{:?} listed twice", t.name())));
        }
    }

    let hierarchy = build_hierarchy(&run, overrides)?;
    let initial = pick("run.initial_state", run.initial_state.as_deref(), &InitialState::ALL, InitialState::name, InitialState::Excited)?;
    let seed = overrides.seed.or(run.seed).unwrap_or(0);
    if i64::try_from(seed).is_err() {
        return Err(ConfigError::new("run.seed", format!("must be at most {}", i64::MAX)));
    }

    let spectrum = build_spectrum(run.spectrum.unwrap_or_default())?;
    let verify = build_verify(run.verify.unwrap_or_default())?;
    let propagation = build_propagation(raw.propagation.unwrap_or_default(), kind)?;

    let sweep = match (kind, run.sweep) {
        (RunKind::SteadySweep, Some(s)) => Some(build_sweep(s, &model)?),
        (RunKind::SteadySweep, None) => return Err(ConfigError::new("run.sweep", "a sweep run needs a sweep axis")),
        (_, Some(_)) => return Err(ConfigError::new("run.sweep", format!("only allowed for sweep runs, not {:?}", kind.name()))),
        (_, None) => None,
    };

    let out = raw.output.unwrap_or_default();
    let defaults = OutputOptions::default();
    let output = OutputOptions {
        dir: overrides.out.clone().or(out.dir.map(PathBuf::from)).unwrap_or(defaults.dir),
        json: out.json.unwrap_or(defaults.json),
        plot: out.plot.unwrap_or(defaults.plot),
    };

    Ok(ExperimentConfig { model, kind, treatments, sweep, propagation, hierarchy, initial, seed, spectrum, verify, output })
}

fn build_model(raw: RawModel) -> Result<ModelSpec> {
    let d = ModelSpec::default();
    let process = |p: Option<RawProcess>| p.map(|p| ProcessOverride { delta: p.delta, gamma: p.gamma }).unwrap_or_default();
    let model = ModelSpec {
        omega0: raw.omega0.unwrap_or(d.omega0),
        delta_b: raw.delta_b.unwrap_or(d.delta_b),
        gamma_b: raw.gamma_b.unwrap_or(d.gamma_b),
        coupling: pick("model.coupling", raw.coupling.as_deref(), &[Coupling::Full, Coupling::Rwa], Coupling::name, d.coupling)?,
        amplitude_convention: pick(
            "model.amplitude_convention",
            raw.amplitude_convention.as_deref(),
            &[AmplitudeConvention::EqFiveFourier, AmplitudeConvention::BareDeltaSquared],
            AmplitudeConvention::name,
            d.amplitude_convention,
        )?,
        delta_f: raw.delta_f.unwrap_or(d.delta_f),
        gamma_f: raw.gamma_f.unwrap_or(d.gamma_f),
        field_convention: pick(
            "model.field_convention",
            raw.field_convention.as_deref(),
            &[FieldConvention::Printed, FieldConvention::EqThree],
            FieldConvention::name,
            d.field_convention,
        )?,
        overrides: [process(raw.omega), process(raw.xi1), process(raw.xi2)],
    };
    model.validate()?;
    Ok(model)
}

fn build_hierarchy(run: &RawRun, overrides: &Overrides) -> Result<HierarchyOptions> {
    let d = HierarchyOptions::default();
    let from_file = match &run.depth {
        None => None,
        Some(RawDepth::Level(l)) => Some(DepthPolicy::Fixed(*l)),
        Some(RawDepth::Name(s)) if s == "auto" => Some(DepthPolicy::Auto(AutoDepth::default())),
        Some(RawDepth::Name(s)) => {
            return Err(ConfigError::new("run.depth", format!("expected a non-negative integer or \"auto\", got {s:?}")))
        }
    };
    let depth = match overrides.depth.or(from_file).unwrap_or(d.depth) {
        DepthPolicy::Auto(_) => {
            let a = AutoDepth::default();
            let auto = AutoDepth {
                start: run.depth_start.unwrap_or(a.start),
                step: run.depth_step.unwrap_or(a.step),
                max: run.depth_max.unwrap_or(a.max),
                tol: run.depth_tol.unwrap_or(a.tol),
            };
            if auto.step == 0 {
                return Err(ConfigError::new("run.depth_step", "must be >= 1"));
            }
            if auto.max < auto.start {
                return Err(ConfigError::new("run.depth_max", "must be >= run.depth_start"));
            }
            positive("run.depth_tol", auto.tol)?;
            DepthPolicy::Auto(auto)
        }
        fixed => {
            let stray = [
                ("run.depth_start", run.depth_start.is_some()),
                ("run.depth_step", run.depth_step.is_some()),
                ("run.depth_max", run.depth_max.is_some()),
                ("run.depth_tol", run.depth_tol.is_some()),
            ];
            if let Some((key, _)) = stray.iter().find(|(_, set)| *set) {
                return Err(ConfigError::new(*key, "only applies with depth = \"auto\""));
            }
            fixed
        }
    };
    let truncation = pick(
        "run.truncation",
        run.truncation.as_deref(),
        &[Truncation::Total, Truncation::PerDirection],
        Truncation::name,
        d.truncation,
    )?;
    let slot_budget = run.slot_budget.unwrap_or(DEFAULT_SLOT_BUDGET);
    if slot_budget == 0 {
        return Err(ConfigError::new("run.slot_budget", "must be >= 1"));
    }
    Ok(HierarchyOptions { depth, truncation, slot_budget })
}

fn build_spectrum(raw: RawSpectrum) -> Result<SpectrumGrid> {
    let d = SpectrumGrid::default();
    let g = SpectrumGrid {
        tau_max: raw.tau_max.unwrap_or(d.tau_max),
        tau_points: raw.tau_points.unwrap_or(d.tau_points),
        omega_min: raw.omega_min.unwrap_or(d.omega_min),
        omega_max: raw.omega_max.unwrap_or(d.omega_max),
        omega_points: raw.omega_points.unwrap_or(d.omega_points),
    };
    positive("run.spectrum.tau_max", g.tau_max)?;
    if g.tau_points < 2 {
        return Err(ConfigError::new("run.spectrum.tau_points", "must be >= 2"));
    }
    if g.omega_points < 2 {
        return Err(ConfigError::new("run.spectrum.omega_points", "must be >= 2"));
    }
    if !(g.omega_min.is_finite() && g.omega_max.is_finite() && g.omega_min < g.omega_max) {
        return Err(ConfigError::new("run.spectrum.omega_max", "must be finite and greater than omega_min"));
    }
    Ok(g)
}

fn is_multiple(x: f64, unit: f64) -> bool {
    let n = (x / unit).round();
    n >= 1.0 && (x - n * unit).abs() <= 1e-9 * x
}

fn build_verify(raw: RawVerify) -> Result<VerifySettings> {
    let d = VerifySettings::default();
    let v = VerifySettings {
        t_end: raw.t_end.unwrap_or(d.t_end),
        mc_trajectories: raw.mc_trajectories.unwrap_or(d.mc_trajectories),
        mc_dt: raw.mc_dt.unwrap_or(d.mc_dt),
        check_stride: raw.check_stride.unwrap_or(d.check_stride),
    };
    positive("run.verify.t_end", v.t_end)?;
    positive("run.verify.mc_dt", v.mc_dt)?;
    positive("run.verify.check_stride", v.check_stride)?;
    if v.mc_trajectories < 2 {
        return Err(ConfigError::new("run.verify.mc_trajectories", "must be >= 2"));
    }
    if !is_multiple(v.check_stride, v.mc_dt) {
        return Err(ConfigError::new("run.verify.check_stride", "must be a whole multiple of mc_dt"));
    }
    if !is_multiple(v.t_end, v.check_stride) {
        return Err(ConfigError::new("run.verify.t_end", "must be a whole multiple of check_stride"));
    }
    Ok(v)
}

/// Horizon for runs that look for a steady state; evolution runs keep the
/// propagator default.
pub const STEADY_HORIZON: f64 = 3000.0;

fn build_propagation(raw: RawPropagation, kind: RunKind) -> Result<PropagationConfig> {
    let mut d = PropagationConfig::default();
    if kind != RunKind::Evolve {
        d.t_end = STEADY_HORIZON;
    }
    let p = PropagationConfig {
        t_end: raw.t_end.unwrap_or(d.t_end),
        dt_init: raw.dt_init.unwrap_or(d.dt_init),
        rel_tol: raw.rel_tol.unwrap_or(d.rel_tol),
        abs_tol: raw.abs_tol.unwrap_or(d.abs_tol),
        sample_stride: raw.sample_stride.unwrap_or(d.sample_stride),
        steady_tol: raw.steady_tol.unwrap_or(d.steady_tol),
        steady_window: raw.steady_window.unwrap_or(d.steady_window),
        max_steps: raw.max_steps.unwrap_or(d.max_steps),
    };
    p.validate().map_err(|e| match e {
        HeomError::InvalidParameter { name, reason } => ConfigError::new(format!("propagation.{name}"), reason),
        other => ConfigError::plain(other.to_string()),
    })?;
    if p.max_steps == 0 {
        return Err(ConfigError::new("propagation.max_steps", "must be >= 1"));
    }
    Ok(p)
}

fn build_sweep(raw: RawSweep, model: &ModelSpec) -> Result<SweepAxis> {
    let parameter = SweepParameter::parse(&raw.parameter).ok_or_else(|| {
        ConfigError::new(
            "run.sweep.parameter",
            format!(
                "{:?} is not a model parameter; expected omega0, delta_b, gamma_b, delta_f, gamma_f or <process>.delta / <process>.gamma with process omega, xi1 or xi2",
                raw.parameter
            ),
        )
    })?;
    let values = match (raw.values, raw.start, raw.stop, raw.points) {
        (Some(v), None, None, None) => v,
        (None, Some(start), Some(stop), Some(points)) => {
            if points < 2 {
                return Err(ConfigError::new("run.sweep.points", "must be >= 2"));
            }
            if !(start.is_finite() && stop.is_finite()) {
                return Err(ConfigError::new("run.sweep.start", "start and stop must be finite"));
            }
            linspace(start, stop, points)
        }
        _ => return Err(ConfigError::new("run.sweep", "give either `values` or all of `start`, `stop`, `points`")),
    };
    if values.is_empty() {
        return Err(ConfigError::new("run.sweep.values", "must not be empty"));
    }
    for (i, &v) in values.iter().enumerate() {
        let mut m = model.clone();
        m.set(parameter, v);
        m.validate().map_err(|e| ConfigError::new(format!("run.sweep.values[{i}]"), format!("{v}: {e}")))?;
    }
    Ok(SweepAxis { parameter, values })
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<RawModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    run: Option<RawRun>,
    #[serde(skip_serializing_if = "Option::is_none")]
    propagation: Option<RawPropagation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output: Option<RawOutput>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    #[serde(skip_serializing_if = "Option::is_none")]
    omega0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coupling: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    amplitude_convention: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta_f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma_f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    field_convention: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    omega: Option<RawProcess>,
    #[serde(skip_serializing_if = "Option::is_none")]
    xi1: Option<RawProcess>,
    #[serde(skip_serializing_if = "Option::is_none")]
    xi2: Option<RawProcess>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProcess {
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RawDepth {
    Level(usize),
    Name(String),
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    #[serde(skip_serializing_if = "Option::is_none")]
    kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    treatments: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    depth: Option<RawDepth>,
    #[serde(skip_serializing_if = "Option::is_none")]
    depth_start: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    depth_step: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    depth_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    depth_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    truncation: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    slot_budget: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    initial_state: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<RawSweep>,
    #[serde(skip_serializing_if = "Option::is_none")]
    spectrum: Option<RawSpectrum>,
    #[serde(skip_serializing_if = "Option::is_none")]
    verify: Option<RawVerify>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    parameter: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    values: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    start: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stop: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    points: Option<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpectrum {
    #[serde(skip_serializing_if = "Option::is_none")]
    tau_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tau_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    omega_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    omega_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    omega_points: Option<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVerify {
    #[serde(skip_serializing_if = "Option::is_none")]
    t_end: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mc_trajectories: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mc_dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    check_stride: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPropagation {
    #[serde(skip_serializing_if = "Option::is_none")]
    t_end: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dt_init: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rel_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    abs_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sample_stride: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    steady_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    steady_window: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_steps: Option<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    dir: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    json: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    plot: Option<bool>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config("[model]\ndelta_f = 0.4\ngamma_f = 0.4\n[run]\nkind = \"evolve\"\n").unwrap();
        assert_eq!(cfg.kind, RunKind::Evolve);
        assert!(matches!(cfg.hierarchy.depth, DepthPolicy::Auto(a) if a == AutoDepth::default()));
        assert_eq!(cfg.propagation, PropagationConfig::default());
        let steady = parse_config("[run]\nkind = \"steady\"\n").unwrap();
        assert_eq!(steady.propagation.t_end, STEADY_HORIZON);
        assert_eq!(cfg.treatments, vec![Treatment::Full]);
        assert_eq!(cfg.initial, InitialState::Excited);
        assert_eq!(cfg.params().field.sources[2].gamma, 0.4);
    }

    #[test]
    fn sweep_plan() {
        let text = "[model]\ndelta_b = 0.4\n[run]\nkind = \"sweep\"\n[run.sweep]\nparameter = \"gamma_b\"\nvalues = [0.2, 0.4, 0.8]\n";
        let cfg = parse_config(text).unwrap();
        let axis = cfg.sweep.unwrap();
        assert_eq!(axis.parameter, SweepParameter::GammaB);
        assert_eq!(axis.values, vec![0.2, 0.4, 0.8]);
        assert_eq!(cfg.treatments, Treatment::ALL.to_vec());
    }

    #[test]
    fn unknown_key_is_named_with_line() {
        let err = parse_config("[run]\nkind = \"steady\"\n\n[model]\ntempreature = 0.1\n").unwrap_err();
        assert!(err.message.contains("tempreature"), "{err}");
        assert_eq!(err.line, Some(5));
    }

    #[test]
    fn syntax_error_has_line() {
        let err = parse_config("[run]\nkind = \"steady\"\ndepth = = 4\n").unwrap_err();
        assert_eq!(err.line, Some(3), "{err}");
    }

    #[test]
    fn sweep_axis_iff_sweep() {
        let err = parse_config("[run]\nkind = \"sweep\"\n").unwrap_err();
        assert_eq!(err.key.as_deref(), Some("run.sweep"));
        let err = parse_config("[run]\nkind = \"steady\"\n[run.sweep]\nparameter = \"gamma_b\"\nvalues = [1.0]\n").unwrap_err();
        assert_eq!(err.key.as_deref(), Some("run.sweep"));
    }

    #[test]
    fn sweep_parameter_must_exist_and_values_be_valid() {
        let err = parse_config("[run]\nkind = \"sweep\"\n[run.sweep]\nparameter = \"gamma_x\"\nvalues = [1.0]\n").unwrap_err();
        assert_eq!(err.key.as_deref(), Some("run.sweep.parameter"));
        let err = parse_config("[run]\nkind = \"sweep\"\n[run.sweep]\nparameter = \"xi2.gamma\"\nvalues = [1.0, -1.0]\n").unwrap_err();
        assert_eq!(err.key.as_deref(), Some("run.sweep.values[1]"));
    }

    #[test]
    fn linear_sweep_form() {
        let text = "[run]\nkind = \"sweep\"\n[run.sweep]\nparameter = \"model.gamma_f\"\nstart = 0.1\nstop = 0.5\npoints = 5\n";
        let axis = parse_config(text).unwrap().sweep.unwrap();
        assert_eq!(axis.parameter, SweepParameter::GammaF);
        assert_eq!(axis.values.len(), 5);
        assert!((axis.values[4] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn validation_names_key() {
        let err = parse_config("[run]\nkind = \"steady\"\n[model]\ngamma_b = -1.0\n").unwrap_err();
        assert_eq!(err.key.as_deref(), Some("model.gamma_b"));
        let err = parse_config("[run]\nkind = \"steady\"\n[propagation]\nrel_tol = 0.0\n").unwrap_err();
        assert_eq!(err.key.as_deref(), Some("propagation.rel_tol"));
        let err = parse_config("[run]\nkind = \"steady\"\ntreatments = [\"exact\"]\n").unwrap_err();
        assert_eq!(err.key.as_deref(), Some("run.treatments"));
        let err = parse_config("[run]\nkind = \"steady\"\ndepth = 6\ndepth_tol = 1e-6\n").unwrap_err();
        assert_eq!(err.key.as_deref(), Some("run.depth_tol"));
    }

    #[test]
    fn kind_from_overrides_and_conflicts() {
        let o = Overrides { kind: Some(RunKind::Verify), ..Default::default() };
        assert_eq!(parse_with("", &o).unwrap().kind, RunKind::Verify);
        assert!(parse_config("").is_err());
        let err = parse_with("[run]\nkind = \"evolve\"\n", &o).unwrap_err();
        assert_eq!(err.key.as_deref(), Some("run.kind"));
    }

    #[test]
    fn per_process_override_survives_shared_sweep() {
        let text = "[model]\ndelta_f = 0.4\n[model.xi2]\ngamma = 2.0\n[run]\nkind = \"sweep\"\n[run.sweep]\nparameter = \"gamma_f\"\nvalues = [0.3]\n";
        let cfg = parse_config(text).unwrap();
        let mut m = cfg.model.clone();
        m.set(SweepParameter::GammaF, 0.3);
        let p = m.params();
        assert_eq!(p.field.sources[0].gamma, 0.3);
        assert_eq!(p.field.sources[2].gamma, 2.0);
    }

    #[test]
    fn normalized_toml_round_trips() {
        let text = "[model]\ndelta_b = 0.4\ngamma_b = 0.8\ndelta_f = 0.4\n[model.omega]\ndelta = 0.1\n[run]\nkind = \"sweep\"\ndepth = 8\n[run.sweep]\nparameter = \"gamma_f\"\nstart = 0.2\nstop = 1.2\npoints = 6\n[output]\ndir = \"elsewhere\"\njson = true\n";
        let cfg = parse_config(text).unwrap();
        let again = parse_config(&cfg.to_toml()).unwrap();
        assert_eq!(again.output.dir, OutputOptions::default().dir);
        assert_eq!(ExperimentConfig { output: cfg.output.clone(), ..again }, cfg);
    }

    #[test]
    fn embedded_block_is_extracted() {
        let file = "# heom-qubit\n# config:\n# | [model]\n# |\n# | [run]\n# | kind = \"verify\"\ntime,value\n1,2\n";
        assert_eq!(extract_embedded(file), "[model]\n\n[run]\nkind = \"verify\"\n");
        assert_eq!(extract_embedded("[run]\n"), "[run]\n");
    }
}
