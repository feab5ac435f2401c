//! Experiment configuration: parsing, defaults and validation.
//!
//! A config holds a base model and truncation plus one or more `[[run]]`
//! tables. Each run may patch the model, override the truncation, and picks
//! its experiment through `[run.experiment] kind = "..."`. Resolution fills
//! every default so the manifest records the complete input.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tripartite::{BareLabel, HilbertSpace, Mode, ModelParams, Resonance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truncation {
    pub photons: usize,
    pub phonons: usize,
}

impl Truncation {
    pub fn space(&self) -> Option<HilbertSpace> {
        HilbertSpace::new(self.photons, self.phonons).ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

/// Either `{ start, stop, step }` (both ends included) or an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    // Listed first: serde would otherwise read a three-element list as a range.
    Values(Vec<f64>),
    Range(Range),
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        match self {
            Grid::Values(v) => v.clone(),
            Grid::Range(r) => {
                let n = ((r.stop - r.start) / r.step + 1e-9).floor() as usize + 1;
                (0..n).map(|k| r.start + k as f64 * r.step).collect()
            }
        }
    }

    fn check(&self, name: &str, issues: &mut Vec<String>) {
        if let Grid::Range(r) = self {
            if !(r.start.is_finite() && r.stop.is_finite() && r.step.is_finite()) {
                issues.push(format!("{name}: range bounds must be finite"));
                return;
            }
            if r.step <= 0.0 || r.stop < r.start {
                issues.push(format!("{name}: need step > 0 and stop >= start"));
                return;
            }
            if (r.stop - r.start) / r.step > 1e7 {
                issues.push(format!("{name}: more than 1e7 points"));
                return;
            }
        }
        let p = self.points();
        if p.is_empty() {
            issues.push(format!("{name}: grid is empty"));
        } else if p.iter().any(|v| !v.is_finite()) {
            issues.push(format!("{name}: grid values must be finite"));
        } else if p.windows(2).any(|w| !(w[1] > w[0])) {
            issues.push(format!("{name}: grid must be strictly ascending"));
        }
    }
}

/// Per-run overrides of the base model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPatch {
    pub delta_a: Option<f64>,
    pub delta_sigma: Option<f64>,
    pub omega_b: Option<f64>,
    pub lambda: Option<f64>,
    pub omega_drive: Option<f64>,
    pub kappa_a: Option<f64>,
    pub kappa_a2: Option<f64>,
    pub kappa_b: Option<f64>,
    pub gamma: Option<f64>,
}

impl ModelPatch {
    pub fn apply(&self, mut p: ModelParams) -> ModelParams {
        let fields = [
            (&mut p.delta_a, self.delta_a),
            (&mut p.delta_sigma, self.delta_sigma),
            (&mut p.omega_b, self.omega_b),
            (&mut p.lambda, self.lambda),
            (&mut p.omega_drive, self.omega_drive),
            (&mut p.kappa_a, self.kappa_a),
            (&mut p.kappa_a2, self.kappa_a2),
            (&mut p.kappa_b, self.kappa_b),
            (&mut p.gamma, self.gamma),
        ];
        for (slot, v) in fields {
            if let Some(v) = v {
                *slot = v;
            }
        }
        p
    }
}

fn plus00() -> BareLabel {
    BareLabel::plus(0, 0)
}

fn minus00() -> BareLabel {
    BareLabel::minus(0, 0)
}

fn resonance_pairs() -> Vec<[BareLabel; 2]> {
    vec![
        [BareLabel::plus(0, 0), BareLabel::minus(1, 1)],
        [BareLabel::plus(0, 0), BareLabel::minus(2, 2)],
    ]
}

fn rabi_labels() -> Vec<BareLabel> {
    vec![BareLabel::plus(0, 0), BareLabel::minus(1, 1), BareLabel::minus(2, 2)]
}

fn default_times() -> Grid {
    Grid::Range(Range {
        start: 0.0,
        stop: 200.0,
        step: 0.1,
    })
}

fn twelve() -> usize {
    12
}

fn fifth() -> f64 {
    0.2
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

fn twenty() -> usize {
    20
}

fn some_one() -> Option<f64> {
    Some(1.0)
}

fn both_modes() -> Vec<Mode> {
    vec![Mode::Photon, Mode::Phonon]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    pub omega: Grid,
    /// Levels kept per grid point, counted from the ground state.
    #[serde(default = "twelve")]
    pub n_levels: usize,
    /// Pairs whose anticrossing is located near their bare crossing.
    #[serde(default = "resonance_pairs")]
    pub anticrossings: Vec<[BareLabel; 2]>,
    #[serde(default = "fifth")]
    pub bracket_halfwidth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RabiSpec {
    #[serde(default = "plus00")]
    pub initial: BareLabel,
    #[serde(default = "default_times")]
    pub times: Grid,
    #[serde(default = "rabi_labels")]
    pub populations: Vec<BareLabel>,
    /// Replace the drive by the located anticrossing of this resonance.
    #[serde(default)]
    pub locate: Option<Resonance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveSpec {
    #[serde(default = "minus00")]
    pub initial: BareLabel,
    #[serde(default = "default_times")]
    pub times: Grid,
    #[serde(default = "rabi_labels")]
    pub populations: Vec<BareLabel>,
    #[serde(default)]
    pub locate: Option<Resonance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadySpec {
    #[serde(default = "rabi_labels")]
    pub populations: Vec<BareLabel>,
    #[serde(default)]
    pub locate: Option<Resonance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSpec {
    #[serde(default = "both_modes")]
    pub modes: Vec<Mode>,
    pub omega: Grid,
    /// Longest correlation delay; 40 lifetimes of the slowest boson loss
    /// when omitted.
    #[serde(default)]
    pub tau_max: Option<f64>,
    #[serde(default)]
    pub locate: Option<Resonance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub resonance: Resonance,
    pub lambda: Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    #[serde(default = "plus00")]
    pub initial: BareLabel,
    pub t_max: f64,
    #[serde(default = "one_usize")]
    pub n_traj: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "one")]
    pub dt: f64,
    #[serde(default = "some_one")]
    pub sample_interval: Option<f64>,
    #[serde(default = "rabi_labels")]
    pub populations: Vec<BareLabel>,
    /// Trajectories whose population tables are written.
    #[serde(default = "one_usize")]
    pub record: usize,
    /// Cluster spacing for correlated emissions; 2/κ_a (2/κ_a² when
    /// κ_a = 0) when omitted.
    #[serde(default)]
    pub coincidence: Option<f64>,
    #[serde(default)]
    pub locate: Option<Resonance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventsSpec {
    pub resonance: Resonance,
    pub lambda: Grid,
    pub window_t: f64,
    #[serde(default = "twenty")]
    pub n_traj: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "one")]
    pub dt: f64,
    #[serde(default)]
    pub coincidence: Option<f64>,
    #[serde(default = "plus00")]
    pub initial: BareLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    Scan(ScanSpec),
    /// Closed evolution.
    Rabi(RabiSpec),
    /// Lindblad evolution.
    Evolve(EvolveSpec),
    Steady(SteadySpec),
    Spectrum(SpectrumSpec),
    G2Sweep(SweepSpec),
    Rates(SweepSpec),
    Trajectories(TrajectorySpec),
    Events(EventsSpec),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Scan(_) => "scan",
            Experiment::Rabi(_) => "rabi",
            Experiment::Evolve(_) => "evolve",
            Experiment::Steady(_) => "steady",
            Experiment::Spectrum(_) => "spectrum",
            Experiment::G2Sweep(_) => "g2-sweep",
            Experiment::Rates(_) => "rates",
            Experiment::Trajectories(_) => "trajectories",
            Experiment::Events(_) => "events",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub name: String,
    #[serde(default)]
    pub model: ModelPatch,
    #[serde(default)]
    pub truncation: Option<Truncation>,
    pub experiment: Experiment,
    /// Free-form remarks copied to the manifest.
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub model: ModelParams,
    pub truncation: Truncation,
    pub run: Vec<RunSpec>,
}

/// One run with the model patched, the truncation fixed and every optional
/// knob that has a static default filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedRun {
    pub name: String,
    pub model: ModelParams,
    pub truncation: Truncation,
    pub experiment: Experiment,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub output_dir: PathBuf,
    pub runs: Vec<ResolvedRun>,
}

/// Parse failure or a list of validation problems.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigReport {
    pub issues: Vec<String>,
}

impl std::fmt::Display for ConfigReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "invalid configuration ({} problem(s)):", self.issues.len())?;
        for i in &self.issues {
            writeln!(f, "  - {i}")?;
        }
        Ok(())
    }
}

pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigReport> {
    toml::from_str(text).map_err(|e| ConfigReport {
        issues: vec![e.to_string().trim_end().to_string()],
    })
}

pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigReport> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigReport {
        issues: vec![format!("cannot read {}: {e}", path.display())],
    })?;
    parse(&text)
}

/// Slowest open boson loss rate, or the atomic rate without any.
fn slowest_boson_rate(p: &ModelParams) -> Option<f64> {
    [p.kappa_a, p.kappa_a2, p.kappa_b]
        .into_iter()
        .filter(|&r| r > 0.0)
        .min_by(f64::total_cmp)
        .or((p.gamma > 0.0).then_some(p.gamma))
}

fn coincidence_default(p: &ModelParams) -> Option<f64> {
    tripartite::trajectories::default_coincidence(p).ok()
}

fn check_labels(ctx: &str, labels: &[BareLabel], t: &Truncation, issues: &mut Vec<String>) {
    for l in labels {
        if l.photons > t.photons || l.phonons > t.phonons {
            issues.push(format!("{ctx}: label {l} lies outside the truncation ({}, {})", t.photons, t.phonons));
        }
    }
}

fn positive(ctx: &str, name: &str, v: f64, issues: &mut Vec<String>) {
    if !(v > 0.0 && v.is_finite()) {
        issues.push(format!("{ctx}: {name} must be positive and finite, got {v}"));
    }
}

fn needs_dissipation(ctx: &str, p: &ModelParams, issues: &mut Vec<String>) {
    if p.min_rate().is_none() {
        issues.push(format!("{ctx}: needs at least one nonzero decay rate"));
    }
}

fn seed_present(ctx: &str, seed: Option<u64>, issues: &mut Vec<String>) {
    if seed.is_none() {
        issues.push(format!("{ctx}: seed is required for trajectory runs"));
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// Patch, fill defaults and check every run; all problems are reported at
/// once.
pub fn resolve(cfg: &ExperimentConfig) -> Result<ResolvedConfig, ConfigReport> {
    let mut issues = Vec::new();
    if cfg.run.is_empty() {
        issues.push("no [[run]] tables".to_string());
    }
    if cfg.output_dir.as_os_str().is_empty() {
        issues.push("output_dir is empty".to_string());
    }
    let mut names = HashSet::new();
    let mut runs = Vec::new();
    for spec in &cfg.run {
        let ctx = format!("run '{}'", spec.name);
        if !valid_name(&spec.name) {
            issues.push(format!("{ctx}: name must be nonempty and use only [A-Za-z0-9_-]"));
        }
        if !names.insert(spec.name.clone()) {
            issues.push(format!("{ctx}: duplicate run name"));
        }
        let model = spec.model.apply(cfg.model);
        if let Err(e) = model.validate() {
            issues.push(format!("{ctx}: model: {e}"));
        }
        let trunc = spec.truncation.unwrap_or(cfg.truncation);
        if trunc.space().is_none() {
            issues.push(format!("{ctx}: truncation must be at least 1 in each mode"));
        }
        let mut exp = spec.experiment.clone();
        match &mut exp {
            Experiment::Scan(s) => {
                s.omega.check(&format!("{ctx}: omega"), &mut issues);
                let dim = 2 * (trunc.photons + 1) * (trunc.phonons + 1);
                if s.n_levels == 0 || s.n_levels > dim {
                    issues.push(format!("{ctx}: n_levels must lie in 1..={dim}"));
                }
                positive(&ctx, "bracket_halfwidth", s.bracket_halfwidth, &mut issues);
                for pair in &s.anticrossings {
                    check_labels(&ctx, pair, &trunc, &mut issues);
                    if pair[0] == pair[1] {
                        issues.push(format!("{ctx}: anticrossing pair repeats {}", pair[0]));
                    } else if pair[0].parity_even() != pair[1].parity_even() {
                        issues.push(format!("{ctx}: {} and {} lie in different parity sectors", pair[0], pair[1]));
                    }
                }
            }
            Experiment::Rabi(s) => {
                s.times.check(&format!("{ctx}: times"), &mut issues);
                check_labels(&ctx, &s.populations, &trunc, &mut issues);
                check_labels(&ctx, &[s.initial], &trunc, &mut issues);
            }
            Experiment::Evolve(s) => {
                s.times.check(&format!("{ctx}: times"), &mut issues);
                check_labels(&ctx, &s.populations, &trunc, &mut issues);
                check_labels(&ctx, &[s.initial], &trunc, &mut issues);
            }
            Experiment::Steady(s) => {
                needs_dissipation(&ctx, &model, &mut issues);
                check_labels(&ctx, &s.populations, &trunc, &mut issues);
            }
            Experiment::Spectrum(s) => {
                needs_dissipation(&ctx, &model, &mut issues);
                s.omega.check(&format!("{ctx}: omega"), &mut issues);
                if s.modes.is_empty() {
                    issues.push(format!("{ctx}: modes is empty"));
                }
                if s.tau_max.is_none() {
                    s.tau_max = slowest_boson_rate(&model).map(|r| 40.0 / r);
                }
                if let Some(t) = s.tau_max {
                    positive(&ctx, "tau_max", t, &mut issues);
                }
            }
            Experiment::G2Sweep(s) => {
                needs_dissipation(&ctx, &model, &mut issues);
                s.lambda.check(&format!("{ctx}: lambda"), &mut issues);
                if s.lambda.points().iter().any(|&l| l < 0.0) {
                    issues.push(format!("{ctx}: lambda must be nonnegative"));
                }
            }
            Experiment::Rates(s) => {
                s.lambda.check(&format!("{ctx}: lambda"), &mut issues);
                if s.lambda.points().iter().any(|&l| l < 0.0) {
                    issues.push(format!("{ctx}: lambda must be nonnegative"));
                }
            }
            Experiment::Trajectories(s) => {
                seed_present(&ctx, s.seed, &mut issues);
                positive(&ctx, "t_max", s.t_max, &mut issues);
                positive(&ctx, "dt", s.dt, &mut issues);
                if let Some(si) = s.sample_interval {
                    positive(&ctx, "sample_interval", si, &mut issues);
                }
                if s.n_traj == 0 {
                    issues.push(format!("{ctx}: n_traj must be at least 1"));
                }
                if s.record > s.n_traj {
                    issues.push(format!("{ctx}: record ({}) exceeds n_traj ({})", s.record, s.n_traj));
                }
                check_labels(&ctx, &s.populations, &trunc, &mut issues);
                check_labels(&ctx, &[s.initial], &trunc, &mut issues);
                if s.coincidence.is_none() {
                    s.coincidence = coincidence_default(&model);
                }
                match s.coincidence {
                    Some(c) => positive(&ctx, "coincidence", c, &mut issues),
                    None => issues.push(format!("{ctx}: coincidence has no default without photon loss; set it")),
                }
            }
            Experiment::Events(s) => {
                seed_present(&ctx, s.seed, &mut issues);
                needs_dissipation(&ctx, &model, &mut issues);
                s.lambda.check(&format!("{ctx}: lambda"), &mut issues);
                positive(&ctx, "window_t", s.window_t, &mut issues);
                positive(&ctx, "dt", s.dt, &mut issues);
                if s.n_traj == 0 {
                    issues.push(format!("{ctx}: n_traj must be at least 1"));
                }
                check_labels(&ctx, &[s.initial], &trunc, &mut issues);
                if s.coincidence.is_none() {
                    s.coincidence = coincidence_default(&model);
                }
                match s.coincidence {
                    Some(c) => positive(&ctx, "coincidence", c, &mut issues),
                    None => issues.push(format!("{ctx}: coincidence has no default without photon loss; set it")),
                }
            }
        }
        runs.push(ResolvedRun {
            name: spec.name.clone(),
            model,
            truncation: trunc,
            experiment: exp,
            notes: spec.notes.clone(),
        });
    }
    if issues.is_empty() {
        Ok(ResolvedConfig {
            output_dir: cfg.output_dir.clone(),
            runs,
        })
    } else {
        Err(ConfigReport { issues })
    }
}
