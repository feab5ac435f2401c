//! Experiment execution and artifact writing.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;
use tripartite::correlations::{uniform_tau_grid, SpectrumSeries};
use tripartite::dynamics::population_name;
use tripartite::spectrum::minimize_pair_gap;
use tripartite::trajectories::{correlated_clusters, spearman};
use tripartite::{
    build_h_eff, compare_rates, count_correlated_emissions, cross_g2, emission_spectrum, ensemble_average,
    evolve_closed, evolve_open, expectation, ladder_operator, liouvillian, locate_anticrossing, model_channels,
    number_operator, run_trajectories, scan_drive, steady_state, trajectory_populations, two_time_correlation,
    BareLabel, Branch, Channel, DensityMatrix, EvolutionResult, EvolveOptions, HilbertSpace, Mode, ModelParams,
    Resonance, Superoperator, TrajectoryOptions,
};

use crate::config::{
    EventsSpec, Experiment, ResolvedConfig, ResolvedRun, ScanSpec, SpectrumSpec, SweepSpec, TrajectorySpec,
};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("run '{run}': {stage} failed: {source}")]
    Numerical {
        run: String,
        stage: &'static str,
        source: tripartite::Error,
    },
    #[error("cannot create output directory {}: {source}", path.display())]
    OutputDir { path: PathBuf, source: std::io::Error },
    #[error("writing {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

type RunResult<T> = std::result::Result<T, RunError>;

struct Ctx<'a> {
    run: &'a str,
    dir: PathBuf,
    artifacts: Vec<String>,
}

impl Ctx<'_> {
    fn num<T>(&self, stage: &'static str, r: tripartite::Result<T>) -> RunResult<T> {
        r.map_err(|source| RunError::Numerical {
            run: self.run.to_string(),
            stage,
            source,
        })
    }

    fn path(&mut self, file: &str) -> PathBuf {
        self.artifacts.push(format!("{}/{file}", self.run));
        self.dir.join(file)
    }

    fn csv(&mut self, file: &str, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> RunResult<()> {
        let path = self.path(file);
        let io = |source: std::io::Error| RunError::Io {
            path: path.clone(),
            source,
        };
        let mut w = csv::Writer::from_path(&path).map_err(|e| io(e.into()))?;
        w.write_record(header).map_err(|e| io(e.into()))?;
        for r in rows {
            w.write_record(&r).map_err(|e| io(e.into()))?;
        }
        w.flush().map_err(io)
    }

    fn json<T: Serialize>(&mut self, file: &str, value: &T) -> RunResult<()> {
        let path = self.path(file);
        write_json(&path, value)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> RunResult<()> {
    let io = |source: std::io::Error| RunError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io(e.into()))?;
    text.push('\n');
    fs::write(path, text).map_err(io)
}

fn f(v: f64) -> String {
    format!("{v}")
}

fn space_of(run: &ResolvedRun) -> HilbertSpace {
    HilbertSpace::new(run.truncation.photons, run.truncation.phonons).expect("validated truncation")
}

/// Drive at the anticrossing of `res`, located two levels above the run's
/// truncation.
fn located_drive(ctx: &Ctx, p: &ModelParams, space: HilbertSpace, res: Resonance) -> RunResult<f64> {
    let (omega, _) = ctx.num("anticrossing search", minimize_pair_gap(p, space.enlarged(2), res.pair(), res.bracket(p)))?;
    Ok(omega)
}

fn drive(ctx: &Ctx, run: &ResolvedRun, locate: Option<Resonance>) -> RunResult<ModelParams> {
    match locate {
        Some(res) => Ok(run.model.with_drive(located_drive(ctx, &run.model, space_of(run), res)?)),
        None => Ok(run.model),
    }
}

fn open_system(ctx: &Ctx, p: &ModelParams, space: HilbertSpace) -> RunResult<(Superoperator, DensityMatrix)> {
    let h = ctx.num("hamiltonian", build_h_eff(p, space))?;
    let ch = ctx.num("collapse channels", model_channels(p, space))?;
    let l = ctx.num("liouvillian", liouvillian(&h, &ch))?;
    let rho = ctx.num("steady state", steady_state(&l))?;
    Ok((l, rho))
}

fn mean_number(ctx: &Ctx, rho: &DensityMatrix, mode: Mode) -> RunResult<f64> {
    Ok(ctx.num("expectation", expectation(&number_operator(rho.space(), mode), rho))?.re)
}

/// Drive at which the bare energies of the pair cross, if they do.
fn nominal_crossing(pair: &[BareLabel; 2], p: &ModelParams) -> Option<f64> {
    let sign = |l: &BareLabel| match l.branch {
        Branch::Plus => 1.0,
        Branch::Minus => -1.0,
    };
    let ds = sign(&pair[0]) - sign(&pair[1]);
    if ds == 0.0 {
        return None;
    }
    let boson = |l: &BareLabel| l.photons as f64 * p.delta_a + l.phonons as f64 * p.omega_b;
    Some((boson(&pair[1]) - boson(&pair[0])) / ds)
}

fn scan(ctx: &mut Ctx, run: &ResolvedRun, s: &ScanSpec) -> RunResult<()> {
    let space = space_of(run);
    let grid = s.omega.points();
    let levels = ctx.num("level scan", scan_drive(&run.model, space, &grid, s.n_levels))?;
    let mut header = vec!["omega".to_string()];
    header.extend((1..s.n_levels).map(|k| format!("E{k}")));
    let rows = levels.omega_grid.iter().zip(&levels.levels).map(|(w, lv)| {
        let mut r = vec![f(*w)];
        r.extend(lv[1..].iter().map(|e| f(*e)));
        r
    });
    ctx.csv("levels.csv", &header, rows)?;

    let mut found = Vec::new();
    for pair in &s.anticrossings {
        let entry = match nominal_crossing(pair, &run.model) {
            None => json!({ "pair": pair, "error": "bare levels are parallel in the drive" }),
            Some(nominal) => {
                let bracket = (nominal - s.bracket_halfwidth, nominal + s.bracket_halfwidth);
                match locate_anticrossing(&run.model, space, (pair[0], pair[1]), bracket) {
                    Ok(ac) => json!({
                        "pair": pair,
                        "nominal": nominal,
                        "bracket": [bracket.0, bracket.1],
                        "omega_star": ac.omega_star,
                        "gap": ac.gap,
                        "overlaps": ac.overlaps,
                    }),
                    Err(e) => json!({ "pair": pair, "nominal": nominal, "error": e.to_string() }),
                }
            }
        };
        found.push(entry);
    }
    ctx.json("anticrossings.json", &found)
}

fn observables_csv(ctx: &mut Ctx, ev: &EvolutionResult) -> RunResult<()> {
    let mut header = vec!["t".to_string()];
    header.extend(ev.observables.names().iter().cloned());
    let series: Vec<&[f64]> = ev.observables.iter().map(|(_, s)| s).collect();
    let rows = ev.times.iter().enumerate().map(|(k, t)| {
        let mut r = vec![f(*t)];
        r.extend(series.iter().map(|s| f(s[k])));
        r
    });
    ctx.csv("observables.csv", &header, rows)
}

fn rabi(ctx: &mut Ctx, run: &ResolvedRun, initial: BareLabel, times: &[f64], pops: &[BareLabel], p: ModelParams) -> RunResult<()> {
    let space = space_of(run);
    let h = ctx.num("hamiltonian", build_h_eff(&p, space))?;
    let psi0 = ctx.num("initial state", initial.state(space))?;
    let opts = EvolveOptions {
        populations: pops.to_vec(),
        ..EvolveOptions::default()
    };
    let ev = ctx.num("closed evolution", evolve_closed(&h, &psi0, times, &opts))?;
    observables_csv(ctx, &ev)?;
    ctx.json("drive.json", &json!({ "omega_drive": p.omega_drive }))
}

fn evolve(ctx: &mut Ctx, run: &ResolvedRun, initial: BareLabel, times: &[f64], pops: &[BareLabel], p: ModelParams) -> RunResult<()> {
    let space = space_of(run);
    let h = ctx.num("hamiltonian", build_h_eff(&p, space))?;
    let ch = ctx.num("collapse channels", model_channels(&p, space))?;
    let l = ctx.num("liouvillian", liouvillian(&h, &ch))?;
    let rho0 = DensityMatrix::from_pure(&ctx.num("initial state", initial.state(space))?);
    let opts = EvolveOptions {
        populations: pops.to_vec(),
        ..EvolveOptions::default()
    };
    let ev = ctx.num("open evolution", evolve_open(&l, &rho0, times, &opts))?;
    observables_csv(ctx, &ev)?;
    ctx.json("drive.json", &json!({ "omega_drive": p.omega_drive }))
}

fn steady(ctx: &mut Ctx, run: &ResolvedRun, pops: &[BareLabel], p: ModelParams) -> RunResult<()> {
    let space = space_of(run);
    let (l, rho) = open_system(ctx, &p, space)?;
    let mut populations = serde_json::Map::new();
    for lb in pops {
        let psi = ctx.num("label state", lb.state(space))?;
        populations.insert(population_name(lb), json!(ctx.num("population", rho.population(&psi))?));
    }
    let out = json!({
        "omega_drive": p.omega_drive,
        "n_a": mean_number(ctx, &rho, Mode::Photon)?,
        "n_b": mean_number(ctx, &rho, Mode::Phonon)?,
        "g2_ab": ctx.num("cross correlation", cross_g2(&rho))?,
        "residual": ctx.num("residual", l.residual(&rho))?,
        "populations": populations,
    });
    ctx.json("steady.json", &out)
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Photon => "photon",
        Mode::Phonon => "phonon",
    }
}

fn spectrum(ctx: &mut Ctx, run: &ResolvedRun, s: &SpectrumSpec) -> RunResult<()> {
    let p = drive(ctx, run, s.locate)?;
    let space = space_of(run);
    let (l, rho) = open_system(ctx, &p, space)?;
    let tau_max = s.tau_max.expect("resolved");
    let taus = uniform_tau_grid(tau_max, 0.2, 4096);
    let grid = s.omega.points();
    let mut spectra: Vec<SpectrumSeries> = Vec::new();
    let mut peaks = serde_json::Map::new();
    for &m in &s.modes {
        let corr = ctx.num("two-time correlation", two_time_correlation(&l, &rho, &ladder_operator(space, m), &taus))?;
        let sp = ctx.num("emission spectrum", emission_spectrum(&corr, &grid))?;
        if let Some((w, h)) = sp.peak() {
            peaks.insert(mode_name(m).to_string(), json!({ "omega": w, "height": h }));
        }
        spectra.push(sp);
    }
    let mut header = vec!["omega".to_string()];
    header.extend(s.modes.iter().map(|m| format!("S_{}", mode_name(*m))));
    let rows = grid.iter().enumerate().map(|(k, w)| {
        let mut r = vec![f(*w)];
        r.extend(spectra.iter().map(|sp| f(sp.values[k])));
        r
    });
    ctx.csv("spectrum.csv", &header, rows)?;
    let out = json!({
        "omega_drive": p.omega_drive,
        "tau_max": tau_max,
        "tau_points": taus.len(),
        "g2_ab": ctx.num("cross correlation", cross_g2(&rho))?,
        "peaks": peaks,
    });
    ctx.json("spectrum.json", &out)
}

fn g2_sweep(ctx: &mut Ctx, run: &ResolvedRun, s: &SweepSpec) -> RunResult<()> {
    let space = space_of(run);
    let mut rows = Vec::new();
    for lam in s.lambda.points() {
        let base = run.model.with_lambda(lam);
        let p = base.with_drive(located_drive(ctx, &base, space, s.resonance)?);
        let (_, rho) = open_system(ctx, &p, space)?;
        rows.push(vec![
            f(lam),
            f(p.omega_drive),
            f(mean_number(ctx, &rho, Mode::Photon)?),
            f(mean_number(ctx, &rho, Mode::Phonon)?),
            f(ctx.num("cross correlation", cross_g2(&rho))?),
        ]);
    }
    let header = ["lambda", "omega_star", "n_a", "n_b", "g2_ab"].map(String::from);
    ctx.csv("g2.csv", &header, rows)
}

fn rates(ctx: &mut Ctx, run: &ResolvedRun, s: &SweepSpec) -> RunResult<()> {
    let lams = s.lambda.points();
    let cmp = ctx.num("rate comparison", compare_rates(&run.model, space_of(run), s.resonance, &lams))?;
    let dev = cmp.relative_deviation();
    let rows = (0..lams.len()).map(|k| {
        vec![
            f(lams[k]),
            f(cmp.omega_star[k]),
            f(cmp.gap[k]),
            f(cmp.analytic[k]),
            f(cmp.numeric[k]),
            f(dev[k]),
            cmp.hybridized[k].to_string(),
        ]
    });
    let header = ["lambda", "omega_star", "gap", "analytic", "numeric", "relative_deviation", "hybridized"].map(String::from);
    ctx.csv("rates.csv", &header, rows)
}

#[derive(Serialize)]
struct EventLine {
    trajectory: usize,
    #[serde(flatten)]
    event: tripartite::JumpEvent,
}

fn trajectories(ctx: &mut Ctx, run: &ResolvedRun, s: &TrajectorySpec) -> RunResult<()> {
    let p = drive(ctx, run, s.locate)?;
    let space = space_of(run);
    let h = ctx.num("hamiltonian", build_h_eff(&p, space))?;
    let ch = ctx.num("collapse channels", model_channels(&p, space))?;
    let psi0 = ctx.num("initial state", s.initial.state(space))?;
    let opts = TrajectoryOptions {
        dt: s.dt,
        sample_interval: s.sample_interval,
        ..TrajectoryOptions::default()
    };
    let seed = s.seed.expect("validated seed");
    let recs = ctx.num("trajectories", run_trajectories(&h, &ch, &psi0, s.t_max, s.n_traj, seed, &opts))?;

    let path = ctx.path("events.jsonl");
    let io = |source: std::io::Error| RunError::Io {
        path: path.clone(),
        source,
    };
    let mut w = BufWriter::new(File::create(&path).map_err(io)?);
    for (j, r) in recs.iter().enumerate() {
        for e in &r.events {
            let line = serde_json::to_string(&EventLine { trajectory: j, event: *e }).map_err(|e| io(e.into()))?;
            writeln!(w, "{line}").map_err(io)?;
        }
    }
    w.flush().map_err(io)?;

    for (j, r) in recs.iter().take(s.record).enumerate() {
        let tab = ctx.num("population table", trajectory_populations(r, &s.populations))?;
        let mut header = vec!["t".to_string()];
        header.extend(tab.labels.iter().map(population_name));
        let rows = tab.times.iter().zip(&tab.values).map(|(t, row)| {
            let mut out = vec![f(*t)];
            out.extend(row.iter().map(|v| f(*v)));
            out
        });
        ctx.csv(&format!("populations_{j}.csv"), &header, rows)?;
    }

    let mut names = vec!["n_a".to_string(), "n_b".to_string()];
    names.extend(s.populations.iter().map(population_name));
    let avgs = names
        .iter()
        .map(|n| ctx.num("ensemble average", ensemble_average(&recs, n)))
        .collect::<RunResult<Vec<_>>>()?;
    let mut header = vec!["t".to_string()];
    for n in &names {
        header.push(format!("{n}_mean"));
        header.push(format!("{n}_stderr"));
    }
    let rows = avgs[0].times.iter().enumerate().map(|(k, t)| {
        let mut r = vec![f(*t)];
        for a in &avgs {
            r.push(f(a.mean[k]));
            r.push(f(a.stderr[k]));
        }
        r
    });
    ctx.csv("ensemble.csv", &header, rows)?;

    let coincidence = s.coincidence.expect("resolved coincidence");
    let count = |c: Channel| recs.iter().flat_map(|r| &r.events).filter(|e| e.channel == c).count();
    let stats = ctx.num("emission statistics", count_correlated_emissions(&recs, s.t_max, coincidence))?;
    let summary = json!({
        "omega_drive": p.omega_drive,
        "seed": seed,
        "n_trajectories": recs.len(),
        "coincidence": coincidence,
        "events": {
            "photon": count(Channel::Photon),
            "photon_pair": count(Channel::PhotonPair),
            "phonon": count(Channel::Phonon),
            "atom": count(Channel::Atom),
        },
        "correlated_clusters": recs.iter().map(|r| correlated_clusters(r, s.t_max, coincidence)).collect::<Vec<_>>(),
        "mean_clusters": stats.mean_events,
        "stderr_clusters": stats.stderr,
    });
    ctx.json("summary.json", &summary)
}

fn events(ctx: &mut Ctx, run: &ResolvedRun, s: &EventsSpec) -> RunResult<()> {
    let space = space_of(run);
    let lams = s.lambda.points();
    let cmp = ctx.num("rate comparison", compare_rates(&run.model, space.enlarged(2), s.resonance, &lams))?;
    let seed = s.seed.expect("validated seed");
    let coincidence = s.coincidence.expect("resolved coincidence");
    let opts = TrajectoryOptions {
        dt: s.dt,
        sample_interval: None,
        ..TrajectoryOptions::default()
    };
    let mut rows = Vec::new();
    let mut means = Vec::new();
    for (k, &lam) in lams.iter().enumerate() {
        let p = run.model.with_lambda(lam).with_drive(cmp.omega_star[k]);
        let h = ctx.num("hamiltonian", build_h_eff(&p, space))?;
        let ch = ctx.num("collapse channels", model_channels(&p, space))?;
        let psi0 = ctx.num("initial state", s.initial.state(space))?;
        // Separate seeds per point keep the λ points statistically independent.
        let point_seed = seed.wrapping_add(k as u64);
        let recs = ctx.num("trajectories", run_trajectories(&h, &ch, &psi0, s.window_t, s.n_traj, point_seed, &opts))?;
        let st = ctx.num("emission statistics", count_correlated_emissions(&recs, s.window_t, coincidence))?;
        means.push(st.mean_events);
        rows.push(vec![
            f(lam),
            f(cmp.omega_star[k]),
            f(cmp.numeric[k]),
            f(cmp.analytic[k]),
            f(st.mean_events),
            f(st.stderr),
        ]);
    }
    let header = ["lambda", "omega_star", "rate_numeric", "rate_analytic", "mean_events", "stderr"].map(String::from);
    ctx.csv("events.csv", &header, rows)?;
    let rho = spearman(&cmp.numeric, &means);
    let summary = json!({
        "seed": seed,
        "window_t": s.window_t,
        "n_trajectories": s.n_traj,
        "coincidence": coincidence,
        "spearman_rate_vs_events": if rho.is_finite() { json!(rho) } else { json!(null) },
    });
    ctx.json("summary.json", &summary)
}

fn execute(ctx: &mut Ctx, run: &ResolvedRun) -> RunResult<()> {
    match &run.experiment {
        Experiment::Scan(s) => scan(ctx, run, s),
        Experiment::Rabi(s) => {
            let p = drive(ctx, run, s.locate)?;
            rabi(ctx, run, s.initial, &s.times.points(), &s.populations, p)
        }
        Experiment::Evolve(s) => {
            let p = drive(ctx, run, s.locate)?;
            evolve(ctx, run, s.initial, &s.times.points(), &s.populations, p)
        }
        Experiment::Steady(s) => {
            let p = drive(ctx, run, s.locate)?;
            steady(ctx, run, &s.populations, p)
        }
        Experiment::Spectrum(s) => spectrum(ctx, run, s),
        Experiment::G2Sweep(s) => g2_sweep(ctx, run, s),
        Experiment::Rates(s) => rates(ctx, run, s),
        Experiment::Trajectories(s) => trajectories(ctx, run, s),
        Experiment::Events(s) => events(ctx, run, s),
    }
}

#[derive(Serialize)]
struct RunRecord<'a> {
    name: &'a str,
    kind: &'static str,
    artifacts: Vec<String>,
    wall_time_s: f64,
    notes: &'a [String],
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    tool_version: &'static str,
    library_version: &'static str,
    config: &'a ResolvedConfig,
    runs: Vec<RunRecord<'a>>,
    wall_time_s: f64,
}

/// Runs every experiment in order and writes `manifest.json` beside the
/// per-run directories. `progress` receives one line per finished run.
pub fn run_all(cfg: &ResolvedConfig, out_dir: &Path, mut progress: impl FnMut(&str)) -> RunResult<PathBuf> {
    let start = Instant::now();
    let mut records = Vec::new();
    for run in &cfg.runs {
        let dir = out_dir.join(&run.name);
        fs::create_dir_all(&dir).map_err(|source| RunError::OutputDir {
            path: dir.clone(),
            source,
        })?;
        let t0 = Instant::now();
        let mut ctx = Ctx {
            run: &run.name,
            dir,
            artifacts: Vec::new(),
        };
        execute(&mut ctx, run)?;
        let wall = t0.elapsed().as_secs_f64();
        progress(&format!("{} ({}): {} artifact(s) in {wall:.1}s", run.name, run.experiment.kind(), ctx.artifacts.len()));
        records.push(RunRecord {
            name: &run.name,
            kind: run.experiment.kind(),
            artifacts: ctx.artifacts,
            wall_time_s: wall,
            notes: &run.notes,
        });
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        tool_version: env!("CARGO_PKG_VERSION"),
        library_version: tripartite::VERSION,
        config: cfg,
        runs: records,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let path = out_dir.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}
