//! Monte Carlo wavefunction unraveling of the master equation.
//!
//! Between jumps a trajectory follows `H_nh = H − (i/2) Σ_k r_k O_k†O_k`.
//! Since `H_nh` is time independent, propagation uses exact dense
//! propagators `e^{−i H_nh dt/2^j}` for `j = 0..J`, with `dt/2^J` below the
//! requested time resolution. A step is taken whole when the squared norm
//! stays above the trajectory's uniform threshold; otherwise it is split in
//! halves down to the finest level, which places the jump to within
//! `dt/2^J`. Channel `k` fires with probability `∝ r_k ‖O_k ψ‖²`.
//!
//! Trajectory `j` draws from stream `j` of ChaCha8 seeded with `base_seed`,
//! so records are reproducible, independent of thread scheduling, and
//! ensembles with different base seeds never share trajectories.

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{Channel, CollapseChannel};
use crate::error::{Error, Result};
use crate::expm::expm;
use crate::hilbert::{HilbertSpace, Operator, StateVector};
use crate::model::{dressed_index, dressed_populations, BareLabel, ModelParams};
use crate::sparse::CsrMatrix;
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpEvent {
    pub time: f64,
    pub channel: Channel,
    pub quanta_removed: u32,
    /// `⟨a†a⟩` of the normalized state just before and after the jump.
    pub photons_before: f64,
    pub photons_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    /// Base seed and ChaCha8 stream index of this trajectory.
    pub seed: u64,
    pub stream: u64,
    pub space: HilbertSpace,
    pub events: Vec<JumpEvent>,
    pub sample_times: Vec<f64>,
    pub photons: Vec<f64>,
    pub phonons: Vec<f64>,
    /// [`dressed_populations`] of the normalized state at each sample.
    pub populations: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryOptions {
    /// Largest propagator step; shortened so that `t_max` is a whole number
    /// of steps.
    pub dt: f64,
    /// Sampling interval, rounded to a whole number of steps. No samples
    /// besides `t = 0` when `None`.
    pub sample_interval: Option<f64>,
    /// Upper bound on the jump-time error.
    pub time_resolution: f64,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self {
            dt: 1.0,
            sample_interval: Some(1.0),
            time_resolution: 1e-10,
        }
    }
}

/// Dyadic ladder of exact non-Hermitian propagators, stored row-major.
struct Propagators {
    n: usize,
    dt: f64,
    levels: u32,
    /// `mats[k]` advances by `2^k` ticks of `dt / 2^levels`.
    mats: Vec<Vec<C64>>,
}

impl Propagators {
    fn new(h_nh: &Mat<C64>, dt: f64, resolution: f64) -> Self {
        let n = h_nh.nrows();
        let levels = (dt / resolution).log2().ceil().clamp(0.0, 60.0) as u32;
        let mats = (0..=levels)
            .map(|k| {
                let tau = dt * 0.5f64.powi((levels - k) as i32);
                let a = Mat::from_fn(n, n, |i, j| h_nh[(i, j)] * C64::new(0.0, -tau));
                let u = expm(&a);
                let mut rm = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        rm.push(u[(i, j)]);
                    }
                }
                rm
            })
            .collect();
        Self { n, dt, levels, mats }
    }

    fn apply(&self, k: u32, psi: &[C64], out: &mut [C64]) {
        let u = &self.mats[k as usize];
        for (i, o) in out.iter_mut().enumerate() {
            let row = &u[i * self.n..(i + 1) * self.n];
            *o = row.iter().zip(psi).map(|(a, b)| a * b).sum();
        }
    }
}

fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

fn photon_number(space: HilbertSpace, psi: &[C64]) -> f64 {
    let norm = norm_sqr(psi);
    psi.iter()
        .enumerate()
        .map(|(i, z)| z.norm_sqr() * space.decode(i).map_or(0.0, |s| s.photons as f64))
        .sum::<f64>()
        / norm
}

fn phonon_number(space: HilbertSpace, psi: &[C64]) -> f64 {
    let norm = norm_sqr(psi);
    psi.iter()
        .enumerate()
        .map(|(i, z)| z.norm_sqr() * space.decode(i).map_or(0.0, |s| s.phonons as f64))
        .sum::<f64>()
        / norm
}

struct Unraveling<'a> {
    space: HilbertSpace,
    props: Propagators,
    jumps: Vec<(Channel, f64, &'a CsrMatrix)>,
    steps: usize,
    sample_every: Option<usize>,
}

impl Unraveling<'_> {
    fn run(&self, psi0: &[C64], seed: u64, stream: u64) -> Result<TrajectoryRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let space = self.space;
        let n = psi0.len();
        let mut psi = psi0.to_vec();
        let mut cand = vec![C64::new(0.0, 0.0); n];
        let mut rec = TrajectoryRecord {
            seed,
            stream,
            space,
            events: Vec::new(),
            sample_times: Vec::new(),
            photons: Vec::new(),
            phonons: Vec::new(),
            populations: Vec::new(),
        };
        self.sample(&mut rec, 0.0, &psi);
        let total: u64 = 1 << self.props.levels;
        let tick = self.props.dt / total as f64;
        let mut threshold: f64 = rng.random();

        for step in 0..self.steps {
            let t0 = step as f64 * self.props.dt;
            if self.jumps.is_empty() {
                self.props.apply(self.props.levels, &psi, &mut cand);
                std::mem::swap(&mut psi, &mut cand);
            } else {
                let mut pos: u64 = 0;
                while pos < total {
                    let aligned = if pos == 0 { self.props.levels } else { pos.trailing_zeros() };
                    let fits = 63 - (total - pos).leading_zeros();
                    let mut k = aligned.min(fits);
                    loop {
                        self.props.apply(k, &psi, &mut cand);
                        if norm_sqr(&cand) > threshold {
                            std::mem::swap(&mut psi, &mut cand);
                            pos += 1 << k;
                            break;
                        }
                        if k == 0 {
                            std::mem::swap(&mut psi, &mut cand);
                            pos += 1;
                            let event = self.jump(&mut psi, t0 + pos as f64 * tick, &mut rng, seed)?;
                            rec.events.push(event);
                            threshold = rng.random();
                            break;
                        }
                        k -= 1;
                    }
                }
            }
            if let Some(every) = self.sample_every {
                if (step + 1) % every == 0 {
                    self.sample(&mut rec, (step + 1) as f64 * self.props.dt, &psi);
                }
            }
        }
        Ok(rec)
    }

    fn jump(&self, psi: &mut Vec<C64>, time: f64, rng: &mut ChaCha8Rng, seed: u64) -> Result<JumpEvent> {
        let photons_before = photon_number(self.space, psi);
        let images: Vec<Vec<C64>> = self.jumps.iter().map(|(_, _, o)| o.apply(psi)).collect();
        let weights: Vec<f64> = self
            .jumps
            .iter()
            .zip(&images)
            .map(|((_, r, _), img)| r * norm_sqr(img))
            .collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::ZeroNorm { seed });
        }
        let u: f64 = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
        for (k, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc && *w > 0.0 {
                pick = k;
                break;
            }
        }
        let img = &images[pick];
        let norm = norm_sqr(img).sqrt();
        for (p, v) in psi.iter_mut().zip(img) {
            *p = v / norm;
        }
        let channel = self.jumps[pick].0;
        Ok(JumpEvent {
            time,
            channel,
            quanta_removed: channel.quanta_removed(),
            photons_before,
            photons_after: photon_number(self.space, psi),
        })
    }

    fn sample(&self, rec: &mut TrajectoryRecord, t: f64, psi: &[C64]) {
        let norm = norm_sqr(psi).sqrt();
        let unit: Vec<C64> = psi.iter().map(|v| v / norm).collect();
        rec.sample_times.push(t);
        rec.photons.push(photon_number(self.space, &unit));
        rec.phonons.push(phonon_number(self.space, &unit));
        rec.populations.push(dressed_populations(self.space, &unit));
    }
}

/// `n_traj` independent trajectories from `psi0` over `[0, t_max]`.
pub fn run_trajectories(
    h: &Operator,
    channels: &[CollapseChannel],
    psi0: &StateVector,
    t_max: f64,
    n_traj: usize,
    base_seed: u64,
    opts: &TrajectoryOptions,
) -> Result<Vec<TrajectoryRecord>> {
    if !(t_max > 0.0) || !t_max.is_finite() {
        return Err(Error::InvalidParameter {
            name: "t_max",
            reason: format!("must be positive and finite, got {t_max}"),
        });
    }
    if n_traj == 0 {
        return Err(Error::InvalidParameter {
            name: "n_traj",
            reason: "at least one trajectory is required".into(),
        });
    }
    if !(opts.dt > 0.0) || !(opts.time_resolution > 0.0) {
        return Err(Error::InvalidParameter {
            name: "dt",
            reason: "step and time resolution must be positive".into(),
        });
    }
    let dev = h.hermiticity_deviation();
    if dev > 1e-9 {
        return Err(Error::NotHermitian(dev));
    }
    let space = h.space();
    if psi0.space() != space || channels.iter().any(|c| c.operator.space() != space) {
        return Err(Error::SpaceMismatch);
    }
    let steps = (t_max / opts.dt).ceil().max(1.0) as usize;
    let dt = t_max / steps as f64;
    let sample_every = match opts.sample_interval {
        Some(s) if s > 0.0 => Some(((s / dt).round() as usize).max(1)),
        Some(s) => {
            return Err(Error::InvalidParameter {
                name: "sample_interval",
                reason: format!("must be positive, got {s}"),
            })
        }
        None => None,
    };

    let n = space.total_dim();
    let mut h_nh = h.to_dense();
    let jumps: Vec<(Channel, f64, &CsrMatrix)> = channels
        .iter()
        .filter(|c| c.rate > 0.0)
        .map(|c| (c.channel, c.rate, c.operator.matrix()))
        .collect();
    for c in channels.iter().filter(|c| c.rate > 0.0) {
        let o = c.operator.matrix();
        let odo = o.adjoint().matmul(o);
        for (i, j, v) in odo.triplets() {
            h_nh[(i, j)] += C64::new(0.0, -0.5 * c.rate) * v;
        }
    }
    let unravel = Unraveling {
        space,
        props: Propagators::new(&h_nh, dt, opts.time_resolution),
        jumps,
        steps,
        sample_every,
    };
    let start = psi0.clone().normalized().map_err(|_| Error::ZeroNorm { seed: base_seed })?;
    debug_assert_eq!(start.amplitudes().len(), n);
    (0..n_traj)
        .into_par_iter()
        .map(|j| unravel.run(start.amplitudes(), base_seed, j as u64))
        .collect()
}

/// Pointwise ensemble mean of a sampled observable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleAverage {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    /// Standard error of the mean; zero and flagged undefined for a single
    /// trajectory.
    pub stderr: Vec<f64>,
    pub stderr_defined: bool,
}

fn sample_series(record: &TrajectoryRecord, observable: &str) -> Result<Vec<f64>> {
    match observable {
        "n_a" => Ok(record.photons.clone()),
        "n_b" => Ok(record.phonons.clone()),
        other => {
            let label: BareLabel = other
                .strip_prefix('P')
                .unwrap_or(other)
                .parse()
                .map_err(|_| Error::UnknownLabel(other.to_string()))?;
            let i = dressed_index(record.space, &label).ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
            Ok(record.populations.iter().map(|p| p[i]).collect())
        }
    }
}

/// Mean and standard error of `observable` (`n_a`, `n_b` or a label such
/// as `P(1,1,-)`) across records sharing one sample grid.
pub fn ensemble_average(records: &[TrajectoryRecord], observable: &str) -> Result<EnsembleAverage> {
    let first = records.first().ok_or(Error::EmptyEnsemble)?;
    if records.iter().any(|r| r.sample_times != first.sample_times) {
        return Err(Error::SampleGridMismatch);
    }
    let series: Vec<Vec<f64>> = records.iter().map(|r| sample_series(r, observable)).collect::<Result<_>>()?;
    let m = records.len() as f64;
    let len = first.sample_times.len();
    let mut mean = vec![0.0; len];
    let mut stderr = vec![0.0; len];
    for k in 0..len {
        let mu = series.iter().map(|s| s[k]).sum::<f64>() / m;
        mean[k] = mu;
        if records.len() > 1 {
            let var = series.iter().map(|s| (s[k] - mu).powi(2)).sum::<f64>() / (m - 1.0);
            stderr[k] = (var / m).sqrt();
        }
    }
    Ok(EnsembleAverage {
        times: first.sample_times.clone(),
        mean,
        stderr,
        stderr_defined: records.len() > 1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmissionStats {
    pub window_t: f64,
    pub n_trajectories: usize,
    pub mean_events: f64,
    pub stderr: f64,
}

/// Coincidence clusters in one record: boson emissions within `[0, window]`
/// are chained while consecutive spacings are at most `coincidence`; a
/// cluster counts when it holds at least one photon-type and one phonon
/// emission.
pub fn correlated_clusters(record: &TrajectoryRecord, window_t: f64, coincidence: f64) -> usize {
    let mut times: Vec<(f64, bool)> = record
        .events
        .iter()
        .filter(|e| e.channel != Channel::Atom && (0.0..=window_t).contains(&e.time))
        .map(|e| (e.time, e.channel.is_photon()))
        .collect();
    times.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut count = 0;
    let mut i = 0;
    while i < times.len() {
        let (mut photon, mut phonon) = (false, false);
        let mut j = i;
        loop {
            if times[j].1 {
                photon = true;
            } else {
                phonon = true;
            }
            if j + 1 < times.len() && times[j + 1].0 - times[j].0 <= coincidence {
                j += 1;
            } else {
                break;
            }
        }
        if photon && phonon {
            count += 1;
        }
        i = j + 1;
    }
    count
}

/// `N̄_T`: mean number of correlated photon–phonon clusters per record.
pub fn count_correlated_emissions(
    records: &[TrajectoryRecord],
    window_t: f64,
    coincidence: f64,
) -> Result<EmissionStats> {
    if !(coincidence > 0.0) {
        return Err(Error::InvalidParameter {
            name: "coincidence",
            reason: format!("must be positive, got {coincidence}"),
        });
    }
    let counts: Vec<f64> = records
        .iter()
        .map(|r| correlated_clusters(r, window_t, coincidence) as f64)
        .collect();
    let m = counts.len() as f64;
    let (mean, stderr) = if counts.is_empty() {
        (0.0, 0.0)
    } else {
        let mu = counts.iter().sum::<f64>() / m;
        let se = if counts.len() > 1 {
            (counts.iter().map(|c| (c - mu).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt()
        } else {
            0.0
        };
        (mu, se)
    };
    Ok(EmissionStats {
        window_t,
        n_trajectories: counts.len(),
        mean_events: mean,
        stderr,
    })
}

/// `2/κ_a`, or `2/κ_{a²}` without single-photon loss.
pub fn default_coincidence(params: &ModelParams) -> Result<f64> {
    let rate = if params.kappa_a > 0.0 {
        params.kappa_a
    } else {
        params.kappa_a2
    };
    if rate > 0.0 {
        Ok(2.0 / rate)
    } else {
        Err(Error::InvalidParameter {
            name: "coincidence",
            reason: "no photon loss channel to set the default window".into(),
        })
    }
}

/// Sampled label populations of one record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationTable {
    pub times: Vec<f64>,
    pub labels: Vec<BareLabel>,
    /// `values[k][j]`: population of `labels[j]` at `times[k]`.
    pub values: Vec<Vec<f64>>,
}

pub fn trajectory_populations(record: &TrajectoryRecord, labels: &[BareLabel]) -> Result<PopulationTable> {
    let idx: Vec<usize> = labels
        .iter()
        .map(|l| dressed_index(record.space, l).ok_or_else(|| Error::UnknownLabel(l.to_string())))
        .collect::<Result<_>>()?;
    Ok(PopulationTable {
        times: record.sample_times.clone(),
        labels: labels.to_vec(),
        values: record
            .populations
            .iter()
            .map(|p| idx.iter().map(|&i| p[i]).collect())
            .collect(),
    })
}

/// Largest sampled population of `label` strictly between an event on
/// `first` and the next event on `second`.
pub fn max_between_events(
    record: &TrajectoryRecord,
    label: &BareLabel,
    first: Channel,
    second: Channel,
) -> Result<f64> {
    let i = dressed_index(record.space, label).ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
    let mut best: f64 = 0.0;
    for (k, e) in record.events.iter().enumerate() {
        if e.channel != first {
            continue;
        }
        let Some(end) = record.events[k + 1..].iter().find(|x| x.channel == second) else {
            continue;
        };
        for (t, p) in record.sample_times.iter().zip(&record.populations) {
            if *t > e.time && *t < end.time {
                best = best.max(p[i]);
            }
        }
    }
    Ok(best)
}

/// Spearman rank correlation with average ranks for ties; `NaN` if either
/// input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    assert_eq!(x.len(), y.len(), "spearman needs equal lengths");
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{evolve_closed, EvolveOptions};
    use crate::hilbert::{number_operator, AtomLevel, BasisState, Mode};
    use crate::model::build_h_eff;
    use proptest::prelude::{prop_assert, prop_assume, proptest, ProptestConfig};

    fn fock(s: HilbertSpace, na: usize, nb: usize) -> StateVector {
        StateVector::basis(s, BasisState::new(AtomLevel::Ground, na, nb)).unwrap()
    }

    fn event(time: f64, channel: Channel) -> JumpEvent {
        JumpEvent {
            time,
            channel,
            quanta_removed: channel.quanta_removed(),
            photons_before: 0.0,
            photons_after: 0.0,
        }
    }

    fn synthetic(events: Vec<JumpEvent>) -> TrajectoryRecord {
        TrajectoryRecord {
            seed: 0,
            stream: 0,
            space: HilbertSpace::new(1, 1).unwrap(),
            events,
            sample_times: vec![],
            photons: vec![],
            phonons: vec![],
            populations: vec![],
        }
    }

    #[test]
    fn single_mode_jump_statistics() {
        let s = HilbertSpace::new(1, 1).unwrap();
        let kappa = 0.5;
        let h = number_operator(s, Mode::Photon);
        let ch = [CollapseChannel::standard(s, Channel::Photon, kappa).unwrap()];
        let n = 2000;
        let recs = run_trajectories(&h, &ch, &fock(s, 1, 0), 4.0, n, 11, &TrajectoryOptions::default()).unwrap();
        for t in [0.5, 1.0, 2.0, 4.0] {
            let frac = recs.iter().filter(|r| r.events.first().is_some_and(|e| e.time <= t)).count() as f64 / n as f64;
            let p = 1.0 - (-kappa * t).exp();
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((frac - p).abs() < 3.0 * se, "t = {t}: {frac} vs {p}");
        }
        assert!(recs.iter().all(|r| r.events.len() <= 1));
    }

    #[test]
    fn jump_time_matches_threshold() {
        // |1⟩ under a alone: the norm² is e^{−κt}, so the first jump is at
        // t = −ln(r)/κ for the trajectory's first draw r.
        let s = HilbertSpace::new(1, 1).unwrap();
        let kappa = 0.7;
        let h = number_operator(s, Mode::Photon).scale(1.3);
        let ch = [CollapseChannel::standard(s, Channel::Photon, kappa).unwrap()];
        let recs = run_trajectories(&h, &ch, &fock(s, 1, 0), 50.0, 20, 5, &TrajectoryOptions::default()).unwrap();
        for (j, r) in recs.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            rng.set_stream(j as u64);
            let thr: f64 = rng.random();
            let want = -thr.ln() / kappa;
            match r.events.first() {
                Some(e) => assert!((e.time - want).abs() < 1e-9, "{} vs {want}", e.time),
                None => assert!(want > 50.0),
            }
        }
    }

    #[test]
    fn closed_trajectory_matches_schrodinger() {
        let s = HilbertSpace::new(3, 3).unwrap();
        let h = build_h_eff(&ModelParams::default().with_drive(1.29), s).unwrap();
        let psi0 = BareLabel::plus(0, 0).state(s).unwrap();
        let opts = TrajectoryOptions {
            dt: 0.5,
            sample_interval: Some(2.0),
            ..TrajectoryOptions::default()
        };
        let recs = run_trajectories(&h, &[], &psi0, 40.0, 2, 1, &opts).unwrap();
        assert!(recs.iter().all(|r| r.events.is_empty()));
        let times = recs[0].sample_times.clone();
        let ev = evolve_closed(&h, &psi0, &times, &EvolveOptions::default()).unwrap();
        let na = ev.observables.get("n_a").unwrap();
        for (k, v) in recs[0].photons.iter().enumerate() {
            assert!((v - na[k]).abs() < 1e-8, "{v} vs {}", na[k]);
        }
        assert_eq!(recs[0], TrajectoryRecord { stream: 0, ..recs[1].clone() });
    }

    #[test]
    fn photon_pair_channel_removes_two() {
        let s = HilbertSpace::new(2, 1).unwrap();
        let h = number_operator(s, Mode::Photon);
        let ch = [CollapseChannel::standard(s, Channel::PhotonPair, 0.3).unwrap()];
        let recs = run_trajectories(&h, &ch, &fock(s, 2, 0), 60.0, 40, 3, &TrajectoryOptions::default()).unwrap();
        let events: Vec<&JumpEvent> = recs.iter().flat_map(|r| &r.events).collect();
        assert!(!events.is_empty());
        for e in events {
            assert_eq!(e.channel, Channel::PhotonPair);
            assert_eq!(e.quanta_removed, 2);
            assert!((e.photons_before - 2.0).abs() < 1e-12);
            assert!(e.photons_after.abs() < 1e-12);
        }
    }

    #[test]
    fn identical_seeds_reproduce_records() {
        let s = HilbertSpace::new(2, 2).unwrap();
        let p = ModelParams::default().with_drive(1.29).with_uniform_loss(0.25);
        let h = build_h_eff(&p, s).unwrap();
        let ch = crate::dynamics::model_channels(&p, s).unwrap();
        let psi0 = BareLabel::plus(0, 0).state(s).unwrap();
        let opts = TrajectoryOptions::default();
        let a = run_trajectories(&h, &ch, &psi0, 200.0, 4, 42, &opts).unwrap();
        let b = run_trajectories(&h, &ch, &psi0, 200.0, 4, 42, &opts).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().any(|r| !r.events.is_empty()));
        for r in &a {
            assert!(r.events.windows(2).all(|w| w[0].time <= w[1].time));
        }
        // Adjacent base seeds must not reuse each other's trajectories.
        let c = run_trajectories(&h, &ch, &psi0, 200.0, 4, 43, &opts).unwrap();
        for x in &a {
            assert!(c.iter().all(|y| x.events != y.events));
        }
    }

    #[test]
    fn argument_checks() {
        let s = HilbertSpace::new(1, 1).unwrap();
        let h = number_operator(s, Mode::Photon);
        let psi = fock(s, 0, 0);
        let o = TrajectoryOptions::default();
        assert!(run_trajectories(&h, &[], &psi, 0.0, 1, 0, &o).is_err());
        assert!(run_trajectories(&h, &[], &psi, 1.0, 0, 0, &o).is_err());
        let zero = StateVector::from_amplitudes(s, vec![C64::new(0.0, 0.0); s.total_dim()]).unwrap();
        assert!(matches!(run_trajectories(&h, &[], &zero, 1.0, 1, 9, &o), Err(Error::ZeroNorm { .. })));
    }

    #[test]
    fn cluster_counting() {
        assert_eq!(count_correlated_emissions(&[synthetic(vec![])], 100.0, 1.0).unwrap().mean_events, 0.0);
        let r = synthetic(vec![event(10.0, Channel::Photon), event(10.5, Channel::Phonon)]);
        assert_eq!(correlated_clusters(&r, 100.0, 1.0), 1);
        // Too far apart, outside the window, or single-species clusters.
        let r = synthetic(vec![
            event(1.0, Channel::Photon),
            event(3.0, Channel::Phonon),
            event(5.0, Channel::Phonon),
            event(5.2, Channel::Phonon),
            event(7.0, Channel::PhotonPair),
            event(7.5, Channel::Atom),
            event(7.9, Channel::Phonon),
            event(150.0, Channel::Photon),
            event(150.1, Channel::Phonon),
        ]);
        assert_eq!(correlated_clusters(&r, 100.0, 1.0), 1);
        assert!(count_correlated_emissions(&[r], 100.0, 0.0).is_err());
    }

    #[test]
    fn emission_stats_mean_and_error() {
        let one = synthetic(vec![event(1.0, Channel::Photon), event(1.2, Channel::Phonon)]);
        let none = synthetic(vec![]);
        let st = count_correlated_emissions(&[one.clone(), none.clone()], 10.0, 1.0).unwrap();
        assert_eq!(st.mean_events, 0.5);
        assert!((st.stderr - 0.5).abs() < 1e-15);
        let st = count_correlated_emissions(&[one], 10.0, 1.0).unwrap();
        assert_eq!((st.mean_events, st.stderr), (1.0, 0.0));
    }

    #[test]
    fn ensemble_average_checks() {
        assert!(matches!(ensemble_average(&[], "n_a"), Err(Error::EmptyEnsemble)));
        let s = HilbertSpace::new(1, 1).unwrap();
        let h = number_operator(s, Mode::Photon);
        let psi = fock(s, 1, 0);
        let o = TrajectoryOptions::default();
        let a = run_trajectories(&h, &[], &psi, 2.0, 1, 0, &o).unwrap();
        let b = run_trajectories(&h, &[], &psi, 3.0, 1, 0, &o).unwrap();
        assert!(matches!(
            ensemble_average(&[a[0].clone(), b[0].clone()], "n_a"),
            Err(Error::SampleGridMismatch)
        ));
        let avg = ensemble_average(&a, "n_a").unwrap();
        assert!(!avg.stderr_defined);
        assert!(avg.stderr.iter().all(|&e| e == 0.0));
        assert!(avg.mean.iter().all(|&m| (m - 1.0).abs() < 1e-12));
        assert!(ensemble_average(&a, "P(1,0,+)").is_ok());
        assert!(matches!(ensemble_average(&a, "P(5,0,+)"), Err(Error::UnknownLabel(_))));
        assert!(ensemble_average(&a, "volume").is_err());
    }

    #[test]
    fn populations_are_complete() {
        let s = HilbertSpace::new(2, 2).unwrap();
        let p = ModelParams::default().with_drive(1.29).with_uniform_loss(0.25);
        let h = build_h_eff(&p, s).unwrap();
        let ch = crate::dynamics::model_channels(&p, s).unwrap();
        let recs = run_trajectories(&h, &ch, &BareLabel::plus(0, 0).state(s).unwrap(), 50.0, 3, 8, &TrajectoryOptions::default()).unwrap();
        let labels = BareLabel::all(s);
        for r in &recs {
            let tab = trajectory_populations(r, &labels).unwrap();
            for row in &tab.values {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-8);
            }
        }
        assert!(trajectory_populations(&recs[0], &[BareLabel::plus(3, 0)]).is_err());
    }

    #[test]
    fn between_events_window() {
        let s = HilbertSpace::new(1, 1).unwrap();
        let lb = BareLabel::plus(1, 0);
        let i = dressed_index(s, &lb).unwrap();
        let pops = |v: f64| {
            let mut p = vec![0.0; 2 * s.boson_dim()];
            p[i] = v;
            p
        };
        let r = TrajectoryRecord {
            seed: 0,
            stream: 0,
            space: s,
            events: vec![event(1.0, Channel::Phonon), event(3.0, Channel::PhotonPair)],
            sample_times: vec![0.5, 2.0, 4.0],
            photons: vec![0.0; 3],
            phonons: vec![0.0; 3],
            populations: vec![pops(0.9), pops(0.4), pops(0.8)],
        };
        assert_eq!(max_between_events(&r, &lb, Channel::Phonon, Channel::PhotonPair).unwrap(), 0.4);
        assert_eq!(max_between_events(&r, &lb, Channel::PhotonPair, Channel::Phonon).unwrap(), 0.0);
    }

    #[test]
    fn spearman_values() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
        // Ties share the average rank: ranks (1.5, 1.5, 3) vs (1, 2, 3).
        let r = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]);
        assert!((r - 1.5 / 3f64.sqrt()).abs() < 1e-12, "{r}");
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_nan());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        /// The no-jump evolution strictly loses norm from any state with
        /// weight outside the kernel of Σ r O†O.
        #[test]
        fn norm_decreases_between_jumps(re in proptest::collection::vec(-1.0..1.0f64, 18),
                                        im in proptest::collection::vec(-1.0..1.0f64, 18),
                                        dt in 0.01..2.0f64) {
            let s = HilbertSpace::new(2, 2).unwrap();
            let p = ModelParams::default().with_uniform_loss(0.25);
            let h = build_h_eff(&p, s).unwrap();
            let mut h_nh = h.to_dense();
            for c in crate::dynamics::model_channels(&p, s).unwrap() {
                let o = c.operator.matrix();
                for (i, j, v) in o.adjoint().matmul(o).triplets() {
                    h_nh[(i, j)] += C64::new(0.0, -0.5 * c.rate) * v;
                }
            }
            let props = Propagators::new(&h_nh, dt, 1e-3);
            let psi: Vec<C64> = re.iter().zip(&im).map(|(a, b)| C64::new(*a, *b)).collect();
            prop_assume!(norm_sqr(&psi[1..]) > 1e-3);
            let mut cur = psi.clone();
            let mut next = vec![C64::new(0.0, 0.0); psi.len()];
            for k in (0..=props.levels).rev() {
                props.apply(k, &cur, &mut next);
                prop_assert!(norm_sqr(&next) < norm_sqr(&cur));
                std::mem::swap(&mut cur, &mut next);
            }
        }
    }
}
