//! Schrödinger and Lindblad evolution, the Liouvillian and its steady state.
//!
//! The master equation is
//!
//! ```text
//! dρ/dt = i[ρ, H] + Σ_k r_k (2 O_k ρ O_k† − ρ O_k† O_k − O_k† O_k ρ) / 2
//! ```
//!
//! Density matrices are vectorized column by column, so `vec(AXB) =
//! (Bᵀ ⊗ A) vec(X)`.

use faer::sparse::{SparseColMat, Triplet};
use faer::linalg::solvers::Solve;
use faer::Col;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    atom_operator, expectation, ladder_operator, number_operator, AtomOp, DensityMatrix,
    HilbertSpace, Mode, Operator, StateVector,
};
use crate::model::{boson_parity_operator, dressed_index, dressed_populations, BareLabel, ModelParams};
use crate::ode::{integrate, OdeOptions};
use crate::sparse::CsrMatrix;
use crate::C64;

const HERMITIAN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    /// `a`
    Photon,
    /// `a²`
    PhotonPair,
    /// `b`
    Phonon,
    /// `σ`
    Atom,
}

impl Channel {
    pub fn quanta_removed(self) -> u32 {
        match self {
            Channel::PhotonPair => 2,
            _ => 1,
        }
    }

    pub fn is_photon(self) -> bool {
        matches!(self, Channel::Photon | Channel::PhotonPair)
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Photon => "photon",
            Channel::PhotonPair => "photon_pair",
            Channel::Phonon => "phonon",
            Channel::Atom => "atom",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollapseChannel {
    pub channel: Channel,
    pub operator: Operator,
    pub rate: f64,
}

impl CollapseChannel {
    pub fn new(channel: Channel, operator: Operator, rate: f64) -> Result<Self> {
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(Error::InvalidParameter {
                name: "rate",
                reason: format!("decay rate must be finite and nonnegative, got {rate}"),
            });
        }
        Ok(Self {
            channel,
            operator,
            rate,
        })
    }

    /// The model's own jump operator for `channel`.
    pub fn standard(space: HilbertSpace, channel: Channel, rate: f64) -> Result<Self> {
        let op = match channel {
            Channel::Photon => ladder_operator(space, Mode::Photon),
            Channel::PhotonPair => {
                let a = ladder_operator(space, Mode::Photon);
                &a * &a
            }
            Channel::Phonon => ladder_operator(space, Mode::Phonon),
            Channel::Atom => atom_operator(space, AtomOp::Lowering),
        };
        Self::new(channel, op, rate)
    }
}

/// Channels with nonzero rate from `κ_a`, `κ_{a²}`, `κ_b` and `γ`.
pub fn model_channels(params: &ModelParams, space: HilbertSpace) -> Result<Vec<CollapseChannel>> {
    params.validate()?;
    [
        (Channel::Photon, params.kappa_a),
        (Channel::PhotonPair, params.kappa_a2),
        (Channel::Phonon, params.kappa_b),
        (Channel::Atom, params.gamma),
    ]
    .into_iter()
    .filter(|&(_, r)| r > 0.0)
    .map(|(c, r)| CollapseChannel::standard(space, c, r))
    .collect()
}

/// Named real time series sampled on a common grid, in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Observables {
    names: Vec<String>,
    series: Vec<Vec<f64>>,
}

impl Observables {
    fn with_names(names: Vec<String>, len: usize) -> Self {
        let series = vec![vec![0.0; len]; names.len()];
        Self { names, series }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.series[i].as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.series.iter().map(Vec::as_slice))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FinalState {
    Pure(StateVector),
    Mixed(DensityMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionResult {
    pub times: Vec<f64>,
    pub observables: Observables,
    pub final_state: FinalState,
}

/// Population series name for a label, e.g. `P(1,1,-)`.
pub fn population_name(label: &BareLabel) -> String {
    format!("P{label}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveOptions {
    pub ode: OdeOptions,
    /// Labels whose populations `|⟨n_a n_b ±|ψ⟩|²` are recorded besides
    /// `n_a`, `n_b`, `parity` and `norm` (closed) or `trace` (open).
    pub populations: Vec<BareLabel>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            ode: OdeOptions::default(),
            populations: Vec::new(),
        }
    }
}

fn observable_names(opts: &EvolveOptions, last: &str) -> Vec<String> {
    let mut names: Vec<String> = ["n_a", "n_b", "parity", last].map(String::from).to_vec();
    names.extend(opts.populations.iter().map(population_name));
    names
}

fn label_indices(space: HilbertSpace, labels: &[BareLabel]) -> Result<Vec<usize>> {
    labels
        .iter()
        .map(|l| dressed_index(space, l).ok_or_else(|| Error::UnknownLabel(l.to_string())))
        .collect()
}

/// `i d|ψ⟩/dt = H|ψ⟩` from `t = 0`.
pub fn evolve_closed(
    h: &Operator,
    psi0: &StateVector,
    times: &[f64],
    opts: &EvolveOptions,
) -> Result<EvolutionResult> {
    let dev = h.hermiticity_deviation();
    if dev > HERMITIAN_TOL {
        return Err(Error::NotHermitian(dev));
    }
    if h.space() != psi0.space() {
        return Err(Error::SpaceMismatch);
    }
    let space = h.space();
    let idx = label_indices(space, &opts.populations)?;
    let na = number_operator(space, Mode::Photon);
    let nb = number_operator(space, Mode::Phonon);
    let par = boson_parity_operator(space);
    let mut obs = Observables::with_names(observable_names(opts, "norm"), times.len());
    let minus_i = C64::new(0.0, -1.0);
    let m = h.matrix();
    let mut y = psi0.amplitudes().to_vec();
    integrate(
        |_, y, dy| {
            m.mul_vec(y, dy);
            dy.iter_mut().for_each(|v| *v *= minus_i);
        },
        0.0,
        &mut y,
        times,
        &opts.ode,
        |k, _, y| {
            let psi = StateVector::from_amplitudes(space, y.to_vec())?;
            obs.series[0][k] = expectation(&na, &psi)?.re;
            obs.series[1][k] = expectation(&nb, &psi)?.re;
            obs.series[2][k] = expectation(&par, &psi)?.re;
            obs.series[3][k] = psi.norm();
            let pops = dressed_populations(space, y);
            for (j, &i) in idx.iter().enumerate() {
                obs.series[4 + j][k] = pops[i];
            }
            Ok(())
        },
    )?;
    Ok(EvolutionResult {
        times: times.to_vec(),
        observables: obs,
        final_state: FinalState::Pure(StateVector::from_amplitudes(space, y)?),
    })
}

/// Lindblad generator, applied matrix-free or assembled on `vec(ρ)`.
#[derive(Debug, Clone)]
pub struct Superoperator {
    space: HilbertSpace,
    hamiltonian: Operator,
    channels: Vec<CollapseChannel>,
    /// `K = H − (i/2) Σ r O†O`
    k: CsrMatrix,
    k_adj: CsrMatrix,
    jumps: Vec<(f64, CsrMatrix, CsrMatrix)>,
}

pub fn liouvillian(h: &Operator, channels: &[CollapseChannel]) -> Result<Superoperator> {
    let dev = h.hermiticity_deviation();
    if dev > HERMITIAN_TOL {
        return Err(Error::NotHermitian(dev));
    }
    let space = h.space();
    let mut k = h.matrix().clone();
    let mut jumps = Vec::new();
    for c in channels {
        if c.operator.space() != space {
            return Err(Error::SpaceMismatch);
        }
        if c.rate == 0.0 {
            continue;
        }
        let o = c.operator.matrix().clone();
        let od = o.adjoint();
        k = k.add(&od.matmul(&o).scale(C64::new(0.0, -0.5 * c.rate)));
        jumps.push((c.rate, o, od));
    }
    Ok(Superoperator {
        space,
        hamiltonian: h.clone(),
        channels: channels.to_vec(),
        k_adj: k.adjoint(),
        k,
        jumps,
    })
}

impl Superoperator {
    pub fn space(&self) -> HilbertSpace {
        self.space
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.hamiltonian
    }

    pub fn channels(&self) -> &[CollapseChannel] {
        &self.channels
    }

    /// Side of the vectorized generator, `total_dim²`.
    pub fn dim(&self) -> usize {
        let n = self.space.total_dim();
        n * n
    }

    /// Smallest nonzero channel rate.
    pub fn min_rate(&self) -> Option<f64> {
        self.jumps.iter().map(|j| j.0).min_by(f64::total_cmp)
    }

    /// `out = L(x)` for a column-major `x`; `x` need not be Hermitian.
    pub fn apply(&self, x: &[C64], out: &mut [C64]) {
        let n = self.space.total_dim();
        out.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        self.k.left_mul_dense_acc(x, n, C64::new(0.0, -1.0), out);
        self.k_adj.right_mul_dense_acc(x, n, C64::new(0.0, 1.0), out);
        if self.jumps.is_empty() {
            return;
        }
        let mut tmp = vec![C64::new(0.0, 0.0); n * n];
        for (rate, o, od) in &self.jumps {
            tmp.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            o.left_mul_dense_acc(x, n, C64::new(1.0, 0.0), &mut tmp);
            od.right_mul_dense_acc(&tmp, n, C64::new(*rate, 0.0), out);
        }
    }

    pub fn apply_to(&self, rho: &DensityMatrix) -> Result<Vec<C64>> {
        if rho.space() != self.space {
            return Err(Error::SpaceMismatch);
        }
        let mut out = vec![C64::new(0.0, 0.0); self.dim()];
        self.apply(rho.as_col_major(), &mut out);
        Ok(out)
    }

    /// Entrywise ℓ1 norm of `L(ρ)`, an upper bound on its trace norm.
    pub fn residual(&self, rho: &DensityMatrix) -> Result<f64> {
        Ok(self.apply_to(rho)?.iter().map(|v| v.norm()).sum())
    }

    /// `L = −i(I⊗K) + i(K̄⊗I) + Σ r (Ō⊗O)`.
    pub fn to_sparse(&self) -> CsrMatrix {
        let n = self.space.total_dim();
        let id = CsrMatrix::identity(n);
        let mut trip: Vec<(usize, usize, C64)> = Vec::new();
        let mut push = |m: CsrMatrix, s: C64| trip.extend(m.triplets().map(|(i, j, v)| (i, j, s * v)));
        push(id.kron(&self.k), C64::new(0.0, -1.0));
        push(self.k.conj().kron(&id), C64::new(0.0, 1.0));
        for (rate, o, _) in &self.jumps {
            push(o.conj().kron(o), C64::new(*rate, 0.0));
        }
        CsrMatrix::from_triplets(n * n, n * n, trip)
    }
}

/// `dρ/dt = L(ρ)` from `t = 0`. The trace is not renormalized; the `trace`
/// series is a diagnostic.
pub fn evolve_open(
    l: &Superoperator,
    rho0: &DensityMatrix,
    times: &[f64],
    opts: &EvolveOptions,
) -> Result<EvolutionResult> {
    if rho0.space() != l.space {
        return Err(Error::SpaceMismatch);
    }
    let space = l.space;
    let n = space.total_dim();
    let na = number_operator(space, Mode::Photon);
    let nb = number_operator(space, Mode::Phonon);
    let par = boson_parity_operator(space);
    let label_states: Vec<StateVector> = opts
        .populations
        .iter()
        .map(|lb| lb.state(space))
        .collect::<Result<_>>()?;
    let mut obs = Observables::with_names(observable_names(opts, "trace"), times.len());
    let mut y = rho0.as_col_major().to_vec();
    integrate(
        |_, y, dy| l.apply(y, dy),
        0.0,
        &mut y,
        times,
        &opts.ode,
        |k, _, y| {
            let rho = DensityMatrix::from_col_major(space, y.to_vec())?;
            obs.series[0][k] = expectation(&na, &rho)?.re;
            obs.series[1][k] = expectation(&nb, &rho)?.re;
            obs.series[2][k] = expectation(&par, &rho)?.re;
            obs.series[3][k] = (0..n).map(|i| y[i * n + i].re).sum();
            for (j, st) in label_states.iter().enumerate() {
                obs.series[4 + j][k] = rho.population(st)?;
            }
            Ok(())
        },
    )?;
    Ok(EvolutionResult {
        times: times.to_vec(),
        observables: obs,
        final_state: FinalState::Mixed(DensityMatrix::from_col_major(space, y)?),
    })
}

/// Acceptance thresholds for a stationary solution.
pub const STEADY_RESIDUAL_TOL: f64 = 1e-8;
pub const STEADY_POSITIVITY_TOL: f64 = 1e-8;

/// Unique stationary state, from a sparse LU solve of the vectorized
/// generator with its first row replaced by the trace constraint. Falls back
/// to long-time evolution if the factorization fails or its solution does
/// not pass the residual check.
pub fn steady_state(l: &Superoperator) -> Result<DensityMatrix> {
    let direct = steady_state_direct(l).and_then(|rho| check_steady(l, rho));
    match direct {
        Ok(rho) => Ok(rho),
        Err(first) => steady_state_by_evolution(l)
            .and_then(|rho| check_steady(l, rho))
            .map_err(|second| Error::SteadyState(format!("direct solve: {first}; evolution: {second}"))),
    }
}

fn steady_state_direct(l: &Superoperator) -> Result<DensityMatrix> {
    let n = l.space.total_dim();
    let m = n * n;
    let lmat = l.to_sparse();
    let mut trip: Vec<Triplet<usize, usize, C64>> = lmat
        .triplets()
        .filter(|&(i, _, _)| i != 0)
        .map(|(i, j, v)| Triplet::new(i, j, v))
        .collect();
    trip.extend((0..n).map(|i| Triplet::new(0, i * n + i, C64::new(1.0, 0.0))));
    let a = SparseColMat::<usize, C64>::try_new_from_triplets(m, m, &trip)
        .map_err(|e| Error::Factorization(format!("{e:?}")))?;
    let lu = a.sp_lu().map_err(|e| Error::Factorization(format!("{e:?}")))?;
    let rhs = Col::<C64>::from_fn(m, |i| if i == 0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
    let x = lu.solve(&rhs);
    let data: Vec<C64> = (0..m).map(|i| x[i]).collect();
    if data.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Factorization("non-finite solution".into()));
    }
    DensityMatrix::from_col_major(l.space, data)
}

fn steady_state_by_evolution(l: &Superoperator) -> Result<DensityMatrix> {
    let rate = l
        .min_rate()
        .ok_or_else(|| Error::SteadyState("no dissipation channel".into()))?;
    let space = l.space;
    let start = BareLabel::minus(0, 0).state(space)?;
    let t_end = 50.0 / rate;
    let res = evolve_open(l, &DensityMatrix::from_pure(&start), &[t_end], &EvolveOptions::default())?;
    match res.final_state {
        FinalState::Mixed(rho) => Ok(rho),
        FinalState::Pure(_) => unreachable!("open evolution returns a density matrix"),
    }
}

fn check_steady(l: &Superoperator, rho: DensityMatrix) -> Result<DensityMatrix> {
    let rho = hermitian_unit_trace(rho)?;
    let res = l.residual(&rho)?;
    if !(res < STEADY_RESIDUAL_TOL) {
        return Err(Error::SteadyState(format!("residual {res:e}")));
    }
    let min_ev = rho.eigenvalues()?[0];
    if min_ev < -STEADY_POSITIVITY_TOL {
        return Err(Error::SteadyState(format!("negative eigenvalue {min_ev:e}")));
    }
    Ok(rho)
}

fn hermitian_unit_trace(rho: DensityMatrix) -> Result<DensityMatrix> {
    let n = rho.dim();
    let tr = rho.trace().re;
    if !(tr.abs() > 0.0) {
        return Err(Error::SteadyState("zero trace".into()));
    }
    let data: Vec<C64> = (0..n * n)
        .map(|k| {
            let (i, j) = (k % n, k / n);
            0.5 * (rho.get(i, j) + rho.get(j, i).conj()) / tr
        })
        .collect();
    DensityMatrix::from_col_major(rho.space(), data)
}
