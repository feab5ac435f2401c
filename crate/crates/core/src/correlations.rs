//! Stationary two-time correlations, emission spectra and the equal-time
//! photon–phonon cross-correlation.
//!
//! Correlations follow the quantum regression theorem:
//! `⟨A†(0)A(τ)⟩ = Tr[A e^{Lτ}(ρ A†)]`, with `ρ A†` propagated by the same
//! generator as the state. Spectra use the one-sided transform
//! `S(ω) = 2 Re ∫₀^{τmax} e^{iωτ} C(τ) dτ`.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Col;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{Channel, Superoperator, STEADY_RESIDUAL_TOL};
use crate::error::{Error, Result};
use crate::hilbert::{expectation, ladder_operator, trace_product, DensityMatrix, Mode, Operator};
use crate::ode::{integrate, OdeOptions};
use crate::C64;

/// Required decay `|C(τmax)| / |C(0)|` before a transform.
pub const DECAY_TOL: f64 = 1e-4;
/// Occupations at or below this are treated as vacuum by [`cross_g2`].
pub const OCCUPATION_FLOOR: f64 = 1e-12;

const DEFAULT_TAU_POINTS: usize = 4096;
const MAX_TAU_STEP: f64 = 0.2;
const DECAY_LIFETIMES: f64 = 40.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSeries {
    pub tau_grid: Vec<f64>,
    pub values: Vec<C64>,
}

impl CorrelationSeries {
    pub fn new(tau_grid: Vec<f64>, values: Vec<C64>) -> Result<Self> {
        if tau_grid.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: tau_grid.len(),
                got: values.len(),
            });
        }
        check_tau_grid(&tau_grid)?;
        Ok(Self { tau_grid, values })
    }

    /// `|C(τmax)| / |C(0)|`; zero for an identically vanishing series.
    pub fn decay_ratio(&self) -> f64 {
        let (Some(first), Some(last)) = (self.values.first(), self.values.last()) else {
            return 0.0;
        };
        if first.norm() == 0.0 {
            if last.norm() == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            last.norm() / first.norm()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumSeries {
    pub omega_grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl SpectrumSeries {
    /// Grid point and value of the global maximum.
    pub fn peak(&self) -> Option<(f64, f64)> {
        self.peak_within(f64::NEG_INFINITY, f64::INFINITY)
    }

    /// Largest value with `lo ≤ ω ≤ hi`.
    pub fn peak_within(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        self.omega_grid
            .iter()
            .zip(&self.values)
            .filter(|(w, _)| (lo..=hi).contains(*w))
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(w, v)| (*w, *v))
    }

    /// Grid spacing at the peak (the larger neighbouring interval).
    pub fn resolution_at(&self, omega: f64) -> f64 {
        let g = &self.omega_grid;
        let Some(i) = g.iter().position(|&w| w == omega) else {
            return f64::NAN;
        };
        let left = if i > 0 { g[i] - g[i - 1] } else { 0.0 };
        let right = if i + 1 < g.len() { g[i + 1] - g[i] } else { 0.0 };
        left.max(right)
    }
}

fn check_tau_grid(tau: &[f64]) -> Result<()> {
    if tau.first().is_some_and(|&t| t < 0.0) || tau.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter {
            name: "tau_grid",
            reason: "expected strictly ascending delays starting at τ ≥ 0".into(),
        });
    }
    Ok(())
}

/// Uniform delay grid from 0 to `40/κ`, with `κ` the slowest boson loss
/// rate (the slowest rate of any channel if no boson channel is open).
/// At least 4096 points and a step no larger than 0.2.
pub fn default_tau_grid(l: &Superoperator) -> Result<Vec<f64>> {
    let boson = l
        .channels()
        .iter()
        .filter(|c| c.rate > 0.0 && c.channel != Channel::Atom)
        .map(|c| c.rate)
        .min_by(f64::total_cmp);
    let rate = boson
        .or_else(|| l.min_rate())
        .ok_or_else(|| Error::InvalidParameter {
            name: "channels",
            reason: "correlations need at least one dissipation channel to decay".into(),
        })?;
    Ok(uniform_tau_grid(DECAY_LIFETIMES / rate, MAX_TAU_STEP, DEFAULT_TAU_POINTS))
}

/// `[0, tau_max]` with at least `min_points` points and step ≤ `max_step`.
pub fn uniform_tau_grid(tau_max: f64, max_step: f64, min_points: usize) -> Vec<f64> {
    let n = ((tau_max / max_step).ceil() as usize + 1).max(min_points).max(2);
    let h = tau_max / (n - 1) as f64;
    (0..n).map(|i| i as f64 * h).collect()
}

/// Integrator settings for regression propagation; the absolute tolerance
/// is scaled by the largest entry of the propagated matrix.
pub fn regression_ode_options() -> OdeOptions {
    OdeOptions {
        rtol: 1e-8,
        atol: 1e-10,
        ..OdeOptions::default()
    }
}

/// `⟨A†(0)A(τ)⟩` in the stationary state `rho_ss` of `l`.
pub fn two_time_correlation(
    l: &Superoperator,
    rho_ss: &DensityMatrix,
    op: &Operator,
    tau_grid: &[f64],
) -> Result<CorrelationSeries> {
    let res = l.residual(rho_ss)?;
    if !(res < STEADY_RESIDUAL_TOL) {
        return Err(Error::NotStationary(res));
    }
    regression(l, rho_ss, op, tau_grid, &regression_ode_options())
}

/// `Tr[A e^{Lτ}(ρ A†)]` for any `ρ`, stationary or not.
pub fn regression(
    l: &Superoperator,
    rho: &DensityMatrix,
    op: &Operator,
    tau_grid: &[f64],
    ode: &OdeOptions,
) -> Result<CorrelationSeries> {
    let space = l.space();
    if rho.space() != space || op.space() != space {
        return Err(Error::SpaceMismatch);
    }
    check_tau_grid(tau_grid)?;
    let n = space.total_dim();
    let mut x = vec![C64::new(0.0, 0.0); n * n];
    op.adjoint()
        .matrix()
        .right_mul_dense_acc(rho.as_col_major(), n, C64::new(1.0, 0.0), &mut x);
    let scale = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut values = vec![C64::new(0.0, 0.0); tau_grid.len()];
    if scale > 0.0 {
        let opts = OdeOptions {
            atol: ode.atol * scale,
            ..*ode
        };
        let a = op.matrix();
        integrate(
            |_, y, dy| l.apply(y, dy),
            0.0,
            &mut x,
            tau_grid,
            &opts,
            |k, _, y| {
                values[k] = trace_product(a, y, n);
                Ok(())
            },
        )?;
    }
    CorrelationSeries::new(tau_grid.to_vec(), values)
}

/// One-sided Fourier transform by the trapezoidal rule.
pub fn emission_spectrum(corr: &CorrelationSeries, omega_grid: &[f64]) -> Result<SpectrumSeries> {
    let ratio = corr.decay_ratio();
    if !(ratio < DECAY_TOL) {
        return Err(Error::NotDecayed { ratio });
    }
    let tau = &corr.tau_grid;
    let c = &corr.values;
    let values = omega_grid
        .par_iter()
        .map(|&w| {
            let f = |i: usize| C64::new(0.0, w * tau[i]).exp() * c[i];
            let mut acc = C64::new(0.0, 0.0);
            for i in 1..tau.len() {
                acc += 0.5 * (tau[i] - tau[i - 1]) * (f(i - 1) + f(i));
            }
            2.0 * acc.re
        })
        .collect();
    Ok(SpectrumSeries {
        omega_grid: omega_grid.to_vec(),
        values,
    })
}

/// The same transform taken to `τ → ∞` in closed form,
/// `S(ω) = −2 Re Tr[A (L + iω)⁻¹ (ρ A†)]`, from one sparse LU per frequency.
pub fn resolvent_spectrum(
    l: &Superoperator,
    rho_ss: &DensityMatrix,
    op: &Operator,
    omega_grid: &[f64],
) -> Result<SpectrumSeries> {
    let space = l.space();
    if rho_ss.space() != space || op.space() != space {
        return Err(Error::SpaceMismatch);
    }
    let n = space.total_dim();
    let m = n * n;
    let mut x = vec![C64::new(0.0, 0.0); m];
    op.adjoint()
        .matrix()
        .right_mul_dense_acc(rho_ss.as_col_major(), n, C64::new(1.0, 0.0), &mut x);
    let lmat = l.to_sparse();
    let rhs = Col::<C64>::from_fn(m, |i| x[i]);
    let values = omega_grid
        .par_iter()
        .map(|&w| -> Result<f64> {
            let mut trip: Vec<Triplet<usize, usize, C64>> =
                lmat.triplets().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
            trip.extend((0..m).map(|i| Triplet::new(i, i, C64::new(0.0, w))));
            let a = SparseColMat::<usize, C64>::try_new_from_triplets(m, m, &trip)
                .map_err(|e| Error::Factorization(format!("{e:?}")))?;
            let lu = a.sp_lu().map_err(|e| Error::Factorization(format!("{e:?}")))?;
            let y = lu.solve(&rhs);
            let y: Vec<C64> = (0..m).map(|i| y[i]).collect();
            let v = -2.0 * trace_product(op.matrix(), &y, n).re;
            if !v.is_finite() {
                return Err(Error::Factorization(format!("singular resolvent at ω = {w}")));
            }
            Ok(v)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(SpectrumSeries {
        omega_grid: omega_grid.to_vec(),
        values,
    })
}

/// `⟨a†b†ba⟩ / (⟨a†a⟩⟨b†b⟩)`.
pub fn cross_g2(rho: &DensityMatrix) -> Result<f64> {
    let space = rho.space();
    let a = ladder_operator(space, Mode::Photon);
    let b = ladder_operator(space, Mode::Phonon);
    let ad = a.adjoint();
    let bd = b.adjoint();
    let na = expectation(&(&ad * &a), rho)?.re;
    let nb = expectation(&(&bd * &b), rho)?.re;
    if !(na > OCCUPATION_FLOOR && nb > OCCUPATION_FLOOR) {
        return Err(Error::VanishingOccupation {
            photons: na,
            phonons: nb,
        });
    }
    let joint = expectation(&(&(&(&ad * &bd) * &b) * &a), rho)?.re;
    Ok(joint / (na * nb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{liouvillian, model_channels, steady_state, CollapseChannel};
    use crate::hilbert::{number_operator, AtomLevel, BasisState, HilbertSpace, StateVector};
    use crate::model::{build_h_eff, ModelParams};
    use proptest::prelude::*;

    fn ket(s: HilbertSpace, na: usize, nb: usize) -> StateVector {
        StateVector::basis(s, BasisState::new(AtomLevel::Ground, na, nb)).unwrap()
    }

    fn damped_mode(w0: f64, kappa: f64) -> (HilbertSpace, Superoperator) {
        let s = HilbertSpace::new(3, 1).unwrap();
        let h = number_operator(s, Mode::Photon).scale(w0);
        let c = CollapseChannel::standard(s, Channel::Photon, kappa).unwrap();
        (s, liouvillian(&h, &[c]).unwrap())
    }

    #[test]
    fn vacuum_has_no_emission() {
        let (s, l) = damped_mode(1.0, 0.5);
        let rho = DensityMatrix::from_pure(&ket(s, 0, 0));
        let a = ladder_operator(s, Mode::Photon);
        let c = two_time_correlation(&l, &rho, &a, &[0.0, 1.0, 5.0]).unwrap();
        assert!(c.values.iter().all(|v| v.norm() == 0.0));
        let sp = emission_spectrum(&c, &[0.0, 1.0, 2.0]).unwrap();
        assert!(sp.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn damped_oscillator_correlation() {
        let (w0, kappa) = (1.3, 0.4);
        let (s, l) = damped_mode(w0, kappa);
        let rho = DensityMatrix::from_pure(&ket(s, 1, 0));
        let a = ladder_operator(s, Mode::Photon);
        let taus: Vec<f64> = (0..=40).map(|i| 0.5 * i as f64).collect();
        let c = regression(&l, &rho, &a, &taus, &OdeOptions::default()).unwrap();
        for (t, v) in taus.iter().zip(&c.values) {
            let want = C64::new(-kappa / 2.0, -w0).scale(*t).exp();
            assert!((v - want).norm() < 1e-8, "τ = {t}: {v} vs {want}");
        }
    }

    #[test]
    fn non_stationary_input_is_rejected() {
        let (s, l) = damped_mode(1.0, 0.4);
        let rho = DensityMatrix::from_pure(&ket(s, 1, 0));
        let a = ladder_operator(s, Mode::Photon);
        assert!(matches!(
            two_time_correlation(&l, &rho, &a, &[0.0, 1.0]),
            Err(Error::NotStationary(_))
        ));
    }

    #[test]
    fn lorentzian_spectrum() {
        // C(τ) = e^{(−iω₀−κ/2)τ} gives S(ω) = κ / ((ω−ω₀)² + κ²/4).
        let (w0, kappa) = (1.3, 0.4);
        let (s, l) = damped_mode(w0, kappa);
        let rho = DensityMatrix::from_pure(&ket(s, 1, 0));
        let a = ladder_operator(s, Mode::Photon);
        let taus = uniform_tau_grid(80.0, 0.01, 2);
        let c = regression(&l, &rho, &a, &taus, &OdeOptions::default()).unwrap();
        let omegas: Vec<f64> = (0..=300).map(|i| 0.01 * i as f64).collect();
        let sp = emission_spectrum(&c, &omegas).unwrap();
        for (w, v) in omegas.iter().zip(&sp.values) {
            let want = kappa / ((w - w0).powi(2) + kappa * kappa / 4.0);
            assert!((v - want).abs() < 1e-3 * want.max(1.0), "ω = {w}: {v} vs {want}");
        }
        let (wp, _) = sp.peak().unwrap();
        assert!((wp - w0).abs() <= sp.resolution_at(wp));
    }

    #[test]
    fn undecayed_series_is_rejected() {
        let c = CorrelationSeries::new(vec![0.0, 1.0], vec![C64::new(1.0, 0.0), C64::new(0.5, 0.0)]).unwrap();
        assert!(matches!(emission_spectrum(&c, &[1.0]), Err(Error::NotDecayed { .. })));
    }

    #[test]
    fn spectrum_converges_under_step_halving() {
        let (w0, kappa) = (1.3, 0.4);
        let (s, l) = damped_mode(w0, kappa);
        let rho = DensityMatrix::from_pure(&ket(s, 1, 0));
        let a = ladder_operator(s, Mode::Photon);
        let omegas = [1.0, 1.3, 1.7];
        let spec = |h: f64| {
            let taus = uniform_tau_grid(100.0, h, 2);
            let c = regression(&l, &rho, &a, &taus, &OdeOptions::default()).unwrap();
            emission_spectrum(&c, &omegas).unwrap().values
        };
        let (coarse, fine) = (spec(0.002), spec(0.001));
        for (c, f) in coarse.iter().zip(&fine) {
            assert!((c - f).abs() < 1e-6 * f.abs(), "{c} vs {f}");
        }
    }

    fn fig3_steady(omega: f64, n: usize) -> (Superoperator, DensityMatrix) {
        let s = HilbertSpace::new(n, n).unwrap();
        let p = ModelParams::default().with_drive(omega).with_uniform_loss(0.25);
        let l = liouvillian(&build_h_eff(&p, s).unwrap(), &model_channels(&p, s).unwrap()).unwrap();
        let rho = steady_state(&l).unwrap();
        (l, rho)
    }

    #[test]
    fn zero_delay_matches_equal_time_moment() {
        let (l, rho) = fig3_steady(1.29, 3);
        let s = l.space();
        for mode in [Mode::Photon, Mode::Phonon] {
            let a = ladder_operator(s, mode);
            let c = two_time_correlation(&l, &rho, &a, &[0.0]).unwrap();
            let n = expectation(&number_operator(s, mode), &rho).unwrap();
            assert!(c.values[0].im.abs() < 1e-10);
            assert!((c.values[0] - n).norm() < 1e-10);
        }
    }

    #[test]
    fn trapezoid_matches_resolvent() {
        let (l, rho) = fig3_steady(1.29, 3);
        let a = ladder_operator(l.space(), Mode::Photon);
        let taus = uniform_tau_grid(200.0, 0.005, 2);
        let c = two_time_correlation(&l, &rho, &a, &taus).unwrap();
        let omegas = [0.6, 1.0, 1.6, 2.2];
        let direct = emission_spectrum(&c, &omegas).unwrap();
        let exact = resolvent_spectrum(&l, &rho, &a, &omegas).unwrap();
        let top = exact.values.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        for (d, e) in direct.values.iter().zip(&exact.values) {
            assert!((d - e).abs() < 1e-5 * top, "{d} vs {e}");
        }
    }

    #[test]
    fn default_grid_uses_boson_rates() {
        let (l, _) = fig3_steady(1.29, 2);
        let g = default_tau_grid(&l).unwrap();
        assert_eq!(g[0], 0.0);
        assert!((g.last().unwrap() - 160.0).abs() < 1e-9);
        assert!(g.len() >= 4096);
        assert!(g[1] - g[0] <= 0.2);
    }

    #[test]
    fn g2_of_product_state_is_one() {
        let s = HilbertSpace::new(3, 3).unwrap();
        let amp = |na: usize, nb: usize| {
            let pa = [0.6, 0.3, 0.1, 0.0][na];
            let pb = [0.5, 0.25, 0.15, 0.1][nb];
            pa * pb
        };
        let parts: Vec<(f64, StateVector)> = (0..=3)
            .flat_map(|i| (0..=3).map(move |j| (i, j)))
            .map(|(i, j)| (amp(i, j), ket(s, i, j)))
            .collect();
        let rho = DensityMatrix::mixture(&parts).unwrap();
        assert!((cross_g2(&rho).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn g2_of_pair_mixture() {
        let s = HilbertSpace::new(2, 2).unwrap();
        let p = 0.1;
        let rho = DensityMatrix::mixture(&[(p, ket(s, 1, 1)), (1.0 - p, ket(s, 0, 0))]).unwrap();
        assert!((cross_g2(&rho).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn g2_of_vacuum_is_undefined() {
        let s = HilbertSpace::new(2, 2).unwrap();
        let rho = DensityMatrix::from_pure(&ket(s, 0, 0));
        assert!(matches!(cross_g2(&rho), Err(Error::VanishingOccupation { .. })));
    }

    #[test]
    fn full_model_is_bunched() {
        let (_, rho) = fig3_steady(1.2909775, 4);
        let g2 = cross_g2(&rho).unwrap();
        assert!((g2 - 23.12).abs() < 0.01, "{g2}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        /// Phases on the modes, `a → e^{iφ}a`, `b → e^{iθ}b`, are a diagonal
        /// unitary on the state.
        #[test]
        fn g2_is_phase_invariant(phi in 0.0..6.3f64, theta in 0.0..6.3f64, w in 0.05..0.95f64) {
            let s = HilbertSpace::new(2, 2).unwrap();
            let psi = ket(s, 1, 1).superpose(C64::new(w.sqrt(), 0.0), &ket(s, 0, 0), C64::new((1.0 - w).sqrt(), 0.0)).unwrap();
            let mix = DensityMatrix::mixture(&[(0.7, psi), (0.3, ket(s, 2, 1))]).unwrap();
            let n = s.total_dim();
            let phase: Vec<C64> = (0..n)
                .map(|i| {
                    let b = s.decode(i).unwrap();
                    C64::new(0.0, phi * b.photons as f64 + theta * b.phonons as f64).exp()
                })
                .collect();
            let data: Vec<C64> = (0..n * n)
                .map(|k| {
                    let (i, j) = (k % n, k / n);
                    phase[i] * mix.as_col_major()[k] * phase[j].conj()
                })
                .collect();
            let rotated = DensityMatrix::from_col_major(s, data).unwrap();
            let (g0, g1) = (cross_g2(&mix).unwrap(), cross_g2(&rotated).unwrap());
            prop_assert!((g0 - g1).abs() < 1e-12 * g0.abs());
        }
    }
}
