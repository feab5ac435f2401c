//! Model parameters, the squeezing-enhanced coupling, and the two
//! Hamiltonians used throughout: the bare-basis effective Hamiltonian
//!
//! ```text
//! H = Δ_a a†a + Δ_σ σ_z/2 + ω_b b†b + λ(a†σ + aσ†)(b† + b) + Ω(σ + σ†)
//! ```
//!
//! and its dressed-frame form (valid at `Δ_σ = 0`)
//!
//! ```text
//! H' = Δ_a a†a + ω_b b†b + Ω σ̃_z
//!      + (λ/2)[(a†b† + a†b + ab† + ab) σ̃_z + (a†b† + a†b − ab† − ab)(σ̃† − σ̃)]
//! ```
//!
//! Both are stored in the bare `{|g⟩, |e⟩}` atom basis, so `σ̃_z` is `σ_x`
//! there and dressed labels are projections onto `|±⟩ = (|g⟩ ± |e⟩)/√2`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    atom_operator, ladder_operator, number_operator, AtomLevel, AtomOp, BasisState, HilbertSpace,
    Mode, Operator, StateVector,
};
use crate::C64;

/// Rotating-frame constants, all in units of `ω_b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub delta_a: f64,
    #[serde(default)]
    pub delta_sigma: f64,
    #[serde(default = "one")]
    pub omega_b: f64,
    pub lambda: f64,
    pub omega_drive: f64,
    #[serde(default)]
    pub kappa_a: f64,
    #[serde(default)]
    pub kappa_a2: f64,
    #[serde(default)]
    pub kappa_b: f64,
    #[serde(default)]
    pub gamma: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            delta_a: 1.6,
            delta_sigma: 0.0,
            omega_b: 1.0,
            lambda: 0.15,
            omega_drive: 1.3,
            kappa_a: 0.0,
            kappa_a2: 0.0,
            kappa_b: 0.0,
            gamma: 0.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("delta_a", self.delta_a),
            ("delta_sigma", self.delta_sigma),
            ("omega_b", self.omega_b),
            ("lambda", self.lambda),
            ("omega_drive", self.omega_drive),
            ("kappa_a", self.kappa_a),
            ("kappa_a2", self.kappa_a2),
            ("kappa_b", self.kappa_b),
            ("gamma", self.gamma),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("{v} is not finite"),
                });
            }
        }
        if self.omega_b <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "omega_b",
                reason: format!("must be positive, got {}", self.omega_b),
            });
        }
        if self.lambda < 0.0 {
            return Err(Error::InvalidParameter {
                name: "lambda",
                reason: format!("must be nonnegative, got {}", self.lambda),
            });
        }
        for (name, v) in &finite[5..] {
            if *v < 0.0 {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("decay rate must be nonnegative, got {v}"),
                });
            }
        }
        Ok(())
    }

    pub fn with_drive(self, omega_drive: f64) -> Self {
        Self {
            omega_drive,
            ..self
        }
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }

    /// Sets `κ_a = κ_b = kappa` and `γ = kappa / 10`, leaving `κ_{a²}` alone.
    pub fn with_uniform_loss(self, kappa: f64) -> Self {
        Self {
            kappa_a: kappa,
            kappa_b: kappa,
            gamma: kappa / 10.0,
            ..self
        }
    }

    /// Smallest nonzero decay rate, if any channel is open.
    pub fn min_rate(&self) -> Option<f64> {
        [self.kappa_a, self.kappa_a2, self.kappa_b, self.gamma]
            .into_iter()
            .filter(|&r| r > 0.0)
            .min_by(f64::total_cmp)
    }
}

/// Lab-frame inputs to the squeezing derivation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub lambda_a_sigma: f64,
    pub wavenumber_k: f64,
    /// Zero-point amplitude `√(ħ / 2Mω_b)`.
    pub zpm: f64,
    pub mass: f64,
    pub omega_p_drive: f64,
    pub delta_al: f64,
    pub delta_sigma_l: f64,
    pub omega_l: f64,
    pub omega_a: f64,
    pub omega_sigma: f64,
    /// Trap center, a node of the cavity field (`k x₀ = nπ`).
    pub atom_position_x0: f64,
}

impl PhysicalParams {
    /// `√(ħ / 2Mω_b)` with `ħ = 1`.
    pub fn zpm_from_mass(mass: f64, omega_b: f64) -> f64 {
        (1.0 / (2.0 * mass * omega_b)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveDerivation {
    pub r: f64,
    /// Bare tripartite coupling `λ_{aσ} k x_ZPM`.
    pub lambda_abc: f64,
    pub lambda_enhanced: f64,
    pub lambda_prime: f64,
    pub delta_a_eff: f64,
    pub delta_sigma: f64,
    /// `|λ'| / (Δ_a + Δ_σ)`; the dropped counter-rotating term is small only
    /// when this is.
    pub rwa_ratio: f64,
}

impl EffectiveDerivation {
    /// Copies `Δ_a`, `Δ_σ` and `λ` into `base`.
    pub fn apply(&self, base: ModelParams) -> ModelParams {
        ModelParams {
            delta_a: self.delta_a_eff,
            delta_sigma: self.delta_sigma,
            lambda: self.lambda_enhanced,
            ..base
        }
    }
}

/// Squeezing transformation of the parametrically driven cavity:
/// `tanh 4r = 2Ω_p/Δ_{aL}`, `Δ_a = √(Δ_{aL}² − 4Ω_p²)`,
/// `λ = λ_{abσ} cosh 2r`, `λ' = −λ_{abσ} sinh 2r`.
pub fn derive_effective_params(phys: &PhysicalParams) -> Result<EffectiveDerivation> {
    if !(phys.zpm > 0.0) {
        return Err(Error::InvalidParameter {
            name: "zpm",
            reason: format!("must be positive, got {}", phys.zpm),
        });
    }
    let two_op = 2.0 * phys.omega_p_drive;
    if !(two_op.abs() < phys.delta_al.abs()) {
        return Err(Error::SingularSqueezing {
            two_omega_p: two_op.abs(),
            delta_al: phys.delta_al,
        });
    }
    let r = (two_op / phys.delta_al).atanh() / 4.0;
    let lambda_abc = phys.lambda_a_sigma * phys.wavenumber_k * phys.zpm;
    let delta_a_eff = (phys.delta_al * phys.delta_al - two_op * two_op).sqrt();
    let lambda_prime = -lambda_abc * (2.0 * r).sinh();
    Ok(EffectiveDerivation {
        r,
        lambda_abc,
        lambda_enhanced: lambda_abc * (2.0 * r).cosh(),
        lambda_prime,
        delta_a_eff,
        delta_sigma: phys.delta_sigma_l,
        rwa_ratio: lambda_prime.abs() / (delta_a_eff + phys.delta_sigma_l),
    })
}

pub fn build_h_eff(params: &ModelParams, space: HilbertSpace) -> Result<Operator> {
    params.validate()?;
    let a = ladder_operator(space, Mode::Photon);
    let b = ladder_operator(space, Mode::Phonon);
    let sigma = atom_operator(space, AtomOp::Lowering);
    let free = Operator::diagonal(space, |s| {
        let z = match s.atom {
            AtomLevel::Ground => -1.0,
            AtomLevel::Excited => 1.0,
        };
        params.delta_a * s.photons as f64
            + params.omega_b * s.phonons as f64
            + 0.5 * params.delta_sigma * z
    });
    let x_b = b.adjoint() + b;
    let hop = &a.adjoint() * &sigma;
    let hop = hop.adjoint() + hop;
    let coupling = (&hop * &x_b).scale(params.lambda);
    let drive = (sigma.adjoint() + sigma).scale(params.omega_drive);
    Ok(free + coupling + drive)
}

pub fn build_h_dressed(params: &ModelParams, space: HilbertSpace) -> Result<Operator> {
    params.validate()?;
    if params.delta_sigma != 0.0 {
        return Err(Error::DetunedAtom(params.delta_sigma));
    }
    let a = ladder_operator(space, Mode::Photon);
    let b = ladder_operator(space, Mode::Phonon);
    let sz = atom_operator(space, AtomOp::DressedSigmaZ);
    let st = atom_operator(space, AtomOp::DressedLowering);
    let free = number_operator(space, Mode::Photon).scale(params.delta_a)
        + number_operator(space, Mode::Phonon).scale(params.omega_b)
        + sz.scale(params.omega_drive);
    let x_a = a.adjoint() + a.clone();
    let p_a = a.adjoint() - a;
    let x_b = b.adjoint() + b;
    let even = &(&x_a * &x_b) * &sz;
    let odd = &(&p_a * &x_b) * &(st.adjoint() - st);
    Ok(free + (even + odd).scale(0.5 * params.lambda))
}

/// Drive amplitude at which `|0,0,+⟩` is degenerate with `|n_a,n_b,−⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResonanceDrive {
    pub omega: f64,
    /// `false` unless `n_a + n_b` is even and at least 2; odd-total targets
    /// sit in the other parity sector and never couple to `|0,0,+⟩`.
    pub parity_allowed: bool,
}

pub fn resonance_drive(n_a: i64, n_b: i64, params: &ModelParams) -> Result<ResonanceDrive> {
    if n_a < 0 || n_b < 0 {
        return Err(Error::InvalidParameter {
            name: "quanta",
            reason: format!("negative quanta ({n_a}, {n_b})"),
        });
    }
    let total = n_a + n_b;
    Ok(ResonanceDrive {
        omega: (n_a as f64 * params.delta_a + n_b as f64 * params.omega_b) / 2.0,
        parity_allowed: total >= 2 && total % 2 == 0,
    })
}

/// Driven-atom eigenbasis `|+⟩ = c₊|g⟩ + c₋|e⟩`, `|−⟩ = c₋|g⟩ − c₊|e⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DressedBasis {
    pub c_plus: f64,
    pub c_minus: f64,
    pub e_plus: f64,
    pub e_minus: f64,
}

pub fn dressed_basis(delta_sigma: f64, omega_drive: f64) -> Result<DressedBasis> {
    if !(omega_drive > 0.0) {
        return Err(Error::InvalidParameter {
            name: "omega_drive",
            reason: format!("dressed basis needs a positive drive, got {omega_drive}"),
        });
    }
    let root = (delta_sigma * delta_sigma + 4.0 * omega_drive * omega_drive).sqrt();
    let coef = |sign: f64| {
        (2.0 * omega_drive * omega_drive / (root * root + sign * delta_sigma * root)).sqrt()
    };
    // Take the branch whose denominator has no cancellation and close the
    // other through normalization.
    let (c_plus, c_minus) = if delta_sigma >= 0.0 {
        let cp = coef(1.0);
        (cp, (1.0 - cp * cp).sqrt())
    } else {
        let cm = coef(-1.0);
        ((1.0 - cm * cm).sqrt(), cm)
    };
    Ok(DressedBasis {
        c_plus,
        c_minus,
        e_plus: root / 2.0,
        e_minus: -root / 2.0,
    })
}

/// `Π = (−1)^{n_a + n_b}`.
pub fn boson_parity_operator(space: HilbertSpace) -> Operator {
    Operator::diagonal(space, |s| {
        if (s.photons + s.phonons) % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

/// Bare label `|n_a, n_b, ±⟩`: boson Fock numbers and a dressed atom state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BareLabel {
    pub photons: usize,
    pub phonons: usize,
    pub branch: Branch,
}

impl BareLabel {
    pub const fn new(photons: usize, phonons: usize, branch: Branch) -> Self {
        Self {
            photons,
            phonons,
            branch,
        }
    }

    pub const fn plus(photons: usize, phonons: usize) -> Self {
        Self::new(photons, phonons, Branch::Plus)
    }

    pub const fn minus(photons: usize, phonons: usize) -> Self {
        Self::new(photons, phonons, Branch::Minus)
    }

    pub fn parity_even(&self) -> bool {
        (self.photons + self.phonons) % 2 == 0
    }

    /// `n_a Δ_a + n_b ω_b ± Ω`.
    pub fn bare_energy(&self, params: &ModelParams) -> f64 {
        let s = match self.branch {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        };
        self.photons as f64 * params.delta_a
            + self.phonons as f64 * params.omega_b
            + s * params.omega_drive
    }

    pub fn state(&self, space: HilbertSpace) -> Result<StateVector> {
        let g = space.encode(BasisState::new(AtomLevel::Ground, self.photons, self.phonons));
        let e = space.encode(BasisState::new(AtomLevel::Excited, self.photons, self.phonons));
        let (Some(g), Some(e)) = (g, e) else {
            return Err(Error::UnknownLabel(self.to_string()));
        };
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let mut amps = vec![C64::new(0.0, 0.0); space.total_dim()];
        amps[g] = C64::new(r, 0.0);
        amps[e] = C64::new(
            match self.branch {
                Branch::Plus => r,
                Branch::Minus => -r,
            },
            0.0,
        );
        StateVector::from_amplitudes(space, amps)
    }

    /// Every label on the space, in basis order with `+` before `−`.
    pub fn all(space: HilbertSpace) -> Vec<BareLabel> {
        let mut out = Vec::with_capacity(space.total_dim());
        for na in 0..=space.photon_trunc() {
            for nb in 0..=space.phonon_trunc() {
                out.push(BareLabel::plus(na, nb));
                out.push(BareLabel::minus(na, nb));
            }
        }
        out
    }
}

/// `|⟨n_a n_b ±|ψ⟩|²` for every label at once, without building the label
/// states. Indexed by `2 * boson_index + (0 for +, 1 for −)`.
pub fn dressed_populations(space: HilbertSpace, amplitudes: &[C64]) -> Vec<f64> {
    let bd = space.boson_dim();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(2 * bd);
    for k in 0..bd {
        let g = amplitudes[k];
        let e = amplitudes[bd + k];
        out.push(((g + e) * r).norm_sqr());
        out.push(((g - e) * r).norm_sqr());
    }
    out
}

/// Position of `label` in the output of [`dressed_populations`].
pub fn dressed_index(space: HilbertSpace, label: &BareLabel) -> Option<usize> {
    if !space.contains(label.photons, label.phonons) {
        return None;
    }
    let k = label.photons * space.phonon_dim() + label.phonons;
    Some(
        2 * k
            + match label.branch {
                Branch::Plus => 0,
                Branch::Minus => 1,
            },
    )
}

impl fmt::Display for BareLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.branch {
            Branch::Plus => '+',
            Branch::Minus => '-',
        };
        write!(f, "({},{},{s})", self.photons, self.phonons)
    }
}

impl FromStr for BareLabel {
    type Err = Error;

    /// Accepts `"(1,1,-)"`, `"1,1,-"` and the compact `"11-"`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::UnknownLabel(s.to_string());
        let t = s.trim().trim_start_matches('(').trim_end_matches(')').trim();
        let sign = t.chars().last().ok_or_else(bad)?;
        let branch = match sign {
            '+' => Branch::Plus,
            '-' | '−' => Branch::Minus,
            _ => return Err(bad()),
        };
        let nums = t[..t.len() - sign.len_utf8()].trim_end().trim_end_matches(',');
        let parts: Vec<&str> = if nums.contains(',') {
            nums.split(',').map(str::trim).collect()
        } else if nums.len() == 2 {
            vec![&nums[..1], &nums[1..]]
        } else {
            return Err(bad());
        };
        if parts.len() != 2 {
            return Err(bad());
        }
        let photons = parts[0].parse().map_err(|_| bad())?;
        let phonons = parts[1].parse().map_err(|_| bad())?;
        Ok(BareLabel::new(photons, phonons, branch))
    }
}

impl Serialize for BareLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BareLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
