//! Truncated Fock space for atom ⊗ photon ⊗ phonon.
//!
//! Basis ordering is fixed: the atom index varies slowest and the phonon
//! number fastest, so
//!
//! ```text
//! index(atom, n_a, n_b) = atom * (N_a + 1) * (N_b + 1) + n_a * (N_b + 1) + n_b
//! ```
//!
//! with `atom = 0` for `|g⟩` and `atom = 1` for `|e⟩`. Output files and test
//! fixtures rely on this layout.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HilbertSpace {
    photon_trunc: usize,
    phonon_trunc: usize,
}

impl HilbertSpace {
    pub const ATOM_DIM: usize = 2;

    /// Fock levels `0..=photon_trunc` and `0..=phonon_trunc`.
    pub fn new(photon_trunc: usize, phonon_trunc: usize) -> Result<Self> {
        if photon_trunc == 0 || phonon_trunc == 0 {
            return Err(Error::InvalidTruncation {
                photon: photon_trunc,
                phonon: phonon_trunc,
            });
        }
        Ok(Self {
            photon_trunc,
            phonon_trunc,
        })
    }

    pub fn photon_trunc(&self) -> usize {
        self.photon_trunc
    }

    pub fn phonon_trunc(&self) -> usize {
        self.phonon_trunc
    }

    pub fn photon_dim(&self) -> usize {
        self.photon_trunc + 1
    }

    pub fn phonon_dim(&self) -> usize {
        self.phonon_trunc + 1
    }

    pub fn boson_dim(&self) -> usize {
        self.photon_dim() * self.phonon_dim()
    }

    pub fn total_dim(&self) -> usize {
        Self::ATOM_DIM * self.boson_dim()
    }

    /// Same layout with both truncations raised by `by`.
    pub fn enlarged(&self, by: usize) -> Self {
        Self {
            photon_trunc: self.photon_trunc + by,
            phonon_trunc: self.phonon_trunc + by,
        }
    }

    pub fn contains(&self, photons: usize, phonons: usize) -> bool {
        photons <= self.photon_trunc && phonons <= self.phonon_trunc
    }

    pub fn encode(&self, state: BasisState) -> Option<usize> {
        if !self.contains(state.photons, state.phonons) {
            return None;
        }
        Some(
            state.atom.index() * self.boson_dim()
                + state.photons * self.phonon_dim()
                + state.phonons,
        )
    }

    pub fn decode(&self, index: usize) -> Option<BasisState> {
        if index >= self.total_dim() {
            return None;
        }
        let atom = if index / self.boson_dim() == 0 {
            AtomLevel::Ground
        } else {
            AtomLevel::Excited
        };
        let rem = index % self.boson_dim();
        Some(BasisState {
            atom,
            photons: rem / self.phonon_dim(),
            phonons: rem % self.phonon_dim(),
        })
    }

    pub fn basis(&self) -> impl Iterator<Item = BasisState> + '_ {
        (0..self.total_dim()).map(move |i| self.decode(i).expect("index in range"))
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::SpaceMismatch)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AtomLevel {
    Ground,
    Excited,
}

impl AtomLevel {
    pub fn index(self) -> usize {
        match self {
            AtomLevel::Ground => 0,
            AtomLevel::Excited => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisState {
    pub atom: AtomLevel,
    pub photons: usize,
    pub phonons: usize,
}

impl BasisState {
    pub fn new(atom: AtomLevel, photons: usize, phonons: usize) -> Self {
        Self {
            atom,
            photons,
            phonons,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Photon,
    Phonon,
}

/// Single-atom operators. The dressed kinds use `|±⟩ = (|g⟩ ± |e⟩)/√2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtomOp {
    /// `σ = |g⟩⟨e|`
    Lowering,
    /// `σ_z = |e⟩⟨e| − |g⟩⟨g|`
    SigmaZ,
    /// `σ̃ = |−⟩⟨+|`
    DressedLowering,
    /// `σ̃_z = |+⟩⟨+| − |−⟩⟨−|`
    DressedSigmaZ,
}

impl AtomOp {
    /// Row-major 2×2 matrix in the `{|g⟩, |e⟩}` basis.
    fn matrix(self) -> [[f64; 2]; 2] {
        match self {
            AtomOp::Lowering => [[0.0, 1.0], [0.0, 0.0]],
            AtomOp::SigmaZ => [[-1.0, 0.0], [0.0, 1.0]],
            AtomOp::DressedLowering => [[0.5, 0.5], [-0.5, -0.5]],
            AtomOp::DressedSigmaZ => [[0.0, 1.0], [1.0, 0.0]],
        }
    }
}

/// Operator on a [`HilbertSpace`], stored sparse.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    space: HilbertSpace,
    matrix: CsrMatrix,
}

impl Operator {
    pub fn from_csr(space: HilbertSpace, matrix: CsrMatrix) -> Result<Self> {
        let n = space.total_dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: matrix.nrows().max(matrix.ncols()),
            });
        }
        Ok(Self { space, matrix })
    }

    pub fn zero(space: HilbertSpace) -> Self {
        let n = space.total_dim();
        Self {
            space,
            matrix: CsrMatrix::zeros(n, n),
        }
    }

    pub fn identity(space: HilbertSpace) -> Self {
        Self {
            space,
            matrix: CsrMatrix::identity(space.total_dim()),
        }
    }

    /// Diagonal operator with entries `f(basis state)`.
    pub fn diagonal(space: HilbertSpace, f: impl Fn(BasisState) -> f64) -> Self {
        let diag: Vec<C64> = space.basis().map(|s| C64::new(f(s), 0.0)).collect();
        Self {
            space,
            matrix: CsrMatrix::from_diagonal(&diag),
        }
    }

    pub fn space(&self) -> HilbertSpace {
        self.space
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.space.total_dim()
    }

    pub fn element(&self, row: BasisState, col: BasisState) -> C64 {
        match (self.space.encode(row), self.space.encode(col)) {
            (Some(i), Some(j)) => self.matrix.get(i, j),
            _ => C64::new(0.0, 0.0),
        }
    }

    pub fn adjoint(&self) -> Self {
        Self {
            space: self.space,
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.scale_complex(C64::new(s, 0.0))
    }

    pub fn scale_complex(&self, s: C64) -> Self {
        Self {
            space: self.space,
            matrix: self.matrix.scale(s),
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.space.check_same(&other.space)?;
        Ok(Self {
            space: self.space,
            matrix: self.matrix.add(&other.matrix),
        })
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.space.check_same(&other.space)?;
        Ok(Self {
            space: self.space,
            matrix: self.matrix.matmul(&other.matrix),
        })
    }

    pub fn commutator(&self, other: &Self) -> Result<Self> {
        Ok(self.try_mul(other)? - other.try_mul(self)?)
    }

    /// Largest entry of `|O − O†|`.
    pub fn hermiticity_deviation(&self) -> f64 {
        self.matrix.max_abs_diff(&self.matrix.adjoint())
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.max_abs()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.matrix.max_abs_diff(&other.matrix)
    }

    pub fn to_dense(&self) -> Mat<C64> {
        self.matrix.to_dense()
    }

    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        self.space.check_same(&state.space)?;
        Ok(StateVector {
            space: self.space,
            amplitudes: self.matrix.apply(&state.amplitudes),
        })
    }
}

impl Add for Operator {
    type Output = Operator;
    fn add(self, rhs: Operator) -> Operator {
        self.try_add(&rhs).expect("operators on different spaces")
    }
}

impl Sub for Operator {
    type Output = Operator;
    fn sub(self, rhs: Operator) -> Operator {
        self.try_add(&rhs.scale(-1.0))
            .expect("operators on different spaces")
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.try_mul(rhs).expect("operators on different spaces")
    }
}

/// Annihilation operator of one boson mode, identity on the other factors.
pub fn ladder_operator(space: HilbertSpace, mode: Mode) -> Operator {
    let mut trip = Vec::new();
    for (j, s) in space.basis().enumerate() {
        let (n, lowered) = match mode {
            Mode::Photon if s.photons > 0 => (
                s.photons,
                BasisState {
                    photons: s.photons - 1,
                    ..s
                },
            ),
            Mode::Phonon if s.phonons > 0 => (
                s.phonons,
                BasisState {
                    phonons: s.phonons - 1,
                    ..s
                },
            ),
            _ => continue,
        };
        let i = space.encode(lowered).expect("lowered state in range");
        trip.push((i, j, C64::new((n as f64).sqrt(), 0.0)));
    }
    let n = space.total_dim();
    Operator {
        space,
        matrix: CsrMatrix::from_triplets(n, n, trip),
    }
}

/// `a†a` or `b†b`.
pub fn number_operator(space: HilbertSpace, mode: Mode) -> Operator {
    Operator::diagonal(space, |s| match mode {
        Mode::Photon => s.photons as f64,
        Mode::Phonon => s.phonons as f64,
    })
}

pub fn atom_operator(space: HilbertSpace, kind: AtomOp) -> Operator {
    let m = kind.matrix();
    let bd = space.boson_dim();
    let mut trip = Vec::new();
    for (r, row) in m.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            if v != 0.0 {
                for k in 0..bd {
                    trip.push((r * bd + k, c * bd + k, C64::new(v, 0.0)));
                }
            }
        }
    }
    let n = space.total_dim();
    Operator {
        space,
        matrix: CsrMatrix::from_triplets(n, n, trip),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    space: HilbertSpace,
    amplitudes: Vec<C64>,
}

impl StateVector {
    pub fn from_amplitudes(space: HilbertSpace, amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != space.total_dim() {
            return Err(Error::DimensionMismatch {
                expected: space.total_dim(),
                got: amplitudes.len(),
            });
        }
        Ok(Self { space, amplitudes })
    }

    pub fn basis(space: HilbertSpace, state: BasisState) -> Result<Self> {
        let i = space.encode(state).ok_or_else(|| {
            Error::UnknownLabel(format!(
                "({:?}, {}, {})",
                state.atom, state.photons, state.phonons
            ))
        })?;
        let mut amplitudes = vec![C64::new(0.0, 0.0); space.total_dim()];
        amplitudes[i] = C64::new(1.0, 0.0);
        Ok(Self { space, amplitudes })
    }

    pub fn space(&self) -> HilbertSpace {
        self.space
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::InvalidParameter {
                name: "state",
                reason: format!("cannot normalize vector of norm {n}"),
            });
        }
        let inv = 1.0 / n;
        self.amplitudes.iter_mut().for_each(|a| *a *= inv);
        Ok(())
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        self.space.check_same(&other.space)?;
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn superpose(&self, a: C64, other: &StateVector, b: C64) -> Result<StateVector> {
        self.space.check_same(&other.space)?;
        Ok(StateVector {
            space: self.space,
            amplitudes: self
                .amplitudes
                .iter()
                .zip(&other.amplitudes)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        })
    }
}

/// Density matrix, stored as a dense column-major `n × n` array.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    space: HilbertSpace,
    data: Vec<C64>,
}

impl DensityMatrix {
    pub fn from_pure(psi: &StateVector) -> Self {
        let n = psi.space.total_dim();
        let a = &psi.amplitudes;
        let mut data = vec![C64::new(0.0, 0.0); n * n];
        for j in 0..n {
            for i in 0..n {
                data[j * n + i] = a[i] * a[j].conj();
            }
        }
        Self {
            space: psi.space,
            data,
        }
    }

    pub fn from_col_major(space: HilbertSpace, data: Vec<C64>) -> Result<Self> {
        let n = space.total_dim();
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: data.len(),
            });
        }
        Ok(Self { space, data })
    }

    /// Incoherent mixture `Σ p_k |ψ_k⟩⟨ψ_k|`.
    pub fn mixture(parts: &[(f64, StateVector)]) -> Result<Self> {
        let (_, first) = parts.first().ok_or(Error::EmptyEnsemble)?;
        let space = first.space;
        let n = space.total_dim();
        let mut data = vec![C64::new(0.0, 0.0); n * n];
        for (p, psi) in parts {
            space.check_same(&psi.space)?;
            let pure = DensityMatrix::from_pure(psi);
            for (d, v) in data.iter_mut().zip(pure.data) {
                *d += *p * v;
            }
        }
        Ok(Self { space, data })
    }

    pub fn space(&self) -> HilbertSpace {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.space.total_dim()
    }

    pub fn as_col_major(&self) -> &[C64] {
        &self.data
    }

    pub fn into_col_major(self) -> Vec<C64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.data[col * self.dim() + row]
    }

    pub fn trace(&self) -> C64 {
        let n = self.dim();
        (0..n).map(|i| self.data[i * n + i]).sum()
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        let n = self.dim();
        let mut m: f64 = 0.0;
        for j in 0..n {
            for i in 0..=j {
                m = m.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        m
    }

    pub fn to_dense(&self) -> Mat<C64> {
        let n = self.dim();
        Mat::from_fn(n, n, |i, j| self.get(i, j))
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let n = self.dim();
        let h = Mat::from_fn(n, n, |i, j| 0.5 * (self.get(i, j) + self.get(j, i).conj()));
        let ev = h
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|_| Error::EigenFailure)?;
        Ok(ev)
    }

    /// Diagonal element `⟨s|ρ|s⟩` for a basis state.
    pub fn population(&self, state: &StateVector) -> Result<f64> {
        self.space.check_same(&state.space)?;
        let n = self.dim();
        let a = state.amplitudes();
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..n {
            if a[j] == C64::new(0.0, 0.0) {
                continue;
            }
            for i in 0..n {
                acc += a[i].conj() * self.data[j * n + i] * a[j];
            }
        }
        Ok(acc.re)
    }
}

/// States an [`Operator`] can be averaged over.
pub trait Expectation {
    fn expectation_of(&self, op: &Operator) -> Result<C64>;
}

impl Expectation for StateVector {
    fn expectation_of(&self, op: &Operator) -> Result<C64> {
        op.space.check_same(&self.space)?;
        let a = &self.amplitudes;
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..a.len() {
            let mut row = C64::new(0.0, 0.0);
            for (j, v) in op.matrix.row(i) {
                row += v * a[j];
            }
            acc += a[i].conj() * row;
        }
        Ok(acc)
    }
}

impl Expectation for DensityMatrix {
    fn expectation_of(&self, op: &Operator) -> Result<C64> {
        op.space.check_same(&self.space)?;
        Ok(trace_product(&op.matrix, &self.data, self.dim()))
    }
}

/// `⟨ψ|O|ψ⟩` or `Tr[O ρ]`.
pub fn expectation<S: Expectation + ?Sized>(op: &Operator, state: &S) -> Result<C64> {
    state.expectation_of(op)
}

/// `Tr[A X]` for sparse `A` and column-major dense `X`.
pub(crate) fn trace_product(a: &CsrMatrix, x: &[C64], n: usize) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for (j, v) in a.row(i) {
            acc += v * x[i * n + j];
        }
    }
    acc
}

impl fmt::Display for BasisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = match self.atom {
            AtomLevel::Ground => 'g',
            AtomLevel::Excited => 'e',
        };
        write!(f, "|{a},{},{}⟩", self.photons, self.phonons)
    }
}
