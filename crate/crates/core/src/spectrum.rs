//! Eigenlevels of the dressed-frame Hamiltonian, drive scans and avoided
//! crossings.

use faer::{Mat, Side};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{HilbertSpace, Operator};
use crate::model::{build_h_dressed, dressed_index, dressed_populations, BareLabel, ModelParams};
use crate::C64;

/// Minimum squared overlap each hybridized eigenvector must keep with both
/// bare partners at a located anticrossing.
pub const HYBRIDIZATION_THRESHOLD: f64 = 0.4;

const HERMITIAN_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Eigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `k` is the eigenvector of `values[k]`.
    pub vectors: Mat<C64>,
}

impl Eigen {
    pub fn vector(&self, k: usize) -> Vec<C64> {
        (0..self.vectors.nrows()).map(|i| self.vectors[(i, k)]).collect()
    }
}

pub fn eigenlevels(h: &Operator) -> Result<Eigen> {
    let dev = h.hermiticity_deviation();
    if dev > HERMITIAN_TOL {
        return Err(Error::NotHermitian(dev));
    }
    let evd = h
        .to_dense()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::EigenFailure)?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let n = s.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[i].re.total_cmp(&s[j].re));
    Ok(Eigen {
        values: order.iter().map(|&k| s[k].re).collect(),
        vectors: Mat::from_fn(n, n, |i, j| u[(i, order[j])]),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelLabel {
    pub label: BareLabel,
    /// Squared overlap with the bare label state.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelScan {
    pub omega_grid: Vec<f64>,
    /// `levels[i][k] = E_k − E_0` at `omega_grid[i]`, ascending in `k`.
    pub levels: Vec<Vec<f64>>,
    pub labels: Vec<Vec<LevelLabel>>,
    /// `tracks[i][t]` is the level index at grid point `i` of the curve that
    /// starts as level `t` at the first grid point, followed by eigenvector
    /// overlap rather than energy order.
    pub tracks: Vec<Vec<usize>>,
}

impl LevelScan {
    pub fn n_levels(&self) -> usize {
        self.levels.first().map_or(0, Vec::len)
    }

    /// Energies of one tracked curve across the grid.
    pub fn track_energies(&self, t: usize) -> Vec<f64> {
        self.tracks
            .iter()
            .zip(&self.levels)
            .map(|(tr, lv)| lv[tr[t]])
            .collect()
    }
}

fn dominant_label(space: HilbertSpace, labels: &[BareLabel], amps: &[C64]) -> LevelLabel {
    let pops = dressed_populations(space, amps);
    let mut best = LevelLabel {
        label: labels[0],
        weight: -1.0,
    };
    for (l, &w) in labels.iter().zip(&pops) {
        if w > best.weight {
            best = LevelLabel { label: *l, weight: w };
        }
    }
    best
}

pub fn scan_drive(
    params: &ModelParams,
    space: HilbertSpace,
    omega_grid: &[f64],
    n_levels: usize,
) -> Result<LevelScan> {
    if omega_grid.is_empty() || omega_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter {
            name: "omega_grid",
            reason: "must be nonempty and strictly increasing".into(),
        });
    }
    if n_levels == 0 || n_levels > space.total_dim() {
        return Err(Error::InvalidParameter {
            name: "n_levels",
            reason: format!("must lie in 1..={}, got {n_levels}", space.total_dim()),
        });
    }
    let labels = BareLabel::all(space);
    let points: Vec<(Vec<f64>, Vec<LevelLabel>, Vec<Vec<C64>>)> = omega_grid
        .par_iter()
        .map(|&omega| {
            let h = build_h_dressed(&params.with_drive(omega), space)?;
            let eig = eigenlevels(&h)?;
            let e0 = eig.values[0];
            let vecs: Vec<Vec<C64>> = (0..n_levels).map(|k| eig.vector(k)).collect();
            let lv = eig.values[..n_levels].iter().map(|e| e - e0).collect();
            let lb = vecs.iter().map(|v| dominant_label(space, &labels, v)).collect();
            Ok((lv, lb, vecs))
        })
        .collect::<Result<_>>()?;

    let mut tracks = Vec::with_capacity(points.len());
    tracks.push((0..n_levels).collect::<Vec<_>>());
    for i in 1..points.len() {
        let prev = &tracks[i - 1];
        tracks.push(match_tracks(&points[i - 1].2, &points[i].2, prev));
    }

    let (levels, labels) = points.into_iter().map(|(l, b, _)| (l, b)).unzip();
    Ok(LevelScan {
        omega_grid: omega_grid.to_vec(),
        levels,
        labels,
        tracks,
    })
}

/// Greedy maximal-overlap assignment of the levels at the next grid point to
/// the running tracks.
fn match_tracks(prev: &[Vec<C64>], next: &[Vec<C64>], prev_tracks: &[usize]) -> Vec<usize> {
    let n = prev.len();
    let mut pairs = Vec::with_capacity(n * n);
    for (p, vp) in prev.iter().enumerate() {
        for (q, vq) in next.iter().enumerate() {
            let ov: C64 = vp.iter().zip(vq).map(|(a, b)| a.conj() * b).sum();
            pairs.push((ov.norm_sqr(), p, q));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut map = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    for (_, p, q) in pairs {
        if map[p] == usize::MAX && !taken[q] {
            map[p] = q;
            taken[q] = true;
        }
    }
    prev_tracks.iter().map(|&p| map[p]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Anticrossing {
    pub omega_star: f64,
    pub gap: f64,
    pub pair: (BareLabel, BareLabel),
    /// `overlaps[k][j]`: squared overlap of the `k`-th hybridized eigenvector
    /// (lower level first) with partner `j`.
    pub overlaps: [[f64; 2]; 2],
}

#[derive(Debug, Clone, Copy)]
struct PairLevels {
    gap: f64,
    overlaps: [[f64; 2]; 2],
}

fn pair_levels(
    params: &ModelParams,
    space: HilbertSpace,
    pair: (BareLabel, BareLabel),
    omega: f64,
) -> Result<PairLevels> {
    let ia = dressed_index(space, &pair.0).ok_or_else(|| Error::UnknownLabel(pair.0.to_string()))?;
    let ib = dressed_index(space, &pair.1).ok_or_else(|| Error::UnknownLabel(pair.1.to_string()))?;
    let h = build_h_dressed(&params.with_drive(omega), space)?;
    let eig = eigenlevels(&h)?;
    // The two eigenvectors carrying the most combined weight on the partners.
    let mut best: [(f64, usize, [f64; 2]); 2] = [(-1.0, 0, [0.0; 2]); 2];
    for k in 0..eig.values.len() {
        let pops = dressed_populations(space, &eig.vector(k));
        let w = [pops[ia], pops[ib]];
        let tot = w[0] + w[1];
        if tot > best[0].0 {
            best[1] = best[0];
            best[0] = (tot, k, w);
        } else if tot > best[1].0 {
            best[1] = (tot, k, w);
        }
    }
    let (lo, hi) = if best[0].1 < best[1].1 {
        (best[0], best[1])
    } else {
        (best[1], best[0])
    };
    Ok(PairLevels {
        gap: eig.values[hi.1] - eig.values[lo.1],
        overlaps: [lo.2, hi.2],
    })
}

/// Splitting of the two levels that carry the pair at drive `omega`.
pub fn pair_gap(
    params: &ModelParams,
    space: HilbertSpace,
    pair: (BareLabel, BareLabel),
    omega: f64,
) -> Result<f64> {
    Ok(pair_levels(params, space, pair, omega)?.gap)
}

/// Golden-section minimum of [`pair_gap`] over `bracket`; returns
/// `(omega, gap)` without any hybridization check, so it also finds exact
/// crossings.
pub fn minimize_pair_gap(
    params: &ModelParams,
    space: HilbertSpace,
    pair: (BareLabel, BareLabel),
    bracket: (f64, f64),
) -> Result<(f64, f64)> {
    let (mut a, mut b) = bracket;
    if !(a < b) {
        return Err(Error::InvalidParameter {
            name: "bracket",
            reason: format!("expected lo < hi, got ({a}, {b})"),
        });
    }
    let f = |x: f64| pair_gap(params, space, pair, x);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..200 {
        if b - a < 1e-12 * (1.0 + a.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, f(x)?))
}

pub fn locate_anticrossing(
    params: &ModelParams,
    space: HilbertSpace,
    pair: (BareLabel, BareLabel),
    bracket: (f64, f64),
) -> Result<Anticrossing> {
    let (omega_star, _) = minimize_pair_gap(params, space, pair, bracket)?;
    let edge = 1e-6 * (bracket.1 - bracket.0);
    if omega_star - bracket.0 < edge || bracket.1 - omega_star < edge {
        return Err(Error::NoMinimumInBracket {
            lo: bracket.0,
            hi: bracket.1,
            at: omega_star,
        });
    }
    let lv = pair_levels(params, space, pair, omega_star)?;
    let weakest = lv.overlaps.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    if weakest < HYBRIDIZATION_THRESHOLD {
        return Err(Error::TrackingLost {
            overlap: weakest,
            threshold: HYBRIDIZATION_THRESHOLD,
        });
    }
    Ok(Anticrossing {
        omega_star,
        gap: lv.gap,
        pair,
        overlaps: lv.overlaps,
    })
}
