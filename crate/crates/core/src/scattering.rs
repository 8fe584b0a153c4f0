//! Reaction matrices, K-matrix and S-matrix of one Bloch channel.
//!
//! Mode ordering everywhere is `(B: ν ascending | T: ν ascending)`, so at the
//! Γ point with `ν ∈ {−1,0,1}` the propagating `ν = 0` block sits at
//! entries (1,1), (1,4), (4,1), (4,4).

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bloch::{asymptotic_band_energy, modes_for, BlochChannel, Continuation, ModeSet};
use crate::error::{BicError, Result};
use crate::linalg::{identity, solve_with_condition, CMat};
use crate::reaction::{Boundary, ChannelEigenBasis};
use crate::special::{alternating_inverse_square_tail, inverse_square_tail};

const POLE_GUARD: f64 = 1e-12;
const CONDITION_LIMIT: f64 = 1e14;

/// Which reaction-region states enter the reaction-matrix sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StateFilter {
    #[default]
    All,
    /// The `n` lowest states.
    Lowest(usize),
    /// States with `λ_j` below the ceiling.
    BelowCeiling(f64),
    /// An explicit list of state indices.
    Only(Vec<usize>),
}

impl StateFilter {
    pub fn selected(&self, basis: &ChannelEigenBasis) -> Vec<usize> {
        let count = basis.state_count();
        match self {
            StateFilter::All => (0..count).collect(),
            StateFilter::Lowest(n) => (0..(*n).min(count)).collect(),
            StateFilter::BelowCeiling(e) => (0..count).filter(|&j| basis.eigenvalues[j] < *e).collect(),
            StateFilter::Only(list) => list.iter().copied().filter(|&j| j < count).collect(),
        }
    }

    pub fn is_all(&self) -> bool {
        matches!(self, StateFilter::All)
    }
}

/// Options for the reaction-matrix sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionOptions {
    #[serde(default)]
    pub filter: StateFilter,
    /// Add the analytically summed `n > n_max` remainder to the mode-diagonal
    /// entries. Only applied when every state of a complete basis is kept.
    #[serde(default = "default_tail")]
    pub tail: bool,
}

fn default_tail() -> bool {
    true
}

impl Default for ReactionOptions {
    fn default() -> Self {
        Self {
            filter: StateFilter::All,
            tail: true,
        }
    }
}

impl ReactionOptions {
    pub fn truncated(filter: StateFilter) -> Self {
        Self { filter, tail: false }
    }
}

/// The four reaction-matrix blocks over a list of modes.
#[derive(Debug, Clone)]
pub struct ReactionBlocks {
    pub energy: Complex64,
    pub nus: Vec<i32>,
    pub bb: CMat,
    pub bt: CMat,
    pub tb: CMat,
    pub tt: CMat,
}

impl ReactionBlocks {
    pub fn block(&self, out: Boundary, inc: Boundary) -> &CMat {
        match (out, inc) {
            (Boundary::Bottom, Boundary::Bottom) => &self.bb,
            (Boundary::Bottom, Boundary::Top) => &self.bt,
            (Boundary::Top, Boundary::Bottom) => &self.tb,
            (Boundary::Top, Boundary::Top) => &self.tt,
        }
    }

    /// `[[R_BB, R_BT], [R_TB, R_TT]]`.
    pub fn full(&self) -> CMat {
        let n = self.nus.len();
        CMat::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
            (true, true) => self.bb[(i, j)],
            (true, false) => self.bt[(i, j - n)],
            (false, true) => self.tb[(i - n, j)],
            (false, false) => self.tt[(i - n, j - n)],
        })
    }
}

/// `R^{αα'}_{ν1ν2}(E) = ½ Σ_j Φ_{j,ν1}(z_α) Φ*_{j,ν2}(z_α') / (E − λ_j)`.
///
/// `ψ = −R·∂ₙψ` on the boundary, with `∂ₙ` the outward normal derivative.
pub fn reaction_matrix(
    basis: &ChannelEigenBasis,
    energy: Complex64,
    nus: &[i32],
    opts: &ReactionOptions,
) -> Result<ReactionBlocks> {
    let states = opts.filter.selected(basis);
    let n = nus.len();
    let mut blocks = [CMat::zeros(n, n), CMat::zeros(n, n), CMat::zeros(n, n), CMat::zeros(n, n)];
    let mut bottom = vec![Complex64::new(0.0, 0.0); n];
    let mut top = vec![Complex64::new(0.0, 0.0); n];
    for &j in &states {
        let lambda = basis.eigenvalues[j];
        let gap = energy - lambda;
        if gap.norm() < POLE_GUARD {
            return Err(BicError::PoleProximity {
                energy: energy.re,
                lambda,
                distance: gap.norm(),
            });
        }
        let weight = 0.5 / gap;
        for (i, &nu) in nus.iter().enumerate() {
            bottom[i] = basis.surface(j, nu, Boundary::Bottom);
            top[i] = basis.surface(j, nu, Boundary::Top);
        }
        for a in 0..n {
            let ba = bottom[a] * weight;
            let ta = top[a] * weight;
            for b in 0..n {
                let bb = bottom[b].conj();
                let tb = top[b].conj();
                blocks[0][(a, b)] += ba * bb;
                blocks[1][(a, b)] += ba * tb;
                blocks[2][(a, b)] += ta * bb;
                blocks[3][(a, b)] += ta * tb;
            }
        }
    }
    if opts.tail && opts.filter.is_all() && basis.complete {
        for (i, &nu) in nus.iter().enumerate() {
            if nu.unsigned_abs() as usize > basis.region.fourier_cutoff {
                continue;
            }
            let (same, cross) = series_tail(basis, energy, nu);
            blocks[0][(i, i)] += same;
            blocks[3][(i, i)] += same;
            blocks[1][(i, i)] += cross;
            blocks[2][(i, i)] += cross;
        }
    }
    let [bb, bt, tb, tt] = blocks;
    Ok(ReactionBlocks {
        energy,
        nus: nus.to_vec(),
        bb,
        bt,
        tb,
        tt,
    })
}

// Remainder of the mode-diagonal series over n > n_max, treating the potential
// there as its asymptotic diagonal value.
fn series_tail(basis: &ChannelEigenBasis, energy: Complex64, nu: i32) -> (Complex64, Complex64) {
    let l = basis.half_width();
    let shifted = energy - asymptotic_band_energy(basis.channel.momentum, nu, basis.half_cell) - basis.tail_shift(nu);
    let scale = 2.0 * l / PI;
    let y2 = shifted * (2.0 * scale * scale);
    let nmax = basis.region.transverse_cutoff;
    let pref = 4.0 * l / (PI * PI);
    // Σ_{n>N} s^n/(y² − n²) = −Σ_{n>N} s^n/(n² − y²)
    let same = -pref * inverse_square_tail(y2, nmax);
    let cross = -pref * alternating_inverse_square_tail(y2, nmax);
    (same, cross)
}

/// Reaction matrices, K-matrix and S-matrix at one energy.
#[derive(Debug, Clone)]
pub struct ScatteringBlocks {
    pub energy: Complex64,
    pub channel: BlochChannel,
    pub modes: ModeSet,
    pub reaction: ReactionBlocks,
    /// `√k·R·√k` over `(B, T)`.
    pub k_matrix: CMat,
    /// Full S over `(B, T)` including evanescent rows and columns.
    pub s_full: CMat,
    /// Indices into `s_full` of the propagating modes.
    pub propagating: Vec<usize>,
    /// `S` restricted to propagating modes.
    pub s_prop: CMat,
    /// 1-norm condition number of `1 + i𝒦`.
    pub condition: f64,
}

impl ScatteringBlocks {
    /// `(side, ν)` of row `i` of the full S-matrix.
    pub fn slot(&self, i: usize) -> (Boundary, i32) {
        let n = self.modes.len();
        if i < n {
            (Boundary::Bottom, self.modes.modes[i].nu)
        } else {
            (Boundary::Top, self.modes.modes[i - n].nu)
        }
    }

    /// `S[(out_side, out_ν), (in_side, in_ν)]`.
    pub fn amplitude(&self, out: (Boundary, i32), inc: (Boundary, i32)) -> Option<Complex64> {
        let row = self.index_of(out)?;
        let col = self.index_of(inc)?;
        Some(self.s_full[(row, col)])
    }

    fn index_of(&self, (side, nu): (Boundary, i32)) -> Option<usize> {
        let pos = self.modes.position(nu)?;
        Some(match side {
            Boundary::Bottom => pos,
            Boundary::Top => pos + self.modes.len(),
        })
    }
}

/// `S = −Ū⁻¹(1+i𝒦)⁻¹(1−i𝒦)Ū⁻¹` with `𝒦 = √k·R·√k`.
///
/// The outer phase factor is `e^{−ikL}` for propagating modes and `e^{ikL}`
/// for evanescent ones. On the real axis this is `Ū†`; off the axis it is the
/// analytic continuation of that.
pub fn s_matrix(basis: &ChannelEigenBasis, modes: &ModeSet, opts: &ReactionOptions) -> Result<ScatteringBlocks> {
    let nus = modes.nus();
    let reaction = reaction_matrix(basis, modes.energy, &nus, opts)?;
    s_matrix_from_reaction(basis, modes, reaction)
}

/// S-matrix from precomputed reaction blocks.
pub fn s_matrix_from_reaction(
    basis: &ChannelEigenBasis,
    modes: &ModeSet,
    reaction: ReactionBlocks,
) -> Result<ScatteringBlocks> {
    let n = modes.len();
    let l = basis.half_width();
    let r = reaction.full();
    let sqrt_k: Vec<Complex64> = (0..2 * n).map(|i| modes.modes[i % n].k.sqrt()).collect();
    let k_matrix = CMat::from_fn(2 * n, 2 * n, |i, j| sqrt_k[i] * r[(i, j)] * sqrt_k[j]);
    let i_unit = Complex64::new(0.0, 1.0);
    let id = identity(2 * n);
    let plus = CMat::from_fn(2 * n, 2 * n, |i, j| id[(i, j)] + i_unit * k_matrix[(i, j)]);
    let minus = CMat::from_fn(2 * n, 2 * n, |i, j| id[(i, j)] - i_unit * k_matrix[(i, j)]);
    let (core, condition) = solve_with_condition(&plus, &minus);
    if !condition.is_finite() || condition > CONDITION_LIMIT {
        return Err(BicError::SingularMatrix {
            energy: modes.energy.re,
            condition,
        });
    }
    let outer: Vec<Complex64> = (0..2 * n)
        .map(|i| {
            let m = &modes.modes[i % n];
            let sign = if m.propagating { -1.0 } else { 1.0 };
            (i_unit * m.k * (sign * l)).exp()
        })
        .collect();
    let s_full = CMat::from_fn(2 * n, 2 * n, |i, j| -outer[i] * core[(i, j)] * outer[j]);
    let propagating: Vec<usize> = (0..2 * n).filter(|&i| modes.modes[i % n].propagating).collect();
    let s_prop = CMat::from_fn(propagating.len(), propagating.len(), |i, j| {
        s_full[(propagating[i], propagating[j])]
    });
    Ok(ScatteringBlocks {
        energy: modes.energy,
        channel: modes.channel,
        modes: modes.clone(),
        reaction,
        k_matrix,
        s_full,
        propagating,
        s_prop,
        condition,
    })
}

/// Mode list for scattering at `energy`: every propagating ν plus
/// `evanescent_shells` closed modes beyond each end of the propagating range,
/// clipped to the basis cutoff. Below the lowest threshold the slowest
/// decaying mode is taken as the centre.
pub fn scattering_modes(
    energy: Complex64,
    channel: &BlochChannel,
    half_cell: f64,
    cutoff: usize,
    evanescent_shells: usize,
    continuation: Continuation,
) -> ModeSet {
    let c = cutoff as i32;
    let open: Vec<i32> = (-c..=c)
        .filter(|&nu| energy.re >= asymptotic_band_energy(channel.momentum, nu, half_cell))
        .collect();
    let (lo, hi) = match (open.first(), open.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => {
            let centre = (-c..=c)
                .min_by(|&a, &b| {
                    asymptotic_band_energy(channel.momentum, a, half_cell)
                        .total_cmp(&asymptotic_band_energy(channel.momentum, b, half_cell))
                })
                .unwrap_or(0);
            (centre, centre)
        }
    };
    let shells = evanescent_shells as i32;
    let nus: Vec<i32> = ((lo - shells).max(-c)..=(hi + shells).min(c)).collect();
    modes_for(energy, channel, &nus, half_cell, continuation)
}

/// S-matrices over a real energy grid, in parallel.
pub fn s_matrix_sweep(
    basis: &ChannelEigenBasis,
    energies: &[f64],
    evanescent_shells: usize,
    opts: &ReactionOptions,
) -> Vec<Result<ScatteringBlocks>> {
    energies
        .par_iter()
        .map(|&e| {
            let modes = scattering_modes(
                Complex64::new(e, 0.0),
                &basis.channel,
                basis.half_cell,
                basis.region.fourier_cutoff,
                evanescent_shells,
                Continuation::Physical,
            );
            s_matrix(basis, &modes, opts)
        })
        .collect()
}

/// `n` evenly spaced energies in `[lo, hi]`, each moved by `shift` away from
/// any `λ_j` closer than `shift`.
pub fn displaced_grid(lo: f64, hi: f64, n: usize, eigenvalues: &[f64], shift: f64) -> Vec<f64> {
    let step = if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
    (0..n)
        .map(|i| {
            let mut e = lo + step * i as f64;
            for &lambda in eigenvalues {
                if (e - lambda).abs() < shift {
                    e = if e >= lambda { lambda + shift } else { lambda - shift };
                }
            }
            e
        })
        .collect()
}

/// One entry of a reflection/transmission table.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledAmplitude {
    /// `R_{m0}` style label: `R` for same-side, `T` for opposite-side,
    /// outgoing mode first.
    pub label: String,
    pub out_side: Boundary,
    pub out_nu: i32,
    pub in_side: Boundary,
    pub in_nu: i32,
    pub value: Complex64,
}

/// Mode label: `0`, `m`/`p` for ∓1, `m2`/`p2` and so on beyond.
pub fn nu_label(nu: i32) -> String {
    match nu {
        0 => "0".into(),
        -1 => "m".into(),
        1 => "p".into(),
        n if n < 0 => format!("m{}", -n),
        n => format!("p{n}"),
    }
}

/// Amplitudes of the propagating block for waves incident from `from`.
pub fn reflection_coefficients(blocks: &ScatteringBlocks, from: Boundary) -> Vec<LabeledAmplitude> {
    let slots: Vec<(Boundary, i32)> = blocks.propagating.iter().map(|&i| blocks.slot(i)).collect();
    let mut out = Vec::new();
    for (c, &(in_side, in_nu)) in slots.iter().enumerate() {
        if in_side != from {
            continue;
        }
        for (r, &(out_side, out_nu)) in slots.iter().enumerate() {
            let kind = if out_side == in_side { "R" } else { "T" };
            out.push(LabeledAmplitude {
                label: format!("{kind}_{{{}{}}}", nu_label(out_nu), nu_label(in_nu)),
                out_side,
                out_nu,
                in_side,
                in_nu,
                value: blocks.s_prop[(r, c)],
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::RegionConfig;
    use crate::linalg::{norm_max, unitarity_defect};
    use crate::potential::LatticeConfig;
    use crate::reaction::solve_lattice_channel;

    fn region() -> RegionConfig {
        RegionConfig {
            half_width: 3.0,
            cell_count: 1,
            fourier_cutoff: 3,
            transverse_cutoff: 20,
        }
    }

    fn modes_at(e: f64, basis: &ChannelEigenBasis, shells: usize) -> ModeSet {
        scattering_modes(
            Complex64::new(e, 0.0),
            &basis.channel,
            1.0,
            basis.region.fourier_cutoff,
            shells,
            Continuation::Physical,
        )
    }

    #[test]
    fn free_space_transmits_perfectly() {
        let cfg = LatticeConfig {
            well_depth: 0.0,
            ..LatticeConfig::default()
        };
        for k in [0.0, 0.4, 1.1] {
            let basis = solve_lattice_channel(&cfg, &region(), &BlochChannel::from_momentum(k)).unwrap();
            for e in [0.37, 1.9, 7.3, 13.0] {
                let blocks = s_matrix(&basis, &modes_at(e, &basis, 1), &ReactionOptions::default()).unwrap();
                let np = blocks.propagating.len() / 2;
                for a in 0..blocks.propagating.len() {
                    for b in 0..blocks.propagating.len() {
                        let expect = if (a + np) % (2 * np) == b { 1.0 } else { 0.0 };
                        assert!(
                            (blocks.s_prop[(a, b)].norm() - expect).abs() < 1e-8,
                            "K={k} E={e} ({a},{b}) {}",
                            blocks.s_prop[(a, b)]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn propagating_block_is_unitary_and_symmetric() {
        let basis = solve_lattice_channel(&LatticeConfig::default(), &region(), &BlochChannel::gamma()).unwrap();
        for e in [0.3, 2.2, 5.9, 12.0, 18.5] {
            let blocks = s_matrix(&basis, &modes_at(e, &basis, 1), &ReactionOptions::default()).unwrap();
            assert!(unitarity_defect(&blocks.s_prop) < 1e-8);
            let asym = &blocks.s_full - blocks.s_full.transpose();
            assert!(norm_max(&asym) < 1e-8 * norm_max(&blocks.s_full).max(1.0));
        }
    }

    #[test]
    fn reciprocity_and_hermiticity_of_reaction_blocks() {
        let cfg = LatticeConfig::default().with_asymmetry(0.1);
        let basis = solve_lattice_channel(&cfg, &region(), &BlochChannel::from_momentum(0.7)).unwrap();
        let nus = [-1, 0, 1];
        let r = reaction_matrix(&basis, Complex64::new(1.234, 0.0), &nus, &ReactionOptions::default()).unwrap();
        let full = r.full();
        assert!(norm_max(&(&full - full.adjoint())) < 1e-10 * norm_max(&full));

        let even = solve_lattice_channel(&LatticeConfig::default(), &region(), &BlochChannel::gamma()).unwrap();
        let r = reaction_matrix(&even, Complex64::new(1.234, 0.0), &nus, &ReactionOptions::default()).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                assert!((r.bt[(a, b)] - r.tb[(b, a)]).norm() < 1e-12);
                assert!(r.bb[(a, b)].im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pole_proximity_is_reported() {
        let basis = solve_lattice_channel(&LatticeConfig::default(), &region(), &BlochChannel::gamma()).unwrap();
        let lambda = basis.eigenvalues[3];
        let err = reaction_matrix(&basis, Complex64::new(lambda, 0.0), &[0], &ReactionOptions::default());
        assert!(matches!(err, Err(BicError::PoleProximity { .. })));
    }

    #[test]
    fn distant_evanescent_modes_do_not_matter() {
        let reg = RegionConfig {
            half_width: 3.5,
            fourier_cutoff: 4,
            transverse_cutoff: 40,
            ..region()
        };
        let basis = solve_lattice_channel(&LatticeConfig::default(), &reg, &BlochChannel::gamma()).unwrap();
        let e = 0.1;
        let narrow = s_matrix(&basis, &modes_at(e, &basis, 3), &ReactionOptions::default()).unwrap();
        let wide = s_matrix(&basis, &modes_at(e, &basis, 4), &ReactionOptions::default()).unwrap();
        let q4 = ((4.0 * PI).powi(2) - 2.0 * e).sqrt();
        assert!(q4 * 3.5 > 40.0);
        let d = (narrow.s_prop[(0, 1)] - wide.s_prop[(0, 1)]).norm();
        assert!(d < 1e-10, "{d} {:?}", narrow.modes.nus());
        assert!((narrow.s_prop[(0, 0)] - wide.s_prop[(0, 0)]).norm() < 1e-10);
    }

    #[test]
    fn mode_window_matches_the_channel_counts() {
        let basis = solve_lattice_channel(&LatticeConfig::default(), &region(), &BlochChannel::gamma()).unwrap();
        let first = modes_at(2.0, &basis, 1);
        assert_eq!(first.nus(), vec![-1, 0, 1]);
        let second = modes_at(10.0, &basis, 1);
        assert_eq!(second.nus(), vec![-2, -1, 0, 1, 2]);
        assert_eq!(second.propagating_count(), 3);
        let blocks = s_matrix(&basis, &second, &ReactionOptions::default()).unwrap();
        assert_eq!(blocks.s_full.nrows(), 10);
        assert_eq!(blocks.s_prop.nrows(), 6);
    }

    #[test]
    fn labels_follow_mode_names() {
        let basis = solve_lattice_channel(&LatticeConfig::default(), &region(), &BlochChannel::gamma()).unwrap();
        let blocks = s_matrix(&basis, &modes_at(10.0, &basis, 1), &ReactionOptions::default()).unwrap();
        let table = reflection_coefficients(&blocks, Boundary::Bottom);
        assert_eq!(table.len(), 18);
        assert!(table.iter().any(|a| a.label == "R_{m0}"));
        assert!(table.iter().any(|a| a.label == "T_{pp}"));
        for a in &table {
            assert!(a.value.norm() <= 1.0 + 1e-8);
        }
    }

    #[test]
    fn grid_avoids_eigenvalues() {
        let g = displaced_grid(0.0, 1.0, 11, &[0.5, 0.7000000001], 1e-6);
        assert!((g[5] - 0.500001).abs() < 1e-12);
        assert!((g[7] - 0.7000000001 + 1e-6).abs() < 1e-12);
    }
}
