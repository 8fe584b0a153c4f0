//! Reaction-region eigenproblem for a single Bloch channel.
//!
//! Inside `|z| ≤ L` the channel Hamiltonian is expanded in
//! `|ν,n⟩ = e^{i(K+νπ/a)x}/√(2a) · ξ_n(z)`, with ξ_n the zero-slope cosines.
//! Its eigenpairs give the reaction-region states; their values on the two
//! boundaries (surface amplitudes) are all the scattering module needs.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bloch::{BlochChannel, RegionConfig};
use crate::error::{BicError, Result};
use crate::linalg::{hermitian_eigen, CMat};
use crate::potential::{xi, xi_bottom, xi_top, ChannelPotential, LatticeConfig, LatticePotential};

/// Boundary of the reaction region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// `z = −L`
    Bottom,
    /// `z = +L`
    Top,
}

impl Boundary {
    pub const BOTH: [Boundary; 2] = [Boundary::Bottom, Boundary::Top];

    pub fn label(&self) -> &'static str {
        match self {
            Boundary::Bottom => "B",
            Boundary::Top => "T",
        }
    }
}

/// Reflection parity in `x` of a reaction-region state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
    None,
}

impl Parity {
    pub fn label(&self) -> &'static str {
        match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
            Parity::None => "none",
        }
    }
}

/// Eigenpairs and surface amplitudes of the reaction region for one channel.
#[derive(Debug, Clone)]
pub struct ChannelEigenBasis {
    pub channel: BlochChannel,
    pub half_cell: f64,
    pub region: RegionConfig,
    /// λ_j ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `j` holds `C^j_{ν,n}` in basis order (see [`ChannelEigenBasis::basis_index`]).
    coefficients: CMat,
    /// `Φ_{j,ν}(−L)`, state × mode.
    surface_bottom: CMat,
    /// `Φ_{j,ν}(+L)`, state × mode.
    surface_top: CMat,
    /// Asymptotic diagonal potential shift per ν, for the series tail.
    tail_shift: Vec<f64>,
    /// All eigenpairs of the truncated problem were kept.
    pub complete: bool,
    /// The potential is even in `x`.
    pub even_in_x: bool,
}

impl ChannelEigenBasis {
    pub fn state_count(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn fourier_cutoff(&self) -> i32 {
        self.region.fourier_cutoff as i32
    }

    pub fn half_width(&self) -> f64 {
        self.region.half_width
    }

    /// Position of `|ν,n⟩` in the basis: ν-major, ν ascending.
    pub fn basis_index(&self, nu: i32, n: usize) -> usize {
        basis_index(&self.region, nu, n)
    }

    pub fn coefficient(&self, j: usize, nu: i32, n: usize) -> Complex64 {
        self.coefficients[(self.basis_index(nu, n), j)]
    }

    pub fn coefficients(&self) -> &CMat {
        &self.coefficients
    }

    /// `Φ_{j,ν}(z_α)`; zero for ν outside the basis.
    pub fn surface(&self, j: usize, nu: i32, side: Boundary) -> Complex64 {
        let m = self.fourier_cutoff();
        if nu.abs() > m {
            return Complex64::new(0.0, 0.0);
        }
        let col = (nu + m) as usize;
        match side {
            Boundary::Bottom => self.surface_bottom[(j, col)],
            Boundary::Top => self.surface_top[(j, col)],
        }
    }

    pub fn tail_shift(&self, nu: i32) -> f64 {
        let m = self.fourier_cutoff();
        if nu.abs() > m {
            return 0.0;
        }
        self.tail_shift[(nu + m) as usize]
    }

    /// `⟨x,z|φ_j⟩`.
    pub fn wavefunction(&self, j: usize, x: f64, z: f64) -> Complex64 {
        let m = self.fourier_cutoff();
        let nmax = self.region.transverse_cutoff;
        let xis: Vec<f64> = (0..=nmax).map(|n| xi(n, z, self.half_width())).collect();
        let norm = 1.0 / (2.0 * self.half_cell).sqrt();
        let mut total = Complex64::new(0.0, 0.0);
        for nu in -m..=m {
            let mut zpart = Complex64::new(0.0, 0.0);
            for (n, &x_n) in xis.iter().enumerate() {
                zpart += self.coefficient(j, nu, n) * x_n;
            }
            let kx = self.channel.transverse_momentum(nu, self.half_cell);
            total += zpart * Complex64::from_polar(norm, kx * x);
        }
        total
    }

    /// ν-resolved transverse amplitudes `Σ_n C_{ν,n} ξ_n(z)` on `z_grid`,
    /// flattened ν-major. Points with `|z| > L` get zero.
    pub fn mode_amplitudes(&self, j: usize, z_grid: &[f64]) -> Vec<Complex64> {
        let m = self.fourier_cutoff();
        let nmax = self.region.transverse_cutoff;
        let l = self.half_width();
        let table: Vec<Option<Vec<f64>>> = z_grid
            .iter()
            .map(|&z| (z.abs() <= l).then(|| (0..=nmax).map(|n| xi(n, z, l)).collect()))
            .collect();
        let mut out = Vec::with_capacity((2 * m as usize + 1) * z_grid.len());
        for nu in -m..=m {
            let column: Vec<Complex64> = (0..=nmax).map(|n| self.coefficient(j, nu, n)).collect();
            for row in &table {
                let amp = match row {
                    Some(xs) => column.iter().zip(xs).map(|(c, &x_n)| c * x_n).sum(),
                    None => Complex64::new(0.0, 0.0),
                };
                out.push(amp);
            }
        }
        out
    }

    /// ν-resolved transverse density `|Σ_n C_{ν,n} ξ_n(z)|²` on `z_grid`,
    /// flattened ν-major.
    pub fn mode_density(&self, j: usize, z_grid: &[f64]) -> Vec<f64> {
        self.mode_amplitudes(j, z_grid).iter().map(|a| a.norm_sqr()).collect()
    }

    /// x-parity of state `j`, reported only where it is a good quantum number.
    pub fn parity(&self, j: usize, tolerance: f64) -> Parity {
        if !(self.even_in_x && self.channel.is_gamma()) {
            return Parity::None;
        }
        let col: Vec<Complex64> = (0..self.coefficients.nrows()).map(|i| self.coefficients[(i, j)]).collect();
        x_parity(&col, &self.region, tolerance)
    }

    /// Indices of states with `λ_j` in `[lo, hi)`.
    pub fn states_in(&self, lo: f64, hi: f64) -> Vec<usize> {
        self.eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, &l)| l >= lo && l < hi)
            .map(|(j, _)| j)
            .collect()
    }
}

fn basis_index(region: &RegionConfig, nu: i32, n: usize) -> usize {
    let m = region.fourier_cutoff as i32;
    debug_assert!(nu.abs() <= m && n <= region.transverse_cutoff);
    (nu + m) as usize * (region.transverse_cutoff + 1) + n
}

/// Channel Hamiltonian in the `|ν,n⟩` basis: kinetic diagonal
/// `½((K+νπ/a)² + (nπ/2L)²)` plus the potential block.
pub fn build_channel_hamiltonian(
    potential: &dyn ChannelPotential,
    region: &RegionConfig,
    channel: &BlochChannel,
    half_cell: f64,
) -> CMat {
    let m = region.fourier_cutoff as i32;
    let nmax = region.transverse_cutoff;
    let size = region.basis_size();
    let l = region.half_width;
    let mut h = CMat::zeros(size, size);
    for nu1 in -m..=m {
        for n1 in 0..=nmax {
            let row = basis_index(region, nu1, n1);
            for nu2 in -m..=m {
                for n2 in 0..=nmax {
                    let col = basis_index(region, nu2, n2);
                    if col < row {
                        continue;
                    }
                    let mut v = potential.element(nu1, n1, nu2, n2);
                    if row == col {
                        let kt = channel.transverse_momentum(nu1, half_cell);
                        let kz = n1 as f64 * PI / (2.0 * l);
                        v = Complex64::new(v.re + 0.5 * (kt * kt + kz * kz), 0.0);
                    }
                    h[(row, col)] = v;
                    h[(col, row)] = v.conj();
                }
            }
        }
    }
    h
}

/// Diagonalizes the channel Hamiltonian and computes surface amplitudes.
///
/// With `energy_ceiling = Some(e)` only states with `λ_j < e` are kept and the
/// basis is marked incomplete.
pub fn solve_channel(
    potential: &dyn ChannelPotential,
    region: &RegionConfig,
    channel: &BlochChannel,
    half_cell: f64,
    energy_ceiling: Option<f64>,
) -> Result<ChannelEigenBasis> {
    region.validate()?;
    let h = build_channel_hamiltonian(potential, region, channel, half_cell);
    let (values, mut vectors) = hermitian_eigen(&h)?;
    let size = h.nrows();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(BicError::EigenNonConvergence { size });
    }
    fix_phases(&mut vectors);

    let keep = match energy_ceiling {
        Some(ceiling) => values.iter().take_while(|&&v| v < ceiling).count(),
        None => values.len(),
    };
    let eigenvalues = values[..keep].to_vec();
    let coefficients = CMat::from_fn(size, keep, |i, j| vectors[(i, j)]);

    let m = region.fourier_cutoff as i32;
    let nmax = region.transverse_cutoff;
    let l = region.half_width;
    let modes = 2 * region.fourier_cutoff + 1;
    let mut surface_bottom = CMat::zeros(keep, modes);
    let mut surface_top = CMat::zeros(keep, modes);
    for j in 0..keep {
        for nu in -m..=m {
            let mut b = Complex64::new(0.0, 0.0);
            let mut t = Complex64::new(0.0, 0.0);
            for n in 0..=nmax {
                let c = coefficients[(basis_index(region, nu, n), j)];
                b += c * xi_bottom(n, l);
                t += c * xi_top(n, l);
            }
            let col = (nu + m) as usize;
            surface_bottom[(j, col)] = b;
            surface_top[(j, col)] = t;
        }
    }
    let tail_shift = (-m..=m).map(|nu| potential.asymptotic_shift(nu)).collect();

    Ok(ChannelEigenBasis {
        channel: *channel,
        half_cell,
        region: region.clone(),
        eigenvalues,
        coefficients,
        surface_bottom,
        surface_top,
        tail_shift,
        complete: keep == size,
        even_in_x: potential.is_even_in_x(),
    })
}

/// Solves one channel of the theta lattice.
pub fn solve_lattice_channel(
    cfg: &LatticeConfig,
    region: &RegionConfig,
    channel: &BlochChannel,
) -> Result<ChannelEigenBasis> {
    cfg.validate()?;
    let pot = LatticePotential::new(cfg, region);
    solve_channel(&pot, region, channel, cfg.half_cell, None)
}

// Global phase: the largest-magnitude coefficient is made real and positive.
fn fix_phases(vectors: &mut CMat) {
    for j in 0..vectors.ncols() {
        let mut best = 0;
        let mut best_norm = -1.0;
        for i in 0..vectors.nrows() {
            let v = vectors[(i, j)].norm();
            // ties resolved toward the lowest index for determinism
            if v > best_norm * (1.0 + 1e-12) {
                best_norm = v;
                best = i;
            }
        }
        let pivot = vectors[(best, j)];
        if best_norm <= 0.0 {
            continue;
        }
        let phase = pivot.conj() / pivot.norm();
        for i in 0..vectors.nrows() {
            vectors[(i, j)] *= phase;
        }
    }
}

/// Classifies coefficients as odd (`C_{ν,n} = −C_{−ν,n}`), even
/// (`C_{ν,n} = C_{−ν,n}`) or neither, relative to `tolerance`.
pub fn x_parity(coefficients: &[Complex64], region: &RegionConfig, tolerance: f64) -> Parity {
    let m = region.fourier_cutoff as i32;
    let nmax = region.transverse_cutoff;
    let mut sym = 0.0;
    let mut anti = 0.0;
    let mut total = 0.0;
    for nu in -m..=m {
        for n in 0..=nmax {
            let c = coefficients[basis_index(region, nu, n)];
            let mirror = coefficients[basis_index(region, -nu, n)];
            sym += (c + mirror).norm_sqr();
            anti += (c - mirror).norm_sqr();
            total += 2.0 * c.norm_sqr();
        }
    }
    if total == 0.0 {
        return Parity::None;
    }
    if (sym / total).sqrt() < tolerance {
        Parity::Odd
    } else if (anti / total).sqrt() < tolerance {
        Parity::Even
    } else {
        Parity::None
    }
}

/// Localized-vs-extended classification of a channel's states over an L sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateTag {
    /// Index of the state at the reference half width.
    pub j: usize,
    pub localized: bool,
    pub parity: Parity,
    pub energy: f64,
    /// Largest `|ΔE/ΔL|` seen along the track, or `None` when tracking was lost.
    pub max_slope: Option<f64>,
    /// The track stayed below the slope threshold.
    pub flat: bool,
    /// Fraction of the state's weight inside `|z| < core_half_width` at the
    /// reference half width.
    pub core_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyOptions {
    /// `|dE/dL|` below which a tracked state counts as localized.
    pub slope_threshold: f64,
    /// Smallest projected weight accepted when continuing a track.
    pub min_overlap: f64,
    /// Candidates at neighbouring L are searched this far from the current energy.
    pub energy_margin: f64,
    /// Relative tolerance for the parity test.
    pub parity_tolerance: f64,
    /// Points in the common z grid used for the overlaps.
    pub overlap_points: usize,
    /// Half width of the core region around the lattice line.
    pub core_half_width: f64,
    /// Core weight at or above which a state counts as localized even when its
    /// level hybridizes with box states across the sweep.
    pub core_threshold: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            slope_threshold: 0.1,
            min_overlap: 0.5,
            energy_margin: 1.0,
            parity_tolerance: 1e-6,
            overlap_points: 480,
            core_half_width: 1.5,
            core_threshold: 0.75,
        }
    }
}

/// Result of an L sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LSweep {
    pub half_widths: Vec<f64>,
    /// Eigenvalues inside the window at every half width.
    pub levels: Vec<Vec<f64>>,
    /// Tags of the states at the reference half width.
    pub tags: Vec<StateTag>,
    /// Energies along each tag's track (aligned with `half_widths`).
    pub tracks: Vec<Vec<Option<f64>>>,
    pub reference: usize,
    /// Tracks that were lost, with the half width and best overlap.
    pub diagnostics: Vec<String>,
}

impl LSweep {
    pub fn localized(&self) -> Vec<&StateTag> {
        self.tags.iter().filter(|t| t.localized).collect()
    }
}

/// Solves the channel at every half width in `half_widths`, tracks each state
/// of the reference half width through the sweep by overlap of ν-resolved
/// transverse wavefunctions, and tags it localized when its energy never
/// moves faster than `slope_threshold` per unit L or when most of its weight
/// sits within `core_half_width` of the lattice line.
pub fn classify_states(
    cfg: &LatticeConfig,
    region: &RegionConfig,
    channel: &BlochChannel,
    half_widths: &[f64],
    window: (f64, f64),
    reference: usize,
    opts: &ClassifyOptions,
) -> Result<LSweep> {
    if half_widths.len() < 3 {
        return Err(BicError::InvalidConfig("an L sweep needs at least three half widths".into()));
    }
    if reference >= half_widths.len() {
        return Err(BicError::InvalidConfig("reference index outside the L grid".into()));
    }
    let bases: Vec<ChannelEigenBasis> = half_widths
        .par_iter()
        .map(|&l| solve_lattice_channel(cfg, &region.with_half_width(l), channel))
        .collect::<Result<_>>()?;
    Ok(classify_bases(&bases, window, reference, opts))
}

/// Classification over already-solved bases (one per half width).
///
/// Each state of the reference half width is followed outward one step at a
/// time. At every step the carried transverse wavefunction (extended by zero
/// beyond its own L) is projected onto the same-parity states of the next
/// half width lying within `energy_margin` of the current energy; the
/// projection becomes the carried state and its weight-averaged energy the
/// track value. A localized state keeps its energy through avoided crossings
/// with the box states, which is what a slope test on the bare levels misses.
pub fn classify_bases(
    bases: &[ChannelEigenBasis],
    window: (f64, f64),
    reference: usize,
    opts: &ClassifyOptions,
) -> LSweep {
    let half_widths: Vec<f64> = bases.iter().map(|b| b.half_width()).collect();
    let l_max = half_widths.iter().cloned().fold(0.0, f64::max);
    let npts = opts.overlap_points.max(8);
    let z_grid: Vec<f64> = (0..npts)
        .map(|i| -l_max + 2.0 * l_max * (i as f64 + 0.5) / npts as f64)
        .collect();

    let candidates: Vec<Vec<usize>> = bases
        .iter()
        .map(|b| b.states_in(window.0 - opts.energy_margin, window.1 + opts.energy_margin))
        .collect();
    let amplitudes: Vec<Vec<Vec<Complex64>>> = bases
        .par_iter()
        .zip(&candidates)
        .map(|(b, cands)| cands.iter().map(|&j| normalized(b.mode_amplitudes(j, &z_grid))).collect())
        .collect();
    let parities: Vec<Vec<Parity>> = bases
        .iter()
        .zip(&candidates)
        .map(|(b, cands)| cands.iter().map(|&j| b.parity(j, opts.parity_tolerance)).collect())
        .collect();
    let levels = bases
        .iter()
        .map(|b| b.states_in(window.0, window.1).iter().map(|&j| b.eigenvalues[j]).collect())
        .collect();

    let mut tags = Vec::new();
    let mut tracks = Vec::new();
    let mut diagnostics = Vec::new();
    let ref_basis = &bases[reference];
    for (slot, &j) in candidates[reference].iter().enumerate() {
        let energy = ref_basis.eigenvalues[j];
        if energy < window.0 || energy >= window.1 {
            continue;
        }
        let parity = parities[reference][slot];
        let mut track = vec![None; bases.len()];
        track[reference] = Some(energy);
        let mut lost = false;
        for direction in [1isize, -1] {
            let mut carried = amplitudes[reference][slot].clone();
            let mut current = energy;
            let mut idx = reference as isize;
            loop {
                let next = idx + direction;
                if next < 0 || next as usize >= bases.len() {
                    break;
                }
                let next_u = next as usize;
                let basis = &bases[next_u];
                let mut projected = vec![Complex64::new(0.0, 0.0); carried.len()];
                let mut weight = 0.0;
                let mut centroid = 0.0;
                for (cand_slot, amp) in amplitudes[next_u].iter().enumerate() {
                    let e = basis.eigenvalues[candidates[next_u][cand_slot]];
                    if (e - current).abs() > opts.energy_margin
                        || (parity != Parity::None && parities[next_u][cand_slot] != parity)
                    {
                        continue;
                    }
                    let c: Complex64 = amp.iter().zip(&carried).map(|(a, b)| a.conj() * b).sum();
                    let p = c.norm_sqr();
                    weight += p;
                    centroid += p * e;
                    for (out, a) in projected.iter_mut().zip(amp) {
                        *out += c * a;
                    }
                }
                if weight < opts.min_overlap {
                    diagnostics.push(format!(
                        "state {j} (E = {energy:.6}) lost at L = {}: captured weight {:.3}",
                        half_widths[next_u], weight
                    ));
                    lost = true;
                    break;
                }
                current = centroid / weight;
                carried = normalized(projected);
                track[next_u] = Some(current);
                idx = next;
            }
        }
        let max_slope = if lost {
            None
        } else {
            let mut worst = 0.0f64;
            for i in 0..bases.len() - 1 {
                if let (Some(e0), Some(e1)) = (track[i], track[i + 1]) {
                    let dl = half_widths[i + 1] - half_widths[i];
                    worst = worst.max(((e1 - e0) / dl).abs());
                }
            }
            Some(worst)
        };
        let flat = matches!(max_slope, Some(s) if s < opts.slope_threshold);
        let core_weight = core_weight(ref_basis, j, opts);
        tags.push(StateTag {
            j,
            localized: flat || core_weight >= opts.core_threshold,
            parity,
            energy,
            max_slope,
            flat,
            core_weight,
        });
        tracks.push(track);
    }
    LSweep {
        half_widths,
        levels,
        tags,
        tracks,
        reference,
        diagnostics,
    }
}

fn core_weight(basis: &ChannelEigenBasis, j: usize, opts: &ClassifyOptions) -> f64 {
    let l = basis.half_width();
    let npts = opts.overlap_points.max(8);
    let z_grid: Vec<f64> = (0..npts).map(|i| -l + 2.0 * l * (i as f64 + 0.5) / npts as f64).collect();
    let density = basis.mode_density(j, &z_grid);
    let (mut core, mut total) = (0.0, 0.0);
    for (k, d) in density.iter().enumerate() {
        total += d;
        if z_grid[k % npts].abs() < opts.core_half_width {
            core += d;
        }
    }
    if total > 0.0 {
        core / total
    } else {
        0.0
    }
}

fn normalized(mut v: Vec<Complex64>) -> Vec<Complex64> {
    let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}
