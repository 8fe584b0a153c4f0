//! Channel kinematics: Bloch momenta, transverse-mode wavenumbers and the
//! propagating/evanescent split.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{BicError, Result};

/// Geometry and truncation of the reaction region `|z| ≤ L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionConfig {
    /// Half width `L` of the reaction region.
    pub half_width: f64,
    /// Number of cells `N` fixing the channel grid `K_ℓ = ℓπ/(Na)`.
    pub cell_count: usize,
    /// Fourier cutoff `M`: transverse modes `ν ∈ [−M, M]` in the basis.
    pub fourier_cutoff: usize,
    /// Transverse cutoff: `n ∈ [0, n_max]` for the zero-slope functions ξ_n.
    pub transverse_cutoff: usize,
}

impl Default for RegionConfig {
    fn default() -> Self {
        Self {
            half_width: 3.0,
            cell_count: 1,
            fourier_cutoff: 8,
            transverse_cutoff: 40,
        }
    }
}

impl RegionConfig {
    pub fn with_half_width(&self, half_width: f64) -> Self {
        Self {
            half_width,
            ..self.clone()
        }
    }

    /// One enrichment step: `M → M+2`, `n_max → n_max+10`.
    pub fn enriched(&self) -> Self {
        Self {
            fourier_cutoff: self.fourier_cutoff + 2,
            transverse_cutoff: self.transverse_cutoff + 10,
            ..self.clone()
        }
    }

    pub fn basis_size(&self) -> usize {
        (2 * self.fourier_cutoff + 1) * (self.transverse_cutoff + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(BicError::InvalidConfig(format!(
                "half_width must be positive, got {}",
                self.half_width
            )));
        }
        if self.cell_count < 1 || self.fourier_cutoff < 1 || self.transverse_cutoff < 1 {
            return Err(BicError::InvalidConfig(
                "cell_count, fourier_cutoff and transverse_cutoff must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// A Bloch channel with momentum `K` in `[0, π/a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochChannel {
    pub index: usize,
    pub momentum: f64,
}

impl BlochChannel {
    /// Channel `ℓ` of an `N`-cell ring: `K_ℓ = ℓπ/(Na)`.
    pub fn new(index: usize, cell_count: usize, half_cell: f64) -> Result<Self> {
        if index >= cell_count {
            return Err(BicError::InvalidConfig(format!(
                "channel index {index} must be below the cell count {cell_count}"
            )));
        }
        Ok(Self {
            index,
            momentum: index as f64 * PI / (cell_count as f64 * half_cell),
        })
    }

    pub fn gamma() -> Self {
        Self {
            index: 0,
            momentum: 0.0,
        }
    }

    /// A channel labelled only by its momentum.
    pub fn from_momentum(momentum: f64) -> Self {
        Self { index: 0, momentum }
    }

    pub fn is_gamma(&self) -> bool {
        self.momentum.abs() < 1e-14
    }

    /// `K + νπ/a`.
    pub fn transverse_momentum(&self, nu: i32, half_cell: f64) -> f64 {
        self.momentum + nu as f64 * PI / half_cell
    }
}

/// Branch of the z-wavenumber square root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sheet {
    /// `Im k ≥ 0`, and `Re k ≥ 0` on the real line.
    Physical,
    /// The negated root.
    Second,
}

/// `k^ℓ_ν(E) = √(2E − (K+νπ/a)²)` on the requested sheet.
pub fn mode_wavenumber(energy: Complex64, channel: &BlochChannel, nu: i32, half_cell: f64, sheet: Sheet) -> Complex64 {
    let kt = channel.transverse_momentum(nu, half_cell);
    let arg = 2.0 * energy - kt * kt;
    let mut k = arg.sqrt();
    if k.im < 0.0 || (k.im == 0.0 && k.re < 0.0) {
        k = -k;
    }
    match sheet {
        Sheet::Physical => k,
        Sheet::Second => -k,
    }
}

/// Threshold energy `½(K+νπ/a)²` where mode ν opens.
pub fn asymptotic_band_energy(momentum: f64, nu: i32, half_cell: f64) -> f64 {
    0.5 * (momentum + nu as f64 * PI / half_cell).powi(2)
}

/// One transverse mode at a given energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelMode {
    pub nu: i32,
    pub k: Complex64,
    pub propagating: bool,
}

impl ChannelMode {
    /// Decay rate `q` with `k = iq` for an evanescent mode on the real axis.
    pub fn decay_rate(&self) -> Option<f64> {
        (!self.propagating).then_some(self.k.im)
    }
}

/// How mode wavenumbers are continued off the real energy axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Continuation {
    /// Every mode on the physical sheet.
    #[default]
    Physical,
    /// Modes open at `Re E` on the second sheet, closed modes on the physical
    /// sheet. This is the sheet reached from the real axis of the window and
    /// is where quasibound poles live.
    Resonance,
}

/// Transverse modes `ν ∈ [−cutoff, cutoff]` of a channel at energy `E`,
/// ordered by ν ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet {
    pub energy: Complex64,
    pub channel: BlochChannel,
    pub modes: Vec<ChannelMode>,
}

impl ModeSet {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn propagating_count(&self) -> usize {
        self.modes.iter().filter(|m| m.propagating).count()
    }

    pub fn position(&self, nu: i32) -> Option<usize> {
        self.modes.iter().position(|m| m.nu == nu)
    }

    pub fn nus(&self) -> Vec<i32> {
        self.modes.iter().map(|m| m.nu).collect()
    }
}

/// Modes at real energy on the physical sheet.
pub fn enumerate_modes(energy: f64, channel: &BlochChannel, cutoff: usize, half_cell: f64) -> ModeSet {
    enumerate_modes_continued(Complex64::new(energy, 0.0), channel, cutoff, half_cell, Continuation::Physical)
}

/// Modes for an explicit list of ν values.
pub fn modes_for(
    energy: Complex64,
    channel: &BlochChannel,
    nus: &[i32],
    half_cell: f64,
    continuation: Continuation,
) -> ModeSet {
    let modes = nus
        .iter()
        .map(|&nu| {
            let threshold = asymptotic_band_energy(channel.momentum, nu, half_cell);
            let propagating = energy.re >= threshold;
            let mut k = mode_wavenumber(energy, channel, nu, half_cell, Sheet::Physical);
            if continuation == Continuation::Resonance && propagating && k.re < 0.0 {
                // below the axis the root continued from the positive real line
                // is the second-sheet one
                k = -k;
            }
            ChannelMode { nu, k, propagating }
        })
        .collect();
    ModeSet {
        energy,
        channel: *channel,
        modes,
    }
}

/// Modes `ν ∈ [−cutoff, cutoff]` with the chosen continuation.
pub fn enumerate_modes_continued(
    energy: Complex64,
    channel: &BlochChannel,
    cutoff: usize,
    half_cell: f64,
    continuation: Continuation,
) -> ModeSet {
    let c = cutoff as i32;
    let nus: Vec<i32> = (-c..=c).collect();
    modes_for(energy, channel, &nus, half_cell, continuation)
}

/// Band edges `(K, ν, E)` of the asymptotic region at `k_z = 0`.
pub fn band_edges(momenta: &[f64], nus: std::ops::RangeInclusive<i32>, half_cell: f64) -> Vec<(f64, i32, f64)> {
    let mut out = Vec::with_capacity(momenta.len() * nus.clone().count());
    for nu in nus {
        for &k in momenta {
            out.push((k, nu, asymptotic_band_energy(k, nu, half_cell)));
        }
    }
    out
}
