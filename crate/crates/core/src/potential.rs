//! The elliptic-theta lattice potential and its matrix elements in the
//! channel basis.
//!
//! The potential is a line of Gaussian wells along `x` (period `2a`) built from
//! ϑ₃, times a Gaussian profile in `z`, plus an optional second line of
//! strength `β` displaced to the irrational offsets `(a/√17, −a/√13)`:
//!
//! ```text
//! V(x,z) = −(U/2)·A·[ ϑ₃(πx/2a, q)·g(z) + β·ϑ₃(π(x−x₀)/2a, q)·g(z+z₀) ]
//! A = a/(√(2π)σ),  g(z) = exp(−z²/2σ²),  q = exp(−ε²π²/2a²)
//! ```

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bloch::RegionConfig;
use crate::error::{BicError, Result};
use crate::quad::GaussLegendre;

/// Physical parameters of the lattice potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeConfig {
    /// Well depth `U`.
    pub well_depth: f64,
    /// Width `ε` of the wells along `x`.
    pub theta_width: f64,
    /// Width `σ` of the Gaussian profile along `z`.
    pub gauss_width: f64,
    /// Half the unit cell, `a`.
    pub half_cell: f64,
    /// Strength `β` of the symmetry-breaking second line.
    pub asymmetry: f64,
    /// Number of `n ≥ 1` terms kept in the theta series.
    pub theta_truncation: usize,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self {
            well_depth: 30.0,
            theta_width: 0.4,
            gauss_width: 0.4,
            half_cell: 1.0,
            asymmetry: 0.0,
            theta_truncation: 12,
        }
    }
}

impl LatticeConfig {
    pub fn with_asymmetry(&self, beta: f64) -> Self {
        Self {
            asymmetry: beta,
            ..self.clone()
        }
    }

    /// Nome `q = exp(−ε²π²/2a²)` of the theta series.
    pub fn nome(&self) -> f64 {
        (-(self.theta_width * PI / self.half_cell).powi(2) / 2.0).exp()
    }

    pub fn offset_x(&self) -> f64 {
        self.half_cell * (1.0f64 / 17.0).sqrt()
    }

    pub fn offset_z(&self) -> f64 {
        self.half_cell * (1.0f64 / 13.0).sqrt()
    }

    /// Prefactor `(U/2)·a/(√(2π)σ)` shared by both lines.
    pub fn amplitude(&self) -> f64 {
        0.5 * self.well_depth * self.half_cell / ((2.0 * PI).sqrt() * self.gauss_width)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.well_depth >= 0.0 && self.well_depth.is_finite()) {
            return Err(BicError::InvalidConfig(format!(
                "well_depth must be non-negative, got {}",
                self.well_depth
            )));
        }
        let positive = [
            ("theta_width", self.theta_width),
            ("gauss_width", self.gauss_width),
            ("half_cell", self.half_cell),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(BicError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.asymmetry >= 0.0 && self.asymmetry.is_finite()) {
            return Err(BicError::InvalidConfig(format!(
                "asymmetry must be non-negative, got {}",
                self.asymmetry
            )));
        }
        let dropped = self.nome().powi(((self.theta_truncation + 1) * (self.theta_truncation + 1)) as i32);
        if dropped >= 1e-14 {
            return Err(BicError::InvalidConfig(format!(
                "theta_truncation {} leaves a first dropped term of {dropped:e}",
                self.theta_truncation
            )));
        }
        Ok(())
    }
}

/// ϑ₃(u, q) = 1 + 2 Σ_{n=1}^{terms} q^{n²} cos(2nu).
pub fn theta3(u: f64, q: f64, terms: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&q) {
        return Err(BicError::InvalidNome(q));
    }
    let mut sum = 0.0;
    for n in (1..=terms).rev() {
        let nf = n as f64;
        sum += q.powf(nf * nf) * (2.0 * nf * u).cos();
    }
    Ok(1.0 + 2.0 * sum)
}

/// V_β(x, z) for the lattice described by `cfg`.
pub fn potential_value(cfg: &LatticeConfig, x: f64, z: f64) -> f64 {
    let q = cfg.nome();
    let a = cfg.half_cell;
    let s2 = 2.0 * cfg.gauss_width * cfg.gauss_width;
    let main = theta3(PI * x / (2.0 * a), q, cfg.theta_truncation).expect("nome is below one");
    let mut v = main * (-z * z / s2).exp();
    if cfg.asymmetry != 0.0 {
        let shifted = theta3(PI * (x - cfg.offset_x()) / (2.0 * a), q, cfg.theta_truncation)
            .expect("nome is below one");
        let zc = z + cfg.offset_z();
        v += cfg.asymmetry * shifted * (-zc * zc / s2).exp();
    }
    -cfg.amplitude() * v
}

/// Transverse basis function ξ_n(z) on `[−L, L]` with zero slope at both ends.
pub fn xi(n: usize, z: f64, half_width: f64) -> f64 {
    if n == 0 {
        (0.5 / half_width).sqrt()
    } else {
        (1.0 / half_width).sqrt() * (n as f64 * PI * (z + half_width) / (2.0 * half_width)).cos()
    }
}

/// ξ_n(−L).
pub fn xi_bottom(n: usize, half_width: f64) -> f64 {
    if n == 0 {
        (0.5 / half_width).sqrt()
    } else {
        (1.0 / half_width).sqrt()
    }
}

/// ξ_n(+L) = (−1)^n ξ_n(−L).
pub fn xi_top(n: usize, half_width: f64) -> f64 {
    let b = xi_bottom(n, half_width);
    if n.is_multiple_of(2) {
        b
    } else {
        -b
    }
}

/// Overlaps `⟨ξ_{n1}| g(z − center) |ξ_{n2}⟩` over `[−L, L]` for all
/// `n1, n2 ≤ n_max`.
#[derive(Debug, Clone)]
pub struct GaussianOverlap {
    n_max: usize,
    values: Vec<f64>,
    /// Limit of the diagonal overlap for n → ∞, i.e. the mean of g over `[−L, L]`.
    pub asymptotic_diagonal: f64,
}

impl GaussianOverlap {
    pub fn new(center: f64, sigma: f64, half_width: f64, n_max: usize) -> Self {
        let cos_moments = cosine_moments(center, sigma, half_width, 2 * n_max);
        let mut values = vec![0.0; (n_max + 1) * (n_max + 1)];
        let norm = |n: usize| {
            if n == 0 {
                (0.5 / half_width).sqrt()
            } else {
                (1.0 / half_width).sqrt()
            }
        };
        for n1 in 0..=n_max {
            for n2 in 0..=n_max {
                let diff = n1.abs_diff(n2);
                let v = norm(n1) * norm(n2) * 0.5 * (cos_moments[diff] + cos_moments[n1 + n2]);
                values[n1 * (n_max + 1) + n2] = v;
            }
        }
        Self {
            n_max,
            values,
            asymptotic_diagonal: cos_moments[0] / (2.0 * half_width),
        }
    }

    pub fn get(&self, n1: usize, n2: usize) -> f64 {
        self.values[n1 * (self.n_max + 1) + n2]
    }
}

/// I_m = ∫_{−L}^{L} cos(mπ(z+L)/2L)·exp(−(z−c)²/2σ²) dz for m = 0..=m_max.
///
/// Composite Gauss-Legendre; panels are doubled until successive estimates
/// agree to 1e-13.
fn cosine_moments(center: f64, sigma: f64, half_width: f64, m_max: usize) -> Vec<f64> {
    let rule = GaussLegendre::new(20);
    let evaluate = |panels: usize| -> Vec<f64> {
        let points = rule.composite_points(-half_width, half_width, panels);
        let mut out = vec![0.0; m_max + 1];
        for (z, w) in points {
            let g = (-(z - center).powi(2) / (2.0 * sigma * sigma)).exp() * w;
            let theta = PI * (z + half_width) / (2.0 * half_width);
            // cos(mθ) by recurrence
            let (mut c_prev, mut c) = (theta.cos(), 1.0);
            let two_cos = 2.0 * theta.cos();
            for slot in out.iter_mut() {
                *slot += g * c;
                let next = two_cos * c - c_prev;
                c_prev = c;
                c = next;
            }
        }
        out
    };
    let oscillation = m_max as f64 * PI / (2.0 * half_width);
    let mut panels = ((2.0 * half_width) * (oscillation + 1.0 / sigma) / 4.0).ceil().max(4.0) as usize;
    let mut current = evaluate(panels);
    for _ in 0..8 {
        panels *= 2;
        let refined = evaluate(panels);
        let change = current
            .iter()
            .zip(&refined)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        current = refined;
        if change < 1e-13 {
            break;
        }
    }
    current
}

/// Source of potential matrix elements `⟨ν1,n1|V|ν2,n2⟩` in the channel basis.
///
/// Elements are independent of the Bloch momentum: the x-basis functions of a
/// channel share the factor `e^{iKx}`, which cancels in the overlap.
pub trait ChannelPotential: Sync {
    fn element(&self, nu1: i32, n1: usize, nu2: i32, n2: usize) -> Complex64;

    /// Diagonal element `⟨ν,n|V|ν,n⟩` in the limit `n → ∞`. Used to shift the
    /// analytically summed tail of the reaction-matrix series.
    fn asymptotic_shift(&self, nu: i32) -> f64;

    /// Whether every element is real.
    fn is_real(&self) -> bool;

    /// Whether `V(−x, z) = V(x, z)`.
    fn is_even_in_x(&self) -> bool;
}

/// Precomputed matrix elements of the theta lattice for one reaction region.
#[derive(Debug, Clone)]
pub struct LatticePotential {
    cfg: LatticeConfig,
    main: GaussianOverlap,
    shifted: Option<GaussianOverlap>,
}

impl LatticePotential {
    pub fn new(cfg: &LatticeConfig, region: &RegionConfig) -> Self {
        let main = GaussianOverlap::new(0.0, cfg.gauss_width, region.half_width, region.transverse_cutoff);
        let shifted = (cfg.asymmetry != 0.0).then(|| {
            GaussianOverlap::new(
                -cfg.offset_z(),
                cfg.gauss_width,
                region.half_width,
                region.transverse_cutoff,
            )
        });
        Self {
            cfg: cfg.clone(),
            main,
            shifted,
        }
    }

    pub fn config(&self) -> &LatticeConfig {
        &self.cfg
    }
}

impl ChannelPotential for LatticePotential {
    fn element(&self, nu1: i32, n1: usize, nu2: i32, n2: usize) -> Complex64 {
        let d = (nu1 - nu2) as f64;
        let coeff = self.cfg.nome().powf(d * d);
        let mut v = Complex64::new(coeff * self.main.get(n1, n2), 0.0);
        if let Some(shifted) = &self.shifted {
            let phase = Complex64::from_polar(1.0, -d * PI * self.cfg.offset_x() / self.cfg.half_cell);
            v += self.cfg.asymmetry * coeff * shifted.get(n1, n2) * phase;
        }
        -self.cfg.amplitude() * v
    }

    fn asymptotic_shift(&self, _nu: i32) -> f64 {
        let mut v = self.main.asymptotic_diagonal;
        if let Some(shifted) = &self.shifted {
            v += self.cfg.asymmetry * shifted.asymptotic_diagonal;
        }
        -self.cfg.amplitude() * v
    }

    fn is_real(&self) -> bool {
        self.shifted.is_none()
    }

    fn is_even_in_x(&self) -> bool {
        self.shifted.is_none()
    }
}

/// `⟨ν1,n1|V|ν2,n2⟩` for a single pair of basis states.
///
/// Builds the z-overlap tables from scratch; use [`LatticePotential`] when many
/// elements are needed.
pub fn channel_matrix_element(
    cfg: &LatticeConfig,
    region: &RegionConfig,
    nu1: i32,
    n1: usize,
    nu2: i32,
    n2: usize,
) -> Complex64 {
    let mut region = region.clone();
    region.transverse_cutoff = region.transverse_cutoff.max(n1).max(n2);
    LatticePotential::new(cfg, &region).element(nu1, n1, nu2, n2)
}
