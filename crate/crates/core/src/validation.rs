//! Independent oracles: the square-well reaction matrix in closed form and as
//! a series, and a real-space finite-difference eigensolver for the lattice.

use std::f64::consts::PI;

use faer::linalg::solvers::DenseSolveCore;
use faer::Scale;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bloch::{BlochChannel, RegionConfig};
use crate::error::{BicError, Result};
use crate::linalg::{hermitian_eigen, CMat};
use crate::potential::{potential_value, ChannelPotential, LatticeConfig};
use crate::reaction::{solve_channel, Parity};
use crate::scattering::{reaction_matrix, ReactionOptions};
use crate::special::{alternating_inverse_square_tail, inverse_square_tail};

/// `V(z) = −V₀` on `|z| ≤ L`, zero outside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SquareWellConfig {
    pub depth: f64,
    pub half_width: f64,
    pub series_terms: usize,
}

impl Default for SquareWellConfig {
    fn default() -> Self {
        Self {
            depth: 5.0,
            half_width: 3.0,
            series_terms: 10_000,
        }
    }
}

impl SquareWellConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.half_width > 0.0 && self.depth.is_finite()) {
            return Err(BicError::InvalidConfig("square well needs L > 0 and finite depth".into()));
        }
        Ok(())
    }

    /// `y = 2Lk₀/π` squared.
    fn y2(&self, energy: f64) -> f64 {
        let scale = 2.0 * self.half_width / PI;
        scale * scale * 2.0 * (energy + self.depth)
    }
}

/// `(R_BB, R_BT) = (cot(2Lk₀)/k₀, csc(2Lk₀)/k₀)` with `k₀ = √(2(E+V₀))`,
/// continued to `E < −V₀` through `k₀ = iκ`.
pub fn square_well_exact(energy: f64, cfg: &SquareWellConfig) -> Result<(f64, f64)> {
    cfg.validate()?;
    let k2 = 2.0 * (energy + cfg.depth);
    let two_l = 2.0 * cfg.half_width;
    if k2 > 0.0 {
        let k = k2.sqrt();
        let s = (two_l * k).sin();
        let n = (two_l * k / PI).round();
        if s.abs() < 1e-12 {
            return Err(BicError::PoleProximity {
                energy,
                lambda: 0.5 * (n * PI / two_l).powi(2) - cfg.depth,
                distance: s.abs(),
            });
        }
        Ok(((two_l * k).cos() / (s * k), 1.0 / (s * k)))
    } else if k2 < 0.0 {
        let kappa = (-k2).sqrt();
        let t = two_l * kappa;
        Ok((-1.0 / (t.tanh() * kappa), -1.0 / (t.sinh() * kappa)))
    } else {
        Err(BicError::PoleProximity {
            energy,
            lambda: -cfg.depth,
            distance: 0.0,
        })
    }
}

/// Partial sums of the eigenfunction series for the square well,
/// `R_BB = 2L/(π²y²) + (4L/π²) Σ_{n≥1} 1/(y²−n²)` and the alternating
/// counterpart for `R_BT`. With `accelerate` the remainder beyond
/// `series_terms` is added in closed form.
pub fn square_well_series(energy: f64, cfg: &SquareWellConfig, accelerate: bool) -> Result<(f64, f64)> {
    cfg.validate()?;
    if cfg.series_terms < 1 {
        return Err(BicError::InvalidConfig("series_terms must be at least 1".into()));
    }
    let l = cfg.half_width;
    let y2 = cfg.y2(energy);
    let pref = 4.0 * l / (PI * PI);
    let mut same = 0.0;
    let mut alt = 0.0;
    // summed from the small end so the result is reproducible term by term
    for n in (1..=cfg.series_terms).rev() {
        let nf = n as f64;
        let term = 1.0 / (y2 - nf * nf);
        same += term;
        alt += if n % 2 == 0 { term } else { -term };
    }
    if accelerate {
        let y2c = Complex64::new(y2, 0.0);
        same -= inverse_square_tail(y2c, cfg.series_terms).re;
        alt -= alternating_inverse_square_tail(y2c, cfg.series_terms).re;
    }
    let head = 2.0 * l / (PI * PI * y2);
    Ok((head + pref * same, head + pref * alt))
}

/// The square well as a channel potential: `−V₀` on the diagonal.
#[derive(Debug, Clone, Copy)]
pub struct SquareWellPotential {
    pub depth: f64,
}

impl ChannelPotential for SquareWellPotential {
    fn element(&self, nu1: i32, n1: usize, nu2: i32, n2: usize) -> Complex64 {
        if nu1 == nu2 && n1 == n2 {
            Complex64::new(-self.depth, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    }

    fn asymptotic_shift(&self, _nu: i32) -> f64 {
        -self.depth
    }

    fn is_real(&self) -> bool {
        true
    }

    fn is_even_in_x(&self) -> bool {
        true
    }
}

/// `(R_BB, R_BT)` of the `ν = 0` mode from the full reaction-region pipeline
/// applied to the z-only square well at the Γ point.
pub fn square_well_pipeline(energy: f64, cfg: &SquareWellConfig, transverse_cutoff: usize, opts: &ReactionOptions) -> Result<(f64, f64)> {
    cfg.validate()?;
    let region = RegionConfig {
        half_width: cfg.half_width,
        cell_count: 1,
        fourier_cutoff: 1,
        transverse_cutoff,
    };
    let pot = SquareWellPotential { depth: cfg.depth };
    let basis = solve_channel(&pot, &region, &BlochChannel::gamma(), 1.0, None)?;
    let r = reaction_matrix(&basis, Complex64::new(energy, 0.0), &[0], opts)?;
    Ok((r.bb[(0, 0)].re, r.bt[(0, 0)].re))
}

/// The lattice potential summed in real space over `2·images + 1` Gaussian
/// images per line, the Poisson dual of the theta series.
pub fn gaussian_comb_value(cfg: &LatticeConfig, x: f64, z: f64, images: usize) -> f64 {
    let a = cfg.half_cell;
    let eps = cfg.theta_width;
    let m = images as i64;
    let line = |x: f64| {
        let s: f64 = (-m..=m)
            .map(|i| {
                let d = x - 2.0 * i as f64 * a;
                (-d * d / (2.0 * eps * eps)).exp()
            })
            .sum();
        s * 2.0 * a / ((2.0 * PI).sqrt() * eps)
    };
    let s2 = 2.0 * cfg.gauss_width.powi(2);
    let mut v = line(x) * (-z * z / s2).exp();
    if cfg.asymmetry != 0.0 {
        let zc = z + cfg.offset_z();
        v += cfg.asymmetry * line(x - cfg.offset_x()) * (-zc * zc / s2).exp();
    }
    -cfg.amplitude() * v
}

/// Largest grid the finite-difference oracle accepts.
pub const FD_POINT_LIMIT: usize = 1_000_000;

/// One finite-difference level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdLevel {
    pub energy: f64,
    pub parity: Parity,
}

/// Real-space grid for one unit cell of the lattice.
struct FdGrid {
    nx: usize,
    nz: usize,
    hx: f64,
    hz: f64,
    /// `e^{2iKa}` across the cell boundary.
    bloch: Complex64,
    /// Potential plus z-kinetic diagonal, z-major.
    diagonal: Vec<f64>,
}

impl FdGrid {
    fn new(cfg: &LatticeConfig, momentum: f64, half_width: f64, h: f64) -> Result<Self> {
        let a = cfg.half_cell;
        let nx = ((2.0 * a / h).round() as usize).max(4);
        let nz = ((2.0 * half_width / h).round() as usize).max(4);
        let points = nx * nz;
        if points > FD_POINT_LIMIT {
            return Err(BicError::GridTooLarge {
                points,
                limit: FD_POINT_LIMIT,
            });
        }
        let hx = 2.0 * a / nx as f64;
        let hz = 2.0 * half_width / nz as f64;
        let mut diagonal = vec![0.0; points];
        for j in 0..nz {
            let z = -half_width + (j as f64 + 0.5) * hz;
            // zero slope at the faces through mirrored ghost cells
            let neighbours = if j == 0 || j == nz - 1 { 1.0 } else { 2.0 };
            for i in 0..nx {
                let x = -a + i as f64 * hx;
                diagonal[j * nx + i] =
                    potential_value(cfg, x, z) + 0.5 * neighbours / (hz * hz) + 1.0 / (hx * hx);
            }
        }
        Ok(Self {
            nx,
            nz,
            hx,
            hz,
            bloch: Complex64::from_polar(1.0, 2.0 * momentum * a),
            diagonal,
        })
    }

    fn coupling_z(&self) -> f64 {
        -0.5 / (self.hz * self.hz)
    }

    // diagonal block j of H − σ
    fn block(&self, j: usize, shift: f64) -> CMat {
        let nx = self.nx;
        let cx = Complex64::new(-0.5 / (self.hx * self.hx), 0.0);
        let mut m = CMat::zeros(nx, nx);
        for i in 0..nx {
            m[(i, i)] = Complex64::new(self.diagonal[j * nx + i] - shift, 0.0);
            let right = (i + 1) % nx;
            let left = (i + nx - 1) % nx;
            let phase_r = if i + 1 == nx { self.bloch } else { Complex64::new(1.0, 0.0) };
            let phase_l = if i == 0 { self.bloch.conj() } else { Complex64::new(1.0, 0.0) };
            m[(i, right)] += cx * phase_r;
            m[(i, left)] += cx * phase_l;
        }
        m
    }

    fn apply(&self, x: &[CMat]) -> Vec<CMat> {
        let c = Complex64::new(self.coupling_z(), 0.0);
        (0..self.nz)
            .map(|j| {
                let mut y = &self.block(j, 0.0) * &x[j];
                if j > 0 {
                    y += &x[j - 1] * Scale(c);
                }
                if j + 1 < self.nz {
                    y += &x[j + 1] * Scale(c);
                }
                y
            })
            .collect()
    }
}

// Block LU of the block-tridiagonal H − σ with scalar off-diagonal blocks.
struct ShiftInvert {
    c: Complex64,
    inverses: Vec<CMat>,
}

impl ShiftInvert {
    fn new(grid: &FdGrid, shift: f64) -> Result<Self> {
        let c = Complex64::new(grid.coupling_z(), 0.0);
        let mut inverses: Vec<CMat> = Vec::with_capacity(grid.nz);
        for j in 0..grid.nz {
            let mut d = grid.block(j, shift);
            if let Some(prev) = inverses.last() {
                d -= prev * Scale(c * c);
            }
            let inv = d.partial_piv_lu().inverse();
            if (0..inv.nrows()).any(|i| !inv[(i, i)].re.is_finite()) {
                return Err(BicError::Numerical(format!("shift {shift} hit a singular block")));
            }
            inverses.push(inv);
        }
        Ok(Self { c, inverses })
    }

    fn solve(&self, b: &[CMat]) -> Vec<CMat> {
        let n = b.len();
        let mut y: Vec<CMat> = Vec::with_capacity(n);
        for j in 0..n {
            let mut v = b[j].clone();
            if j > 0 {
                v -= (&self.inverses[j - 1] * &y[j - 1]) * Scale(self.c);
            }
            y.push(v);
        }
        let mut x: Vec<CMat> = vec![CMat::zeros(0, 0); n];
        for j in (0..n).rev() {
            let mut rhs = y[j].clone();
            if j + 1 < n {
                rhs -= &x[j + 1] * Scale(self.c);
            }
            x[j] = &self.inverses[j] * &rhs;
        }
        x
    }
}

fn inner(a: &[CMat], b: &[CMat]) -> CMat {
    let mut out = a[0].adjoint() * &b[0];
    for j in 1..a.len() {
        out += a[j].adjoint() * &b[j];
    }
    out
}

// Modified Gram-Schmidt over the columns of the block vector.
fn orthonormalize(x: &mut [CMat]) {
    let p = x[0].ncols();
    for k in 0..p {
        for m in 0..k {
            let mut dot = Complex64::new(0.0, 0.0);
            for blk in x.iter() {
                for i in 0..blk.nrows() {
                    dot += blk[(i, m)].conj() * blk[(i, k)];
                }
            }
            for blk in x.iter_mut() {
                for i in 0..blk.nrows() {
                    let v = blk[(i, m)];
                    blk[(i, k)] -= dot * v;
                }
            }
        }
        let norm: f64 = x
            .iter()
            .map(|blk| (0..blk.nrows()).map(|i| blk[(i, k)].norm_sqr()).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        for blk in x.iter_mut() {
            for i in 0..blk.nrows() {
                blk[(i, k)] /= norm;
            }
        }
    }
}

/// The `count` finite-difference levels of the reaction region nearest
/// `shift`, from the 5-point Laplacian on one cell with Bloch phase
/// `e^{2iKa}` in x and zero slope at `z = ±L`.
pub fn fd_eigen_oracle(
    cfg: &LatticeConfig,
    channel: &BlochChannel,
    half_width: f64,
    h: f64,
    shift: f64,
    count: usize,
) -> Result<Vec<FdLevel>> {
    cfg.validate()?;
    if !(h > 0.0) || count == 0 {
        return Err(BicError::InvalidConfig("grid spacing must be positive and count non-zero".into()));
    }
    let grid = FdGrid::new(cfg, channel.momentum, half_width, h)?;
    let solver = ShiftInvert::new(&grid, shift)?;
    let p = count + 6;
    let nx = grid.nx;
    let mut x: Vec<CMat> = (0..grid.nz)
        .map(|j| {
            CMat::from_fn(nx, p, |i, k| {
                let t = (j * nx + i) as f64;
                Complex64::new((0.37 * t * (k + 1) as f64 + 0.11 * k as f64).sin(), 0.0)
            })
        })
        .collect();
    orthonormalize(&mut x);
    let mut previous: Vec<f64> = vec![f64::INFINITY; count];
    let mut ritz = Vec::new();
    for _ in 0..200 {
        x = solver.solve(&x);
        orthonormalize(&mut x);
        let hx = grid.apply(&x);
        let small = inner(&x, &hx);
        let small = CMat::from_fn(p, p, |i, k| 0.5 * (small[(i, k)] + small[(k, i)].conj()));
        let (values, vectors) = hermitian_eigen(&small)?;
        x = x.iter().map(|blk| blk * &vectors).collect();
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| (values[a] - shift).abs().total_cmp(&(values[b] - shift).abs()));
        ritz = order[..count].iter().map(|&k| (values[k], k)).collect::<Vec<_>>();
        let current: Vec<f64> = ritz.iter().map(|r| r.0).collect();
        let change = current
            .iter()
            .zip(&previous)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        previous = current;
        if change < 1e-11 {
            break;
        }
    }
    let mirror = |i: usize| (nx - i) % nx;
    let mut levels: Vec<FdLevel> = ritz
        .iter()
        .map(|&(energy, k)| {
            let parity = if channel.is_gamma() && cfg.asymmetry == 0.0 {
                let mut overlap = Complex64::new(0.0, 0.0);
                for blk in &x {
                    for i in 0..nx {
                        overlap += blk[(i, k)].conj() * blk[(mirror(i), k)];
                    }
                }
                if overlap.re > 0.9 {
                    Parity::Even
                } else if overlap.re < -0.9 {
                    Parity::Odd
                } else {
                    Parity::None
                }
            } else {
                Parity::None
            };
            FdLevel { energy, parity }
        })
        .collect();
    levels.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    Ok(levels)
}

/// `(4E(h/2) − E(h))/3` for levels paired by order.
pub fn richardson(coarse: &[FdLevel], fine: &[FdLevel]) -> Vec<FdLevel> {
    coarse
        .iter()
        .zip(fine)
        .map(|(c, f)| FdLevel {
            energy: (4.0 * f.energy - c.energy) / 3.0,
            parity: f.parity,
        })
        .collect()
}

/// Richardson-extrapolated level of the given parity nearest `target`.
pub fn fd_level_near(
    cfg: &LatticeConfig,
    channel: &BlochChannel,
    half_width: f64,
    h: f64,
    target: f64,
    parity: Parity,
) -> Result<f64> {
    let coarse = fd_eigen_oracle(cfg, channel, half_width, h, target, 3)?;
    let fine = fd_eigen_oracle(cfg, channel, half_width, 0.5 * h, target, 3)?;
    let pick = |levels: &[FdLevel]| {
        levels
            .iter()
            .filter(|l| parity == Parity::None || l.parity == parity)
            .min_by(|a, b| (a.energy - target).abs().total_cmp(&(b.energy - target).abs()))
            .map(|l| l.energy)
    };
    match (pick(&coarse), pick(&fine)) {
        (Some(c), Some(f)) => Ok((4.0 * f - c) / 3.0),
        _ => Err(BicError::Numerical(format!(
            "no {} level near {target}",
            parity.label()
        ))),
    }
}
