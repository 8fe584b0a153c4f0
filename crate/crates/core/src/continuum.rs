//! Bound states in the continuum and quasibound poles.
//!
//! BICs of a channel with momentum `K` are the zeros of `det H_bd(E)` below the
//! light line `E < K²/2`, where only evanescent modes exist. Quasibound states
//! are zeros of `det(1 + i𝒦(E))` continued to the resonance sheet, located by
//! the argument principle and polished with Muller's method.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bloch::{asymptotic_band_energy, modes_for, BlochChannel, Continuation, RegionConfig};
use crate::error::{BicError, Result};
use crate::linalg::{determinant, CMat};
use crate::potential::LatticeConfig;
use crate::reaction::{solve_lattice_channel, Boundary, ChannelEigenBasis};
use crate::scattering::{reaction_matrix, s_matrix, scattering_modes, ReactionOptions};

/// The 2×2 bound-state matrix for the `ν = 0` evanescent mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundStateMatrix {
    pub energy: f64,
    pub momentum: f64,
    /// Decay rate `q₀ = √(K² − 2E)`.
    pub decay: f64,
    pub matrix: [[Complex64; 2]; 2],
    pub det: Complex64,
}

/// `det [[1 − q₀R^{BB}₀₀, −q₀R^{BT}₀₀], [−q₀R^{TB}₀₀, 1 − q₀R^{TT}₀₀]]`.
///
/// With `ψ = −R·∂ₙψ` and a decaying exterior `∂ₙψ = −q₀ψ` on both faces,
/// a bound state needs `(1 − q₀R)ψ = 0`.
pub fn bound_state_matrix(basis: &ChannelEigenBasis, energy: f64, opts: &ReactionOptions) -> Result<BoundStateMatrix> {
    let momentum = basis.channel.momentum;
    let threshold = asymptotic_band_energy(momentum, 0, basis.half_cell);
    if energy >= threshold {
        return Err(BicError::OutsideEvanescentDomain { energy, threshold });
    }
    let q = (2.0 * (threshold - energy)).sqrt();
    let r = reaction_matrix(basis, Complex64::new(energy, 0.0), &[0], opts)?;
    let one = Complex64::new(1.0, 0.0);
    let matrix = [
        [one - q * r.bb[(0, 0)], -q * r.bt[(0, 0)]],
        [-q * r.tb[(0, 0)], one - q * r.tt[(0, 0)]],
    ];
    let det = matrix[0][0] * matrix[1][1] - matrix[0][1] * matrix[1][0];
    Ok(BoundStateMatrix {
        energy,
        momentum,
        decay: q,
        matrix,
        det,
    })
}

/// Real part of `det H_bd`, which is real on the real axis.
pub fn det_hbd(basis: &ChannelEigenBasis, energy: f64, opts: &ReactionOptions) -> Result<f64> {
    Ok(bound_state_matrix(basis, energy, opts)?.det.re)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BicRoot {
    pub momentum: f64,
    pub energy: f64,
    /// `|det H_bd|` at the returned energy.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct BicScan {
    pub momentum: f64,
    /// `(E, det H_bd)` on the scan grid.
    pub samples: Vec<(f64, f64)>,
    pub roots: Vec<BicRoot>,
}

const BISECTION_TOL: f64 = 1e-8;
const GRID_NUDGE: f64 = 1e-9;

/// Brackets sign changes of `det H_bd` on a uniform grid over `range` and
/// bisects each to `|ΔE| < 10⁻⁸`.
///
/// The determinant has simple poles at the retained `λ_j`; the scan works on
/// `det·Π sign(E − λ_j)`, which is continuous across them, and discards any
/// bracket that collapses onto a `λ_j`.
pub fn scan_bics(
    basis: &ChannelEigenBasis,
    range: (f64, f64),
    grid_points: usize,
    opts: &ReactionOptions,
) -> Result<BicScan> {
    let threshold = asymptotic_band_energy(basis.channel.momentum, 0, basis.half_cell);
    let momentum = basis.channel.momentum;
    let lo = range.0;
    let hi = range.1.min(threshold - 1e-9);
    if !(hi > lo) || grid_points < 2 {
        return Ok(BicScan {
            momentum,
            samples: Vec::new(),
            roots: Vec::new(),
        });
    }
    let lambdas: Vec<f64> = opts
        .filter
        .selected(basis)
        .into_iter()
        .map(|j| basis.eigenvalues[j])
        .filter(|&l| l >= lo - 1.0 && l <= hi + 1.0)
        .collect();
    let sign_factor = |e: f64| -> f64 {
        lambdas
            .iter()
            .map(|&l| if e > l { 1.0 } else { -1.0 })
            .product::<f64>()
    };
    let eval = |e: f64| -> Result<f64> {
        let mut e = e;
        while lambdas.iter().any(|&l| (e - l).abs() < GRID_NUDGE) {
            e += GRID_NUDGE;
        }
        det_hbd(basis, e, opts)
    };

    let step = (hi - lo) / (grid_points - 1) as f64;
    let grid: Vec<f64> = (0..grid_points).map(|i| lo + step * i as f64).collect();
    let values: Vec<f64> = grid.iter().map(|&e| eval(e)).collect::<Result<_>>()?;
    let mut roots = Vec::new();
    for i in 0..grid_points - 1 {
        let (mut a, mut b) = (grid[i], grid[i + 1]);
        let mut ga = values[i] * sign_factor(a);
        let gb = values[i + 1] * sign_factor(b);
        if ga == 0.0 {
            roots.push(BicRoot {
                momentum,
                energy: a,
                residual: 0.0,
            });
            continue;
        }
        if ga * gb > 0.0 {
            continue;
        }
        while b - a > BISECTION_TOL {
            let m = 0.5 * (a + b);
            let gm = eval(m)? * sign_factor(m);
            if gm == 0.0 {
                a = m;
                b = m;
                break;
            }
            if (gm > 0.0) == (ga > 0.0) {
                a = m;
                ga = gm;
            } else {
                b = m;
            }
        }
        // a λ_j that decouples from ν = 0 flips the sign factor without a pole
        let guard = 2.0 * BISECTION_TOL + GRID_NUDGE;
        if lambdas.iter().any(|&l| l >= a - guard && l <= b + guard) {
            continue;
        }
        let energy = 0.5 * (a + b);
        roots.push(BicRoot {
            momentum,
            energy,
            residual: eval(energy)?.abs(),
        });
    }
    Ok(BicScan {
        momentum,
        samples: grid.into_iter().zip(values).collect(),
        roots,
    })
}

/// Positive-energy BIC roots for each Bloch momentum in `momenta`, searched in
/// `(floor, K²/2)`.
pub fn bic_line(
    cfg: &LatticeConfig,
    region: &RegionConfig,
    momenta: &[f64],
    floor: f64,
    grid_points: usize,
    opts: &ReactionOptions,
) -> Result<Vec<BicRoot>> {
    let per_k: Vec<Vec<BicRoot>> = momenta
        .par_iter()
        .map(|&k| {
            let basis = solve_lattice_channel(cfg, region, &BlochChannel::from_momentum(k))?;
            let scan = scan_bics(&basis, (floor, 0.5 * k * k), grid_points, opts)?;
            Ok(scan.roots.into_iter().filter(|r| r.energy > 0.0).collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_k.into_iter().flatten().collect())
}

/// Rectangle `re_min ≤ Re E ≤ re_max`, `im_min ≤ Im E ≤ im_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoleRegion {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl PoleRegion {
    /// Below the real axis over `[re_min, re_max]`, from `−depth` up to `−gap`.
    pub fn below(re_min: f64, re_max: f64, depth: f64, gap: f64) -> Self {
        Self {
            re_min,
            re_max,
            im_min: -depth,
            im_max: -gap,
        }
    }

    fn contains(&self, e: Complex64) -> bool {
        e.re >= self.re_min && e.re <= self.re_max && e.im >= self.im_min && e.im <= self.im_max
    }

    fn corners(&self) -> [Complex64; 4] {
        [
            Complex64::new(self.re_min, self.im_min),
            Complex64::new(self.re_max, self.im_min),
            Complex64::new(self.re_max, self.im_max),
            Complex64::new(self.re_min, self.im_max),
        ]
    }

    fn label(&self) -> String {
        format!(
            "[{:.6}, {:.6}] x [{:.3e}, {:.3e}]",
            self.re_min, self.re_max, self.im_min, self.im_max
        )
    }
}

/// S-matrix entry whose poles are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplitudeSelector {
    pub out_side: Boundary,
    pub out_nu: i32,
    pub in_side: Boundary,
    pub in_nu: i32,
}

impl AmplitudeSelector {
    /// Same-side reflection `ν → ν` from the bottom.
    pub fn reflection(nu: i32) -> Self {
        Self {
            out_side: Boundary::Bottom,
            out_nu: nu,
            in_side: Boundary::Bottom,
            in_nu: nu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoleSearchOptions {
    pub amplitude: AmplitudeSelector,
    /// Closed-mode shells kept beyond the open modes.
    pub evanescent_shells: usize,
    /// Poles whose residue in the selected amplitude is below this fraction
    /// of `|Im E|` are dropped.
    pub residue_floor: f64,
    /// Deepest rectangle subdivision.
    pub max_depth: usize,
}

impl Default for PoleSearchOptions {
    fn default() -> Self {
        Self {
            amplitude: AmplitudeSelector::reflection(0),
            evanescent_shells: 1,
            residue_floor: 1e-3,
            max_depth: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pole {
    pub energy: Complex64,
    /// Residue of the selected amplitude.
    pub residue: Complex64,
}

impl Pole {
    pub fn width(&self) -> f64 {
        -self.energy.im
    }

    /// `ħ/(−Im E)`.
    pub fn inverse_width(&self) -> f64 {
        1.0 / self.width()
    }

    /// `ħ/(2(−Im E))`, the decay time of `|ψ|²`.
    pub fn lifetime(&self) -> f64 {
        0.5 / self.width()
    }
}

#[derive(Debug, Clone)]
pub struct PoleSearch {
    pub region: PoleRegion,
    /// Zeros of `det(1 + i𝒦)` inside the region, before residue filtering.
    pub zeros: Vec<Pole>,
    /// Zeros that are poles of the selected amplitude.
    pub poles: Vec<Pole>,
    pub diagnostics: Vec<String>,
}

// det(1 + i𝒦) on the resonance sheet for a fixed mode list, times Π(E − λ_j)
// over nearby eigenvalues so the function stays smooth near the real axis.
struct PoleFunction<'a> {
    basis: &'a ChannelEigenBasis,
    nus: Vec<i32>,
    opts: &'a ReactionOptions,
    nearby: Vec<f64>,
}

impl<'a> PoleFunction<'a> {
    fn determinant(&self, e: Complex64) -> Result<Complex64> {
        let modes = modes_for(e, &self.basis.channel, &self.nus, self.basis.half_cell, Continuation::Resonance);
        let r = reaction_matrix(self.basis, e, &self.nus, self.opts)?.full();
        let n = self.nus.len();
        let i_unit = Complex64::new(0.0, 1.0);
        // det(1 + i√k R √k) = det(1 + i R k)
        let m = CMat::from_fn(2 * n, 2 * n, |a, b| {
            let diag = if a == b { 1.0 } else { 0.0 };
            diag + i_unit * r[(a, b)] * modes.modes[b % n].k
        });
        Ok(determinant(&m))
    }

    fn eval(&self, e: Complex64) -> Result<Complex64> {
        let mut g = self.determinant(e)?;
        for &l in &self.nearby {
            g *= e - l;
        }
        Ok(g)
    }
}

struct ContourTrace {
    winding: i64,
    /// `∮ log G dE` with `log G` continued along the contour.
    log_integral: Complex64,
    start: Complex64,
}

const PHASE_STEP: f64 = PI / 8.0;
const EDGE_SAMPLES: usize = 48;

fn trace_contour(f: &PoleFunction, region: &PoleRegion) -> Result<ContourTrace> {
    let corners = region.corners();
    let min_len = 1e-13 * (1.0 + region.re_max.abs());
    let mut points: Vec<(Complex64, Complex64)> = Vec::new();
    for edge in 0..4 {
        let a = corners[edge];
        let b = corners[(edge + 1) % 4];
        let mut prev = (a, f.eval(a)?);
        if edge == 0 {
            points.push(prev);
        }
        for s in 1..=EDGE_SAMPLES {
            let e = a + (b - a) * (s as f64 / EDGE_SAMPLES as f64);
            let next = (e, f.eval(e)?);
            refine_segment(f, prev, next, min_len, 0, &mut points)?;
            prev = next;
        }
    }
    let mut phase = 0.0;
    let mut log_integral = Complex64::new(0.0, 0.0);
    let mut log_prev = Complex64::new(points[0].1.norm().ln(), points[0].1.arg());
    for w in points.windows(2) {
        let (e0, g0) = w[0];
        let (e1, g1) = w[1];
        let dphi = (g1 / g0).arg();
        phase += dphi;
        let log_next = Complex64::new(g1.norm().ln(), log_prev.im + dphi);
        log_integral += 0.5 * (log_prev + log_next) * (e1 - e0);
        log_prev = log_next;
    }
    let turns = phase / (2.0 * PI);
    let winding = turns.round();
    if (turns - winding).abs() > 0.05 {
        return Err(BicError::Numerical(format!(
            "non-integer winding {turns:.4} on {}",
            region.label()
        )));
    }
    Ok(ContourTrace {
        winding: winding as i64,
        log_integral,
        start: points[0].0,
    })
}

fn refine_segment(
    f: &PoleFunction,
    a: (Complex64, Complex64),
    b: (Complex64, Complex64),
    min_len: f64,
    depth: usize,
    out: &mut Vec<(Complex64, Complex64)>,
) -> Result<()> {
    let dphi = (b.1 / a.1).arg().abs();
    let dlog = (b.1.norm().ln() - a.1.norm().ln()).abs();
    if dphi <= PHASE_STEP && dlog <= 0.5 {
        out.push(b);
        return Ok(());
    }
    if (b.0 - a.0).norm() < min_len || depth > 80 {
        return Err(BicError::Numerical(format!(
            "zero of the pole function on the contour near {}",
            a.0
        )));
    }
    let m = 0.5 * (a.0 + b.0);
    let mid = (m, f.eval(m)?);
    refine_segment(f, a, mid, min_len, depth + 1, out)?;
    refine_segment(f, mid, b, min_len, depth + 1, out)
}

fn muller<F: Fn(Complex64) -> Result<Complex64>>(f: F, start: Complex64, step: f64) -> Result<Complex64> {
    let mut x0 = start - step;
    let mut x1 = start + step;
    let mut x2 = start;
    let (mut f0, mut f1, mut f2) = (f(x0)?, f(x1)?, f(x2)?);
    for _ in 0..100 {
        let h1 = x1 - x0;
        let h2 = x2 - x1;
        let d1 = (f1 - f0) / h1;
        let d2 = (f2 - f1) / h2;
        let a = (d2 - d1) / (h2 + h1);
        let b = a * h2 + d2;
        let disc = (b * b - 4.0 * a * f2).sqrt();
        let den = if (b + disc).norm() > (b - disc).norm() { b + disc } else { b - disc };
        if den.norm() == 0.0 {
            break;
        }
        let dx = -2.0 * f2 / den;
        x0 = x1;
        f0 = f1;
        x1 = x2;
        f1 = f2;
        x2 += dx;
        f2 = f(x2)?;
        if !x2.re.is_finite() || !x2.im.is_finite() {
            break;
        }
        if dx.norm() < 1e-14 * (1.0 + x2.norm()) || f2.norm() == 0.0 {
            return Ok(x2);
        }
    }
    Err(BicError::Numerical(format!("Muller iteration did not settle near {start}")))
}

/// Quasibound poles inside `region` (which must lie strictly below the real
/// axis, between two consecutive mode thresholds).
pub fn find_poles(
    basis: &ChannelEigenBasis,
    region: &PoleRegion,
    reaction: &ReactionOptions,
    opts: &PoleSearchOptions,
) -> Result<PoleSearch> {
    if !(region.im_max < 0.0 && region.im_min < region.im_max && region.re_min < region.re_max) {
        return Err(BicError::InvalidConfig(format!(
            "pole region {} must be a non-empty rectangle below the real axis",
            region.label()
        )));
    }
    let centre = Complex64::new(0.5 * (region.re_min + region.re_max), 0.0);
    let nus = scattering_modes(
        centre,
        &basis.channel,
        basis.half_cell,
        basis.region.fourier_cutoff,
        opts.evanescent_shells,
        Continuation::Resonance,
    )
    .nus();
    for &nu in &nus {
        let t = asymptotic_band_energy(basis.channel.momentum, nu, basis.half_cell);
        if t > region.re_min && t < region.re_max {
            return Err(BicError::InvalidConfig(format!(
                "pole region {} straddles the threshold {t:.6} of mode {nu}",
                region.label()
            )));
        }
    }
    let span = region.re_max - region.re_min;
    let nearby: Vec<f64> = basis
        .eigenvalues
        .iter()
        .copied()
        .filter(|&l| l > region.re_min - 0.25 * span - 1.0 && l < region.re_max + 0.25 * span + 1.0)
        .collect();
    let f = PoleFunction {
        basis,
        nus,
        opts: reaction,
        nearby,
    };

    let mut zeros = Vec::new();
    let mut diagnostics = Vec::new();
    let mut stack = vec![(*region, 0usize)];
    while let Some((rect, depth)) = stack.pop() {
        let trace = match trace_contour(&f, &rect) {
            Ok(t) => t,
            Err(e) => {
                // nudge the rectangle off a zero sitting on its edge
                if depth < opts.max_depth {
                    let w = rect.re_max - rect.re_min;
                    let h = rect.im_max - rect.im_min;
                    let shifted = PoleRegion {
                        re_min: rect.re_min - 1e-3 * w,
                        re_max: rect.re_max + 1.3e-3 * w,
                        im_min: rect.im_min - 1.7e-3 * h,
                        im_max: (rect.im_max + 0.9e-3 * h).min(region.im_max),
                    };
                    diagnostics.push(format!("{e}; retrying on {}", shifted.label()));
                    stack.push((shifted, depth + 1));
                } else {
                    diagnostics.push(e.to_string());
                }
                continue;
            }
        };
        if trace.winding < 0 {
            return Err(BicError::PoleCountMismatch {
                region: rect.label(),
                winding: trace.winding,
                found: 0,
            });
        }
        if trace.winding == 0 {
            continue;
        }
        if trace.winding == 1 {
            let guess = trace.start - trace.log_integral / Complex64::new(0.0, 2.0 * PI);
            let scale = (rect.im_max - rect.im_min).min(rect.re_max - rect.re_min);
            let step = (0.05 * guess.im.abs()).min(0.05 * scale).max(1e-12);
            let polish = |e: Complex64| f.eval(e);
            if let Ok(root) = muller(polish, guess, step) {
                if rect.contains(root) {
                    zeros.push(root);
                    continue;
                }
            }
        }
        if depth >= opts.max_depth {
            diagnostics.push(format!(
                "{} zeros left unresolved in {}",
                trace.winding,
                rect.label()
            ));
            return Err(BicError::PoleCountMismatch {
                region: rect.label(),
                winding: trace.winding,
                found: zeros.len(),
            });
        }
        // split off-centre so the cut rarely lands on a zero
        let w = rect.re_max - rect.re_min;
        let h = rect.im_max - rect.im_min;
        let (a, b) = if w >= h {
            let cut = rect.re_min + 0.4871 * w;
            (PoleRegion { re_max: cut, ..rect }, PoleRegion { re_min: cut, ..rect })
        } else {
            // geometric cut in depth, since poles crowd towards the axis
            let cut = -((-rect.im_min) * (-rect.im_max)).sqrt() * 1.0137;
            let cut = cut.clamp(rect.im_min + 0.01 * h, rect.im_max - 0.01 * h);
            (PoleRegion { im_max: cut, ..rect }, PoleRegion { im_min: cut, ..rect })
        };
        stack.push((a, depth + 1));
        stack.push((b, depth + 1));
    }
    zeros.sort_by(|a, b| a.re.total_cmp(&b.re));
    zeros.dedup_by(|a, b| (*a - *b).norm() < 1e-9);

    let mut all = Vec::new();
    let mut poles = Vec::new();
    for &z in &zeros {
        let residue = amplitude_residue(basis, z, &f.nus, reaction, &opts.amplitude, &zeros)?;
        let pole = Pole { energy: z, residue };
        all.push(pole);
        if residue.norm() >= opts.residue_floor * z.im.abs() {
            poles.push(pole);
        }
    }
    Ok(PoleSearch {
        region: *region,
        zeros: all,
        poles,
        diagnostics,
    })
}

/// `(1/2πi)∮ S_ab dE` on a small circle around `pole`.
fn amplitude_residue(
    basis: &ChannelEigenBasis,
    pole: Complex64,
    nus: &[i32],
    reaction: &ReactionOptions,
    selector: &AmplitudeSelector,
    others: &[Complex64],
) -> Result<Complex64> {
    let mut radius = 0.5 * pole.im.abs();
    for &o in others {
        let d = (o - pole).norm();
        if d > 0.0 {
            radius = radius.min(0.4 * d);
        }
    }
    for &l in &basis.eigenvalues {
        radius = radius.min(0.4 * (pole - l).norm());
    }
    const POINTS: usize = 64;
    let mut total = Complex64::new(0.0, 0.0);
    for i in 0..POINTS {
        let theta = 2.0 * PI * i as f64 / POINTS as f64;
        let offset = Complex64::from_polar(radius, theta);
        let e = pole + offset;
        let modes = modes_for(e, &basis.channel, nus, basis.half_cell, Continuation::Resonance);
        let blocks = s_matrix(basis, &modes, reaction)?;
        let s = blocks
            .amplitude(
                (selector.out_side, selector.out_nu),
                (selector.in_side, selector.in_nu),
            )
            .ok_or_else(|| BicError::InvalidConfig("amplitude mode outside the scattering modes".into()))?;
        // dE = i·offset·dθ
        total += s * offset;
    }
    Ok(total / POINTS as f64)
}

/// `−Im E = c·β^p` fitted in log–log space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeFit {
    /// Re E the family was seeded from.
    pub seed: f64,
    pub betas: Vec<f64>,
    /// Tracked pole energy per β as `(Re, Im)`, `None` where tracking failed.
    pub poles: Vec<Option<(f64, f64)>>,
    pub prefactor: f64,
    pub exponent: f64,
    /// RMS residual of the log–log fit.
    pub rms: f64,
}

/// Least-squares line through `(ln x, ln y)`: returns `(c, p, rms)` for
/// `y = c·x^p`.
pub fn power_law_fit(points: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (logs
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Some((intercept.exp(), slope, rms))
}

/// Result of a β sweep.
#[derive(Debug, Clone)]
pub struct LifetimeSweep {
    pub searches: Vec<(f64, PoleSearch)>,
    pub fits: Vec<LifetimeFit>,
    pub diagnostics: Vec<String>,
}

/// Finds poles at every β, follows each family seeded at `seeds` (Re E) by
/// nearest real part, and fits `−Im E` against β.
pub fn lifetime_scaling(
    cfg: &LatticeConfig,
    region: &RegionConfig,
    channel: &BlochChannel,
    betas: &[f64],
    pole_region: &PoleRegion,
    seeds: &[f64],
    reaction: &ReactionOptions,
    opts: &PoleSearchOptions,
) -> Result<LifetimeSweep> {
    if betas.len() < 4 {
        return Err(BicError::InvalidConfig("a lifetime fit needs at least four β values".into()));
    }
    let mut sorted = betas.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] <= 0.0 || sorted[sorted.len() - 1] / sorted[0] < 10.0 {
        return Err(BicError::InvalidConfig("β values must be positive and span a decade".into()));
    }
    let searches: Vec<(f64, PoleSearch)> = sorted
        .par_iter()
        .map(|&beta| {
            let basis = solve_lattice_channel(&cfg.with_asymmetry(beta), region, channel)?;
            Ok((beta, find_poles(&basis, pole_region, reaction, opts)?))
        })
        .collect::<Result<_>>()?;

    let mut diagnostics = Vec::new();
    let mut fits = Vec::new();
    for &seed in seeds {
        let mut current = seed;
        let mut track = Vec::new();
        for (beta, search) in &searches {
            let best = search
                .poles
                .iter()
                .min_by(|a, b| (a.energy.re - current).abs().total_cmp(&(b.energy.re - current).abs()));
            match best {
                Some(p) if (p.energy.re - current).abs() < 0.25 => {
                    current = p.energy.re;
                    track.push(Some((p.energy.re, p.energy.im)));
                }
                _ => {
                    diagnostics.push(BicError::PoleTrackingLost { beta: *beta }.to_string() + &format!(" (seed {seed})"));
                    track.push(None);
                }
            }
        }
        let points: Vec<(f64, f64)> = sorted
            .iter()
            .zip(&track)
            .filter_map(|(&b, p)| p.map(|(_, im)| (b, -im)))
            .filter(|&(_, w)| w > 0.0)
            .collect();
        let (prefactor, exponent, rms) = power_law_fit(&points).unwrap_or((f64::NAN, f64::NAN, f64::NAN));
        fits.push(LifetimeFit {
            seed,
            betas: sorted.clone(),
            poles: track,
            prefactor,
            exponent,
            rms,
        });
    }
    Ok(LifetimeSweep {
        searches,
        fits,
        diagnostics,
    })
}

/// Everything the continuum analysis produced for one configuration.
#[derive(Debug, Clone, Default)]
pub struct ContinuumResult {
    pub bic_roots: Vec<BicRoot>,
    /// `(β, pole)`.
    pub poles: Vec<(f64, Pole)>,
    pub lifetime_fits: Vec<LifetimeFit>,
}
