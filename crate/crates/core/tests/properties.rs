use std::f64::consts::PI;
use std::sync::OnceLock;

use bzbic::bloch::{BlochChannel, Continuation, RegionConfig};
use bzbic::linalg::{norm_max, unitarity_defect};
use bzbic::potential::{potential_value, LatticeConfig, LatticePotential};
use bzbic::reaction::{build_channel_hamiltonian, solve_lattice_channel, Boundary, ChannelEigenBasis};
use bzbic::scattering::{reaction_matrix, s_matrix, scattering_modes, ReactionOptions};
use bzbic::Complex64;
use proptest::prelude::*;

const PI2: f64 = PI * PI;

fn small_region() -> RegionConfig {
    RegionConfig {
        half_width: 2.5,
        cell_count: 1,
        fourier_cutoff: 4,
        transverse_cutoff: 20,
    }
}

fn gamma_basis() -> &'static ChannelEigenBasis {
    static BASIS: OnceLock<ChannelEigenBasis> = OnceLock::new();
    BASIS.get_or_init(|| {
        solve_lattice_channel(&LatticeConfig::default(), &RegionConfig::default(), &BlochChannel::gamma()).unwrap()
    })
}

/// Direct real-space image sum, written independently of the library.
fn comb(cfg: &LatticeConfig, x: f64, z: f64) -> f64 {
    let a = cfg.half_cell;
    let eps = cfg.theta_width;
    let sigma = cfg.gauss_width;
    let row = |x: f64| -> f64 {
        (-60i32..=60)
            .map(|m| {
                let d = x - 2.0 * a * m as f64;
                (-d * d / (2.0 * eps * eps)).exp() / ((2.0 * PI).sqrt() * eps)
            })
            .sum()
    };
    let gz = |z: f64| (-z * z / (2.0 * sigma * sigma)).exp() / ((2.0 * PI).sqrt() * sigma);
    let line = row(x) * gz(z);
    let second = row(x - a / 17f64.sqrt()) * gz(z + a / 13f64.sqrt());
    -cfg.well_depth * a * a * (line + cfg.asymmetry * second)
}

fn away_from_levels(e: f64, basis: &ChannelEigenBasis) -> bool {
    basis.eigenvalues.iter().all(|l| (l - e).abs() > 1e-6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn theta_series_matches_image_sum(
        x in -3.0f64..3.0,
        z in -2.0f64..2.0,
        beta in 0.0f64..0.3,
        depth in 0.0f64..60.0,
    ) {
        let cfg = LatticeConfig { well_depth: depth, asymmetry: beta, ..LatticeConfig::default() };
        let diff = (potential_value(&cfg, x, z) - comb(&cfg, x, z)).abs();
        prop_assert!(diff < 1e-10, "diff {diff:e} at ({x}, {z})");
    }

    #[test]
    fn potential_is_cell_periodic(x in -1.0f64..1.0, z in -2.0f64..2.0, beta in 0.0f64..0.2) {
        let cfg = LatticeConfig::default().with_asymmetry(beta);
        let v0 = potential_value(&cfg, x, z);
        let v1 = potential_value(&cfg, x + 2.0 * cfg.half_cell, z);
        prop_assert!((v0 - v1).abs() < 1e-12 * (1.0 + v0.abs()));
    }

    #[test]
    fn s_matrix_is_unitary_in_both_windows(t in 0.0f64..1.0, upper in any::<bool>(), shells in 0usize..3) {
        let basis = gamma_basis();
        let (lo, hi) = if upper { (0.5 * PI2, 2.0 * PI2) } else { (0.0, 0.5 * PI2) };
        let e = lo + 1e-3 + t * (hi - lo - 2e-3);
        prop_assume!(away_from_levels(e, basis));
        let modes = scattering_modes(Complex64::new(e, 0.0), &basis.channel, basis.half_cell, 8, shells, Continuation::Physical);
        let s = s_matrix(basis, &modes, &ReactionOptions::default()).unwrap();
        let defect = unitarity_defect(&s.s_prop);
        prop_assert!(defect < 1e-8, "defect {defect:e} at E = {e}");
    }

    #[test]
    fn s_matrix_is_time_reversal_symmetric(t in 0.0f64..1.0) {
        let basis = gamma_basis();
        let e = 0.5 * PI2 + 1e-3 + t * (1.5 * PI2 - 2e-3);
        prop_assume!(away_from_levels(e, basis));
        let modes = scattering_modes(Complex64::new(e, 0.0), &basis.channel, basis.half_cell, 8, 1, Continuation::Physical);
        let s = s_matrix(basis, &modes, &ReactionOptions::default()).unwrap();
        let open: Vec<i32> = modes.modes.iter().filter(|m| m.propagating).map(|m| m.nu).collect();
        let scale = norm_max(&s.s_prop);
        for &a in &[Boundary::Bottom, Boundary::Top] {
            for &b in &[Boundary::Bottom, Boundary::Top] {
                for &nu in &open {
                    for &mu in &open {
                        let fwd = s.amplitude((a, nu), (b, mu)).unwrap();
                        let back = s.amplitude((b, -mu), (a, -nu)).unwrap();
                        prop_assert!((fwd - back).norm() < 1e-9 * scale, "{fwd} vs {back}");
                    }
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn hamiltonian_is_hermitian(beta in 0.0f64..0.2, k in -1.5f64..1.5) {
        let cfg = LatticeConfig::default().with_asymmetry(beta);
        let region = small_region();
        let pot = LatticePotential::new(&cfg, &region);
        let h = build_channel_hamiltonian(&pot, &region, &BlochChannel::from_momentum(k), cfg.half_cell);
        let dev = norm_max(&(&h - h.adjoint()));
        prop_assert!(dev < 1e-12, "deviation {dev:e}");
    }

    #[test]
    fn reaction_matrix_is_reciprocal(beta in 0.0f64..0.2, k in -1.5f64..1.5, e in 0.1f64..12.0) {
        let cfg = LatticeConfig::default().with_asymmetry(beta);
        let basis = solve_lattice_channel(&cfg, &small_region(), &BlochChannel::from_momentum(k)).unwrap();
        prop_assume!(away_from_levels(e, &basis));
        let nus: Vec<i32> = (-2..=2).collect();
        let r = reaction_matrix(&basis, Complex64::new(e, 0.0), &nus, &ReactionOptions::default()).unwrap().full();
        let dev = norm_max(&(&r - r.adjoint()));
        prop_assert!(dev < 1e-12 * (1.0 + norm_max(&r)), "deviation {dev:e}");
    }

    #[test]
    fn tilted_s_matrix_keeps_time_reversal_at_gamma(beta in 0.0f64..0.2, e in 5.0f64..19.0) {
        let cfg = LatticeConfig::default().with_asymmetry(beta);
        let basis = solve_lattice_channel(&cfg, &small_region(), &BlochChannel::gamma()).unwrap();
        prop_assume!(away_from_levels(e, &basis));
        let modes = scattering_modes(Complex64::new(e, 0.0), &basis.channel, basis.half_cell, 4, 1, Continuation::Physical);
        let s = s_matrix(&basis, &modes, &ReactionOptions::default()).unwrap();
        for &nu in &[-1, 0, 1] {
            let fwd = s.amplitude((Boundary::Top, nu), (Boundary::Bottom, 1)).unwrap();
            let back = s.amplitude((Boundary::Bottom, -1), (Boundary::Top, -nu)).unwrap();
            prop_assert!((fwd - back).norm() < 1e-9, "{fwd} vs {back}");
        }
    }
}
