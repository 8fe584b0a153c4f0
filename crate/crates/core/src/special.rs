//! Complex digamma and the inverse-square tail sums that close the truncated
//! reaction-matrix series.

use num_complex::Complex64;

// B_{2k} / (2k) for the asymptotic digamma series.
const DIGAMMA_COEFFS: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
    -3617.0 / 8160.0,
];

/// Digamma function ψ(z) for complex `z` away from the non-positive integers.
///
/// Uses upward recurrence to `Re z >= 16` followed by the asymptotic series.
pub fn digamma(z: Complex64) -> Complex64 {
    let mut z = z;
    let mut shift = Complex64::new(0.0, 0.0);
    while z.re < 16.0 {
        shift -= z.inv();
        z += 1.0;
    }
    let inv = z.inv();
    let inv2 = inv * inv;
    let mut series = Complex64::new(0.0, 0.0);
    let mut pow = inv2;
    for c in DIGAMMA_COEFFS {
        series += pow * c;
        pow *= inv2;
    }
    shift + z.ln() - 0.5 * inv - series
}

/// Σ_{m>n} 1/(m² − y²) for complex `y2 = y²`.
///
/// Closed in terms of digamma, ½y⁻¹[ψ(n+1+y) − ψ(n+1−y)], with a power
/// series in `y²` when `|y|` is too small for the difference to be accurate.
pub fn inverse_square_tail(y2: Complex64, n: usize) -> Complex64 {
    let a = n as f64 + 1.0;
    let y = y2.sqrt();
    if y.norm() < 1e-3 {
        return small_y_series(y2, n, false);
    }
    (digamma(a + y) - digamma(a - y)) / (2.0 * y)
}

/// Σ_{m>n} (−1)^m/(m² − y²) for complex `y2 = y²`.
pub fn alternating_inverse_square_tail(y2: Complex64, n: usize) -> Complex64 {
    let y = y2.sqrt();
    if y.norm() < 1e-3 {
        return small_y_series(y2, n, true);
    }
    // Σ_{m>n} (−1)^m/(m+c) = (−1)^{n+1}·½[ψ((A+1)/2) − ψ(A/2)], A = n+1+c
    let sign = if (n + 1).is_multiple_of(2) { 1.0 } else { -1.0 };
    let shifted = |c: Complex64| {
        let big_a = n as f64 + 1.0 + c;
        0.5 * sign * (digamma((big_a + 1.0) * 0.5) - digamma(big_a * 0.5))
    };
    (shifted(-y) - shifted(y)) / (2.0 * y)
}

fn small_y_series(y2: Complex64, n: usize, alternating: bool) -> Complex64 {
    // Σ_k y^{2k} Σ_{m>n} s^m m^{-2k-2}
    let mut total = Complex64::new(0.0, 0.0);
    let mut pow = Complex64::new(1.0, 0.0);
    for k in 0..6 {
        let s = 2 * k + 2;
        let zeta = if alternating {
            alternating_hurwitz_tail(s as f64, n)
        } else {
            hurwitz_zeta(s as f64, n as f64 + 1.0)
        };
        total += pow * zeta;
        pow *= y2;
    }
    total
}

/// Hurwitz zeta ζ(s, a) = Σ_{k≥0} (k+a)^{-s} for real `s > 1`, `a > 0`,
/// by Euler-Maclaurin summation.
pub fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    const DIRECT: usize = 12;
    const BERNOULLI: [f64; 6] = [
        1.0 / 6.0,
        -1.0 / 30.0,
        1.0 / 42.0,
        -1.0 / 30.0,
        5.0 / 66.0,
        -691.0 / 2730.0,
    ];
    let mut sum = 0.0;
    for k in 0..DIRECT {
        sum += (a + k as f64).powf(-s);
    }
    let x = a + DIRECT as f64;
    sum += x.powf(1.0 - s) / (s - 1.0) + 0.5 * x.powf(-s);
    // Σ_j B_{2j}/(2j)! · s(s+1)…(s+2j−2) · x^{-s-2j+1}
    let mut rising = s;
    let mut factorial = 2.0;
    let mut xpow = x.powf(-s - 1.0);
    for (j, b) in BERNOULLI.iter().enumerate() {
        sum += b / factorial * rising * xpow;
        let j2 = 2.0 * (j as f64 + 1.0);
        rising *= (s + j2 - 1.0) * (s + j2);
        factorial *= (j2 + 1.0) * (j2 + 2.0);
        xpow /= x * x;
    }
    sum
}

fn alternating_hurwitz_tail(s: f64, n: usize) -> f64 {
    // Σ_{m>n} (−1)^m m^{-s}: pair terms into two Hurwitz series of step 2.
    let start = n as f64 + 1.0;
    let sign = if (n + 1).is_multiple_of(2) { 1.0 } else { -1.0 };
    let scale = 2f64.powf(-s);
    sign * scale * (hurwitz_zeta(s, start / 2.0) - hurwitz_zeta(s, (start + 1.0) / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_tail(y2: Complex64, n: usize, alternating: bool) -> Complex64 {
        // direct summation plus an integral estimate of what is left
        let cut = 2_000_000usize;
        let mut s = Complex64::new(0.0, 0.0);
        for m in (n + 1..=cut).rev() {
            let sign = if alternating && m % 2 == 1 { -1.0 } else { 1.0 };
            s += sign / (m as f64 * m as f64 - y2);
        }
        if !alternating {
            s += 1.0 / (cut as f64 + 0.5);
        }
        s
    }

    #[test]
    fn digamma_known_values() {
        let euler = 0.577_215_664_901_532_9;
        assert!((digamma(Complex64::new(1.0, 0.0)).re + euler).abs() < 1e-14);
        let half = digamma(Complex64::new(0.5, 0.0)).re;
        assert!((half - (-euler - 2.0 * 2f64.ln())).abs() < 1e-14);
        // ψ(1+i) imaginary part: Im ψ(1+iy) = −1/(2y) + (π/2)coth(πy)
        let v = digamma(Complex64::new(1.0, 1.0));
        let expect = -0.5 + 0.5 * std::f64::consts::PI / (std::f64::consts::PI).tanh();
        assert!((v.im - expect).abs() < 1e-13);
    }

    #[test]
    fn tails_match_brute_force() {
        for &y2 in &[
            Complex64::new(7.3, 0.0),
            Complex64::new(-4.0, 0.0),
            Complex64::new(120.0, -3.0),
            Complex64::new(1e-9, 0.0),
        ] {
            for n in [0usize, 5, 40] {
                let a = inverse_square_tail(y2, n);
                let b = brute_tail(y2, n, false);
                assert!((a - b).norm() < 1e-11, "plain n={n} y2={y2}: {a} vs {b}");
                let a = alternating_inverse_square_tail(y2, n);
                let b = brute_tail(y2, n, true);
                assert!((a - b).norm() < 1e-11, "alt n={n} y2={y2}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn hurwitz_reduces_to_riemann() {
        let z2 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((hurwitz_zeta(2.0, 1.0) - z2).abs() < 1e-14);
        let z4 = std::f64::consts::PI.powi(4) / 90.0;
        assert!((hurwitz_zeta(4.0, 1.0) - z4).abs() < 1e-14);
    }
}
