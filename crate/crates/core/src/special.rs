//! Special functions and quadrature rules shared by the kernel and extension code.

use statrs::function::gamma as sg;
use std::f64::consts::PI;

pub fn gamma(x: f64) -> f64 {
    sg::gamma(x)
}

pub fn ln_gamma(x: f64) -> f64 {
    sg::ln_gamma(x)
}

/// Regularized upper incomplete gamma Q(a, x) for a > 0, x >= 0.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x >= 1.0 && x > a {
        // continued fraction directly; avoids the 1 - P cancellation
        (upper_gamma_cf(a, x).ln() - ln_gamma(a)).exp()
    } else {
        sg::gamma_ur(a, x)
    }
}

/// Unregularized upper incomplete gamma Γ(a, x), valid for any real `a` > -1
/// and x > 0.
pub fn upper_gamma(a: f64, x: f64) -> f64 {
    assert!(x > 0.0, "upper_gamma needs x > 0");
    if x >= 1.0 {
        return upper_gamma_cf(a, x);
    }
    if a > 0.0 {
        sg::gamma_ur(a, x) * gamma(a)
    } else if a == 0.0 {
        // E1(x) by its power series
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            term *= -x / k as f64;
            let add = -term / k as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        -0.577_215_664_901_532_9 - x.ln() + sum
    } else {
        // Γ(a, x) = (Γ(a+1, x) - x^a e^{-x}) / a
        (upper_gamma(a + 1.0, x) - x.powf(a) * (-x).exp()) / a
    }
}

/// Modified Lentz evaluation of the Legendre continued fraction for Γ(a, x).
fn upper_gamma_cf(a: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (a * x.ln() - x).exp() * h
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Gauss–Legendre rule mapped to [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    x.iter()
        .zip(&w)
        .map(|(&xi, &wi)| (mid + half * xi, half * wi))
        .collect()
}

/// Adaptive Gauss–Kronrod style integration by recursive 15/7 Gauss-Legendre
/// comparison. Used for smooth one-dimensional integrals away from hot loops.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rule<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, n: usize) -> f64 {
        gauss_legendre_on(n, a, b).iter().map(|&(x, w)| w * f(x)).sum()
    }
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let coarse = rule(f, a, b, 10);
        let fine = rule(f, a, b, 20);
        let floor = 1e-14 * fine.abs();
        if (fine - coarse).abs() <= tol.max(floor) || depth > 30 {
            return fine;
        }
        let mid = 0.5 * (a + b);
        rec(f, a, mid, 0.5 * tol, depth + 1) + rec(f, mid, b, 0.5 * tol, depth + 1)
    }
    rec(f, a, b, tol, 0)
}

/// Euclidean Riesz constant α_{n,s} = 2^s Γ((n+s)/2) / (π^{n/2} |Γ(-s/2)|).
pub fn alpha_ns(n: usize, s: f64) -> f64 {
    let nf = n as f64;
    // |Γ(-s/2)| = Γ(1 - s/2) / (s/2), valid for s in (0, 2)
    let ln_abs = ln_gamma(1.0 - 0.5 * s) - (0.5 * s).ln();
    (s * std::f64::consts::LN_2 + ln_gamma(0.5 * (nf + s)) - 0.5 * nf * PI.ln() - ln_abs).exp()
}

/// Extension constant β_s = Γ(1 - s/2) / (2^{s-1} Γ(s/2)).
pub fn beta_s(s: f64) -> f64 {
    (ln_gamma(1.0 - 0.5 * s) - (s - 1.0) * std::f64::consts::LN_2 - ln_gamma(0.5 * s)).exp()
}

/// Surface area of the unit sphere S^{n-1}.
pub fn sphere_area(n: usize) -> f64 {
    let nf = n as f64;
    2.0 * PI.powf(0.5 * nf) / gamma(0.5 * nf)
}

/// Volume of the unit ball in R^n.
pub fn ball_volume(n: usize) -> f64 {
    let nf = n as f64;
    PI.powf(0.5 * nf) / gamma(0.5 * nf + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert_relative_eq!(v, 2.0 / 15.0, max_relative = 1e-13);
        assert_relative_eq!(w.iter().sum::<f64>(), 2.0, max_relative = 1e-14);
    }

    #[test]
    fn upper_gamma_matches_quadrature() {
        for &(a, x) in &[(0.75, 0.3), (0.75, 4.0), (-0.25, 0.2), (-0.25, 3.0), (-0.4, 12.0), (1.3, 0.9)] {
            let f = |t: f64| t.powf(a - 1.0) * (-t).exp();
            // integrate on [x, x + 60] after mapping; tail beyond is negligible
            let q = integrate_adaptive(&f, x, x + 60.0, 1e-15);
            assert_relative_eq!(upper_gamma(a, x), q, max_relative = 1e-10);
        }
    }

    #[test]
    fn gamma_q_regularized() {
        assert_relative_eq!(gamma_q(1.0, 2.0), (-2.0f64).exp(), max_relative = 1e-13);
        // erfc(3)
        assert_relative_eq!(gamma_q(0.5, 9.0), 2.209_049_699_858_544e-5, max_relative = 1e-12);
    }

    #[test]
    fn alpha_one_dimensional_s_one() {
        assert_relative_eq!(alpha_ns(1, 1.0), 1.0 / PI, max_relative = 1e-13);
    }

    #[test]
    fn beta_at_one_is_one() {
        assert_relative_eq!(beta_s(1.0), 1.0, max_relative = 1e-13);
    }
}
