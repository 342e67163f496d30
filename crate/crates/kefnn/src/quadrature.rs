//! Quadrature rules used throughout the crate: Gauss–Hermite (for Gaussian
//! measures), Gauss–Legendre (for oracle integrals on intervals), and
//! trapezoidal weights for fixed grids.

/// Nodes and weights for `∫ f(z) e^{-z²} dz ≈ Σ w_k f(z_k)`.
///
/// Newton iteration on the weighted (bounded) Hermite recurrence, so the rule
/// stays accurate for orders in the thousands. Weights in the far tail
/// genuinely underflow `f64` and come back as exact zeros; callers should
/// skip those nodes.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "gauss_hermite order must be >= 1");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    let m = n / 2;
    // All roots lie in |z| < sqrt(2n+1); the minimal spacing is ~pi/sqrt(2n+1),
    // so a scan at a quarter of that pitch brackets every positive root.
    let envelope = (2.0 * nf + 1.0).sqrt();
    let step = std::f64::consts::PI / (4.0 * envelope);
    let mut u_prev = 0.5 * step;
    let mut f_prev = hermite_weighted_pair(u_prev, n).cur;
    let mut roots = Vec::with_capacity(m);
    let mut u = u_prev;
    while roots.len() < m {
        u += step;
        debug_assert!(u < envelope + 2.0, "gauss_hermite root scan ran past the envelope");
        let f = hermite_weighted_pair(u, n).cur;
        if f_prev.signum() != f.signum() {
            roots.push(bisect_hermite_root(u_prev, u, n));
        }
        u_prev = u;
        f_prev = f;
    }
    for (j, &z) in roots.iter().enumerate() {
        let right = n - m + j;
        nodes[right] = z;
        nodes[m - 1 - j] = -z;
        let w = hermite_weight_at(z, n);
        weights[right] = w;
        weights[m - 1 - j] = w;
    }
    if n % 2 == 1 {
        nodes[m] = 0.0;
        weights[m] = hermite_weight_at(0.0, n);
    }
    (nodes, weights)
}

fn bisect_hermite_root(mut lo: f64, mut hi: f64, n: usize) -> f64 {
    let mut f_lo = hermite_weighted_pair(lo, n).cur;
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return mid;
        }
        let f_mid = hermite_weighted_pair(mid, n).cur;
        if f_mid == 0.0 {
            return mid;
        }
        if f_lo.signum() != f_mid.signum() {
            hi = mid;
        } else {
            lo = mid;
            f_lo = f_mid;
        }
    }
}

/// `w = e^{-z²} / (n h_{n-1}(z)²)`, assembled in log space because the
/// mantissa carries an explicit scale. Far-tail weights underflow to 0.
fn hermite_weight_at(z: f64, n: usize) -> f64 {
    let hs = hermite_weighted_pair(z, n);
    let ln_prev = hs.prev.abs().ln() + hs.log_scale;
    let ln_w = -z * z - (n as f64).ln() - 2.0 * ln_prev;
    if ln_w < -745.0 {
        0.0
    } else {
        ln_w.exp()
    }
}

#[derive(Default)]
struct HermiteScaled {
    /// Mantissas of h_{n-1}(z) and h_n(z); true value = mantissa * e^{log_scale}.
    prev: f64,
    cur: f64,
    log_scale: f64,
}

/// Weighted Hermite functions h_j(z) = H_j(z) e^{-z²/2} / sqrt(2^j j! sqrt(π)),
/// evaluated by the three-term recurrence with rescaling so deep-tail starts
/// (where h_0 underflows) still recover the correct magnitudes.
fn hermite_weighted_pair(z: f64, n: usize) -> HermiteScaled {
    let l0 = -0.5 * z * z - 0.25 * std::f64::consts::PI.ln();
    let (mut log_scale, mut prev) = if l0 < -300.0 { (l0, 1.0) } else { (0.0, l0.exp()) };
    if n == 0 {
        return HermiteScaled { prev: 0.0, cur: prev, log_scale };
    }
    let mut cur = z * std::f64::consts::SQRT_2 * prev;
    for j in 2..=n {
        let jf = j as f64;
        let next = z * (2.0 / jf).sqrt() * cur - ((jf - 1.0) / jf).sqrt() * prev;
        prev = cur;
        cur = next;
        let mag = prev.abs().max(cur.abs());
        if mag > 1e250 {
            prev *= 1e-250;
            cur *= 1e-250;
            log_scale += 250.0 * std::f64::consts::LN_10;
        } else if mag < 1e-250 && mag > 0.0 {
            prev *= 1e250;
            cur *= 1e250;
            log_scale -= 250.0 * std::f64::consts::LN_10;
        }
    }
    HermiteScaled { prev, cur, log_scale }
}

/// Gauss–Legendre nodes and weights on `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "gauss_legendre order must be >= 1");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    let xm = 0.5 * (b + a);
    let xl = 0.5 * (b - a);
    let nf = n as f64;
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 1..=n {
                let jf = j as f64;
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 {
                break;
            }
        }
        nodes[i] = xm - xl * z;
        nodes[n - 1 - i] = xm + xl * z;
        let w = 2.0 * xl / ((1.0 - z * z) * pp * pp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Equally spaced grid on `[a, b]` with trapezoidal weights.
pub fn trapezoid_rule(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2, "trapezoid rule needs at least two nodes");
    let h = (b - a) / (n - 1) as f64;
    let nodes: Vec<f64> = (0..n).map(|i| a + h * i as f64).collect();
    let mut weights = vec![h; n];
    weights[0] = 0.5 * h;
    weights[n - 1] = 0.5 * h;
    (nodes, weights)
}

/// Trapezoidal weights for an arbitrary sorted grid.
pub fn trapezoid_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    assert!(n >= 2, "trapezoid weights need at least two nodes");
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let h = nodes[i + 1] - nodes[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    w
}

/// Composite Gauss–Legendre integration of `f` over `[a, b]`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let mut total = 0.0;
    let h = (b - a) / panels as f64;
    for p in 0..panels {
        let (xs, ws) = gauss_legendre(order, a + h * p as f64, a + h * (p + 1) as f64);
        total += xs.iter().zip(&ws).map(|(&x, &w)| w * f(x)).sum::<f64>();
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_hermite_moments() {
        for &n in &[1usize, 2, 5, 40, 400, 2000] {
            let (z, w) = gauss_hermite(n);
            let total: f64 = w.iter().sum();
            assert_relative_eq!(total, std::f64::consts::PI.sqrt(), max_relative = 1e-12);
            if n >= 2 {
                let m2: f64 = z.iter().zip(&w).map(|(&z, &w)| w * z * z).sum();
                assert_relative_eq!(m2, std::f64::consts::PI.sqrt() / 2.0, max_relative = 1e-11);
            }
            if n >= 8 {
                // degree-14 moment: ∫ z^14 e^{-z²} = Γ(7.5) = 135135/128 √π
                let m14: f64 = z.iter().zip(&w).map(|(&z, &w)| w * z.powi(14)).sum();
                let exact = 135135.0 / 128.0 * std::f64::consts::PI.sqrt();
                assert_relative_eq!(m14, exact, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn gauss_hermite_integrates_smooth_non_polynomial() {
        // ∫ cos(z) e^{-z²} dz = √π e^{-1/4}
        let (z, w) = gauss_hermite(64);
        let got: f64 = z.iter().zip(&w).map(|(&z, &w)| w * z.cos()).sum();
        let exact = std::f64::consts::PI.sqrt() * (-0.25f64).exp();
        assert_relative_eq!(got, exact, max_relative = 1e-13);
    }

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        let (x, w) = gauss_legendre(8, 0.0, 1.0);
        let total: f64 = w.iter().sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-14);
        // ∫_0^1 x^15 dx = 1/16, exact at order 8
        let m: f64 = x.iter().zip(&w).map(|(&x, &w)| w * x.powi(15)).sum();
        assert_relative_eq!(m, 1.0 / 16.0, max_relative = 1e-13);
    }

    #[test]
    fn trapezoid_weights_sum_to_length() {
        let (_, w) = trapezoid_rule(51, 0.0, 1.0);
        assert_relative_eq!(w.iter().sum::<f64>(), 1.0, max_relative = 1e-14);
        let grid = vec![0.0, 0.1, 0.4, 1.0];
        let w = trapezoid_weights(&grid);
        assert_relative_eq!(w.iter().sum::<f64>(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn composite_integration_oscillatory() {
        let got = integrate(|x| (40.0 * x).sin(), 0.0, 1.0, 64, 12);
        let exact = (1.0 - (40.0f64).cos()) / 40.0;
        assert_relative_eq!(got, exact, epsilon = 1e-13);
    }
}
