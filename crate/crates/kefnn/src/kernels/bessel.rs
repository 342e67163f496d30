//! Modified Bessel function of the second kind `K_ν(x)` for real order
//! `ν ≥ 0` and `x > 0`: Temme's series below x = 2, a Steed continued
//! fraction above, then upward recurrence in the order.

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

pub(crate) fn modified_bessel_k(nu: f64, x: f64) -> f64 {
    assert!(nu >= 0.0 && x > 0.0, "modified_bessel_k needs nu >= 0 and x > 0");
    let nl = (nu + 0.5).floor() as usize;
    let xmu = nu - nl as f64;
    let xmu2 = xmu * xmu;
    let xi = 1.0 / x;
    let xi2 = 2.0 * xi;

    let (mut rkmu, mut rk1) = if x < 2.0 {
        // Temme's series for K_μ and K_{μ+1}.
        let x2 = 0.5 * x;
        let pimu = std::f64::consts::PI * xmu;
        let fact = if pimu.abs() < EPS { 1.0 } else { pimu / pimu.sin() };
        let d0 = -x2.ln();
        let e0 = xmu * d0;
        let fact2 = if e0.abs() < EPS { 1.0 } else { e0.sinh() / e0 };
        let (gam1, gam2, gampl, gammi) = temme_gammas(xmu);
        let mut ff = fact * (gam1 * e0.cosh() + gam2 * fact2 * d0);
        let mut sum = ff;
        let e = e0.exp();
        let mut p = 0.5 * e / gampl;
        let mut q = 0.5 / (e * gammi);
        let mut c = 1.0;
        let d = x2 * x2;
        let mut sum1 = p;
        for i in 1..=MAX_ITER {
            let fi = i as f64;
            ff = (fi * ff + p + q) / (fi * fi - xmu2);
            c *= d / fi;
            p /= fi - xmu;
            q /= fi + xmu;
            let del = c * ff;
            sum += del;
            sum1 += c * (p - fi * ff);
            if del.abs() < sum.abs() * EPS {
                break;
            }
        }
        (sum, sum1 * xi2)
    } else {
        // Steed's continued fraction CF2.
        let mut b = 2.0 * (1.0 + x);
        let mut d = 1.0 / b;
        let mut delh = d;
        let mut h = d;
        let mut q1 = 0.0;
        let mut q2 = 1.0;
        let a1 = 0.25 - xmu2;
        let mut q = a1;
        let mut c = a1;
        let mut a = -a1;
        let mut s = 1.0 + q * delh;
        for i in 2..=MAX_ITER {
            let fi = i as f64;
            a -= 2.0 * (fi - 1.0);
            c = -a * c / fi;
            let qnew = (q1 - b * q2) / a;
            q1 = q2;
            q2 = qnew;
            q += c * qnew;
            b += 2.0;
            d = 1.0 / (b + a * d);
            delh = (b * d - 1.0) * delh;
            h += delh;
            let dels = q * delh;
            s += dels;
            if (dels / s).abs() < EPS {
                break;
            }
        }
        let h = a1 * h;
        let rkmu = (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp() / s;
        let rk1 = rkmu * (xmu + x + 0.5 - h) * xi;
        (rkmu, rk1)
    };

    for i in 1..=nl {
        let rktemp = (xmu + i as f64) * xi2 * rk1 + rkmu;
        rkmu = rk1;
        rk1 = rktemp;
    }
    rkmu
}

/// Temme's auxiliary quantities for |μ| ≤ 1/2:
/// `gam1 = (1/Γ(1-μ) - 1/Γ(1+μ)) / (2μ)`, `gam2 = (1/Γ(1-μ) + 1/Γ(1+μ)) / 2`,
/// `gampl = 1/Γ(1+μ)`, `gammi = 1/Γ(1-μ)`.
fn temme_gammas(xmu: f64) -> (f64, f64, f64, f64) {
    let gampl = 1.0 / super::gamma_fn(1.0 + xmu);
    let gammi = 1.0 / super::gamma_fn(1.0 - xmu);
    let gam1 = if xmu.abs() < 1e-7 { -EULER_GAMMA } else { (gammi - gampl) / (2.0 * xmu) };
    let gam2 = 0.5 * (gammi + gampl);
    (gam1, gam2, gampl, gammi)
}
