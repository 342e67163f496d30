//! Kernel definitions and Mercer eigensystems for the embedding and
//! projection steps.
//!
//! The Gaussian kernel follows the convention `k_γ(x,t) = exp(-‖x-t‖²/γ²)`.
//! The Gaussian measure with bandwidth `β` has density
//! `ρ(x) = (β/√π)^d exp(-β²‖x‖²)`, i.e. `β` enters as an inverse length
//! scale. This is the convention under which the closed-form Gauss–Hermite
//! eigensystem below satisfies the eigen-identity
//! `∫ K(x,t) φ_i(t) dμ(t) = λ_i φ_i(x)` (verified by the quadrature oracles
//! in the test suite), and under which the shipped experiment defaults
//! (γ = 0.033, β = 0.008) resolve the simulated signals.

use crate::quadrature;
use crate::{Error, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

mod bessel;

const EIGENVALUE_FLOOR: f64 = 1e-300;

/// Kernel family plus its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum KernelVariant {
    /// `exp(-‖x-t‖²/γ²)`.
    Gaussian { gamma: f64 },
    /// Pointwise product over coordinates of univariate Matérn kernels
    /// `k_ν(u,v) = 2^{1-ν}/Γ(ν) (√(2ν) ℓ |u-v|)^ν K_ν(√(2ν) ℓ |u-v|)`.
    MaternProduct { nu: f64, ell: f64 },
    /// `Σ_j c_j exp(-‖x-t‖²/γ_j²)` with coefficients of either sign.
    GaussianMixture { terms: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    variant: KernelVariant,
    domain_dim: usize,
}

impl KernelSpec {
    pub fn gaussian(gamma: f64, domain_dim: usize) -> Result<Self> {
        if !(gamma > 0.0) || domain_dim == 0 {
            return Err(Error::rejected("gaussian kernel needs gamma > 0 and dim >= 1"));
        }
        Ok(Self { variant: KernelVariant::Gaussian { gamma }, domain_dim })
    }

    pub fn matern_product(nu: f64, ell: f64, domain_dim: usize) -> Result<Self> {
        if !(nu > 0.0) || !(ell > 0.0) || domain_dim == 0 {
            return Err(Error::rejected("matern kernel needs nu > 0, ell > 0, dim >= 1"));
        }
        Ok(Self { variant: KernelVariant::MaternProduct { nu, ell }, domain_dim })
    }

    pub fn gaussian_mixture(terms: Vec<(f64, f64)>, domain_dim: usize) -> Result<Self> {
        if terms.is_empty() || domain_dim == 0 {
            return Err(Error::rejected("mixture needs at least one term"));
        }
        if terms.iter().any(|&(_, g)| !(g > 0.0)) {
            return Err(Error::rejected("mixture bandwidths must be > 0"));
        }
        Ok(Self { variant: KernelVariant::GaussianMixture { terms }, domain_dim })
    }

    /// The smoothing mixture `Σ_{j=1}^r C(r,j) (-1)^{1-j} j^{-d} (γ²π)^{-d/2} k_{jγ}`
    /// whose component bandwidths are the multiples `jγ`.
    pub fn multi_gaussian(order: usize, gamma: f64, domain_dim: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::rejected("multi-gaussian order must be >= 1"));
        }
        if !(gamma > 0.0) || domain_dim == 0 {
            return Err(Error::rejected("multi-gaussian needs gamma > 0 and dim >= 1"));
        }
        let d = domain_dim as i32;
        let norm = (gamma * gamma * std::f64::consts::PI).powf(-0.5 * domain_dim as f64);
        let mut terms = Vec::with_capacity(order);
        for j in 1..=order {
            let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
            let coeff = sign * binomial(order, j) * (j as f64).powi(-d) * norm;
            terms.push((coeff, j as f64 * gamma));
        }
        Self::gaussian_mixture(terms, domain_dim)
    }

    pub fn variant(&self) -> &KernelVariant {
        &self.variant
    }

    pub fn domain_dim(&self) -> usize {
        self.domain_dim
    }

    /// `K(x,t)`; rejects points of the wrong dimension.
    pub fn eval(&self, x: &[f64], t: &[f64]) -> Result<f64> {
        if x.len() != self.domain_dim {
            return Err(Error::DimensionMismatch { expected: self.domain_dim, got: x.len() });
        }
        if t.len() != self.domain_dim {
            return Err(Error::DimensionMismatch { expected: self.domain_dim, got: t.len() });
        }
        Ok(self.eval_unchecked(x, t))
    }

    pub fn eval_unchecked(&self, x: &[f64], t: &[f64]) -> f64 {
        match &self.variant {
            KernelVariant::Gaussian { gamma } => {
                let d2: f64 = x.iter().zip(t).map(|(&a, &b)| (a - b) * (a - b)).sum();
                (-d2 / (gamma * gamma)).exp()
            }
            KernelVariant::GaussianMixture { terms } => {
                let d2: f64 = x.iter().zip(t).map(|(&a, &b)| (a - b) * (a - b)).sum();
                terms.iter().map(|&(c, g)| c * (-d2 / (g * g)).exp()).sum()
            }
            KernelVariant::MaternProduct { nu, ell } => x
                .iter()
                .zip(t)
                .map(|(&a, &b)| matern_1d(*nu, *ell, (a - b).abs()))
                .product(),
        }
    }

    /// One-dimensional fast path.
    #[inline]
    pub fn eval1(&self, x: f64, t: f64) -> f64 {
        debug_assert_eq!(self.domain_dim, 1);
        match &self.variant {
            KernelVariant::Gaussian { gamma } => {
                let d = x - t;
                (-d * d / (gamma * gamma)).exp()
            }
            KernelVariant::GaussianMixture { terms } => {
                let d2 = (x - t) * (x - t);
                terms.iter().map(|&(c, g)| c * (-d2 / (g * g)).exp()).sum()
            }
            KernelVariant::MaternProduct { nu, ell } => matern_1d(*nu, *ell, (x - t).abs()),
        }
    }

    /// Radius beyond which `|K(x, t)|` is negligible (used to size
    /// integration grids around embedding nodes).
    pub fn support_radius(&self) -> f64 {
        match &self.variant {
            KernelVariant::Gaussian { gamma } => 8.0 * gamma,
            KernelVariant::GaussianMixture { terms } => {
                8.0 * terms.iter().map(|&(_, g)| g).fold(0.0, f64::max)
            }
            KernelVariant::MaternProduct { nu, ell } => 45.0 / ((2.0 * nu).sqrt() * ell),
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

fn matern_1d(nu: f64, ell: f64, r: f64) -> f64 {
    let z = (2.0 * nu).sqrt() * ell * r;
    if z < 1e-12 {
        return 1.0;
    }
    if z > 700.0 {
        return 0.0;
    }
    let kv = bessel::modified_bessel_k(nu, z);
    2.0f64.powf(1.0 - nu) / gamma_fn(nu) * z.powf(nu) * kv
}

/// Lanczos approximation of Γ(x) for x > 0.
pub(crate) fn gamma_fn(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma_fn(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut a = COEF[0];
        for (i, &c) in COEF.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        let t = x + G + 0.5;
        (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
    }
}

/// Probability measure against which the projection operator is defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MeasureVariant {
    /// Density `(β/√π)^d exp(-β²‖x‖²)`, centered at the origin.
    Gaussian { beta: f64 },
    /// Uniform on `[0,1]^d`.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureSpec {
    variant: MeasureVariant,
    domain_dim: usize,
}

impl MeasureSpec {
    pub fn gaussian(beta: f64, domain_dim: usize) -> Result<Self> {
        if !(beta > 0.0) || domain_dim == 0 {
            return Err(Error::rejected("gaussian measure needs beta > 0 and dim >= 1"));
        }
        Ok(Self { variant: MeasureVariant::Gaussian { beta }, domain_dim })
    }

    pub fn uniform(domain_dim: usize) -> Result<Self> {
        if domain_dim == 0 {
            return Err(Error::rejected("uniform measure needs dim >= 1"));
        }
        Ok(Self { variant: MeasureVariant::Uniform, domain_dim })
    }

    pub fn variant(&self) -> &MeasureVariant {
        &self.variant
    }

    pub fn domain_dim(&self) -> usize {
        self.domain_dim
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        match &self.variant {
            MeasureVariant::Gaussian { beta } => {
                let norm = (beta / std::f64::consts::PI.sqrt()).powi(self.domain_dim as i32);
                let q: f64 = x.iter().map(|&v| v * v).sum();
                norm * (-beta * beta * q).exp()
            }
            MeasureVariant::Uniform => {
                if x.iter().all(|&v| (0.0..=1.0).contains(&v)) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    #[inline]
    pub fn density1(&self, x: f64) -> f64 {
        debug_assert_eq!(self.domain_dim, 1);
        match &self.variant {
            MeasureVariant::Gaussian { beta } => {
                beta / std::f64::consts::PI.sqrt() * (-beta * beta * x * x).exp()
            }
            MeasureVariant::Uniform => {
                if (0.0..=1.0).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Interval carrying all but a negligible share of the mass (one dimension).
    pub fn support_interval(&self) -> (f64, f64) {
        match &self.variant {
            MeasureVariant::Gaussian { beta } => (-6.0 / beta, 6.0 / beta),
            MeasureVariant::Uniform => (0.0, 1.0),
        }
    }

    /// Discrete probability approximation of the measure: Gauss–Hermite for a
    /// Gaussian measure, midpoint for the uniform one. One-dimensional.
    pub fn quadrature(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(self.domain_dim, 1, "measure quadrature grids are one-dimensional");
        match &self.variant {
            MeasureVariant::Gaussian { beta } => {
                let (z, w) = quadrature::gauss_hermite(n);
                let nodes = z.iter().map(|&z| z / beta).collect();
                let weights = w.iter().map(|&w| w / std::f64::consts::PI.sqrt()).collect();
                (nodes, weights)
            }
            MeasureVariant::Uniform => {
                let nodes = (0..n).map(|k| (k as f64 + 0.5) / n as f64).collect();
                (nodes, vec![1.0 / n as f64; n])
            }
        }
    }
}

/// Where an eigensystem's eigenpairs came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Analytic,
    Nystrom { grid_size: usize },
}

/// Eigenvalues and eigenfunction evaluators of the integral operator
/// `L_K^μ f = ∫ K(·,t) f(t) dμ(t)`.
///
/// Immutable after construction; evaluation is safe from concurrent threads.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    kernel: KernelSpec,
    measure: MeasureSpec,
    eigenvalues: Vec<f64>,
    requested: usize,
    basis: EigenBasis,
}

#[derive(Debug, Clone)]
enum EigenBasis {
    GaussHermite(GaussHermiteBasis),
    Nystrom(NystromBasis),
}

#[derive(Debug, Clone)]
struct GaussHermiteBasis {
    /// Argument scale of the Hermite functions: α β_F.
    scale: f64,
    /// Envelope exponent coefficient: α²/2.
    growth: f64,
    /// Leading constant: √β_F · π^{1/4}.
    front: f64,
    dim: usize,
    /// Per eigenpair, the 0-based per-coordinate Hermite degrees.
    indices: Vec<Vec<usize>>,
    max_degree: usize,
}

#[derive(Debug, Clone)]
struct NystromBasis {
    /// Grid nodes, one `domain_dim`-length row per node.
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
    /// `funcs[[i, k]] = φ_i(s_k)`.
    funcs: Array2<f64>,
}

impl EigenSystem {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// True when fewer eigenpairs than requested survived the numerical floor.
    pub fn was_truncated(&self) -> bool {
        self.eigenvalues.len() < self.requested
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn measure(&self) -> &MeasureSpec {
        &self.measure
    }

    pub fn provenance(&self) -> Provenance {
        match &self.basis {
            EigenBasis::GaussHermite(_) => Provenance::Analytic,
            EigenBasis::Nystrom(b) => Provenance::Nystrom { grid_size: b.nodes.len() },
        }
    }

    /// Identifier binding feature vectors to this eigensystem truncation.
    pub fn basis_id(&self) -> String {
        let prov = match self.provenance() {
            Provenance::Analytic => "analytic".to_string(),
            Provenance::Nystrom { grid_size } => format!("nystrom{grid_size}"),
        };
        format!("{:?}|{:?}|{}|{}", self.kernel.variant, self.measure.variant, prov, self.len())
    }

    /// `φ_i(x)` for 0-based index `i`.
    pub fn eval(&self, index: usize, x: &[f64]) -> Result<f64> {
        if index >= self.len() {
            return Err(Error::NotEnoughEigenpairs { requested: index + 1, available: self.len() });
        }
        if x.len() != self.kernel.domain_dim {
            return Err(Error::DimensionMismatch {
                expected: self.kernel.domain_dim,
                got: x.len(),
            });
        }
        Ok(match &self.basis {
            EigenBasis::GaussHermite(b) => b.eval(&b.indices[index], x),
            EigenBasis::Nystrom(b) => b.eval(&self.kernel, self.eigenvalues[index], index, x),
        })
    }

    /// Evaluate the first `out.len()` eigenfunctions at a scalar point in one
    /// recurrence pass (the per-sample hot path of the projection step).
    pub fn eval_first_at(&self, x: f64, out: &mut [f64]) {
        assert!(out.len() <= self.len(), "more eigenfunctions requested than available");
        match &self.basis {
            EigenBasis::GaussHermite(b) => {
                debug_assert_eq!(b.dim, 1);
                let (mantissas, scales) = weighted_hermite_all(b.scale * x, b.max_degree + 1);
                let envelope = b.growth * x * x;
                let plain = envelope.exp();
                for (i, slot) in out.iter_mut().enumerate() {
                    let deg = b.indices[i][0];
                    *slot = if scales[deg] == 0.0 {
                        b.front * mantissas[deg] * plain
                    } else {
                        b.front * mantissas[deg] * safe_exp(scales[deg] + envelope)
                    };
                }
            }
            EigenBasis::Nystrom(b) => {
                let xs = [x];
                for (i, slot) in out.iter_mut().enumerate() {
                    *slot = b.eval(&self.kernel, self.eigenvalues[i], i, &xs);
                }
            }
        }
    }
}

fn safe_exp(e: f64) -> f64 {
    if e < -745.0 {
        0.0
    } else {
        e.exp()
    }
}

impl GaussHermiteBasis {
    fn eval(&self, index: &[usize], x: &[f64]) -> f64 {
        let mut acc = 1.0;
        for (&deg, &xi) in index.iter().zip(x) {
            let (mantissas, scales) = weighted_hermite_all(self.scale * xi, deg + 1);
            let e = scales[deg] + self.growth * xi * xi;
            acc *= self.front * mantissas[deg] * safe_exp(e);
        }
        acc
    }
}

impl NystromBasis {
    /// Off-grid extension `φ_i(x) = (1/λ_i) Σ_k w_k K(x, s_k) φ_i(s_k)`.
    fn eval(&self, kernel: &KernelSpec, lambda: f64, index: usize, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (k, node) in self.nodes.iter().enumerate() {
            acc += self.weights[k] * kernel.eval_unchecked(x, node) * self.funcs[[index, k]];
        }
        acc / lambda
    }
}

/// Normalized weighted Hermite functions `h_j(u) = H_j(u) e^{-u²/2} / √(2^j j! √π)`
/// for `j = 0..count`, returned as mantissa/log-scale pairs so deep-tail
/// evaluations neither underflow nor overflow.
fn weighted_hermite_all(u: f64, count: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mantissas = Vec::with_capacity(count);
    let mut scales = Vec::with_capacity(count);
    let l0 = -0.5 * u * u - 0.25 * std::f64::consts::PI.ln();
    let (mut ls, mut prev) = if l0 < -300.0 { (l0, 1.0) } else { (0.0, l0.exp()) };
    mantissas.push(prev);
    scales.push(ls);
    if count == 1 {
        return (mantissas, scales);
    }
    let mut cur = u * std::f64::consts::SQRT_2 * prev;
    mantissas.push(cur);
    scales.push(ls);
    for j in 2..count {
        let jf = j as f64;
        let next = u * (2.0 / jf).sqrt() * cur - ((jf - 1.0) / jf).sqrt() * prev;
        prev = cur;
        cur = next;
        let mag = prev.abs().max(cur.abs());
        if mag > 1e250 {
            prev *= 1e-250;
            cur *= 1e-250;
            ls += 250.0 * std::f64::consts::LN_10;
        } else if mag > 0.0 && mag < 1e-250 {
            prev *= 1e250;
            cur *= 1e250;
            ls -= 250.0 * std::f64::consts::LN_10;
        }
        mantissas.push(cur);
        scales.push(ls);
    }
    (mantissas, scales)
}

/// Closed-form eigensystem of the Gaussian kernel `k_γ` under the Gaussian
/// measure with bandwidth `β`: geometric eigenvalues and Hermite-polynomial
/// eigenfunctions, tensorized for `d > 1` and re-sorted non-increasing (ties
/// broken by lexicographic multi-index). Requests past the `1e-300`
/// eigenvalue floor come back shortened; check [`EigenSystem::was_truncated`].
pub fn gaussian_eigensystem(
    gamma: f64,
    beta: f64,
    dim: usize,
    count: usize,
) -> Result<EigenSystem> {
    if !(gamma > 0.0) || !(beta > 0.0) {
        return Err(Error::rejected("gaussian eigensystem needs gamma > 0 and beta > 0"));
    }
    if count == 0 || dim == 0 {
        return Err(Error::rejected("gaussian eigensystem needs count >= 1 and dim >= 1"));
    }
    let eps = 1.0 / gamma;
    let alpha = beta;
    let ratio2 = (2.0 * eps / alpha) * (2.0 * eps / alpha);
    let beta_f = (1.0 + ratio2).powf(0.25);
    let delta_sq = 0.5 * alpha * alpha * (beta_f * beta_f - 1.0);
    let s = alpha * alpha + delta_sq + eps * eps;
    let lambda1 = alpha / s.sqrt();
    let q = eps * eps / s;

    // Enumerate tensor eigenpairs by total degree; every multi-index of a
    // given degree shares the eigenvalue λ₁^d q^degree.
    let mut eigenvalues = Vec::with_capacity(count);
    let mut indices = Vec::with_capacity(count);
    let mut degree = 0usize;
    'outer: loop {
        let lam = lambda1.powi(dim as i32) * q.powi(degree as i32);
        if !(lam > EIGENVALUE_FLOOR) {
            break;
        }
        for index in compositions(degree, dim) {
            eigenvalues.push(lam);
            indices.push(index);
            if eigenvalues.len() == count {
                break 'outer;
            }
        }
        degree += 1;
    }
    if eigenvalues.is_empty() {
        return Err(Error::rejected("all requested eigenvalues underflow the floor"));
    }
    let max_degree = indices.iter().flat_map(|ix| ix.iter().copied()).max().unwrap_or(0);
    Ok(EigenSystem {
        kernel: KernelSpec::gaussian(gamma, dim)?,
        measure: MeasureSpec::gaussian(beta, dim)?,
        eigenvalues,
        requested: count,
        basis: EigenBasis::GaussHermite(GaussHermiteBasis {
            scale: alpha * beta_f,
            growth: 0.5 * alpha * alpha,
            front: beta_f.sqrt() * std::f64::consts::PI.powf(0.25),
            dim,
            indices,
            max_degree,
        }),
    })
}

/// All length-`dim` compositions of `total` in lexicographic order.
fn compositions(total: usize, dim: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; dim];
    fn rec(total: usize, pos: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if pos + 1 == cur.len() {
            cur[pos] = total;
            out.push(cur.clone());
            return;
        }
        for v in (0..=total).rev() {
            cur[pos] = v;
            rec(total - v, pos + 1, cur, out);
        }
    }
    rec(total, 0, &mut cur, &mut out);
    out
}

/// Numerical eigensystem on a measure-adapted quadrature grid. Eigenfunction
/// evaluation extends off-grid by the Nyström formula and is orthonormal
/// w.r.t. the discrete measure. Near-zero eigenvalues are excluded.
pub fn nystrom_eigensystem(
    kernel: &KernelSpec,
    measure: &MeasureSpec,
    grid_size: usize,
    count: usize,
) -> Result<EigenSystem> {
    if grid_size < count {
        return Err(Error::rejected("nystrom grid_size must be >= count"));
    }
    if kernel.domain_dim() != measure.domain_dim() {
        return Err(Error::DimensionMismatch {
            expected: kernel.domain_dim(),
            got: measure.domain_dim(),
        });
    }
    if kernel.domain_dim() != 1 {
        return Err(Error::rejected("nystrom eigensystems are implemented for dimension 1"));
    }
    let (raw_nodes, raw_weights) = measure.quadrature(grid_size);
    // Weights in the far tail underflow to exact zeros; such nodes carry no
    // mass in the discrete measure and are dropped.
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for (x, w) in raw_nodes.into_iter().zip(raw_weights) {
        if w > 0.0 {
            nodes.push(x);
            weights.push(w);
        }
    }
    let n = nodes.len();
    if n < count {
        return Err(Error::rejected("too few grid nodes with positive weight"));
    }

    let mut b = nalgebra::DMatrix::<f64>::zeros(n, n);
    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    for j in 0..n {
        for k in j..n {
            let v = kernel.eval1(nodes[j], nodes[k]) * sqrt_w[j] * sqrt_w[k];
            b[(j, k)] = v;
            b[(k, j)] = v;
        }
    }
    let eig = b.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[c].partial_cmp(&eig.eigenvalues[a]).unwrap());

    let lambda_max = eig.eigenvalues[order[0]];
    let floor = (lambda_max * 1e-14).max(EIGENVALUE_FLOOR);
    let mut eigenvalues = Vec::new();
    let mut funcs = Array2::<f64>::zeros((count.min(n), n));
    for (i, &col) in order.iter().enumerate() {
        if i == count {
            break;
        }
        let lam = eig.eigenvalues[col];
        if !(lam > floor) {
            break;
        }
        eigenvalues.push(lam);
        for k in 0..n {
            funcs[[i, k]] = eig.eigenvectors[(k, col)] / sqrt_w[k];
        }
    }
    if eigenvalues.is_empty() {
        return Err(Error::rejected("no eigenvalues above the numerical floor"));
    }
    let kept = eigenvalues.len();
    let funcs = funcs.slice_move(ndarray::s![..kept, ..]);
    // Fix a sign convention so rebuilt systems agree: first nonzero grid value positive.
    let mut funcs = funcs;
    for i in 0..kept {
        let lead = funcs.row(i).iter().copied().find(|v| v.abs() > 1e-12).unwrap_or(1.0);
        if lead < 0.0 {
            funcs.row_mut(i).map_inplace(|v| *v = -*v);
        }
    }
    let nodes = nodes.into_iter().map(|x| vec![x]).collect();
    Ok(EigenSystem {
        kernel: kernel.clone(),
        measure: measure.clone(),
        eigenvalues,
        requested: count,
        basis: EigenBasis::Nystrom(NystromBasis { nodes, weights, funcs }),
    })
}

/// Worst truncation residual `max |K(x,t) - Σ_{i<k} λ_i φ_i(x) φ_i(t)|` over
/// the probe pairs.
pub fn mercer_truncation_error(
    sys: &EigenSystem,
    k: usize,
    probes: &[(Vec<f64>, Vec<f64>)],
) -> Result<f64> {
    if k > sys.len() {
        return Err(Error::NotEnoughEigenpairs { requested: k, available: sys.len() });
    }
    let mut worst = 0.0f64;
    for (x, t) in probes {
        let mut partial = 0.0;
        for i in 0..k {
            partial += sys.eigenvalues[i] * sys.eval(i, x)? * sys.eval(i, t)?;
        }
        worst = worst.max((sys.kernel.eval(x, t)? - partial).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gaussian_kernel_zero_distance_and_bandwidth_point() {
        let k = KernelSpec::gaussian(0.033, 1).unwrap();
        assert_eq!(k.eval(&[0.42], &[0.42]).unwrap(), 1.0);
        let k = KernelSpec::gaussian(0.25, 1).unwrap();
        assert_relative_eq!(k.eval(&[0.0], &[0.25]).unwrap(), (-1.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn multi_gaussian_diagonal_value() {
        // order 2, d = 1, γ = 1 at zero distance: (2 - 1/2) π^{-1/2}
        let k = KernelSpec::multi_gaussian(2, 1.0, 1).unwrap();
        let expect = 1.5 / std::f64::consts::PI.sqrt();
        assert_relative_eq!(k.eval(&[0.3], &[0.3]).unwrap(), expect, epsilon = 1e-14);
        // diagonal equals the sum of coefficients
        if let KernelVariant::GaussianMixture { terms } = k.variant() {
            let coeff_sum: f64 = terms.iter().map(|&(c, _)| c).sum();
            assert_relative_eq!(coeff_sum, expect, epsilon = 1e-14);
        } else {
            panic!("expected mixture");
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let k = KernelSpec::gaussian(1.0, 2).unwrap();
        assert!(k.eval(&[0.0], &[0.0, 1.0]).is_err());
        assert!(k.eval(&[0.0, 1.0], &[0.0]).is_err());
    }

    #[test]
    fn matern_half_integer_closed_forms() {
        // ν = 1/2: exp(-z); ν = 3/2: (1+z)exp(-z); ν = 5/2: (1+z+z²/3)exp(-z)
        for &(nu, ell) in &[(0.5, 2.0), (1.5, 1.0), (2.5, 0.7)] {
            let k = KernelSpec::matern_product(nu, ell, 1).unwrap();
            for &r in &[1e-9, 0.05, 0.3, 1.0, 2.5] {
                let z = (2.0 * nu as f64).sqrt() * ell * r;
                let expect = match nu {
                    x if x == 0.5 => (-z).exp(),
                    x if x == 1.5 => (1.0 + z) * (-z).exp(),
                    _ => (1.0 + z + z * z / 3.0) * (-z).exp(),
                };
                assert_relative_eq!(k.eval(&[0.0], &[r]).unwrap(), expect, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn matern_product_dimension_two() {
        let k1 = KernelSpec::matern_product(1.5, 1.0, 1).unwrap();
        let k2 = KernelSpec::matern_product(1.5, 1.0, 2).unwrap();
        let a = k1.eval(&[0.1], &[0.6]).unwrap();
        let b = k1.eval(&[0.9], &[0.4]).unwrap();
        assert_relative_eq!(k2.eval(&[0.1, 0.9], &[0.6, 0.4]).unwrap(), a * b, epsilon = 1e-14);
    }

    #[test]
    fn gaussian_eigenvalues_geometric_and_trace_one() {
        let sys = gaussian_eigensystem(0.033, 0.008, 1, 150).unwrap();
        assert_eq!(sys.len(), 150);
        let lam = sys.eigenvalues();
        let r0 = lam[1] / lam[0];
        for i in 1..lam.len() - 1 {
            assert_relative_eq!(lam[i + 1] / lam[i], r0, max_relative = 1e-12);
        }
        assert!(r0 < 1.0);
        // Infinite trace λ₁/(1-q) equals ∫K(x,x)dμ = 1 exactly in this family.
        let trace = lam[0] / (1.0 - r0);
        assert_relative_eq!(trace, 1.0, epsilon = 1e-12);
        // A fast-decaying parametrization reaches the trace within the
        // materialized pairs alone.
        let sys = gaussian_eigensystem(1.0, 1.0, 1, 80).unwrap();
        let total: f64 = sys.eigenvalues().iter().sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn gaussian_eigensystem_truncates_at_floor() {
        // Strong decay: requesting far more pairs than double precision holds.
        let sys = gaussian_eigensystem(10.0, 1.0, 1, 4000).unwrap();
        assert!(sys.was_truncated());
        assert!(*sys.eigenvalues().last().unwrap() > 1e-300);
    }

    #[test]
    fn tensor_eigenvalues_sorted_with_lex_ties() {
        let sys = gaussian_eigensystem(0.5, 1.0, 2, 20).unwrap();
        let lam = sys.eigenvalues();
        for i in 1..lam.len() {
            assert!(lam[i] <= lam[i - 1] + 1e-18);
        }
        if let EigenBasis::GaussHermite(b) = &sys.basis {
            assert_eq!(b.indices[0], vec![0, 0]);
            // degree-1 block in lexicographic order: (1,0) before (0,1)
            assert_eq!(b.indices[1], vec![1, 0]);
            assert_eq!(b.indices[2], vec![0, 1]);
        } else {
            panic!("expected analytic basis");
        }
    }

    #[test]
    fn nystrom_constant_kernel_is_rank_one() {
        let k = KernelSpec::gaussian_mixture(vec![(1.0, 1e6)], 1).unwrap(); // K ≈ 1
        let m = MeasureSpec::uniform(1).unwrap();
        let sys = nystrom_eigensystem(&k, &m, 200, 1).unwrap();
        assert_relative_eq!(sys.eigenvalues()[0], 1.0, epsilon = 1e-9);
        for &x in &[0.1, 0.5, 0.9] {
            assert_relative_eq!(sys.eval(0, &[x]).unwrap(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn truncation_error_monotone_in_k() {
        let k = KernelSpec::gaussian(0.5, 1).unwrap();
        let m = MeasureSpec::uniform(1).unwrap();
        let sys = nystrom_eigensystem(&k, &m, 64, 64).unwrap();
        let probes: Vec<_> =
            (0..12).map(|i| (vec![(i as f64) / 12.0], vec![1.0 - (i as f64) / 13.0])).collect();
        let full = mercer_truncation_error(&sys, sys.len(), &probes).unwrap();
        assert!(full < 1e-8, "full reconstruction residual {full}");
        let e5 = mercer_truncation_error(&sys, 5, &probes).unwrap();
        let e12 = mercer_truncation_error(&sys, 12, &probes).unwrap();
        assert!(e5 >= e12);
        assert!(mercer_truncation_error(&sys, sys.len() + 1, &probes).is_err());
    }
}
