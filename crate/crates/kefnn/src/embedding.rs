//! Estimating the kernel embedding `L_K f = ∫ K(·,t) f(t) dt` from discrete
//! observations, either with Monte-Carlo / fixed-grid quadrature weights or
//! with the constrained optimal quadrature rule.

use crate::kernels::{EigenSystem, KernelSpec};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A function known only through its values at discrete points (one-dimensional domain).
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    nodes: Vec<f64>,
    values: Vec<f64>,
    node_weights: Option<Vec<f64>>,
}

impl SampledFunction {
    pub fn new(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::rejected("sampled function needs at least one observation"));
        }
        if nodes.len() != values.len() {
            return Err(Error::rejected("nodes and values must have the same length"));
        }
        if values.iter().any(|v| !v.is_finite()) || nodes.iter().any(|v| !v.is_finite()) {
            return Err(Error::rejected("observations must be finite"));
        }
        Ok(Self { nodes, values, node_weights: None })
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.nodes.len() {
            return Err(Error::rejected("node weights must match the node count"));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::rejected("node weights must be non-negative"));
        }
        self.node_weights = Some(weights);
        Ok(self)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn node_weights(&self) -> Option<&[f64]> {
        self.node_weights.as_deref()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// `Σ_j θ_j K(·, t_j)` — the estimated embedded function.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingEstimate {
    kernel: KernelSpec,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl EmbeddingEstimate {
    pub fn new(kernel: KernelSpec, nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if nodes.len() != weights.len() {
            return Err(Error::rejected("nodes and weights must have the same length"));
        }
        if kernel.domain_dim() != 1 {
            return Err(Error::rejected("embedding estimates are one-dimensional"));
        }
        Ok(Self { kernel, nodes, weights })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn eval_one(&self, x: f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &theta)| theta * self.kernel.eval1(x, t))
            .sum()
    }

    /// Pointwise evaluation `x ↦ Σ_j θ_j K(x, t_j)`.
    pub fn eval(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.eval_one(x)).collect()
    }

    /// Squared RKHS norm `θᵀ G θ`.
    pub fn norm_sq(&self) -> f64 {
        cross_energy(&self.kernel, &self.nodes, &self.weights, &self.nodes, &self.weights)
    }
}

/// Monte-Carlo estimate with uniform weights `θ_j = f(t_j)/n`.
pub fn monte_carlo_embed(obs: &SampledFunction, kernel: &KernelSpec) -> Result<EmbeddingEstimate> {
    if obs.is_empty() {
        return Err(Error::rejected("cannot embed an empty observation set"));
    }
    let n = obs.len() as f64;
    let weights = obs.values.iter().map(|&v| v / n).collect();
    EmbeddingEstimate::new(kernel.clone(), obs.nodes.clone(), weights)
}

/// Quadrature estimate with caller-supplied node weights `θ_j = w_j f(t_j)`
/// (trapezoidal weights on deterministic grids).
pub fn weighted_embed(
    obs: &SampledFunction,
    kernel: &KernelSpec,
    quad_weights: &[f64],
) -> Result<EmbeddingEstimate> {
    if obs.is_empty() {
        return Err(Error::rejected("cannot embed an empty observation set"));
    }
    if quad_weights.len() != obs.len() {
        return Err(Error::rejected("quadrature weights must match the observation count"));
    }
    let weights = obs.values.iter().zip(quad_weights).map(|(&v, &w)| w * v).collect();
    EmbeddingEstimate::new(kernel.clone(), obs.nodes.clone(), weights)
}

/// Tabulated sampling density `τ(x) ∝ ρ(x) Σ_k λ_k/(λ_k+ε) φ_k(x)²` for the
/// optimal quadrature rule, with its inverse-CDF sampler.
#[derive(Debug, Clone)]
pub struct QuadratureDensity {
    grid: Vec<f64>,
    density: Vec<f64>,
    cdf: Vec<f64>,
    epsilon: f64,
}

impl QuadratureDensity {
    pub const DEFAULT_GRID: usize = 4096;

    pub fn from_eigensystem(sys: &EigenSystem, epsilon: f64, grid_size: usize) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::rejected("density regularizer epsilon must be > 0"));
        }
        if grid_size < 8 {
            return Err(Error::rejected("density tabulation grid is too small"));
        }
        let (lo, hi) = sys.measure().support_interval();
        let h = (hi - lo) / (grid_size - 1) as f64;
        let grid: Vec<f64> = (0..grid_size).map(|i| lo + h * i as f64).collect();
        let lambdas = sys.eigenvalues();
        let ratios: Vec<f64> = lambdas.iter().map(|&l| l / (l + epsilon)).collect();
        let mut density = Vec::with_capacity(grid_size);
        let mut phi = vec![0.0; sys.len()];
        for &x in &grid {
            sys.eval_first_at(x, &mut phi);
            let s: f64 = phi.iter().zip(&ratios).map(|(&p, &r)| r * p * p).sum();
            density.push(s * sys.measure().density1(x));
        }
        // Trapezoidal normalization; the tabulated density then integrates to
        // one on its own grid by construction.
        let mut total = 0.0;
        for i in 0..grid_size - 1 {
            total += 0.5 * h * (density[i] + density[i + 1]);
        }
        if !(total > 0.0) {
            return Err(Error::rejected("density normalization failed"));
        }
        for d in &mut density {
            *d /= total;
        }
        let mut cdf = vec![0.0; grid_size];
        for i in 0..grid_size - 1 {
            cdf[i + 1] = cdf[i] + 0.5 * h * (density[i] + density[i + 1]);
        }
        Ok(Self { grid, density, cdf, epsilon })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.density
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Mass assigned by the tabulated density (trapezoidal, should be 1).
    pub fn total_mass(&self) -> f64 {
        *self.cdf.last().unwrap()
    }

    /// `n` i.i.d. draws by inverse CDF on the tabulation grid; deterministic
    /// under a fixed seed.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::rejected("cannot sample zero nodes"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let top = self.total_mass();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let u: f64 = rng.gen::<f64>() * top;
            let k = match self.cdf.partition_point(|&c| c <= u) {
                0 => 1,
                k if k >= self.cdf.len() => self.cdf.len() - 1,
                k => k,
            };
            let c0 = self.cdf[k - 1];
            let c1 = self.cdf[k];
            let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
            out.push(self.grid[k - 1] + frac * (self.grid[k] - self.grid[k - 1]));
        }
        Ok(out)
    }
}

/// See [`QuadratureDensity::sample`].
pub fn sample_optimal_nodes(density: &QuadratureDensity, n: usize, seed: u64) -> Result<Vec<f64>> {
    density.sample(n, seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalEmbedDiagnostics {
    /// Ridge level at which the weights were solved.
    pub eta: f64,
    /// Whether the norm constraint was binding (η found by bisection).
    pub constraint_active: bool,
    /// Whether η had to be raised purely to keep the system well-conditioned.
    pub conditioning_ridge: bool,
}

/// Eigendecomposition of the Gram matrix on a fixed node set, reusable across
/// many right-hand sides (all samples of a dataset share the node draw).
pub struct OptimalWeightSolver {
    kernel: KernelSpec,
    nodes: Vec<f64>,
    gram: DMatrix<f64>,
    eigvals: Vec<f64>,
    eigvecs: DMatrix<f64>,
}

impl OptimalWeightSolver {
    pub fn new(kernel: &KernelSpec, nodes: &[f64]) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::rejected("optimal weights need at least one node"));
        }
        let n = nodes.len();
        let mut gram = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            for k in j..n {
                let v = kernel.eval1(nodes[j], nodes[k]);
                gram[(j, k)] = v;
                gram[(k, j)] = v;
            }
        }
        let eig = gram.clone().symmetric_eigen();
        // Clamp tiny negative roundoff: the Gram matrix is PSD.
        let eigvals = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
        Ok(Self {
            kernel: kernel.clone(),
            nodes: nodes.to_vec(),
            gram,
            eigvals,
            eigvecs: eig.eigenvectors,
        })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Minimize `θᵀGθ - 2bᵀθ` subject to `‖θ‖² ≤ radius_sq` by solving
    /// `(G + ηI)θ = b` with η ≥ 0 chosen so the constraint binds only when the
    /// unconstrained solution is infeasible.
    pub fn solve(&self, b: &[f64], radius_sq: f64) -> (Vec<f64>, OptimalEmbedDiagnostics) {
        let bt = self.eigvecs.transpose() * DVector::from_column_slice(b);
        let lambda_max = self.eigvals.iter().cloned().fold(0.0, f64::max);
        let lambda_min = self.eigvals.iter().cloned().fold(f64::INFINITY, f64::min);
        // Smallest ridge keeping the condition number at or below 1e12.
        let eta_floor = (lambda_max / 1e12 - lambda_min).max(0.0);
        let norm_sq_at = |eta: f64| -> f64 {
            self.eigvals.iter().zip(bt.iter()).map(|(&l, &b)| (b / (l + eta)).powi(2)).sum()
        };
        let mut eta = eta_floor;
        let mut constraint_active = false;
        if norm_sq_at(eta) > radius_sq + 1e-10 {
            constraint_active = true;
            let mut hi = eta_floor.max(1e-12);
            while norm_sq_at(hi) > radius_sq {
                hi *= 2.0;
            }
            let mut lo = eta_floor;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let s = norm_sq_at(mid);
                if s > radius_sq {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if (s - radius_sq).abs() <= 1e-10 {
                    break;
                }
            }
            eta = hi;
        }
        let scaled = DVector::from_iterator(
            self.eigvals.len(),
            self.eigvals.iter().zip(bt.iter()).map(|(&l, &b)| b / (l + eta)),
        );
        let theta = &self.eigvecs * scaled;
        let diag = OptimalEmbedDiagnostics {
            eta,
            constraint_active,
            conditioning_ridge: eta_floor > 0.0,
        };
        (theta.iter().copied().collect(), diag)
    }
}

/// Optimal quadrature weights for the embedding. `linear_term[j]` must
/// approximate `∫ K(t, t_j) f(t) dU(t)`; in simulation it comes from a fine
/// reference grid of the noiseless function, for ingested data from the
/// Monte-Carlo surrogate — the caller records which.
pub fn optimal_embed(
    obs: &SampledFunction,
    kernel: &KernelSpec,
    linear_term: &[f64],
) -> Result<(EmbeddingEstimate, OptimalEmbedDiagnostics)> {
    if obs.is_empty() {
        return Err(Error::rejected("cannot embed an empty observation set"));
    }
    if linear_term.len() != obs.len() {
        return Err(Error::rejected("linear term must match the observation count"));
    }
    let solver = OptimalWeightSolver::new(kernel, obs.nodes())?;
    let radius_sq = 4.0 / obs.len() as f64;
    let (weights, diag) = solver.solve(linear_term, radius_sq);
    Ok((EmbeddingEstimate::new(kernel.clone(), obs.nodes.clone(), weights)?, diag))
}

/// RKHS norm of the difference of two estimates over the union node set:
/// `√(θᵀGθ - 2 θᵀG'θ' + θ'ᵀG''θ')`.
pub fn rkhs_error(est: &EmbeddingEstimate, reference: &EmbeddingEstimate) -> Result<f64> {
    if est.kernel != reference.kernel {
        return Err(Error::KernelMismatch);
    }
    let ee = cross_energy(&est.kernel, &est.nodes, &est.weights, &est.nodes, &est.weights);
    let er =
        cross_energy(&est.kernel, &est.nodes, &est.weights, &reference.nodes, &reference.weights);
    let rr = cross_energy(
        &reference.kernel,
        &reference.nodes,
        &reference.weights,
        &reference.nodes,
        &reference.weights,
    );
    Ok((ee - 2.0 * er + rr).max(0.0).sqrt())
}

/// `Σ_{j,k} a_j b_k K(x_j, y_k)`, skipping pairs beyond the kernel's support
/// radius (the second set is scanned through a sorted copy).
fn cross_energy(kernel: &KernelSpec, xa: &[f64], wa: &[f64], xb: &[f64], wb: &[f64]) -> f64 {
    let radius = kernel.support_radius();
    let mut order: Vec<usize> = (0..xb.len()).collect();
    order.sort_by(|&i, &j| xb[i].partial_cmp(&xb[j]).unwrap());
    let sorted_x: Vec<f64> = order.iter().map(|&i| xb[i]).collect();
    let sorted_w: Vec<f64> = order.iter().map(|&i| wb[i]).collect();
    let mut acc = 0.0;
    for (&x, &a) in xa.iter().zip(wa) {
        if a == 0.0 {
            continue;
        }
        let lo = sorted_x.partition_point(|&v| v < x - radius);
        let hi = sorted_x.partition_point(|&v| v <= x + radius);
        let mut inner = 0.0;
        for k in lo..hi {
            inner += sorted_w[k] * kernel.eval1(x, sorted_x[k]);
        }
        acc += a * inner;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    use approx::assert_relative_eq;

    fn gauss(gamma: f64) -> KernelSpec {
        KernelSpec::gaussian(gamma, 1).unwrap()
    }

    #[test]
    fn monte_carlo_zero_and_constant() {
        let k = gauss(0.2);
        let obs = SampledFunction::new(vec![0.1, 0.5, 0.9], vec![0.0, 0.0, 0.0]).unwrap();
        let est = monte_carlo_embed(&obs, &k).unwrap();
        assert!(est.eval(&[0.0, 0.3, 1.0]).iter().all(|&v| v == 0.0));

        let c = 2.5;
        let obs = SampledFunction::new(vec![0.1, 0.5, 0.9], vec![c, c, c]).unwrap();
        let est = monte_carlo_embed(&obs, &k).unwrap();
        let x = 0.37;
        let expect = c / 3.0 * (k.eval1(x, 0.1) + k.eval1(x, 0.5) + k.eval1(x, 0.9));
        assert_relative_eq!(est.eval_one(x), expect, epsilon = 1e-15);
    }

    #[test]
    fn empty_observations_rejected() {
        assert!(SampledFunction::new(vec![], vec![]).is_err());
    }

    #[test]
    fn embed_eval_is_linear() {
        let k = gauss(0.3);
        let nodes = vec![0.0, 0.25, 0.5, 0.75, 1.0];
        let w1 = vec![0.3, -0.1, 0.7, 0.2, -0.5];
        let w2 = vec![-0.2, 0.4, 0.1, -0.9, 0.6];
        let sum: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| a + b).collect();
        let e1 = EmbeddingEstimate::new(k.clone(), nodes.clone(), w1).unwrap();
        let e2 = EmbeddingEstimate::new(k.clone(), nodes.clone(), w2).unwrap();
        let es = EmbeddingEstimate::new(k.clone(), nodes, sum).unwrap();
        let xs: Vec<f64> = (0..21).map(|i| i as f64 / 20.0).collect();
        for ((a, b), s) in e1.eval(&xs).iter().zip(e2.eval(&xs)).zip(es.eval(&xs)) {
            assert_relative_eq!(a + b, s, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_node_unit_weight_is_kernel_slice() {
        let k = gauss(0.15);
        let est = EmbeddingEstimate::new(k.clone(), vec![0.4], vec![1.0]).unwrap();
        for &x in &[0.0, 0.4, 0.8] {
            assert_eq!(est.eval_one(x), k.eval1(x, 0.4));
        }
    }

    #[test]
    fn rkhs_error_basics() {
        let k = gauss(0.2);
        let nodes = vec![0.1, 0.3, 0.8];
        let w = vec![0.5, -0.2, 0.9];
        let e = EmbeddingEstimate::new(k.clone(), nodes.clone(), w.clone()).unwrap();
        assert_relative_eq!(rkhs_error(&e, &e).unwrap(), 0.0, epsilon = 1e-9);

        // homogeneity against the zero estimate
        let zero = EmbeddingEstimate::new(k.clone(), nodes.clone(), vec![0.0; 3]).unwrap();
        let a = -3.7;
        let scaled =
            EmbeddingEstimate::new(k.clone(), nodes, w.iter().map(|&v| a * v).collect()).unwrap();
        assert_relative_eq!(
            rkhs_error(&scaled, &zero).unwrap(),
            a.abs() * rkhs_error(&e, &zero).unwrap(),
            max_relative = 1e-12
        );

        let other = EmbeddingEstimate::new(gauss(0.3), vec![0.1], vec![1.0]).unwrap();
        assert!(rkhs_error(&e, &other).is_err());
    }

    #[test]
    fn optimal_embed_unconstrained_when_feasible() {
        let k = gauss(0.5);
        let nodes = vec![0.0, 0.4, 0.9];
        // Small b keeps the unconstrained solution well inside the ball.
        let b = vec![1e-3, -2e-3, 1.5e-3];
        let obs = SampledFunction::new(nodes.clone(), vec![0.0; 3]).unwrap();
        let (est, diag) = optimal_embed(&obs, &k, &b).unwrap();
        assert!(!diag.constraint_active);
        assert_eq!(diag.eta, 0.0);
        // check G θ = b
        let solver = OptimalWeightSolver::new(&k, &nodes).unwrap();
        let g = solver.gram();
        for j in 0..3 {
            let got: f64 = (0..3).map(|l| g[(j, l)] * est.weights()[l]).sum();
            assert_relative_eq!(got, b[j], max_relative = 1e-8);
        }
    }

    #[test]
    fn optimal_embed_single_node_clamps() {
        let k = gauss(0.5);
        let obs = SampledFunction::new(vec![0.5], vec![1.0]).unwrap();
        // K(t,t)=1, b large: θ = clamp(b, ±2) since ‖θ‖² ≤ 4
        let (est, diag) = optimal_embed(&obs, &k, &[7.0]).unwrap();
        assert_relative_eq!(est.weights()[0], 2.0, max_relative = 1e-6);
        assert!(diag.constraint_active);
        let (est, _) = optimal_embed(&obs, &k, &[0.3]).unwrap();
        assert_relative_eq!(est.weights()[0], 0.3, max_relative = 1e-10);
    }

    #[test]
    fn optimal_embed_constraint_respected() {
        let k = gauss(0.05);
        let nodes: Vec<f64> = (0..40).map(|i| i as f64 / 39.0).collect();
        let b: Vec<f64> = nodes.iter().map(|&t| (3.0 * t).sin()).collect();
        let obs = SampledFunction::new(nodes, b.clone()).unwrap();
        let (est, diag) = optimal_embed(&obs, &k, &b).unwrap();
        let norm_sq: f64 = est.weights().iter().map(|&w| w * w).sum();
        assert!(norm_sq <= 4.0 / 40.0 + 1e-10, "norm constraint violated: {norm_sq}");
        assert!(diag.constraint_active);
    }

    #[test]
    fn density_sampling_deterministic_and_in_support() {
        let k = gauss(0.4);
        let m = crate::kernels::MeasureSpec::uniform(1).unwrap();
        let sys = crate::kernels::nystrom_eigensystem(&k, &m, 128, 32).unwrap();
        let density = QuadratureDensity::from_eigensystem(&sys, 1e-3, 512).unwrap();
        assert_relative_eq!(density.total_mass(), 1.0, epsilon = 1e-8);
        assert!(density.values().iter().all(|&v| v >= 0.0));
        let a = density.sample(64, 9).unwrap();
        let b = density.sample(64, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert!(density.sample(0, 1).is_err());
        let one = density.sample(1, 3).unwrap();
        assert_eq!(one.len(), 1);
    }
}
