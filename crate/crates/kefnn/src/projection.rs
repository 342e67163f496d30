//! Projection of an estimated embedded function onto the leading
//! eigenfunctions: the `d₁`-dimensional feature vector fed to the network.

use crate::embedding::EmbeddingEstimate;
use crate::kernels::EigenSystem;
use crate::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector};

/// Projection coefficients bound to a specific eigensystem truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub coefficients: Vec<f64>,
    pub basis_id: String,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }
}

/// Numerical-integration projection: entry `ℓ = Σ_k w_k ĝ(s_k) φ_ℓ(s_k)` where
/// `ĝ` is the embedding estimate and the weights already incorporate the
/// measure density (the projection integral is against dμ).
pub fn project_numint(
    est: &EmbeddingEstimate,
    sys: &EigenSystem,
    d1: usize,
    grid: &[f64],
    grid_weights: &[f64],
) -> Result<FeatureVector> {
    if d1 > sys.len() {
        return Err(Error::NotEnoughEigenpairs { requested: d1, available: sys.len() });
    }
    if grid.len() != grid_weights.len() || grid.is_empty() {
        return Err(Error::rejected("grid and weights must be non-empty and equal length"));
    }
    let mut coefficients = vec![0.0; d1];
    let mut phi = vec![0.0; d1];
    for (&s, &w) in grid.iter().zip(grid_weights) {
        let g = est.eval_one(s);
        if g == 0.0 || w == 0.0 {
            continue;
        }
        sys.eval_first_at(s, &mut phi);
        for (c, &p) in coefficients.iter_mut().zip(&phi) {
            *c += w * g * p;
        }
    }
    Ok(FeatureVector { coefficients, basis_id: sys.basis_id() })
}

/// Result of the least-squares projection path.
#[derive(Debug, Clone)]
pub struct LsqProjection {
    pub features: FeatureVector,
    /// Ridge added to the normal equations when the design was rank deficient.
    pub ridge: Option<f64>,
    /// Residual sum of squares at the returned coefficients.
    pub residual: f64,
}

/// Least-squares projection: coefficients minimizing
/// `Σ_k (ĝ(u_k) - Σ_ℓ α_ℓ φ_ℓ(u_k))²` over the test points, solved through
/// the normal equations with a Cholesky factorization.
pub fn project_lsq(
    est: &EmbeddingEstimate,
    sys: &EigenSystem,
    d1: usize,
    test_points: &[f64],
) -> Result<LsqProjection> {
    if d1 > sys.len() {
        return Err(Error::NotEnoughEigenpairs { requested: d1, available: sys.len() });
    }
    if test_points.len() < d1 {
        return Err(Error::rejected("need at least d1 test points for the least-squares path"));
    }
    let n = test_points.len();
    let mut design = DMatrix::<f64>::zeros(n, d1);
    let mut rhs = DVector::<f64>::zeros(n);
    let mut phi = vec![0.0; d1];
    for (k, &u) in test_points.iter().enumerate() {
        sys.eval_first_at(u, &mut phi);
        for l in 0..d1 {
            design[(k, l)] = phi[l];
        }
        rhs[k] = est.eval_one(u);
    }
    let gram = design.transpose() * &design;
    let proj = design.transpose() * &rhs;
    let (alpha, ridge) = match Cholesky::new(gram.clone()) {
        Some(chol) => (chol.solve(&proj), None),
        None => {
            let reg = 1e-10 * gram.trace();
            let mut ridged = gram;
            for i in 0..d1 {
                ridged[(i, i)] += reg;
            }
            let chol = Cholesky::new(ridged)
                .ok_or_else(|| Error::rejected("projection design is numerically singular"))?;
            (chol.solve(&proj), Some(reg))
        }
    };
    let residual = (&design * &alpha - &rhs).norm_squared();
    Ok(LsqProjection {
        features: FeatureVector {
            coefficients: alpha.iter().copied().collect(),
            basis_id: sys.basis_id(),
        },
        ridge,
        residual,
    })
}

/// Precomputed machinery for projecting many estimates against the same
/// eigensystem truncation and grid: eigenfunction values and combined weights
/// are evaluated once.
pub struct ProjectionPlan {
    grid: Vec<f64>,
    /// `w_k ρ(s_k)` for the numerical-integration path.
    weights: Vec<f64>,
    /// `phi[[k, l]] = φ_l(s_k)` on the grid.
    phi: ndarray::Array2<f64>,
    basis_id: String,
    d1: usize,
}

impl ProjectionPlan {
    /// `grid_weights` are plain quadrature weights; the measure density is
    /// folded in here.
    pub fn new(sys: &EigenSystem, d1: usize, grid: &[f64], grid_weights: &[f64]) -> Result<Self> {
        if d1 > sys.len() {
            return Err(Error::NotEnoughEigenpairs { requested: d1, available: sys.len() });
        }
        if grid.len() != grid_weights.len() || grid.is_empty() {
            return Err(Error::rejected("grid and weights must be non-empty and equal length"));
        }
        let n = grid.len();
        let mut phi = ndarray::Array2::<f64>::zeros((n, d1));
        let mut buf = vec![0.0; d1];
        for (k, &s) in grid.iter().enumerate() {
            sys.eval_first_at(s, &mut buf);
            phi.row_mut(k).iter_mut().zip(&buf).for_each(|(slot, &v)| *slot = v);
        }
        let weights = grid
            .iter()
            .zip(grid_weights)
            .map(|(&s, &w)| w * sys.measure().density1(s))
            .collect();
        Ok(Self { grid: grid.to_vec(), weights, phi, basis_id: sys.basis_id(), d1 })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn measure_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    pub fn basis_id(&self) -> &str {
        &self.basis_id
    }

    /// Features from embedding values already evaluated on the plan grid.
    pub fn project_values(&self, values: &[f64]) -> FeatureVector {
        debug_assert_eq!(values.len(), self.grid.len());
        let mut coefficients = vec![0.0; self.d1];
        for (k, (&g, &w)) in values.iter().zip(&self.weights).enumerate() {
            let wg = w * g;
            if wg == 0.0 {
                continue;
            }
            let row = self.phi.row(k);
            for (c, &p) in coefficients.iter_mut().zip(row) {
                *c += wg * p;
            }
        }
        FeatureVector { coefficients, basis_id: self.basis_id.clone() }
    }

    pub fn project(&self, est: &EmbeddingEstimate) -> FeatureVector {
        let values: Vec<f64> = self.grid.iter().map(|&s| est.eval_one(s)).collect();
        self.project_values(&values)
    }
}
