//! Fully-connected ReLU network with a linear output, trained by Adam on
//! mean-squared error, plus the prediction truncation operator.

use crate::{Error, Result};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Layer sizes `[input, hidden.., 1]`, ReLU on hidden layers, identity output.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluNetwork {
    dims: Vec<usize>,
    /// Per layer, `[fan_in, fan_out]`.
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

impl ReluNetwork {
    pub fn layer_dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn from_parts(weights: Vec<Array2<f64>>, biases: Vec<Array1<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::rejected("network needs matching weight and bias lists"));
        }
        let mut dims = vec![weights[0].nrows()];
        for (w, b) in weights.iter().zip(&biases) {
            if w.nrows() != *dims.last().unwrap() || w.ncols() != b.len() {
                return Err(Error::rejected("inconsistent layer shapes"));
            }
            dims.push(w.ncols());
        }
        if *dims.last().unwrap() != 1 {
            return Err(Error::rejected("output layer must have width 1"));
        }
        Ok(Self { dims, weights, biases })
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dims[0] {
            return Err(Error::DimensionMismatch { expected: self.dims[0], got: x.len() });
        }
        let mut h = Array1::from_iter(x.iter().copied());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = h.dot(w) + b;
            if l + 1 < self.weights.len() {
                z.mapv_inplace(|v| v.max(0.0));
            }
            h = z;
        }
        Ok(h[0])
    }

    /// Batched forward pass; rows of `x` are inputs.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Array1<f64> {
        assert_eq!(x.ncols(), self.dims[0]);
        let mut h = x.to_owned();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = h.dot(w) + b;
            if l + 1 < self.weights.len() {
                z.mapv_inplace(|v| v.max(0.0));
            }
            h = z;
        }
        h.index_axis_move(Axis(1), 0)
    }

    /// Upper bound on the network's Lipschitz constant (product of Frobenius
    /// norms; ReLU and the identity output are 1-Lipschitz).
    pub fn lipschitz_bound(&self) -> f64 {
        self.weights.iter().map(|w| w.iter().map(|v| v * v).sum::<f64>().sqrt()).product()
    }
}

/// He-style initialization: `N(0, 2/fan_in)` weights, zero biases,
/// deterministic under the seed.
pub fn init_network(layer_dims: &[usize], seed: u64) -> Result<ReluNetwork> {
    if layer_dims.len() < 2 {
        return Err(Error::rejected("network needs at least input and output dims"));
    }
    if layer_dims.iter().any(|&d| d == 0) {
        return Err(Error::rejected("zero-width layers are not allowed"));
    }
    if *layer_dims.last().unwrap() != 1 {
        return Err(Error::rejected("output layer must have width 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(layer_dims.len() - 1);
    let mut biases = Vec::with_capacity(layer_dims.len() - 1);
    for pair in layer_dims.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let std = (2.0 / fan_in as f64).sqrt();
        let w = Array2::from_shape_simple_fn((fan_in, fan_out), || {
            let v: f64 = rng.sample(StandardNormal);
            v * std
        });
        weights.push(w);
        biases.push(Array1::zeros(fan_out));
    }
    ReluNetwork::from_parts(weights, biases)
}

/// Parameter-shaped gradients of the batch MSE.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub dw: Vec<Array2<f64>>,
    pub db: Vec<Array1<f64>>,
}

/// Exact gradients of `(1/|B|) Σ (forward(x)-y)²`; the ReLU subgradient at 0
/// is taken as 0.
pub fn grad(net: &ReluNetwork, x: ArrayView2<f64>, y: ArrayView1<f64>) -> Gradients {
    assert!(x.nrows() > 0, "gradient of an empty batch");
    assert_eq!(x.nrows(), y.len());
    let layers = net.weights.len();
    // Forward pass, keeping post-activation values per layer.
    let mut activations: Vec<Array2<f64>> = Vec::with_capacity(layers + 1);
    activations.push(x.to_owned());
    for l in 0..layers {
        let mut z = activations[l].dot(&net.weights[l]) + &net.biases[l];
        if l + 1 < layers {
            z.mapv_inplace(|v| v.max(0.0));
        }
        activations.push(z);
    }
    let batch = x.nrows() as f64;
    // dL/d(output) for the MSE mean.
    let pred = activations[layers].index_axis(Axis(1), 0);
    let mut delta: Array2<f64> =
        (&pred - &y).insert_axis(Axis(1)).mapv(|v| 2.0 * v / batch);
    let mut dw = vec![Array2::zeros((0, 0)); layers];
    let mut db = vec![Array1::zeros(0); layers];
    for l in (0..layers).rev() {
        dw[l] = activations[l].t().dot(&delta);
        db[l] = delta.sum_axis(Axis(0));
        if l > 0 {
            let mut back = delta.dot(&net.weights[l].t());
            // ReLU mask: the stored activation is already max(z, 0), so a
            // strictly positive value marks an active unit.
            back.zip_mut_with(&activations[l], |g, &a| {
                if a <= 0.0 {
                    *g = 0.0;
                }
            });
            delta = back;
        }
    }
    Gradients { dw, db }
}

/// Batch MSE of the network on the given set.
pub fn mse(net: &ReluNetwork, x: ArrayView2<f64>, y: ArrayView1<f64>) -> f64 {
    let pred = net.forward_batch(x);
    let n = y.len() as f64;
    pred.iter().zip(y.iter()).map(|(&p, &t)| (p - t) * (p - t)).sum::<f64>() / n
}

/// Adam hyperparameters and the training protocol.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            epochs: 500,
            batch_size: 64,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second-moment accumulators for Adam with bias correction.
#[derive(Debug, Clone)]
pub struct AdamState {
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(net: &ReluNetwork) -> Self {
        Self {
            m_w: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            v_w: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            m_b: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            v_b: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update in place. A zero gradient from a fresh state leaves the
/// parameters unchanged.
pub fn adam_step(
    net: &mut ReluNetwork,
    state: &mut AdamState,
    grads: &Gradients,
    config: &TrainConfig,
) {
    state.step += 1;
    let t = state.step as i32;
    let corr1 = 1.0 - config.beta1.powi(t);
    let corr2 = 1.0 - config.beta2.powi(t);
    let lr = config.learning_rate;
    for l in 0..net.weights.len() {
        state.m_w[l].zip_mut_with(&grads.dw[l], |m, &g| {
            *m = config.beta1 * *m + (1.0 - config.beta1) * g
        });
        state.v_w[l].zip_mut_with(&grads.dw[l], |v, &g| {
            *v = config.beta2 * *v + (1.0 - config.beta2) * g * g
        });
        {
            let m = &state.m_w[l];
            let v = &state.v_w[l];
            ndarray::Zip::from(&mut net.weights[l]).and(m).and(v).for_each(|w, &m, &v| {
                *w -= lr * (m / corr1) / ((v / corr2).sqrt() + config.epsilon);
            });
        }
        state.m_b[l].zip_mut_with(&grads.db[l], |m, &g| {
            *m = config.beta1 * *m + (1.0 - config.beta1) * g
        });
        state.v_b[l].zip_mut_with(&grads.db[l], |v, &g| {
            *v = config.beta2 * *v + (1.0 - config.beta2) * g * g
        });
        let m = &state.m_b[l];
        let v = &state.v_b[l];
        ndarray::Zip::from(&mut net.biases[l]).and(m).and(v).for_each(|b, &m, &v| {
            *b -= lr * (m / corr1) / ((v / corr2).sqrt() + config.epsilon);
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochRecord {
    /// Mean of the minibatch losses seen during the epoch.
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    /// Parameter snapshot with the minimum validation MSE.
    pub network: ReluNetwork,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
}

/// Shuffled mini-batch Adam for `config.epochs` epochs, returning the
/// best-validation snapshot and the full loss history.
pub fn train(
    net: ReluNetwork,
    train_x: ArrayView2<f64>,
    train_y: ArrayView1<f64>,
    val_x: ArrayView2<f64>,
    val_y: ArrayView1<f64>,
    config: &TrainConfig,
) -> Result<TrainResult> {
    let m = train_x.nrows();
    if config.epochs == 0 {
        return Err(Error::rejected("training needs at least one epoch"));
    }
    if config.batch_size == 0 || config.batch_size > m {
        return Err(Error::rejected("batch_size must be in 1..=training set size"));
    }
    if m == 0 || val_x.nrows() == 0 {
        return Err(Error::rejected("training and validation sets must be non-empty"));
    }
    let mut net = net;
    let mut state = AdamState::new(&net);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut perm: Vec<usize> = (0..m).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best = (f64::INFINITY, 0usize, net.clone());
    for epoch in 0..config.epochs {
        // Fisher-Yates shuffle.
        for i in (1..m).rev() {
            let j = rng.gen_range(0..=i);
            perm.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (b_idx, chunk) in perm.chunks(config.batch_size).enumerate() {
            let xb = train_x.select(Axis(0), chunk);
            let yb = train_y.select(Axis(0), chunk);
            let loss = mse(&net, xb.view(), yb.view());
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b_idx });
            }
            let g = grad(&net, xb.view(), yb.view());
            adam_step(&mut net, &mut state, &g, config);
            epoch_loss += loss;
            batches += 1;
        }
        let val_mse = mse(&net, val_x, val_y);
        if !val_mse.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: usize::MAX });
        }
        history.push(EpochRecord { train_mse: epoch_loss / batches as f64, val_mse });
        if val_mse < best.0 {
            best = (val_mse, epoch, net.clone());
        }
    }
    Ok(TrainResult { network: best.2, history, best_epoch: best.1, best_val_mse: best.0 })
}

/// Prediction clip level for the truncation operator.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TruncationBound {
    level: f64,
}

impl TruncationBound {
    pub fn new(level: f64) -> Result<Self> {
        if !(level > 0.0) {
            return Err(Error::rejected("truncation level must be > 0"));
        }
        Ok(Self { level })
    }

    pub fn level(&self) -> f64 {
        self.level
    }
}

/// Forward pass clipped to `[-L, L]`.
pub fn predict_truncated(net: &ReluNetwork, x: &[f64], bound: TruncationBound) -> Result<f64> {
    Ok(net.forward(x)?.clamp(-bound.level, bound.level))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn init_deterministic_and_rejects_zero_width() {
        let a = init_network(&[5, 8, 1], 42).unwrap();
        let b = init_network(&[5, 8, 1], 42).unwrap();
        assert_eq!(a, b);
        assert!(init_network(&[5, 0, 1], 1).is_err());
        assert!(init_network(&[5], 1).is_err());
        for bias in a.biases() {
            assert!(bias.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn init_he_scale() {
        let net = init_network(&[128, 256, 1], 7).unwrap();
        let w = &net.weights()[0];
        let n = w.len() as f64;
        let mean = w.sum() / n;
        let var = w.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let target = (2.0f64 / 128.0).sqrt();
        assert!((var.sqrt() - target).abs() / target < 0.2);
    }

    #[test]
    fn forward_linear_layer_and_zero_network() {
        let w = array![[2.0], [-3.0]];
        let b = array![0.5];
        let net = ReluNetwork::from_parts(vec![w], vec![b]).unwrap();
        assert_relative_eq!(net.forward(&[1.0, 1.0]).unwrap(), -0.5);
        assert!(net.forward(&[1.0]).is_err());

        let zero = ReluNetwork::from_parts(
            vec![Array2::zeros((3, 4)), Array2::zeros((4, 1))],
            vec![Array1::zeros(4), Array1::zeros(1)],
        )
        .unwrap();
        assert_eq!(zero.forward(&[1.0, -2.0, 3.0]).unwrap(), 0.0);
    }

    #[test]
    fn relu_masks_negative_preactivations() {
        // One hidden unit with a negative pre-activation: scaling its input
        // weight further negative cannot change the output.
        let w1 = array![[1.0]];
        let b1 = array![-2.0]; // pre-activation at x=1 is -1 → masked
        let w2 = array![[5.0]];
        let b2 = array![0.25];
        let net = ReluNetwork::from_parts(vec![w1, w2], vec![b1, b2]).unwrap();
        let base = net.forward(&[1.0]).unwrap();
        let w1 = array![[-3.0]];
        let net2 = ReluNetwork::from_parts(vec![w1, array![[5.0]]], vec![array![-2.0], array![0.25]])
            .unwrap();
        assert_eq!(base, net2.forward(&[1.0]).unwrap());
        assert_eq!(base, 0.25);
    }

    #[test]
    fn perfect_fit_batch_has_zero_gradient() {
        let net = init_network(&[3, 6, 1], 11).unwrap();
        let x = array![[0.2, -0.4, 1.0], [1.5, 0.3, -0.7]];
        let y: Array1<f64> =
            x.outer_iter().map(|r| net.forward(r.as_slice().unwrap()).unwrap()).collect();
        let g = grad(&net, x.view(), y.view());
        for dw in &g.dw {
            assert!(dw.iter().all(|&v| v.abs() < 1e-14));
        }
        for db in &g.db {
            assert!(db.iter().all(|&v| v.abs() < 1e-14));
        }
    }

    #[test]
    fn batch_gradient_is_mean_of_per_sample_gradients() {
        let net = init_network(&[4, 5, 1], 3).unwrap();
        let x = array![[0.1, 0.2, -0.3, 0.4], [1.0, -1.0, 0.5, 0.25], [-0.6, 0.9, 0.0, 2.0]];
        let y = array![0.3, -1.2, 0.8];
        let full = grad(&net, x.view(), y.view());
        let mut acc_dw: Vec<Array2<f64>> =
            net.weights().iter().map(|w| Array2::zeros(w.raw_dim())).collect();
        for i in 0..3 {
            let xi = x.slice(ndarray::s![i..i + 1, ..]);
            let yi = y.slice(ndarray::s![i..i + 1]);
            let gi = grad(&net, xi, yi);
            for (acc, g) in acc_dw.iter_mut().zip(&gi.dw) {
                *acc += g;
            }
        }
        for (full_dw, acc) in full.dw.iter().zip(&acc_dw) {
            for (a, b) in full_dw.iter().zip(acc.iter().map(|v| v / 3.0)) {
                assert_relative_eq!(*a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let mut net = init_network(&[2, 3, 1], 5).unwrap();
        let reference = net.clone();
        let mut state = AdamState::new(&net);
        let grads = Gradients {
            dw: net.weights().iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            db: net.biases().iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        };
        let cfg = TrainConfig::default();
        adam_step(&mut net, &mut state, &grads, &cfg);
        assert_eq!(net, reference);
    }

    #[test]
    fn adam_constant_gradient_step_approaches_lr() {
        // With a constant gradient the bias-corrected update tends to lr·sign(g).
        let w = array![[0.0]];
        let b = array![0.0];
        let mut net = ReluNetwork::from_parts(vec![w], vec![b]).unwrap();
        let mut state = AdamState::new(&net);
        let cfg = TrainConfig { learning_rate: 1e-2, ..TrainConfig::default() };
        let g = Gradients { dw: vec![array![[0.37]]], db: vec![array![0.0]] };
        let mut prev = 0.0;
        let mut last_step = 0.0;
        for _ in 0..2000 {
            adam_step(&mut net, &mut state, &g, &cfg);
            let cur = net.weights()[0][[0, 0]];
            last_step = (cur - prev).abs();
            prev = cur;
        }
        assert_relative_eq!(last_step, cfg.learning_rate, max_relative = 1e-3);
    }

    #[test]
    fn train_linear_target_converges() {
        // y = 2x + 1 with a purely linear network is convex least squares.
        let m = 64;
        let xs: Vec<f64> = (0..m).map(|i| -1.0 + 2.0 * i as f64 / (m - 1) as f64).collect();
        let x = Array2::from_shape_vec((m, 1), xs.clone()).unwrap();
        let y: Array1<f64> = xs.iter().map(|&v| 2.0 * v + 1.0).collect();
        let net = ReluNetwork::from_parts(vec![array![[0.1]]], vec![array![0.0]]).unwrap();
        let cfg = TrainConfig { learning_rate: 3e-2, epochs: 500, batch_size: 16, seed: 1, ..TrainConfig::default() };
        let out = train(net, x.view(), y.view(), x.view(), y.view(), &cfg).unwrap();
        assert!(out.best_val_mse <= 1e-6, "val mse {}", out.best_val_mse);
        // argmin contract
        assert!(out.history.iter().all(|r| out.best_val_mse <= r.val_mse));
        // zero-epoch rejected
        let cfg0 = TrainConfig { epochs: 0, ..cfg };
        let net = ReluNetwork::from_parts(vec![array![[0.1]]], vec![array![0.0]]).unwrap();
        assert!(train(net, x.view(), y.view(), x.view(), y.view(), &cfg0).is_err());
    }

    #[test]
    fn truncation_clips_and_is_idempotent() {
        let net = ReluNetwork::from_parts(vec![array![[1.0]]], vec![array![0.0]]).unwrap();
        let bound = TruncationBound::new(2.0).unwrap();
        assert_eq!(predict_truncated(&net, &[1.5], bound).unwrap(), 1.5);
        assert_eq!(predict_truncated(&net, &[3.0], bound).unwrap(), 2.0);
        assert_eq!(predict_truncated(&net, &[-9.0], bound).unwrap(), -2.0);
        let once = predict_truncated(&net, &[3.0], bound).unwrap();
        assert_eq!(once.clamp(-2.0, 2.0), once);
        assert!(TruncationBound::new(0.0).is_err());
    }
}
