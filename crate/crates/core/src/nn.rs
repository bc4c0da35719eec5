//! Minimal dense network core: shared per-point layers, activations,
//! max-pool reduction with argmax routing, reverse-mode gradients for a
//! fixed MLP topology, and the Adam optimizer.
//!
//! All math is `f64`. Matrices are row-per-sample (`B x features`), so a
//! per-point layer over a cloud is one `N x in` by `in x out` product.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("max-pool over an empty matrix")]
    EmptyInput,
    #[error("backward called without a recorded forward pass")]
    NoForwardRecorded,
    #[error("non-finite parameter in layer {0}")]
    NonFinite(usize),
}

/// Largest double strictly below one.
const ONE_MINUS_ULP: f64 = 1.0 - f64::EPSILON / 2.0;

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Logistic function, evaluated in the numerically stable branch for each
/// sign and clamped so that finite inputs always land strictly inside (0, 1).
pub fn sigmoid(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, ONE_MINUS_ULP)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: &mut Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Relu => x.mapv_inplace(relu),
            Activation::Sigmoid => x.mapv_inplace(sigmoid),
        }
    }

    /// Multiplies `grad` in place by the activation derivative, expressed in
    /// terms of the activation's output.
    pub fn backprop(self, output: &Array2<f64>, grad: &mut Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Relu => Zip::from(grad).and(output).for_each(|g, &y| {
                if y <= 0.0 {
                    *g = 0.0;
                }
            }),
            Activation::Sigmoid => Zip::from(grad)
                .and(output)
                .for_each(|g, &y| *g *= y * (1.0 - y)),
        }
    }
}

/// Fully connected layer `y = x W^T + b`, applied row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out x in`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Gradient (or optimizer moment) buffer congruent with a [`DenseLayer`].
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseGrad {
    pub fn zeros_like(layer: &DenseLayer) -> Self {
        Self {
            weights: Array2::zeros(layer.weights.raw_dim()),
            bias: Array1::zeros(layer.bias.raw_dim()),
        }
    }

    pub fn fill(&mut self, value: f64) {
        self.weights.fill(value);
        self.bias.fill(value);
    }

    pub fn scale(&mut self, factor: f64) {
        self.weights *= factor;
        self.bias *= factor;
    }

    pub fn add_assign(&mut self, other: &DenseGrad) {
        self.weights += &other.weights;
        self.bias += &other.bias;
    }
}

impl DenseLayer {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>) -> Result<Self, NnError> {
        if weights.nrows() != bias.len() {
            return Err(NnError::ShapeMismatch(format!(
                "weights have {} rows but bias has {} entries",
                weights.nrows(),
                bias.len()
            )));
        }
        Ok(Self { weights, bias })
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weights: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    /// Kaiming-uniform fan-in initialization with zero bias.
    pub fn kaiming<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = (6.0 / input as f64).sqrt();
        let weights = Array2::from_shape_fn((output, input), |_| rng.random_range(-bound..bound));
        Self {
            weights,
            bias: Array1::zeros(output),
        }
    }

    pub fn input_size(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_size(&self) -> usize {
        self.weights.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, NnError> {
        if x.ncols() != self.input_size() {
            return Err(NnError::ShapeMismatch(format!(
                "input has {} columns, layer expects {}",
                x.ncols(),
                self.input_size()
            )));
        }
        let mut out = Array2::zeros((x.nrows(), self.output_size()));
        out += &self.bias;
        general_mat_mul(1.0, &x, &self.weights.t(), 1.0, &mut out);
        Ok(out)
    }

    /// Accumulates `dL/dW` and `dL/db` into `grad` and, when requested,
    /// returns `dL/dx`.
    pub fn backward(
        &self,
        input: ArrayView2<'_, f64>,
        grad_out: ArrayView2<'_, f64>,
        grad: &mut DenseGrad,
        want_input_grad: bool,
    ) -> Option<Array2<f64>> {
        general_mat_mul(1.0, &grad_out.t(), &input, 1.0, &mut grad.weights);
        grad.bias += &grad_out.sum_axis(Axis(0));
        want_input_grad.then(|| grad_out.dot(&self.weights))
    }
}

/// Columnwise maximum of an `N x K` matrix together with the row achieving
/// it (lowest row on ties).
pub fn maxpool_rows(f: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Vec<usize>), NnError> {
    if f.nrows() == 0 {
        return Err(NnError::EmptyInput);
    }
    let mut best = f.row(0).to_owned();
    let mut arg = vec![0usize; f.ncols()];
    for (r, row) in f.rows().into_iter().enumerate().skip(1) {
        for (c, &v) in row.iter().enumerate() {
            if v > best[c] {
                best[c] = v;
                arg[c] = r;
            }
        }
    }
    Ok((best, arg))
}

/// Routes a pooled-feature gradient back to the argmax rows.
pub fn maxpool_backward(
    grad_pooled: ArrayView1<'_, f64>,
    argmax: &[usize],
    rows: usize,
) -> Array2<f64> {
    let mut g = Array2::zeros((rows, grad_pooled.len()));
    for (c, &r) in argmax.iter().enumerate() {
        g[(r, c)] += grad_pooled[c];
    }
    g
}

/// A stack of dense layers with ReLU between them and a configurable output
/// activation. Used as a shared per-point network when rows are points.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
    pub output_activation: Activation,
}

/// Activations recorded by [`Mlp::forward_traced`]: `activations[0]` is the
/// input, `activations[l + 1]` the post-activation output of layer `l`.
#[derive(Debug, Clone, Default)]
pub struct MlpTrace {
    pub activations: Vec<Array2<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> Option<&Array2<f64>> {
        self.activations.last()
    }
}

impl Mlp {
    /// Builds the layer chain `sizes[0] -> sizes[1] -> ...` with Kaiming init.
    pub fn kaiming<R: Rng + ?Sized>(sizes: &[usize], output_activation: Activation, rng: &mut R) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| DenseLayer::kaiming(w[0], w[1], rng))
            .collect();
        Self {
            layers,
            output_activation,
        }
    }

    pub fn new(layers: Vec<DenseLayer>, output_activation: Activation) -> Result<Self, NnError> {
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].output_size() != w[1].input_size() {
                return Err(NnError::ShapeMismatch(format!(
                    "layer {i} outputs {} features but layer {} expects {}",
                    w[0].output_size(),
                    i + 1,
                    w[1].input_size()
                )));
            }
        }
        Ok(Self {
            layers,
            output_activation,
        })
    }

    pub fn input_size(&self) -> usize {
        self.layers.first().map_or(0, DenseLayer::input_size)
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::output_size)
    }

    /// `[in, h1, ..., out]`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_size()];
        s.extend(self.layers.iter().map(DenseLayer::output_size));
        s
    }

    fn activation_for(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output_activation
        } else {
            Activation::Relu
        }
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, NnError> {
        let mut h = self.layers[0].forward(x)?;
        self.activation_for(0).apply(&mut h);
        for (l, layer) in self.layers.iter().enumerate().skip(1) {
            h = layer.forward(h.view())?;
            self.activation_for(l).apply(&mut h);
        }
        Ok(h)
    }

    pub fn forward_traced(&self, x: ArrayView2<'_, f64>) -> Result<MlpTrace, NnError> {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_owned());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut h = layer.forward(activations[l].view())?;
            self.activation_for(l).apply(&mut h);
            activations.push(h);
        }
        Ok(MlpTrace { activations })
    }

    /// Backpropagates `grad_output` (gradient w.r.t. the post-activation
    /// output) through the recorded pass, accumulating into `grads`.
    /// Returns the gradient w.r.t. the input when `want_input_grad`.
    pub fn backward(
        &self,
        trace: &MlpTrace,
        grad_output: Array2<f64>,
        grads: &mut [DenseGrad],
        want_input_grad: bool,
    ) -> Result<Option<Array2<f64>>, NnError> {
        if trace.activations.len() != self.layers.len() + 1 {
            return Err(NnError::NoForwardRecorded);
        }
        if grads.len() != self.layers.len() {
            return Err(NnError::ShapeMismatch(format!(
                "{} gradient buffers for {} layers",
                grads.len(),
                self.layers.len()
            )));
        }
        let mut g = grad_output;
        for l in (0..self.layers.len()).rev() {
            self.activation_for(l)
                .backprop(&trace.activations[l + 1], &mut g);
            let need = l > 0 || want_input_grad;
            match self.layers[l].backward(trace.activations[l].view(), g.view(), &mut grads[l], need) {
                Some(next) => g = next,
                None => return Ok(None),
            }
        }
        Ok(Some(g))
    }

    pub fn zero_grads(&self) -> Vec<DenseGrad> {
        self.layers.iter().map(DenseGrad::zeros_like).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Gradient accumulators and Adam moments for an ordered list of layers.
/// The layers themselves stay with the model; every call that touches
/// parameters receives them in the same order the tape was built with.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTape {
    pub grads: Vec<DenseGrad>,
    m: Vec<DenseGrad>,
    v: Vec<DenseGrad>,
    step: u64,
}

impl ParamTape {
    pub fn new<'a>(layers: impl IntoIterator<Item = &'a DenseLayer>) -> Self {
        let grads: Vec<DenseGrad> = layers.into_iter().map(DenseGrad::zeros_like).collect();
        Self {
            m: grads.clone(),
            v: grads.clone(),
            grads,
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.weights.iter().chain(g.bias.iter()))
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Bias-corrected Adam update. Gradients are left untouched.
    pub fn adam_step(&mut self, layers: &mut [&mut DenseLayer], cfg: &AdamConfig) -> Result<(), NnError> {
        if layers.len() != self.grads.len() {
            return Err(NnError::ShapeMismatch(format!(
                "tape tracks {} layers, got {}",
                self.grads.len(),
                layers.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        };
        for (l, layer) in layers.iter_mut().enumerate() {
            let (g, m, v) = (&self.grads[l], &mut self.m[l], &mut self.v[l]);
            if g.weights.raw_dim() != layer.weights.raw_dim() {
                return Err(NnError::ShapeMismatch(format!("layer {l} changed shape")));
            }
            Zip::from(&mut layer.weights)
                .and(&g.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn dense_identity_and_hand_arithmetic() {
        let layer = DenseLayer::new(Array2::eye(3), Array1::zeros(3)).unwrap();
        let x = array![[1.0, -2.0, 3.5], [0.0, 4.0, -1.0]];
        assert_eq!(layer.forward(x.view()).unwrap(), x);

        let layer = DenseLayer::new(array![[1.0, 1.0]], array![3.0]).unwrap();
        assert_eq!(layer.forward(array![[2.0, 5.0]].view()).unwrap(), array![[10.0]]);
    }

    #[test]
    fn dense_rejects_wrong_width() {
        let layer = DenseLayer::zeros(3, 2);
        assert!(matches!(
            layer.forward(Array2::zeros((4, 2)).view()),
            Err(NnError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn dense_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = DenseLayer::new(random_matrix(&mut rng, 7, 5), Array1::from_shape_fn(7, |i| i as f64 * 0.1)).unwrap();
        let x = random_matrix(&mut rng, 9, 5);
        let y = layer.forward(x.view()).unwrap();
        for b in 0..9 {
            for o in 0..7 {
                let mut acc = layer.bias[o];
                for i in 0..5 {
                    acc += x[(b, i)] * layer.weights[(o, i)];
                }
                assert!((y[(b, o)] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn activation_values() {
        assert_eq!(relu(-2.0), 0.0);
        assert_eq!(relu(3.0), 3.0);
        assert_eq!(sigmoid(0.0), 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let x: f64 = rng.random_range(-30.0..30.0);
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-12);
        }
        for x in [-1e6, -800.0, -40.0, 40.0, 800.0, 1e6] {
            let s = sigmoid(x);
            assert!(s > 0.0 && s < 1.0, "sigmoid({x}) = {s}");
        }
    }

    #[test]
    fn maxpool_cases() {
        let (v, a) = maxpool_rows(array![[1.0, -2.0, 3.0]].view()).unwrap();
        assert_eq!(v, array![1.0, -2.0, 3.0]);
        assert_eq!(a, vec![0, 0, 0]);
        let (v, a) = maxpool_rows(array![[1.0, 5.0], [3.0, 2.0]].view()).unwrap();
        assert_eq!(v, array![3.0, 5.0]);
        assert_eq!(a, vec![1, 0]);
        let (_, a) = maxpool_rows(array![[2.0], [2.0]].view()).unwrap();
        assert_eq!(a, vec![0]);
        assert_eq!(
            maxpool_rows(Array2::<f64>::zeros((0, 4)).view()),
            Err(NnError::EmptyInput)
        );
    }

    #[test]
    fn maxpool_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_matrix(&mut rng, 100, 64);
        let mut perm: Vec<usize> = (0..100).collect();
        for i in (1..100).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let g = f.select(Axis(0), &perm);
        assert_eq!(maxpool_rows(f.view()).unwrap().0, maxpool_rows(g.view()).unwrap().0);
    }

    #[test]
    fn linear_gradient_rows_equal_input() {
        // Loss = sum(W x): dL/dW row r = x^T for every r.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let layer = DenseLayer::new(random_matrix(&mut rng, 3, 4), Array1::zeros(3)).unwrap();
        let x = array![[0.5, -1.0, 2.0, 0.25]];
        let mut grad = DenseGrad::zeros_like(&layer);
        layer.backward(x.view(), Array2::ones((1, 3)).view(), &mut grad, false);
        for r in 0..3 {
            assert_eq!(grad.weights.row(r), x.row(0));
        }
    }

    #[test]
    fn backward_without_forward_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mlp = Mlp::kaiming(&[3, 4, 1], Activation::Sigmoid, &mut rng);
        let mut grads = mlp.zero_grads();
        assert_eq!(
            mlp.backward(&MlpTrace::default(), Array2::ones((1, 1)), &mut grads, false),
            Err(NnError::NoForwardRecorded)
        );
    }

    /// Scalar loss used by the finite-difference checks: weighted sum of the
    /// network's outputs with fixed pseudo-random weights.
    fn toy_loss(mlp: &Mlp, x: &Array2<f64>, w: &Array2<f64>) -> f64 {
        (mlp.forward(x.view()).unwrap() * w).sum()
    }

    #[test]
    fn mlp_gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for act in [Activation::Sigmoid, Activation::Relu, Activation::Identity] {
            let mut mlp = Mlp::kaiming(&[3, 6, 5, 2], act, &mut rng);
            for l in &mut mlp.layers {
                l.bias.mapv_inplace(|_| rng.random_range(-0.3..0.3));
            }
            let x = random_matrix(&mut rng, 8, 3);
            let w = random_matrix(&mut rng, 8, 2);
            let trace = mlp.forward_traced(x.view()).unwrap();
            let mut grads = mlp.zero_grads();
            let gx = mlp.backward(&trace, w.clone(), &mut grads, true).unwrap().unwrap();
            let h = 1e-5;
            for l in 0..mlp.layers.len() {
                for idx in 0..mlp.layers[l].weights.len() {
                    let (r, c) = (idx / mlp.layers[l].input_size(), idx % mlp.layers[l].input_size());
                    let orig = mlp.layers[l].weights[(r, c)];
                    mlp.layers[l].weights[(r, c)] = orig + h;
                    let up = toy_loss(&mlp, &x, &w);
                    mlp.layers[l].weights[(r, c)] = orig - h;
                    let down = toy_loss(&mlp, &x, &w);
                    mlp.layers[l].weights[(r, c)] = orig;
                    let fd = (up - down) / (2.0 * h);
                    let an = grads[l].weights[(r, c)];
                    assert!(
                        (fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()).max(1e-6),
                        "{act:?} layer {l} w[{r},{c}]: fd {fd} analytic {an}"
                    );
                }
                for b in 0..mlp.layers[l].bias.len() {
                    let orig = mlp.layers[l].bias[b];
                    mlp.layers[l].bias[b] = orig + h;
                    let up = toy_loss(&mlp, &x, &w);
                    mlp.layers[l].bias[b] = orig - h;
                    let down = toy_loss(&mlp, &x, &w);
                    mlp.layers[l].bias[b] = orig;
                    let fd = (up - down) / (2.0 * h);
                    let an = grads[l].bias[b];
                    assert!((fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()).max(1e-6));
                }
            }
            // input gradient
            let mut xp = x.clone();
            for idx in 0..x.len() {
                let (r, c) = (idx / 3, idx % 3);
                let orig = xp[(r, c)];
                xp[(r, c)] = orig + h;
                let up = toy_loss(&mlp, &xp, &w);
                xp[(r, c)] = orig - h;
                let down = toy_loss(&mlp, &xp, &w);
                xp[(r, c)] = orig;
                let fd = (up - down) / (2.0 * h);
                assert!((fd - gx[(r, c)]).abs() <= 1e-4 * fd.abs().max(1e-6));
            }
        }
    }

    #[test]
    fn gradients_stay_finite_in_saturated_branch() {
        let mut layer = DenseLayer::zeros(2, 1);
        layer.bias[0] = -1e4;
        let mlp = Mlp::new(vec![layer], Activation::Sigmoid).unwrap();
        let x = array![[1.0, 2.0]];
        let trace = mlp.forward_traced(x.view()).unwrap();
        let mut grads = mlp.zero_grads();
        mlp.backward(&trace, array![[1.0]], &mut grads, true).unwrap();
        assert!(grads[0].weights.iter().all(|v| v.is_finite()));
        assert!(grads[0].bias.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut layer = DenseLayer::new(array![[0.0]], array![0.0]).unwrap();
        let mut tape = ParamTape::new([&layer]);
        tape.grads[0].weights[(0, 0)] = 1.0;
        let cfg = AdamConfig {
            learning_rate: 1e-3,
            ..AdamConfig::default()
        };
        tape.adam_step(&mut [&mut layer], &cfg).unwrap();
        let expected = -cfg.learning_rate / (1.0 + cfg.epsilon);
        assert!((layer.weights[(0, 0)] - expected).abs() < 1e-18);
        assert_eq!(layer.bias[0], 0.0);
        assert_eq!(tape.step(), 1);
        assert_eq!(tape.grads[0].weights[(0, 0)], 1.0);
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut layer = DenseLayer::kaiming(4, 3, &mut rng);
        let before = layer.clone();
        let mut tape = ParamTape::new([&layer]);
        for _ in 0..10 {
            tape.adam_step(&mut [&mut layer], &AdamConfig::default()).unwrap();
        }
        assert_eq!(layer, before);
        tape.grads[0].fill(3.0);
        tape.zero_grads();
        assert!(tape.grads[0].weights.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut layer = DenseLayer::new(array![[1.0]], array![0.0]).unwrap();
        let mut tape = ParamTape::new([&layer]);
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        for _ in 0..100 {
            tape.zero_grads();
            tape.grads[0].weights[(0, 0)] = 2.0 * layer.weights[(0, 0)];
            tape.adam_step(&mut [&mut layer], &cfg).unwrap();
        }
        assert!(layer.weights[(0, 0)].abs() < 0.05, "theta = {}", layer.weights[(0, 0)]);
    }
}
