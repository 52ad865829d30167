//! Backpropagation and Direct Feedback Alignment.
//!
//! Both rules share the forward pass, the output error `e = softmax(a_N) - y`
//! and the update `W_i <- W_i - lr * δa_i h_{i-1}ᵀ / batch`. They differ only
//! in how hidden deltas are formed:
//!
//! * BP: `δa_i = (W_{i+1}ᵀ δa_{i+1}) ⊙ f'(a_i)`, layer after layer;
//! * DFA: `δa_i = (B_i e) ⊙ f'(a_i)` with `B_i` the top `d_i` rows of one
//!   fixed random matrix, for every layer independently.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analog::{Backend, BackendError};
use crate::dataio::{batches, sequential_batches, Dataset};
use crate::math::{quantize, streams, Mat, MathError, Quantizer, Rng};
use crate::network::{argmax_columns, forward_with, ForwardTrace, Mlp, NetworkError, Topology};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Math(#[from] MathError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("invalid hyperparameters: {0}")]
    Config(String),
    #[error("dataset does not match network: {0}")]
    Data(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainerKind {
    Bp,
    Dfa,
}

impl TrainerKind {
    pub fn name(self) -> &'static str {
        match self {
            TrainerKind::Bp => "bp",
            TrainerKind::Dfa => "dfa",
        }
    }
}

impl std::fmt::Display for TrainerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Fixed random feedback matrix shared by all DFA layers.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackBank {
    master: Mat,
}

impl FeedbackBank {
    /// `max_hidden × classes` entries from `U(-1/√C, 1/√C)`.
    pub fn new(topology: &Topology, seed: u64) -> Self {
        let c = topology.classes();
        let bound = 1.0 / (c as f64).sqrt();
        let mut rng = Rng::derive(seed, streams::FEEDBACK);
        FeedbackBank { master: Mat::from_fn(topology.max_hidden(), c, |_, _| rng.uniform_in(-bound, bound)) }
    }

    pub fn from_master(master: Mat) -> Self {
        FeedbackBank { master }
    }

    pub fn master(&self) -> &Mat {
        &self.master
    }

    /// B_i: the top-left `d_i × C` block.
    pub fn slice(&self, d_i: usize) -> Mat {
        self.master.top_rows(d_i)
    }

    /// SHA-256 over the shape and little-endian bytes of the master matrix.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.master.rows() as u64).to_le_bytes());
        h.update((self.master.cols() as u64).to_le_bytes());
        for v in self.master.as_slice() {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    fn check(&self, topology: &Topology) -> Result<(), TrainError> {
        if self.master.cols() != topology.classes() || self.master.rows() < topology.max_hidden() {
            return Err(TrainError::Config(format!(
                "feedback matrix is {:?}, network needs at least {}×{}",
                self.master.shape(),
                topology.max_hidden(),
                topology.classes()
            )));
        }
        Ok(())
    }
}

/// Optional fake-quantizers on the four value classes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Precision {
    pub weight: Option<Quantizer>,
    pub activation: Option<Quantizer>,
    pub error: Option<Quantizer>,
    pub gradient: Option<Quantizer>,
}

impl Precision {
    pub fn validate(&self) -> Result<(), MathError> {
        for q in [&self.weight, &self.activation, &self.error, &self.gradient].into_iter().flatten() {
            q.validate()?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub precision: Precision,
    /// BP only: re-quantize δa_i at every layer when an error quantizer is set.
    pub requantize_errors: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            learning_rate: 0.05,
            batch_size: 128,
            epochs: 10,
            seed: 0,
            precision: Precision::default(),
            requantize_errors: true,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!("learning_rate must be non-negative, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be at least 1".into()));
        }
        self.precision.validate()?;
        Ok(())
    }
}

fn softmax_columns(logits: &Mat) -> Mat {
    let mut p = logits.clone();
    for j in 0..p.cols() {
        let m = (0..p.rows()).map(|i| p[(i, j)]).fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for i in 0..p.rows() {
            let v = (p[(i, j)] - m).exp();
            p[(i, j)] = v;
            z += v;
        }
        for i in 0..p.rows() {
            p[(i, j)] /= z;
        }
    }
    p
}

/// `softmax(logits) - targets`, column by column: the gradient of the
/// cross-entropy with respect to the logits.
pub fn output_error(logits: &Mat, targets: &Mat) -> Result<Mat, TrainError> {
    Ok(softmax_columns(logits).sub(targets)?)
}

/// Summed cross-entropy of the batch (not averaged).
pub fn cross_entropy(logits: &Mat, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (j, &y) in labels.iter().enumerate() {
        let m = (0..logits.rows()).map(|i| logits[(i, j)]).fold(f64::NEG_INFINITY, f64::max);
        let lse = m + (0..logits.rows()).map(|i| (logits[(i, j)] - m).exp()).sum::<f64>().ln();
        total += lse - logits[(y, j)];
    }
    total
}

fn activation_derivative(trace: &ForwardTrace, topology: &Topology, i: usize) -> Mat {
    trace.pre(i).map(|a| topology.activation.derivative(a))
}

fn maybe_quantize(x: Mat, q: Option<&Quantizer>, rng: &mut Rng) -> Result<Mat, MathError> {
    match q {
        Some(q) => quantize(&x, q, Some(rng)),
        None => Ok(x),
    }
}

/// BP deltas `[δa_1, …, δa_N]`. `error_q` is applied to `e` and, when
/// `requantize` is set, again to every hidden delta.
pub fn bp_backward(
    trace: &ForwardTrace,
    mlp: &Mlp,
    e: &Mat,
    backend: &mut Backend,
    error_q: Option<&Quantizer>,
    requantize: bool,
    rng: &mut Rng,
) -> Result<Vec<Mat>, TrainError> {
    let n = mlp.depth();
    let mut deltas = vec![Mat::zeros(0, 0); n];
    deltas[n - 1] = maybe_quantize(e.clone(), error_q, rng)?;
    for i in (1..n).rev() {
        let back = backend.matvec_transposed(i + 1, mlp.weight(i + 1), &deltas[i])?;
        let d = back.hadamard(&activation_derivative(trace, mlp.topology(), i))?;
        deltas[i - 1] = if requantize { maybe_quantize(d, error_q, rng)? } else { d };
    }
    Ok(deltas)
}

/// `B e` for every hidden layer at once (one read of the shared feedback
/// array per error vector). `e` should already be quantized.
pub fn dfa_project(bank: &FeedbackBank, e: &Mat, backend: &mut Backend) -> Result<Mat, TrainError> {
    Ok(backend.project(bank.master(), e)?)
}

/// δa_i for one hidden layer from the shared projection.
pub fn dfa_layer_delta(
    trace: &ForwardTrace,
    topology: &Topology,
    projected: &Mat,
    i: usize,
) -> Result<Mat, TrainError> {
    let d_i = topology.layer_dims[i];
    Ok(projected.top_rows(d_i).hadamard(&activation_derivative(trace, topology, i))?)
}

/// DFA deltas `[δa_1, …, δa_N]`; `error_q` is applied once to `e`.
pub fn dfa_backward(
    trace: &ForwardTrace,
    topology: &Topology,
    bank: &FeedbackBank,
    e: &Mat,
    backend: &mut Backend,
    error_q: Option<&Quantizer>,
    rng: &mut Rng,
) -> Result<Vec<Mat>, TrainError> {
    bank.check(topology)?;
    let n = topology.depth();
    let eq = maybe_quantize(e.clone(), error_q, rng)?;
    let mut deltas = Vec::with_capacity(n);
    if n > 1 {
        let projected = dfa_project(bank, &eq, backend)?;
        for i in 1..n {
            deltas.push(dfa_layer_delta(trace, topology, &projected, i)?);
        }
    }
    deltas.push(eq);
    Ok(deltas)
}

/// `δa_i h_{i-1}ᵀ / batch` for every layer, gradient quantizer applied.
pub fn gradients(
    deltas: &[Mat],
    trace: &ForwardTrace,
    backend: &mut Backend,
    gradient_q: Option<&Quantizer>,
    rng: &mut Rng,
) -> Result<Vec<Mat>, TrainError> {
    let batch = trace.batch() as f64;
    let mut out = Vec::with_capacity(deltas.len());
    for (k, d) in deltas.iter().enumerate() {
        let h = trace.post(k);
        backend.note_gradient(k + 1, h.rows(), d.rows(), trace.batch());
        let g = d.matmul_t(h)?.scale(1.0 / batch);
        out.push(maybe_quantize(g, gradient_q, rng)?);
    }
    Ok(out)
}

/// SGD step `W_i <- q_w(W_i - lr * G_i)`, written to the backend.
pub fn apply_updates(
    mlp: &mut Mlp,
    grads: &[Mat],
    hp: &HyperParams,
    backend: &mut Backend,
    rng: &mut Rng,
) -> Result<(), TrainError> {
    for (k, g) in grads.iter().enumerate() {
        let i = k + 1;
        let step = mlp.weight(i).sub(&g.scale(hp.learning_rate))?;
        let w = maybe_quantize(step, hp.precision.weight.as_ref(), rng)?;
        let held = backend.program(i, &w)?;
        mlp.set_weight(i, held);
    }
    Ok(())
}

/// Snaps the initial weights onto the weight grid, if one is configured.
pub fn quantize_weights(mlp: &mut Mlp, hp: &HyperParams, rng: &mut Rng) -> Result<(), TrainError> {
    if let Some(q) = hp.precision.weight.as_ref() {
        for i in 1..=mlp.depth() {
            let w = quantize(mlp.weight(i), q, Some(rng))?;
            mlp.set_weight(i, w);
        }
    }
    Ok(())
}

/// One training step on a batch. Returns the summed loss and the number of
/// correct predictions.
#[allow(clippy::too_many_arguments)]
pub fn train_step(
    mlp: &mut Mlp,
    bank: &FeedbackBank,
    kind: TrainerKind,
    x: &Mat,
    y: &Mat,
    labels: &[usize],
    hp: &HyperParams,
    backend: &mut Backend,
    rng: &mut Rng,
) -> Result<(f64, usize), TrainError> {
    let p = &hp.precision;
    let trace = forward_with(mlp, x, backend, p.activation.as_ref())?;
    let loss = cross_entropy(trace.logits(), labels);
    let correct = argmax_columns(trace.logits()).iter().zip(labels).filter(|(a, b)| a == b).count();
    let e = output_error(trace.logits(), y)?;
    let deltas = match kind {
        TrainerKind::Bp => bp_backward(&trace, mlp, &e, backend, p.error.as_ref(), hp.requantize_errors, rng)?,
        TrainerKind::Dfa => dfa_backward(&trace, mlp.topology(), bank, &e, backend, p.error.as_ref(), rng)?,
    };
    let grads = gradients(&deltas, &trace, backend, p.gradient.as_ref(), rng)?;
    apply_updates(mlp, &grads, hp, backend, rng)?;
    Ok((loss, correct))
}

/// Mean loss and accuracy over a split, read through the backend without
/// recording events.
pub fn evaluate(
    mlp: &Mlp,
    data: &Dataset,
    backend: &mut Backend,
    activation_q: Option<&Quantizer>,
) -> Result<(f64, f64), TrainError> {
    if data.is_empty() {
        return Ok((0.0, 0.0));
    }
    let was = backend.recording();
    backend.set_recording(false);
    let result = (|| {
        let mut loss = 0.0;
        let mut correct = 0;
        for idx in sequential_batches(data.len(), 500) {
            let x = data.images().select_cols(&idx);
            let labels: Vec<usize> = idx.iter().map(|&i| data.labels()[i]).collect();
            let trace = forward_with(mlp, &x, backend, activation_q)?;
            loss += cross_entropy(trace.logits(), &labels);
            correct += argmax_columns(trace.logits()).iter().zip(&labels).filter(|(a, b)| a == b).count();
        }
        Ok((loss / data.len() as f64, correct as f64 / data.len() as f64))
    })();
    backend.set_recording(was);
    result
}

/// One epoch of history.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct History {
    pub records: Vec<EpochRecord>,
    /// Epoch at which the loss became non-finite; training stopped there.
    pub diverged_at: Option<usize>,
}

impl History {
    pub fn test_accuracies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.test_accuracy).collect()
    }

    pub fn final_test_accuracy(&self) -> Option<f64> {
        self.records.last().map(|r| r.test_accuracy)
    }
}

/// Per-epoch callback; returning `false` stops training early.
pub trait EpochObserver {
    fn on_epoch(&mut self, record: &EpochRecord, mlp: &Mlp) -> bool;
}

impl<F: FnMut(&EpochRecord, &Mlp) -> bool> EpochObserver for F {
    fn on_epoch(&mut self, record: &EpochRecord, mlp: &Mlp) -> bool {
        self(record, mlp)
    }
}

/// Full training loop. The backend is (re)loaded with `mlp` and the feedback
/// matrix first; shuffling and stochastic rounding draw from streams of
/// `hp.seed`.
#[allow(clippy::too_many_arguments)]
pub fn train(
    mlp: &mut Mlp,
    bank: &FeedbackBank,
    kind: TrainerKind,
    train_set: &Dataset,
    test_set: &Dataset,
    hp: &HyperParams,
    backend: &mut Backend,
    mut observer: Option<&mut dyn EpochObserver>,
) -> Result<History, TrainError> {
    hp.validate()?;
    let topo = mlp.topology().clone();
    if kind == TrainerKind::Dfa {
        bank.check(&topo)?;
    }
    for ds in [train_set, test_set] {
        if !ds.is_empty() && (ds.features() != topo.input() || ds.classes() != topo.classes()) {
            return Err(TrainError::Data(format!(
                "{} features / {} classes vs network {} / {}",
                ds.features(),
                ds.classes(),
                topo.input(),
                topo.classes()
            )));
        }
    }
    let mut shuffle = Rng::derive(hp.seed, streams::SHUFFLE);
    let mut qrng = Rng::derive(hp.seed, streams::QUANTIZE);
    quantize_weights(mlp, hp, &mut qrng)?;

    let was = backend.recording();
    backend.set_recording(false);
    let feedback = (kind == TrainerKind::Dfa && topo.depth() > 1).then(|| bank.master());
    let loaded = backend.load(mlp, feedback);
    backend.set_recording(was);
    loaded?;

    let mut history = History::default();
    for epoch in 1..=hp.epochs {
        let mut loss = 0.0;
        let mut correct = 0;
        for idx in batches(train_set.len(), hp.batch_size, &mut shuffle) {
            let x = train_set.images().select_cols(&idx);
            let y = train_set.one_hot(&idx);
            let labels: Vec<usize> = idx.iter().map(|&i| train_set.labels()[i]).collect();
            let (l, c) = train_step(mlp, bank, kind, &x, &y, &labels, hp, backend, &mut qrng)?;
            loss += l;
            correct += c;
            if !l.is_finite() {
                break;
            }
        }
        let n = train_set.len().max(1) as f64;
        let (test_loss, test_accuracy) = evaluate(mlp, test_set, backend, hp.precision.activation.as_ref())?;
        let rec =
            EpochRecord { epoch, train_loss: loss / n, train_accuracy: correct as f64 / n, test_loss, test_accuracy };
        let finite = rec.train_loss.is_finite() && mlp.weights().iter().all(Mat::is_finite);
        let keep_going = observer.as_mut().is_none_or(|o| o.on_epoch(&rec, mlp));
        history.records.push(rec);
        if !finite {
            history.diverged_at = Some(epoch);
            break;
        }
        if !keep_going {
            break;
        }
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{synthetic, Split, SyntheticSpec};
    use crate::math::Rng;
    use crate::network::{forward, xavier_init, Activation};
    use proptest::prelude::*;

    fn net(dims: &[usize], act: Activation, seed: u64) -> Mlp {
        xavier_init(&Topology::new(dims.to_vec(), act).unwrap(), &mut Rng::new(seed))
    }

    fn one_hot(classes: usize, labels: &[usize]) -> Mat {
        Mat::from_fn(classes, labels.len(), |i, j| (labels[j] == i) as u8 as f64)
    }

    #[test]
    fn saturated_softmax_error_vanishes() {
        let logits = Mat::column(&[0.0, 10.0, 0.0]);
        let e = output_error(&logits, &Mat::column(&[0.0, 1.0, 0.0])).unwrap();
        assert!(e.max_abs() < 1e-3);
    }

    #[test]
    fn uniform_logits_closed_form() {
        let e = output_error(&Mat::zeros(10, 1), &one_hot(10, &[0])).unwrap();
        assert!((e[(0, 0)] + 0.9).abs() < 1e-15);
        for i in 1..10 {
            assert!((e[(i, 0)] - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn output_error_matches_finite_differences() {
        let logits = Mat::column(&[0.3, -1.2, 2.0, 0.7]);
        let e = output_error(&logits, &one_hot(4, &[2])).unwrap();
        let h = 1e-5;
        for i in 0..4 {
            let mut up = logits.clone();
            let mut dn = logits.clone();
            up[(i, 0)] += h;
            dn[(i, 0)] -= h;
            let fd = (cross_entropy(&up, &[2]) - cross_entropy(&dn, &[2])) / (2.0 * h);
            assert!((fd - e[(i, 0)]).abs() <= 1e-6 * e[(i, 0)].abs().max(1e-3), "{i}: {fd} vs {}", e[(i, 0)]);
        }
    }

    #[test]
    fn linear_two_layer_bp_is_transpose_product() {
        let mlp = net(&[3, 4, 2], Activation::Identity, 1);
        let x = Mat::column(&[0.2, 0.5, 0.9]);
        let mut be = Backend::digital();
        let trace = forward(&mlp, &x, &mut be).unwrap();
        let e = Mat::column(&[0.4, -0.4]);
        let d = bp_backward(&trace, &mlp, &e, &mut be, None, true, &mut Rng::new(0)).unwrap();
        assert_eq!(d[0], mlp.weight(2).transpose().matmul(&e).unwrap());
        assert_eq!(d[1], e);
    }

    #[test]
    fn dead_relu_layer_has_zero_delta() {
        let mut mlp = net(&[2, 3, 2], Activation::Relu, 1);
        mlp.set_weight(1, Mat::filled(3, 2, -1.0));
        let mut be = Backend::digital();
        let trace = forward(&mlp, &Mat::column(&[1.0, 1.0]), &mut be).unwrap();
        let d = bp_backward(&trace, &mlp, &Mat::column(&[0.3, -0.3]), &mut be, None, true, &mut Rng::new(0)).unwrap();
        assert_eq!(d[0], Mat::zeros(3, 1));
    }

    #[test]
    fn zero_feedback_gives_zero_hidden_deltas() {
        let mlp = net(&[4, 5, 5, 3], Activation::Relu, 2);
        let bank = FeedbackBank::from_master(Mat::zeros(5, 3));
        let mut be = Backend::digital();
        let trace = forward(&mlp, &Mat::filled(4, 2, 0.5), &mut be).unwrap();
        let e = Mat::filled(3, 2, 0.1);
        let d = dfa_backward(&trace, mlp.topology(), &bank, &e, &mut be, None, &mut Rng::new(0)).unwrap();
        assert_eq!(d[0], Mat::zeros(5, 2));
        assert_eq!(d[1], Mat::zeros(5, 2));
        assert_eq!(d[2], e);
    }

    #[test]
    fn dfa_matches_nested_loop_oracle() {
        let topo = Topology::new(vec![5, 7, 4, 6, 3], Activation::Tanh).unwrap();
        let mlp = xavier_init(&topo, &mut Rng::new(4));
        let bank = FeedbackBank::new(&topo, 9);
        let mut be = Backend::digital();
        let x = Mat::from_fn(5, 3, |i, j| ((i * 3 + j) as f64 * 0.37).sin());
        let trace = forward(&mlp, &x, &mut be).unwrap();
        let e = output_error(trace.logits(), &one_hot(3, &[0, 2, 1])).unwrap();
        let d = dfa_backward(&trace, &topo, &bank, &e, &mut be, None, &mut Rng::new(0)).unwrap();
        for i in 1..topo.depth() {
            let b = bank.master();
            for r in 0..topo.layer_dims[i] {
                for c in 0..3 {
                    let mut s = 0.0;
                    for k in 0..3 {
                        s += b[(r, k)] * e[(k, c)];
                    }
                    let want = s * topo.activation.derivative(trace.pre(i)[(r, c)]);
                    assert_eq!(d[i - 1][(r, c)].to_bits(), want.to_bits());
                }
            }
        }
    }

    #[test]
    fn scalar_update() {
        let topo = Topology::new(vec![1, 1], Activation::Relu).unwrap();
        let mut mlp = Mlp::from_weights(topo.clone(), vec![Mat::column(&[0.5])]).unwrap();
        let trace = forward(&mlp, &Mat::column(&[2.0]), &mut Backend::digital()).unwrap();
        let hp = HyperParams { learning_rate: 0.1, ..HyperParams::default() };
        let mut be = Backend::digital();
        let mut rng = Rng::new(0);
        let g = gradients(&[Mat::column(&[3.0])], &trace, &mut be, None, &mut rng).unwrap();
        apply_updates(&mut mlp, &g, &hp, &mut be, &mut rng).unwrap();
        assert!((mlp.weight(1)[(0, 0)] - (0.5 - 0.6)).abs() < 1e-15);
    }

    #[test]
    fn zero_error_leaves_weights() {
        let mut mlp = net(&[3, 4, 2], Activation::Relu, 3);
        let before = mlp.clone();
        let mut be = Backend::digital();
        let trace = forward(&mlp, &Mat::filled(3, 2, 0.3), &mut be).unwrap();
        let mut rng = Rng::new(0);
        let d = bp_backward(&trace, &mlp, &Mat::zeros(2, 2), &mut be, None, true, &mut rng).unwrap();
        let g = gradients(&d, &trace, &mut be, None, &mut rng).unwrap();
        apply_updates(&mut mlp, &g, &HyperParams::default(), &mut be, &mut rng).unwrap();
        assert_eq!(mlp, before);
    }

    #[test]
    fn sgd_step_matches_elementwise_oracle() {
        let mut mlp = net(&[3, 4, 2], Activation::Relu, 5);
        let before = mlp.clone();
        let mut be = Backend::digital();
        let x = Mat::from_fn(3, 5, |i, j| (i + 2 * j) as f64 / 10.0);
        let trace = forward(&mlp, &x, &mut be).unwrap();
        let e = output_error(trace.logits(), &one_hot(2, &[0, 1, 1, 0, 1])).unwrap();
        let mut rng = Rng::new(0);
        let d = bp_backward(&trace, &mlp, &e, &mut be, None, true, &mut rng).unwrap();
        let g = gradients(&d, &trace, &mut be, None, &mut rng).unwrap();
        let hp = HyperParams::default();
        apply_updates(&mut mlp, &g, &hp, &mut be, &mut rng).unwrap();
        for i in 1..=2 {
            let (r, c) = before.weight(i).shape();
            for a in 0..r {
                for b in 0..c {
                    let mut s = 0.0;
                    for n in 0..5 {
                        s += d[i - 1][(a, n)] * trace.post(i - 1)[(b, n)];
                    }
                    let want = before.weight(i)[(a, b)] - hp.learning_rate * (s / 5.0);
                    assert!((mlp.weight(i)[(a, b)] - want).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn one_layer_rules_coincide() {
        let topo = Topology::new(vec![6, 3], Activation::Relu).unwrap();
        let bank = FeedbackBank::new(&topo, 1);
        assert_eq!(bank.master().rows(), 0);
        let mlp = xavier_init(&topo, &mut Rng::new(2));
        let mut be = Backend::digital();
        let trace = forward(&mlp, &Mat::filled(6, 4, 0.25), &mut be).unwrap();
        let e = output_error(trace.logits(), &one_hot(3, &[0, 1, 2, 0])).unwrap();
        let q = Quantizer::nearest(4, 1.0);
        let a = bp_backward(&trace, &mlp, &e, &mut be, Some(&q), true, &mut Rng::new(0)).unwrap();
        let b = dfa_backward(&trace, &topo, &bank, &e, &mut be, Some(&q), &mut Rng::new(0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn error_quantizer_applied_once_for_dfa() {
        let topo = Topology::new(vec![4, 6, 6, 6, 3], Activation::Relu).unwrap();
        let mlp = xavier_init(&topo, &mut Rng::new(3));
        let bank = FeedbackBank::new(&topo, 3);
        let mut be = Backend::digital();
        let trace = forward(&mlp, &Mat::filled(4, 2, 0.7), &mut be).unwrap();
        let e = output_error(trace.logits(), &one_hot(3, &[1, 2])).unwrap();
        let q = Quantizer::nearest(3, 1.0);
        let eq = quantize(&e, &q, None).unwrap();
        let with_q = dfa_backward(&trace, &topo, &bank, &e, &mut be, Some(&q), &mut Rng::new(0)).unwrap();
        let pre_q = dfa_backward(&trace, &topo, &bank, &eq, &mut be, None, &mut Rng::new(0)).unwrap();
        assert_eq!(with_q, pre_q);

        let on = bp_backward(&trace, &mlp, &e, &mut be, Some(&q), true, &mut Rng::new(0)).unwrap();
        let off = bp_backward(&trace, &mlp, &e, &mut be, Some(&q), false, &mut Rng::new(0)).unwrap();
        assert_ne!(on[0], off[0]);
        assert_eq!(on[3], off[3]);
    }

    #[test]
    fn bank_slices_share_the_master() {
        let topo = Topology::new(vec![3, 8, 5, 2], Activation::Relu).unwrap();
        let bank = FeedbackBank::new(&topo, 0);
        assert_eq!(bank.master().shape(), (8, 2));
        let b2 = bank.slice(5);
        for r in 0..5 {
            assert_eq!(b2.row(r), bank.master().row(r));
        }
        let bound = 1.0 / 2f64.sqrt();
        assert!(bank.master().max_abs() <= bound);
    }

    fn blobs(seed: u64) -> (Dataset, Dataset) {
        let spec = SyntheticSpec { classes: 3, features: 8, samples_per_class: 30, std: 0.05, seed };
        (synthetic(&spec, Split::Train).unwrap(), synthetic(&spec, Split::Test).unwrap())
    }

    #[test]
    fn zero_lr_keeps_accuracy_and_bank() {
        let (tr, te) = blobs(1);
        let topo = Topology::new(vec![8, 6, 6, 3], Activation::Relu).unwrap();
        let mut mlp = xavier_init(&topo, &mut Rng::new(0));
        let bank = FeedbackBank::new(&topo, 0);
        let digest = bank.digest();
        let hp = HyperParams { learning_rate: 0.0, epochs: 3, batch_size: 16, ..HyperParams::default() };
        let h = train(&mut mlp, &bank, TrainerKind::Dfa, &tr, &te, &hp, &mut Backend::digital(), None).unwrap();
        let acc = h.test_accuracies();
        assert!(acc.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(bank.digest(), digest);
    }

    #[test]
    fn both_rules_learn_blobs_and_are_deterministic() {
        let (tr, te) = blobs(2);
        let topo = Topology::new(vec![8, 16, 16, 3], Activation::Relu).unwrap();
        let bank = FeedbackBank::new(&topo, 0);
        let hp = HyperParams { learning_rate: 0.2, epochs: 30, batch_size: 10, ..HyperParams::default() };
        for kind in [TrainerKind::Bp, TrainerKind::Dfa] {
            let run = || {
                let mut mlp = xavier_init(&topo, &mut Rng::new(0));
                train(&mut mlp, &bank, kind, &tr, &te, &hp, &mut Backend::digital(), None).unwrap()
            };
            let h = run();
            assert!(h.final_test_accuracy().unwrap() > 0.9, "{kind}: {:?}", h.test_accuracies());
            assert_eq!(h, run());
        }
    }

    #[test]
    fn divergence_is_flagged() {
        let (tr, te) = blobs(3);
        let topo = Topology::new(vec![8, 16, 3], Activation::Relu).unwrap();
        let mut mlp = xavier_init(&topo, &mut Rng::new(0));
        let bank = FeedbackBank::new(&topo, 0);
        let hp = HyperParams { learning_rate: 1e200, epochs: 5, batch_size: 4, ..HyperParams::default() };
        let h = train(&mut mlp, &bank, TrainerKind::Bp, &tr, &te, &hp, &mut Backend::digital(), None).unwrap();
        assert!(h.diverged_at.is_some());
        assert!(h.records.len() < 5);
    }

    #[test]
    fn observer_can_stop_training() {
        let (tr, te) = blobs(4);
        let topo = Topology::new(vec![8, 3], Activation::Relu).unwrap();
        let mut mlp = xavier_init(&topo, &mut Rng::new(0));
        let bank = FeedbackBank::new(&topo, 0);
        let hp = HyperParams { epochs: 10, ..HyperParams::default() };
        let mut seen = 0;
        let mut obs = |r: &EpochRecord, _: &Mlp| {
            seen = r.epoch;
            r.epoch < 2
        };
        let h =
            train(&mut mlp, &bank, TrainerKind::Bp, &tr, &te, &hp, &mut Backend::digital(), Some(&mut obs)).unwrap();
        assert_eq!(h.records.len(), 2);
        assert_eq!(seen, 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn dfa_layer_order_is_irrelevant(depth in 2usize..6, width in 2usize..9, seed in any::<u64>()) {
            let mut dims = vec![5];
            dims.extend(std::iter::repeat_n(width, depth - 1));
            dims.push(3);
            let topo = Topology::new(dims, Activation::Relu).unwrap();
            let mlp = xavier_init(&topo, &mut Rng::new(seed));
            let bank = FeedbackBank::new(&topo, seed);
            let mut be = Backend::digital();
            let x = Mat::from_fn(5, 4, |i, j| ((seed as usize + i * 5 + j) % 11) as f64 / 11.0);
            let trace = forward(&mlp, &x, &mut be).unwrap();
            let e = output_error(trace.logits(), &one_hot(3, &[0, 1, 2, 1])).unwrap();
            let proj = dfa_project(&bank, &e, &mut be).unwrap();
            let forward_order: Vec<Mat> = (1..depth).map(|i| dfa_layer_delta(&trace, &topo, &proj, i).unwrap()).collect();
            let mut reverse_order: Vec<Mat> = (1..depth).rev().map(|i| dfa_layer_delta(&trace, &topo, &proj, i).unwrap()).collect();
            reverse_order.reverse();
            prop_assert_eq!(&forward_order, &reverse_order);
            let full = dfa_backward(&trace, &topo, &bank, &e, &mut be, None, &mut Rng::new(0)).unwrap();
            prop_assert_eq!(&full[..depth - 1], &forward_order[..]);
        }
    }
}
