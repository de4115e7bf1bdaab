//! Mask losses, gradient checking, optimisers, the training loop, and
//! tensor/checkpoint files.
//!
//! # Tensor file format
//!
//! A UTF-8 header followed by raw little-endian `f32` data:
//!
//! ```text
//! ctxfront-tensors 1
//! meta <key> = <value>              (zero or more)
//! tensor <name> <rows> <cols> <offset>
//! ...
//! end
//! <f32 data>
//! ```
//!
//! `offset` counts `f32` elements from the first byte after the `end` line.
//! Model checkpoints store the architecture as `meta` lines and one tensor per
//! parameter; feature maps are stored as a single tensor named `features`.

use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ParamId, ParameterStore, Tape, Var};
use crate::config::KvConfig;
use crate::datagen::{mix_seed, TrainExample};
use crate::error::{Error, Result};
use crate::features::{FeatureMap, MaskEstimate};
use crate::model::{random_trim_noise_context, signal_dropout, DropoutProbs, FrontendModel, ModelConfig};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

const TENSOR_MAGIC: &str = "ctxfront-tensors 1";

/// `l1 * mean|est - ideal| + l2 * mean((est - ideal)^2)`.
pub fn mask_loss<T: Scalar>(est: &MaskEstimate<T>, ideal: &MaskEstimate<T>, l1: f64, l2: f64) -> Result<f64> {
    if est.shape() != ideal.shape() {
        return Err(Error::shape("mask_loss", format!("{:?}", ideal.shape()), format!("{:?}", est.shape())));
    }
    let n = est.data().len().max(1) as f64;
    let (mut abs, mut sq) = (0.0, 0.0);
    for (&a, &b) in est.data().as_slice().iter().zip(ideal.data().as_slice()) {
        let e = a.to_f64_lossy() - b.to_f64_lossy();
        abs += e.abs();
        sq += e * e;
    }
    Ok(l1 * abs / n + l2 * sq / n)
}

/// Outcome of a finite-difference gradient comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub checked: usize,
    /// Elements whose final comparison used the precise type
    /// ([`grad_check_refined`] only).
    pub refined: usize,
}

impl GradCheckReport {
    fn empty() -> Self {
        Self {
            max_rel_error: 0.0,
            worst_param: String::new(),
            worst_index: 0,
            checked: 0,
            refined: 0,
        }
    }

    fn record(&mut self, rel: f64, param: &str, index: usize) {
        self.checked += 1;
        if rel > self.max_rel_error {
            self.max_rel_error = rel;
            self.worst_param = param.to_string();
            self.worst_index = index;
        }
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Analytic gradients of the scalar built by `f`, one matrix per parameter.
pub fn analytic_gradients<T: Scalar, F>(f: &F, params: &mut ParameterStore<T>) -> Result<Vec<Matrix<T>>>
where
    F: Fn(&mut Tape<T>, &ParameterStore<T>) -> Result<Var>,
{
    params.zero_grads();
    let mut tape = Tape::new();
    let root = f(&mut tape, params)?;
    if !tape.value(root).is_finite() {
        return Err(Error::NonFinite("grad_check objective".into()));
    }
    tape.backward(root, params)?;
    if !params.grads_finite() {
        return Err(Error::NonFinite("grad_check analytic gradient".into()));
    }
    Ok(params.ids().map(|id| params.grad(id).clone()).collect())
}

fn eval_scalar<T: Scalar, F>(f: &F, params: &ParameterStore<T>) -> Result<T>
where
    F: Fn(&mut Tape<T>, &ParameterStore<T>) -> Result<Var>,
{
    let mut tape = Tape::new();
    let root = f(&mut tape, params)?;
    let (r, c) = tape.shape(root);
    if (r, c) != (1, 1) {
        return Err(Error::shape("grad_check", "(1, 1) objective", format!("({r}, {c})")));
    }
    let v = tape.value(root).get(0, 0);
    if !v.is_finite() {
        return Err(Error::NonFinite("grad_check objective".into()));
    }
    Ok(v)
}

/// `(f(θ+ε) - f(θ-ε)) / 2ε` for element `i` of parameter `id`, in `T`.
fn central_difference<T: Scalar, F>(f: &F, params: &mut ParameterStore<T>, id: ParamId, i: usize, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape<T>, &ParameterStore<T>) -> Result<Var>,
{
    let step = T::of(eps);
    let orig = params.value(id).as_slice()[i];
    params.value_mut(id).as_mut_slice()[i] = orig + step;
    let plus = eval_scalar(f, params);
    params.value_mut(id).as_mut_slice()[i] = orig - step;
    let minus = eval_scalar(f, params);
    params.value_mut(id).as_mut_slice()[i] = orig;
    Ok(((plus? - minus?) / (step + step)).to_f64_lossy())
}

fn check_layout<T: Scalar>(params: &ParameterStore<T>, analytic: &[Matrix<T>]) -> Result<()> {
    if analytic.len() != params.len() {
        return Err(Error::shape("grad_check", format!("{} gradients", params.len()), analytic.len().to_string()));
    }
    for (id, a) in params.ids().zip(analytic) {
        if a.shape() != params.value(id).shape() {
            return Err(Error::shape("grad_check", format!("{:?}", params.value(id).shape()), format!("{:?}", a.shape())));
        }
    }
    Ok(())
}

/// Compare `analytic` against central differences `(f(θ+ε) - f(θ-ε)) / 2ε`
/// element by element, evaluated in `T`; relative error as in
/// [`relative_error`].
pub fn compare_gradients<T: Scalar, F>(
    f: &F,
    params: &mut ParameterStore<T>,
    analytic: &[Matrix<T>],
    eps: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<T>, &ParameterStore<T>) -> Result<Var>,
{
    check_layout(params, analytic)?;
    let ids: Vec<_> = params.ids().collect();
    let mut report = GradCheckReport::empty();
    for (&id, a) in ids.iter().zip(analytic) {
        for i in 0..a.len() {
            let numeric = central_difference(f, params, id, i, eps)?;
            let rel = relative_error(a.as_slice()[i].to_f64_lossy(), numeric);
            report.record(rel, params.name(id), i);
        }
    }
    Ok(report)
}

/// Maximum relative error between analytic and central-difference gradients
/// of `f` over every element of `params`.
pub fn grad_check<T: Scalar, F>(f: F, params: &mut ParameterStore<T>, eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<T>, &ParameterStore<T>) -> Result<Var>,
{
    let analytic = analytic_gradients(&f, params)?;
    compare_gradients(&f, params, &analytic, eps)
}

/// When [`grad_check_refined`] falls back to the precise type.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefinePolicy {
    /// Recompute when `max(|a|, |n|)` is below this: the regime where
    /// rounding in the fast type can reach the tolerance.
    pub refine_below: f64,
    /// Recompute when the fast comparison disagrees by more than this.
    pub screen_tol: f64,
}

impl Default for RefinePolicy {
    fn default() -> Self {
        Self {
            refine_below: 1e-4,
            screen_tol: 1e-6,
        }
    }
}

/// Gradient check of one objective written in two scalar types.
///
/// Analytic gradients come from `precise` (type `H`). Every element is
/// first differenced with `fast` (type `L`, parameters cast from `params`);
/// elements the screen cannot settle under `policy` are differenced again in
/// `H`. With `L = f64` the rounding in a screened difference is around
/// 1e-10 absolute, so elements above `refine_below` that agree to
/// `screen_tol` are settled far inside any 1e-4 tolerance.
pub fn grad_check_refined<L, H, FL, FH>(
    fast: FL,
    precise: FH,
    params: &mut ParameterStore<H>,
    eps: f64,
    policy: RefinePolicy,
) -> Result<GradCheckReport>
where
    L: Scalar,
    H: Scalar,
    FL: Fn(&mut Tape<L>, &ParameterStore<L>) -> Result<Var>,
    FH: Fn(&mut Tape<H>, &ParameterStore<H>) -> Result<Var>,
{
    let analytic = analytic_gradients(&precise, params)?;
    check_layout(params, &analytic)?;
    let mut low: ParameterStore<L> = params.cast();
    let ids: Vec<_> = params.ids().collect();
    let mut report = GradCheckReport::empty();
    for (&id, a) in ids.iter().zip(&analytic) {
        for i in 0..a.len() {
            let an = a.as_slice()[i].to_f64_lossy();
            let numeric = central_difference(&fast, &mut low, id, i, eps)?;
            let mut rel = relative_error(an, numeric);
            if an.abs().max(numeric.abs()) < policy.refine_below || rel > policy.screen_tol {
                rel = relative_error(an, central_difference(&precise, params, id, i, eps)?);
                report.refined += 1;
            }
            report.record(rel, params.name(id), i);
        }
    }
    Ok(report)
}

/// Refined gradient check of the mask loss of a freshly initialised model
/// over random inputs: `frames` utterance frames, `context_frames` noise
/// context frames (0 leaves it absent), playback and speaker present.
/// Parameters get small random offsets so zero-initialised paths carry
/// gradient.
pub fn model_grad_check(config: &ModelConfig, seed: u64, frames: usize, context_frames: usize, eps: f64) -> Result<GradCheckReport> {
    use crate::model::{ContextBundle, SpeakerEmbedding};
    use crate::scalar::DoubleDouble;
    use crate::tensor::Matrix;

    let f = config.feature_channels;
    let model = FrontendModel::<f64>::new(config.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x9c));
    let noisy = FeatureMap::new(Matrix::randn(frames, f, 1.0, &mut rng))?;
    let mut bundle = ContextBundle::empty();
    bundle.playback_ref = Some(FeatureMap::new(Matrix::randn(frames, f, 1.0, &mut rng))?);
    if context_frames > 0 {
        bundle.noise_context = Some(FeatureMap::new(Matrix::randn(context_frames, f, 1.0, &mut rng))?);
    }
    bundle.dvector = Some(SpeakerEmbedding::from_unnormalized(Matrix::<f64>::randn(1, 256, 1.0, &mut rng).into_vec())?);
    let target: Matrix<f64> = Matrix::randn(frames, f, 1.0, &mut rng).map(|v: f64| 1.0 / (1.0 + (-v).exp()));

    let precise = model.cast::<DoubleDouble>();
    let (noisy_p, bundle_p, target_p) = (noisy.cast::<DoubleDouble>(), bundle.cast::<DoubleDouble>(), target.cast::<DoubleDouble>());
    let mut params = precise.params.clone();
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let (r, c) = params.value(id).shape();
        let noise = Matrix::<DoubleDouble>::randn(r, c, 0.1, &mut rng);
        params.value_mut(id).add_assign(&noise);
    }
    let one = DoubleDouble::ONE;
    grad_check_refined(
        |tape, p| {
            let mask = model.forward_with(tape, p, &noisy, &bundle)?;
            tape.mask_loss(mask, &target, 1.0, 1.0)
        },
        |tape, p| {
            let mask = precise.forward_with(tape, p, &noisy_p, &bundle_p)?;
            tape.mask_loss(mask, &target_p, one, one)
        },
        &mut params,
        eps,
        RefinePolicy::default(),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        }
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!("unknown optimizer `{other}`"))),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Optimisation settings for one run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub l1: f64,
    pub l2: f64,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            steps: 1000,
            batch_size: 8,
            seed: 0,
            l1: 1.0,
            l2: 1.0,
            clip_norm: 0.0,
        }
    }
}

const TRAIN_KEYS: &[&str] = &[
    "optimizer",
    "learning_rate",
    "beta1",
    "beta2",
    "adam_eps",
    "steps",
    "batch_size",
    "seed",
    "l1",
    "l2",
    "clip_norm",
];

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.l1 < 0.0 || self.l2 < 0.0 || self.clip_norm < 0.0 {
            return Err(Error::Config("loss weights and clip_norm must be non-negative".into()));
        }
        Ok(())
    }

    pub fn apply(&mut self, cfg: &KvConfig) -> Result<()> {
        self.optimizer = cfg.get_or("optimizer", self.optimizer)?;
        self.learning_rate = cfg.get_or("learning_rate", self.learning_rate)?;
        self.beta1 = cfg.get_or("beta1", self.beta1)?;
        self.beta2 = cfg.get_or("beta2", self.beta2)?;
        self.adam_eps = cfg.get_or("adam_eps", self.adam_eps)?;
        self.steps = cfg.get_or("steps", self.steps)?;
        self.batch_size = cfg.get_or("batch_size", self.batch_size)?;
        self.seed = cfg.get_or("seed", self.seed)?;
        self.l1 = cfg.get_or("l1", self.l1)?;
        self.l2 = cfg.get_or("l2", self.l2)?;
        self.clip_norm = cfg.get_or("clip_norm", self.clip_norm)?;
        self.validate()
    }

    pub fn keys() -> &'static [&'static str] {
        TRAIN_KEYS
    }
}

/// Optimiser state; each parameter tensor is updated independently.
#[derive(Clone, Debug)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    step: u64,
    m: Vec<Matrix<T>>,
    v: Vec<Matrix<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, params: &ParameterStore<T>) -> Self {
        let zeros = || params.ids().map(|id| { let (r, c) = params.value(id).shape(); Matrix::zeros(r, c) }).collect();
        let (m, v) = match kind {
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
            OptimizerKind::Adam => (zeros(), zeros()),
        };
        Self { kind, step: 0, m, v }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update from the gradients currently in `params`.
    pub fn apply(&mut self, params: &mut ParameterStore<T>, cfg: &TrainConfig) {
        self.step += 1;
        let lr = T::of(cfg.learning_rate);
        let ids: Vec<_> = params.ids().collect();
        match self.kind {
            OptimizerKind::Sgd => {
                for id in ids {
                    let (value, grad) = params.value_and_grad_mut(id);
                    value.axpy(-lr, grad);
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
                let t = self.step as i32;
                let c1 = T::one() - T::of(cfg.beta1.powi(t));
                let c2 = T::one() - T::of(cfg.beta2.powi(t));
                let eps = T::of(cfg.adam_eps);
                for id in ids {
                    let (value, grad) = params.value_and_grad_mut(id);
                    let m = &mut self.m[id.index()];
                    let v = &mut self.v[id.index()];
                    for (((p, &g), m), v) in value
                        .as_mut_slice()
                        .iter_mut()
                        .zip(grad.as_slice())
                        .zip(m.as_mut_slice())
                        .zip(v.as_mut_slice())
                    {
                        *m = b1 * *m + (T::one() - b1) * g;
                        *v = b2 * *v + (T::one() - b2) * g * g;
                        let mh = *m / c1;
                        let vh = *v / c2;
                        *p -= lr * mh / (vh.sqrt() + eps);
                    }
                }
            }
        }
    }
}

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    pub seed: u64,
}

/// Model plus optimiser state for a training run.
#[derive(Clone, Debug)]
pub struct Trainer<T> {
    pub model: FrontendModel<T>,
    pub config: TrainConfig,
    optimizer: Optimizer<T>,
    step: usize,
    history: Vec<LogRow>,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: FrontendModel<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self::unchecked(model, config))
    }

    /// Like [`Trainer::new`] but accepts `learning_rate = 0`, which freezes
    /// the parameters.
    pub fn unchecked(model: FrontendModel<T>, config: TrainConfig) -> Self {
        let optimizer = Optimizer::new(config.optimizer, &model.params);
        Self {
            model,
            config,
            optimizer,
            step: 0,
            history: Vec::new(),
        }
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn history(&self) -> &[LogRow] {
        &self.history
    }

    /// Loss of one example under the current parameters with all given
    /// context as-is (no trimming or dropout).
    pub fn example_loss(&self, ex: &TrainExample<T>) -> Result<f64> {
        let est = self.model.enhance_forward(&ex.noisy, &ex.bundle)?;
        mask_loss(&est, &ex.ideal_mask, self.config.l1, self.config.l2)
    }

    /// Trim, drop out, forward and differentiate every example, then apply
    /// one update with the batch-mean gradient. Returns the mean loss.
    pub fn train_step(&mut self, batch: &[TrainExample<T>]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::invalid("train_step", "empty batch"));
        }
        let model = &mut self.model;
        let probs = DropoutProbs::uniform(model.config().dropout_prob);
        let channels = model.config().feature_channels;
        let (l1, l2) = (T::of(self.config.l1), T::of(self.config.l2));
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.config.seed, self.step as u64));
        model.params.zero_grads();
        let mut total = 0.0;
        for (i, ex) in batch.iter().enumerate() {
            let mut bundle = ex.bundle.clone();
            if let Some(ctx) = &bundle.noise_context {
                bundle.noise_context = Some(random_trim_noise_context(ctx, &mut rng));
            }
            let bundle = signal_dropout(&bundle, &probs, &mut rng, ex.noisy.num_frames(), channels);
            let mut tape = Tape::new();
            let mask = model.forward_on(&mut tape, &ex.noisy, &bundle)?;
            let loss = tape.mask_loss(mask, ex.ideal_mask.data(), l1, l2)?;
            let value = tape.value(loss).get(0, 0).to_f64_lossy();
            if !value.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss at step {} on batch example {i} (scene seed {})",
                    self.step, ex.spec.seed
                )));
            }
            total += value;
            tape.backward(loss, &mut model.params)?;
        }
        model.params.scale_grads(T::one() / T::of(batch.len() as f64));
        if !model.params.grads_finite() {
            return Err(Error::NonFinite(format!("gradient at step {}", self.step)));
        }
        if self.config.clip_norm > 0.0 {
            clip_grad_norm(&mut model.params, self.config.clip_norm);
        }
        self.optimizer.apply(&mut model.params, &self.config);
        let mean = total / batch.len() as f64;
        self.history.push(LogRow {
            step: self.step,
            loss: mean,
            lr: self.config.learning_rate,
            seed: self.config.seed,
        });
        self.step += 1;
        Ok(mean)
    }

    /// Run `steps` updates, drawing each batch from `batch_for(step)`.
    pub fn fit<F>(&mut self, steps: usize, mut batch_for: F) -> Result<()>
    where
        F: FnMut(usize) -> Result<Vec<TrainExample<T>>>,
    {
        for _ in 0..steps {
            let batch = batch_for(self.step)?;
            self.train_step(&batch)?;
        }
        Ok(())
    }
}

/// Rescale all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<T: Scalar>(params: &mut ParameterStore<T>, max_norm: f64) -> f64 {
    let sq: f64 = params
        .ids()
        .map(|id| params.grad(id).as_slice().iter().map(|g| g.to_f64_lossy().powi(2)).sum::<f64>())
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm {
        params.scale_grads(T::of(max_norm / norm));
    }
    norm
}

/// Append rows to a `step,loss,lr,seed` CSV, writing the header for a new file.
pub fn append_log(path: impl AsRef<Path>, rows: &[LogRow]) -> Result<()> {
    let path = path.as_ref();
    let fresh = !path.exists();
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    if fresh {
        text.push_str("step,loss,lr,seed\n");
    }
    for r in rows {
        text.push_str(&format!("{},{:.6},{},{}\n", r.step, r.loss, r.lr, r.seed));
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Write named tensors (as `f32`) with metadata lines.
pub fn write_tensors<T: Scalar>(path: impl AsRef<Path>, meta: &KvConfig, tensors: &[(&str, &Matrix<T>)]) -> Result<()> {
    let path = path.as_ref();
    let mut header = format!("{TENSOR_MAGIC}\n");
    for key in meta.keys() {
        header.push_str(&format!("meta {key} = {}\n", meta.raw(key).unwrap_or("")));
    }
    let mut offset = 0;
    for (name, m) in tensors {
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::Checkpoint(format!("invalid tensor name `{name}`")));
        }
        header.push_str(&format!("tensor {name} {} {} {offset}\n", m.rows(), m.cols()));
        offset += m.len();
    }
    header.push_str("end\n");
    let mut bytes = header.into_bytes();
    bytes.reserve(offset * 4);
    for (_, m) in tensors {
        for &v in m.as_slice() {
            bytes.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Read a tensor file written by [`write_tensors`].
pub fn read_tensors(path: impl AsRef<Path>) -> Result<(KvConfig, Vec<(String, Matrix<f32>)>)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: String| Error::Checkpoint(format!("{}: {msg}", path.display()));
    let mut pos = 0;
    let mut next_line = || -> Result<&str> {
        let rest = &bytes[pos..];
        let end = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("truncated header".into()))?;
        pos += end + 1;
        std::str::from_utf8(&rest[..end]).map_err(|_| bad("header is not UTF-8".into()))
    };
    if next_line()? != TENSOR_MAGIC {
        return Err(bad("missing tensor-file magic line".into()));
    }
    let mut meta_text = String::new();
    let mut entries = Vec::new();
    loop {
        let line = next_line()?;
        if line == "end" {
            break;
        }
        if let Some(rest) = line.strip_prefix("meta ") {
            meta_text.push_str(rest);
            meta_text.push('\n');
        } else if let Some(rest) = line.strip_prefix("tensor ") {
            let parts: Vec<&str> = rest.split(' ').collect();
            let parsed: Option<(usize, usize, usize)> = match parts.as_slice() {
                [_, r, c, o] => r.parse().ok().zip(c.parse().ok()).zip(o.parse().ok()).map(|((r, c), o)| (r, c, o)),
                _ => None,
            };
            let (rows, cols, offset) = parsed.ok_or_else(|| bad(format!("malformed tensor line `{line}`")))?;
            entries.push((parts[0].to_string(), rows, cols, offset));
        } else {
            return Err(bad(format!("unexpected header line `{line}`")));
        }
    }
    let data = &bytes[pos..];
    let meta = KvConfig::parse(&meta_text)?;
    let tensors = entries
        .into_iter()
        .map(|(name, rows, cols, offset)| {
            let (start, end) = (offset * 4, (offset + rows * cols) * 4);
            let raw = data.get(start..end).ok_or_else(|| bad(format!("tensor `{name}` runs past end of file")))?;
            let values = raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
            Ok((name, Matrix::from_vec(rows, cols, values)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((meta, tensors))
}

/// Save a model's architecture and parameters.
pub fn save_checkpoint<T: Scalar>(model: &FrontendModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let tensors: Vec<(&str, &Matrix<T>)> = model.params.ids().map(|id| (model.params.name(id), model.params.value(id))).collect();
    write_tensors(path, &model.config().to_kv(), &tensors)
}

/// Rebuild a model from a checkpoint.
pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<FrontendModel<T>> {
    let (meta, tensors) = read_tensors(path)?;
    meta.check_known(ModelConfig::keys())?;
    let config = ModelConfig::from_kv(&meta)?;
    let mut model = FrontendModel::new(config, 0)?;
    fill_params(&mut model.params, tensors)?;
    Ok(model)
}

/// Load a checkpoint, requiring its architecture to equal `expected`.
pub fn load_checkpoint_for<T: Scalar>(path: impl AsRef<Path>, expected: &ModelConfig) -> Result<FrontendModel<T>> {
    let path = path.as_ref();
    let model: FrontendModel<T> = load_checkpoint(path)?;
    if model.config() != expected {
        return Err(Error::Checkpoint(format!(
            "{}: checkpoint architecture {:?} does not match configured {:?}",
            path.display(),
            model.config(),
            expected
        )));
    }
    Ok(model)
}

fn fill_params<T: Scalar>(params: &mut ParameterStore<T>, tensors: Vec<(String, Matrix<f32>)>) -> Result<()> {
    if tensors.len() != params.len() {
        return Err(Error::Checkpoint(format!("{} tensors in file, model has {}", tensors.len(), params.len())));
    }
    for (name, m) in tensors {
        let id = params
            .id(&name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown parameter `{name}`")))?;
        if params.value(id).shape() != m.shape() {
            return Err(Error::Checkpoint(format!(
                "parameter `{name}`: shape {:?} in file, {:?} in model",
                m.shape(),
                params.value(id).shape()
            )));
        }
        *params.value_mut(id) = m.cast();
    }
    Ok(())
}

pub fn save_feature_map<T: Scalar>(fm: &FeatureMap<T>, path: impl AsRef<Path>) -> Result<()> {
    write_tensors(path, &KvConfig::new(), &[("features", fm.data())])
}

pub fn load_feature_map<T: Scalar>(path: impl AsRef<Path>) -> Result<FeatureMap<T>> {
    let (_, tensors) = read_tensors(path)?;
    match tensors.into_iter().find(|(n, _)| n == "features") {
        Some((_, m)) => FeatureMap::new(m.cast()),
        None => Err(Error::Checkpoint("no `features` tensor".into())),
    }
}
