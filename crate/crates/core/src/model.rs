//! The full frontend: primary encoder, noise-context encoder,
//! cross-attention encoder and mask head, plus the context-signal handling
//! used in training (signal dropout and random context trimming).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ParameterStore, Tape, Var};
use crate::blocks::{
    BlockDims, ConformerBlock, CrossAttentionBlock, CrossAttentionVariant, FilmLayer, Init, Linear, PositionalEmbedding,
    PositionalMode,
};
use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::features::{stack_features, FeatureMap, MaskEstimate, DEFAULT_CHANNELS};
use crate::scalar::{sum, Scalar};
use crate::tensor::Matrix;

/// Speaker embedding width.
pub const SPEAKER_DIM: usize = 256;
/// Longest noise context, and the length of the zero-filled stand-in
/// (6 s at a 10 ms hop).
pub const CONTEXT_FRAMES: usize = 600;

/// Target-speaker embedding: unit L2 norm, or exactly zero when dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeakerEmbedding<T> {
    values: Vec<T>,
}

impl<T: Scalar> SpeakerEmbedding<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.len() != SPEAKER_DIM {
            return Err(Error::shape("SpeakerEmbedding", format!("{SPEAKER_DIM} values"), format!("{}", values.len())));
        }
        let norm = values.iter().map(|v| v.to_f64_lossy().powi(2)).sum::<f64>().sqrt();
        let zero = values.iter().all(|v| *v == T::zero());
        if !zero && (norm - 1.0).abs() > 1e-4 {
            return Err(Error::invalid("SpeakerEmbedding", format!("norm {norm} is neither 0 nor 1")));
        }
        Ok(Self { values })
    }

    /// Normalise `values` to unit length.
    pub fn from_unnormalized(values: Vec<T>) -> Result<Self> {
        let norm = sum(values.iter().map(|v| *v * *v)).sqrt();
        if norm == T::zero() || !norm.is_finite() {
            return Err(Error::invalid("SpeakerEmbedding", "cannot normalise a zero or non-finite vector"));
        }
        Self::new(values.into_iter().map(|v| v / norm).collect())
    }

    pub fn zeros() -> Self {
        Self {
            values: vec![T::zero(); SPEAKER_DIM],
        }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == T::zero())
    }

    pub fn cosine(&self, other: &Self) -> f64 {
        let dot: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.to_f64_lossy() * b.to_f64_lossy())
            .sum();
        let na: f64 = self.values.iter().map(|v| v.to_f64_lossy().powi(2)).sum::<f64>().sqrt();
        let nb: f64 = other.values.iter().map(|v| v.to_f64_lossy().powi(2)).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }

    pub fn as_row(&self) -> Matrix<T> {
        Matrix::row_vector(self.values.clone())
    }

    pub fn cast<U: Scalar>(&self) -> SpeakerEmbedding<U> {
        SpeakerEmbedding {
            values: self.values.iter().map(|v| U::of(v.to_f64_lossy())).collect(),
        }
    }
}

/// One of the three optional context signals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Signal {
    Playback,
    NoiseContext,
    Dvector,
}

impl Signal {
    pub const ALL: [Signal; 3] = [Signal::Playback, Signal::NoiseContext, Signal::Dvector];
}

/// Per-signal flags.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SignalSet {
    pub playback: bool,
    pub noise_context: bool,
    pub dvector: bool,
}

impl SignalSet {
    pub fn get(&self, s: Signal) -> bool {
        match s {
            Signal::Playback => self.playback,
            Signal::NoiseContext => self.noise_context,
            Signal::Dvector => self.dvector,
        }
    }

    pub fn set(&mut self, s: Signal, v: bool) {
        match s {
            Signal::Playback => self.playback = v,
            Signal::NoiseContext => self.noise_context = v,
            Signal::Dvector => self.dvector = v,
        }
    }
}

/// Optional context signals accompanying one utterance.
///
/// `None` means the signal is absent. After [`signal_dropout`] every signal
/// is present, and `zero_filled` records which ones are all-zero stand-ins.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextBundle<T> {
    pub playback_ref: Option<FeatureMap<T>>,
    pub noise_context: Option<FeatureMap<T>>,
    pub dvector: Option<SpeakerEmbedding<T>>,
    pub zero_filled: SignalSet,
}

impl<T: Scalar> Default for ContextBundle<T> {
    fn default() -> Self {
        Self::empty()
    }
}

impl<T: Scalar> ContextBundle<T> {
    /// Every signal absent.
    pub fn empty() -> Self {
        Self {
            playback_ref: None,
            noise_context: None,
            dvector: None,
            zero_filled: SignalSet::default(),
        }
    }

    pub fn is_present(&self, s: Signal) -> bool {
        match s {
            Signal::Playback => self.playback_ref.is_some(),
            Signal::NoiseContext => self.noise_context.is_some(),
            Signal::Dvector => self.dvector.is_some(),
        }
    }

    /// Replace one signal with its all-zero stand-in.
    pub fn zero_fill(&mut self, s: Signal, utterance_frames: usize, channels: usize) {
        match s {
            Signal::Playback => self.playback_ref = Some(FeatureMap::zeros(utterance_frames, channels)),
            Signal::NoiseContext => self.noise_context = Some(FeatureMap::zeros(CONTEXT_FRAMES, channels)),
            Signal::Dvector => self.dvector = Some(SpeakerEmbedding::zeros()),
        }
        self.zero_filled.set(s, true);
    }

    /// Zero-fill every absent signal; present ones are untouched.
    pub fn filled(&self, utterance_frames: usize, channels: usize) -> Self {
        let mut out = self.clone();
        for s in Signal::ALL {
            if !out.is_present(s) {
                out.zero_fill(s, utterance_frames, channels);
            }
        }
        out
    }

    pub fn cast<U: Scalar>(&self) -> ContextBundle<U> {
        ContextBundle {
            playback_ref: self.playback_ref.as_ref().map(FeatureMap::cast),
            noise_context: self.noise_context.as_ref().map(FeatureMap::cast),
            dvector: self.dvector.as_ref().map(SpeakerEmbedding::cast),
            zero_filled: self.zero_filled,
        }
    }
}

/// Per-signal drop probabilities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DropoutProbs {
    pub playback: f64,
    pub noise_context: f64,
    pub dvector: f64,
}

impl DropoutProbs {
    pub fn uniform(p: f64) -> Self {
        Self {
            playback: p,
            noise_context: p,
            dvector: p,
        }
    }

    pub fn get(&self, s: Signal) -> f64 {
        match s {
            Signal::Playback => self.playback,
            Signal::NoiseContext => self.noise_context,
            Signal::Dvector => self.dvector,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for s in Signal::ALL {
            let p = self.get(s);
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("drop probability {p} for {s:?} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Drop each signal independently with its probability, replacing dropped
/// or absent signals by all-zero stand-ins: a `utterance_frames x F`
/// playback map, a `600 x F` noise context and a zero speaker vector.
///
/// One uniform draw is consumed per signal, in the fixed order playback,
/// noise context, d-vector, whether or not the signal is present.
pub fn signal_dropout<T: Scalar, R: Rng + ?Sized>(
    bundle: &ContextBundle<T>,
    probs: &DropoutProbs,
    rng: &mut R,
    utterance_frames: usize,
    channels: usize,
) -> ContextBundle<T> {
    let mut out = bundle.clone();
    for s in Signal::ALL {
        let u: f64 = rng.random();
        if u < probs.get(s) || !out.is_present(s) {
            out.zero_fill(s, utterance_frames, channels);
        }
    }
    out
}

/// Keep the last `k` frames of the context with `k ~ Uniform{0..=T_N}`.
/// `k = 0` yields the `600 x F` zero stand-in. Contexts longer than 600
/// frames are first cut to their final 600 frames.
pub fn random_trim_noise_context<T: Scalar, R: Rng + ?Sized>(ctx: &FeatureMap<T>, rng: &mut R) -> FeatureMap<T> {
    let n = ctx.num_frames();
    let ctx = if n > CONTEXT_FRAMES { ctx.frames(n - CONTEXT_FRAMES, n) } else { ctx.clone() };
    let n = ctx.num_frames();
    let k = rng.random_range(0..=n);
    if k == 0 {
        FeatureMap::zeros(CONTEXT_FRAMES, ctx.num_channels())
    } else {
        ctx.frames(n - k, n)
    }
}

/// Architecture hyper-parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Blocks in the primary and in the noise-context encoder.
    pub n_encoder: usize,
    /// Cross-attention blocks.
    pub n_cross: usize,
    pub d_model: usize,
    pub heads: usize,
    pub conv_kernel: usize,
    pub attn_window: usize,
    pub feature_channels: usize,
    pub pe_mode: PositionalMode,
    pub ca_variant: CrossAttentionVariant,
    /// Add absolute positions to the primary (utterance) stream.
    pub primary_pe: bool,
    /// Training-time drop probability, applied to each context signal.
    pub dropout_prob: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_encoder: 2,
            n_cross: 2,
            d_model: 64,
            heads: 4,
            conv_kernel: 15,
            attn_window: 65,
            feature_channels: DEFAULT_CHANNELS,
            pe_mode: PositionalMode::None,
            ca_variant: CrossAttentionVariant::Proposed,
            primary_pe: false,
            dropout_prob: 0.0,
        }
    }
}

const MODEL_KEYS: &[&str] = &[
    "n_encoder",
    "n_cross",
    "d_model",
    "heads",
    "conv_kernel",
    "attn_window",
    "feature_channels",
    "pe_mode",
    "ca_variant",
    "primary_pe",
    "dropout_prob",
];

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_encoder == 0 || self.n_cross == 0 {
            return Err(Error::Config("n_encoder and n_cross must be at least 1".into()));
        }
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return Err(Error::Config(format!("d_model {} not divisible by {} heads", self.d_model, self.heads)));
        }
        if self.conv_kernel == 0 || self.attn_window == 0 || self.feature_channels == 0 {
            return Err(Error::Config("conv_kernel, attn_window and feature_channels must be positive".into()));
        }
        DropoutProbs::uniform(self.dropout_prob).validate()
    }

    pub fn block_dims(&self) -> BlockDims {
        BlockDims {
            d_model: self.d_model,
            heads: self.heads,
            conv_kernel: self.conv_kernel,
            attn_window: self.attn_window,
        }
    }

    /// Past frames that can influence one noise-encoder output frame.
    pub fn context_receptive_field(&self) -> usize {
        self.n_encoder * ((self.attn_window - 1) + (self.conv_kernel - 1))
    }

    /// Overlay any architecture keys present in `cfg` onto `self`.
    pub fn apply(&mut self, cfg: &KvConfig) -> Result<()> {
        self.n_encoder = cfg.get_or("n_encoder", self.n_encoder)?;
        self.n_cross = cfg.get_or("n_cross", self.n_cross)?;
        self.d_model = cfg.get_or("d_model", self.d_model)?;
        self.heads = cfg.get_or("heads", self.heads)?;
        self.conv_kernel = cfg.get_or("conv_kernel", self.conv_kernel)?;
        self.attn_window = cfg.get_or("attn_window", self.attn_window)?;
        self.feature_channels = cfg.get_or("feature_channels", self.feature_channels)?;
        self.pe_mode = cfg.get_or("pe_mode", self.pe_mode)?;
        self.ca_variant = cfg.get_or("ca_variant", self.ca_variant)?;
        self.primary_pe = cfg.get_or("primary_pe", self.primary_pe)?;
        self.dropout_prob = cfg.get_or("dropout_prob", self.dropout_prob)?;
        self.validate()
    }

    pub fn from_kv(cfg: &KvConfig) -> Result<Self> {
        let mut out = Self::default();
        out.apply(cfg)?;
        Ok(out)
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        kv.set("n_encoder", self.n_encoder);
        kv.set("n_cross", self.n_cross);
        kv.set("d_model", self.d_model);
        kv.set("heads", self.heads);
        kv.set("conv_kernel", self.conv_kernel);
        kv.set("attn_window", self.attn_window);
        kv.set("feature_channels", self.feature_channels);
        kv.set("pe_mode", self.pe_mode.as_str());
        kv.set("ca_variant", self.ca_variant.as_str());
        kv.set("primary_pe", self.primary_pe);
        kv.set("dropout_prob", self.dropout_prob);
        kv
    }

    pub fn keys() -> &'static [&'static str] {
        MODEL_KEYS
    }
}

/// One primary-encoder block: speaker FiLM then a standard conformer block.
#[derive(Clone, Debug)]
pub struct PrimaryBlock {
    pub film: FilmLayer,
    pub conformer: ConformerBlock,
}

/// The trainable frontend. Parameters live in [`FrontendModel::params`].
#[derive(Clone, Debug)]
pub struct FrontendModel<T> {
    config: ModelConfig,
    pub params: ParameterStore<T>,
    input_proj: Linear,
    context_proj: Linear,
    primary: Vec<PrimaryBlock>,
    noise: Vec<ConformerBlock>,
    cross: Vec<CrossAttentionBlock>,
    head: Linear,
    positions: PositionalEmbedding<T>,
}

impl<T: Scalar> FrontendModel<T> {
    /// Deterministic initialisation from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterStore::new();
        let dims = config.block_dims();
        let (f, d) = (config.feature_channels, config.d_model);
        let input_proj = Linear::new(&mut params, "input_proj", 2 * f, d, Init::Scaled(1.0), &mut rng)?;
        let context_proj = Linear::new(&mut params, "context_proj", f, d, Init::Scaled(1.0), &mut rng)?;
        let primary = (0..config.n_encoder)
            .map(|i| {
                Ok(PrimaryBlock {
                    film: FilmLayer::new(&mut params, &format!("primary.{i}.film"), SPEAKER_DIM, d, Init::Zero, &mut rng)?,
                    conformer: ConformerBlock::new(&mut params, &format!("primary.{i}.conformer"), dims, &mut rng)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let noise = (0..config.n_encoder)
            .map(|i| ConformerBlock::new(&mut params, &format!("noise.{i}"), dims, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let cross = (0..config.n_cross)
            .map(|i| CrossAttentionBlock::new(&mut params, &format!("cross.{i}"), dims, SPEAKER_DIM, config.ca_variant, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let head = Linear::new(&mut params, "mask_head", d, f, Init::Scaled(1.0), &mut rng)?;
        let positions = PositionalEmbedding::new(CONTEXT_FRAMES, d);
        Ok(Self {
            config,
            params,
            input_proj,
            context_proj,
            primary,
            noise,
            cross,
            head,
            positions,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    pub fn positions(&self) -> &PositionalEmbedding<T> {
        &self.positions
    }

    pub fn cross_blocks(&self) -> &[CrossAttentionBlock] {
        &self.cross
    }

    /// Same architecture and parameter values in another scalar type.
    pub fn cast<U: Scalar>(&self) -> FrontendModel<U> {
        FrontendModel {
            config: self.config.clone(),
            params: self.params.cast(),
            input_proj: self.input_proj.clone(),
            context_proj: self.context_proj.clone(),
            primary: self.primary.clone(),
            noise: self.noise.clone(),
            cross: self.cross.clone(),
            head: self.head.clone(),
            positions: PositionalEmbedding::new(CONTEXT_FRAMES, self.config.d_model),
        }
    }

    fn check_channels(&self, op: &'static str, fm: &FeatureMap<T>) -> Result<()> {
        if fm.num_channels() != self.config.feature_channels {
            return Err(Error::shape(
                op,
                format!("{} channels", self.config.feature_channels),
                format!("{}", fm.num_channels()),
            ));
        }
        Ok(())
    }

    /// Noise-context encoder on a tape: projection, positions, conformer stack.
    pub fn encode_noise_context_on(&self, tape: &mut Tape<T>, ctx: &FeatureMap<T>) -> Result<Var> {
        self.encode_noise_context_with(tape, &self.params, ctx)
    }

    fn encode_noise_context_with(&self, tape: &mut Tape<T>, params: &ParameterStore<T>, ctx: &FeatureMap<T>) -> Result<Var> {
        self.check_channels("encode_noise_context", ctx)?;
        if ctx.num_frames() == 0 {
            return Err(Error::EmptyContext);
        }
        let x = tape.input(ctx.data().clone());
        let mut h = self.context_proj.forward(tape, params, x)?;
        if self.config.pe_mode != PositionalMode::None {
            let pe = self.positions.embed(ctx.num_frames(), self.config.pe_mode)?;
            let pe = tape.input(pe);
            h = tape.add(h, pe)?;
        }
        for block in &self.noise {
            h = block.forward(tape, params, h)?;
        }
        Ok(h)
    }

    /// `S x d_model` encoding of a noise context.
    pub fn encode_noise_context(&self, ctx: &FeatureMap<T>) -> Result<Matrix<T>> {
        let mut tape = Tape::new();
        let h = self.encode_noise_context_on(&mut tape, ctx)?;
        Ok(tape.value(h).clone())
    }

    /// Full forward pass on a tape, returning the `T x F` mask node.
    /// Absent context signals are zero-filled first.
    pub fn forward_on(&self, tape: &mut Tape<T>, noisy: &FeatureMap<T>, bundle: &ContextBundle<T>) -> Result<Var> {
        self.forward_with(tape, &self.params, noisy, bundle)
    }

    /// [`FrontendModel::forward_on`] with parameter values taken from
    /// `params`, which must share this model's layout.
    pub fn forward_with(
        &self,
        tape: &mut Tape<T>,
        params: &ParameterStore<T>,
        noisy: &FeatureMap<T>,
        bundle: &ContextBundle<T>,
    ) -> Result<Var> {
        self.check_channels("enhance_forward", noisy)?;
        let frames = noisy.num_frames();
        if frames == 0 {
            return Err(Error::shape("enhance_forward", "at least one frame", "0"));
        }
        let bundle = bundle.filled(frames, self.config.feature_channels);
        let playback = bundle.playback_ref.as_ref().expect("filled");
        let context = bundle.noise_context.as_ref().expect("filled");
        let speaker = bundle.dvector.as_ref().expect("filled");
        self.check_channels("enhance_forward", playback)?;
        if playback.num_frames() != frames {
            return Err(Error::shape(
                "enhance_forward",
                format!("playback reference of {frames} frames"),
                format!("{}", playback.num_frames()),
            ));
        }

        let stacked = stack_features(noisy, playback)?;
        let x = tape.input(stacked.into_matrix());
        let m = tape.input(speaker.as_row());
        let mut h = self.input_proj.forward(tape, params, x)?;
        if self.config.primary_pe {
            let max = self.positions.max_len();
            let pe = Matrix::from_fn(frames, self.config.d_model, |r, c| self.positions.at((r + 1).min(max))[c]);
            let pe = tape.input(pe);
            h = tape.add(h, pe)?;
        }
        for block in &self.primary {
            h = block.film.forward(tape, params, h, m)?;
            h = block.conformer.forward(tape, params, h)?;
        }
        let mut n = self.encode_noise_context_with(tape, params, context)?;
        for block in &self.cross {
            (h, n) = block.forward(tape, params, h, n, m)?;
        }
        let logits = self.head.forward(tape, params, h)?;
        Ok(tape.sigmoid(logits))
    }

    /// Estimated ratio mask for `noisy` given the context signals.
    pub fn enhance_forward(&self, noisy: &FeatureMap<T>, bundle: &ContextBundle<T>) -> Result<MaskEstimate<T>> {
        let mut tape = Tape::new();
        let mask = self.forward_on(&mut tape, noisy, bundle)?;
        let out = tape.value(mask).clone();
        if !out.is_finite() {
            return Err(Error::NonFinite("mask estimate".into()));
        }
        MaskEstimate::new(out)
    }
}
