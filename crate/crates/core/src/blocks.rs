//! Differentiable building blocks.
//!
//! Every block owns [`ParamId`]s into a shared [`ParameterStore`] and
//! evaluates on a [`Tape`], so the same code serves inference and training.
//! Sequences are `frames x channels` matrices.
//!
//! The modified cross-attention conformer block computes
//!
//! ```text
//! x^    = x + r(m) * x + h(m)                 speaker FiLM
//! x~    = x^ + FFN(x^) / 2,   n~ = n + FFN(n) / 2
//! x'    = x~ + Conv(x~),      n' = n~ + Conv(n~)
//! x''   = MHCA(x', n')                        no residual
//! x'''  = x' + x' * r(x'') + h(x'')           frame-wise FiLM
//! x'''' = x''' + MHSA(x''')
//! y     = LayerNorm(x'''' + FFN(x'''') / 2)
//! ```
//!
//! and hands `n` (not `n'`) on to the next block unchanged.

use rand::Rng;

use crate::autodiff::{AttnMask, ParamId, ParameterStore, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const FFN_EXPANSION: usize = 4;

/// Parameter initialisation scheme.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zero,
    /// Gaussian with std `gain / sqrt(fan_in)`.
    Scaled(f64),
}

fn init_matrix<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, init: Init, rng: &mut R) -> Matrix<T> {
    match init {
        Init::Zero => Matrix::zeros(rows, cols),
        Init::Scaled(gain) => Matrix::randn(rows, cols, gain / (fan_in.max(1) as f64).sqrt(), rng),
    }
}

/// Affine map `x W + b`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParameterStore<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        init: Init,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.add(format!("{name}.weight"), init_matrix(in_dim, out_dim, in_dim, init, rng))?;
        let bias = store.add(format!("{name}.bias"), Matrix::zeros(1, out_dim))?;
        Ok(Self {
            weight,
            bias: Some(bias),
            in_dim,
            out_dim,
        })
    }

    /// `x W` with no bias term.
    pub fn without_bias<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParameterStore<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        init: Init,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.add(format!("{name}.weight"), init_matrix(in_dim, out_dim, in_dim, init, rng))?;
        Ok(Self {
            weight,
            bias: None,
            in_dim,
            out_dim,
        })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParameterStore<T>, x: Var) -> Result<Var> {
        if tape.shape(x).1 != self.in_dim {
            return Err(Error::shape("Linear", format!("{} input channels", self.in_dim), format!("{}", tape.shape(x).1)));
        }
        let w = tape.param(store, self.weight);
        match self.bias {
            Some(b) => {
                let b = tape.param(store, b);
                tape.affine(x, w, b)
            }
            None => tape.matmul(x, w),
        }
    }
}

/// Per-frame layer normalisation with learned gain and bias.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new<T: Scalar>(store: &mut ParameterStore<T>, name: &str, dim: usize) -> Result<Self> {
        Ok(Self {
            gain: store.add(format!("{name}.gain"), Matrix::filled(1, dim, T::one()))?,
            bias: store.add(format!("{name}.bias"), Matrix::zeros(1, dim))?,
        })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParameterStore<T>, x: Var) -> Result<Var> {
        let n = tape.layer_norm(x, T::of(LAYER_NORM_EPS));
        let g = tape.param(store, self.gain);
        let b = tape.param(store, self.bias);
        let y = tape.mul_row(n, g)?;
        tape.add_row(y, b)
    }
}

/// Feature-wise linear modulation `x + r(c) * x + h(c)`.
///
/// The conditioner `c` is either a single row (broadcast over all frames,
/// as for the speaker embedding) or one row per frame.
#[derive(Clone, Debug)]
pub struct FilmLayer {
    pub scale: Linear,
    pub shift: Linear,
}

impl FilmLayer {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParameterStore<T>,
        name: &str,
        cond_dim: usize,
        dim: usize,
        init: Init,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            scale: Linear::new(store, &format!("{name}.scale"), cond_dim, dim, init, rng)?,
            shift: Linear::new(store, &format!("{name}.shift"), cond_dim, dim, init, rng)?,
        })
    }

    pub fn cond_dim(&self) -> usize {
        self.scale.in_dim
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParameterStore<T>, x: Var, cond: Var) -> Result<Var> {
        let (frames, dim) = tape.shape(x);
        let (cond_rows, cond_dim) = tape.shape(cond);
        if cond_dim != self.cond_dim() || dim != self.scale.out_dim || (cond_rows != 1 && cond_rows != frames) {
            return Err(Error::shape(
                "film",
                format!("x (T, {}), conditioner (1 or T, {})", self.scale.out_dim, self.cond_dim()),
                format!("x {:?}, conditioner {:?}", (frames, dim), (cond_rows, cond_dim)),
            ));
        }
        let r = self.scale.forward(tape, store, cond)?;
        let h = self.shift.forward(tape, store, cond)?;
        if cond_rows == 1 && frames != 1 {
            let xr = tape.mul_row(x, r)?;
            let y = tape.add(x, xr)?;
            tape.add_row(y, h)
        } else {
            let xr = tape.mul(x, r)?;
            let y = tape.add(x, xr)?;
            tape.add(y, h)
        }
    }
}

/// Multi-head attention with separate query/key/value/output projections.
#[derive(Clone, Debug)]
pub struct AttentionLayer {
    pub heads: usize,
    /// Frames visible to a self-attention query, counting the current one.
    pub window: usize,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
}

impl AttentionLayer {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParameterStore<T>,
        name: &str,
        dim: usize,
        heads: usize,
        window: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::Config(format!("d_model {dim} not divisible by {heads} heads")));
        }
        if window == 0 {
            return Err(Error::Config("attention window must be at least 1 frame".into()));
        }
        let init = Init::Scaled(1.0);
        Ok(Self {
            heads,
            window,
            query: Linear::new(store, &format!("{name}.query"), dim, dim, init, rng)?,
            // a key bias only shifts every score of a query equally
            key: Linear::without_bias(store, &format!("{name}.key"), dim, dim, init, rng)?,
            value: Linear::new(store, &format!("{name}.value"), dim, dim, init, rng)?,
            output: Linear::new(store, &format!("{name}.output"), dim, dim, init, rng)?,
        })
    }

    fn attend<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParameterStore<T>,
        queries: Var,
        kv: Var,
        mask: AttnMask,
    ) -> Result<Var> {
        if tape.shape(kv).0 == 0 {
            return Err(Error::EmptyContext);
        }
        let q = self.query.forward(tape, store, queries)?;
        let k = self.key.forward(tape, store, kv)?;
        let v = self.value.forward(tape, store, kv)?;
        let a = tape.attention(q, k, v, self.heads, mask)?;
        self.output.forward(tape, store, a)
    }

    /// Causal windowed self-attention: frame `t` attends to
    /// `[max(0, t - window + 1), t]`.
    pub fn self_attend<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParameterStore<T>, x: Var) -> Result<Var> {
        self.attend(tape, store, x, x, AttnMask::CausalWindow(self.window))
    }

    /// Unmasked cross-attention of `queries` over every frame of `kv`.
    pub fn cross_attend<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParameterStore<T>, queries: Var, kv: Var) -> Result<Var> {
        self.attend(tape, store, queries, kv, AttnMask::Full)
    }
}

/// `LayerNorm -> Linear(d, 4d) -> swish -> Linear(4d, d)`; no residual.
#[derive(Clone, Debug)]
pub struct FeedForward {
    pub norm: LayerNorm,
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new<T: Scalar, R: Rng + ?Sized>(store: &mut ParameterStore<T>, name: &str, dim: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            norm: LayerNorm::new(store, &format!("{name}.norm"), dim)?,
            up: Linear::new(store, &format!("{name}.up"), dim, FFN_EXPANSION * dim, Init::Scaled(1.0), rng)?,
            down: Linear::new(store, &format!("{name}.down"), FFN_EXPANSION * dim, dim, Init::Scaled(1.0), rng)?,
        })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParameterStore<T>, x: Var) -> Result<Var> {
        let h = self.norm.forward(tape, store, x)?;
        let h = self.up.forward(tape, store, h)?;
        let h = tape.swish(h);
        self.down.forward(tape, store, h)
    }

    /// `x + FFN(x) / 2`.
    pub fn half_step<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParameterStore<T>, x: Var) -> Result<Var> {
        let f = self.forward(tape, store, x)?;
        let f = tape.scale(f, T::of(0.5));
        tape.add(x, f)
    }
}

/// Conformer convolution module with a causal depthwise convolution:
/// `LayerNorm -> pointwise(d, 2d) -> GLU -> depthwise(K) -> LayerNorm -> swish -> pointwise(d, d)`.
/// No residual.
#[derive(Clone, Debug)]
pub struct ConvModule {
    pub norm: LayerNorm,
    pub pointwise_in: Linear,
    pub depthwise: ParamId,
    pub depthwise_bias: ParamId,
    pub mid_norm: LayerNorm,
    pub pointwise_out: Linear,
    pub kernel: usize,
    pub dim: usize,
}

impl ConvModule {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParameterStore<T>,
        name: &str,
        dim: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if kernel == 0 {
            return Err(Error::Config("convolution kernel must be at least 1".into()));
        }
        Ok(Self {
            norm: LayerNorm::new(store, &format!("{name}.norm"), dim)?,
            pointwise_in: Linear::new(store, &format!("{name}.pointwise_in"), dim, 2 * dim, Init::Scaled(1.0), rng)?,
            depthwise: store.add(
                format!("{name}.depthwise.weight"),
                init_matrix(kernel, dim, kernel, Init::Scaled(1.0), rng),
            )?,
            depthwise_bias: store.add(format!("{name}.depthwise.bias"), Matrix::zeros(1, dim))?,
            mid_norm: LayerNorm::new(store, &format!("{name}.mid_norm"), dim)?,
            pointwise_out: Linear::new(store, &format!("{name}.pointwise_out"), dim, dim, Init::Scaled(1.0), rng)?,
            kernel,
            dim,
        })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParameterStore<T>, x: Var) -> Result<Var> {
        let h = self.norm.forward(tape, store, x)?;
        let h = self.pointwise_in.forward(tape, store, h)?;
        let a = tape.slice_cols(h, 0, self.dim)?;
        let gate = tape.slice_cols(h, self.dim, 2 * self.dim)?;
        let gate = tape.sigmoid(gate);
        let h = tape.mul(a, gate)?;
        let k = tape.param(store, self.depthwise);
        let h = tape.causal_depthwise_conv(h, k)?;
        let b = tape.param(store, self.depthwise_bias);
        let h = tape.add_row(h, b)?;
        let h = self.mid_norm.forward(tape, store, h)?;
        let h = tape.swish(h);
        self.pointwise_out.forward(tape, store, h)
    }

    /// `x + Conv(x)`.
    pub fn residual<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParameterStore<T>, x: Var) -> Result<Var> {
        let c = self.forward(tape, store, x)?;
        tape.add(x, c)
    }
}

/// Shape hyper-parameters shared by every block of a model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockDims {
    pub d_model: usize,
    pub heads: usize,
    pub conv_kernel: usize,
    pub attn_window: usize,
}

/// Standard macaron conformer block: `FFN/2 -> MHSA -> Conv -> FFN/2 -> LayerNorm`,
/// each sublayer residual. Causal throughout.
#[derive(Clone, Debug)]
pub struct ConformerBlock {
    pub ff1: FeedForward,
    pub attn_norm: LayerNorm,
    pub attn: AttentionLayer,
    pub conv: ConvModule,
    pub ff2: FeedForward,
    pub final_norm: LayerNorm,
}

impl ConformerBlock {
    pub fn new<T: Scalar, R: Rng + ?Sized>(store: &mut ParameterStore<T>, name: &str, dims: BlockDims, rng: &mut R) -> Result<Self> {
        let d = dims.d_model;
        Ok(Self {
            ff1: FeedForward::new(store, &format!("{name}.ff1"), d, rng)?,
            attn_norm: LayerNorm::new(store, &format!("{name}.attn_norm"), d)?,
            attn: AttentionLayer::new(store, &format!("{name}.mhsa"), d, dims.heads, dims.attn_window, rng)?,
            conv: ConvModule::new(store, &format!("{name}.conv"), d, dims.conv_kernel, rng)?,
            ff2: FeedForward::new(store, &format!("{name}.ff2"), d, rng)?,
            final_norm: LayerNorm::new(store, &format!("{name}.final_norm"), d)?,
        })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParameterStore<T>, x: Var) -> Result<Var> {
        let x = self.ff1.half_step(tape, store, x)?;
        let h = self.attn_norm.forward(tape, store, x)?;
        let a = self.attn.self_attend(tape, store, h)?;
        let x = tape.add(x, a)?;
        let x = self.conv.residual(tape, store, x)?;
        let x = self.ff2.half_step(tape, store, x)?;
        self.final_norm.forward(tape, store, x)
    }

    /// Past frames that can influence an output frame.
    pub fn receptive_field(&self) -> usize {
        (self.attn.window - 1) + (self.conv.kernel - 1)
    }
}

/// Wiring of the cross-attention conformer block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CrossAttentionVariant {
    /// Cross-attention output used only as a FiLM conditioner, followed by
    /// causal self-attention.
    Proposed,
    /// Residual kept around the first cross-attention; self-attention still
    /// follows the FiLM merge.
    ResidualKept,
    /// Residual kept and a second cross-attention over the context in place of
    /// the self-attention.
    Prior,
}

impl CrossAttentionVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Proposed => "proposed",
            Self::ResidualKept => "residual",
            Self::Prior => "prior",
        }
    }

    fn keeps_residual(self) -> bool {
        !matches!(self, Self::Proposed)
    }
}

impl std::str::FromStr for CrossAttentionVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Self::Proposed),
            "residual" => Ok(Self::ResidualKept),
            "prior" => Ok(Self::Prior),
            other => Err(Error::Config(format!("unknown cross-attention variant `{other}`"))),
        }
    }
}

/// Cross-attention conformer block; see the module docs for the dataflow.
#[derive(Clone, Debug)]
pub struct CrossAttentionBlock {
    pub speaker_film: FilmLayer,
    pub ff_x: FeedForward,
    pub ff_n: FeedForward,
    pub conv_x: ConvModule,
    pub conv_n: ConvModule,
    pub cross_norm_q: LayerNorm,
    pub cross_norm_kv: LayerNorm,
    pub cross_attn: AttentionLayer,
    pub summary_film: FilmLayer,
    pub second_norm: LayerNorm,
    pub second_attn: AttentionLayer,
    pub ff_out: FeedForward,
    pub final_norm: LayerNorm,
    pub variant: CrossAttentionVariant,
}

/// Every intermediate of one [`CrossAttentionBlock`] evaluation.
#[derive(Clone, Copy, Debug)]
pub struct CrossAttentionTrace {
    pub modulated: Var,
    pub x_ffn: Var,
    pub n_ffn: Var,
    pub x_conv: Var,
    pub n_conv: Var,
    pub summary: Var,
    pub merged: Var,
    pub attended: Var,
    pub output: Var,
    /// The auxiliary stream handed to the next block: the block input `n`.
    pub context: Var,
}

impl CrossAttentionBlock {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParameterStore<T>,
        name: &str,
        dims: BlockDims,
        speaker_dim: usize,
        variant: CrossAttentionVariant,
        rng: &mut R,
    ) -> Result<Self> {
        let d = dims.d_model;
        Ok(Self {
            speaker_film: FilmLayer::new(store, &format!("{name}.speaker_film"), speaker_dim, d, Init::Zero, rng)?,
            ff_x: FeedForward::new(store, &format!("{name}.ff_x"), d, rng)?,
            ff_n: FeedForward::new(store, &format!("{name}.ff_n"), d, rng)?,
            conv_x: ConvModule::new(store, &format!("{name}.conv_x"), d, dims.conv_kernel, rng)?,
            conv_n: ConvModule::new(store, &format!("{name}.conv_n"), d, dims.conv_kernel, rng)?,
            cross_norm_q: LayerNorm::new(store, &format!("{name}.cross_norm_q"), d)?,
            cross_norm_kv: LayerNorm::new(store, &format!("{name}.cross_norm_kv"), d)?,
            cross_attn: AttentionLayer::new(store, &format!("{name}.mhca"), d, dims.heads, dims.attn_window, rng)?,
            summary_film: FilmLayer::new(store, &format!("{name}.summary_film"), d, d, Init::Scaled(0.5), rng)?,
            second_norm: LayerNorm::new(store, &format!("{name}.second_norm"), d)?,
            second_attn: AttentionLayer::new(store, &format!("{name}.second_attn"), d, dims.heads, dims.attn_window, rng)?,
            ff_out: FeedForward::new(store, &format!("{name}.ff_out"), d, rng)?,
            final_norm: LayerNorm::new(store, &format!("{name}.final_norm"), d)?,
            variant,
        })
    }

    /// Returns `(y, n)` with `n` the unmodified input context.
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParameterStore<T>,
        x: Var,
        n: Var,
        speaker: Var,
    ) -> Result<(Var, Var)> {
        let trace = self.forward_traced(tape, store, x, n, speaker)?;
        Ok((trace.output, trace.context))
    }

    pub fn forward_traced<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParameterStore<T>,
        x: Var,
        n: Var,
        speaker: Var,
    ) -> Result<CrossAttentionTrace> {
        if tape.shape(n).0 == 0 {
            return Err(Error::EmptyContext);
        }
        if tape.shape(n).1 != tape.shape(x).1 {
            return Err(Error::shape(
                "cross_attention_block",
                format!("context with {} channels", tape.shape(x).1),
                format!("{}", tape.shape(n).1),
            ));
        }
        let modulated = self.speaker_film.forward(tape, store, x, speaker)?;
        let x_ffn = self.ff_x.half_step(tape, store, modulated)?;
        let n_ffn = self.ff_n.half_step(tape, store, n)?;
        let x_conv = self.conv_x.residual(tape, store, x_ffn)?;
        let n_conv = self.conv_n.residual(tape, store, n_ffn)?;

        let q = self.cross_norm_q.forward(tape, store, x_conv)?;
        let kv = self.cross_norm_kv.forward(tape, store, n_conv)?;
        let cross = self.cross_attn.cross_attend(tape, store, q, kv)?;
        let summary = if self.variant.keeps_residual() {
            tape.add(x_conv, cross)?
        } else {
            cross
        };

        let merged = self.summary_film.forward(tape, store, x_conv, summary)?;

        let h = self.second_norm.forward(tape, store, merged)?;
        let second = match self.variant {
            CrossAttentionVariant::Prior => self.second_attn.cross_attend(tape, store, h, kv)?,
            _ => self.second_attn.self_attend(tape, store, h)?,
        };
        let attended = tape.add(merged, second)?;
        let out = self.ff_out.half_step(tape, store, attended)?;
        let output = self.final_norm.forward(tape, store, out)?;
        Ok(CrossAttentionTrace {
            modulated,
            x_ffn,
            n_ffn,
            x_conv,
            n_conv,
            summary,
            merged,
            attended,
            output,
            context: n,
        })
    }
}

/// How positions are encoded on a context sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PositionalMode {
    /// Frame `t` (1-based) receives `p(t)`.
    Absolute,
    /// Frame `t` of `T_N` receives `p(T_N - t)`: distance to the end of the
    /// context, so the final frame gets `p(0)`.
    Reversed,
    None,
}

impl PositionalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Absolute => "absolute",
            Self::Reversed => "reversed",
            Self::None => "none",
        }
    }
}

impl std::str::FromStr for PositionalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "absolute" => Ok(Self::Absolute),
            "reversed" => Ok(Self::Reversed),
            "none" => Ok(Self::None),
            other => Err(Error::Config(format!("unknown positional mode `{other}`"))),
        }
    }
}

/// Sinusoidal table with rows `p(0) ..= p(max_len)`.
#[derive(Clone, Debug)]
pub struct PositionalEmbedding<T> {
    table: Matrix<T>,
    max_len: usize,
}

impl<T: Scalar> PositionalEmbedding<T> {
    pub fn new(max_len: usize, dim: usize) -> Self {
        let table = Matrix::from_fn(max_len + 1, dim, |pos, c| {
            let pair = (c / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * pair / dim as f64);
            T::of(if c % 2 == 0 { angle.sin() } else { angle.cos() })
        });
        Self { table, max_len }
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    /// `p(pos)`.
    pub fn at(&self, pos: usize) -> &[T] {
        self.table.row(pos)
    }

    /// `len x d` embedding for a sequence of `len` frames.
    pub fn embed(&self, len: usize, mode: PositionalMode) -> Result<Matrix<T>> {
        if len > self.max_len {
            return Err(Error::shape(
                "positional_embedding",
                format!("at most {} frames", self.max_len),
                format!("{len}"),
            ));
        }
        let dim = self.dim();
        Ok(match mode {
            PositionalMode::None => Matrix::zeros(len, dim),
            PositionalMode::Absolute => Matrix::from_fn(len, dim, |r, c| self.table.get(r + 1, c)),
            PositionalMode::Reversed => Matrix::from_fn(len, dim, |r, c| self.table.get(len - (r + 1), c)),
        })
    }
}
