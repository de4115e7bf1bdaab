//! Probes shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use ctxfront::autodiff::{AttnMask, ParameterStore, Tape, Var};
use ctxfront::blocks::{
    AttentionLayer, BlockDims, ConformerBlock, ConvModule, CrossAttentionBlock, CrossAttentionVariant, FeedForward, FilmLayer, Init,
    LayerNorm, Linear, PositionalEmbedding, PositionalMode,
};
use ctxfront::features::FeatureMap;
use ctxfront::model::{signal_dropout, ContextBundle, DropoutProbs, FrontendModel, ModelConfig, Signal, SpeakerEmbedding};
use ctxfront::tensor::Matrix;
use ctxfront::training::{grad_check_refined, GradCheckReport, RefinePolicy};
use ctxfront::{Result, Scalar, DoubleDouble};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Element type of the finite-difference checks.
pub type G = DoubleDouble;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
    Matrix::randn(rows, cols, 1.0, &mut rng(seed))
}

pub fn features(frames: usize, channels: usize, seed: u64) -> FeatureMap<f64> {
    FeatureMap::new(randn(frames, channels, seed)).unwrap()
}

pub fn speaker(seed: u64) -> SpeakerEmbedding<f64> {
    SpeakerEmbedding::from_unnormalized(randn(1, 256, seed).into_vec()).unwrap()
}

/// Unit speaker vector with entries of magnitude in `[0.5, 1.5] / norm`;
/// a near-zero entry would make its FiLM weight gradients too small for a
/// relative finite-difference comparison.
pub fn speaker_bounded(seed: u64) -> SpeakerEmbedding<f64> {
    let u = randn(1, 256, seed);
    let signs = randn(1, 256, seed + 1);
    let values = u
        .as_slice()
        .iter()
        .zip(signs.as_slice())
        .map(|(a, s)| (1.0 + 0.5 * a.tanh()) * s.signum())
        .collect();
    SpeakerEmbedding::from_unnormalized(values).unwrap()
}

/// Add small noise to every parameter so zero-initialised paths are active.
pub fn jitter<T: Scalar>(store: &mut ParameterStore<T>, seed: u64) {
    let mut r = rng(seed);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let (rows, cols) = store.value(id).shape();
        let noise = Matrix::randn(rows, cols, 0.1, &mut r);
        store.value_mut(id).add_assign(&noise);
    }
}

pub fn tiny_model_config() -> ModelConfig {
    ModelConfig {
        n_encoder: 1,
        n_cross: 1,
        d_model: 8,
        heads: 2,
        conv_kernel: 3,
        attn_window: 4,
        feature_channels: 6,
        ..ModelConfig::default()
    }
}

pub fn tiny_dims() -> BlockDims {
    BlockDims {
        d_model: 8,
        heads: 2,
        conv_kernel: 3,
        attn_window: 3,
    }
}

/// `sum(y * R)` for a fixed random `R`: a random linear readout.
fn readout<T: Scalar>(tape: &mut Tape<T>, y: Var, seed: u64) -> Result<Var> {
    let (r, c) = tape.shape(y);
    let w = tape.input(randn(r, c, seed).cast());
    let p = tape.mul(y, w)?;
    Ok(tape.sum_all(p))
}

/// The same objective body as an `f64` closure and a [`G`] closure; inputs
/// inside the body are `f64` matrices cast at use.
macro_rules! objective {
    (|$tp:ident, $p:ident| $body:block) => {
        (
            |$tp: &mut Tape<f64>, $p: &ParameterStore<f64>| -> Result<Var> { $body },
            |$tp: &mut Tape<G>, $p: &ParameterStore<G>| -> Result<Var> { $body },
        )
    };
}

fn check<FL, FH>(store: &mut ParameterStore<G>, (fast, precise): (FL, FH)) -> GradCheckReport
where
    FL: Fn(&mut Tape<f64>, &ParameterStore<f64>) -> Result<Var>,
    FH: Fn(&mut Tape<G>, &ParameterStore<G>) -> Result<Var>,
{
    jitter(store, 99);
    grad_check_refined(fast, precise, store, 1e-5, RefinePolicy::default()).unwrap()
}

/// Central-difference checks of every block type and the full tiny model.
/// Analytic gradients are taken in double-double; every element is screened
/// in `f64` and re-differenced in double-double wherever `f64` rounding
/// could matter.
pub fn gradient_reports() -> Vec<(String, GradCheckReport)> {
    let (t, s, d) = (6, 5, 8);
    let dims = tiny_dims();
    let x = randn(t, d, 1);
    let n = randn(s, d, 2);
    let m = speaker_bounded(3).as_row();
    let mut out = Vec::new();

    let mut st = ParameterStore::new();
    let lin = Linear::new(&mut st, "lin", d, 5, Init::Scaled(1.0), &mut rng(10)).unwrap();
    out.push(("linear".into(), check(&mut st, objective!(|tp, p| {
        let xv = tp.input(x.cast());
        let y = lin.forward(tp, p, xv)?;
        readout(tp, y, 50)
    }))));

    let mut st = ParameterStore::new();
    let ln = LayerNorm::new(&mut st, "ln", d).unwrap();
    out.push(("layer_norm".into(), check(&mut st, objective!(|tp, p| {
        let xv = tp.input(x.cast());
        let y = ln.forward(tp, p, xv)?;
        readout(tp, y, 51)
    }))));

    let mut st = ParameterStore::new();
    let film = FilmLayer::new(&mut st, "film", 256, d, Init::Zero, &mut rng(11)).unwrap();
    out.push(("film_speaker".into(), check(&mut st, objective!(|tp, p| {
        let xv = tp.input(x.cast());
        let mv = tp.input(m.cast());
        let y = film.forward(tp, p, xv, mv)?;
        readout(tp, y, 52)
    }))));

    let mut st = ParameterStore::new();
    let film = FilmLayer::new(&mut st, "film", d, d, Init::Scaled(0.5), &mut rng(12)).unwrap();
    let cond = randn(t, d, 4);
    out.push(("film_framewise".into(), check(&mut st, objective!(|tp, p| {
        let xv = tp.input(x.cast());
        let cv = tp.input(cond.cast());
        let y = film.forward(tp, p, xv, cv)?;
        readout(tp, y, 53)
    }))));

    let mut st = ParameterStore::new();
    let att = AttentionLayer::new(&mut st, "att", d, dims.heads, dims.attn_window, &mut rng(13)).unwrap();
    out.push(("mhsa_causal".into(), check(&mut st, objective!(|tp, p| {
        let xv = tp.input(x.cast());
        let y = att.self_attend(tp, p, xv)?;
        readout(tp, y, 54)
    }))));
    out.push(("mhca".into(), check(&mut st, objective!(|tp, p| {
        let xv = tp.input(x.cast());
        let nv = tp.input(n.cast());
        let y = att.cross_attend(tp, p, xv, nv)?;
        readout(tp, y, 55)
    }))));

    let mut st = ParameterStore::new();
    let ff = FeedForward::new(&mut st, "ff", d, &mut rng(14)).unwrap();
    out.push(("feed_forward".into(), check(&mut st, objective!(|tp, p| {
        let xv = tp.input(x.cast());
        let y = ff.half_step(tp, p, xv)?;
        readout(tp, y, 56)
    }))));

    let mut st = ParameterStore::new();
    let conv = ConvModule::new(&mut st, "conv", d, dims.conv_kernel, &mut rng(15)).unwrap();
    out.push(("conv_module".into(), check(&mut st, objective!(|tp, p| {
        let xv = tp.input(x.cast());
        let y = conv.residual(tp, p, xv)?;
        readout(tp, y, 57)
    }))));

    let mut st = ParameterStore::new();
    let block = ConformerBlock::new(&mut st, "conformer", dims, &mut rng(16)).unwrap();
    out.push(("conformer_block".into(), check(&mut st, objective!(|tp, p| {
        let xv = tp.input(x.cast());
        let y = block.forward(tp, p, xv)?;
        readout(tp, y, 58)
    }))));

    for variant in [CrossAttentionVariant::Proposed, CrossAttentionVariant::ResidualKept, CrossAttentionVariant::Prior] {
        let mut st = ParameterStore::new();
        let block = CrossAttentionBlock::new(&mut st, "cross", dims, 256, variant, &mut rng(17)).unwrap();
        out.push((format!("cross_attention_block[{}]", variant.as_str()), check(&mut st, objective!(|tp, p| {
            let xv = tp.input(x.cast());
            let nv = tp.input(n.cast());
            let mv = tp.input(m.cast());
            let (y, _) = block.forward(tp, p, xv, nv, mv)?;
            readout(tp, y, 59)
        }))));
    }

    out.push(("full_model".into(), full_model_report()));
    out
}

/// Mask-loss gradient of the tiny model (N=M=1, d=8, T=6, S=5).
pub fn full_model_report() -> GradCheckReport {
    let cfg = tiny_model_config();
    let f = cfg.feature_channels;
    let model = FrontendModel::<f64>::new(cfg, 1).unwrap();
    let noisy = features(6, f, 20);
    let mut bundle = ContextBundle::empty();
    bundle.playback_ref = Some(features(6, f, 21));
    bundle.noise_context = Some(features(5, f, 22));
    bundle.dvector = Some(speaker_bounded(23));
    let target = Matrix::from_fn(6, f, |r, c| ((r * f + c) as f64 * 0.31).fract());

    let precise_model = model.cast::<G>();
    let (noisy_g, bundle_g, target_g) = (noisy.cast::<G>(), bundle.cast::<G>(), target.cast::<G>());
    let mut params = precise_model.params.clone();
    jitter(&mut params, 7);
    grad_check_refined(
        |tape, p| {
            let mask = model.forward_with(tape, p, &noisy, &bundle)?;
            tape.mask_loss(mask, &target, 1.0, 1.0)
        },
        |tape, p| {
            let mask = precise_model.forward_with(tape, p, &noisy_g, &bundle_g)?;
            tape.mask_loss(mask, &target_g, G::of(1.0), G::of(1.0))
        },
        &mut params,
        1e-5,
        RefinePolicy::default(),
    )
    .unwrap()
}

/// Largest change of model mask frames `0..=t` when noisy and playback
/// frames after `t` are perturbed.
pub fn model_causality_diff(t: usize) -> f64 {
    let cfg = tiny_model_config();
    let f = cfg.feature_channels;
    let mut model = FrontendModel::<f64>::new(cfg, 2).unwrap();
    jitter(&mut model.params, 8);
    let frames = 12;
    let noisy = features(frames, f, 30);
    let mut bundle = ContextBundle::empty();
    bundle.playback_ref = Some(features(frames, f, 31));
    bundle.noise_context = Some(features(7, f, 32));
    bundle.dvector = Some(speaker(33));
    let base = model.enhance_forward(&noisy, &bundle).unwrap();

    let bump = |fm: &FeatureMap<f64>, seed| {
        let noise = randn(fm.num_frames(), fm.num_channels(), seed);
        let m = Matrix::from_fn(fm.num_frames(), fm.num_channels(), |r, c| {
            fm.data().get(r, c) + if r > t { 3.0 * noise.get(r, c) } else { 0.0 }
        });
        FeatureMap::new(m).unwrap()
    };
    let mut b2 = bundle.clone();
    b2.playback_ref = Some(bump(bundle.playback_ref.as_ref().unwrap(), 35));
    let other = model.enhance_forward(&bump(&noisy, 34), &b2).unwrap();
    max_row_diff(base.data(), other.data(), 0, t + 1)
}

pub fn max_row_diff(a: &Matrix<f64>, b: &Matrix<f64>, start: usize, end: usize) -> f64 {
    (start..end)
        .flat_map(|r| a.row(r).iter().zip(b.row(r)).map(|(x, y)| (x - y).abs()).collect::<Vec<_>>())
        .fold(0.0, f64::max)
}

/// Conformer-block outputs at frames `<= t` after perturbing frames `> t`.
pub fn conformer_causality_diff(t: usize) -> f64 {
    let mut st = ParameterStore::new();
    let block = ConformerBlock::new(&mut st, "c", tiny_dims(), &mut rng(40)).unwrap();
    jitter(&mut st, 41);
    let x = randn(10, 8, 42);
    let mut x2 = x.clone();
    for r in t + 1..10 {
        for c in 0..8 {
            x2.set(r, c, x2.get(r, c) + 1.5);
        }
    }
    let run = |x: &Matrix<f64>| {
        let mut tape = Tape::new();
        let v = tape.input(x.clone());
        let y = block.forward(&mut tape, &st, v).unwrap();
        tape.value(y).clone()
    };
    max_row_diff(&run(&x), &run(&x2), 0, t + 1)
}

/// Self-attention output change at frame `t` when frame `j` is perturbed.
pub fn window_effect(window: usize, t: usize, j: usize) -> f64 {
    let mut st = ParameterStore::new();
    let att = AttentionLayer::new(&mut st, "a", 8, 2, window, &mut rng(50)).unwrap();
    jitter(&mut st, 51);
    let x = randn(t + 3, 8, 52);
    let mut x2 = x.clone();
    for c in 0..8 {
        x2.set(j, c, x2.get(j, c) + 1.0);
    }
    let run = |x: &Matrix<f64>| {
        let mut tape = Tape::new();
        let v = tape.input(x.clone());
        let y = att.self_attend(&mut tape, &st, v).unwrap();
        tape.value(y).clone()
    };
    max_row_diff(&run(&x), &run(&x2), t, t + 1)
}

/// Max deviation of MHCA over one key frame from that frame's projected value.
pub fn mhca_single_key_error() -> f64 {
    let mut st = ParameterStore::new();
    let att = AttentionLayer::new(&mut st, "a", 8, 2, 4, &mut rng(60)).unwrap();
    jitter(&mut st, 61);
    let mut tape = Tape::new();
    let q = tape.input(randn(7, 8, 62));
    let kv = tape.input(randn(1, 8, 63));
    let y = att.cross_attend(&mut tape, &st, q, kv).unwrap();
    let v = att.value.forward(&mut tape, &st, kv).unwrap();
    let expected = att.output.forward(&mut tape, &st, v).unwrap();
    let (y, e) = (tape.value(y), tape.value(expected));
    (0..y.rows())
        .flat_map(|r| (0..y.cols()).map(move |c| (r, c)))
        .map(|(r, c)| (y.get(r, c) - e.get(0, c)).abs())
        .fold(0.0, f64::max)
}

/// Max change of MHCA output when the key frames are permuted.
pub fn mhca_permutation_error() -> f64 {
    let mut st = ParameterStore::new();
    let att = AttentionLayer::new(&mut st, "a", 8, 2, 4, &mut rng(70)).unwrap();
    jitter(&mut st, 71);
    let q = randn(5, 8, 72);
    let kv = randn(9, 8, 73);
    let perm = [4, 0, 8, 2, 7, 1, 6, 3, 5];
    let permuted = Matrix::from_fn(9, 8, |r, c| kv.get(perm[r], c));
    let run = |kv: &Matrix<f64>| {
        let mut tape = Tape::new();
        let qv = tape.input(q.clone());
        let kvv = tape.input(kv.clone());
        let y = att.cross_attend(&mut tape, &st, qv, kvv).unwrap();
        tape.value(y).clone()
    };
    max_row_diff(&run(&kv), &run(&permuted), 0, 5)
}

/// Rows of attention weights must sum to one: attending over all-ones
/// values must return all ones.
pub fn softmax_row_sum_error(mask: AttnMask) -> f64 {
    let mut tape = Tape::<f64>::new();
    let q = tape.input(randn(6, 8, 80));
    let k = tape.input(randn(6, 8, 81));
    let v = tape.input(Matrix::filled(6, 8, 1.0));
    let y = tape.attention(q, k, v, 2, mask).unwrap();
    tape.value(y).as_slice().iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max)
}

/// Whether FiLM at zero initialisation returns `x` exactly for random `x`, `m`.
pub fn film_identity_exact() -> bool {
    let mut st = ParameterStore::new();
    let film = FilmLayer::new(&mut st, "f", 256, 8, Init::Zero, &mut rng(90)).unwrap();
    let x = randn(5, 8, 91);
    let mut tape = Tape::new();
    let xv = tape.input(x.clone());
    let mv = tape.input(speaker(92).as_row());
    let y = film.forward(&mut tape, &st, xv, mv).unwrap();
    tape.value(y) == &x
}

/// Cross-attention block facts: (returned context equals input bitwise,
/// x''' equals x' when MHCA output and summary FiLM are zeroed,
/// proposed and prior differ).
pub fn cross_block_facts() -> (bool, bool, f64) {
    let dims = tiny_dims();
    let x = randn(6, 8, 100);
    let n = randn(5, 8, 101);
    let m = speaker(102);

    let mut st = ParameterStore::new();
    let block = CrossAttentionBlock::new(&mut st, "b", dims, 256, CrossAttentionVariant::Proposed, &mut rng(103)).unwrap();
    jitter(&mut st, 104);
    let mut tape = Tape::new();
    let (xv, nv, mv) = (tape.input(x.clone()), tape.input(n.clone()), tape.input(m.as_row()));
    let trace = block.forward_traced(&mut tape, &st, xv, nv, mv).unwrap();
    let pass_through = tape.value(trace.context) == &n;

    // zero MHCA output projection and the summary FiLM
    let mut zeroed = st.clone();
    let film_ids = [
        block.cross_attn.output.weight,
        block.cross_attn.output.bias.unwrap(),
        block.summary_film.scale.weight,
        block.summary_film.scale.bias.unwrap(),
        block.summary_film.shift.weight,
        block.summary_film.shift.bias.unwrap(),
    ];
    for id in film_ids {
        zeroed.value_mut(id).fill(0.0);
    }
    let mut tape = Tape::new();
    let (xv, nv, mv) = (tape.input(x.clone()), tape.input(n.clone()), tape.input(m.as_row()));
    let trace = block.forward_traced(&mut tape, &zeroed, xv, nv, mv).unwrap();
    let merged_is_input = tape.value(trace.merged) == tape.value(trace.x_conv);

    let mut prior = block.clone();
    prior.variant = CrossAttentionVariant::Prior;
    let run = |b: &CrossAttentionBlock| {
        let mut tape = Tape::new();
        let (xv, nv, mv) = (tape.input(x.clone()), tape.input(n.clone()), tape.input(m.as_row()));
        let (y, _) = b.forward(&mut tape, &st, xv, nv, mv).unwrap();
        tape.value(y).clone()
    };
    let diff = max_row_diff(&run(&block), &run(&prior), 0, 6);
    (pass_through, merged_is_input, diff)
}

/// Noise-encoder shift probe: prepend `shift` random frames and compare
/// encodings of the original frames at positions at or beyond the
/// receptive field. Returns the max abs difference.
pub fn pe_shift_diff(mode: PositionalMode) -> f64 {
    let cfg = ModelConfig {
        n_encoder: 2,
        pe_mode: mode,
        ..tiny_model_config()
    };
    let rf = cfg.context_receptive_field();
    let model = FrontendModel::<f64>::new(cfg.clone(), 5).unwrap();
    let (len, shift) = (rf + 20, 30);
    let ctx = randn(len, cfg.feature_channels, 110);
    let prefix = randn(shift, cfg.feature_channels, 111);
    let shifted = Matrix::vcat(&prefix, &ctx).unwrap();
    let a = model.encode_noise_context(&FeatureMap::new(ctx).unwrap()).unwrap();
    let b = model.encode_noise_context(&FeatureMap::new(shifted).unwrap()).unwrap();
    (rf..len)
        .flat_map(|t| a.row(t).iter().zip(b.row(t + shift)).map(|(x, y)| (x - y).abs()).collect::<Vec<_>>())
        .fold(0.0, f64::max)
}

/// Zero-fill stand-ins when everything is dropped: shapes and all-zero.
pub fn zero_fill_contract(utterance_frames: usize) -> (bool, bool, bool) {
    let f = 128;
    let mut bundle = ContextBundle::<f32>::empty();
    bundle.playback_ref = Some(FeatureMap::new(Matrix::filled(utterance_frames, f, 1.0)).unwrap());
    bundle.noise_context = Some(FeatureMap::new(Matrix::filled(200, f, 1.0)).unwrap());
    bundle.dvector = Some(speaker(120).cast());
    let out = signal_dropout(&bundle, &DropoutProbs::uniform(1.0), &mut rng(121), utterance_frames, f);
    let pb = out.playback_ref.as_ref().unwrap();
    let nc = out.noise_context.as_ref().unwrap();
    let dv = out.dvector.as_ref().unwrap();
    (
        pb.num_frames() == utterance_frames && pb.num_channels() == f && pb.is_all_zero(),
        nc.num_frames() == 600 && nc.num_channels() == f && nc.is_all_zero(),
        dv.values().len() == 256 && dv.is_zero(),
    )
}

/// Empirical drop frequency per signal over `trials` draws at probability `p`.
pub fn drop_rates(p: f64, trials: usize) -> Vec<(Signal, f64)> {
    let mut bundle = ContextBundle::<f32>::empty();
    bundle.playback_ref = Some(FeatureMap::new(Matrix::filled(3, 4, 1.0)).unwrap());
    bundle.noise_context = Some(FeatureMap::new(Matrix::filled(5, 4, 1.0)).unwrap());
    bundle.dvector = Some(speaker(130).cast());
    let mut r = rng(131);
    let mut counts = [0usize; 3];
    for _ in 0..trials {
        let out = signal_dropout(&bundle, &DropoutProbs::uniform(p), &mut r, 3, 4);
        for (i, s) in Signal::ALL.into_iter().enumerate() {
            counts[i] += out.zero_filled.get(s) as usize;
        }
    }
    Signal::ALL
        .into_iter()
        .zip(counts)
        .map(|(s, c)| (s, c as f64 / trials as f64))
        .collect()
}

/// Block gradient checks at random small shapes (T, S <= 8, d <= 16).
pub fn shape_sweep_reports(cases: usize, seed: u64) -> Vec<(String, GradCheckReport)> {
    use rand::Rng;
    let mut r = rng(seed);
    let mut out = Vec::new();
    for case in 0..cases {
        let heads = [1, 2, 4][r.random_range(0..3)];
        let d = heads * r.random_range(1..=16 / heads);
        let (t, s) = (r.random_range(1..=8), r.random_range(1..=8));
        let dims = BlockDims {
            d_model: d,
            heads,
            conv_kernel: r.random_range(1..=4),
            attn_window: r.random_range(1..=t + 1),
        };
        let base = 1000 + 10 * case as u64;
        let x = randn(t, d, base);
        let n = randn(s, d, base + 1);
        let m = speaker_bounded(base + 2).as_row();
        let tag = format!("T={t} S={s} d={d} h={heads} k={} W={}", dims.conv_kernel, dims.attn_window);

        let mut st = ParameterStore::new();
        let block = ConformerBlock::new(&mut st, "conformer", dims, &mut rng(base + 3)).unwrap();
        out.push((format!("conformer_block {tag}"), check(&mut st, objective!(|tp, p| {
            let xv = tp.input(x.cast());
            let y = block.forward(tp, p, xv)?;
            readout(tp, y, base + 4)
        }))));

        let mut st = ParameterStore::new();
        let block = CrossAttentionBlock::new(&mut st, "cross", dims, 256, CrossAttentionVariant::Proposed, &mut rng(base + 5)).unwrap();
        out.push((format!("cross_attention_block {tag}"), check(&mut st, objective!(|tp, p| {
            let xv = tp.input(x.cast());
            let nv = tp.input(n.cast());
            let mv = tp.input(m.cast());
            let (y, _) = block.forward(tp, p, xv, nv, mv)?;
            readout(tp, y, base + 6)
        }))));
    }
    out
}

/// MHCA over `S` identical key frames against MHCA over one of them.
pub fn mhca_identical_keys_error(frames: usize) -> f64 {
    let mut st = ParameterStore::new();
    let att = AttentionLayer::new(&mut st, "a", 8, 2, 4, &mut rng(140)).unwrap();
    jitter(&mut st, 141);
    let q = randn(5, 8, 142);
    let key = randn(1, 8, 143);
    let repeated = Matrix::from_fn(frames, 8, |_, c| key.get(0, c));
    let run = |kv: &Matrix<f64>| {
        let mut tape = Tape::new();
        let qv = tape.input(q.clone());
        let kvv = tape.input(kv.clone());
        let y = att.cross_attend(&mut tape, &st, qv, kvv).unwrap();
        tape.value(y).clone()
    };
    max_row_diff(&run(&key), &run(&repeated), 0, 5)
}

/// Reversed embeddings of lengths `long` and `short` agree bitwise on the
/// shared suffix.
pub fn reversed_suffix_exact(long: usize, short: usize) -> bool {
    let pe = PositionalEmbedding::<f64>::new(600, 8);
    let a = pe.embed(long, PositionalMode::Reversed).unwrap();
    let b = pe.embed(short, PositionalMode::Reversed).unwrap();
    (0..short).all(|r| a.row(long - short + r) == b.row(r))
}

/// Number of seeds in `0..seeds` whose forward pass with every context
/// signal zero-filled yields a finite mask in `[0, 1]`.
pub fn zero_context_finite_count(seeds: u64) -> usize {
    let cfg = ModelConfig {
        d_model: 16,
        feature_channels: 16,
        ..tiny_model_config()
    };
    let frames = 20;
    let (f, bundle) = (cfg.feature_channels, ContextBundle::<f32>::empty().filled(frames, cfg.feature_channels));
    (0..seeds)
        .filter(|&seed| {
            let model = FrontendModel::<f32>::new(cfg.clone(), seed).unwrap();
            let noisy = FeatureMap::new(Matrix::randn(frames, f, 2.0, &mut rng(seed + 500))).unwrap();
            let mask = model.enhance_forward(&noisy, &bundle).unwrap();
            mask.data().as_slice().iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v))
        })
        .count()
}
