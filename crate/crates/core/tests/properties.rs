mod common;

use common::rng;
use ctxfront::blocks::{BlockDims, ConformerBlock};
use ctxfront::autodiff::{ParameterStore, Tape};
use ctxfront::config::KvConfig;
use ctxfront::datagen::{measured_snr_db, mix_at_snr, scale_to_snr};
use ctxfront::features::{apply_mask, ideal_ratio_mask, lfbe_extract, stack_features, FeatureMap, MaskEstimate, Waveform};
use ctxfront::model::{random_trim_noise_context, ContextBundle, FrontendModel, ModelConfig, SpeakerEmbedding, CONTEXT_FRAMES};
use ctxfront::tensor::Matrix;
use ctxfront::training::mask_loss;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = Matrix<f64>> {
    prop::collection::vec(lo..hi, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

fn sized_matrix(max_rows: usize, max_cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = Matrix<f64>> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(move |(r, c)| matrix(r, c, lo, hi))
}

fn tone(len: usize, seed: u64) -> Waveform {
    let w = 0.01 + (seed % 97) as f64 * 0.003;
    Waveform::new((0..len).map(|i| ((i as f64 * w).sin() * 0.3) as f32).collect(), 16_000).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unit_mask_is_identity(x in sized_matrix(12, 12, -12.0, 6.0)) {
        let fm = FeatureMap::new(x.clone()).unwrap();
        let (r, c) = x.shape();
        let out = apply_mask(&fm, &MaskEstimate::ones(r, c)).unwrap();
        prop_assert_eq!(out.data(), &x);
    }

    #[test]
    fn masking_is_monotone_per_bin(
        (x, a, b) in (1usize..10, 1usize..10).prop_flat_map(|(r, c)| (matrix(r, c, -12.0, 6.0), matrix(r, c, 0.0, 1.0), matrix(r, c, 0.0, 1.0)))
    ) {
        let fm = FeatureMap::new(x).unwrap();
        let lo = MaskEstimate::new(a.zip_map(&b, f64::min)).unwrap();
        let hi = MaskEstimate::new(a.zip_map(&b, f64::max)).unwrap();
        let (ylo, yhi) = (apply_mask(&fm, &lo).unwrap(), apply_mask(&fm, &hi).unwrap());
        for (l, h) in ylo.data().as_slice().iter().zip(yhi.data().as_slice()) {
            prop_assert!(l <= h);
        }
    }

    #[test]
    fn ratio_mask_is_bounded(
        (s, n) in (1usize..10, 1usize..10).prop_flat_map(|(r, c)| (matrix(r, c, 0.0, 1e3), matrix(r, c, 0.0, 1e3)))
    ) {
        let m = ideal_ratio_mask(&s, &n).unwrap();
        prop_assert_eq!(m.shape(), s.shape());
        prop_assert!(m.data().as_slice().iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn frame_count_matches_window_walk(len in 512usize..6000, hop_ms in prop::sample::select(vec![5.0, 10.0, 16.0])) {
        let fm = lfbe_extract::<f32>(&tone(len, len as u64), 32.0, hop_ms, 24).unwrap();
        let (win, hop) = (512, (hop_ms * 16.0) as usize);
        let expected = (0..).take_while(|t| t * hop + win <= len).count();
        prop_assert_eq!(fm.num_frames(), expected);
        prop_assert_eq!(fm.num_channels(), 24);
    }

    #[test]
    fn stack_then_slice_round_trips(
        (a, b) in (1usize..12, 1usize..10).prop_flat_map(|(r, c)| (matrix(r, c, -5.0, 5.0), matrix(r, c, -5.0, 5.0)))
    ) {
        let c = a.cols();
        let (fa, fb) = (FeatureMap::new(a).unwrap(), FeatureMap::new(b).unwrap());
        let s = stack_features(&fa, &fb).unwrap();
        prop_assert_eq!(s.channels(0, c), fa);
        prop_assert_eq!(s.channels(c, 2 * c), fb);
    }

    #[test]
    fn mask_loss_is_nonnegative_and_zero_on_match(
        (a, b) in (1usize..8, 1usize..8).prop_flat_map(|(r, c)| (matrix(r, c, 0.0, 1.0), matrix(r, c, 0.0, 1.0))),
        l1 in 0.0f64..2.0,
        l2 in 0.0f64..2.0,
    ) {
        let (ma, mb) = (MaskEstimate::new(a).unwrap(), MaskEstimate::new(b).unwrap());
        prop_assert!(mask_loss(&ma, &mb, l1, l2).unwrap() >= 0.0);
        prop_assert_eq!(mask_loss(&ma, &ma, l1, l2).unwrap(), 0.0);
    }

    #[test]
    fn mixing_hits_requested_snr(snr in -20.0f64..30.0, len in 200usize..4000, seed in 0u64..1000) {
        let target = tone(len, seed);
        let interferer = tone(len / 2 + 50, seed + 13);
        let scaled = scale_to_snr(&target, &interferer, snr).unwrap();
        prop_assert!((measured_snr_db(&target, &scaled) - snr).abs() < 0.01);
        let mix = mix_at_snr(&target, &interferer, snr).unwrap();
        let residual = Waveform::new(
            mix.samples().iter().zip(target.samples()).map(|(m, t)| m - t).collect(),
            16_000,
        ).unwrap();
        prop_assert!((measured_snr_db(&target, &residual) - snr).abs() < 0.01);
    }

    #[test]
    fn trimmed_context_is_a_suffix(len in 0usize..700, seed in any::<u64>()) {
        let ctx = FeatureMap::new(Matrix::from_fn(len, 3, |r, c| (r * 3 + c) as f32 + 1.0)).unwrap();
        let out = random_trim_noise_context(&ctx, &mut rng(seed));
        if out.is_all_zero() {
            prop_assert_eq!(out.num_frames(), CONTEXT_FRAMES);
        } else {
            let k = out.num_frames();
            prop_assert!(k >= 1 && k <= len.min(CONTEXT_FRAMES));
            prop_assert_eq!(out, ctx.frames(len - k, len));
        }
    }

    #[test]
    fn kv_config_round_trips(entries in prop::collection::btree_map("[a-z_][a-z0-9_.]{0,10}", "[A-Za-z0-9_.,:-]{0,12}", 0..12)) {
        let mut cfg = KvConfig::new();
        for (k, v) in &entries {
            cfg.set(k, v);
        }
        let parsed = KvConfig::parse(&cfg.to_text()).unwrap();
        prop_assert_eq!(&parsed, &cfg);
        for (k, v) in &entries {
            prop_assert_eq!(parsed.raw(k), Some(v.as_str()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conformer_preserves_shape(t in 1usize..50, seed in 0u64..100) {
        let dims = BlockDims { d_model: 8, heads: 2, conv_kernel: 5, attn_window: 7 };
        let mut st = ParameterStore::<f32>::new();
        let block = ConformerBlock::new(&mut st, "c", dims, &mut rng(seed)).unwrap();
        let mut tape = Tape::new();
        let x = tape.input(Matrix::randn(t, 8, 1.0, &mut rng(seed + 1)));
        let y = block.forward(&mut tape, &st, x).unwrap();
        prop_assert_eq!(tape.shape(y), (t, 8));
        prop_assert!(tape.value(y).as_slice().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn forward_mask_is_bounded_with_input_shape(
        t in 1usize..30,
        s in 0usize..40,
        present in prop::array::uniform3(any::<bool>()),
        scale in 0.1f64..20.0,
        seed in 0u64..50,
    ) {
        let cfg = ModelConfig { feature_channels: 12, ..common::tiny_model_config() };
        let f = cfg.feature_channels;
        let model = FrontendModel::<f32>::new(cfg, seed).unwrap();
        let fm = |frames, seed| FeatureMap::new(Matrix::randn(frames, f, scale, &mut rng(seed))).unwrap();
        let mut bundle = ContextBundle::empty();
        if present[0] {
            bundle.playback_ref = Some(fm(t, seed + 1));
        }
        if present[1] && s > 0 {
            bundle.noise_context = Some(fm(s, seed + 2));
        }
        if present[2] {
            let v = Matrix::<f32>::randn(1, 256, 1.0, &mut rng(seed + 3)).into_vec();
            bundle.dvector = Some(SpeakerEmbedding::from_unnormalized(v).unwrap());
        }
        let mask = model.enhance_forward(&fm(t, seed), &bundle).unwrap();
        prop_assert_eq!(mask.shape(), (t, f));
        prop_assert!(mask.data().as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn model_config_round_trips_through_kv() {
    let cfg = ModelConfig { d_model: 24, heads: 3, attn_window: 9, ..ModelConfig::default() };
    let text = cfg.to_kv().to_text();
    assert_eq!(ModelConfig::from_kv(&KvConfig::parse(&text).unwrap()).unwrap(), cfg);
}
