//! Acceptance suite: one pass/fail line per criterion, nonzero exit on any
//! failure. Run with `cargo test --release --test acceptance`.

mod common;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use ctxfront::blocks::{CrossAttentionVariant, PositionalMode};
use ctxfront::datagen::{DataConfig, Task};
use ctxfront::eval::{evaluate_condition, table3_conditions, train_model, EvalCondition, EvalSetup, MaskSource, Missing, MetricRow, TableResult};
use ctxfront::model::{FrontendModel, ModelConfig};
use ctxfront::training::{load_checkpoint, mask_loss, save_checkpoint, TrainConfig};

const SEEDS: [u64; 3] = [11, 22, 33];
const EVAL_EXAMPLES: usize = 128;
const EVAL_SEED: u64 = 4242;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn small_model(dropout_prob: f64) -> ModelConfig {
    ModelConfig {
        n_encoder: 1,
        n_cross: 1,
        d_model: 32,
        heads: 4,
        dropout_prob,
        ..ModelConfig::default()
    }
}

fn data(task: Task) -> DataConfig {
    DataConfig {
        tasks: vec![task],
        context_seconds: 1.0,
        utterance_seconds: 0.5,
        speakers: 100,
        ..DataConfig::default()
    }
}

fn train_config(steps: usize, batch_size: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        steps,
        batch_size,
        seed,
        ..TrainConfig::default()
    }
}

fn condition(task: Task, missing: Missing) -> EvalCondition {
    EvalCondition {
        context_seconds: 1.0,
        ..EvalCondition::new(task, EvalCondition::default_snr(task), missing)
    }
}

fn eval(model: &FrontendModel<f32>, setup: &EvalSetup, cond: &EvalCondition) -> MetricRow {
    evaluate_condition(MaskSource::Model(model), setup, cond, EVAL_EXAMPLES, EVAL_SEED).unwrap()
}

fn out_dir() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Models trained by the directional criteria, kept for the oracle check.
#[derive(Default)]
struct Trained {
    models: Vec<(String, FrontendModel<f32>)>,
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let reports = gradient_reports();
    let elapsed = start.elapsed();
    let (worst_name, worst) = reports
        .iter()
        .map(|(n, r)| (n.clone(), r.max_rel_error))
        .fold((String::new(), 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let all = reports.iter().all(|(_, r)| r.max_rel_error < 1e-4 && r.checked > 0);
    outcome(
        all && elapsed < Duration::from_secs(60),
        format!("{} probes, worst {worst:.2e} ({worst_name}) < 1e-4, {:.1}s < 60s", reports.len(), elapsed.as_secs_f64()),
    )
}

fn exact_invariants() -> Outcome {
    let film = film_identity_exact();
    let causal = (0..9).all(|t| conformer_causality_diff(t) == 0.0) && [0, 5, 10].iter().all(|&t| model_causality_diff(t) == 0.0);
    let window = (1..=5).all(|w| window_effect(w, 7, 7 - w) == 0.0 && window_effect(w, 7, 8 - w) > 0.0);
    let single = mhca_single_key_error();
    let (pass_through, _, _) = cross_block_facts();
    outcome(
        film && causal && window && single < 1e-6 && pass_through,
        format!("film {film}, causal {causal}, window {window}, single-key {single:.1e}, pass-through {pass_through}"),
    )
}

fn positional_semantics() -> Outcome {
    let none = pe_shift_diff(PositionalMode::None);
    let absolute = pe_shift_diff(PositionalMode::Absolute);
    let suffix = reversed_suffix_exact(10, 6);
    outcome(
        none < 1e-5 && absolute > 1e-3 && suffix,
        format!("none shift {none:.1e} < 1e-5, absolute shift {absolute:.2e} > 1e-3, reversed suffix exact {suffix}"),
    )
}

fn zero_fill_contracts() -> Outcome {
    let shapes = zero_fill_contract(73) == (true, true, true);
    let mut worst = 0.0f64;
    for p in [0.2, 0.5] {
        for (_, rate) in drop_rates(p, 10_000) {
            worst = worst.max((rate - p).abs());
        }
    }
    outcome(shapes && worst <= 0.02, format!("zero-fill shapes {shapes}, worst drop-rate deviation {worst:.4} <= 0.02"))
}

fn context_utility(trained: &mut Trained) -> Outcome {
    let start = Instant::now();
    let setup = EvalSetup::new(&data(Task::Noise)).unwrap();
    let (with, without) = (condition(Task::Noise, Missing::None), condition(Task::Noise, Missing::NoiseContext));
    let (mut sum_with, mut sum_without) = (0.0, 0.0);
    let mut per_seed = Vec::new();
    for seed in SEEDS {
        let model = train_model(&small_model(0.2), &train_config(2000, 4, seed), &data(Task::Noise)).unwrap().model;
        let (a, b) = (eval(&model, &setup, &with).mask_mse, eval(&model, &setup, &without).mask_mse);
        sum_with += a;
        sum_without += b;
        per_seed.push(format!("{a:.4}/{b:.4}"));
        trained.models.push((format!("noise_seed{seed}"), model));
    }
    let gain = 1.0 - sum_with / sum_without;
    let elapsed = start.elapsed();
    outcome(
        gain >= 0.10 && elapsed < Duration::from_secs(900),
        format!(
            "mask MSE with/zero-filled context per seed [{}], reduction {:.1}% >= 10%, {:.0}s < 900s",
            per_seed.join(", "),
            100.0 * gain,
            elapsed.as_secs_f64()
        ),
    )
}

fn dropout_robustness(trained: &mut Trained) -> Outcome {
    let setup = EvalSetup::new(&data(Task::Aec)).unwrap();
    let (all, no_playback) = (condition(Task::Aec, Missing::None), condition(Task::Aec, Missing::Playback));
    let mut wins = 0;
    let mut close = true;
    let mut per_seed = Vec::new();
    for seed in SEEDS {
        let with_dropout = train_model(&small_model(0.2), &train_config(1500, 8, seed), &data(Task::Aec)).unwrap().model;
        let without = train_model(&small_model(0.0), &train_config(1500, 8, seed), &data(Task::Aec)).unwrap().model;
        let (d_missing, z_missing) = (eval(&with_dropout, &setup, &no_playback).mask_mse, eval(&without, &setup, &no_playback).mask_mse);
        let (d_all, z_all) = (eval(&with_dropout, &setup, &all).mask_mse, eval(&without, &setup, &all).mask_mse);
        wins += (d_missing < z_missing) as usize;
        let rel = (d_all - z_all).abs() / z_all;
        close &= rel <= 0.10;
        per_seed.push(format!("missing {d_missing:.4} vs {z_missing:.4}, all {d_all:.4} vs {z_all:.4} ({:.1}%)", 100.0 * rel));
        trained.models.push((format!("aec_dropout20_seed{seed}"), with_dropout));
        trained.models.push((format!("aec_dropout0_seed{seed}"), without));
    }
    outcome(
        wins >= 2 && close,
        format!("20% vs 0% dropout: wins {wins}/3 >= 2, all-present within 10%: {close}; [{}]", per_seed.join("; ")),
    )
}

fn held_out_loss(model: &FrontendModel<f32>, setup: &EvalSetup) -> f64 {
    let cond = condition(Task::Noise, Missing::None);
    (0..EVAL_EXAMPLES)
        .map(|i| {
            let ex = setup.scene::<f32>(&cond, EVAL_SEED, i).unwrap();
            let est = model.enhance_forward(&ex.noisy, &ex.bundle).unwrap();
            mask_loss(&est, &ex.ideal_mask, 1.0, 1.0).unwrap()
        })
        .sum::<f64>()
        / EVAL_EXAMPLES as f64
}

fn variant_stability(trained: &mut Trained) -> Outcome {
    let setup = EvalSetup::new(&data(Task::Noise)).unwrap();
    let mut pass = true;
    let mut details = Vec::new();
    let mut rows = Vec::new();
    let conditions = vec![condition(Task::Noise, Missing::None), condition(Task::Noise, Missing::NoiseContext)];
    for variant in [CrossAttentionVariant::Proposed, CrossAttentionVariant::Prior] {
        let cfg = ModelConfig { ca_variant: variant, ..small_model(0.2) };
        let train = train_config(1000, 4, SEEDS[0]);
        let initial = held_out_loss(&FrontendModel::new(cfg.clone(), train.seed).unwrap(), &setup);
        let model = train_model(&cfg, &train, &data(Task::Noise)).unwrap().model;
        let fin = held_out_loss(&model, &setup);
        let reduction = 1.0 - fin / initial;
        pass &= reduction >= 0.5;
        details.push(format!("{} {initial:.4} -> {fin:.4} ({:.1}%)", variant.as_str(), 100.0 * reduction));
        rows.push((format!("ca_{}", variant.as_str()), conditions.iter().map(|c| eval(&model, &setup, c)).collect()));
        trained.models.push((format!("ca_{}", variant.as_str()), model));
    }
    let table = TableResult { name: "table1".into(), conditions, rows };
    let path = out_dir().join("variant_ablation.csv");
    std::fs::write(&path, table.wide_csv()).unwrap();
    outcome(pass, format!("loss reduction >= 50%: {}; gap reported in {}", details.join(", "), path.display()))
}

/// Parameter tensors equal bit for bit, in registration order.
fn same_bits(a: &FrontendModel<f32>, b: &FrontendModel<f32>) -> bool {
    let bits = |m: &FrontendModel<f32>| -> Vec<(String, Vec<u32>)> {
        m.params
            .ids()
            .map(|id| (m.params.name(id).to_string(), m.params.value(id).as_slice().iter().map(|v| v.to_bits()).collect()))
            .collect()
    };
    bits(a) == bits(b)
}

fn determinism() -> Outcome {
    let cfg = small_model(0.2);
    let data = data(Task::Aec);
    let train = train_config(10, 4, 5);
    let run = || train_model(&cfg, &train, &data).unwrap();
    let (a, b) = (run(), run());
    let trained_equal = same_bits(&a.model, &b.model) && a.history() == b.history();

    let setup = EvalSetup::new(&data).unwrap();
    let cond = condition(Task::Aec, Missing::Playback);
    let eval_equal = eval(&a.model, &setup, &cond) == eval(&a.model, &setup, &cond);

    let path = out_dir().join("determinism.ckpt");
    save_checkpoint(&a.model, &path).unwrap();
    let loaded: FrontendModel<f32> = load_checkpoint(&path).unwrap();
    let ex = setup.scene::<f32>(&cond, 1, 0).unwrap();
    let checkpoint_equal = same_bits(&loaded, &a.model)
        && a.model.enhance_forward(&ex.noisy, &ex.bundle).unwrap() == loaded.enhance_forward(&ex.noisy, &ex.bundle).unwrap();
    outcome(
        trained_equal && eval_equal && checkpoint_equal,
        format!("10-step training {trained_equal}, evaluation {eval_equal}, checkpoint round trip {checkpoint_equal}"),
    )
}

fn oracle_dominance(trained: &Trained) -> Outcome {
    let setup = EvalSetup::new(&DataConfig { context_seconds: 1.0, utterance_seconds: 0.5, ..DataConfig::default() }).unwrap();
    let conditions: Vec<EvalCondition> = table3_conditions().into_iter().map(|c| EvalCondition { context_seconds: 1.0, ..c }).collect();
    let mut violations = Vec::new();
    let mut margin = f64::INFINITY;
    for cond in &conditions {
        let oracle = evaluate_condition::<f32>(MaskSource::Oracle, &setup, cond, EVAL_EXAMPLES, EVAL_SEED).unwrap().feature_distance;
        for (name, model) in &trained.models {
            let fd = eval(model, &setup, cond).feature_distance;
            margin = margin.min(fd - oracle);
            if !(oracle < fd) {
                violations.push(format!("{name} on {}", cond.label()));
            }
        }
    }
    outcome(
        violations.is_empty() && !trained.models.is_empty(),
        format!(
            "{} models x {} conditions, smallest model-minus-oracle feature distance {margin:.4}{}",
            trained.models.len(),
            conditions.len(),
            if violations.is_empty() { String::new() } else { format!("; violations: {}", violations.join(", ")) }
        ),
    )
}

fn main() -> ExitCode {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected = |n: usize| filter.is_empty() || filter.iter().any(|f| f == &n.to_string());
    let mut trained = Trained::default();
    let criteria: Vec<(usize, &str, Box<dyn FnOnce(&mut Trained) -> Outcome>)> = vec![
        (1, "gradient fidelity", Box::new(|_| gradient_fidelity())),
        (2, "exact invariants", Box::new(|_| exact_invariants())),
        (3, "positional-embedding semantics", Box::new(|_| positional_semantics())),
        (4, "zero-fill contracts", Box::new(|_| zero_fill_contracts())),
        (5, "context utility", Box::new(context_utility)),
        (6, "signal-dropout robustness", Box::new(dropout_robustness)),
        (7, "variant ablation stability", Box::new(variant_stability)),
        (8, "determinism", Box::new(|_| determinism())),
        (9, "oracle sanity", Box::new(|t| oracle_dominance(t))),
    ];
    let mut failed = 0;
    for (n, name, run) in criteria {
        if !selected(n) {
            continue;
        }
        let start = Instant::now();
        let o = run(&mut trained);
        failed += !o.pass as usize;
        println!(
            "{} criterion {n} ({name}): {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
