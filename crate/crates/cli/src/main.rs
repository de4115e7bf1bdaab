//! Command-line front end: train, evaluate, run the ablation tables, check
//! gradients and export synthetic scenes.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ctxfront::datagen::SceneSampler;
use ctxfront::eval::{
    data_config_from_kv, data_keys, evaluate_condition, run_ablation, table3_conditions, train_model, AblationGrid, EvalCondition,
    EvalSetup, MaskSource,
};
use ctxfront::features::{FeatureConfig, FeatureExtractor};
use ctxfront::training::{append_log, load_checkpoint, model_grad_check, save_checkpoint};
use ctxfront::{KvConfig, MetricRow, Model, ModelConfig, TrainConfig};

#[derive(Parser)]
#[command(name = "ctxfront", version, about = "Contextual speech-enhancement frontend")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and save `model.ckpt` plus `train_log.csv`.
    Train(Common),
    /// Evaluate `checkpoint` (and the ideal-mask oracle) on every
    /// missing-signal condition; writes `eval.csv`.
    Eval(Common),
    /// Train or load each ablation variant and write the three tables.
    Ablate(Common),
    /// Finite-difference check of the full model's mask-loss gradient.
    Gradcheck(Common),
    /// Export `count` synthetic scenes as WAV files with metadata.
    Gen(Common),
}

impl Common {
    fn load(&self, known: &[&str]) -> Result<KvConfig> {
        let mut cfg = match &self.config {
            Some(path) => KvConfig::load(path).with_context(|| format!("reading config {}", path.display()))?,
            None => KvConfig::new(),
        };
        cfg.check_known(known)?;
        if let Some(seed) = self.seed {
            cfg.set("seed", seed);
        }
        Ok(cfg)
    }

    fn out_dir(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }
}

fn keys(groups: &[&[&'static str]], extra: &[&'static str]) -> Vec<&'static str> {
    groups.iter().flat_map(|g| g.iter()).chain(extra).copied().collect()
}

fn train(args: &Common) -> Result<()> {
    let cfg = args.load(&keys(&[ModelConfig::keys(), TrainConfig::keys(), data_keys()], &[]))?;
    let model = ModelConfig::from_kv(&cfg)?;
    let mut train = TrainConfig::default();
    train.apply(&cfg)?;
    let data = data_config_from_kv(&cfg)?;
    let out = args.out_dir()?;
    eprintln!("training {} parameters for {} steps", ctxfront::Model::new(model.clone(), train.seed)?.num_parameters(), train.steps);
    let trainer = train_model(&model, &train, &data)?;
    save_checkpoint(&trainer.model, out.join("model.ckpt"))?;
    append_log(out.join("train_log.csv"), trainer.history())?;
    if let Some(last) = trainer.history().last() {
        println!("final loss {:.6} after {} steps", last.loss, trainer.step());
    }
    Ok(())
}

fn eval(args: &Common) -> Result<()> {
    let cfg = args.load(&keys(&[data_keys()], &["checkpoint", "eval_examples", "seed"]))?;
    let Some(path) = cfg.raw("checkpoint") else {
        bail!("eval needs `checkpoint = <path>` in the config");
    };
    let model: Model = load_checkpoint(path)?;
    let data = data_config_from_kv(&cfg)?;
    let setup = EvalSetup::new(&data)?;
    let n: usize = cfg.get_or("eval_examples", 16)?;
    let seed: u64 = cfg.get_or("seed", 7)?;
    let mut csv = format!("source,{}\n", MetricRow::CSV_HEADER);
    for cond in table3_conditions() {
        let cond = EvalCondition {
            context_seconds: data.context_seconds,
            ..cond
        };
        for (name, source) in [("model", MaskSource::Model(&model)), ("ideal_mask_oracle", MaskSource::Oracle)] {
            let row = evaluate_condition(source, &setup, &cond, n, seed)?;
            println!("{:<28} {:<18} mask_mse {:.6} feature_distance {:.6}", cond.label(), name, row.mask_mse, row.feature_distance);
            csv.push_str(&format!("{name},{}\n", row.to_csv()));
        }
    }
    let path = args.out_dir()?.join("eval.csv");
    std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn ablate(args: &Common) -> Result<()> {
    let cfg = args.load(&keys(&[ModelConfig::keys(), TrainConfig::keys(), data_keys()], &[
        "eval_examples",
        "eval_seed",
        "table1_variants",
        "table1_snrs",
        "table2_pe_modes",
        "table2_snrs",
        "table3_dropout",
        "table3_dedicated",
    ]))?;
    let grid = AblationGrid::from_kv(&cfg)?;
    for table in run_ablation(&grid, args.out_dir()?)? {
        println!("{}: {} variants x {} conditions", table.name, table.rows.len(), table.conditions.len());
    }
    Ok(())
}

fn gradcheck(args: &Common) -> Result<()> {
    let cfg = args.load(&keys(&[ModelConfig::keys()], &["seed", "frames", "context_frames", "eps", "tolerance"]))?;
    let mut tiny = KvConfig::parse(
        "n_encoder = 1\nn_cross = 1\nd_model = 8\nheads = 2\nconv_kernel = 3\nattn_window = 4\nfeature_channels = 6\n",
    )?;
    for key in cfg.keys() {
        if ModelConfig::keys().contains(&key) {
            tiny.set(key, cfg.raw(key).unwrap_or_default());
        }
    }
    let model = ModelConfig::from_kv(&tiny)?;
    let tolerance: f64 = cfg.get_or("tolerance", 1e-4)?;
    let report = model_grad_check(
        &model,
        cfg.get_or("seed", 0)?,
        cfg.get_or("frames", 6)?,
        cfg.get_or("context_frames", 5)?,
        cfg.get_or("eps", 1e-5)?,
    )?;
    let summary = format!(
        "checked {} elements ({} re-differenced in double-double), max relative error {:.3e} at {}[{}]\n",
        report.checked, report.refined, report.max_rel_error, report.worst_param, report.worst_index
    );
    print!("{summary}");
    let path = args.out_dir()?.join("gradcheck.txt");
    std::fs::write(&path, &summary).with_context(|| format!("writing {}", path.display()))?;
    if !(report.max_rel_error < tolerance) {
        bail!("max relative error {:.3e} exceeds tolerance {tolerance:.1e}", report.max_rel_error);
    }
    Ok(())
}

fn gen(args: &Common) -> Result<()> {
    let cfg = args.load(&keys(&[data_keys()], &["count", "seed"]))?;
    let sampler = SceneSampler::new(data_config_from_kv(&cfg)?)?;
    let extractor = FeatureExtractor::new(FeatureConfig::default())?;
    let count: usize = cfg.get_or("count", 4)?;
    let seed: u64 = cfg.get_or("seed", 0)?;
    let out = args.out_dir()?;
    for i in 0..count {
        let ex = sampler.example::<f32>(ctxfront::datagen::mix_seed(seed, i as u64), None, None, &extractor)?;
        let name = format!("scene{i:04}");
        ex.export(out, &name)?;
        println!("{name}: task {} snr {:.1} dB, {} frames", ex.spec.task, ex.spec.snr_db, ex.num_frames());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Gen(a) => gen(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
