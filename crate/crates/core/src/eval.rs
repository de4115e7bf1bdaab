//! Evaluation harness: missing-signal conditions, surrogate metrics and the
//! three ablation tables.
//!
//! Word error rate is unavailable without a recogniser, so every table
//! reports mask MSE and the mean squared distance between masked noisy LFBE
//! and clean LFBE instead. Tables are written twice: a wide file with one
//! row per (variant, metric) and one column per condition, and a long file
//! with one full [`MetricRow`] per line.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::config::KvConfig;
use crate::datagen::{make_example, mix_seed, DataConfig, Interferer, SceneSampler, Task, TrainExample};
use crate::error::{Error, Result};
use crate::features::{apply_mask, FeatureConfig, FeatureExtractor, FeatureMap, MaskEstimate};
use crate::model::{FrontendModel, ModelConfig, Signal};
use crate::scalar::Scalar;
use crate::training::{load_checkpoint_for, save_checkpoint, append_log, TrainConfig, Trainer};

/// First speaker id of the held-out evaluation pool.
pub const EVAL_SPEAKER_BASE: u64 = 1_000_000;

/// Context signal withheld at evaluation time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Missing {
    None,
    Dvector,
    NoiseContext,
    Playback,
}

impl Missing {
    pub fn as_str(self) -> &'static str {
        match self {
            Missing::None => "none",
            Missing::Dvector => "dvector",
            Missing::NoiseContext => "noise_context",
            Missing::Playback => "playback",
        }
    }

    pub fn signal(self) -> Option<Signal> {
        match self {
            Missing::None => None,
            Missing::Dvector => Some(Signal::Dvector),
            Missing::NoiseContext => Some(Signal::NoiseContext),
            Missing::Playback => Some(Signal::Playback),
        }
    }
}

impl fmt::Display for Missing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Missing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Missing::None),
            "dvector" => Ok(Missing::Dvector),
            "noise_context" => Ok(Missing::NoiseContext),
            "playback" => Ok(Missing::Playback),
            other => Err(Error::Config(format!("unknown missing signal `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalCondition {
    pub task: Task,
    pub snr_db: f64,
    pub missing: Missing,
    pub context_seconds: f64,
}

impl EvalCondition {
    pub fn new(task: Task, snr_db: f64, missing: Missing) -> Self {
        Self {
            task,
            snr_db,
            missing,
            context_seconds: 6.0,
        }
    }

    /// Default SNR per task: -5 dB for speech and noise, -10 dB for echo.
    pub fn default_snr(task: Task) -> f64 {
        match task {
            Task::Noise | Task::Speech => -5.0,
            Task::Aec => -10.0,
        }
    }

    /// Short column name such as `speech@-5dB/no_dvector`.
    pub fn label(&self) -> String {
        let missing = match self.missing {
            Missing::None => "all".to_string(),
            m => format!("no_{m}"),
        };
        format!("{}@{}dB/{missing}", self.task, self.snr_db)
    }
}

/// Aggregated metrics for one condition.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub condition: EvalCondition,
    pub mask_mse: f64,
    pub mask_l1: f64,
    /// Mean squared error between masked noisy LFBE and clean LFBE.
    pub feature_distance: f64,
    pub count: usize,
}

impl MetricRow {
    pub const CSV_HEADER: &'static str = "task,snr_db,missing,context_seconds,mask_mse,mask_l1,feature_distance,count";

    pub fn to_csv(&self) -> String {
        let c = &self.condition;
        format!(
            "{},{:.6},{},{:.6},{:.6},{:.6},{:.6},{}",
            c.task, c.snr_db, c.missing, c.context_seconds, self.mask_mse, self.mask_l1, self.feature_distance, self.count
        )
    }
}

/// Where a mask comes from during evaluation.
#[derive(Clone, Copy, Debug)]
pub enum MaskSource<'a, T> {
    Model(&'a FrontendModel<T>),
    /// The ideal ratio mask of each scene.
    Oracle,
}

/// Scene generation for evaluation: held-out speakers and fixed framing.
#[derive(Clone)]
pub struct EvalSetup {
    pub sampler: SceneSampler,
    pub extractor: FeatureExtractor,
}

impl EvalSetup {
    /// Evaluation scenes follow `data` but draw speakers from the held-out pool.
    pub fn new(data: &DataConfig) -> Result<Self> {
        let data = DataConfig {
            first_speaker_id: EVAL_SPEAKER_BASE,
            speakers: data.speakers.clamp(2, 50),
            ..data.clone()
        };
        Ok(Self {
            sampler: SceneSampler::new(data)?,
            extractor: FeatureExtractor::new(FeatureConfig::default())?,
        })
    }

    /// The `index`-th scene for `cond`; independent of `cond.missing`.
    pub fn scene<T: Scalar>(&self, cond: &EvalCondition, seed: u64, index: usize) -> Result<TrainExample<T>> {
        let (mut spec, target, other) = self.sampler.scene(mix_seed(seed, index as u64), Some(cond.task), Some(cond.snr_db));
        spec.context_seconds = cond.context_seconds;
        let interferer = match cond.task {
            Task::Noise => Interferer::Noise,
            _ => Interferer::Speaker(other),
        };
        make_example(&spec, target, interferer, &self.extractor)
    }
}

/// Metrics of one mask estimate against its scene.
fn scene_errors<T: Scalar>(ex: &TrainExample<T>, est: &MaskEstimate<T>) -> Result<(f64, f64, f64)> {
    let (mut sq, mut abs) = (0.0, 0.0);
    for (&a, &b) in est.data().as_slice().iter().zip(ex.ideal_mask.data().as_slice()) {
        let e = a.to_f64_lossy() - b.to_f64_lossy();
        sq += e * e;
        abs += e.abs();
    }
    let n = est.data().len() as f64;
    let enhanced: FeatureMap<T> = apply_mask(&ex.noisy, est)?;
    let fd = enhanced
        .data()
        .as_slice()
        .iter()
        .zip(ex.clean.data().as_slice())
        .map(|(&a, &b)| (a.to_f64_lossy() - b.to_f64_lossy()).powi(2))
        .sum::<f64>()
        / n;
    Ok((sq / n, abs / n, fd))
}

/// Generate `n_examples` scenes for `cond`, withhold `cond.missing`, and
/// average the metrics of `source`'s masks.
pub fn evaluate_condition<T: Scalar>(
    source: MaskSource<'_, T>,
    setup: &EvalSetup,
    cond: &EvalCondition,
    n_examples: usize,
    seed: u64,
) -> Result<MetricRow> {
    if n_examples == 0 {
        return Err(Error::invalid("evaluate_condition", "n_examples must be at least 1"));
    }
    if let MaskSource::Model(m) = source {
        if m.config().feature_channels != setup.extractor.config().n_channels {
            return Err(Error::Config(format!(
                "model expects {} channels, features have {}",
                m.config().feature_channels,
                setup.extractor.config().n_channels
            )));
        }
    }
    let (mut mse, mut l1, mut fd) = (0.0, 0.0, 0.0);
    for i in 0..n_examples {
        let mut ex: TrainExample<T> = setup.scene(cond, seed, i)?;
        match cond.missing.signal() {
            Some(Signal::Playback) => ex.bundle.playback_ref = None,
            Some(Signal::NoiseContext) => ex.bundle.noise_context = None,
            Some(Signal::Dvector) => ex.bundle.dvector = None,
            None => {}
        }
        let est = match source {
            MaskSource::Model(m) => m.enhance_forward(&ex.noisy, &ex.bundle)?,
            MaskSource::Oracle => ex.ideal_mask.clone(),
        };
        let (a, b, c) = scene_errors(&ex, &est)?;
        mse += a;
        l1 += b;
        fd += c;
    }
    let n = n_examples as f64;
    Ok(MetricRow {
        condition: *cond,
        mask_mse: mse / n,
        mask_l1: l1 / n,
        feature_distance: fd / n,
        count: n_examples,
    })
}

/// Train a fresh `f32` model on scenes from `data`. Batch `b` of step `s`
/// uses scene seeds `mix_seed(seed, s * batch + b)`; the model is
/// initialised from `train.seed`.
pub fn train_model(model: &ModelConfig, train: &TrainConfig, data: &DataConfig) -> Result<Trainer<f32>> {
    let sampler = SceneSampler::new(data.clone())?;
    let extractor = FeatureExtractor::new(FeatureConfig {
        n_channels: model.feature_channels,
        ..FeatureConfig::default()
    })?;
    let mut trainer = Trainer::new(FrontendModel::new(model.clone(), train.seed)?, train.clone())?;
    let batch = train.batch_size;
    let data_seed = mix_seed(train.seed, 0xba7c);
    trainer.fit(train.steps, |step| {
        (0..batch)
            .map(|b| sampler.example(mix_seed(data_seed, (step * batch + b) as u64), None, None, &extractor))
            .collect()
    })?;
    Ok(trainer)
}

/// One model in an ablation table.
#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub name: String,
    pub model: ModelConfig,
    /// Restricts training scenes to one task (dedicated models).
    pub tasks: Option<Vec<Task>>,
}

/// Everything `run_ablation` reads from a grid file.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationGrid {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub eval_examples: usize,
    pub eval_seed: u64,
    pub variants: Vec<String>,
    pub pe_modes: Vec<String>,
    pub dropout_rates: Vec<f64>,
    pub dedicated: bool,
    pub table1_snrs: Vec<f64>,
    pub table2_snrs: Vec<f64>,
}

const GRID_KEYS: &[&str] = &[
    "eval_examples",
    "eval_seed",
    "table1_variants",
    "table1_snrs",
    "table2_pe_modes",
    "table2_snrs",
    "table3_dropout",
    "table3_dedicated",
    "tasks",
    "noise_snr",
    "speech_snr",
    "aec_snr",
    "context_seconds",
    "gap_seconds",
    "utterance_seconds",
    "speakers",
];

fn range_pair(cfg: &KvConfig, key: &str, default: (f64, f64)) -> Result<(f64, f64)> {
    match cfg.get_list::<f64>(key)? {
        None => Ok(default),
        Some(v) if v.len() == 2 => Ok((v[0], v[1])),
        Some(v) => Err(Error::Config(format!("key `{key}` needs two values, got {}", v.len()))),
    }
}

/// Scene distribution overrides shared by the CLI and grid files.
pub fn data_config_from_kv(cfg: &KvConfig) -> Result<DataConfig> {
    let d = DataConfig::default();
    let data = DataConfig {
        tasks: cfg.get_list("tasks")?.unwrap_or(d.tasks.clone()),
        noise_snr: range_pair(cfg, "noise_snr", d.noise_snr)?,
        speech_snr: range_pair(cfg, "speech_snr", d.speech_snr)?,
        aec_snr: range_pair(cfg, "aec_snr", d.aec_snr)?,
        context_seconds: cfg.get_or("context_seconds", d.context_seconds)?,
        gap_seconds: cfg.get_or("gap_seconds", d.gap_seconds)?,
        utterance_seconds: cfg.get_or("utterance_seconds", d.utterance_seconds)?,
        speakers: cfg.get_or("speakers", d.speakers)?,
        ..d
    };
    data.validate()?;
    Ok(data)
}

/// Keys accepted by [`data_config_from_kv`].
pub fn data_keys() -> &'static [&'static str] {
    &GRID_KEYS[8..]
}

impl AblationGrid {
    pub fn from_kv(cfg: &KvConfig) -> Result<Self> {
        let known: Vec<&str> = GRID_KEYS
            .iter()
            .chain(ModelConfig::keys())
            .chain(TrainConfig::keys())
            .copied()
            .collect();
        cfg.check_known(&known)?;
        let model = ModelConfig::from_kv(cfg)?;
        let mut train = TrainConfig::default();
        train.apply(cfg)?;
        Ok(Self {
            model,
            train,
            data: data_config_from_kv(cfg)?,
            eval_examples: cfg.get_or("eval_examples", 8)?,
            eval_seed: cfg.get_or("eval_seed", 7)?,
            variants: cfg.get_list("table1_variants")?.unwrap_or_default(),
            pe_modes: cfg.get_list("table2_pe_modes")?.unwrap_or_default(),
            dropout_rates: cfg.get_list("table3_dropout")?.unwrap_or_default(),
            dedicated: cfg.get_or("table3_dedicated", false)?,
            table1_snrs: cfg.get_list("table1_snrs")?.unwrap_or_else(|| vec![-5.0, 5.0, 15.0]),
            table2_snrs: cfg.get_list("table2_snrs")?.unwrap_or_else(|| vec![-5.0, 5.0]),
        })
    }

    pub fn table1(&self) -> Result<(Vec<Variant>, Vec<EvalCondition>)> {
        let variants = self
            .variants
            .iter()
            .map(|v| {
                Ok(Variant {
                    name: format!("ca_{v}"),
                    model: ModelConfig {
                        ca_variant: v.parse()?,
                        ..self.model.clone()
                    },
                    tasks: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let conds = Task::ALL
            .iter()
            .flat_map(|&t| self.table1_snrs.iter().map(move |&s| EvalCondition::new(t, s, Missing::None)))
            .collect();
        Ok((variants, self.with_context(conds)))
    }

    pub fn table2(&self) -> Result<(Vec<Variant>, Vec<EvalCondition>)> {
        let variants = self
            .pe_modes
            .iter()
            .map(|p| {
                Ok(Variant {
                    name: format!("pe_{p}"),
                    model: ModelConfig {
                        pe_mode: p.parse()?,
                        ..self.model.clone()
                    },
                    tasks: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let conds = [Task::Speech, Task::Noise]
            .iter()
            .flat_map(|&t| self.table2_snrs.iter().map(move |&s| EvalCondition::new(t, s, Missing::None)))
            .collect();
        Ok((variants, self.with_context(conds)))
    }

    /// Rows: one model per dropout rate, plus a dedicated single-task model
    /// per column task when enabled. Columns: all context for each task,
    /// then each task with its own context signal withheld.
    pub fn table3(&self) -> (Vec<Variant>, Vec<EvalCondition>) {
        let mut variants: Vec<Variant> = self
            .dropout_rates
            .iter()
            .map(|&p| Variant {
                name: format!("dropout_{:.0}pct", p * 100.0),
                model: ModelConfig {
                    dropout_prob: p,
                    ..self.model.clone()
                },
                tasks: None,
            })
            .collect();
        if self.dedicated {
            for t in Task::ALL {
                variants.push(Variant {
                    name: format!("dedicated_{t}"),
                    model: ModelConfig {
                        dropout_prob: 0.0,
                        ..self.model.clone()
                    },
                    tasks: Some(vec![t]),
                });
            }
        }
        (variants, self.with_context(table3_conditions()))
    }

    fn with_context(&self, conds: Vec<EvalCondition>) -> Vec<EvalCondition> {
        conds
            .into_iter()
            .map(|c| EvalCondition {
                context_seconds: self.data.context_seconds,
                ..c
            })
            .collect()
    }
}

/// Columns of `table3` (signal dropout) at the default SNRs.
pub fn table3_conditions() -> Vec<EvalCondition> {
    let c = |t, m| EvalCondition::new(t, EvalCondition::default_snr(t), m);
    vec![
        c(Task::Speech, Missing::None),
        c(Task::Noise, Missing::None),
        c(Task::Aec, Missing::None),
        c(Task::Speech, Missing::Dvector),
        c(Task::Noise, Missing::NoiseContext),
        c(Task::Aec, Missing::Playback),
    ]
}

/// Load `<dir>/<name>.ckpt` or, with a training budget, train and save it.
fn obtain_model(variant: &Variant, grid: &AblationGrid, dir: &Path) -> Result<FrontendModel<f32>> {
    let path = dir.join(format!("{}.ckpt", variant.name));
    if path.exists() {
        return load_checkpoint_for(&path, &variant.model);
    }
    if grid.train.steps == 0 {
        return Err(Error::Checkpoint(format!(
            "no checkpoint at {} and steps = 0 leaves no training budget",
            path.display()
        )));
    }
    let data = DataConfig {
        tasks: variant.tasks.clone().unwrap_or_else(|| grid.data.tasks.clone()),
        ..grid.data.clone()
    };
    let trainer = train_model(&variant.model, &grid.train, &data)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_checkpoint(&trainer.model, &path)?;
    append_log(dir.join(format!("{}.log.csv", variant.name)), trainer.history())?;
    Ok(trainer.model)
}

/// Result of one table: rows are variants, columns conditions.
#[derive(Clone, Debug, PartialEq)]
pub struct TableResult {
    pub name: String,
    pub conditions: Vec<EvalCondition>,
    pub rows: Vec<(String, Vec<MetricRow>)>,
}

impl TableResult {
    /// Wide layout: `variant,metric,<condition labels...>`.
    pub fn wide_csv(&self) -> String {
        let mut out = String::from("variant,metric");
        for c in &self.conditions {
            out.push(',');
            out.push_str(&c.label());
        }
        out.push('\n');
        for (name, metrics) in &self.rows {
            for (metric, get) in [
                ("mask_mse", (|m: &MetricRow| m.mask_mse) as fn(&MetricRow) -> f64),
                ("feature_distance", |m: &MetricRow| m.feature_distance),
            ] {
                out.push_str(&format!("{name},{metric}"));
                for m in metrics {
                    out.push_str(&format!(",{:.6}", get(m)));
                }
                out.push('\n');
            }
        }
        out
    }

    /// Long layout: one [`MetricRow`] per line, prefixed by the variant.
    pub fn long_csv(&self) -> String {
        let mut out = format!("variant,{}\n", MetricRow::CSV_HEADER);
        for (name, metrics) in &self.rows {
            for m in metrics {
                out.push_str(&format!("{name},{}\n", m.to_csv()));
            }
        }
        out
    }
}

fn run_table(
    name: &str,
    variants: &[Variant],
    conditions: Vec<EvalCondition>,
    grid: &AblationGrid,
    setup: &EvalSetup,
    out_dir: &Path,
) -> Result<TableResult> {
    let mut rows = Vec::new();
    for v in variants {
        let model = obtain_model(v, grid, &out_dir.join("checkpoints"))?;
        let metrics = conditions
            .iter()
            .map(|c| evaluate_condition(MaskSource::Model(&model), setup, c, grid.eval_examples, grid.eval_seed))
            .collect::<Result<Vec<_>>>()?;
        rows.push((v.name.clone(), metrics));
    }
    if !variants.is_empty() {
        let oracle = conditions
            .iter()
            .map(|c| evaluate_condition::<f32>(MaskSource::Oracle, setup, c, grid.eval_examples, grid.eval_seed))
            .collect::<Result<Vec<_>>>()?;
        rows.push(("ideal_mask_oracle".to_string(), oracle));
    }
    let table = TableResult {
        name: name.to_string(),
        conditions,
        rows,
    };
    for (suffix, text) in [("", table.wide_csv()), ("_metrics", table.long_csv())] {
        let path = out_dir.join(format!("{name}{suffix}.csv"));
        std::fs::write(&path, text).map_err(|e| Error::io(path, e))?;
    }
    Ok(table)
}

/// Train or load every variant of the grid, evaluate each table's
/// conditions and write `table{1,2,3}.csv` plus `table{1,2,3}_metrics.csv`
/// into `out_dir`. Checkpoints are cached under `out_dir/checkpoints`.
pub fn run_ablation(grid: &AblationGrid, out_dir: impl AsRef<Path>) -> Result<Vec<TableResult>> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let setup = EvalSetup::new(&grid.data)?;
    let (v1, c1) = grid.table1()?;
    let (v2, c2) = grid.table2()?;
    let (v3, c3) = grid.table3();
    Ok(vec![
        run_table("table1", &v1, c1, grid, &setup, out_dir)?,
        run_table("table2", &v2, c2, grid, &setup, out_dir)?,
        run_table("table3", &v3, c3, grid, &setup, out_dir)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> EvalSetup {
        EvalSetup::new(&DataConfig {
            speakers: 6,
            context_seconds: 0.5,
            utterance_seconds: 0.5,
            ..DataConfig::default()
        })
        .unwrap()
    }

    fn tiny_model() -> FrontendModel<f32> {
        FrontendModel::new(
            ModelConfig {
                n_encoder: 1,
                n_cross: 1,
                d_model: 8,
                heads: 2,
                conv_kernel: 3,
                attn_window: 8,
                ..ModelConfig::default()
            },
            0,
        )
        .unwrap()
    }

    #[test]
    fn missing_signal_leaves_scene_audio_unchanged() {
        let s = setup();
        let mut cond = EvalCondition::new(Task::Speech, -5.0, Missing::None);
        cond.context_seconds = 0.5;
        let a: TrainExample<f32> = s.scene(&cond, 3, 0).unwrap();
        cond.missing = Missing::Dvector;
        let b: TrainExample<f32> = s.scene(&cond, 3, 0).unwrap();
        assert_eq!(a.noisy_wav, b.noisy_wav);
        assert_eq!(a.bundle, b.bundle);
    }

    #[test]
    fn evaluation_is_repeatable_and_oracle_is_exact() {
        let s = setup();
        let m = tiny_model();
        let mut cond = EvalCondition::new(Task::Noise, -5.0, Missing::None);
        cond.context_seconds = 0.5;
        let a = evaluate_condition(MaskSource::Model(&m), &s, &cond, 1, 9).unwrap();
        let b = evaluate_condition(MaskSource::Model(&m), &s, &cond, 1, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.mask_mse > 0.0 && a.count == 1);
        let o = evaluate_condition::<f32>(MaskSource::Oracle, &s, &cond, 1, 9).unwrap();
        assert_eq!(o.mask_mse, 0.0);
        assert!(o.feature_distance < a.feature_distance);
        assert!(evaluate_condition(MaskSource::Model(&m), &s, &cond, 0, 9).is_err());
    }

    #[test]
    fn table3_layout() {
        let grid = AblationGrid::from_kv(&KvConfig::parse("table3_dropout = 0, 0.2, 0.5\ntable3_dedicated = true").unwrap()).unwrap();
        let (variants, conds) = grid.table3();
        let names: Vec<&str> = variants.iter().map(|v| v.name.as_str()).collect();
        assert_eq!(names[..3], ["dropout_0pct", "dropout_20pct", "dropout_50pct"]);
        assert_eq!(names.len(), 6);
        let labels: Vec<String> = conds.iter().map(|c| c.label()).collect();
        assert_eq!(
            labels,
            [
                "speech@-5dB/all",
                "noise@-5dB/all",
                "aec@-10dB/all",
                "speech@-5dB/no_dvector",
                "noise@-5dB/no_noise_context",
                "aec@-10dB/no_playback"
            ]
        );
        let (v2, c2) = grid.table2().unwrap();
        assert!(v2.is_empty());
        assert_eq!(c2.len(), 4);
    }

    #[test]
    fn empty_grid_writes_header_only_tables() {
        let dir = tempfile::tempdir().unwrap();
        let grid = AblationGrid::from_kv(&KvConfig::parse("steps = 0").unwrap()).unwrap();
        let tables = run_ablation(&grid, dir.path()).unwrap();
        assert!(tables.iter().all(|t| t.rows.is_empty()));
        let t3 = std::fs::read_to_string(dir.path().join("table3.csv")).unwrap();
        assert_eq!(t3.lines().count(), 1);
        assert!(t3.starts_with("variant,metric,speech@-5dB/all"));
        let long = std::fs::read_to_string(dir.path().join("table1_metrics.csv")).unwrap();
        assert_eq!(long, format!("variant,{}\n", MetricRow::CSV_HEADER));
    }

    #[test]
    fn missing_checkpoint_without_budget_fails() {
        let dir = tempfile::tempdir().unwrap();
        let grid = AblationGrid::from_kv(&KvConfig::parse("steps = 0\ntable1_variants = proposed").unwrap()).unwrap();
        assert!(matches!(run_ablation(&grid, dir.path()), Err(Error::Checkpoint(_))));
    }
}
