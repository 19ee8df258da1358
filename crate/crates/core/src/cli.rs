//! Command-line front door.
//!
//! Every subcommand resolves a [`RunConfig`] from defaults, an optional JSON
//! file and dotted overrides such as `--train.optimizer.lr 0.01`, and writes
//! the resolved values to `effective_config.json` next to its outputs.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analysis::{self, comb_emergence, comb_map, export_heatmap, export_kernels_csv, neuron_profiles, sort_neurons_by_peak};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::selftest;
use crate::synth::{gen_dataset, Dataset, DatasetConfig, Task};
use crate::tensor::Tensor;
use crate::train::{evaluate, train, TrainConfig, LOW_FREQ_SPLIT_HZ};

/// Size and seed of the validation split generated next to the training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValSplit {
    pub n_examples: usize,
    pub seed: u64,
}

impl Default for ValSplit {
    fn default() -> Self {
        Self {
            n_examples: 250,
            seed: 1_000_003,
        }
    }
}

/// Everything a run needs: the training data generator, the validation
/// split and the trainer.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DatasetConfig,
    pub val: ValSplit,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn val_config(&self) -> DatasetConfig {
        DatasetConfig {
            n_examples: self.val.n_examples,
            seed: self.val.seed,
            ..self.data.clone()
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "adaptft", version, about = "Learnable audio front-ends: data, training and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset file.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        task: Option<Task>,
        /// Number of examples.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model; writes checkpoint.adck and metrics.json.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset file.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export filter maps, comb maps, kernels and neuron profiles.
    Analyze {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Run configuration supplying the label grid and sample rate;
        /// defaults to effective_config.json beside the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Expert usage per domain and its mutual information.
    RouterStats {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the DFT, STFT and gradient oracle suites.
    Selftest,
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

/// Pulls `--a.b value` and `--a.b=value` pairs out of `argv`.
pub fn split_overrides(argv: &[String]) -> std::result::Result<(Vec<String>, Vec<(String, String)>), CliError> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut overrides = Vec::new();
    let mut i = 0;
    while i < argv.len() {
        let arg = &argv[i];
        let key = arg.strip_prefix("--").filter(|k| {
            let name = k.split('=').next().unwrap_or("");
            name.contains('.')
        });
        match key {
            Some(k) => {
                if let Some((name, value)) = k.split_once('=') {
                    overrides.push((name.to_string(), value.to_string()));
                } else {
                    let value = argv
                        .get(i + 1)
                        .ok_or_else(|| CliError::Usage(format!("override --{k} needs a value")))?;
                    overrides.push((k.to_string(), value.clone()));
                    i += 1;
                }
            }
            None => rest.push(arg.clone()),
        }
        i += 1;
    }
    Ok((rest, overrides))
}

/// Sets `root[path]` to `raw`, read as JSON when it parses and as a string
/// otherwise. The parent object must already exist.
pub fn apply_override(root: &mut Value, path: &str, raw: &str) -> std::result::Result<(), CliError> {
    let parts: Vec<&str> = path.split('.').collect();
    let (leaf, parents) = parts.split_last().expect("split yields at least one part");
    let mut node = root;
    for p in parents {
        node = node
            .get_mut(*p)
            .filter(|v| v.is_object())
            .ok_or_else(|| CliError::Usage(format!("unknown config key --{path}")))?;
    }
    let obj = node.as_object_mut().ok_or_else(|| CliError::Usage(format!("unknown config key --{path}")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    obj.insert(leaf.to_string(), value);
    Ok(())
}

/// Defaults, then the config file, then overrides.
pub fn resolve_config(file: Option<&Path>, overrides: &[(String, String)]) -> std::result::Result<RunConfig, CliError> {
    let base: RunConfig = match file {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(Error::from)?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    let mut value = serde_json::to_value(&base).map_err(Error::from)?;
    for (k, v) in overrides {
        apply_override(&mut value, k, v)?;
    }
    serde_json::from_value(value).map_err(|e| CliError::Usage(format!("invalid override: {e}")))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            write_json(value, path)
        }
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Runs the CLI on `argv` (including the program name) and returns the
/// process exit code.
pub fn run(argv: Vec<String>) -> i32 {
    match dispatch(argv) {
        Ok(()) => 0,
        Err(e) => {
            match &e {
                CliError::Usage(msg) if msg.is_empty() => {}
                CliError::Usage(msg) => eprintln!("error: {msg}"),
                CliError::Runtime(err) => eprintln!("error: {err}"),
            }
            e.exit_code()
        }
    }
}

fn dispatch(argv: Vec<String>) -> std::result::Result<(), CliError> {
    let (argv, overrides) = split_overrides(&argv)?;
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return if code == 0 { Ok(()) } else { Err(CliError::Usage(String::new())) };
        }
    };
    match cli.command {
        Command::GenData { config, task, n, seed, out } => {
            let mut ov = overrides;
            if let Some(t) = task {
                ov.insert(0, ("data.task".into(), serde_json::to_string(&t).map_err(Error::from)?));
            }
            if let Some(n) = n {
                ov.insert(0, ("data.n_examples".into(), n.to_string()));
            }
            if let Some(s) = seed {
                ov.insert(0, ("data.seed".into(), s.to_string()));
            }
            let cfg = resolve_config(config.as_deref(), &ov)?;
            let dir = parent_dir(&out);
            fs::create_dir_all(&dir).map_err(Error::from)?;
            write_json(&cfg, &dir.join("effective_config.json"))?;
            let ds = gen_dataset(&cfg.data)?;
            ds.save(&out)?;
            eprintln!("wrote {} examples ({} classes) to {}", ds.len(), ds.label_arity, out.display());
        }
        Command::Train { config, seed, out } => {
            let mut ov = overrides;
            if let Some(s) = seed {
                ov.insert(0, ("train.seed".into(), s.to_string()));
                ov.insert(0, ("train.model.seed".into(), s.to_string()));
            }
            let cfg = resolve_config(config.as_deref(), &ov)?;
            if cfg.train.task != cfg.data.task {
                return Err(Error::Config(format!(
                    "train.task {:?} differs from data.task {:?}",
                    cfg.train.task, cfg.data.task
                ))
                .into());
            }
            fs::create_dir_all(&out).map_err(Error::from)?;
            write_json(&cfg, &out.join("effective_config.json"))?;
            let train_set = gen_dataset(&cfg.data)?;
            let val_set = gen_dataset(&cfg.val_config())?;
            let (ckpt, metrics) = train(&cfg.train, &train_set, &val_set)?;
            ckpt.save(&out.join("checkpoint.adck"))?;
            write_json(&metrics, &out.join("metrics.json"))?;
            eprintln!(
                "best epoch {} val accuracy {:.4}; wrote {}",
                metrics.best_epoch,
                metrics.final_val_accuracy,
                out.display()
            );
        }
        Command::Eval { checkpoint, data, out } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let ds = Dataset::load(&data)?;
            emit_json(&evaluate(&ckpt, &ds)?, out.as_deref())?;
        }
        Command::Analyze { checkpoint, config, out } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let cfg_path = config.or_else(|| {
                let p = parent_dir(&checkpoint).join("effective_config.json");
                p.exists().then_some(p)
            });
            let run_cfg = resolve_config(cfg_path.as_deref(), &overrides)?;
            fs::create_dir_all(&out).map_err(Error::from)?;
            write_json(&run_cfg, &out.join("effective_config.json"))?;
            let summary = analyze(&ckpt, &run_cfg, &out)?;
            write_json(&summary, &out.join("summary.json"))?;
        }
        Command::RouterStats { checkpoint, data, out } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let ds = Dataset::load(&data)?;
            let usage = analysis::router_usage(&ckpt.model, &ds)?;
            let report = RouterReport {
                joint: usage.joint,
                expert_totals: usage.expert_totals,
                router_mi_bits: usage.mi_bits,
                one_hot_fraction: usage.one_hot_fraction,
            };
            emit_json(&report, out.as_deref())?;
        }
        Command::Selftest => {
            let results = selftest::run_all();
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            if results.iter().any(|r| !r.passed) {
                return Err(Error::Contract("selftest failed".into()).into());
            }
        }
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RouterReport {
    pub joint: Vec<Vec<usize>>,
    pub expert_totals: Vec<usize>,
    pub router_mi_bits: f64,
    pub one_hot_fraction: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BankSummary {
    pub name: String,
    pub fraction_below_1600_hz: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comb_observed_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comb_null_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comb_gap_standard_errors: Option<f64>,
}

/// Writes the analysis artifacts of every kernel bank under `out`.
pub fn analyze(ckpt: &Checkpoint, cfg: &RunConfig, out: &Path) -> Result<Vec<BankSummary>> {
    let sr = cfg.data.sample_rate;
    let banks = ckpt.model.kernel_banks();
    let single = banks.len() == 1;
    let mut summaries = Vec::new();
    for (i, bank) in banks.iter().enumerate() {
        let name = if single { "frontend".to_string() } else { format!("expert{i}") };
        let map = sort_neurons_by_peak(bank, sr)?;
        export_heatmap(&map.magnitudes, &out.join(format!("{name}_sorted_map.pgm")))?;
        let mut rows = String::from("row,neuron,peak_bin,peak_hz,bandwidth_bins\n");
        for (r, &neuron) in map.permutation.iter().enumerate() {
            let bw = map.bandwidths[r].map(|b| format!("{b:.4}")).unwrap_or_default();
            rows.push_str(&format!("{r},{neuron},{},{:.3},{bw}\n", map.peak_bins[r], map.peak_hz()[r]));
        }
        fs::write(out.join(format!("{name}_sorted_map.csv")), rows)?;
        export_kernels_csv(bank, sr, &out.join(format!("{name}_kernels.csv")))?;
        analysis::write_profiles_csv(&neuron_profiles(bank, sr)?, &out.join(format!("{name}_profiles.csv")))?;
        let mut summary = BankSummary {
            name: name.clone(),
            fraction_below_1600_hz: map.fraction_below(LOW_FREQ_SPLIT_HZ),
            comb_observed_mean: None,
            comb_null_mean: None,
            comb_gap_standard_errors: None,
        };
        if single {
            let labels = cfg.data.labels;
            let pitched = cfg.train.task != Task::Timbre && ckpt.model.config().classes == labels.total_classes();
            let head = ckpt.model.head_weights();
            // pitch rows only; the noise class has no comb
            let rows = if pitched { labels.n_pitch_classes } else { head.shape()[0] };
            let head = Tensor::new(vec![rows, head.shape()[1]], head.data()[..rows * head.shape()[1]].to_vec())?;
            let cm = comb_map(&head, &map.permutation)?;
            export_heatmap(&cm.matrix, &out.join("comb_map.pgm"))?;
            if pitched {
                let f0s = (0..labels.n_pitch_classes)
                    .map(|c| labels.class_to_f0(c))
                    .collect::<Result<Vec<_>>>()?;
                let ce = comb_emergence(&cm, &f0s, &map.peak_hz(), sr, 100, 0)?;
                summary.comb_observed_mean = Some(ce.observed_mean);
                summary.comb_null_mean = Some(ce.null_mean);
                summary.comb_gap_standard_errors = Some(ce.gap_in_standard_errors());
            }
        }
        summaries.push(summary);
    }
    Ok(summaries)
}
