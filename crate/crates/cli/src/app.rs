//! Argument parsing and the subcommand drivers.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use ctvae::classify::{ForestConfig, MaxFeatures};
use ctvae::clustering::{relabel_majority, RelabelConfig};
use ctvae::data::{load_csv, BlobSpec, Dataset, LabelColumn};
use ctvae::metrics::{Averaging, EvalReport};
use ctvae::models::{load_model, save_model, ArchSpec, Betas, ModelKind, TrainConfig};
use ctvae::priors::{PriorVariant, DEFAULT_SCALE};
use crate::report::{table, write_json, write_reports};
use crate::{
    evaluate, extract_raw, fit_model, prepare, run_ablation, run_simulation, write_history, DataSource,
    ModelOptions, SimulationConfig, DESK_EPOCHS, DESK_HIDDEN, DESK_LR, DESK_SCALE,
};

#[derive(Parser)]
#[command(name = "ctvae", version, about = "Class-separating representation learning for intrusion-detection features")]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a CSV file or generated blobs.
    Train(TrainArgs),
    /// Write the learned representation of one or more CSV files.
    Extract(ExtractArgs),
    /// Fit a random forest on train rows and score test rows.
    Eval(EvalArgs),
    /// Split the majority class into pseudo-classes chosen by silhouette.
    Relabel(RelabelArgs),
    /// Blob simulation: train CTVAE with a 2-D latent space and dump scatter data.
    Simulate(SimulateArgs),
    /// CTVAE with dispersed priors versus constant priors on the same split.
    Ablate(AblateArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Clone)]
struct CsvArgs {
    /// Label column: header name or 0-based index.
    #[arg(long, default_value = "label")]
    label_col: String,
    /// The CSV files have no header row.
    #[arg(long)]
    no_header: bool,
}

impl CsvArgs {
    fn column(&self) -> LabelColumn {
        LabelColumn::from(self.label_col.as_str())
    }

    fn load(&self, path: &Path) -> Result<Dataset> {
        load_csv(path, &self.column(), !self.no_header).with_context(|| format!("reading {}", path.display()))
    }
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Labeled CSV; generated blobs are used when omitted.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    csv_args: CsvArgs,
    #[arg(long, default_value_t = 0.7)]
    train_frac: f64,
    /// Plain random split instead of per-class.
    #[arg(long)]
    no_stratify: bool,
    #[arg(long, default_value_t = 3)]
    blob_classes: usize,
    #[arg(long, default_value_t = 3500)]
    blob_train: usize,
    #[arg(long, default_value_t = 1500)]
    blob_test: usize,
    #[arg(long, default_value_t = 10)]
    blob_dim: usize,
    #[arg(long, default_value_t = 0.2)]
    blob_std: f64,
    #[arg(long, default_value_t = 0.0)]
    blob_box_min: f64,
    #[arg(long, default_value_t = 1.0)]
    blob_box_max: f64,
}

impl DataArgs {
    fn blobs(&self, seed: u64) -> BlobSpec {
        BlobSpec {
            n_classes: self.blob_classes,
            n_train: self.blob_train,
            n_test: self.blob_test,
            d: self.blob_dim,
            std: self.blob_std,
            center_box: (self.blob_box_min, self.blob_box_max),
            seed,
        }
    }

    fn source(&self, seed: u64) -> DataSource {
        match &self.csv {
            Some(path) => DataSource::Csv {
                path: path.clone(),
                label: self.csv_args.column(),
                has_header: !self.csv_args.no_header,
                train_fraction: self.train_frac,
                stratified: !self.no_stratify,
            },
            None => DataSource::Blobs(self.blobs(seed)),
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum KindArg {
    Ae,
    Vae,
    Tvae,
    Ctvae,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Ae => ModelKind::Ae,
            KindArg::Vae => ModelKind::Vae,
            KindArg::Tvae => ModelKind::Tvae,
            KindArg::Ctvae => ModelKind::Ctvae,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum PriorArg {
    Transform,
    Fix,
}

/// Unset fields fall back to the reference settings (train) or the desk
/// settings (simulate, ablate).
#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Noise draws per input.
    #[arg(long)]
    mc_samples: Option<usize>,
    /// Latent width; defaults to floor(sqrt(d)).
    #[arg(long)]
    d_z: Option<usize>,
    /// Sets h1, h2 and h3 at once.
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    h1: Option<usize>,
    #[arg(long)]
    h2: Option<usize>,
    #[arg(long)]
    h3: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    beta1: f64,
    #[arg(long, default_value_t = 1.0)]
    beta2: f64,
    #[arg(long, default_value_t = 1.0)]
    beta3: f64,
    #[arg(long, default_value_t = 1.0)]
    beta4: f64,
    /// Prior radius step S.
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long, value_enum, default_value = "transform")]
    prior: PriorArg,
}

impl ModelArgs {
    fn options(&self, kind: ModelKind, d_input: usize, seed: u64, desk: bool, d_z: Option<usize>) -> ModelOptions {
        let mut arch = ArchSpec::auto(d_input);
        if desk {
            arch.h1 = DESK_HIDDEN;
            arch.h2 = DESK_HIDDEN;
            arch.h3 = DESK_HIDDEN;
        }
        if let Some(z) = self.d_z.or(d_z) {
            arch.d_z = z;
        }
        if let Some(h) = self.hidden {
            arch.h1 = h;
            arch.h2 = h;
            arch.h3 = h;
        }
        arch.h1 = self.h1.unwrap_or(arch.h1);
        arch.h2 = self.h2.unwrap_or(arch.h2);
        arch.h3 = self.h3.unwrap_or(arch.h3);
        let base = TrainConfig::default();
        ModelOptions {
            kind,
            arch,
            betas: Betas::new(self.beta1, self.beta2, self.beta3, self.beta4),
            train: TrainConfig {
                epochs: self.epochs.unwrap_or(if desk { DESK_EPOCHS } else { base.epochs }),
                batch_size: self.batch_size.unwrap_or(base.batch_size),
                lr: self.lr.unwrap_or(if desk { DESK_LR } else { base.lr }),
                seed,
                mc_samples: self.mc_samples.unwrap_or(base.mc_samples),
            },
            scale: self.scale.unwrap_or(if desk { DESK_SCALE } else { DEFAULT_SCALE }),
            variant: match self.prior {
                PriorArg::Transform => PriorVariant::Transform,
                PriorArg::Fix => PriorVariant::Fixed,
            },
        }
    }
}

#[derive(Args, Clone)]
struct ForestArgs {
    #[arg(long, default_value_t = 100)]
    n_estimators: usize,
    #[arg(long)]
    max_depth: Option<usize>,
}

impl ForestArgs {
    fn config(&self, seed: u64) -> ForestConfig {
        ForestConfig {
            n_estimators: self.n_estimators,
            max_depth: self.max_depth,
            max_features: MaxFeatures::Sqrt,
            seed,
            ..ForestConfig::default()
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "ctvae")]
    model: KindArg,
    #[command(flatten)]
    model_args: ModelArgs,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    out: PathBuf,
    /// Model file written by `train`.
    #[arg(long)]
    model_file: PathBuf,
    /// Labeled CSV in the training feature layout; repeatable.
    #[arg(long, required = true)]
    input: Vec<PathBuf>,
    #[command(flatten)]
    csv_args: CsvArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Train CSV; repeat together with --test to compare representations.
    #[arg(long, required = true)]
    train: Vec<PathBuf>,
    #[arg(long, required = true)]
    test: Vec<PathBuf>,
    /// Column names for the report, one per --train.
    #[arg(long)]
    name: Vec<String>,
    #[command(flatten)]
    csv_args: CsvArgs,
    #[command(flatten)]
    forest: ForestArgs,
    /// Score the binary view of this label instead of the macro average.
    #[arg(long)]
    positive: Option<String>,
}

#[derive(Args)]
struct RelabelArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    csv: PathBuf,
    #[command(flatten)]
    csv_args: CsvArgs,
    /// Label text of the class to split; defaults to the most frequent one.
    #[arg(long)]
    majority: Option<String>,
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,5,6,7")]
    k_candidates: Vec<usize>,
    /// Largest point count scored by silhouette; 0 scores all.
    #[arg(long, default_value_t = ctvae::clustering::DEFAULT_SILHOUETTE_CAP)]
    silhouette_cap: usize,
    #[arg(long, default_value_t = ctvae::clustering::DEFAULT_MAX_ITERS)]
    max_iters: usize,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model_args: ModelArgs,
    #[command(flatten)]
    forest: ForestArgs,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model_args: ModelArgs,
    #[command(flatten)]
    forest: ForestArgs,
}

fn out_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let seed = a.common.seed;
    out_dir(&a.common.out)?;
    let data = prepare(&a.data.source(seed), seed).context("train: loading data")?;
    let kind = ModelKind::from(a.model);
    let opts = a.model_args.options(kind, data.train.dim(), seed, false, None);
    let outcome = fit_model(&opts, &data).with_context(|| format!("train: fitting {kind}"))?;
    let dir = &a.common.out;
    (|| -> ctvae::Result<()> {
        save_model(&outcome.model, dir.join("model.bin"))?;
        write_history(&dir.join("loss_history.csv"), &outcome.history)?;
        data.train_raw.write_csv(dir.join("train.csv"), "label")?;
        data.test_raw.write_csv(dir.join("test.csv"), "label")?;
        write_json(
            &dir.join("train_report.json"),
            &json!({
                "model": kind.name(),
                "arch": opts.arch,
                "betas": opts.betas,
                "train": opts.train,
                "scale": opts.scale,
                "prior": opts.variant,
                "n_train": data.train.len(),
                "n_test": data.test.len(),
                "classes": data.train.class_names,
                "parameters": outcome.model.param_count(),
                "first_loss": outcome.history.first(),
                "final_loss": outcome.history.last(),
            }),
        )
    })()
    .context("train: writing artifacts")?;
    println!(
        "{kind}: {} epochs, loss {:.6} -> {:.6}, {} parameters, artifacts in {}",
        outcome.history.len(),
        outcome.history[0],
        outcome.history[outcome.history.len() - 1],
        outcome.model.param_count(),
        dir.display()
    );
    Ok(())
}

fn cmd_extract(a: ExtractArgs) -> Result<()> {
    out_dir(&a.out)?;
    let model = load_model(&a.model_file).context("extract: loading model")?;
    let mut written = Vec::new();
    for input in &a.input {
        let data = a.csv_args.load(input).context("extract: loading data")?;
        let rep = extract_raw(&model, &data.features)
            .with_context(|| format!("extract: encoding {}", input.display()))?;
        let prefix = match model.kind {
            ModelKind::Tvae | ModelKind::Ctvae => "zhat",
            ModelKind::Vae => "mu",
            ModelKind::Ae => "z",
        };
        let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("input");
        let path = a.out.join(format!("{stem}_rep.csv"));
        data.with_features(rep, prefix)
            .and_then(|d| d.write_csv(&path, "label"))
            .context("extract: writing representation")?;
        println!("{} rows -> {}", data.len(), path.display());
        written.push(json!({"input": input, "output": path, "rows": data.len()}));
    }
    write_json(
        &a.out.join("extract.json"),
        &json!({"model": model.kind.name(), "d_z": model.arch.d_z, "files": written}),
    )
    .context("extract: writing manifest")?;
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    if a.train.len() != a.test.len() {
        bail!("eval: {} --train files but {} --test files", a.train.len(), a.test.len());
    }
    if !a.name.is_empty() && a.name.len() != a.train.len() {
        bail!("eval: {} --name values for {} representations", a.name.len(), a.train.len());
    }
    out_dir(&a.common.out)?;
    let mut reports: Vec<EvalReport> = Vec::new();
    for (i, (tr_path, te_path)) in a.train.iter().zip(&a.test).enumerate() {
        let train = a.csv_args.load(tr_path).context("eval: loading train")?;
        let test = a
            .csv_args
            .load(te_path)
            .and_then(|t| Ok(t.align_classes(&train.class_names)?))
            .context("eval: loading test")?;
        let name = a.name.get(i).cloned().unwrap_or_else(|| {
            tr_path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("rep")
                .to_string()
        });
        let averaging = match &a.positive {
            None => Averaging::Macro,
            Some(label) => match train.class_names.iter().position(|c| c == label) {
                Some(positive) => Averaging::Binary { positive },
                None => bail!("eval: positive label {label:?} not among {:?}", train.class_names),
            },
        };
        let (report, forest) = evaluate(&name, &train, &test, a.forest.config(a.common.seed), averaging)
            .with_context(|| format!("eval: scoring {name}"))?;
        write_json(&a.common.out.join(format!("forest_{name}.json")), &forest).context("eval: writing forest")?;
        reports.push(report);
    }
    write_reports(&a.common.out, &reports).context("eval: writing report")?;
    print!("{}", table(&reports));
    Ok(())
}

fn cmd_relabel(a: RelabelArgs) -> Result<()> {
    out_dir(&a.common.out)?;
    let data = a.csv_args.load(&a.csv).context("relabel: loading data")?;
    let majority = match &a.majority {
        Some(name) => match data.class_names.iter().position(|c| c == name) {
            Some(c) => c,
            None => bail!("relabel: class {name:?} not among {:?}", data.class_names),
        },
        None => {
            let counts = data.class_counts();
            (0..counts.len()).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).unwrap_or(0)
        }
    };
    let scaled = ctvae::data::fit_normalizer(&data)
        .and_then(|n| ctvae::data::apply_normalizer(&n, &data))
        .context("relabel: scaling")?;
    let cfg = RelabelConfig {
        k_candidates: a.k_candidates.clone(),
        seed: a.common.seed,
        max_iters: a.max_iters,
        silhouette_cap: a.silhouette_cap,
    };
    let out = relabel_majority(&scaled, majority, &cfg).context("relabel: clustering")?;
    let dir = &a.common.out;
    (|| -> ctvae::Result<()> {
        let relabeled = Dataset::with_feature_names(
            data.features.clone(),
            out.data.labels.clone(),
            out.data.class_names.clone(),
            data.feature_names.clone(),
        )?;
        relabeled.write_csv(dir.join("relabeled.csv"), "label")?;
        let mut s = String::from("original_label,new_label_range\n");
        for m in &out.mapping {
            s.push_str(&format!("{},{}\n", m.original, m.range()));
        }
        let path = dir.join("mapping.csv");
        std::fs::write(&path, s).map_err(|e| ctvae::Error::io(path, e))?;
        write_json(
            &dir.join("relabel_report.json"),
            &json!({
                "majority": data.class_names[majority],
                "k_star": out.k_star,
                "scores": out.scores,
                "mapping": out.mapping,
                "silhouette_cap": out.silhouette_cap,
                "degenerate": out.degenerate,
                "n_classes": out.data.n_classes(),
            }),
        )
    })()
    .context("relabel: writing artifacts")?;
    println!("{:>4}  silhouette", "k");
    for s in &out.scores {
        match s.silhouette {
            Some(v) => println!("{:>4}  {v:.4}", s.k),
            None => println!("{:>4}  -", s.k),
        }
    }
    println!(
        "class {:?} split into {} pseudo-classes; {} classes total",
        data.class_names[majority],
        out.k_star,
        out.data.n_classes()
    );
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let seed = a.common.seed;
    if a.data.csv.is_some() {
        bail!("simulate: runs on generated blobs only; use train/extract/eval for CSV data");
    }
    out_dir(&a.common.out)?;
    let blobs = a.data.blobs(seed);
    let cfg = SimulationConfig {
        model: a.model_args.options(ModelKind::Ctvae, blobs.d, seed, true, Some(2)),
        blobs,
        forest: a.forest.config(seed),
    };
    let sim = run_simulation(&cfg).context("simulate: pipeline")?;
    let dir = &a.common.out;
    (|| -> ctvae::Result<()> {
        save_model(&sim.outcome.model, dir.join("model.bin"))?;
        write_history(&dir.join("loss_history.csv"), &sim.outcome.history)?;
        sim.panels.x.write_csv(dir.join("x.csv"), "label")?;
        sim.panels.mu.write_csv(dir.join("mu.csv"), "label")?;
        sim.panels.z.write_csv(dir.join("z.csv"), "label")?;
        sim.panels.zhat.write_csv(dir.join("zhat.csv"), "label")?;
        write_reports(dir, &[sim.raw.clone(), sim.zhat.clone()])
    })()
    .context("simulate: writing artifacts")?;
    print!("{}", table(&[sim.raw, sim.zhat]));
    Ok(())
}

fn cmd_ablate(a: AblateArgs) -> Result<()> {
    let seed = a.common.seed;
    out_dir(&a.common.out)?;
    let data = prepare(&a.data.source(seed), seed).context("ablate: loading data")?;
    let d_z = a.data.csv.is_none().then_some(2);
    let opts = a.model_args.options(ModelKind::Ctvae, data.train.dim(), seed, true, d_z);
    let out = run_ablation(&data, &opts, a.forest.config(seed)).context("ablate: training")?;
    let dir = &a.common.out;
    (|| -> ctvae::Result<()> {
        write_history(&dir.join("loss_history_transform.csv"), &out.histories[0])?;
        write_history(&dir.join("loss_history_fix.csv"), &out.histories[1])?;
        write_reports(dir, &[out.transform.clone(), out.fix.clone()])
    })()
    .context("ablate: writing artifacts")?;
    print!("{}", table(&[out.transform, out.fix]));
    Ok(())
}

/// Runs one invocation; `args[0]` is the program name.
pub fn run(args: Vec<String>) -> Result<()> {
    let args = crate::config::expand_args(args).context("config")?;
    let cli = Cli::try_parse_from(args)?;
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Extract(a) => cmd_extract(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Relabel(a) => cmd_relabel(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Ablate(a) => cmd_ablate(a),
    }
}
