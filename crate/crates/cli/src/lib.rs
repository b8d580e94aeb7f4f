//! End-to-end pipelines behind the `ctvae` binary: data preparation, model
//! fitting, representation scoring, the blob simulation and the prior ablation.

pub mod app;
pub mod config;
pub mod report;

use std::path::Path;

use ctvae::classify::{fit_forest, ForestConfig, RandomForest};
use ctvae::data::{
    apply_normalizer, fit_normalizer, load_csv, make_blobs, split, BlobSpec, Dataset, LabelColumn, NormStats,
};
use ctvae::metrics::{Averaging, EvalReport};
use ctvae::models::{train, ArchSpec, Betas, Model, ModelKind, ModelSpec, TrainConfig, TrainOutcome};
use ctvae::nn::Matrix;
use ctvae::priors::{fit_priors, PriorVariant, DEFAULT_SCALE};
use ctvae::Result;

/// Desk-scale settings for the blob simulation: 300 epochs converge at this
/// learning rate, and the wider layers keep `ẑ` of raw inputs close to `ẑ` of
/// reconstructions.
pub const DESK_LR: f64 = 3e-2;
pub const DESK_HIDDEN: usize = 64;
pub const DESK_SCALE: f64 = 1.0;
pub const DESK_EPOCHS: usize = 300;

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Csv {
        path: std::path::PathBuf,
        label: LabelColumn,
        has_header: bool,
        train_fraction: f64,
        stratified: bool,
    },
    Blobs(BlobSpec),
}

/// Raw and scaled train/test halves plus the scaling fitted on the train half.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub train_raw: Dataset,
    pub test_raw: Dataset,
    pub normalizer: NormStats,
    pub train: Dataset,
    pub test: Dataset,
}

pub fn prepare(source: &DataSource, seed: u64) -> Result<Prepared> {
    let (train_raw, test_raw) = match source {
        DataSource::Csv {
            path,
            label,
            has_header,
            train_fraction,
            stratified,
        } => {
            let all = load_csv(path, label, *has_header)?;
            split(&all, *train_fraction, seed, *stratified)?
        }
        DataSource::Blobs(spec) => make_blobs(spec)?,
    };
    from_split(train_raw, test_raw)
}

pub fn from_split(train_raw: Dataset, test_raw: Dataset) -> Result<Prepared> {
    let normalizer = fit_normalizer(&train_raw)?;
    let train = apply_normalizer(&normalizer, &train_raw)?;
    let test = apply_normalizer(&normalizer, &test_raw)?;
    Ok(Prepared {
        train_raw,
        test_raw,
        normalizer,
        train,
        test,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelOptions {
    pub kind: ModelKind,
    pub arch: ArchSpec,
    pub betas: Betas,
    pub train: TrainConfig,
    pub scale: f64,
    pub variant: PriorVariant,
}

impl ModelOptions {
    /// Reference defaults for a given input width.
    pub fn reference(kind: ModelKind, d_input: usize) -> Self {
        Self {
            kind,
            arch: ArchSpec::auto(d_input),
            betas: Betas::default(),
            train: TrainConfig::default(),
            scale: DEFAULT_SCALE,
            variant: PriorVariant::Transform,
        }
    }

    /// The blob-simulation configuration at desk scale.
    pub fn desk_simulation(seed: u64) -> Self {
        Self {
            kind: ModelKind::Ctvae,
            arch: ArchSpec {
                d_input: 10,
                h1: DESK_HIDDEN,
                d_z: 2,
                h2: DESK_HIDDEN,
                h3: DESK_HIDDEN,
            },
            betas: Betas::default(),
            train: TrainConfig {
                epochs: DESK_EPOCHS,
                lr: DESK_LR,
                seed,
                ..TrainConfig::default()
            },
            scale: DESK_SCALE,
            variant: PriorVariant::Transform,
        }
    }
}

/// Trains on the scaled train half and embeds the scaling into the model.
pub fn fit_model(opts: &ModelOptions, data: &Prepared) -> Result<TrainOutcome> {
    let priors = if opts.kind == ModelKind::Ctvae {
        Some(fit_priors(&data.train, opts.arch.d_z, opts.scale, opts.variant)?.1)
    } else {
        None
    };
    let spec = ModelSpec {
        kind: opts.kind,
        arch: opts.arch,
        betas: opts.betas,
    };
    let mut out = train(&spec, &data.train, priors, &opts.train)?;
    out.model.normalizer = Some(data.normalizer.clone());
    Ok(out)
}

/// Scales raw features with the model's stored normalizer, then extracts.
pub fn extract_raw(model: &Model, raw: &Matrix) -> Result<Matrix> {
    let mut x = raw.clone();
    if let Some(n) = &model.normalizer {
        n.apply_matrix(&mut x)?;
    }
    Ok(model.extract(&x)?.matrix)
}

/// Fits a forest on the train representation and scores the test one.
pub fn evaluate(
    name: &str,
    train: &Dataset,
    test: &Dataset,
    forest: ForestConfig,
    averaging: Averaging,
) -> Result<(EvalReport, RandomForest)> {
    let k = train.n_classes();
    let rf = fit_forest(&train.features, &train.labels, k, forest)?;
    let pred = rf.predict(&test.features)?;
    let report = EvalReport::score(name, &test.labels, &pred, averaging, &test.features, k)?;
    Ok((report, rf))
}

/// Scatter data for the simulation figure panels, all on the test half.
#[derive(Clone, Debug)]
pub struct Panels {
    pub x: Dataset,
    pub mu: Dataset,
    pub z: Dataset,
    pub zhat: Dataset,
}

#[derive(Clone, Debug)]
pub struct SimulationConfig {
    pub blobs: BlobSpec,
    pub model: ModelOptions,
    pub forest: ForestConfig,
}

impl SimulationConfig {
    pub fn desk(seed: u64) -> Self {
        Self {
            blobs: BlobSpec::simulation(seed),
            model: ModelOptions::desk_simulation(seed),
            forest: ForestConfig {
                seed,
                ..ForestConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimulationOutcome {
    pub data: Prepared,
    pub outcome: TrainOutcome,
    /// Forest on the scaled input features.
    pub raw: EvalReport,
    /// Forest on the decoder output for raw inputs.
    pub zhat: EvalReport,
    pub train_zhat: Dataset,
    pub panels: Panels,
}

pub fn run_simulation(cfg: &SimulationConfig) -> Result<SimulationOutcome> {
    let data = prepare(&DataSource::Blobs(cfg.blobs.clone()), cfg.blobs.seed)?;
    let mut model_opts = cfg.model.clone();
    model_opts.arch.d_input = data.train.dim();
    let outcome = fit_model(&model_opts, &data)?;
    let model = &outcome.model;

    let averaging = Averaging::Macro;
    let (raw, _) = evaluate("x", &data.train, &data.test, cfg.forest, averaging)?;
    let train_zhat = data.train.with_features(model.extract(&data.train.features)?.matrix, "zhat")?;
    let test_zhat = data.test.with_features(model.extract(&data.test.features)?.matrix, "zhat")?;
    let (zhat, _) = evaluate("zhat", &train_zhat, &test_zhat, cfg.forest, averaging)?;

    let mu = model.encode_mean(&data.test.features)?;
    let mut rng = ctvae::rng::seeded(ctvae::rng::derive_seed(cfg.blobs.seed, 4));
    let eta = model.sample_noise(data.test.len(), &mut rng);
    let forward = model.forward(&data.test.features, Some(&data.test.labels), &eta)?;
    let first_two = Matrix::from_rows(
        &data
            .test
            .features
            .iter_rows()
            .map(|r| r[..2.min(r.len())].to_vec())
            .collect::<Vec<_>>(),
    )?;
    let panels = Panels {
        x: data.test.with_features(first_two, "x")?,
        mu: data.test.with_features(mu, "mu")?,
        z: data.test.with_features(forward.z, "z")?,
        zhat: test_zhat,
    };
    Ok(SimulationOutcome {
        data,
        outcome,
        raw,
        zhat,
        train_zhat,
        panels,
    })
}

#[derive(Clone, Debug)]
pub struct AblationOutcome {
    pub transform: EvalReport,
    pub fix: EvalReport,
    pub histories: [Vec<f64>; 2],
}

/// Same data, same seed, dispersed class means versus constant means `S·c`.
pub fn run_ablation(data: &Prepared, model: &ModelOptions, forest: ForestConfig) -> Result<AblationOutcome> {
    let mut reports = Vec::with_capacity(2);
    let mut histories = Vec::with_capacity(2);
    for (variant, name) in [(PriorVariant::Transform, "ctvae-transform"), (PriorVariant::Fixed, "ctvae-fix")] {
        let opts = ModelOptions {
            kind: ModelKind::Ctvae,
            variant,
            ..model.clone()
        };
        let out = fit_model(&opts, data)?;
        let tr = data.train.with_features(out.model.extract(&data.train.features)?.matrix, "zhat")?;
        let te = data.test.with_features(out.model.extract(&data.test.features)?.matrix, "zhat")?;
        reports.push(evaluate(name, &tr, &te, forest, Averaging::Macro)?.0);
        histories.push(out.history);
    }
    let fix = reports.pop().unwrap();
    let transform = reports.pop().unwrap();
    let h_fix = histories.pop().unwrap();
    let h_tr = histories.pop().unwrap();
    Ok(AblationOutcome {
        transform,
        fix,
        histories: [h_tr, h_fix],
    })
}

/// `epoch,loss` rows, epochs counted from 1.
pub fn write_history(path: &Path, history: &[f64]) -> Result<()> {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in history.iter().enumerate() {
        s.push_str(&format!("{},{}\n", i + 1, ctvae::data::format_float(*l)));
    }
    std::fs::write(path, s).map_err(|e| ctvae::Error::io(path, e))
}
