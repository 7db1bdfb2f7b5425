use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::attack::{run_variant, AttackConfig, AttackResult, Variant};
use crate::classifier::{
    accuracy, generate_synthetic, load_dataset, load_model, save_dataset, save_model, train, ClassifierModel, Dataset,
    Split, TrainHistory,
};
use crate::encoder::EncoderKind;
use crate::error::{Error, Result};
use crate::eval::pnm::dump_images;
use crate::eval::report::{ImageRecord, RunReport, VariantReport};
use crate::harness::config::ExperimentConfig;
use crate::seed;

/// One attacked image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selected {
    /// Index into the dataset.
    pub id: usize,
    pub label: usize,
    pub target: usize,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub history: TrainHistory,
    pub val_accuracy: f64,
    pub model_path: PathBuf,
    pub dataset_path: PathBuf,
    pub checksum: String,
}

/// Generates the dataset, trains the default classifier, and writes both.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainSummary> {
    let seed = cfg.seed();
    let ds = generate_synthetic(seed, cfg.dataset_size, cfg.width, cfg.height, cfg.channels, cfg.classes)?;
    let init = ClassifierModel::cnn([cfg.height, cfg.width, cfg.channels], cfg.classes, &[8, 16], seed);
    let (model, history) = train(&init, &ds, &cfg.train_config())?;
    save_model(&model, &cfg.model)?;
    save_dataset(&ds, &cfg.dataset)?;
    let val_accuracy = accuracy(&model, &ds, Split::Val)?.unwrap_or(0.0);
    Ok(TrainSummary {
        history,
        val_accuracy,
        model_path: cfg.model.clone(),
        dataset_path: cfg.dataset.clone(),
        checksum: model.param_checksum(),
    })
}

/// Correctly classified validation images in a seeded random order, each
/// with a random target different from its label. Fails with
/// [`Error::Shortfall`] when fewer than `count` qualify.
pub fn select_images(model: &ClassifierModel, ds: &Dataset, count: usize, root: u64) -> Result<Vec<Selected>> {
    if ds.classes < 2 {
        return Err(Error::Config("targeted attacks need at least two classes".into()));
    }
    let candidates: Vec<(usize, usize)> = ds
        .split(Split::Val)
        .map(|(id, s)| Ok((id, s.label, model.predict_class(&s.image)? == s.label)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|&(_, _, ok)| ok)
        .map(|(id, label, _)| (id, label))
        .collect();
    if candidates.len() < count {
        return Err(Error::Shortfall {
            requested: count,
            available: candidates.len(),
        });
    }
    let mut order = candidates;
    order.shuffle(&mut seed::stream(root, seed::purpose::IMAGES, 0));
    Ok(order
        .into_iter()
        .take(count)
        .map(|(id, label)| {
            let mut rng = seed::stream(root, seed::purpose::TARGETS, id as u64);
            let pick = rng.random_range(0..ds.classes - 1);
            let target = if pick >= label { pick + 1 } else { pick };
            Selected { id, label, target }
        })
        .collect())
}

/// SHA-256 of the `(id, target)` list, hex encoded.
pub fn image_list_hash(images: &[Selected]) -> String {
    let mut h = Sha256::new();
    for s in images {
        h.update((s.id as u64).to_le_bytes());
        h.update((s.target as u64).to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Attack configuration for one image: the shared hyperparameters with a
/// seed derived from the run seed and the image id.
pub fn image_config(base: &AttackConfig, root: u64, id: usize) -> AttackConfig {
    AttackConfig {
        seed: seed::derive(root, seed::purpose::ATTACK, id as u64),
        ..base.clone()
    }
}

/// Runs `variant` on every image with a pool of `workers` threads. Results
/// come back in the order of `images` whatever order they finish in.
pub fn run_batch(
    model: &ClassifierModel,
    ds: &Dataset,
    images: &[Selected],
    base: &AttackConfig,
    root: u64,
    variant: &Variant,
    workers: usize,
) -> Result<Vec<Result<AttackResult>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(|| {
        images
            .par_iter()
            .map(|s| {
                let cfg = image_config(base, root, s.id);
                run_variant(model, &ds.samples[s.id].image, s.target, &cfg, variant.clone())
            })
            .collect()
    }))
}

struct Prepared {
    model: ClassifierModel,
    ds: Dataset,
    images: Vec<Selected>,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let model = load_model(&cfg.model)?;
    let ds = load_dataset(&cfg.dataset)?;
    if ds.shape != model.input_shape() {
        return Err(Error::dim(
            "harness",
            format!("dataset images {:?}, model expects {:?}", ds.shape, model.input_shape()),
        ));
    }
    let acc = accuracy(&model, &ds, Split::Val)?.unwrap_or(0.0);
    if acc < cfg.accuracy_floor {
        return Err(Error::AccuracyFloor {
            accuracy: acc,
            floor: cfg.accuracy_floor,
        });
    }
    let images = select_images(&model, &ds, cfg.count, cfg.seed())?;
    Ok(Prepared { model, ds, images })
}

/// Collects one variant's rows. The first failure truncates the report:
/// rows before it are kept, the error is recorded, and the caller stops.
fn collect_variant(
    p: &Prepared,
    cfg: &ExperimentConfig,
    report: &mut RunReport,
    name: &str,
    base: &AttackConfig,
    variant: &Variant,
) -> Result<Vec<AttackResult>> {
    let outcomes = run_batch(&p.model, &p.ds, &p.images, base, cfg.seed(), variant, cfg.workers)?;
    let mut records = Vec::new();
    let mut results = Vec::new();
    let mut failure = None;
    for (s, outcome) in p.images.iter().zip(outcomes) {
        match outcome {
            Ok(r) => {
                if cfg.dump_images {
                    let prefix = cfg.out.join("images").join(format!("{name}-{:05}", s.id));
                    dump_images(&p.ds.samples[s.id].image, &r.adversarial, &r.hard_mask, prefix)?;
                }
                records.push(ImageRecord::from_result(s.id, s.label, s.target, &r));
                results.push(r);
            }
            Err(e) => {
                failure = Some((s.id, e));
                break;
            }
        }
    }
    report.variants.push(VariantReport::new(name, records));
    match failure {
        Some((id, e)) => {
            report.truncated = true;
            report.error = Some(format!("{name}, image {id}: {e}"));
            Err(e)
        }
        None => Ok(results),
    }
}

fn report_path(cfg: &ExperimentConfig, command: &str) -> PathBuf {
    cfg.out.join(format!("{command}.json"))
}

/// Runs `body`, then writes whatever the report holds, truncated or not.
fn with_report(
    cfg: &ExperimentConfig,
    command: &str,
    body: impl FnOnce(&Prepared, &mut RunReport) -> Result<()>,
) -> Result<RunReport> {
    let p = prepare(cfg)?;
    let mut report = RunReport::new(command, cfg.echo(), image_list_hash(&p.images));
    let outcome = body(&p, &mut report);
    report.emit(report_path(cfg, command))?;
    outcome.map(|()| report)
}

/// The full method on `count` images.
pub fn cmd_attack(cfg: &ExperimentConfig) -> Result<RunReport> {
    with_report(cfg, "attack", |p, report| {
        collect_variant(p, cfg, report, "full", &cfg.attack_config(), &Variant::Full).map(drop)
    })
}

/// The full method and the four baselines on one image list. The random
/// baseline selects as many mask units as the full method's mean.
pub fn cmd_ablate(cfg: &ExperimentConfig) -> Result<RunReport> {
    with_report(cfg, "ablate", |p, report| {
        let base = cfg.attack_config();
        let full = collect_variant(p, cfg, report, "full", &base, &Variant::Full)?;
        let k = matched_mask_units(&full, &base, p.ds.shape[2]);
        collect_variant(p, cfg, report, "dense", &base, &Variant::Dense)?;
        collect_variant(p, cfg, report, "random", &base, &Variant::Random { k })?;
        collect_variant(p, cfg, report, "l1-delta", &base, &Variant::L1Delta { lambda: cfg.l1_lambda })?;
        collect_variant(p, cfg, report, "no-encoder", &base, &Variant::NoEncoder)?;
        Ok(())
    })
}

/// Rounded mean hard-mask size of `results`, in mask units (positions when
/// the mask is shared across channels).
pub fn matched_mask_units(results: &[AttackResult], cfg: &AttackConfig, channels: usize) -> usize {
    if results.is_empty() {
        return 0;
    }
    let per_unit = if cfg.channel_independent { 1 } else { channels };
    let mean = results.iter().map(|r| r.mask_popcount() as f64).sum::<f64>() / results.len() as f64;
    (mean / per_unit as f64).round() as usize
}

/// The full method with each encoder structure on one image list.
pub fn cmd_encoders(cfg: &ExperimentConfig) -> Result<RunReport> {
    with_report(cfg, "encoders", |p, report| {
        for kind in [EncoderKind::FullyConnected, EncoderKind::ConvSmall] {
            let base = AttackConfig {
                encoder: kind,
                ..cfg.attack_config()
            };
            collect_variant(p, cfg, report, kind.name(), &base, &Variant::Full)?;
        }
        Ok(())
    })
}

/// Pretty-prints a stored report.
pub fn cmd_report(path: &Path) -> Result<String> {
    let report = RunReport::load(path)?;
    let mut text = report.render();
    if !report.aggregates_consistent() {
        text.push_str("WARNING: stored aggregates do not match the per-image rows\n");
    }
    Ok(text)
}
