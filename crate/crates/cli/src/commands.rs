//! Implementations of the six verbs. Each takes a plain argument struct so
//! tests can drive commands without spawning processes; `main.rs` maps clap
//! flags onto these structs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use lowrank_shield::attack::{
    accuracy, run_attack, train_classifier, train_mlp, AnyClassifier, AttackConfig, AttackKind,
    Classifier, LabeledDataset,
};
use lowrank_shield::defense::{defend, defend_slq, DefenseReport, ImageBatch};
use lowrank_shield::imageio::{
    generate_synthetic, load_dataset, read_manifest, save_ppm, write_manifest, DatasetManifest,
    ManifestRecord, SyntheticSpec,
};
use lowrank_shield::rng::mix_seed;
use lowrank_shield::tensor::DenseTensor;
use lowrank_shield::{Error, Result};

use crate::config::{format_config, parse_config, MethodConfig};
use crate::model::{load_model, save_model, SavedModel};
use crate::report::{bench_table, write_bench_csv, write_defense_report_csv, BenchRow};

/// Manifest file name inside every dataset directory.
pub const MANIFEST_NAME: &str = "manifest.tsv";

/// Maps a `--split` flag value onto the loader's filter (`all` → no filter).
pub fn split_filter(split: &str) -> Result<Option<String>> {
    match split {
        "all" => Ok(None),
        "train" | "test" => Ok(Some(split.to_string())),
        other => Err(Error::config(format!(
            "unknown split `{other}` (expected train, test, or all)"
        ))),
    }
}

fn parse_attack_flag(s: &str) -> Result<AttackKind> {
    AttackKind::parse(s).map_err(|e| Error::config(e.to_string()))
}

/// Runs one attack over a whole dataset. Image `i` uses stream `i` of the
/// config seed so PGD starts differ per image; order is preserved.
pub fn attack_dataset<M: Classifier + Sync>(
    model: &M,
    data: &LabeledDataset,
    kind: AttackKind,
    cfg: &AttackConfig,
) -> Result<LabeledDataset> {
    let items = data
        .items()
        .par_iter()
        .enumerate()
        .map(|(i, item)| {
            let image = run_attack(
                kind,
                model,
                &item.image,
                item.label,
                &AttackConfig {
                    seed: mix_seed(cfg.seed, i as u64),
                    ..*cfg
                },
            )?;
            Ok(lowrank_shield::attack::LabeledImage {
                image,
                label: item.label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(items, data.classes())
}

/// Dispatches a parsed `--config` onto the tensor pipeline or SLQ baseline.
pub fn apply_method(
    batch: &ImageBatch,
    method: &MethodConfig,
) -> Result<(ImageBatch, DefenseReport)> {
    match method {
        MethodConfig::Tensor(cfg) => defend(batch, cfg),
        MethodConfig::Slq(cfg) => defend_slq(batch, cfg),
    }
}

/// Collects a dataset's images into a defense batch (labels set aside).
pub fn dataset_to_batch(data: &LabeledDataset) -> Result<ImageBatch> {
    ImageBatch::new(data.items().iter().map(|i| i.image.clone()).collect())
}

/// Rebuilds a dataset from defended images, keeping labels and order.
pub fn replace_images(data: &LabeledDataset, images: &ImageBatch) -> Result<LabeledDataset> {
    if images.len() != data.len() {
        return Err(Error::domain(format!(
            "image count {} does not match dataset size {}",
            images.len(),
            data.len()
        )));
    }
    let mut it = images.images().iter();
    data.map_images(|_| it.next().expect("counts checked").clone())
}

fn check_model_matches(saved: &SavedModel, manifest: &DatasetManifest) -> Result<()> {
    if saved.height != manifest.height()
        || saved.width != manifest.width()
        || saved.classifier.classes() != manifest.classes()
    {
        return Err(Error::domain(format!(
            "model expects {}x{} images over {} classes, dataset is {}x{} over {}",
            saved.width,
            saved.height,
            saved.classifier.classes(),
            manifest.width(),
            manifest.height(),
            manifest.classes()
        )));
    }
    Ok(())
}

/// Writes one image tree plus its manifest under `out`.
fn write_tree(
    out: &Path,
    manifest: &DatasetManifest,
    records: &[ManifestRecord],
    images: &[DenseTensor],
) -> Result<()> {
    debug_assert_eq!(records.len(), images.len());
    fs::create_dir_all(out)?;
    for (record, image) in records.iter().zip(images) {
        let path = out.join(&record.path);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        save_ppm(image, &path)?;
    }
    let manifest = DatasetManifest::new(
        manifest.width(),
        manifest.height(),
        manifest.classes(),
        records.to_vec(),
    )?;
    write_manifest(&manifest, out.join(MANIFEST_NAME))
}

fn selected_records(manifest: &DatasetManifest, split: Option<&str>) -> Vec<ManifestRecord> {
    manifest
        .records()
        .iter()
        .filter(|r| split.is_none_or(|s| r.split == s))
        .cloned()
        .collect()
}

#[derive(Debug, Clone)]
pub struct GenArgs {
    pub out: PathBuf,
    pub classes: usize,
    pub per_class: usize,
    pub width: usize,
    pub height: usize,
    pub ranks: (usize, usize),
    pub sigma: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

pub fn cmd_gen(args: &GenArgs) -> Result<()> {
    // one class cannot support training or attack evaluation
    if args.classes < 2 {
        return Err(Error::config("gen requires at least 2 classes"));
    }
    let spec = SyntheticSpec {
        classes: args.classes,
        ranks: args.ranks,
        per_class: args.per_class,
        width: args.width,
        height: args.height,
        sigma: args.sigma,
        test_fraction: args.test_fraction,
        seed: args.seed,
    };
    let (data, manifest) = generate_synthetic(&spec)?;
    fs::create_dir_all(&args.out)?;
    for (item, record) in data.items().iter().zip(manifest.records()) {
        let path = args.out.join(&record.path);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        save_ppm(&item.image, &path)?;
    }
    write_manifest(&manifest, args.out.join(MANIFEST_NAME))?;
    let test = manifest.records().iter().filter(|r| r.split == "test").count();
    println!(
        "wrote {} images ({} classes, {}x{}, {} test) to {}",
        manifest.records().len(),
        args.classes,
        args.width,
        args.height,
        test,
        args.out.display()
    );
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub data: PathBuf,
    pub out: PathBuf,
    /// Hidden-layer width; 0 selects the plain linear-softmax surrogate.
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let manifest = read_manifest(args.data.join(MANIFEST_NAME))?;
    let train = load_dataset(&manifest, &args.data, Some("train"))?;
    let model: AnyClassifier = if args.hidden == 0 {
        train_classifier(&train, args.epochs, args.lr, args.seed)?.into()
    } else {
        train_mlp(&train, args.hidden, args.epochs, args.lr, args.seed)?.into()
    };
    println!("train accuracy: {:.4}", accuracy(&model, &train)?);
    match load_dataset(&manifest, &args.data, Some("test")) {
        Ok(test) => println!("test accuracy: {:.4}", accuracy(&model, &test)?),
        Err(Error::Domain(_)) => println!("test accuracy: n/a (no test split)"),
        Err(e) => return Err(e),
    }
    save_model(&args.out, &model, manifest.height(), manifest.width())?;
    println!("saved model to {}", args.out.display());
    Ok(())
}

#[derive(Debug, Clone)]
pub struct AttackArgs {
    pub data: PathBuf,
    pub model: PathBuf,
    pub out: PathBuf,
    pub attack: String,
    pub eps: f64,
    pub alpha: f64,
    pub tau: f64,
    pub iters: usize,
    pub seed: u64,
    pub split: String,
}

pub fn cmd_attack(args: &AttackArgs) -> Result<()> {
    let kind = parse_attack_flag(&args.attack)?;
    let split = split_filter(&args.split)?;
    let cfg = AttackConfig {
        epsilon: args.eps,
        alpha: args.alpha,
        tau: args.tau,
        iters: args.iters,
        seed: args.seed,
    };
    cfg.validate().map_err(|e| Error::config(e.to_string()))?;

    let manifest = read_manifest(args.data.join(MANIFEST_NAME))?;
    let saved = load_model(&args.model)?;
    check_model_matches(&saved, &manifest)?;
    let clean = load_dataset(&manifest, &args.data, split.as_deref())?;
    let records = selected_records(&manifest, split.as_deref());

    let attacked = attack_dataset(&saved.classifier, &clean, kind, &cfg)?;
    let images: Vec<DenseTensor> = attacked.items().iter().map(|i| i.image.clone()).collect();
    write_tree(&args.out, &manifest, &records, &images)?;
    println!(
        "{} on {} images: accuracy {:.4} -> {:.4}; wrote {}",
        kind.name(),
        attacked.len(),
        accuracy(&saved.classifier, &clean)?,
        accuracy(&saved.classifier, &attacked)?,
        args.out.display()
    );
    Ok(())
}

#[derive(Debug, Clone)]
pub struct DefendArgs {
    pub data: PathBuf,
    pub out: PathBuf,
    pub config: String,
    pub split: String,
    pub report: Option<PathBuf>,
}

pub fn cmd_defend(args: &DefendArgs) -> Result<()> {
    let method = parse_config(&args.config)?;
    let split = split_filter(&args.split)?;
    let manifest = read_manifest(args.data.join(MANIFEST_NAME))?;
    let data = load_dataset(&manifest, &args.data, split.as_deref())?;
    let records = selected_records(&manifest, split.as_deref());

    let batch: ImageBatch = dataset_to_batch(&data)?;
    let start = Instant::now();
    let (defended, report) = apply_method(&batch, &method)?;
    let seconds = start.elapsed().as_secs_f64();

    write_tree(&args.out, &manifest, &records, defended.images())?;
    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| args.out.join("defense_report.csv"));
    write_defense_report_csv(&report, &report_path)?;
    let failures = report.records.iter().filter(|r| r.failure.is_some()).count();
    println!(
        "defended {} images ({} tensors, {} pass-through) in {:.3}s; mean recon err {:.6}",
        defended.len(),
        report.records.len(),
        failures,
        seconds,
        report.mean_relative_error()
    );
    println!("config: {}", format_config(&method));
    println!("wrote {} and {}", args.out.display(), report_path.display());
    Ok(())
}

#[derive(Debug, Clone)]
pub struct BenchArgs {
    pub data: PathBuf,
    pub model: PathBuf,
    pub out: PathBuf,
    pub configs: Vec<String>,
    pub attacks: Vec<String>,
    pub eps: f64,
    pub alpha: f64,
    pub tau: f64,
    pub iters: usize,
    pub seed: u64,
    pub split: String,
}

pub fn cmd_bench(args: &BenchArgs) -> Result<Vec<BenchRow>> {
    if args.configs.is_empty() {
        return Err(Error::config("bench needs at least one --config"));
    }
    if args.attacks.is_empty() {
        return Err(Error::config("bench needs at least one attack"));
    }
    let methods: Vec<(String, MethodConfig)> = args
        .configs
        .iter()
        .map(|s| {
            let m = parse_config(s)?;
            Ok((format_config(&m), m))
        })
        .collect::<Result<_>>()?;
    let kinds: Vec<AttackKind> = args
        .attacks
        .iter()
        .map(|s| parse_attack_flag(s))
        .collect::<Result<_>>()?;
    let split = split_filter(&args.split)?;
    let cfg = AttackConfig {
        epsilon: args.eps,
        alpha: args.alpha,
        tau: args.tau,
        iters: args.iters,
        seed: args.seed,
    };
    cfg.validate().map_err(|e| Error::config(e.to_string()))?;

    let manifest = read_manifest(args.data.join(MANIFEST_NAME))?;
    let saved = load_model(&args.model)?;
    check_model_matches(&saved, &manifest)?;
    let clean = load_dataset(&manifest, &args.data, split.as_deref())?;
    let clean_acc = accuracy(&saved.classifier, &clean)?;

    let mut rows = Vec::with_capacity(kinds.len() * methods.len());
    for kind in kinds {
        let attacked = attack_dataset(&saved.classifier, &clean, kind, &cfg)?;
        let att_acc = accuracy(&saved.classifier, &attacked)?;
        let batch = dataset_to_batch(&attacked)?;
        for (canonical, method) in &methods {
            let start = Instant::now();
            let (defended, report) = apply_method(&batch, method)?;
            let runtime_s = start.elapsed().as_secs_f64();
            let def_acc = accuracy(&saved.classifier, &replace_images(&attacked, &defended)?)?;
            rows.push(BenchRow {
                config: canonical.clone(),
                attack: kind.name().to_string(),
                eps: args.eps,
                clean_acc,
                att_acc,
                def_acc,
                runtime_s,
                recon_err: report.mean_relative_error(),
            });
        }
    }
    write_bench_csv(&rows, &args.out)?;
    print!("{}", bench_table(&rows));
    println!("wrote {}", args.out.display());
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct SweepArgs {
    pub data: PathBuf,
    pub model: PathBuf,
    pub out: PathBuf,
    pub attack: String,
    pub eps: f64,
    pub alpha: f64,
    pub tau: f64,
    pub iters: usize,
    pub seed: u64,
    pub batches: Vec<usize>,
    pub rank_min: usize,
    pub rank_max: usize,
    pub rank_step: usize,
    pub split: String,
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<Vec<BenchRow>> {
    if args.batches.is_empty() || args.batches.iter().any(|&b| b == 0) {
        return Err(Error::config("batches must be a nonempty list of positive sizes"));
    }
    if args.rank_step == 0 {
        return Err(Error::config("rank step must be at least 1"));
    }
    if args.rank_min == 0 || args.rank_min > args.rank_max {
        return Err(Error::config(format!(
            "empty rank range {}..={}",
            args.rank_min, args.rank_max
        )));
    }
    let kind = parse_attack_flag(&args.attack)?;
    let split = split_filter(&args.split)?;
    let cfg = AttackConfig {
        epsilon: args.eps,
        alpha: args.alpha,
        tau: args.tau,
        iters: args.iters,
        seed: args.seed,
    };
    cfg.validate().map_err(|e| Error::config(e.to_string()))?;

    let manifest = read_manifest(args.data.join(MANIFEST_NAME))?;
    let saved = load_model(&args.model)?;
    check_model_matches(&saved, &manifest)?;
    let clean = load_dataset(&manifest, &args.data, split.as_deref())?;
    let clean_acc = accuracy(&saved.classifier, &clean)?;
    let attacked = attack_dataset(&saved.classifier, &clean, kind, &cfg)?;
    let att_acc = accuracy(&saved.classifier, &attacked)?;
    let batch = dataset_to_batch(&attacked)?;

    let mut rows = Vec::new();
    for &b in &args.batches {
        for rank in (args.rank_min..=args.rank_max).step_by(args.rank_step) {
            // the sweep convention: first rank pinned to the batch size,
            // third to the channel count, the middle rank swept
            let dc = lowrank_shield::defense::DefenseConfig {
                decomposition: lowrank_shield::defense::Decomposition::TensorTrain,
                representation: lowrank_shield::defense::Representation::FourMode,
                batch_size: b,
                ranks: vec![b, rank, 3],
                patch: None,
                rank_pool: None,
                seed: args.seed,
            };
            let method = MethodConfig::Tensor(dc);
            let canonical = format_config(&method);
            let start = Instant::now();
            let (defended, report) = apply_method(&batch, &method)?;
            let runtime_s = start.elapsed().as_secs_f64();
            let def_acc = accuracy(&saved.classifier, &replace_images(&attacked, &defended)?)?;
            rows.push(BenchRow {
                config: canonical,
                attack: kind.name().to_string(),
                eps: args.eps,
                clean_acc,
                att_acc,
                def_acc,
                runtime_s,
                recon_err: report.mean_relative_error(),
            });
        }
    }
    write_bench_csv(&rows, &args.out)?;
    print!("{}", bench_table(&rows));
    println!("wrote {}", args.out.display());
    Ok(rows)
}
