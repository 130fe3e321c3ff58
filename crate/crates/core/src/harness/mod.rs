//! Robustness sweeps.
//!
//! Each trial of a QuNN cell: quanvolve the train/test subsets with a freshly
//! seeded filter circuit, train the dense head, build adversarial test sets for
//! every (attack, ε), quanvolve those and evaluate. Classical cells train on
//! raw pixels and are attacked directly.

mod config;
mod plot;
mod report;

pub use config::{SweepConfig, DEFAULT_EPSILONS, FGSM_EXTRA_EPSILON, KEYS};
pub use plot::{emit_plot, render_svg};
pub use report::{
    aggregate, ansatz_label, csv_string, emit_csv, mean_std, parse_csv, series_label, AggregateRow, Record,
    SweepResult, CSV_HEADER,
};

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::ansatz::{self, AnsatzKind};
use crate::attacks::{self, AttackKind, GradientMode, GradientSource};
use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::nn::{self, Architecture, Model, Tensor, TrainConfig};
use crate::quanv::{self, PixelDomain, QuanvConfig};
use crate::seed;

/// One compared model: a classical architecture, or the QuNN head behind a
/// specific ansatz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub architecture: Architecture,
    pub ansatz: Option<AnsatzKind>,
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&series_label(self.architecture, self.ansatz))
    }
}

impl Cell {
    pub const CLASSICAL_CNN: Cell = Cell {
        architecture: Architecture::ClassicalCnn,
        ansatz: None,
    };

    pub fn qunn(kind: AnsatzKind) -> Cell {
        Cell {
            architecture: Architecture::QunnHead,
            ansatz: Some(kind),
        }
    }
}

/// Cells implied by the config, classical first.
pub fn cells(cfg: &SweepConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &arch in &cfg.architectures {
        if arch == Architecture::QunnHead {
            out.extend(cfg.ansatzes.iter().map(|&k| Cell::qunn(k)));
        } else {
            out.push(Cell { architecture: arch, ansatz: None });
        }
    }
    out
}

/// `base_seed ⊕ hash(architecture, ansatz, trial)`.
pub fn trial_seed(base_seed: u64, cell: Cell, trial: usize) -> u64 {
    let key = format!("{}|{}|{trial}", cell.architecture, ansatz_label(cell.ansatz));
    base_seed ^ seed::hash64(key.as_bytes())
}

/// The fixed train/test subsets shared by every trial.
#[derive(Debug, Clone)]
pub struct SweepData {
    pub train: Dataset,
    pub test: Dataset,
    pub train_labels: Vec<usize>,
    pub test_labels: Vec<usize>,
    pub fingerprint: u64,
}

impl SweepData {
    pub fn prepare(cfg: &SweepConfig, full: &Dataset) -> Result<Self> {
        if full.name != cfg.dataset {
            return Err(Error::invalid(format!(
                "config asks for {} but the loaded dataset is {}",
                cfg.dataset, full.name
            )));
        }
        let (train, test) = data::subset(full, cfg.n_train, cfg.n_test, cfg.subset_seed())?;
        let fingerprint = seed::hash64(format!("{:016x}{:016x}", train.fingerprint(), test.fingerprint()).as_bytes());
        Ok(SweepData {
            train_labels: train.labels_usize(),
            test_labels: test.labels_usize(),
            train,
            test,
            fingerprint,
        })
    }
}

/// Where quanvolved train/test maps are cached; `None` disables caching.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub cache_dir: Option<PathBuf>,
}

/// Accuracy curve of one attack over its ε grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackCurve {
    pub attack: AttackKind,
    pub epsilons: Vec<f64>,
    pub accuracies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub cell: Cell,
    pub trial: usize,
    pub seed: u64,
    pub train_accuracy: f64,
    pub clean_accuracy: f64,
    pub curves: Vec<AttackCurve>,
    pub wall_time: f64,
}

impl TrialResult {
    pub fn records(&self, cfg: &SweepConfig) -> Vec<Record> {
        let mut out = Vec::new();
        for curve in &self.curves {
            for (&epsilon, &accuracy) in curve.epsilons.iter().zip(&curve.accuracies) {
                out.push(Record {
                    dataset: cfg.dataset,
                    architecture: self.cell.architecture,
                    ansatz: self.cell.ansatz,
                    attack: curve.attack,
                    mode: cfg.mode,
                    epsilon,
                    trial: self.trial,
                    accuracy,
                    clean_accuracy: self.clean_accuracy,
                    train_accuracy: self.train_accuracy,
                    wall_time: self.wall_time,
                });
            }
        }
        out
    }
}

fn train_config(cfg: &SweepConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        seed: seed::derive(seed, "train"),
        ..cfg.train.clone()
    }
}

fn tensors(images: &[ImageTensor]) -> Vec<Tensor> {
    images.iter().map(Tensor::from).collect()
}

/// Trains a classical model on raw pixels exactly as its own cell would.
pub fn train_classical(cfg: &SweepConfig, data: &SweepData, arch: Architecture, trial: usize) -> Result<(Model, f64)> {
    let seed = trial_seed(cfg.base_seed, Cell { architecture: arch, ansatz: None }, trial);
    let model = nn::build_model_with(arch, cfg.dataset, &cfg.head, seed::derive(seed, "init"))?;
    let (model, report) = nn::train(&model, &tensors(&data.train.images), &data.train_labels, &train_config(cfg, seed))?;
    Ok((model, report.final_stats().accuracy))
}

/// Filter-layer configuration for a QuNN trial. Pixels may leave `[0, 1]`
/// when adversarial clamping is off.
pub fn quanv_config(cfg: &SweepConfig, kind: AnsatzKind, seed: u64) -> Result<QuanvConfig> {
    let circuit = ansatz::instantiate(kind, 4, seed::derive(seed, "ansatz"), &cfg.random)?;
    let mut q = QuanvConfig::new(circuit)?;
    q.domain = if cfg.clamp { PixelDomain::Unit } else { PixelDomain::Unbounded };
    q.rescale = cfg.rescale;
    Ok(q)
}

/// Quanvolves and rounds to `f32`, the precision of the on-disk cache, so a
/// cached and a fresh run see identical features.
pub fn quanvolve_f32(images: &[ImageTensor], q: &QuanvConfig) -> Result<Vec<ImageTensor>> {
    Ok(quanv::quanvolve_dataset(images, q)?
        .into_iter()
        .map(ImageTensor::round_to_f32)
        .collect())
}

fn cached_features(
    data: &SweepData,
    cell: Cell,
    seed: u64,
    q: &QuanvConfig,
    opts: &RunOptions,
) -> Result<(Vec<ImageTensor>, Vec<ImageTensor>)> {
    let key = seed::hash64(
        format!("{:016x}|{}|{seed:016x}|{:016x}", data.fingerprint, ansatz_label(cell.ansatz), q.fingerprint()).as_bytes(),
    );
    let n_train = data.train.len();
    let path = opts
        .cache_dir
        .as_ref()
        .map(|d| d.join(format!("{}-{}-{key:016x}.qnvf", data.train.name, ansatz_label(cell.ansatz))));
    if let Some(path) = &path {
        if let Ok((mut maps, meta)) = quanv::read_qnvf(path) {
            if meta == key && maps.len() == n_train + data.test.len() {
                let test = maps.split_off(n_train);
                return Ok((maps, test));
            }
            log::warn!("ignoring stale cache {}", path.display());
        }
    }
    let train = quanvolve_f32(&data.train.images, q)?;
    let test = quanvolve_f32(&data.test.images, q)?;
    if let Some(path) = &path {
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        let all: Vec<ImageTensor> = train.iter().chain(&test).cloned().collect();
        quanv::write_qnvf(&tmp, &all, key)?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    }
    Ok((train, test))
}

fn evaluate_images(model: &Model, images: &[ImageTensor], labels: &[usize]) -> Result<f64> {
    nn::evaluate(model, &tensors(images), labels)
}

/// Runs all four protocol steps for one `(cell, trial)` and every configured
/// attack. Deterministic in `(cfg, cell, trial)`.
pub fn run_trial(cfg: &SweepConfig, data: &SweepData, cell: Cell, trial: usize, opts: &RunOptions) -> Result<TrialResult> {
    let start = Instant::now();
    let seed = trial_seed(cfg.base_seed, cell, trial);
    let test_images = &data.test.images;
    let labels = &data.test_labels;
    let mut curves = Vec::with_capacity(cfg.attacks.len());

    let (train_accuracy, clean_accuracy) = match cell.ansatz {
        None => {
            let (model, train_acc) = train_classical(cfg, data, cell.architecture, trial)?;
            let clean = evaluate_images(&model, test_images, labels)?;
            let source = GradientSource::Surrogate(&model);
            for &attack in &cfg.attacks {
                let eps = cfg.grid(attack).to_vec();
                let accuracies = eps
                    .iter()
                    .map(|&e| {
                        let adv = attacks::attack_batch(&source, test_images, labels, &cfg.attack_config(attack, e))?;
                        evaluate_images(&model, &adv, labels)
                    })
                    .collect::<Result<Vec<_>>>()?;
                curves.push(AttackCurve { attack, epsilons: eps, accuracies });
            }
            (train_acc, clean)
        }
        Some(kind) => {
            let q = quanv_config(cfg, kind, seed)?;
            let (train_maps, test_maps) = cached_features(data, cell, seed, &q, opts)?;
            let head = nn::build_model_with(Architecture::QunnHead, cfg.dataset, &cfg.head, seed::derive(seed, "init"))?;
            let (head, report) = nn::train(&head, &tensors(&train_maps), &data.train_labels, &train_config(cfg, seed))?;
            let clean = evaluate_images(&head, &test_maps, labels)?;
            let surrogate = match cfg.mode {
                GradientMode::Surrogate => Some(train_classical(cfg, data, Architecture::ClassicalCnn, trial)?.0),
                GradientMode::EndToEnd => None,
            };
            let source = match &surrogate {
                Some(m) => GradientSource::Surrogate(m),
                None => GradientSource::EndToEnd { quanv: &q, head: &head },
            };
            for &attack in &cfg.attacks {
                let eps = cfg.grid(attack).to_vec();
                let accuracies = eps
                    .iter()
                    .map(|&e| {
                        if e == 0.0 {
                            return Ok(clean);
                        }
                        let adv = attacks::attack_batch(&source, test_images, labels, &cfg.attack_config(attack, e))?;
                        evaluate_images(&head, &quanvolve_f32(&adv, &q)?, labels)
                    })
                    .collect::<Result<Vec<_>>>()?;
                curves.push(AttackCurve { attack, epsilons: eps, accuracies });
            }
            (report.final_stats().accuracy, clean)
        }
    };
    Ok(TrialResult {
        cell,
        trial,
        seed,
        train_accuracy,
        clean_accuracy,
        curves,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// A finished sweep plus any `(cell, trial)` jobs that failed.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub result: SweepResult,
    pub failures: Vec<(Cell, usize, String)>,
}

/// Runs every `(cell, trial)` job on the current rayon pool. Failed jobs are
/// reported, not fatal, so completed records survive a partial failure.
pub fn run_sweep(cfg: &SweepConfig, full: &Dataset, opts: &RunOptions) -> Result<SweepOutcome> {
    cfg.validate()?;
    let data = SweepData::prepare(cfg, full)?;
    if let Some(dir) = &opts.cache_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let jobs: Vec<(Cell, usize)> = cells(cfg)
        .into_iter()
        .flat_map(|c| (0..cfg.trials).map(move |t| (c, t)))
        .collect();
    let total = jobs.len();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let outcomes: Vec<_> = jobs
        .par_iter()
        .map(|&(cell, trial)| {
            let out = run_trial(cfg, &data, cell, trial, opts);
            let n = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
            match &out {
                Ok(r) => log::info!(
                    "[{n}/{total}] {} {cell} trial {trial}: train {:.3} clean {:.3} ({:.1}s)",
                    cfg.dataset,
                    r.train_accuracy,
                    r.clean_accuracy,
                    r.wall_time
                ),
                Err(e) => log::error!("[{n}/{total}] {} {cell} trial {trial} failed: {e}", cfg.dataset),
            }
            (cell, trial, out)
        })
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (cell, trial, out) in outcomes {
        match out {
            Ok(r) => records.extend(r.records(cfg)),
            Err(e) => failures.push((cell, trial, e.to_string())),
        }
    }
    Ok(SweepOutcome {
        result: SweepResult::new(records),
        failures,
    })
}

/// Writes one SVG per `(dataset, attack, mode)` into `dir`; returns the paths.
pub fn emit_plots(rows: &[AggregateRow], dir: &Path) -> Result<Vec<PathBuf>> {
    let mut keys: Vec<_> = rows.iter().map(|r| (r.dataset, r.attack, r.mode)).collect();
    keys.sort();
    keys.dedup();
    let mut paths = Vec::new();
    for (dataset, attack, mode) in keys {
        let subset: Vec<AggregateRow> = rows
            .iter()
            .filter(|r| (r.dataset, r.attack, r.mode) == (dataset, attack, mode))
            .cloned()
            .collect();
        let path = dir.join(format!("{dataset}_{attack}.svg"));
        let title = format!("{} under {} ({mode})", dataset.name().to_uppercase(), attack.name().to_uppercase());
        emit_plot(&subset, &title, &path)?;
        paths.push(path);
    }
    Ok(paths)
}
