//! Flat `key = value` sweep configuration.
//!
//! Blank lines and `#` comments are ignored; lists are comma separated.
//!
//! | key | default |
//! |-----|---------|
//! | `dataset` | `mnist` |
//! | `architectures` | `classical_cnn, classical_fc, qunn` |
//! | `ansatz_list` | all five kinds |
//! | `attack_list` | `fgsm, pgd, mim` |
//! | `epsilons` | `0, 0.01, 0.05, 0.1, 0.3, 0.5, 1, 2, 5, 10` |
//! | `fgsm_epsilons` | `epsilons` plus `15` |
//! | `trials` | `7` |
//! | `base_seed` | `0` |
//! | `mode` | `surrogate` (or `end_to_end`) |
//! | `clamp` | `false`; `true` keeps adversarial pixels in `[0, 1]` |
//! | `n_train`, `n_test` | `50`, `30` |
//! | `train.batch_size`, `train.epochs`, `train.learning_rate`, `train.optimizer` | `4`, `30`, `0.001`, `adam` |
//! | `pgd.steps`, `pgd.step_fraction` | `10`, `0.25` (shared by MIM) |
//! | `mim.decay` | `1` |
//! | `random.depth`, `random.two_qubit_prob`, `random.gate_pool` | `2`, `0.3`, `rx, ry, rz, h, cnot` |
//! | `head.hidden_units`, `head.dropout` | `128`, `0.3` |
//! | `rescale` | `false` |

use std::fmt::Write as _;
use std::str::FromStr;

use crate::ansatz::{AnsatzKind, RandomCircuitSpec};
use crate::attacks::{AttackConfig, AttackKind, GradientMode, StepSize};
use crate::data::DatasetName;
use crate::error::{Error, Result};
use crate::nn::{Architecture, HeadConfig, OptimizerKind, TrainConfig};
use crate::qsim::GateKind;
use crate::seed;

pub const DEFAULT_EPSILONS: [f64; 10] = [0.0, 0.01, 0.05, 0.1, 0.3, 0.5, 1.0, 2.0, 5.0, 10.0];
pub const FGSM_EXTRA_EPSILON: f64 = 15.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub dataset: DatasetName,
    pub architectures: Vec<Architecture>,
    pub ansatzes: Vec<AnsatzKind>,
    pub attacks: Vec<AttackKind>,
    pub epsilons: Vec<f64>,
    pub fgsm_epsilons: Vec<f64>,
    pub trials: usize,
    pub base_seed: u64,
    pub mode: GradientMode,
    pub clamp: bool,
    pub n_train: usize,
    pub n_test: usize,
    /// `seed` is ignored; every trial derives its own.
    pub train: TrainConfig,
    pub pgd_steps: usize,
    pub step_fraction: f64,
    pub mim_decay: f64,
    /// `seed` is ignored; every trial derives its own.
    pub random: RandomCircuitSpec,
    pub head: HeadConfig,
    pub rescale: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let mut fgsm_epsilons = DEFAULT_EPSILONS.to_vec();
        fgsm_epsilons.push(FGSM_EXTRA_EPSILON);
        SweepConfig {
            dataset: DatasetName::Mnist,
            architectures: Architecture::ALL.to_vec(),
            ansatzes: AnsatzKind::ALL.to_vec(),
            attacks: AttackKind::ALL.to_vec(),
            epsilons: DEFAULT_EPSILONS.to_vec(),
            fgsm_epsilons,
            trials: 7,
            base_seed: 0,
            mode: GradientMode::Surrogate,
            clamp: false,
            n_train: 50,
            n_test: 30,
            train: TrainConfig::default(),
            pgd_steps: 10,
            step_fraction: 0.25,
            mim_decay: 1.0,
            random: RandomCircuitSpec::default(),
            head: HeadConfig::default(),
            rescale: false,
        }
    }
}

pub const KEYS: [&str; 26] = [
    "dataset",
    "architectures",
    "ansatz_list",
    "attack_list",
    "epsilons",
    "fgsm_epsilons",
    "trials",
    "base_seed",
    "mode",
    "clamp",
    "n_train",
    "n_test",
    "train.batch_size",
    "train.epochs",
    "train.learning_rate",
    "train.optimizer",
    "pgd.steps",
    "pgd.step_fraction",
    "mim.decay",
    "random.depth",
    "random.two_qubit_prob",
    "random.gate_pool",
    "head.hidden_units",
    "head.dropout",
    "rescale",
    "seed",
];

fn parse_scalar<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value for '{key}': '{value}'")))
}

fn parse_list<T>(key: &str, value: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| f(s).map_err(|e| Error::Config(format!("bad value in '{key}': {e}"))))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean for '{key}': '{value}'"))),
    }
}

fn parse_epsilons(key: &str, value: &str) -> Result<Vec<f64>> {
    parse_list(key, value, |s| {
        s.parse::<f64>()
            .map_err(|_| Error::invalid(format!("'{s}' is not a number")))
    })
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

impl SweepConfig {
    /// Parses config text on top of the defaults. Unknown keys, repeated keys
    /// and malformed lines are configuration errors naming the offender.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = SweepConfig::default();
        let mut seen = Vec::new();
        let mut fgsm_set = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got '{line}'", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.contains(&key) {
                return Err(Error::Config(format!("key '{key}' given twice")));
            }
            seen.push(key);
            if key == "fgsm_epsilons" {
                fgsm_set = true;
            }
            cfg.set(key, value)?;
        }
        if !fgsm_set && seen.contains(&"epsilons") {
            cfg.fgsm_epsilons = cfg.epsilons.clone();
            if cfg.epsilons.last().is_some_and(|&e| e < FGSM_EXTRA_EPSILON) {
                cfg.fgsm_epsilons.push(FGSM_EXTRA_EPSILON);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let cfg_err = |e: Error| Error::Config(format!("bad value for '{key}': {e}"));
        match key {
            "dataset" => self.dataset = value.parse().map_err(cfg_err)?,
            "architectures" => self.architectures = parse_list(key, value, str::parse)?,
            "ansatz_list" => self.ansatzes = parse_list(key, value, str::parse)?,
            "attack_list" => self.attacks = parse_list(key, value, str::parse)?,
            "epsilons" => self.epsilons = parse_epsilons(key, value)?,
            "fgsm_epsilons" => self.fgsm_epsilons = parse_epsilons(key, value)?,
            "trials" => self.trials = parse_scalar(key, value)?,
            "base_seed" | "seed" => self.base_seed = parse_scalar(key, value)?,
            "mode" => self.mode = value.parse().map_err(cfg_err)?,
            "clamp" => self.clamp = parse_bool(key, value)?,
            "n_train" => self.n_train = parse_scalar(key, value)?,
            "n_test" => self.n_test = parse_scalar(key, value)?,
            "train.batch_size" => self.train.batch_size = parse_scalar(key, value)?,
            "train.epochs" => self.train.epochs = parse_scalar(key, value)?,
            "train.learning_rate" => self.train.learning_rate = parse_scalar(key, value)?,
            "train.optimizer" => self.train.optimizer = value.parse::<OptimizerKind>().map_err(cfg_err)?,
            "pgd.steps" => self.pgd_steps = parse_scalar(key, value)?,
            "pgd.step_fraction" => self.step_fraction = parse_scalar(key, value)?,
            "mim.decay" => self.mim_decay = parse_scalar(key, value)?,
            "random.depth" => self.random.depth = parse_scalar(key, value)?,
            "random.two_qubit_prob" => self.random.two_qubit_prob = parse_scalar(key, value)?,
            "random.gate_pool" => {
                self.random.gate_pool = parse_list(key, value, |s| s.parse::<GateKind>())?
            }
            "head.hidden_units" => self.head.hidden_units = parse_scalar(key, value)?,
            "head.dropout" => self.head.dropout = parse_scalar(key, value)?,
            "rescale" => self.rescale = parse_bool(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        for (name, grid) in [("epsilons", &self.epsilons), ("fgsm_epsilons", &self.fgsm_epsilons)] {
            if grid.first() != Some(&0.0) {
                return bad(format!("{name} must start at 0"));
            }
            if grid.iter().any(|e| !e.is_finite()) || grid.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("{name} must be finite and strictly ascending"));
            }
        }
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if self.architectures.is_empty() || self.attacks.is_empty() {
            return bad("architectures and attack_list must be non-empty".into());
        }
        if self.architectures.contains(&Architecture::QunnHead) && self.ansatzes.is_empty() {
            return bad("ansatz_list must be non-empty when qunn is swept".into());
        }
        if self.n_train == 0 || self.n_test == 0 {
            return bad("n_train and n_test must be >= 1".into());
        }
        if self.train.batch_size == 0 || self.train.epochs == 0 {
            return bad("train.batch_size and train.epochs must be >= 1".into());
        }
        if !(self.train.learning_rate >= 0.0) {
            return bad("train.learning_rate must be >= 0".into());
        }
        if !(0.0..1.0).contains(&self.head.dropout) {
            return bad("head.dropout must lie in [0, 1)".into());
        }
        if self.head.hidden_units == 0 {
            return bad("head.hidden_units must be >= 1".into());
        }
        self.random.validate().map_err(|e| Error::Config(e.to_string()))?;
        for attack in &self.attacks {
            self.attack_config(*attack, 1.0).validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn grid(&self, attack: AttackKind) -> &[f64] {
        match attack {
            AttackKind::Fgsm => &self.fgsm_epsilons,
            _ => &self.epsilons,
        }
    }

    pub fn attack_config(&self, kind: AttackKind, epsilon: f64) -> AttackConfig {
        AttackConfig {
            kind,
            epsilon,
            steps: self.pgd_steps,
            step_size: StepSize::Relative(self.step_fraction),
            decay: self.mim_decay,
            clamp: self.clamp.then_some((0.0, 1.0)),
        }
    }

    /// Seed of the fixed train/test subset shared by every trial.
    pub fn subset_seed(&self) -> u64 {
        seed::derive(self.base_seed, "subset")
    }

    /// Canonical text with every key spelled out; `parse(to_text())` restores
    /// the config exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("dataset", self.dataset.to_string());
        line("architectures", join(&self.architectures));
        line("ansatz_list", join(&self.ansatzes));
        line("attack_list", join(&self.attacks));
        line("epsilons", join(&self.epsilons));
        line("fgsm_epsilons", join(&self.fgsm_epsilons));
        line("trials", self.trials.to_string());
        line("base_seed", self.base_seed.to_string());
        line("mode", self.mode.to_string());
        line("clamp", self.clamp.to_string());
        line("n_train", self.n_train.to_string());
        line("n_test", self.n_test.to_string());
        line("train.batch_size", self.train.batch_size.to_string());
        line("train.epochs", self.train.epochs.to_string());
        line("train.learning_rate", self.train.learning_rate.to_string());
        line("train.optimizer", self.train.optimizer.to_string());
        line("pgd.steps", self.pgd_steps.to_string());
        line("pgd.step_fraction", self.step_fraction.to_string());
        line("mim.decay", self.mim_decay.to_string());
        line("random.depth", self.random.depth.to_string());
        line("random.two_qubit_prob", self.random.two_qubit_prob.to_string());
        line("random.gate_pool", join(&self.random.gate_pool));
        line("head.hidden_units", self.head.hidden_units.to_string());
        line("head.dropout", self.head.dropout.to_string());
        line("rescale", self.rescale.to_string());
        s
    }

    pub fn fingerprint(&self) -> u64 {
        seed::hash64(self.to_text().as_bytes())
    }
}
