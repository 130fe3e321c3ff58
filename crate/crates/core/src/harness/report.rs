//! Sweep records, trial aggregation and the CSV format.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::ansatz::AnsatzKind;
use crate::attacks::{AttackKind, GradientMode};
use crate::data::DatasetName;
use crate::error::{Error, FormatError, Result};
use crate::nn::Architecture;

pub const CSV_HEADER: [&str; 8] = [
    "dataset",
    "architecture",
    "ansatz",
    "attack",
    "mode",
    "epsilon",
    "trial",
    "accuracy",
];

/// One evaluated `(cell, attack, ε, trial)` point.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub dataset: DatasetName,
    pub architecture: Architecture,
    /// `None` for the classical models.
    pub ansatz: Option<AnsatzKind>,
    pub attack: AttackKind,
    pub mode: GradientMode,
    pub epsilon: f64,
    pub trial: usize,
    pub accuracy: f64,
    pub clean_accuracy: f64,
    pub train_accuracy: f64,
    /// Seconds spent on the whole trial the record belongs to.
    pub wall_time: f64,
}

pub fn ansatz_label(ansatz: Option<AnsatzKind>) -> &'static str {
    ansatz.map_or("none", AnsatzKind::name)
}

/// Series label used in plots and summaries, e.g. `qunn/zz_full`.
pub fn series_label(architecture: Architecture, ansatz: Option<AnsatzKind>) -> String {
    match ansatz {
        Some(a) => format!("{architecture}/{a}"),
        None => architecture.to_string(),
    }
}

type CellKey = (DatasetName, Architecture, Option<AnsatzKind>, AttackKind, GradientMode);

impl Record {
    fn cell(&self) -> CellKey {
        (self.dataset, self.architecture, self.ansatz, self.attack, self.mode)
    }

    fn order(&self, other: &Record) -> Ordering {
        self.cell()
            .cmp(&other.cell())
            .then(self.epsilon.total_cmp(&other.epsilon))
            .then(self.trial.cmp(&other.trial))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepResult {
    pub records: Vec<Record>,
}

impl SweepResult {
    pub fn new(mut records: Vec<Record>) -> Self {
        records.sort_by(Record::order);
        SweepResult { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Mean and sample standard deviation of one `(cell, attack, ε)` over trials.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub dataset: DatasetName,
    pub architecture: Architecture,
    pub ansatz: Option<AnsatzKind>,
    pub attack: AttackKind,
    pub mode: GradientMode,
    pub epsilon: f64,
    pub trials: usize,
    pub mean: f64,
    /// `n − 1` denominator; zero for a single trial.
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Groups records by `(cell, attack, ε)`. Every group must hold the same set
/// of trial indices, each once; otherwise some point is missing and the
/// result is rejected.
pub fn aggregate(result: &SweepResult) -> Result<Vec<AggregateRow>> {
    if result.is_empty() {
        return Err(Error::invalid("nothing to aggregate"));
    }
    let mut groups: BTreeMap<(CellKey, u64), Vec<&Record>> = BTreeMap::new();
    for r in &result.records {
        groups.entry((r.cell(), r.epsilon.to_bits())).or_default().push(r);
    }
    let mut all_trials: Vec<usize> = result.records.iter().map(|r| r.trial).collect();
    all_trials.sort_unstable();
    all_trials.dedup();

    let mut rows = Vec::with_capacity(groups.len());
    for ((cell, eps_bits), members) in &groups {
        let mut trials: Vec<usize> = members.iter().map(|r| r.trial).collect();
        trials.sort_unstable();
        if trials != all_trials {
            return Err(Error::invalid(format!(
                "{} {} eps={}: trials {:?}, expected {:?}",
                series_label(cell.1, cell.2),
                cell.3,
                f64::from_bits(*eps_bits),
                trials,
                all_trials
            )));
        }
        let accs: Vec<f64> = members.iter().map(|r| r.accuracy).collect();
        let (mean, std) = mean_std(&accs);
        rows.push(AggregateRow {
            dataset: cell.0,
            architecture: cell.1,
            ansatz: cell.2,
            attack: cell.3,
            mode: cell.4,
            epsilon: f64::from_bits(*eps_bits),
            trials: accs.len(),
            mean,
            std,
        });
    }
    rows.sort_by(|a, b| {
        (a.dataset, a.architecture, a.ansatz, a.attack, a.mode)
            .cmp(&(b.dataset, b.architecture, b.ansatz, b.attack, b.mode))
            .then(a.epsilon.total_cmp(&b.epsilon))
    });
    Ok(rows)
}

/// Writes the sorted records with the fixed eight-column header.
pub fn emit_csv(result: &SweepResult, path: &Path) -> Result<()> {
    fs::write(path, csv_string(result)?).map_err(|e| Error::io(path, e))
}

pub fn csv_string(result: &SweepResult) -> Result<String> {
    let mut records = result.records.clone();
    records.sort_by(Record::order);
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::invalid(format!("csv encoding failed: {e}"));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in &records {
        w.write_record([
            r.dataset.to_string(),
            r.architecture.to_string(),
            ansatz_label(r.ansatz).to_string(),
            r.attack.to_string(),
            r.mode.to_string(),
            r.epsilon.to_string(),
            r.trial.to_string(),
            r.accuracy.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv encoding failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is ascii"))
}

/// Reads a CSV produced by [`emit_csv`]. Columns not in the CSV
/// (`clean_accuracy`, `train_accuracy`, `wall_time`) come back as NaN.
pub fn parse_csv(path: &Path) -> Result<SweepResult> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv_str(&text).map_err(|msg| Error::format(path, FormatError::Malformed(msg)))
}

fn parse_csv_str(text: &str) -> std::result::Result<SweepResult, String> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| e.to_string())?;
    if header.iter().ne(CSV_HEADER) {
        return Err(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()));
    }
    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| e.to_string())?;
        let field = |j: usize| row.get(j).unwrap_or("");
        let bad = |what: &str| format!("row {}: bad {what} '{}'", i + 1, row.iter().collect::<Vec<_>>().join(","));
        let ansatz = match field(2) {
            "none" => None,
            s => Some(s.parse().map_err(|_| bad("ansatz"))?),
        };
        records.push(Record {
            dataset: field(0).parse().map_err(|_| bad("dataset"))?,
            architecture: field(1).parse().map_err(|_| bad("architecture"))?,
            ansatz,
            attack: field(3).parse().map_err(|_| bad("attack"))?,
            mode: field(4).parse().map_err(|_| bad("mode"))?,
            epsilon: field(5).parse().map_err(|_| bad("epsilon"))?,
            trial: field(6).parse().map_err(|_| bad("trial"))?,
            accuracy: field(7).parse().map_err(|_| bad("accuracy"))?,
            clean_accuracy: f64::NAN,
            train_accuracy: f64::NAN,
            wall_time: f64::NAN,
        });
    }
    Ok(SweepResult::new(records))
}
