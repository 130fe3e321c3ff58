use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use quanvbench::ansatz::{self, AnsatzKind, RandomCircuitSpec};
use quanvbench::data::{self, DatasetName};
use quanvbench::harness::{self, RunOptions, SweepConfig};
use quanvbench::quanv::{self, QuanvConfig};
use quanvbench::{seed, verify};

/// Quanvolutional networks under adversarial attack.
#[derive(Parser, Debug)]
#[command(name = "quanvbench", version)]
struct Cli {
    /// Worker threads for the sweep pool (default: all cores).
    #[arg(long, global = true, env = "QUANVBENCH_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Quanvolve a stratified train/test subset into a QNVF cache file.
    Quanvolve(QuanvolveArgs),
    /// Run a robustness sweep and write CSV, SVG plots and a manifest.
    Sweep(SweepArgs),
    /// Run the oracle self-checks.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct QuanvolveArgs {
    /// Directory holding `<dataset>/train-{images-idx3,labels-idx1}-ubyte[.gz]`.
    #[arg(long, default_value = "data")]
    dataset_dir: PathBuf,
    #[arg(long, default_value = "mnist")]
    dataset: String,
    #[arg(long, default_value = "zz_full")]
    ansatz: String,
    /// Seeds both the subset draw and the filter circuit.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    n_train: usize,
    #[arg(long, default_value_t = 30)]
    n_test: usize,
    /// Output QNVF file (train maps followed by test maps).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Flat key = value config file; omitted keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "data")]
    dataset_dir: PathBuf,
    /// Overrides `base_seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Recompute quanvolved features instead of using `<out>/cache`.
    #[arg(long)]
    no_cache: bool,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Exit status classes: usage/config problems exit 2, everything else 1.
enum Failure {
    Usage(anyhow::Error),
    Internal(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Internal(e)
    }
}

trait UsageExt<T> {
    fn usage(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> UsageExt<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }
}

fn load_dataset(dir: &Path, name: DatasetName) -> Result<data::Dataset, Failure> {
    data::load_from_dir(dir, name)
        .with_context(|| format!("loading {name} from {}", dir.display()))
        .usage()
}

fn cmd_quanvolve(args: &QuanvolveArgs) -> Result<(), Failure> {
    let name: DatasetName = args.dataset.parse().usage()?;
    let kind: AnsatzKind = args.ansatz.parse().usage()?;
    let full = load_dataset(&args.dataset_dir, name)?;
    let (train, test) = data::subset(&full, args.n_train, args.n_test, seed::derive(args.seed, "subset")).usage()?;
    let circuit = ansatz::instantiate(kind, 4, seed::derive(args.seed, "ansatz"), &RandomCircuitSpec::default())
        .context("building filter circuit")?;
    let cfg = QuanvConfig::new(circuit).context("configuring quanvolution")?;
    let images: Vec<_> = train.images.iter().chain(&test.images).cloned().collect();
    let maps = harness::quanvolve_f32(&images, &cfg).context("quanvolving")?;
    let key = seed::hash64(
        format!("{:016x}|{kind}|{}|{:016x}", train.fingerprint() ^ test.fingerprint(), args.seed, cfg.fingerprint()).as_bytes(),
    );
    quanv::write_qnvf(&args.out, &maps, key).with_context(|| format!("writing {}", args.out.display()))?;
    let (lo, hi) = maps
        .iter()
        .map(|m| m.min_max())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (c, d)| (a.min(c), b.max(d)));
    let (h, w, c) = maps.first().map(|m| m.dims()).unwrap_or((0, 0, 0));
    println!(
        "{}: {} maps ({} train + {} test) of {h}x{w}x{c}, values in [{lo:.4}, {hi:.4}], key {key:016x}",
        args.out.display(),
        maps.len(),
        train.len(),
        test.len()
    );
    Ok(())
}

fn write_manifest(dir: &Path, cfg: &SweepConfig, status: &str, notes: &[String]) -> anyhow::Result<()> {
    let mut text = format!(
        "tool = quanvbench {}\nconfig_hash = {:016x}\nstatus = {status}\n",
        env!("CARGO_PKG_VERSION"),
        cfg.fingerprint()
    );
    for n in notes {
        text.push_str(&format!("failure = {n}\n"));
    }
    text.push_str("\n[config]\n");
    text.push_str(&cfg.to_text());
    let path = dir.join("manifest.txt");
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_trials(path: &Path, outcome: &harness::SweepOutcome) -> anyhow::Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = String::from("architecture,ansatz,trial,train_accuracy,clean_accuracy,wall_time\n");
    for r in &outcome.result.records {
        if seen.insert((r.architecture, r.ansatz, r.trial)) {
            out.push_str(&format!(
                "{},{},{},{},{},{:.3}\n",
                r.architecture,
                harness::ansatz_label(r.ansatz),
                r.trial,
                r.train_accuracy,
                r.clean_accuracy,
                r.wall_time
            ));
        }
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

fn write_summary(path: &Path, rows: &[harness::AggregateRow]) -> anyhow::Result<()> {
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    writeln!(f, "dataset,architecture,ansatz,attack,mode,epsilon,trials,mean,std")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{}",
            r.dataset,
            r.architecture,
            harness::ansatz_label(r.ansatz),
            r.attack,
            r.mode,
            r.epsilon,
            r.trials,
            r.mean,
            r.std
        )?;
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))
                .usage()?;
            SweepConfig::parse(&text)
                .with_context(|| format!("in {}", path.display()))
                .usage()?
        }
        None => SweepConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.base_seed = s;
    }
    let full = load_dataset(&args.dataset_dir, cfg.dataset)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let opts = RunOptions {
        cache_dir: (!args.no_cache).then(|| args.out.join("cache")),
    };
    log::info!(
        "{} sweep: {} cells x {} trials, mode {}, clamp {}",
        cfg.dataset,
        harness::cells(&cfg).len(),
        cfg.trials,
        cfg.mode,
        cfg.clamp
    );
    let outcome = match harness::run_sweep(&cfg, &full, &opts) {
        Ok(o) => o,
        Err(e) => {
            write_manifest(&args.out, &cfg, "FAILED", &[e.to_string()])?;
            return Err(Failure::Internal(anyhow!(e).context("sweep failed")));
        }
    };
    harness::emit_csv(&outcome.result, &args.out.join("results.csv")).context("writing results.csv")?;
    write_trials(&args.out.join("trials.csv"), &outcome)?;
    if !outcome.failures.is_empty() {
        let notes: Vec<String> = outcome
            .failures
            .iter()
            .map(|(cell, trial, err)| format!("{cell} trial {trial}: {err}"))
            .collect();
        write_manifest(&args.out, &cfg, "FAILED", &notes)?;
        return Err(Failure::Internal(anyhow!(
            "{} of {} jobs failed; partial results kept in {}",
            notes.len(),
            harness::cells(&cfg).len() * cfg.trials,
            args.out.display()
        )));
    }
    let rows = harness::aggregate(&outcome.result).context("aggregating trials")?;
    write_summary(&args.out.join("summary.csv"), &rows)?;
    let plots = harness::emit_plots(&rows, &args.out).context("writing plots")?;
    write_manifest(&args.out, &cfg, "ok", &[])?;
    println!(
        "{} records, {} plots, manifest hash {:016x} -> {}",
        outcome.result.len(),
        plots.len(),
        cfg.fingerprint(),
        args.out.display()
    );
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> Result<(), Failure> {
    let checks = verify::run_all(args.seed);
    let failed = checks.iter().filter(|c| !c.passed).count();
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if failed > 0 {
        return Err(Failure::Internal(anyhow!("{failed} of {} checks failed", checks.len())));
    }
    println!("all {} checks passed", checks.len());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage(anyhow!("--threads must be >= 1")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("starting thread pool")?;
    }
    match &cli.command {
        Command::Quanvolve(a) => cmd_quanvolve(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Verify(a) => cmd_verify(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
