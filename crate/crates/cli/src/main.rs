use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hybrid_al::output::{read_manifest, write_comparison, write_embeddings, write_run};
use hybrid_al::{
    ablate_dsal, compare, data, make_blobs, run_active_learning, BlobSpec, ComparisonTable,
    DatasetSpec, Error, Result, RunConfig, StrategyKind,
};

#[derive(Parser, Debug)]
#[command(name = "hybrid-al", version, about = "Pool-based active learning experiments")]
struct Cli {
    /// Run configuration (`key = value` lines) or a run manifest (.json).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for all outputs.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Overrides the configuration's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Maximum concurrent runs for compare and ablate (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One active-learning run: writes curve.csv and manifest.json.
    Run,
    /// Several strategies over several seeds on the same dataset.
    Compare {
        /// Comma-separated strategy names.
        #[arg(long, value_delimiter = ',', default_value = "hcd,lchc,dsal,lcd,random,lc-only")]
        strategies: Vec<StrategyKind>,
        #[command(flatten)]
        seeds: Seeds,
    },
    /// DSAL hard-stream ratio sweep.
    Ablate {
        /// Comma-separated ratios in [0, 1].
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
        ratios: Vec<f64>,
        #[command(flatten)]
        seeds: Seeds,
    },
    /// Writes a synthetic Gaussian-blob dataset as CSV.
    MakeData(MakeData),
    /// Runs the configuration and writes the final model's embedding of every
    /// pool sample to embeddings.csv.
    ExportEmbeddings,
}

#[derive(Args, Debug)]
struct Seeds {
    /// Comma-separated master seeds (default: the configuration's seed).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

#[derive(Args, Debug)]
struct MakeData {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    spread: Option<f64>,
    /// Comma-separated class weights summing to 1.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    /// Output file (default: <out-dir>/data.csv).
    #[arg(long)]
    output: Option<PathBuf>,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        None => RunConfig::default(),
        Some(path) if path.extension().is_some_and(|e| e == "json") => {
            read_manifest(path)?.run_config()?
        }
        Some(path) => RunConfig::from_file(path)?,
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn seeds_for(cfg: &RunConfig, seeds: &Seeds) -> Vec<u64> {
    seeds.seeds.clone().unwrap_or_else(|| vec![cfg.master_seed])
}

fn report(table: &ComparisonTable, dir: &Path) -> Result<()> {
    write_comparison(table, dir)?;
    for row in &table.rows {
        println!(
            "{:<12} auc {:.5} +/- {:.5}  final acc {:.4}",
            row.label,
            row.auc_mean,
            row.auc_std,
            row.points.last().map_or(f64::NAN, |p| p.mean_accuracy)
        );
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<()> {
    let out = &cli.out_dir;
    match &cli.command {
        Command::Run => {
            let cfg = load_config(cli)?;
            match run_active_learning(&cfg) {
                Ok(run) => {
                    write_run(&run.curve, &run.manifest, out)?;
                    if let Some(last) = run.curve.points.last() {
                        println!(
                            "{}: {} iterations, {} labeled, test accuracy {:.4}",
                            cfg.strategy.kind, last.iteration, last.labeled_count, last.test_accuracy
                        );
                    }
                    Ok(())
                }
                Err(failure) => {
                    // keep whatever the run recorded before it stopped
                    if !failure.curve.points.is_empty() {
                        write_run(&failure.curve, &failure.manifest, out)?;
                    }
                    Err(failure.error)
                }
            }
        }
        Command::Compare { strategies, seeds } => {
            let base = load_config(cli)?;
            let cfgs: Vec<RunConfig> = strategies
                .iter()
                .map(|&kind| {
                    let mut c = base.clone();
                    c.strategy.kind = kind;
                    c
                })
                .collect();
            let table = compare(&cfgs, &seeds_for(&base, seeds), cli.jobs)?;
            report(&table, out)
        }
        Command::Ablate { ratios, seeds } => {
            let base = load_config(cli)?;
            let table = ablate_dsal(&base, ratios, &seeds_for(&base, seeds), cli.jobs)?;
            report(&table, out)
        }
        Command::MakeData(args) => {
            let base = load_config(cli)?;
            let mut spec = match base.dataset {
                DatasetSpec::Blobs(b) => b,
                DatasetSpec::Csv(_) => BlobSpec::default(),
            };
            if let Some(seed) = cli.seed {
                spec.seed = seed;
            }
            spec.n = args.n.unwrap_or(spec.n);
            spec.d = args.d.unwrap_or(spec.d);
            spec.classes = args.classes.unwrap_or(spec.classes);
            spec.spread = args.spread.unwrap_or(spec.spread);
            if args.weights.is_some() {
                spec.weights = args.weights.clone();
            }
            let path = args.output.clone().unwrap_or_else(|| out.join("data.csv"));
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
            }
            let ds = make_blobs(&spec)?;
            data::write_csv(&ds, &path)?;
            println!("wrote {} samples to {}", ds.len(), path.display());
            Ok(())
        }
        Command::ExportEmbeddings => {
            let cfg = load_config(cli)?;
            let run = run_active_learning(&cfg)?;
            write_run(&run.curve, &run.manifest, out)?;
            write_embeddings(&run, &out.join("embeddings.csv"))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
