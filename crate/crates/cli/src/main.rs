//! `colupi`: generate data, split it across sites, run collaborative
//! clustering, rank methods and inspect run artifacts.
//!
//! Exit codes: 0 on success, 1 on runtime errors, 2 on usage errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use colupi::data::{
    self, confidence_file, load_csv, load_score_table, read_run_report, split_vertical, standardize, write_csv,
    write_run_report, ColumnRef, CsvOptions, SplitSpec, SplitStrategy, SyntheticSpec,
};
use colupi::stats::{critical_diagram_data, friedman_statistic, nemenyi_cd, RankedMethod};
use colupi::{ColupiError, DataMatrix, DiagonalGmm, RunConfig, SweepMode, Variant};

#[derive(Debug, Parser)]
#[command(name = "colupi", version, about = "Entropy-weighted collaborative clustering over vertically split data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a labeled Gaussian mixture with uniform background noise.
    Generate(GenerateArgs),
    /// Split the features of a CSV across sites, one CSV per site.
    Split(SplitArgs),
    /// Local clustering on every site followed by collaboration rounds.
    Run(RunArgs),
    /// Friedman test and Nemenyi critical difference over a score table.
    EvalRanks(EvalRanksArgs),
    /// Print the confidence matrices and acceptance timeline of a run.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Contiguous,
    RoundRobin,
    SeededRandom,
}

impl From<SplitArg> for SplitStrategy {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Contiguous => SplitStrategy::Contiguous,
            SplitArg::RoundRobin => SplitStrategy::RoundRobin,
            SplitArg::SeededRandom => SplitStrategy::SeededRandom,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    Colupi,
    Rcolupi,
}

/// How to read an input CSV.
#[derive(Debug, Args)]
struct CsvArgs {
    /// Treat the first row as data instead of column names.
    #[arg(long)]
    no_header: bool,
    /// Column (name or 0-based index) with ground-truth labels, excluded from
    /// the features and used only to report the adjusted Rand index.
    #[arg(long)]
    label_column: Option<String>,
    /// Column (name or 0-based index) to drop, e.g. a row id. Repeatable.
    #[arg(long = "ignore-column")]
    ignore_columns: Vec<String>,
}

impl CsvArgs {
    fn options(&self) -> CsvOptions {
        CsvOptions {
            has_header: !self.no_header,
            label_column: self.label_column.as_deref().map(ColumnRef::parse),
            ignore_columns: self.ignore_columns.iter().map(|c| ColumnRef::parse(c)).collect(),
        }
    }
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// JSON mixture description (the fields below); overrides the flags.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    n_points: usize,
    #[arg(long, default_value_t = 4)]
    n_gaussians: usize,
    #[arg(long, default_value_t = 0.2)]
    noise_fraction: f64,
    #[arg(long, default_value_t = 6)]
    dims: usize,
    #[arg(long, default_value_t = 6.0)]
    separation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; the last column holds the component label.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    csv: CsvArgs,
    #[arg(long, value_parser = parse_sites)]
    sites: usize,
    #[arg(long, value_enum, default_value = "contiguous")]
    split: SplitArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving site_<p>.csv files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["data", "synthetic"]))]
struct RunArgs {
    /// Input CSV with all features; split across sites by --split.
    #[arg(long)]
    data: Option<PathBuf>,
    /// JSON mixture description, as for `generate --spec`; its seed defaults to --seed.
    #[arg(long)]
    synthetic: Option<PathBuf>,
    #[command(flatten)]
    csv: CsvArgs,
    /// Number of sites P (at least 2).
    #[arg(long, value_parser = parse_sites)]
    sites: usize,
    /// Number of clusters K per site.
    #[arg(long, default_value_t = 2)]
    clusters: usize,
    #[arg(long, value_enum, default_value = "colupi")]
    variant: VariantArg,
    /// Randomized candidates per site and round for rcolupi.
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    max_rounds: usize,
    #[arg(long, value_enum, default_value = "contiguous")]
    split: SplitArg,
    /// Sites update one after another within a round instead of from a
    /// shared snapshot.
    #[arg(long)]
    sequential: bool,
    /// Skip per-feature standardization.
    #[arg(long)]
    no_standardize: bool,
    /// Worker threads for the collaboration rounds (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Directory receiving report.json and the CSV artifacts.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalRanksArgs {
    /// CSV with dataset names in the header and one method per row; lower
    /// scores are better. Datasets with missing cells are skipped.
    #[arg(long)]
    scores: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Debug, Args)]
struct InspectArgs {
    /// Run output directory.
    #[arg(long)]
    report: PathBuf,
}

/// Mixture description as read from disk: the seed may be left to the command line.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SyntheticSpecFile {
    n_points: usize,
    n_gaussians: usize,
    noise_fraction: f64,
    dims: usize,
    separation: f64,
    seed: Option<u64>,
}

impl SyntheticSpecFile {
    fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError(format!("{}: {e}", path.display())))
    }

    fn resolve(self, default_seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n_points: self.n_points,
            n_gaussians: self.n_gaussians,
            noise_fraction: self.noise_fraction,
            dims: self.dims,
            separation: self.separation,
            seed: self.seed.unwrap_or(default_seed),
        }
    }
}

fn parse_sites(s: &str) -> Result<usize, String> {
    let p: usize = s.parse().map_err(|_| format!("{s:?} is not a site count"))?;
    if p < 2 {
        return Err(format!("collaboration needs P >= 2 sites, got {p}"));
    }
    Ok(p)
}

#[derive(Debug)]
struct CliError(String);

impl From<ColupiError> for CliError {
    fn from(e: ColupiError) -> Self {
        CliError(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("COLUPI_LOG", "error")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Split(a) => cmd_split(a),
        Command::Run(a) => cmd_run(a),
        Command::EvalRanks(a) => cmd_eval_ranks(a),
        Command::Inspect(a) => cmd_inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn cmd_generate(a: GenerateArgs) -> Result<(), CliError> {
    let spec = match &a.spec {
        Some(path) => SyntheticSpecFile::read(path)?.resolve(a.seed),
        None => SyntheticSpec {
            n_points: a.n_points,
            n_gaussians: a.n_gaussians,
            noise_fraction: a.noise_fraction,
            dims: a.dims,
            separation: a.separation,
            seed: a.seed,
        },
    };
    let sample = data::generate_mixture(&spec)?;
    write_csv(&a.out, &sample.data, Some(&sample.labels))?;
    println!(
        "wrote {} points x {} features to {}",
        sample.data.n_obs(),
        sample.data.n_features(),
        a.out.display()
    );
    Ok(())
}

fn cmd_split(a: SplitArgs) -> Result<(), CliError> {
    let (data, labels) = load_csv(&a.data, &a.csv.options())?;
    let spec = SplitSpec {
        sites: a.sites,
        strategy: a.split.into(),
    };
    let slices = split_vertical(&data, &spec, a.seed)?;
    fs::create_dir_all(&a.out).map_err(|e| CliError(format!("{}: {e}", a.out.display())))?;
    let label_ids = labels.map(|l| l.ids);
    for (p, slice) in slices.iter().enumerate() {
        let path = a.out.join(format!("site_{p}.csv"));
        write_csv(&path, slice, label_ids.as_deref())?;
        println!("site {p}: {} features -> {}", slice.n_features(), path.display());
    }
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<(), CliError> {
    if let Some(threads) = a.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global()
            .map_err(|e| CliError(e.to_string()))?;
    }

    let (data, labels): (DataMatrix, Option<Vec<usize>>) = match (&a.data, &a.synthetic) {
        (Some(path), _) => {
            let (d, l) = load_csv(path, &a.csv.options())?;
            (d, l.map(|l| l.ids))
        }
        (None, Some(path)) => {
            let sample = data::generate_mixture(&SyntheticSpecFile::read(path)?.resolve(a.seed))?;
            (sample.data, Some(sample.labels))
        }
        (None, None) => return Err(CliError("no data source: pass --data or --synthetic".into())),
    };

    let spec = SplitSpec {
        sites: a.sites,
        strategy: a.split.into(),
    };
    let mut slices = split_vertical(&data, &spec, a.seed)?;
    if !a.no_standardize {
        slices = slices.iter().map(standardize).collect();
    }

    let cfg = RunConfig {
        k: a.clusters,
        max_rounds: a.max_rounds,
        seed: a.seed,
        variant: match a.variant {
            VariantArg::Colupi => Variant::Colupi,
            VariantArg::Rcolupi => Variant::Rcolupi,
        },
        rcolupi_restarts: a.restarts,
        sweep: if a.sequential {
            SweepMode::Sequential
        } else {
            SweepMode::Synchronous
        },
        ..RunConfig::default()
    };
    let mut report = colupi::run(&DiagonalGmm, slices, &cfg)?;
    if let Some(l) = &labels {
        report.score_against(l)?;
    }
    write_run_report(&report, &a.out)?;

    print_acceptance_table(&report);
    println!(
        "mean Davies-Bouldin: local {:.6} -> final {:.6} ({:?})",
        report.mean_local_quality(),
        report.mean_final_quality(),
        report.terminated_reason
    );
    if let Some(gt) = &report.ground_truth {
        println!("mean ARI: local {:.4} -> final {:.4}", mean(&gt.local_ari), mean(&gt.final_ari));
    }
    println!("artifacts written to {}", a.out.display());
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn print_acceptance_table(report: &colupi::RunReport) {
    let p = report.n_sites();
    print!("{:>5}", "round");
    for s in 0..p {
        print!(" {:>12}", format!("site_{s}"));
    }
    println!(" {:>8}", "accepted");
    print!("{:>5}", 0);
    for q in &report.local_step_qualities {
        print!(" {:>12}", fmt_quality(*q));
    }
    println!(" {:>8}", "-");
    for round in &report.rounds {
        print!("{:>5}", round.round);
        for s in &round.per_site {
            let mark = if s.accepted { '+' } else { ' ' };
            print!(" {:>11}{mark}", fmt_quality(s.post_quality));
        }
        println!(" {:>8}", format!("{}/{p}", round.acceptances()));
    }
}

fn fmt_quality(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        "degenerate".into()
    }
}

#[derive(Serialize)]
struct RankOutput {
    methods: Vec<RankedMethod>,
    datasets: Vec<String>,
    excluded_datasets: Vec<String>,
    chi2: f64,
    p_value: f64,
    degrees_of_freedom: usize,
    alpha: f64,
    critical_difference: f64,
    groups: Vec<Vec<String>>,
}

fn cmd_eval_ranks(a: EvalRanksArgs) -> Result<(), CliError> {
    let (table, excluded) = load_score_table(&a.scores)?;
    let friedman = friedman_statistic(&table)?;
    let cd = nemenyi_cd(table.n_methods(), table.n_datasets(), a.alpha)?;
    let diagram = critical_diagram_data(&table, cd);
    let out = RankOutput {
        groups: diagram.group_names(),
        methods: diagram.methods,
        datasets: table.datasets().to_vec(),
        excluded_datasets: excluded,
        chi2: friedman.chi2,
        p_value: friedman.p_value,
        degrees_of_freedom: friedman.degrees_of_freedom,
        alpha: a.alpha,
        critical_difference: cd,
    };
    let json = serde_json::to_string_pretty(&out).map_err(|e| CliError(e.to_string()))?;
    println!("{json}");
    Ok(())
}

fn cmd_inspect(a: InspectArgs) -> Result<(), CliError> {
    let file = read_run_report(&a.report)?;
    let report = &file.report;
    let p = report.n_sites();
    println!(
        "{} run: {} sites, K = {}, N = {}, {} rounds ({:?})",
        report.config.variant,
        p,
        report.config.k,
        report.n_obs,
        report.rounds.len(),
        report.terminated_reason
    );
    for round in &report.rounds {
        println!();
        println!("confidence matrix, round {} ({})", round.round, confidence_file(round.round));
        print!("{:>8}", "");
        for q in 0..p {
            print!(" {:>9}", format!("site_{q}"));
        }
        println!();
        for (row_site, row) in round.confidence.weights.iter().enumerate() {
            print!("{:>8}", format!("site_{row_site}"));
            for v in row {
                print!(" {v:>9.4}");
            }
            println!();
        }
    }
    println!();
    println!("acceptance timeline (+ accepted, . rejected)");
    for s in 0..p {
        let marks: String = report
            .rounds
            .iter()
            .map(|r| if r.per_site[s].accepted { '+' } else { '.' })
            .collect();
        println!(
            "  site_{s}: {marks:<w$}  DB {} -> {}",
            fmt_quality(report.local_step_qualities[s]),
            fmt_quality(report.final_qualities[s]),
            w = report.rounds.len()
        );
    }
    Ok(())
}
