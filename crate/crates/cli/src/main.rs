//! `gala` command line: generate synthetic scenarios, run one-shot selection
//! over external feature files, run full experiments and ablation sweeps,
//! and summarize report files.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use gala_core::data::LabeledPool;
use gala_core::datagen::generate;
use gala_core::embedding::{gradient_embedding, EmbeddingBundle};
use gala_core::error::Error;
use gala_core::harness::{
    ablation_report, aggregation_sweep, alpha_sweep, distance_sweep, paired_wins,
    parse_reports_jsonl, run_experiment, summarize, write_report_files, AblationReport,
    ExperimentSpec, RoundReport, ScenarioSource, Strategy, SweepRow,
};
use gala_core::io::{
    atomic_write, read_checkpoint, read_features_csv, read_probabilities_csv,
    write_answer_key_csv, write_features_csv,
};
use gala_core::selection::{select_round, select_round_with_bundles};

use config::{resolve, FileConfig, Overrides, ResolvedConfig};

#[derive(Parser)]
#[command(name = "gala", version, about = "Global-local active sample selection for multi-source domain adaptation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario: features CSV plus answer-key CSV.
    Gen {
        /// `key = value` config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for features.csv and answers.csv.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run one selection round over an external feature file.
    Select {
        /// Feature CSV (`id,domain,label,f0,…`).
        #[arg(long)]
        features: PathBuf,
        /// Model checkpoint JSON (mutually exclusive with --probs).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Per-sample probabilities CSV (`id,p0,…`), covering every row.
        #[arg(long)]
        probs: Option<PathBuf>,
        /// Write the selection JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the full experiment grid and write reports.jsonl + summary.csv.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for the report files.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run ablation sweeps (alpha, distance, aggregation) and report the
    /// comparison tables plus ordering flags.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Which sweep to run.
        #[arg(long, value_enum, default_value_t = SweepKind::All)]
        what: SweepKind,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Summarize one or more reports.jsonl files.
    Report {
        /// Report files to merge.
        files: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepKind {
    Alpha,
    Distance,
    Aggregation,
    All,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err);
            ExitCode::from(exit_class(&err))
        }
    }
}

/// Exit codes: 1 runtime, 2 configuration, 3 I/O.
fn exit_class(err: &Error) -> u8 {
    match err {
        Error::BadConfig(_) | Error::InsufficientBudgetableSamples { .. } => 2,
        Error::Io(_) => 3,
        _ => 1,
    }
}

/// Cap harness parallelism with the GALA_THREADS environment variable.
fn with_thread_cap<T: Send>(f: impl FnOnce() -> Result<T, Error> + Send) -> Result<T, Error> {
    match std::env::var("GALA_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        Some(n) if n >= 1 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::BadConfig(format!("thread pool: {}", e)))?
            .install(f),
        _ => f(),
    }
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Gen {
            config,
            out,
            overrides,
        } => cmd_gen(config.as_deref(), &out, &overrides),
        Command::Select {
            features,
            model,
            probs,
            out,
            config,
            overrides,
        } => cmd_select(
            &features,
            model.as_deref(),
            probs.as_deref(),
            out.as_deref(),
            config.as_deref(),
            &overrides,
        ),
        Command::Run {
            config,
            out,
            overrides,
        } => cmd_run(config.as_deref(), &out, &overrides),
        Command::Sweep {
            config,
            out,
            what,
            overrides,
        } => cmd_sweep(config.as_deref(), &out, what, &overrides),
        Command::Report { files } => cmd_report(&files),
    }
}

fn load(config: Option<&Path>, overrides: &Overrides) -> Result<ResolvedConfig, Error> {
    let file = FileConfig::load(config)?;
    resolve(&file, overrides)
}

fn cmd_gen(config: Option<&Path>, out: &Path, overrides: &Overrides) -> Result<(), Error> {
    let cfg = load(config, overrides)?;
    let (ds, key) = generate(&cfg.scenario)?;
    let ids: Vec<u64> = (0..ds.n_samples() as u64).collect();
    let features_path = out.join("features.csv");
    let answers_path = out.join("answers.csv");
    write_features_csv(&ds, &ids, &features_path)?;
    let key_ext = key.iter().map(|(&row, &label)| (row as u64, label)).collect();
    write_answer_key_csv(&key_ext, &answers_path)?;
    println!(
        "wrote {} rows to {} and {} answers to {}",
        ds.n_samples(),
        features_path.display(),
        key.len(),
        answers_path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ScoreOut {
    sample_id: u64,
    cluster: usize,
    uncertainty: f64,
    domain_distance: f64,
    v: f64,
}

#[derive(Serialize)]
struct SelectionOutput {
    round: usize,
    selected_ids: Vec<u64>,
    scores: Vec<ScoreOut>,
}

fn cmd_select(
    features: &Path,
    model: Option<&Path>,
    probs: Option<&Path>,
    out: Option<&Path>,
    config: Option<&Path>,
    overrides: &Overrides,
) -> Result<(), Error> {
    let cfg = load(config, overrides)?;
    let sel_cfg = cfg.selection.clone();

    let (res, ids) = match (model, probs) {
        (Some(_), Some(_)) => {
            return Err(Error::BadConfig(
                "supply either --model or --probs, not both".into(),
            ))
        }
        (None, None) => {
            return Err(Error::BadConfig(
                "one of --model or --probs is required".into(),
            ))
        }
        (Some(model_path), None) => {
            let (ds, ids) = read_features_csv(features, None)?;
            gala_core::data::validate_dataset(&ds)?;
            let model = read_checkpoint(model_path)?;
            let pool = LabeledPool::new(&ds);
            let res = select_round(&pool, &model, &ds, &sel_cfg, 1)?;
            (res, ids)
        }
        (None, Some(probs_path)) => {
            let probs_by_id = read_probabilities_csv(probs_path)?;
            let n_classes = probs_by_id.values().next().expect("non-empty").len();
            let (ds, ids) = read_features_csv(features, Some(n_classes))?;
            gala_core::data::validate_dataset(&ds)?;
            let bundle_for = |row: usize| -> Result<EmbeddingBundle, Error> {
                let ext = ids[row];
                let p = probs_by_id
                    .get(&ext)
                    .ok_or_else(|| Error::Schema(format!("no probabilities for id {}", ext)))?;
                gradient_embedding(ds.features.row(row).to_vec(), p.clone())
            };
            let target_ids = ds.target_ids();
            let target_bundles: Vec<EmbeddingBundle> = target_ids
                .iter()
                .map(|&r| bundle_for(r))
                .collect::<Result<_, _>>()?;
            let source_ids = ds.source_ids();
            let source_bundles: Vec<EmbeddingBundle> = source_ids
                .iter()
                .map(|&r| bundle_for(r))
                .collect::<Result<_, _>>()?;
            let source_domains: Vec<usize> = source_ids.iter().map(|&r| ds.domains[r]).collect();
            let res = select_round_with_bundles(
                &target_ids,
                &target_bundles,
                &source_bundles,
                &source_domains,
                ds.n_source_domains,
                &sel_cfg,
                1,
            )?;
            (res, ids)
        }
    };

    let output = SelectionOutput {
        round: res.round,
        selected_ids: res.selected_ids.iter().map(|&r| ids[r]).collect(),
        scores: res
            .scores
            .iter()
            .map(|s| ScoreOut {
                sample_id: ids[s.sample_id],
                cluster: s.cluster,
                uncertainty: s.uncertainty,
                domain_distance: s.domain_distance,
                v: s.v,
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&output)
        .map_err(|e| Error::Schema(format!("selection encode: {}", e)))?;
    text.push('\n');
    match out {
        Some(path) => {
            atomic_write(path, text.as_bytes())?;
            println!("wrote selection to {}", path.display());
        }
        None => print!("{}", text),
    }
    Ok(())
}

fn build_spec(cfg: &ResolvedConfig) -> ExperimentSpec {
    let scenario = match &cfg.features {
        Some(path) => ScenarioSource::External {
            features: path.clone(),
            answers: cfg.answers.clone(),
        },
        None => ScenarioSource::Synthetic(cfg.scenario.clone()),
    };
    ExperimentSpec {
        scenario,
        selection: cfg.selection.clone(),
        training: cfg.training.clone(),
        strategies: cfg.strategies.clone(),
        seeds: cfg.seeds.clone(),
        diagnostics: cfg.diagnostics,
    }
}

fn print_summary(reports: &[RoundReport]) {
    println!("{:<10} {:>5} {:>20}", "strategy", "runs", "final accuracy");
    for s in summarize(reports) {
        println!(
            "{:<10} {:>5} {:>12.4} ± {:.4}",
            s.strategy.to_string(),
            s.runs,
            s.mean_final_accuracy,
            s.std_final_accuracy
        );
    }
}

fn cmd_run(config: Option<&Path>, out: &Path, overrides: &Overrides) -> Result<(), Error> {
    let cfg = load(config, overrides)?;
    let spec = build_spec(&cfg);
    let reports = with_thread_cap(|| run_experiment(&spec))?;
    let (jsonl, csv) = write_report_files(&reports, out)?;
    print_summary(&reports);
    println!("wrote {} and {}", jsonl.display(), csv.display());
    Ok(())
}

fn sweep_csv(sections: &[(&str, &[SweepRow])]) -> String {
    let mut out = String::from("sweep,setting,mean_accuracy,std_accuracy\n");
    for (name, rows) in sections {
        for r in *rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                name, r.setting, r.mean_accuracy, r.std_accuracy
            ));
        }
    }
    out
}

fn print_rows(title: &str, rows: &[SweepRow]) {
    println!("{}", title);
    for r in rows {
        println!("  {:<14} {:.4} ± {:.4}", r.setting, r.mean_accuracy, r.std_accuracy);
    }
}

fn cmd_sweep(
    config: Option<&Path>,
    out: &Path,
    what: SweepKind,
    overrides: &Overrides,
) -> Result<(), Error> {
    let cfg = load(config, overrides)?;
    let spec = build_spec(&cfg);
    match what {
        SweepKind::Alpha => {
            let rows = with_thread_cap(|| alpha_sweep(&spec, &cfg.alphas))?;
            print_rows("alpha sweep", &rows);
            atomic_write(
                &out.join("ablation.csv"),
                sweep_csv(&[("alpha", &rows)]).as_bytes(),
            )?;
        }
        SweepKind::Distance => {
            let rows = with_thread_cap(|| distance_sweep(&spec))?;
            print_rows("distance sweep", &rows);
            atomic_write(
                &out.join("ablation.csv"),
                sweep_csv(&[("distance", &rows)]).as_bytes(),
            )?;
        }
        SweepKind::Aggregation => {
            let rows = with_thread_cap(|| aggregation_sweep(&spec))?;
            print_rows("aggregation sweep", &rows);
            atomic_write(
                &out.join("ablation.csv"),
                sweep_csv(&[("aggregation", &rows)]).as_bytes(),
            )?;
        }
        SweepKind::All => {
            let report: AblationReport = with_thread_cap(|| ablation_report(&spec, &cfg.alphas))?;
            print_rows("alpha sweep", &report.alpha_rows);
            print_rows("distance sweep", &report.distance_rows);
            print_rows("aggregation sweep", &report.aggregation_rows);
            let hold = |b: bool| if b { "holds" } else { "does not hold" };
            match report.flags.alpha_60_best {
                Some(b) => println!("ordering: alpha=60 best: {}", hold(b)),
                None => println!("ordering: alpha=60 not in sweep"),
            }
            println!(
                "ordering: standardized >= mean_only: {}",
                hold(report.flags.standardized_ge_mean_only)
            );
            println!(
                "ordering: minimum >= average: {}",
                hold(report.flags.minimum_ge_average)
            );
            atomic_write(
                &out.join("ablation.csv"),
                sweep_csv(&[
                    ("alpha", &report.alpha_rows),
                    ("distance", &report.distance_rows),
                    ("aggregation", &report.aggregation_rows),
                ])
                .as_bytes(),
            )?;
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| Error::Schema(format!("ablation encode: {}", e)))?;
            atomic_write(&out.join("ablation.json"), format!("{}\n", json).as_bytes())?;
        }
    }
    println!("wrote {}", out.join("ablation.csv").display());
    Ok(())
}

fn cmd_report(files: &[PathBuf]) -> Result<(), Error> {
    if files.is_empty() {
        return Err(Error::BadConfig("no report files given".into()));
    }
    let mut reports = Vec::new();
    for path in files {
        let text = std::fs::read_to_string(path)?;
        reports.extend(parse_reports_jsonl(&text)?);
    }
    print_summary(&reports);
    let strategies: Vec<Strategy> = summarize(&reports).iter().map(|s| s.strategy).collect();
    if strategies.contains(&Strategy::Gala) {
        for s in strategies {
            if s == Strategy::Gala {
                continue;
            }
            let (w, t, l) = paired_wins(&reports, Strategy::Gala, s);
            println!("gala vs {:<8} {} wins, {} ties, {} losses", s.to_string(), w, t, l);
        }
    }
    Ok(())
}
