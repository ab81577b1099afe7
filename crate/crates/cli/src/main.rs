//! `eda`: data generation, anchor fitting, training, evaluation, ablation
//! sweeps and reports.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use eda_core::data::GenConfig;
use eda_core::loss::ClsKind;
use eda_core::metrics::{EvalConfig, ScoreMode, DEFAULT_K, DEFAULT_MISS_THRESHOLD};
use eda_core::pipeline::{self, AblationMatrix, TrainSpec};
use eda_core::train::Paradigm;
use eda_core::{exec, Error, Exec};

#[derive(Parser, Debug)]
#[command(name = "eda", version, about = "Mixture trajectory prediction lab")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ParadigmArg {
    Pred,
    Anchor,
    Eda,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ClsArg {
    Bce,
    Ce,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScoreModeArg {
    Original,
    Scaled,
    Rank,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate a synthetic dataset.
    GenData {
        /// key=value file; omitted keys keep their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "scenes.edar")]
        out: PathBuf,
    },
    /// Fit intention points by k-means over training endpoints.
    MakeAnchors {
        #[arg(long, default_value = "scenes.edar")]
        data: PathBuf,
        #[arg(long, default_value_t = 16)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "anchors.edar")]
        out: PathBuf,
    },
    /// Train a model under one assignment paradigm.
    Train {
        #[arg(long, default_value = "scenes.edar")]
        data: PathBuf,
        #[arg(long, default_value = "anchors.edar")]
        anchors: PathBuf,
        #[arg(long, value_enum, default_value = "eda")]
        paradigm: ParadigmArg,
        /// Comma-separated 1-based layers after which anchors evolve.
        #[arg(long, default_value = "2,4")]
        evolve_layers: String,
        #[arg(long, value_enum, default_value = "on")]
        distinct: Switch,
        #[arg(long, value_enum, default_value = "bce")]
        cls: ClsArg,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        hidden: usize,
        #[arg(long, default_value_t = 6)]
        layers: usize,
        #[arg(long, default_value = "model.edar")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on the held-out split.
    Eval {
        #[arg(long, default_value = "scenes.edar")]
        data: PathBuf,
        #[arg(long, default_value = "model.edar")]
        model: PathBuf,
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
        #[arg(long, value_enum, default_value = "original")]
        score_mode: ScoreModeArg,
        #[arg(long, default_value_t = DEFAULT_MISS_THRESHOLD)]
        miss_threshold: f64,
        #[arg(long, default_value = "metrics.csv")]
        out: PathBuf,
    },
    /// Run the evolve-times x distinct x cls grid over a seed list.
    Ablate {
        /// key=value file; omitted keys keep the default grid.
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long, default_value = "scenes.edar")]
        data: PathBuf,
        #[arg(long, default_value = "anchors.edar")]
        anchors: PathBuf,
        #[arg(long, default_value = "metrics.csv")]
        out: PathBuf,
    },
    /// Per-layer CSV and SVG charts from a metrics file.
    Report {
        #[arg(long = "in", default_value = "metrics.csv")]
        input: PathBuf,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Schedule(_) => Failure::Usage(e.to_string()),
            other => Failure::Data(other),
        }
    }
}

fn read_text(path: &PathBuf) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

fn parse_layers(s: &str) -> Result<Vec<usize>, Failure> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| Failure::Usage(format!("bad evolve layer `{t}`"))))
        .collect()
}

fn run(cmd: Cmd, ex: Exec) -> Result<(), Failure> {
    match cmd {
        Cmd::GenData { config, out } => {
            let cfg = match config {
                Some(p) => pipeline::gen_config_from_kv(&read_text(&p)?)?,
                None => GenConfig::default(),
            };
            let s = pipeline::gen_data(&cfg, &out, ex)?;
            println!("scenes: {} (train {}, eval {})", s.num_scenes, s.train_count, s.num_scenes - s.train_count);
            for (m, (c, name)) in s.mode_histogram.iter().zip(cfg.maneuvers().iter().map(|m| &m.name)).enumerate() {
                println!("mode {m} {name}: {c}");
            }
        }
        Cmd::MakeAnchors { data, k, seed, out } => {
            let fits = pipeline::make_anchors(&data, k, seed, &out)?;
            for (c, f) in fits.iter().enumerate() {
                println!(
                    "category {c}: objective {:.6} after {} iterations{}",
                    f.objective,
                    f.iterations,
                    if f.converged { "" } else { " (not converged)" }
                );
            }
        }
        Cmd::Train {
            data,
            anchors,
            paradigm,
            evolve_layers,
            distinct,
            cls,
            epochs,
            lr,
            batch_size,
            seed,
            hidden,
            layers,
            out,
        } => {
            let spec = TrainSpec {
                paradigm: match paradigm {
                    ParadigmArg::Pred => Paradigm::Prediction,
                    ParadigmArg::Anchor => Paradigm::Anchor,
                    ParadigmArg::Eda => Paradigm::Eda,
                },
                evolve_layers: parse_layers(&evolve_layers)?,
                distinct: matches!(distinct, Switch::On),
                cls: match cls {
                    ClsArg::Bce => ClsKind::Bce,
                    ClsArg::Ce => ClsKind::Ce,
                },
                epochs,
                lr,
                batch_size,
                seed,
                hidden_dim: hidden,
                num_layers: layers,
                ..TrainSpec::default()
            };
            println!("epoch,total,reg,cls");
            pipeline::train_cmd(&data, &anchors, &spec, &out, ex, |l| {
                println!("{},{:.6},{:.6},{:.6}", l.epoch, l.loss.total, l.loss.reg, l.loss.cls);
            })?;
            println!("checkpoint written to {}", out.display());
        }
        Cmd::Eval {
            data,
            model,
            k,
            score_mode,
            miss_threshold,
            out,
        } => {
            let mode = match score_mode {
                ScoreModeArg::Original => ScoreMode::Original,
                ScoreModeArg::Scaled => ScoreMode::Scaled,
                ScoreModeArg::Rank => ScoreMode::Rank,
            };
            let cfg = EvalConfig {
                k,
                miss_threshold,
                ..EvalConfig::default()
            };
            let o = pipeline::eval_cmd(&data, &model, &cfg, mode, &out, ex)?;
            println!("layer,minADE,minFDE,miss_rate");
            for (l, b) in o.per_layer.iter().enumerate() {
                println!("{},{:.4},{:.4},{:.4}", l + 1, b.min_ade, b.min_fde, b.miss_rate);
            }
            println!(
                "{}: minADE {:.4} minFDE {:.4} miss_rate {:.4} mAP({}) {:.4}",
                o.row.config_id, o.row.min_ade, o.row.min_fde, o.row.miss_rate, o.row.score_mode, o.row.map
            );
        }
        Cmd::Ablate {
            matrix,
            data,
            anchors,
            out,
        } => {
            let m = match matrix {
                Some(p) => AblationMatrix::from_kv(&read_text(&p)?)?,
                None => AblationMatrix::default(),
            };
            pipeline::ablate_cmd(&m, &data, &anchors, &out, ex, |cell, seed, layers| {
                if let Some(b) = layers.last() {
                    println!(
                        "{} seed {seed}: minFDE {:.4} miss_rate {:.4} mAP(rank) {:.4}",
                        cell.config_id(),
                        b.min_fde,
                        b.miss_rate,
                        b.map_rank
                    );
                }
            })?;
            println!("medians written to {}", out.display());
        }
        Cmd::Report { input, out } => {
            let r = pipeline::report_cmd(&input, &out)?;
            println!("{} series", r.series);
            for f in r.files {
                println!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Ok(v) = std::env::var("EDA_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                exec::configure_threads(n);
            }
            _ => {
                eprintln!("error: EDA_THREADS must be a positive integer, got `{v}`");
                return ExitCode::from(1);
            }
        }
    }
    match run(cli.cmd, Exec::available()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
