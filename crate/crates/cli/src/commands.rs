// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use ile::cycle::{self, MeanStd, RepeatSummary, RunReport};
use ile::datasets::split;
use ile::datasets::{self, TableFormat};
use ile::report::{self as artifacts, METRICS_FILE, REPORT_FILE};
use ile::synth::{SynthKind, SynthSpec};

use crate::config::RunConfig;
use crate::CliError;

pub const CURVE_ERROR_FILE: &str = "curve_error.tsv";
pub const CURVE_GROWTH_FILE: &str = "curve_growth.tsv";

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: RunConfig,
    pub runs: Vec<RunReport>,
    pub summary: RepeatSummary,
}

pub struct SynthArgs {
    pub kind: String,
    pub classes: usize,
    pub per_class: usize,
    pub noise: f64,
    pub seed: u64,
    pub spread: f64,
    pub dim: usize,
    pub format: Option<TableFormat>,
    pub out: PathBuf,
}

pub fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let kind: SynthKind = args
        .kind
        .parse()
        .map_err(|e: ile::Error| CliError::Usage(e.to_string()))?;
    let spec = SynthSpec {
        kind,
        classes: args.classes,
        per_class: args.per_class,
        noise: args.noise,
        seed: args.seed,
        spread: args.spread,
        dim: args.dim,
    };
    spec.validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let samples = spec.generate()?;
    let file = File::create(&args.out).map_err(|e| io_error(&args.out, e))?;
    match args
        .format
        .unwrap_or_else(|| TableFormat::from_path(&args.out))
    {
        TableFormat::Csv => datasets::write_csv(BufWriter::new(file), &samples)?,
        TableFormat::Binary => datasets::write_binary(file, &samples, spec.classes)?,
    }
    info!("wrote {} samples to {}", samples.len(), args.out.display());
    Ok(())
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    ile::Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
    .into()
}

pub struct RunArgs {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: usize,
    pub dry_run: bool,
}

pub fn run(args: &RunArgs) -> Result<(), CliError> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let out_dir = args
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| {
            CliError::Usage("no output directory: pass --out or set output_dir".into())
        })?;
    if args.workers == 0 {
        return Err(CliError::Usage("--workers must be >= 1".into()));
    }
    let data = config.load_data()?;
    let loop_config = config.loop_config();
    loop_config
        .augmentations
        .check_dim(data.samples.first().map_or(0, |s| s.features.len()))?;

    if args.dry_run {
        let triple = split(
            &data.samples,
            data.classes,
            config.split.labelled_per_class,
            config.split.validation_count,
            config.seed,
        )?;
        println!(
            "config ok: {} samples, {} classes, |D_l|={} |D_u|={} |D_v|={}",
            data.samples.len(),
            data.classes,
            triple.labelled.len(),
            triple.unlabelled.len(),
            triple.validation.len()
        );
        return Ok(());
    }

    let (runs, summary) = cycle::run_repeated(
        &loop_config,
        &data.samples,
        data.classes,
        config.seed,
        args.workers,
    )?;

    std::fs::create_dir_all(&out_dir).map_err(|e| io_error(&out_dir, e))?;
    artifacts::write_metrics_file(&out_dir.join(METRICS_FILE), &runs)?;
    let mut snapshot = config;
    snapshot.output_dir = None;
    let report = ExperimentReport {
        config: snapshot,
        runs,
        summary,
    };
    artifacts::write_json(&out_dir.join(REPORT_FILE), &report)?;
    print!("{}", render_table(&report));
    Ok(())
}

fn pct(v: f64) -> String {
    format!("{:.2}%", 100.0 * v)
}

fn pct_std(m: &MeanStd) -> String {
    format!("{:.2}% (±{:.2})", 100.0 * m.mean, 100.0 * m.std)
}

fn points(v: f64) -> String {
    format!("{:+.2}", 100.0 * v)
}

/// Benchmark error, final error with improvement in percentage points, and
/// added samples with their addition accuracy.
pub fn render_table(report: &ExperimentReport) -> String {
    let mut out = String::new();
    let s = &report.summary;
    let no_iterations = report.runs.iter().all(|r| r.records.is_empty());
    let _ = writeln!(out, "runs: {}", s.repeats);
    if s.repeats > 1 {
        if let Some(b) = &s.benchmark_val_error {
            let _ = writeln!(out, "benchmark error:  {}", pct_std(b));
        }
        if !no_iterations {
            if let (Some(f), Some(i)) = (&s.final_val_error, &s.improvement) {
                let _ = writeln!(out, "final error:      {} ({})", pct_std(f), points(i.mean));
            }
            let acc = s
                .addition_accuracy
                .as_ref()
                .map_or("n/a".to_string(), pct_std);
            let _ = writeln!(
                out,
                "added samples:    {:.1} (±{:.1}) (acc. {acc})",
                s.total_added.mean, s.total_added.std
            );
        }
    } else if let Some(run) = report.runs.first() {
        if let Some(b) = run.benchmark_val_error {
            let _ = writeln!(out, "benchmark error:  {}", pct(b));
        }
        if !no_iterations {
            if let (Some(f), Some(i)) = (run.final_val_error, run.improvement) {
                let _ = writeln!(out, "final error:      {} ({})", pct(f), points(i));
            }
            let acc = run
                .cumulative_addition_accuracy
                .map_or("n/a".to_string(), pct);
            let _ = writeln!(out, "added samples:    {} (acc. {acc})", run.total_added);
        }
    }
    if !no_iterations {
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:>6} {:>5} {:>7} {:>7} {:>6} {:>9} {:>9} {:>10}",
            "repeat", "iter", "|D_l|", "|D_u|", "added", "add.acc", "val.err", "T_c"
        );
        for (r, run) in report.runs.iter().enumerate() {
            for rec in &run.records {
                let _ = writeln!(
                    out,
                    "{:>6} {:>5} {:>7} {:>7} {:>6} {:>9} {:>9} {:>10.4}",
                    r,
                    rec.iteration,
                    rec.dl_size,
                    rec.du_size,
                    rec.added_count,
                    rec.addition_accuracy.map_or("-".into(), pct),
                    rec.val_error.map_or("-".into(), pct),
                    rec.threshold
                );
            }
        }
    }
    out
}

fn write_curves(dir: &Path, report: &ExperimentReport) -> Result<(), CliError> {
    let mut error = String::from("repeat\titeration\tval_error\n");
    let mut growth = String::from("repeat\titeration\tlabelled\n");
    for (r, run) in report.runs.iter().enumerate() {
        for rec in &run.records {
            if let Some(e) = rec.val_error {
                let _ = writeln!(error, "{r}\t{}\t{e}", rec.iteration);
            }
            let _ = writeln!(growth, "{r}\t{}\t{}", rec.iteration, rec.dl_size);
        }
        let last = run.records.len() + 1;
        if let Some(e) = run.final_val_error.filter(|_| !run.records.is_empty()) {
            let _ = writeln!(error, "{r}\t{last}\t{e}");
        }
        if !run.records.is_empty() {
            let _ = writeln!(growth, "{r}\t{last}\t{}", run.final_labelled);
        }
    }
    for (name, text) in [(CURVE_ERROR_FILE, error), (CURVE_GROWTH_FILE, growth)] {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| io_error(&path, e))?;
    }
    Ok(())
}

pub fn report(dir: &Path) -> Result<(), CliError> {
    let report: ExperimentReport = artifacts::read_json(&dir.join(REPORT_FILE))?;
    print!("{}", render_table(&report));
    write_curves(dir, &report)
}
