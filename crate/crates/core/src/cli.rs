//! Command-line front end.
//!
//! Every output starts with the resolved configuration: CSV output with a
//! `# {json}` comment line, JSON output with leading `schema_version` and
//! `config` fields. Equal configurations produce byte-identical output.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::estimators::{build_string_measure, ks_gaps, lln_throughput, pi_means, tv_attempts, StringGrid};
use crate::event_sim::{admission_steps, simulate, ArrivalStream};
use crate::kernel::run_chain;
use crate::ldp::{tail_bound_check, GridSpec, RateEvaluator, TailStatus};
use crate::model::{fmt_g17, validate_params, write_steps_csv, HistoryWindow, Params, ProtocolKind, RandomSource};
use crate::throughput::{optimize_lambda_aloha, throughput};

pub const SCHEMA_VERSION: u32 = 1;

/// Exit status for usage errors.
pub const EXIT_USAGE: i32 = 2;
/// Exit status when an iterative computation fails to converge.
pub const EXIT_NON_CONVERGENCE: i32 = 3;
/// Exit status for reports without enough data to decide.
pub const EXIT_INSUFFICIENT: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Event simulation over [0, horizon]; emits the admission steps.
    Simulate,
    /// Samples the admission chain from an empty system.
    SampleChain,
    /// Closed-form long-run throughput.
    Throughput,
    /// Intensity maximizing the ALOHA throughput.
    OptimizeLambda,
    /// Rate function of S(t)/t on a grid of s values.
    RateFunction,
    /// Monte-Carlo check of the tail bound for S(t).
    TailCheck,
    /// Event simulation and chain side by side: KS on gaps, TV on attempts.
    Compare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Fully resolved configuration of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    pub command: Command,
    pub lambda: Option<f64>,
    pub kappa: u32,
    pub protocol: Option<ProtocolKind>,
    pub horizon: Option<f64>,
    pub steps: Option<usize>,
    pub runs: Option<u64>,
    pub s_target: Option<f64>,
    pub seed: u64,
    pub format: Format,
    pub output: Option<PathBuf>,
    pub grid_h: Option<f64>,
    pub grid_smax: Option<f64>,
    pub kmax: Option<u64>,
}

#[derive(Debug, Parser)]
#[command(name = "mac-renewal", version, about = "Multi-channel ALOHA and CSMA: simulation, admission chain and rate functions")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Arrival intensity.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Number of channels.
    #[arg(long, default_value_t = 1)]
    pub kappa: u32,
    #[arg(long, value_enum)]
    pub protocol: Option<ProtocolArg>,
    /// Simulated time (simulate, tail-check).
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Chain steps (sample-chain, compare) or curve points (rate-function).
    #[arg(long)]
    pub steps: Option<usize>,
    /// Independent runs (tail-check).
    #[arg(long)]
    pub runs: Option<u64>,
    /// Threshold on S(t)/t (tail-check).
    #[arg(long)]
    pub s_target: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; standard output if absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Gap bin width.
    #[arg(long)]
    pub grid_h: Option<f64>,
    /// Gap cutoff of the string-measure grid.
    #[arg(long)]
    pub grid_smax: Option<f64>,
    /// Attempt-count cutoff of the string-measure grid.
    #[arg(long)]
    pub kmax: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    Aloha,
    Csma,
}

impl From<ProtocolArg> for ProtocolKind {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::Aloha => ProtocolKind::Aloha,
            ProtocolArg::Csma => ProtocolKind::Csma,
        }
    }
}

impl From<Cli> for RunConfig {
    fn from(c: Cli) -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            command: c.command,
            lambda: c.lambda,
            kappa: c.kappa,
            protocol: c.protocol.map(Into::into),
            horizon: c.horizon,
            steps: c.steps,
            runs: c.runs,
            s_target: c.s_target,
            seed: c.seed,
            format: c.format,
            output: c.output,
            grid_h: c.grid_h,
            grid_smax: c.grid_smax,
            kmax: c.kmax,
        }
    }
}

impl RunConfig {
    /// The `# {json}` line opening CSV output.
    pub fn header_line(&self) -> String {
        format!("# {}", serde_json::to_string(self).expect("config serializes"))
    }

    /// Parses a line produced by [`header_line`](Self::header_line).
    pub fn from_header_line(line: &str) -> Result<Self> {
        let body = line
            .strip_prefix("# ")
            .ok_or_else(|| Error::Parse("config header must start with '# '".into()))?;
        serde_json::from_str(body.trim_end()).map_err(|e| Error::Parse(e.to_string()))
    }

    fn params(&self) -> Result<Params> {
        let lambda = self
            .lambda
            .ok_or_else(|| usage(format!("{:?} needs --lambda", self.command)))?;
        validate_params(Params {
            lambda,
            kappa: self.kappa,
        })
    }

    fn protocol(&self) -> Result<ProtocolKind> {
        self.protocol
            .ok_or_else(|| usage(format!("{:?} needs --protocol", self.command)))
    }

    fn require<T: Copy>(&self, v: Option<T>, flag: &str) -> Result<T> {
        v.ok_or_else(|| usage(format!("{:?} needs --{flag}", self.command)))
    }

    fn ldp_grid(&self) -> GridSpec {
        self.grid_h
            .map_or_else(|| GridSpec::default_for(self.kappa), GridSpec::with_h)
    }

    fn string_grid(&self, lambda: f64) -> StringGrid {
        let d = StringGrid::default_for(lambda);
        StringGrid {
            h: self.grid_h.unwrap_or(d.h),
            s_max: self.grid_smax.unwrap_or(d.s_max),
            k_max: self.kmax.unwrap_or(d.k_max),
        }
    }
}

fn usage(msg: String) -> Error {
    Error::InvalidArgument(msg)
}

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonConvergence { .. } | Error::Multimodal { .. } => EXIT_NON_CONVERGENCE,
        Error::InsufficientRecords { .. } => EXIT_INSUFFICIENT,
        Error::Io(_) => 1,
        _ => EXIT_USAGE,
    }
}

/// Writes the result of `cfg` to `out` and returns the exit status.
pub fn run(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let mut status = 0;
    match cfg.command {
        Command::Simulate => cmd_simulate(cfg, out)?,
        Command::SampleChain => cmd_sample_chain(cfg, out)?,
        Command::Throughput => {
            let p = cfg.params()?;
            let proto = cfg.protocol()?;
            let r = throughput(p, proto)?;
            csv_or_json(cfg, out, &["protocol", "lambda", "kappa", "throughput"], &[vec![
                proto.to_string(),
                fmt_g17(p.lambda),
                p.kappa.to_string(),
                fmt_g17(r.value),
            ]], json!({ "throughput": r.value }))?
        }
        Command::OptimizeLambda => {
            if cfg.protocol.is_some_and(|p| p != ProtocolKind::Aloha) {
                return Err(usage("optimize-lambda applies to ALOHA only".into()));
            }
            let (l, v) = optimize_lambda_aloha(cfg.kappa)?;
            let ratio = l / cfg.kappa as f64;
            csv_or_json(cfg, out, &["kappa", "lambda_star", "ratio", "throughput"], &[vec![
                cfg.kappa.to_string(),
                fmt_g17(l),
                fmt_g17(ratio),
                fmt_g17(v),
            ]], json!({ "lambda_star": l, "ratio": ratio, "throughput": v }))?
        }
        Command::RateFunction => cmd_rate_function(cfg, out)?,
        Command::TailCheck => {
            let p = cfg.params()?;
            let proto = cfg.protocol()?;
            let t = cfg.require(cfg.horizon, "horizon")?;
            let runs = cfg.require(cfg.runs, "runs")?;
            let s_target = cfg.require(cfg.s_target, "s-target")?;
            let src = RandomSource::new(cfg.seed, 0);
            let r = tail_bound_check(proto, p, s_target, t, runs, &src, cfg.ldp_grid())?;
            if r.status == TailStatus::Insufficient {
                status = EXIT_INSUFFICIENT;
            }
            let status_str = serde_json::to_value(r.status).expect("status serializes");
            csv_or_json(
                cfg,
                out,
                &["s_target", "t", "runs", "occurrences", "mc_rate", "predicted_rate", "status"],
                &[vec![
                    fmt_g17(r.s_target),
                    fmt_g17(r.t),
                    r.runs.to_string(),
                    r.occurrences.to_string(),
                    r.mc_rate.map_or_else(|| "NA".into(), fmt_g17),
                    fmt_g17(r.predicted_rate),
                    status_str.as_str().unwrap_or_default().to_string(),
                ]],
                serde_json::to_value(&r).expect("report serializes"),
            )?
        }
        Command::Compare => cmd_compare(cfg, out)?,
    }
    Ok(status)
}

fn write_json(cfg: &RunConfig, out: &mut dyn Write, result: serde_json::Value) -> Result<()> {
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "config": cfg,
        "result": result,
    });
    serde_json::to_writer_pretty(&mut *out, &doc).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

fn csv_or_json(
    cfg: &RunConfig,
    out: &mut dyn Write,
    header: &[&str],
    rows: &[Vec<String>],
    result: serde_json::Value,
) -> Result<()> {
    match cfg.format {
        Format::Json => write_json(cfg, out, result),
        Format::Csv => {
            writeln!(out, "{}", cfg.header_line())?;
            writeln!(out, "{}", header.join(","))?;
            for r in rows {
                writeln!(out, "{}", r.join(","))?;
            }
            Ok(())
        }
    }
}

fn cmd_simulate(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let p = cfg.params()?;
    let proto = cfg.protocol()?;
    let horizon = cfg.require(cfg.horizon, "horizon")?;
    let tr = simulate(p, proto, ArrivalStream::poisson(RandomSource::new(cfg.seed, 0), p.lambda), horizon)?;
    let rate = tr.counts.successes_total as f64 / horizon;
    match cfg.format {
        Format::Json => write_json(cfg, out, json!({ "throughput": rate, "trace": tr })),
        Format::Csv => {
            writeln!(out, "{}", cfg.header_line())?;
            let summary = json!({ "counts": tr.counts, "throughput": rate });
            writeln!(out, "# {summary}")?;
            write_steps_csv(&mut *out, &tr.steps)
        }
    }
}

fn cmd_sample_chain(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let p = cfg.params()?;
    let proto = cfg.protocol()?;
    let n = cfg.require(cfg.steps, "steps")?;
    let mut src = RandomSource::new(cfg.seed, 0);
    let recs = run_chain(p, proto, n, HistoryWindow::empty_system(p.kappa), &mut src)?;
    match cfg.format {
        Format::Csv => {
            writeln!(out, "{}", cfg.header_line())?;
            write_steps_csv(&mut *out, &recs)
        }
        Format::Json => {
            let (mean_a, mean_sigma) = pi_means(&recs)?;
            let grid = cfg.string_grid(p.lambda);
            let measure = build_string_measure(&recs, p.kappa.min(n as u32), grid)?;
            write_json(
                cfg,
                out,
                json!({
                    "mean_attempts": mean_a,
                    "mean_gap": mean_sigma,
                    "throughput_estimate": lln_throughput(&recs, proto)?,
                    "string_measure": {
                        "grid": grid,
                        "cells": measure.weights().count(),
                        "overflow": measure.overflow(),
                        "marginal_defect": measure.marginal_defect(),
                    },
                    "steps": recs,
                }),
            )
        }
    }
}

fn cmd_rate_function(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let p = cfg.params()?;
    let proto = cfg.protocol()?;
    let points = cfg.steps.unwrap_or(20);
    if points == 0 {
        return Err(usage("rate-function needs --steps >= 1".into()));
    }
    if proto == ProtocolKind::Aloha && p.kappa > 2 || p.kappa > 3 {
        return Err(Error::KappaTooLarge(p.kappa));
    }
    let top = 2.0 * throughput(p, proto)?.value;
    let mut ev = RateEvaluator::new(proto, p, cfg.ldp_grid())?;
    let mut rows = Vec::with_capacity(points);
    let mut values = Vec::with_capacity(points);
    for i in 1..=points {
        let s = top * i as f64 / (points + 1) as f64;
        let r = ev.rate_is(s)?;
        rows.push(vec![fmt_g17(s), fmt_g17(r.value)]);
        values.push(json!({ "s": s, "I_S": r.value, "edge": r.edge }));
    }
    csv_or_json(cfg, out, &["s", "I_S"], &rows, json!({ "curve": values }))
}

fn cmd_compare(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let p = cfg.params()?;
    let proto = cfg.protocol()?;
    let n = cfg.require(cfg.steps, "steps")?;
    let (sim, chain) = rayon::join(
        || admission_steps(p, proto, RandomSource::new(cfg.seed, 0), n),
        || {
            let mut src = RandomSource::new(cfg.seed, 1);
            run_chain(p, proto, n, HistoryWindow::empty_system(p.kappa), &mut src)
        },
    );
    let (sim, chain) = (sim?, chain?);
    let ks = ks_gaps(&sim, &chain)?;
    let tv = tv_attempts(&sim, &chain, 20)?;
    let (sa, ss) = pi_means(&sim)?;
    let (ca, cs) = pi_means(&chain)?;
    let rows = [
        ("ks_gap", ks),
        ("tv_attempts", tv),
        ("mean_attempts_sim", sa),
        ("mean_attempts_chain", ca),
        ("mean_gap_sim", ss),
        ("mean_gap_chain", cs),
    ];
    let csv: Vec<Vec<String>> = rows.iter().map(|(k, v)| vec![k.to_string(), fmt_g17(*v)]).collect();
    let obj: serde_json::Map<String, serde_json::Value> = rows.iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
    csv_or_json(cfg, out, &["metric", "value"], &csv, serde_json::Value::Object(obj))
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let cfg = RunConfig::from(cli);
    let outcome = match &cfg.output {
        Some(path) => File::create(path).map_err(Error::from).and_then(|f| {
            let mut w = BufWriter::new(f);
            let s = run(&cfg, &mut w)?;
            w.flush()?;
            Ok(s)
        }),
        None => {
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            run(&cfg, &mut w).and_then(|s| {
                w.flush()?;
                Ok(s)
            })
        }
    };
    match outcome {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
