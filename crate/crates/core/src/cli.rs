//! Command-line front end. Data goes to files; progress and errors go to
//! standard error.
//!
//! Exit codes: 0 success, 1 at least one record failed (completed records
//! are still written), 2 usage or configuration error.

use std::collections::{BTreeSet, HashMap};
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::config::{Config, Runtime};
use crate::eval::sweep::{f1_at, sweep_threshold};
use crate::eval::{
    load_dataset, load_gold, load_scores, zero_hallucination_rate, ConfusionCounts, DatasetFormat,
    DetectionMetrics, LoadReport, OverlapScores,
};
use crate::jsonl::{read_lines, InputRecord, LineWriter, ReferenceLine, RefinedLine, ReportLine};
use crate::model::{
    DetectionReport, Diagnostic, Judgment, RawResponse, RefinedResponse, SourceText,
};
use crate::runner::run_ordered;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RECORD_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "groundcheck",
    version,
    about = "Detect and rewrite ungrounded sentences in generated text"
)]
struct Cli {
    /// JSON configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Selection {
    /// Process only the first N records.
    #[arg(long)]
    limit: Option<usize>,
    /// Process only these record ids (comma separated).
    #[arg(long, value_delimiter = ',')]
    ids: Vec<String>,
    /// Input layout: pairs ({"id","source","response"}) or a benchmark format.
    #[arg(long, default_value = "pairs")]
    format: String,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Judge every response and write one report per line.
    Detect {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        select: Selection,
        /// Per-record retries, parse failures and latencies.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Rewrite flagged sentences using existing reports.
    Mitigate {
        input: PathBuf,
        report: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        select: Selection,
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Detect and rewrite in one pass.
    Run {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        select: Selection,
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// F1 of response-level verdicts against gold labels.
    EvalDetection {
        report: PathBuf,
        gold: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// ROUGE and BLEU of refined text against references.
    EvalReduction {
        refined: PathBuf,
        references: PathBuf,
        /// Reports from re-running detection on the refined text.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Best cut-off for an external consistency score.
    SweepThreshold {
        scores: PathBuf,
        gold: PathBuf,
        #[arg(long, default_value_t = 0.02)]
        step: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug)]
struct Failure(i32, String);

type CmdResult = Result<i32, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure(EXIT_USAGE, msg.into())
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    usage(format!("{}: {e}", path.display()))
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            code
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<Config, Failure> {
    match path {
        Some(p) => Config::load(p).map_err(|e| usage(e.to_string())),
        None => {
            let mut cfg = Config::default();
            cfg.apply_env();
            Ok(cfg)
        }
    }
}

fn dispatch(cli: Cli) -> CmdResult {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Detect {
            input,
            output,
            select,
            diagnostics,
        } => {
            let records = load_inputs(&input, &select)?;
            let rt = cfg.runtime().map_err(|e| usage(e.to_string()))?;
            detect_cmd(&rt, records, &output, diagnostics.as_deref())
        }
        Command::Mitigate {
            input,
            report,
            output,
            select,
            diagnostics,
        } => {
            let records = load_inputs(&input, &select)?;
            let reports = read_lines::<ReportLine>(&report).map_err(|e| io_failure(&report, e))?;
            let rt = cfg.runtime().map_err(|e| usage(e.to_string()))?;
            mitigate_cmd(&rt, records, reports, &output, diagnostics.as_deref())
        }
        Command::Run {
            input,
            output,
            report,
            select,
            diagnostics,
        } => {
            let records = load_inputs(&input, &select)?;
            let rt = cfg.runtime().map_err(|e| usage(e.to_string()))?;
            run_cmd(&rt, records, &output, &report, diagnostics.as_deref())
        }
        Command::EvalDetection {
            report,
            gold,
            output,
        } => eval_detection_cmd(&report, &gold, output.as_deref()),
        Command::EvalReduction {
            refined,
            references,
            report,
            output,
        } => eval_reduction_cmd(&refined, &references, report.as_deref(), output.as_deref()),
        Command::SweepThreshold {
            scores,
            gold,
            step,
            output,
        } => sweep_cmd(&scores, &gold, step, output.as_deref()),
    }
}

struct Inputs {
    records: Vec<InputRecord>,
    load_errors: usize,
}

fn load_inputs(path: &Path, select: &Selection) -> Result<Inputs, Failure> {
    if !path.is_file() {
        return Err(usage(format!(
            "input file {} does not exist",
            path.display()
        )));
    }
    let loaded: LoadReport<InputRecord> = if select.format == "pairs" {
        read_lines(path).map_err(|e| io_failure(path, e))?
    } else {
        let format: DatasetFormat = select
            .format
            .parse()
            .map_err(|e: crate::eval::DataError| usage(e.to_string()))?;
        let ds = load_dataset(path, format).map_err(|e| usage(e.to_string()))?;
        LoadReport {
            items: ds
                .items
                .into_iter()
                .map(|p| InputRecord {
                    id: p.id,
                    source: p.source,
                    response: p.response,
                })
                .collect(),
            errors: ds.errors,
        }
    };
    for e in &loaded.errors {
        eprintln!("{}:{}: skipped: {}", path.display(), e.line, e.message);
    }
    let wanted: BTreeSet<&str> = select.ids.iter().map(String::as_str).collect();
    let mut records: Vec<InputRecord> = loaded
        .items
        .into_iter()
        .filter(|r| wanted.is_empty() || wanted.contains(r.id.as_str()))
        .collect();
    if let Some(n) = select.limit {
        records.truncate(n);
    }
    Ok(Inputs {
        records,
        load_errors: loaded.errors.len(),
    })
}

#[derive(Serialize)]
struct DiagnosticLine<'a> {
    id: &'a str,
    stage: &'static str,
    latency_ms: u128,
    #[serde(skip_serializing_if = "<[Diagnostic]>::is_empty")]
    diagnostics: &'a [Diagnostic],
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
}

fn open_writer(path: &Path) -> Result<LineWriter, Failure> {
    LineWriter::create(path).map_err(|e| io_failure(path, e))
}

fn open_diagnostics(path: Option<&Path>) -> Result<Option<LineWriter>, Failure> {
    path.map(open_writer).transpose()
}

fn write_line<T: Serialize>(w: &mut LineWriter, v: &T, failed: &mut bool) {
    if let Err(e) = w.write(v) {
        eprintln!("error: write failed: {e}");
        *failed = true;
    }
}

fn detect_one(rt: &Runtime, r: &InputRecord) -> Result<DetectionReport, String> {
    let source = SourceText::new(&r.id, &r.source).map_err(|e| e.to_string())?;
    let response = RawResponse::new(&r.id, &r.response, &rt.splitter);
    rt.detector
        .detect(&source, &response)
        .map_err(|e| e.to_string())
}

fn mitigate_one(
    rt: &Runtime,
    r: &InputRecord,
    report: &DetectionReport,
) -> Result<RefinedResponse, String> {
    let source = SourceText::new(&r.id, &r.source).map_err(|e| e.to_string())?;
    let response = RawResponse::new(&r.id, &r.response, &rt.splitter);
    rt.mitigator
        .mitigate(&source, &response, report, &rt.client)
        .map_err(|e| e.to_string())
}

fn exit_code(failed: bool) -> i32 {
    if failed {
        EXIT_RECORD_FAILURE
    } else {
        EXIT_OK
    }
}

fn detect_cmd(rt: &Runtime, inputs: Inputs, output: &Path, diag: Option<&Path>) -> CmdResult {
    let mut out = open_writer(output)?;
    let mut diag = open_diagnostics(diag)?;
    let mut failed = inputs.load_errors > 0;
    run_ordered(
        &inputs.records,
        rt.workers,
        |r| {
            let t = Instant::now();
            (detect_one(rt, r), t.elapsed().as_millis())
        },
        |i, (result, ms)| {
            let id = inputs.records[i].id.as_str();
            match &result {
                Ok(report) => {
                    write_line(&mut out, &ReportLine::from_report(id, report), &mut failed)
                }
                Err(e) => {
                    eprintln!("error: record {id}: {e}");
                    failed = true;
                }
            }
            if let Some(d) = diag.as_mut() {
                let line = DiagnosticLine {
                    id,
                    stage: "detect",
                    latency_ms: ms,
                    diagnostics: result
                        .as_ref()
                        .map(|r| r.diagnostics.as_slice())
                        .unwrap_or(&[]),
                    error: result.as_ref().err().map(String::as_str),
                };
                write_line(d, &line, &mut failed);
            }
        },
    );
    Ok(exit_code(failed))
}

fn mitigate_cmd(
    rt: &Runtime,
    inputs: Inputs,
    reports: LoadReport<ReportLine>,
    output: &Path,
    diag: Option<&Path>,
) -> CmdResult {
    let mut failed = inputs.load_errors > 0 || !reports.errors.is_empty();
    for e in &reports.errors {
        eprintln!("report line {}: skipped: {}", e.line, e.message);
    }
    let by_id: HashMap<String, DetectionReport> = reports
        .items
        .into_iter()
        .map(|l| (l.id.clone(), l.into_report()))
        .collect();
    let mut out = open_writer(output)?;
    let mut diag = open_diagnostics(diag)?;
    run_ordered(
        &inputs.records,
        rt.workers,
        |r| {
            let t = Instant::now();
            let result = match by_id.get(&r.id) {
                Some(report) => mitigate_one(rt, r, report),
                None => Err("no report for this id".to_string()),
            };
            (result, t.elapsed().as_millis())
        },
        |i, (result, ms)| {
            let id = inputs.records[i].id.as_str();
            let error = match result {
                Ok(refined) => {
                    write_line(&mut out, &RefinedLine::new(id, refined), &mut failed);
                    None
                }
                Err(e) => {
                    eprintln!("error: record {id}: {e}");
                    failed = true;
                    Some(e)
                }
            };
            if let Some(d) = diag.as_mut() {
                let line = DiagnosticLine {
                    id,
                    stage: "mitigate",
                    latency_ms: ms,
                    diagnostics: &[],
                    error: error.as_deref(),
                };
                write_line(d, &line, &mut failed);
            }
        },
    );
    Ok(exit_code(failed))
}

fn run_cmd(
    rt: &Runtime,
    inputs: Inputs,
    output: &Path,
    report_path: &Path,
    diag: Option<&Path>,
) -> CmdResult {
    let mut out = open_writer(output)?;
    let mut reports = open_writer(report_path)?;
    let mut diag = open_diagnostics(diag)?;
    let mut failed = inputs.load_errors > 0;
    run_ordered(
        &inputs.records,
        rt.workers,
        |r| {
            let t = Instant::now();
            let detected = detect_one(rt, r);
            let refined = detected.as_ref().ok().map(|rep| mitigate_one(rt, r, rep));
            (detected, refined, t.elapsed().as_millis())
        },
        |i, (detected, refined, ms)| {
            let id = inputs.records[i].id.as_str();
            let mut error = None;
            match &detected {
                Ok(rep) => write_line(&mut reports, &ReportLine::from_report(id, rep), &mut failed),
                Err(e) => error = Some(e.clone()),
            }
            match refined {
                Some(Ok(r)) => write_line(&mut out, &RefinedLine::new(id, r), &mut failed),
                Some(Err(e)) => error = Some(e),
                None => {}
            }
            if let Some(e) = &error {
                eprintln!("error: record {id}: {e}");
                failed = true;
            }
            if let Some(d) = diag.as_mut() {
                let diagnostics = detected
                    .as_ref()
                    .map(|r| r.diagnostics.as_slice())
                    .unwrap_or(&[]);
                let line = DiagnosticLine {
                    id,
                    stage: "run",
                    latency_ms: ms,
                    diagnostics,
                    error: error.as_deref(),
                };
                write_line(d, &line, &mut failed);
            }
        },
    );
    Ok(exit_code(failed))
}

fn emit(value: &serde_json::Value, output: Option<&Path>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("json value") + "\n";
    match output {
        Some(p) => std::fs::write(p, text).map_err(|e| io_failure(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn require_file(path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!(
            "input file {} does not exist",
            path.display()
        )))
    }
}

fn eval_detection_cmd(report: &Path, gold: &Path, output: Option<&Path>) -> CmdResult {
    require_file(report)?;
    require_file(gold)?;
    let reports = read_lines::<ReportLine>(report).map_err(|e| io_failure(report, e))?;
    let gold_labels = load_gold(gold).map_err(|e| usage(e.to_string()))?;
    let mut failed = !reports.errors.is_empty() || !gold_labels.errors.is_empty();
    let predicted: HashMap<&str, Judgment> = reports
        .items
        .iter()
        .map(|l| {
            let hal = l.final_judgments.values().any(|j| j.is_hallucination());
            (
                l.id.as_str(),
                if hal {
                    Judgment::Hallucination
                } else {
                    Judgment::NonHallucination
                },
            )
        })
        .collect();
    let mut counts = ConfusionCounts::default();
    let mut missing = 0;
    for g in &gold_labels.items {
        match predicted.get(g.id.as_str()) {
            Some(p) => counts.add(g.label, *p),
            None => missing += 1,
        }
    }
    if missing > 0 {
        eprintln!("warning: {missing} gold ids have no report");
        failed = true;
    }
    let metrics = DetectionMetrics::from_counts(counts);
    emit(
        &json!({ "evaluated": counts.total(), "missing": missing, "metrics": metrics }),
        output,
    )?;
    Ok(exit_code(failed))
}

fn eval_reduction_cmd(
    refined: &Path,
    refs: &Path,
    report: Option<&Path>,
    output: Option<&Path>,
) -> CmdResult {
    require_file(refined)?;
    require_file(refs)?;
    let refined_lines = read_lines::<RefinedLine>(refined).map_err(|e| io_failure(refined, e))?;
    let references = read_lines::<ReferenceLine>(refs).map_err(|e| io_failure(refs, e))?;
    let mut failed = !refined_lines.errors.is_empty() || !references.errors.is_empty();
    let by_id: HashMap<&str, &str> = references
        .items
        .iter()
        .map(|r| (r.id.as_str(), r.reference.as_str()))
        .collect();
    let mut scores = Vec::new();
    for line in &refined_lines.items {
        match by_id.get(line.id.as_str()) {
            Some(reference) => scores.push(OverlapScores::score(&line.refined, reference)),
            None => {
                eprintln!("warning: no reference for {}", line.id);
                failed = true;
            }
        }
    }
    let mut result = json!({ "evaluated": scores.len(), "scores": OverlapScores::mean(&scores) });
    if let Some(path) = report {
        require_file(path)?;
        let reports = read_lines::<ReportLine>(path).map_err(|e| io_failure(path, e))?;
        let reports: Vec<DetectionReport> = reports
            .items
            .into_iter()
            .map(ReportLine::into_report)
            .collect();
        match zero_hallucination_rate(&reports) {
            Ok(rate) => result["zero_hallucination_rate"] = json!(rate),
            Err(e) => return Err(usage(format!("{}: {e}", path.display()))),
        }
    }
    emit(&result, output)?;
    Ok(exit_code(failed))
}

fn sweep_cmd(scores: &Path, gold: &Path, step: f64, output: Option<&Path>) -> CmdResult {
    require_file(scores)?;
    require_file(gold)?;
    let file = load_scores(scores).map_err(|e| usage(e.to_string()))?;
    let gold_labels = load_gold(gold).map_err(|e| usage(e.to_string()))?;
    let mut failed = !file.scores.errors.is_empty() || !gold_labels.errors.is_empty();
    for e in file.scores.errors.iter().chain(&gold_labels.errors) {
        eprintln!("line {}: skipped: {}", e.line, e.message);
    }
    let labels: HashMap<&str, Judgment> = gold_labels
        .items
        .iter()
        .map(|g| (g.id.as_str(), g.label))
        .collect();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for s in &file.scores.items {
        match labels.get(s.id.as_str()) {
            Some(l) => {
                xs.push(s.score / file.max);
                ys.push(*l);
            }
            None => failed = true,
        }
    }
    let (threshold, f1) = sweep_threshold(&xs, &ys, step).map_err(|e| usage(e.to_string()))?;
    emit(
        &json!({
            "threshold": threshold,
            "threshold_raw": threshold * file.max,
            "f1_macro": f1,
            "f1_macro_at_0_5": f1_at(&xs, &ys, 0.5),
            "evaluated": xs.len(),
        }),
        output,
    )?;
    Ok(exit_code(failed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_command(["groundcheck", "frobnicate"]), EXIT_USAGE);
        assert_eq!(
            run_command([
                "groundcheck",
                "detect",
                "/no/such/file.jsonl",
                "-o",
                "/tmp/x"
            ]),
            EXIT_USAGE
        );
        assert_eq!(run_command(["groundcheck", "--help"]), EXIT_OK);
    }

    #[test]
    fn sweep_command() {
        let dir = tempfile::tempdir().unwrap();
        let scores = dir.path().join("s.jsonl");
        let gold = dir.path().join("g.jsonl");
        let out = dir.path().join("o.json");
        std::fs::write(
            &scores,
            "{\"orientation\":\"consistency\",\"max\":1.0}\n{\"id\":\"a\",\"score\":0.1}\n{\"id\":\"b\",\"score\":0.4}\n{\"id\":\"c\",\"score\":0.6}\n{\"id\":\"d\",\"score\":0.9}\n",
        )
        .unwrap();
        std::fs::write(
            &gold,
            "{\"id\":\"a\",\"label\":\"hallucination\"}\n{\"id\":\"b\",\"label\":\"hallucination\"}\n{\"id\":\"c\",\"label\":\"non_hallucination\"}\n{\"id\":\"d\",\"label\":\"non_hallucination\"}\n",
        )
        .unwrap();
        let argv = [
            "groundcheck",
            "sweep-threshold",
            scores.to_str().unwrap(),
            gold.to_str().unwrap(),
            "-o",
            out.to_str().unwrap(),
        ];
        assert_eq!(run_command(argv), EXIT_OK);
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(v["threshold"], 0.5);
        assert_eq!(v["f1_macro"], 1.0);
    }
}
