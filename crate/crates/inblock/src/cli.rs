//! Command-line front end: scenario execution, registry queries, ledger
//! inspection, snapshot round-trips, and analysis reports.
//!
//! Exit-code contract (stable for CI): 0 success, 1 expectation failure
//! (a scenario `expect` step failed, or a chain failed verification),
//! 2 input error (unreadable/invalid files, bad flags, unknown ids).
//!
//! Config precedence, weakest to strongest: built-in defaults, `--config`
//! file, `INBLOCK_*` environment variables, `--set` flags. A scenario's own
//! `genesis` section sits above all of these — the scenario defines the
//! experiment; host configuration only fills in what it leaves open.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use crate::amount::Amount;
use crate::ledger::{Chain, ChainCheck, Hash32};
use crate::registry::RegistryConfig;
use crate::scenario::{
    bundled_scenario, merge_config_values, RunOverrides, Scenario, ScenarioError,
    BUNDLED_SCENARIOS,
};
use crate::sim::{end_to_end_allocation_latency, SimConfig, Simulator};
use crate::snapshot::{load_snapshot, write_snapshot};
use crate::stats::{count_shorter_than, fee_position, read_delegated_extended, size_distribution,
    throughput_requirement, whole_space_cost};

/// Errors that terminate a command, tagged with their exit-code class.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Unreadable or invalid input: exit 2.
    #[error("{0}")]
    Input(String),
    /// A declared expectation did not hold: exit 1.
    #[error("{0}")]
    Expectation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Expectation(_) => 1,
        }
    }
}

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

/// What a successful command prints, plus its exit code (`chain verify` on a
/// tampered export reports on stdout but exits 1).
#[derive(Debug)]
struct Report {
    text: String,
    code: i32,
}

impl Report {
    fn ok(text: String) -> Self {
        Report { text, code: 0 }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "inblock",
    version,
    about = "Autonomous IPv6 address registry on a simulated ledger",
    propagate_version = true
)]
struct Cli {
    /// JSON config file: {"registry": {...}, "sim": {...}}.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Inline config override, repeatable: --set sim.block_interval=20,
    /// --set registry.rate_limit_max_allocations=50.
    #[arg(long = "set", global = true, value_name = "PATH=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Execute a scenario file (or a bundled scenario by bare name).
    Run {
        /// Path to a scenario file, or one of the bundled names.
        scenario: String,
        /// Directory for events.jsonl, chain.jsonl, snapshot.json, routes.json.
        #[arg(long, value_name = "DIR", default_value = "inblock-run")]
        out: PathBuf,
    },
    /// Read-only reports over a saved snapshot.
    Query {
        /// Snapshot produced by `run`.
        #[arg(
            long,
            global = true,
            value_name = "FILE",
            default_value = "inblock-run/snapshot.json"
        )]
        snapshot: PathBuf,
        /// Render a fixed-width table instead of JSON.
        #[arg(long, global = true)]
        table: bool,
        #[command(subcommand)]
        what: QueryCmd,
    },
    /// Offline analysis reports.
    Analyze {
        /// Render a fixed-width table instead of JSON.
        #[arg(long, global = true)]
        table: bool,
        #[command(subcommand)]
        what: AnalyzeCmd,
    },
    /// Ledger inspection.
    Chain {
        #[command(subcommand)]
        what: ChainCmd,
    },
    /// Re-encode a snapshot into canonical bytes at a new path.
    Snapshot {
        /// Where to write the canonical snapshot.
        path: PathBuf,
        /// Snapshot to load state from.
        #[arg(long, value_name = "FILE")]
        from: PathBuf,
    },
    /// Load a snapshot, verify its digest, and print a state summary.
    Restore {
        path: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum QueryCmd {
    /// List all active allocations.
    Allocations,
    /// Full record of one allocation.
    Allocation { id: u64 },
    /// Route-origin attestations registered on one allocation.
    Roas { id: u64 },
    /// Pool usage: counts per prefix length and the exact free fraction.
    Utilization,
}

#[derive(Subcommand, Debug)]
enum AnalyzeCmd {
    /// Histogram of delegated block sizes from a delegated-extended file.
    Fig2 { file: PathBuf },
    /// Fee standing, whole-space cost, throughput, and latency figures.
    Economics {
        /// Yearly transaction count the throughput figure is derived from.
        #[arg(long, default_value_t = 58_700)]
        yearly_tx: u64,
    },
}

#[derive(Subcommand, Debug)]
enum ChainCmd {
    /// Recompute every hash link in an exported chain file.
    Verify { file: PathBuf },
}

/// Binary entry point: parses `std::env::args`, runs the command, prints the
/// report to stdout (errors to stderr), and returns the exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    let env: Vec<(String, String)> = std::env::vars().collect();
    match dispatch(cli, &env) {
        Ok(report) => {
            if !report.text.is_empty() {
                use std::io::Write;
                if let Err(e) = writeln!(std::io::stdout().lock(), "{}", report.text) {
                    // A closed pipe (`inblock … | head`) truncates output by
                    // design; any other write failure is a real I/O error.
                    if e.kind() != std::io::ErrorKind::BrokenPipe {
                        eprintln!("error: {e}");
                        return 2;
                    }
                }
            }
            report.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli, env: &[(String, String)]) -> Result<Report, CliError> {
    let overrides = host_overrides(&cli, env)?;
    match cli.command {
        Command::Run { ref scenario, ref out } => run_scenario(scenario, out, overrides),
        Command::Query {
            ref snapshot,
            table,
            ref what,
        } => query(snapshot, table, what),
        Command::Analyze { table, ref what } => analyze(table, what),
        Command::Chain {
            what: ChainCmd::Verify { ref file },
        } => chain_verify(file),
        Command::Snapshot { ref path, ref from } => reencode_snapshot(path, from),
        Command::Restore { ref path } => restore(path),
    }
}

// --- configuration stack -----------------------------------------------------

fn host_overrides(cli: &Cli, env: &[(String, String)]) -> Result<RunOverrides, CliError> {
    let mut registry = json!({});
    let mut sim = json!({});
    if let Some(path) = &cli.config {
        apply_config_file(&mut registry, &mut sim, path)?;
    }
    apply_env(&mut registry, &mut sim, env)?;
    for spec in &cli.set {
        apply_set(&mut registry, &mut sim, spec)?;
    }
    Ok(RunOverrides {
        registry,
        sim,
        base_dir: None,
    })
}

fn apply_config_file(registry: &mut Value, sim: &mut Value, path: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| input(format!("reading config {}: {e}", path.display())))?;
    let parsed: Value = serde_json::from_str(&text)
        .map_err(|e| input(format!("config {}: {e}", path.display())))?;
    let sections = parsed
        .as_object()
        .ok_or_else(|| input(format!("config {} must be a JSON object", path.display())))?;
    for (key, section) in sections {
        match key.as_str() {
            "registry" => merge_config_values(registry, section),
            "sim" => merge_config_values(sim, section),
            other => {
                return Err(input(format!(
                    "config {}: unknown section {other:?} (expected \"registry\" and/or \"sim\")",
                    path.display()
                )))
            }
        }
    }
    Ok(())
}

/// `INBLOCK_REGISTRY_<KEY>` and `INBLOCK_SIM_<KEY>` set top-level config
/// keys (lowercased). Values parse as JSON where possible, else as strings,
/// so `INBLOCK_SIM_BLOCK_INTERVAL=20` is a number and
/// `INBLOCK_REGISTRY_FEE_DESTINATION=burn` is a string. Variables are
/// applied in sorted order so the outcome never depends on environment
/// iteration order.
fn apply_env(
    registry: &mut Value,
    sim: &mut Value,
    env: &[(String, String)],
) -> Result<(), CliError> {
    let mut pairs: Vec<&(String, String)> = env
        .iter()
        .filter(|(k, _)| k.starts_with("INBLOCK_"))
        .collect();
    pairs.sort();
    for (key, raw) in pairs {
        let (target, field) = if let Some(rest) = key.strip_prefix("INBLOCK_REGISTRY_") {
            (&mut *registry, rest)
        } else if let Some(rest) = key.strip_prefix("INBLOCK_SIM_") {
            (&mut *sim, rest)
        } else {
            return Err(input(format!(
                "unrecognized environment variable {key}: expected INBLOCK_REGISTRY_* or INBLOCK_SIM_*"
            )));
        };
        if field.is_empty() {
            return Err(input(format!("environment variable {key} names no config key")));
        }
        let value = parse_scalar(raw);
        merge_config_values(target, &json!({ field.to_ascii_lowercase(): value }));
    }
    Ok(())
}

/// `--set registry.base_fees_fiat.32="3000"`: first path segment picks the
/// section, the rest descend into nested objects.
fn apply_set(registry: &mut Value, sim: &mut Value, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| input(format!("--set {spec:?}: expected PATH=VALUE")))?;
    let mut segments = path.split('.');
    let target = match segments.next() {
        Some("registry") => &mut *registry,
        Some("sim") => &mut *sim,
        _ => {
            return Err(input(format!(
                "--set {path:?}: path must start with \"registry.\" or \"sim.\""
            )))
        }
    };
    let segments: Vec<&str> = segments.collect();
    if segments.is_empty() || segments.iter().any(|s| s.is_empty()) {
        return Err(input(format!("--set {path:?}: empty config key")));
    }
    let mut value = parse_scalar(raw);
    for segment in segments.iter().skip(1).rev() {
        value = json!({ (*segment): value });
    }
    merge_config_values(target, &json!({ segments[0]: value }));
    Ok(())
}

fn parse_scalar(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

// --- run ----------------------------------------------------------------------

fn load_scenario(name_or_path: &str) -> Result<(Scenario, Option<PathBuf>), CliError> {
    let path = Path::new(name_or_path);
    if path.exists() {
        let scenario = Scenario::from_file(path).map_err(scenario_error)?;
        let base_dir = path.parent().map(Path::to_path_buf);
        return Ok((scenario, base_dir));
    }
    if let Some(text) = bundled_scenario(name_or_path) {
        let scenario = Scenario::from_str(text).map_err(scenario_error)?;
        return Ok((scenario, None));
    }
    let names: Vec<&str> = BUNDLED_SCENARIOS.iter().map(|(n, _)| *n).collect();
    Err(input(format!(
        "no scenario file at {name_or_path:?} and no bundled scenario of that name (bundled: {})",
        names.join(", ")
    )))
}

fn scenario_error(e: ScenarioError) -> CliError {
    match e {
        ScenarioError::ExpectationFailed { .. } => CliError::Expectation(e.to_string()),
        _ => CliError::Input(e.to_string()),
    }
}

fn run_scenario(name_or_path: &str, out: &Path, mut overrides: RunOverrides) -> Result<Report, CliError> {
    let (scenario, base_dir) = load_scenario(name_or_path)?;
    overrides.base_dir = base_dir;
    let outcome = scenario.run(&overrides).map_err(scenario_error)?;

    std::fs::create_dir_all(out)
        .map_err(|e| input(format!("creating {}: {e}", out.display())))?;
    let write = |file: &str, bytes: &str| -> Result<(), CliError> {
        let path = out.join(file);
        std::fs::write(&path, bytes).map_err(|e| input(format!("writing {}: {e}", path.display())))
    };
    write("events.jsonl", &outcome.simulator.events_jsonl())?;
    write("chain.jsonl", &outcome.simulator.chain().export_jsonl())?;
    write("snapshot.json", &write_snapshot(&outcome.simulator))?;
    let routes = serde_json::to_string_pretty(&outcome.routes_report()).expect("routes serialize");
    write("routes.json", &routes)?;

    let labels: serde_json::Map<String, Value> = outcome
        .labels
        .iter()
        .map(|(name, label)| {
            (
                name.clone(),
                json!({ "tx_hash": label.tx_hash.to_hex(), "allocation": label.allocation }),
            )
        })
        .collect();
    let summary = json!({
        "scenario": scenario.name,
        "seed": scenario.seed,
        "chain_height": outcome.simulator.chain().height(),
        "clock": outcome.simulator.clock(),
        "events": outcome.simulator.events().len(),
        "active_allocations": outcome.simulator.registry().active_count(),
        "paused": outcome.simulator.registry().paused(),
        "labels": labels,
        "out_dir": out.display().to_string(),
        "files": ["chain.jsonl", "events.jsonl", "routes.json", "snapshot.json"],
    });
    Ok(Report::ok(pretty(&summary)))
}

// --- query ---------------------------------------------------------------------

fn load_simulator(path: &Path) -> Result<Simulator, CliError> {
    load_snapshot(path).map_err(|e| input(format!("snapshot {}: {e}", path.display())))
}

fn query(snapshot: &Path, table: bool, what: &QueryCmd) -> Result<Report, CliError> {
    let sim = load_simulator(snapshot)?;
    let registry = sim.registry();
    let text = match what {
        QueryCmd::Allocations => {
            let rows: Vec<&crate::registry::AllocationRecord> = registry.allocations().collect();
            if table {
                render_table(
                    &["ID", "PREFIX", "HOLDER", "CREATED", "EXPIRES", "ROAS"],
                    &rows
                        .iter()
                        .map(|r| {
                            vec![
                                r.id.to_string(),
                                r.prefix.to_string(),
                                r.holder.to_hex(),
                                r.created_at.to_string(),
                                r.expiration.to_string(),
                                r.roas.len().to_string(),
                            ]
                        })
                        .collect::<Vec<_>>(),
                )
            } else {
                pretty(&serde_json::to_value(&rows).expect("allocations serialize"))
            }
        }
        QueryCmd::Allocation { id } => {
            let record = registry
                .allocation(*id)
                .ok_or_else(|| input(format!("no allocation with id {id}")))?;
            if table {
                render_kv(&[
                    ("id", record.id.to_string()),
                    ("prefix", record.prefix.to_string()),
                    ("holder", record.holder.to_hex()),
                    ("created_at", record.created_at.to_string()),
                    ("expiration", record.expiration.to_string()),
                    (
                        "aggregatable_with",
                        record
                            .aggregatable_with
                            .map(|p| p.to_string())
                            .unwrap_or_else(|| "-".to_string()),
                    ),
                    (
                        "metadata_pointer",
                        record.metadata_pointer.clone().unwrap_or_else(|| "-".to_string()),
                    ),
                    ("roas", record.roas.len().to_string()),
                ])
            } else {
                pretty(&serde_json::to_value(record).expect("allocation serializes"))
            }
        }
        QueryCmd::Roas { id } => {
            let record = registry
                .allocation(*id)
                .ok_or_else(|| input(format!("no allocation with id {id}")))?;
            if table {
                render_table(
                    &["PREFIX", "ORIGIN_ASN", "MAX_LENGTH"],
                    &record
                        .roas
                        .iter()
                        .map(|r| {
                            vec![
                                r.prefix.to_string(),
                                r.origin_asn.to_string(),
                                r.max_length.to_string(),
                            ]
                        })
                        .collect::<Vec<_>>(),
                )
            } else {
                pretty(&serde_json::to_value(&record.roas).expect("roas serialize"))
            }
        }
        QueryCmd::Utilization => {
            let utilization = registry.pool().utilization();
            if table {
                let mut rows: Vec<Vec<String>> = utilization
                    .allocated_by_length
                    .iter()
                    .map(|(len, count)| vec![format!("/{len}"), count.to_string()])
                    .collect();
                rows.push(vec![
                    "free".to_string(),
                    utilization.free_fraction.format_sigfigs(6),
                ]);
                render_table(&["LENGTH", "COUNT"], &rows)
            } else {
                pretty(&json!({
                    "pool": registry.config.pool.to_string(),
                    "active_allocations": registry.active_count(),
                    "allocated_by_length": utilization.allocated_by_length,
                    "free_fraction": utilization.free_fraction,
                }))
            }
        }
    };
    Ok(Report::ok(text))
}

// --- analyze -------------------------------------------------------------------

fn analyze(table: bool, what: &AnalyzeCmd) -> Result<Report, CliError> {
    match what {
        AnalyzeCmd::Fig2 { file } => analyze_fig2(table, file),
        AnalyzeCmd::Economics { yearly_tx } => analyze_economics(table, *yearly_tx),
    }
}

fn analyze_fig2(table: bool, file: &Path) -> Result<Report, CliError> {
    let outcome = read_delegated_extended(file).map_err(|e| input(e.to_string()))?;
    let histogram = size_distribution(&outcome.records);
    let shorter = count_shorter_than(&histogram, 29);
    let text = if table {
        let mut rows: Vec<Vec<String>> = histogram
            .iter()
            .map(|(len, count)| vec![format!("/{len}"), count.to_string()])
            .collect();
        rows.push(vec!["shorter than /29".to_string(), shorter.to_string()]);
        rows.push(vec!["records".to_string(), outcome.records.len().to_string()]);
        rows.push(vec!["malformed".to_string(), outcome.diagnostics.len().to_string()]);
        render_table(&["LENGTH", "COUNT"], &rows)
    } else {
        let diagnostics: Vec<Value> = outcome
            .diagnostics
            .iter()
            .map(|d| json!({ "line": d.line, "reason": d.reason }))
            .collect();
        pretty(&json!({
            "records": outcome.records.len(),
            "skipped": outcome.skipped,
            "histogram": histogram,
            "shorter_than_29": shorter,
            "diagnostics": diagnostics,
        }))
    };
    Ok(Report::ok(text))
}

fn analyze_economics(table: bool, yearly_tx: u64) -> Result<Report, CliError> {
    let config = RegistryConfig::default();
    let mut fees = Vec::new();
    for (length, fee) in &config.base_fees_fiat {
        let position = fee_position(fee, *length)
            .map_err(|e| input(format!("fee table names /{length}: {e}")))?;
        fees.push(position);
    }
    let fee_32 = config
        .base_fees_fiat
        .get(&32)
        .cloned()
        .unwrap_or_else(|| Amount::from_u64(3000));
    let whole_space_20 = whole_space_cost(&fee_32, 20);
    let whole_space_0 = whole_space_cost(&fee_32, 0);
    // The widely quoted back-of-the-envelope figure for pricing the entire
    // address space rounds to 12.6 trillion; exact arithmetic over the same
    // inputs gives 2^32 x $3,000 = $12,884,901,888,000. Both belong in the
    // report.
    let published_whole_space = Amount::from_u64(12_600_000_000_000);
    let throughput = throughput_requirement(yearly_tx);
    let sim = SimConfig::default();
    let latency = end_to_end_allocation_latency(
        sim.inclusion_delay,
        sim.block_interval,
        sim.confirmation_depth,
    );

    let text = if table {
        let mut rows = Vec::new();
        for position in &fees {
            rows.push(vec![
                format!("fee /{}", position.length),
                format!("${}", position.fee),
                format!("${}-${}", position.range.min, position.range.max),
                format!("{:?}", position.standing),
            ]);
        }
        rows.push(vec![
            "whole space at /20".to_string(),
            format!("${whole_space_20}"),
            String::new(),
            String::new(),
        ]);
        rows.push(vec![
            "whole space at /0".to_string(),
            format!("${whole_space_0}"),
            format!("published ${published_whole_space}"),
            String::new(),
        ]);
        rows.push(vec![
            "throughput required".to_string(),
            format!("{} tx/s", throughput.format_sigfigs(2)),
            format!("{yearly_tx} tx/year"),
            String::new(),
        ]);
        rows.push(vec![
            "confirmation latency".to_string(),
            format!("{latency} s"),
            String::new(),
            String::new(),
        ]);
        render_table(&["FIGURE", "VALUE", "CONTEXT", "STANDING"], &rows)
    } else {
        pretty(&json!({
            "fees": fees,
            "whole_space": {
                "fee_per_32": fee_32,
                "cost_at_20": whole_space_20,
                "cost_at_0": {
                    "computed": whole_space_0,
                    "published_estimate": published_whole_space,
                },
            },
            "throughput": {
                "yearly_tx": yearly_tx,
                "required_tx_per_second": throughput.format_sigfigs(2),
                "exact": throughput,
            },
            "latency": {
                "inclusion_delay": sim.inclusion_delay,
                "block_interval": sim.block_interval,
                "confirmation_depth": sim.confirmation_depth,
                "end_to_end_seconds": latency,
            },
        }))
    };
    Ok(Report::ok(text))
}

// --- chain / snapshot ------------------------------------------------------------

fn chain_verify(file: &Path) -> Result<Report, CliError> {
    let text = std::fs::read_to_string(file)
        .map_err(|e| input(format!("reading {}: {e}", file.display())))?;
    let chain = Chain::import_jsonl(&text)
        .map_err(|e| input(format!("chain {}: {e}", file.display())))?;
    match chain.verify() {
        ChainCheck::Valid => Ok(Report::ok(pretty(&json!({
            "status": "ok",
            "height": chain.height(),
            "blocks": chain.blocks().len(),
        })))),
        ChainCheck::FirstBadHeight(height) => Ok(Report {
            text: pretty(&json!({
                "status": "first_bad_height",
                "first_bad_height": height,
            })),
            code: 1,
        }),
    }
}

fn reencode_snapshot(path: &Path, from: &Path) -> Result<Report, CliError> {
    let sim = load_simulator(from)?;
    let bytes = write_snapshot(&sim);
    let state_json = serde_json::to_string(&sim).expect("state serializes");
    let digest = Hash32::of(state_json.as_bytes()).to_hex();
    std::fs::write(path, &bytes)
        .map_err(|e| input(format!("writing {}: {e}", path.display())))?;
    Ok(Report::ok(pretty(&json!({
        "path": path.display().to_string(),
        "bytes": bytes.len(),
        "digest": digest,
    }))))
}

fn restore(path: &Path) -> Result<Report, CliError> {
    let sim = load_simulator(path)?;
    Ok(Report::ok(pretty(&json!({
        "clock": sim.clock(),
        "chain_height": sim.chain().height(),
        "accounts": sim.accounts().len(),
        "active_allocations": sim.registry().active_count(),
        "paused": sim.registry().paused(),
        "pending_txs": sim.pending_count(),
    }))))
}

// --- rendering --------------------------------------------------------------------

fn pretty(value: &Value) -> String {
    serde_json::to_string_pretty(value).expect("report serializes")
}

fn render_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let columns = headers.len();
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate().take(columns) {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    let push_row = |cells: Vec<&str>, out: &mut String| {
        let mut line = String::new();
        for (i, cell) in cells.iter().enumerate().take(columns) {
            if i > 0 {
                line.push_str("  ");
            }
            line.push_str(cell);
            if i + 1 < columns {
                for _ in cell.len()..widths[i] {
                    line.push(' ');
                }
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    };
    push_row(headers.to_vec(), &mut out);
    let separator: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    push_row(separator.iter().map(String::as_str).collect(), &mut out);
    for row in rows {
        push_row(row.iter().map(String::as_str).collect(), &mut out);
    }
    out.pop();
    out
}

fn render_kv(pairs: &[(&str, String)]) -> String {
    let width = pairs.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (key, value) in pairs {
        out.push_str(&format!("{key:width$}  {value}\n"));
    }
    out.pop();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(args).expect("args parse")
    }

    fn overrides_for(args: &[&str], env: &[(&str, &str)]) -> Result<RunOverrides, CliError> {
        let cli = parse(args);
        let env: Vec<(String, String)> = env
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        host_overrides(&cli, &env)
    }

    #[test]
    fn set_flags_build_nested_objects() {
        let overrides = overrides_for(
            &[
                "inblock",
                "run",
                "x",
                "--set",
                "sim.block_interval=20",
                "--set",
                "registry.base_fees_fiat.32=\"2500\"",
                "--set",
                "registry.fee_destination=burn",
            ],
            &[],
        )
        .unwrap();
        assert_eq!(overrides.sim, json!({ "block_interval": 20 }));
        assert_eq!(
            overrides.registry,
            json!({ "base_fees_fiat": { "32": "2500" }, "fee_destination": "burn" })
        );
    }

    #[test]
    fn malformed_set_flags_are_input_errors() {
        for bad in [
            "no_equals",
            "pool.oops=1",
            "registry=5",
            "sim.=5",
            "sim..x=5",
        ] {
            let err = overrides_for(&["inblock", "run", "x", "--set", bad], &[]).unwrap_err();
            assert_eq!(err.exit_code(), 2, "--set {bad}: {err}");
        }
    }

    #[test]
    fn env_vars_apply_in_sorted_order_and_reject_typos() {
        let overrides = overrides_for(
            &["inblock", "run", "x"],
            &[
                ("INBLOCK_SIM_BLOCK_INTERVAL", "20"),
                ("INBLOCK_REGISTRY_FEE_DESTINATION", "burn"),
                ("PATH", "/usr/bin"),
            ],
        )
        .unwrap();
        assert_eq!(overrides.sim, json!({ "block_interval": 20 }));
        assert_eq!(overrides.registry, json!({ "fee_destination": "burn" }));

        let err = overrides_for(&["inblock", "run", "x"], &[("INBLOCK_TYPO", "1")]).unwrap_err();
        assert!(err.to_string().contains("INBLOCK_TYPO"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn config_file_is_weakest_env_middle_flags_strongest() {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("config.json");
        std::fs::write(
            &config,
            r#"{ "sim": { "block_interval": 5, "inclusion_delay": 60 },
                 "registry": { "asn_cap": 7 } }"#,
        )
        .unwrap();
        let overrides = overrides_for(
            &[
                "inblock",
                "run",
                "x",
                "--config",
                config.to_str().unwrap(),
                "--set",
                "sim.block_interval=31",
            ],
            &[("INBLOCK_SIM_BLOCK_INTERVAL", "20"), ("INBLOCK_SIM_MAX_TXS_PER_BLOCK", "9")],
        )
        .unwrap();
        // File set 5, env overrode to 20, the flag wins with 31; untouched
        // file and env keys survive alongside.
        assert_eq!(
            overrides.sim,
            json!({ "block_interval": 31, "inclusion_delay": 60, "max_txs_per_block": 9 })
        );
        assert_eq!(overrides.registry, json!({ "asn_cap": 7 }));
    }

    #[test]
    fn unknown_config_file_sections_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("config.json");
        std::fs::write(&config, r#"{ "simulator": {} }"#).unwrap();
        let err = overrides_for(
            &["inblock", "run", "x", "--config", config.to_str().unwrap()],
            &[],
        )
        .unwrap_err();
        assert!(err.to_string().contains("simulator"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn tables_align_and_pad() {
        let table = render_table(
            &["ID", "PREFIX"],
            &[
                vec!["1".to_string(), "2001:1000::/32".to_string()],
                vec!["12".to_string(), "2001:2000::/48".to_string()],
            ],
        );
        assert_eq!(
            table,
            "ID  PREFIX\n--  --------------\n1   2001:1000::/32\n12  2001:2000::/48"
        );
    }

    #[test]
    fn missing_scenario_lists_bundled_names() {
        let err = load_scenario("definitely_not_here").unwrap_err();
        let message = err.to_string();
        assert!(message.contains("basic_allocation"), "{message}");
        assert!(message.contains("stockpile_storm"), "{message}");
    }

    #[test]
    fn run_writes_artifacts_and_summary() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let cli = parse(&[
            "inblock",
            "run",
            "basic_allocation",
            "--out",
            out.to_str().unwrap(),
        ]);
        let report = dispatch(cli, &[]).unwrap();
        assert_eq!(report.code, 0);
        let summary: Value = serde_json::from_str(&report.text).unwrap();
        assert_eq!(summary["scenario"], "basic_allocation");
        assert_eq!(summary["active_allocations"], 1);
        assert_eq!(summary["labels"]["first"]["allocation"], 1);
        for file in ["events.jsonl", "chain.jsonl", "snapshot.json", "routes.json"] {
            assert!(out.join(file).exists(), "{file} missing");
        }

        // The snapshot the run wrote restores to a queryable state.
        let snapshot = out.join("snapshot.json");
        let cli = parse(&[
            "inblock",
            "query",
            "--snapshot",
            snapshot.to_str().unwrap(),
            "allocations",
        ]);
        let report = dispatch(cli, &[]).unwrap();
        let allocations: Value = serde_json::from_str(&report.text).unwrap();
        assert_eq!(allocations.as_array().unwrap().len(), 1);
        assert_eq!(allocations[0]["prefix"], "2001:1000::/32");
    }

    #[test]
    fn failed_expectation_exits_one_and_step_failure_exits_two() {
        let dir = tempfile::tempdir().unwrap();
        let scenario = dir.path().join("wrong.json");
        std::fs::write(
            &scenario,
            r#"{
                "name": "wrong",
                "genesis": {
                    "sim": { "scheme": "stub" },
                    "accounts": [
                        { "name": "registry", "roles": ["registry"] },
                        { "name": "alice", "balance": "1000" }
                    ],
                    "oracle_samples": [
                        { "kind": "exchange_rate", "value": "200", "as_of": 1600000000, "source_id": "genesis" }
                    ]
                },
                "steps": [
                    { "op": "expect", "expect": { "kind": "active_allocations", "count": 5 } }
                ]
            }"#,
        )
        .unwrap();
        let out = dir.path().join("out");
        let cli = parse(&[
            "inblock",
            "run",
            scenario.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        let err = dispatch(cli, &[]).unwrap_err();
        assert_eq!(err.exit_code(), 1, "{err}");
        assert!(err.to_string().contains("step 0"), "{err}");

        // A step that cannot execute is an authoring error, not a failed
        // expectation.
        let broke = dir.path().join("broke.json");
        std::fs::write(
            &broke,
            r#"{
                "name": "broke",
                "genesis": {
                    "sim": { "scheme": "stub" },
                    "accounts": [
                        { "name": "registry", "roles": ["registry"] },
                        { "name": "alice", "balance": "1" }
                    ],
                    "oracle_samples": []
                },
                "steps": [
                    { "op": "submit", "from": "alice", "value": "1000",
                      "action": { "kind": "transfer", "to": "registry" } }
                ]
            }"#,
        )
        .unwrap();
        let cli = parse(&[
            "inblock",
            "run",
            broke.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        let err = dispatch(cli, &[]).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{err}");
    }

    #[test]
    fn economics_report_carries_the_frozen_figures() {
        let report = analyze_economics(false, 58_700).unwrap();
        let v: Value = serde_json::from_str(&report.text).unwrap();
        assert_eq!(v["whole_space"]["cost_at_20"], "12288000");
        assert_eq!(v["whole_space"]["cost_at_0"]["computed"], "12884901888000");
        assert_eq!(
            v["whole_space"]["cost_at_0"]["published_estimate"],
            "12600000000000"
        );
        assert_eq!(v["throughput"]["required_tx_per_second"], "0.0019");
        assert_eq!(v["latency"]["end_to_end_seconds"], 341);
        let fees = v["fees"].as_array().unwrap();
        assert_eq!(fees.len(), 2);
        assert_eq!(fees[0]["length"], 32);
        assert_eq!(fees[0]["fee"], "3000");
        assert_eq!(fees[0]["standing"], "above_range");
        assert_eq!(fees[1]["length"], 48);
        assert_eq!(fees[1]["fee"], "300");
        assert_eq!(fees[1]["standing"], "within_range");
    }

    #[test]
    fn fig2_report_reproduces_the_vendored_histogram() {
        let report = analyze_fig2(
            false,
            Path::new(concat!(
                env!("CARGO_MANIFEST_DIR"),
                "/data/delegated-extended-fixture.txt"
            )),
        )
        .unwrap();
        let v: Value = serde_json::from_str(&report.text).unwrap();
        assert_eq!(v["histogram"]["32"], 17_795);
        assert_eq!(v["histogram"]["48"], 6_283);
        assert_eq!(v["histogram"]["29"], 7_903);
        assert_eq!(v["shorter_than_29"], 191);
        assert_eq!(v["diagnostics"].as_array().unwrap().len(), 0);
    }

    #[test]
    fn chain_verify_pinpoints_tampering_via_files() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let cli = parse(&[
            "inblock",
            "run",
            "basic_allocation",
            "--out",
            out.to_str().unwrap(),
        ]);
        dispatch(cli, &[]).unwrap();
        let chain_file = out.join("chain.jsonl");

        let cli = parse(&["inblock", "chain", "verify", chain_file.to_str().unwrap()]);
        let report = dispatch(cli, &[]).unwrap();
        assert_eq!(report.code, 0);
        let v: Value = serde_json::from_str(&report.text).unwrap();
        assert_eq!(v["status"], "ok");

        let text = std::fs::read_to_string(&chain_file).unwrap();
        let tampered_file = dir.path().join("tampered.jsonl");
        // Bump one digit of block 3's timestamp (empty blocks tick every
        // 17 s once production starts at genesis+120).
        let tampered = text.replacen("\"timestamp\":1600000154", "\"timestamp\":1600000155", 1);
        assert_ne!(tampered, text, "expected block 3 at genesis+154");
        std::fs::write(&tampered_file, tampered).unwrap();
        let cli = parse(&["inblock", "chain", "verify", tampered_file.to_str().unwrap()]);
        let report = dispatch(cli, &[]).unwrap();
        assert_eq!(report.code, 1);
        let v: Value = serde_json::from_str(&report.text).unwrap();
        assert_eq!(v["first_bad_height"], 3);
    }

    #[test]
    fn snapshot_reencode_is_byte_identical_and_restore_summarizes() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let cli = parse(&[
            "inblock",
            "run",
            "basic_allocation",
            "--out",
            out.to_str().unwrap(),
        ]);
        dispatch(cli, &[]).unwrap();
        let original = out.join("snapshot.json");
        let copy = dir.path().join("copy.json");

        let cli = parse(&[
            "inblock",
            "snapshot",
            copy.to_str().unwrap(),
            "--from",
            original.to_str().unwrap(),
        ]);
        let report = dispatch(cli, &[]).unwrap();
        assert_eq!(report.code, 0);
        assert_eq!(
            std::fs::read(&original).unwrap(),
            std::fs::read(&copy).unwrap()
        );

        let cli = parse(&["inblock", "restore", copy.to_str().unwrap()]);
        let report = dispatch(cli, &[]).unwrap();
        let v: Value = serde_json::from_str(&report.text).unwrap();
        assert_eq!(v["active_allocations"], 1);
        assert_eq!(v["chain_height"], 14);

        // One flipped byte inside the state is caught by the digest.
        let bytes = std::fs::read_to_string(&original).unwrap();
        let corrupt = bytes.replacen("\"clock\":", "\"clonk\":", 1);
        assert_ne!(corrupt, bytes);
        let bad = dir.path().join("bad.json");
        std::fs::write(&bad, corrupt).unwrap();
        let cli = parse(&["inblock", "restore", bad.to_str().unwrap()]);
        let err = dispatch(cli, &[]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("digest"), "{err}");
    }

    #[test]
    fn host_config_reaches_the_simulator_unless_the_scenario_pins_it() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        // basic_allocation does not pin max_txs_per_block, so the flag lands.
        let cli = parse(&[
            "inblock",
            "run",
            "basic_allocation",
            "--out",
            out.to_str().unwrap(),
            "--set",
            "sim.max_txs_per_block=1",
        ]);
        let report = dispatch(cli, &[]).unwrap();
        assert_eq!(report.code, 0);
        let snapshot: Simulator = load_snapshot(&out.join("snapshot.json")).unwrap();
        assert_eq!(snapshot.config().max_txs_per_block, 1);
    }
}
