//! The `assure` command-line driver.
//!
//! Exit codes: 0 success, 1 domain failure (error diagnostics, defeated top
//! claim, coverage gaps, violated duty, non-serious incident report), 2 usage,
//! I/O or parse error.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::coverage::{coverage_gaps, reconcile_defeaters, Layer, Registry};
use crate::dsl::{parse, print};
use crate::eval::{evaluate, explain, Status, StatusAssignment};
use crate::incident::{
    generate_serious_report, trigger_defeaters, ConsequenceClass, IncidentError, IncidentEvent, Ledger,
};
use crate::model::{has_errors, ArgumentGraph, AttackClass, Severity};
use crate::report::{compliance_report, export_dot};
use crate::sim::{run_simulation, SimConfig};

#[derive(Parser, Debug)]
#[command(name = "assure", version, about = "Maintain and evaluate adversarial-robustness assurance cases")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and validate a case.
    Check { file: PathBuf },
    /// Print the status of every node.
    Eval {
        file: PathBuf,
        /// Print the explanation tree of a node (repeatable).
        #[arg(long, value_name = "ID")]
        explain: Vec<String>,
        #[arg(long)]
        json: bool,
    },
    /// Export a Graphviz diagram.
    Dot {
        file: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// List in-scope attack classes without active guardrail coverage.
    Gaps {
        file: PathBuf,
        #[arg(long)]
        registry: PathBuf,
    },
    /// Open and retire coverage defeaters.
    Reconcile {
        file: PathBuf,
        #[arg(long)]
        registry: PathBuf,
        /// Apply the changes and rewrite the case file.
        #[arg(long)]
        write: bool,
    },
    /// Incident ledger operations.
    Incident {
        #[command(subcommand)]
        action: IncidentCommand,
    },
    /// Run the layered-defense simulation.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Append generated incidents to this ledger.
        #[arg(long)]
        ingest: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compliance report for a case.
    Report {
        file: PathBuf,
        #[arg(long)]
        registry: PathBuf,
        #[arg(long)]
        ledger: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum IncidentCommand {
    /// Record an event.
    Add {
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long)]
        class: AttackClass,
        /// Layer that stopped the output (`L2` or `l2_input_detection`).
        #[arg(long, value_parser = parse_layer)]
        blocked_at: Option<Layer>,
        /// The output was intended by the developers.
        #[arg(long)]
        intended: bool,
        #[arg(long, default_value = "none")]
        consequence: ConsequenceClass,
        #[arg(long)]
        session: Option<String>,
        #[arg(long, default_value = "")]
        notes: String,
        /// RFC 3339; defaults to now.
        #[arg(long)]
        timestamp: Option<String>,
    },
    /// List recorded incidents.
    List {
        #[arg(long)]
        ledger: PathBuf,
    },
    /// Generate the report of a serious incident and record it as filed.
    Report {
        #[arg(long)]
        ledger: PathBuf,
        id: u64,
        /// Case whose affected claims are listed.
        #[arg(long)]
        case: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Filing timestamp, RFC 3339; defaults to now.
        #[arg(long)]
        at: Option<String>,
    },
    /// Add defeaters for incidents against scoped goals.
    Trigger {
        #[arg(long)]
        ledger: PathBuf,
        file: PathBuf,
        /// Apply the changes and rewrite the case file.
        #[arg(long)]
        write: bool,
    },
}

fn parse_layer(s: &str) -> Result<Layer, String> {
    Layer::parse_loose(s).ok_or_else(|| format!("unknown layer `{s}`"))
}

/// Usage, I/O and parse failures; reported with exit code 2.
struct Fatal(String);

impl From<io::Error> for Fatal {
    fn from(e: io::Error) -> Fatal {
        Fatal(e.to_string())
    }
}

type Outcome = Result<i32, Fatal>;

fn read(path: &Path) -> Result<String, Fatal> {
    fs::read_to_string(path).map_err(|e| Fatal(format!("cannot read {}: {e}", path.display())))
}

fn load_case(path: &Path) -> Result<ArgumentGraph, Fatal> {
    let text = read(path)?;
    parse(&text).map_err(|errors| {
        let lines: Vec<String> = errors.iter().map(|e| format!("{}:{e}", path.display())).collect();
        Fatal(lines.join("\n"))
    })
}

fn load_registry(path: &Path) -> Result<Registry, Fatal> {
    Registry::from_jsonl(&read(path)?).map_err(|e| Fatal(format!("{}: {e}", path.display())))
}

/// Loads a ledger; a missing file is an empty ledger when `create` is set.
fn load_ledger(path: &Path, create: bool) -> Result<Ledger, Fatal> {
    if create && !path.exists() {
        return Ok(Ledger::new());
    }
    Ledger::from_jsonl(&read(path)?).map_err(|e| Fatal(format!("{}: {e}", path.display())))
}

fn evaluate_case(graph: &ArgumentGraph) -> Result<StatusAssignment, Fatal> {
    evaluate(graph).map_err(|e| Fatal(e.to_string()))
}

/// Writes through a temporary file in the same directory, then renames.
fn write_atomic(path: &Path, contents: &str) -> Result<(), Fatal> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.persist(path).map_err(|e| Fatal(format!("cannot write {}: {}", path.display(), e.error)))?;
    Ok(())
}

/// Appends the ledger entries from `start` on to `path`.
fn append_ledger(path: &Path, ledger: &Ledger, start: usize) -> Result<(), Fatal> {
    let mut file = fs::OpenOptions::new().create(true).append(true).open(path)?;
    file.write_all(ledger.jsonl_from(start).as_bytes())?;
    Ok(())
}

fn emit(out: &mut dyn Write, output: Option<&Path>, text: &str) -> Result<(), Fatal> {
    match output {
        Some(path) => write_atomic(path, text),
        None => Ok(out.write_all(text.as_bytes())?),
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn worst_top_claim(graph: &ArgumentGraph, assignment: &StatusAssignment) -> Option<Status> {
    graph.root_goals().iter().filter_map(|id| assignment.status(id.as_str())).max()
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = err.write_all(text.as_bytes());
                2
            } else {
                let _ = out.write_all(text.as_bytes());
                0
            };
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(Fatal(message)) => {
            let _ = writeln!(err, "error: {message}");
            2
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    match command {
        Command::Check { file } => check(&file, out),
        Command::Eval { file, explain, json } => eval(&file, &explain, json, out),
        Command::Dot { file, output } => {
            let graph = load_case(&file)?;
            let assignment = evaluate_case(&graph)?;
            let dot = export_dot(&graph, &assignment).map_err(|e| Fatal(e.to_string()))?;
            emit(out, output.as_deref(), &dot)?;
            Ok(0)
        }
        Command::Gaps { file, registry } => {
            let graph = load_case(&file)?;
            let gaps = coverage_gaps(&load_registry(&registry)?, &graph);
            for gap in &gaps {
                writeln!(out, "{gap}")?;
            }
            if gaps.is_empty() {
                writeln!(out, "no coverage gaps")?;
            }
            Ok(i32::from(!gaps.is_empty()))
        }
        Command::Reconcile { file, registry, write } => {
            let graph = load_case(&file)?;
            let rec = reconcile_defeaters(&load_registry(&registry)?, &graph);
            write!(out, "{}", rec.changes)?;
            if rec.changes.is_empty() {
                writeln!(out, "no changes")?;
            }
            for id in &rec.deprecation_candidates {
                writeln!(out, "deprecation candidate: {id}")?;
            }
            if write && !rec.changes.is_empty() {
                rewrite_case(&file, &graph, &rec.changes)?;
            }
            Ok(0)
        }
        Command::Incident { action } => incident(action, out, err),
        Command::Simulate { config, ingest, output } => {
            let config = SimConfig::from_toml(&read(&config)?).map_err(|e| Fatal(e.to_string()))?;
            let outcome = run_simulation(&config).map_err(|e| Fatal(e.to_string()))?;
            emit(out, output.as_deref(), &outcome.to_json())?;
            if let Some(path) = ingest {
                let mut ledger = load_ledger(&path, true)?;
                let start = ledger.entry_count();
                let ids = outcome.ingest(&mut ledger).map_err(|e| Fatal(e.to_string()))?;
                append_ledger(&path, &ledger, start)?;
                writeln!(err, "ingested {} incidents into {}", ids.len(), path.display())?;
            }
            Ok(0)
        }
        Command::Report { file, registry, ledger, output } => {
            let graph = load_case(&file)?;
            let assignment = evaluate_case(&graph)?;
            let report = compliance_report(&graph, &assignment, &load_registry(&registry)?, &load_ledger(&ledger, false)?)
                .map_err(|e| Fatal(e.to_string()))?;
            emit(out, output.as_deref(), &report.render())?;
            Ok(i32::from(report.any_violated()))
        }
    }
}

fn rewrite_case(file: &Path, graph: &ArgumentGraph, changes: &crate::model::ChangeSet) -> Result<(), Fatal> {
    let updated = graph.apply(changes).map_err(|e| Fatal(e.to_string()))?;
    let text = print(&updated).map_err(|e| Fatal(e.to_string()))?;
    write_atomic(file, &text)
}

fn check(file: &Path, out: &mut dyn Write) -> Outcome {
    let graph = load_case(file)?;
    let diagnostics = graph.validate();
    for d in &diagnostics {
        writeln!(out, "{}: {d}", file.display())?;
    }
    let warnings = diagnostics.iter().filter(|d| d.severity == Severity::Warning).count();
    if has_errors(&diagnostics) {
        return Ok(1);
    }
    writeln!(
        out,
        "{}: ok ({} nodes, {} edges, {warnings} warnings)",
        file.display(),
        graph.node_count(),
        graph.edge_count()
    )?;
    Ok(0)
}

fn eval(file: &Path, ids: &[String], json: bool, out: &mut dyn Write) -> Outcome {
    let graph = load_case(file)?;
    let assignment = evaluate_case(&graph)?;
    if json {
        writeln!(out, "{}", assignment.to_json())?;
    } else {
        write!(out, "{}", assignment.to_text())?;
    }
    for id in ids {
        let explanation = explain(&assignment, id).map_err(|e| Fatal(e.to_string()))?;
        write!(out, "\n{}", explanation.render())?;
    }
    Ok(i32::from(worst_top_claim(&graph, &assignment) == Some(Status::Defeated)))
}

fn incident(action: IncidentCommand, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    match action {
        IncidentCommand::Add {
            ledger: path,
            class,
            blocked_at,
            intended,
            consequence,
            session,
            notes,
            timestamp,
        } => {
            let mut ledger = load_ledger(&path, true)?;
            let start = ledger.entry_count();
            let event = IncidentEvent {
                timestamp: timestamp.unwrap_or_else(now),
                attack_class: class,
                blocked_at,
                unintended: !intended,
                consequence,
                session,
                notes,
            };
            let id = ledger.record_incident(event).map_err(|e| Fatal(e.to_string()))?;
            append_ledger(&path, &ledger, start)?;
            let record = ledger.get(id).expect("just recorded");
            writeln!(out, "recorded incident {id} ({})", record.classification())?;
            Ok(0)
        }
        IncidentCommand::List { ledger } => {
            let ledger = load_ledger(&ledger, false)?;
            for r in ledger.incidents() {
                let e = &r.event;
                let delivery = e.blocked_at.map_or("delivered".to_string(), |l| format!("blocked at {}", l.short()));
                let filed = if ledger.report_filed(r.id) { " [report filed]" } else { "" };
                writeln!(
                    out,
                    "#{} {} {} {delivery} {} {}{filed}",
                    r.id,
                    e.timestamp,
                    e.attack_class,
                    e.consequence,
                    r.classification()
                )?;
            }
            if ledger.is_empty() {
                writeln!(out, "no incidents")?;
            }
            Ok(0)
        }
        IncidentCommand::Report { ledger: path, id, case, output, at } => {
            let mut ledger = load_ledger(&path, false)?;
            let graph = case.as_deref().map(load_case).transpose()?;
            let assignment = graph.as_ref().map(evaluate_case).transpose()?;
            let context = graph.as_ref().zip(assignment.as_ref());
            let report = match generate_serious_report(&ledger, id, context) {
                Ok(report) => report,
                Err(e @ IncidentError::NotSerious { .. }) => {
                    writeln!(err, "{e}")?;
                    return Ok(1);
                }
                Err(e) => return Err(Fatal(e.to_string())),
            };
            emit(out, output.as_deref(), &report.render())?;
            let start = ledger.entry_count();
            if ledger
                .record_report_filed(id, at.unwrap_or_else(now))
                .map_err(|e| Fatal(e.to_string()))?
            {
                append_ledger(&path, &ledger, start)?;
            }
            Ok(0)
        }
        IncidentCommand::Trigger { ledger, file, write } => {
            let ledger = load_ledger(&ledger, false)?;
            let graph = load_case(&file)?;
            let changes = trigger_defeaters(&ledger, &graph);
            write!(out, "{changes}")?;
            if changes.is_empty() {
                writeln!(out, "no changes")?;
            }
            if write && !changes.is_empty() {
                rewrite_case(&file, &graph, &changes)?;
            }
            Ok(0)
        }
    }
}
