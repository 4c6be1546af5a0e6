//! Command line front end over the exchange-repair engine.
//!
//! Every command is deterministic: identical inputs produce
//! byte-identical output. Exit codes are scriptable: 0 success, 1
//! input or orchestration failure, 2 no solution, 3 constraint-class or
//! precondition violation, 4 resource cap exceeded.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use xr_core::chase::{self, CertainAnswers, ChaseOutcome};
use xr_core::compile::{compile_to_gav, CompileOptions};
use xr_core::depgraph::{analyze_mapping, AcyclicityReport, Position};
use xr_core::dlp::{build_dlp, export_dlp_text, xr_certain_via_dlp};
use xr_core::mapping::SchemaMapping;
use xr_core::query::Ucq;
use xr_core::repair::{enumerate_source_repairs, xr_certain, RepairOptions};
use xr_core::schema::{Fact, Instance};
use xr_core::textio::{
    answers_to_json, parse_instance, parse_mapping, parse_queries, serialize_constraint_fragment,
    serialize_instance, serialize_mapping, serialize_query, value_to_json, InstanceMode,
};
use xr_core::unfold::{xr_certain_via_cqa, SourceRewriting};
use xr_core::value::Value;

const EXIT_OK: u8 = 0;
const EXIT_FAILURE: u8 = 1;
const EXIT_NO_SOLUTION: u8 = 2;
const EXIT_CLASS: u8 = 3;
const EXIT_RESOURCE: u8 = 4;

fn exit_code(e: &xr_core::Error) -> u8 {
    use xr_core::Error::*;
    match e {
        Class(_) | Precondition(_) => EXIT_CLASS,
        Resource(_) => EXIT_RESOURCE,
        Parse { .. } | Schema(_) | Unsupported(_) => EXIT_FAILURE,
    }
}

enum CliError {
    Core(xr_core::Error),
    Io(String),
}

impl From<xr_core::Error> for CliError {
    fn from(e: xr_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Core(e) => exit_code(e),
            CliError::Io(_) => EXIT_FAILURE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(m) => write!(f, "{m}"),
        }
    }
}

type CmdResult<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "xr", version, about = "Data exchange under source inconsistency", long_about = None)]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Worker threads for the repair search; 1 runs single-threaded.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Cap on the facts considered by subset search (overrides XR_MAX_FACTS).
    #[arg(long, global = true)]
    max_facts: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Route {
    Brute,
    Cqa,
    Dlp,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Report the constraint class, weak-acyclicity verdict, and ranks.
    Validate { mapping: PathBuf },
    /// Chase an instance to a universal solution, or report failure.
    Chase { mapping: PathBuf, instance: PathBuf },
    /// Enumerate the subset source-repairs and their solutions.
    Repairs {
        mapping: PathBuf,
        instance: PathBuf,
        /// Write each repair as `repair_<k>.xinst` into this directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Classical certain answers over the chase solution.
    Certain {
        mapping: PathBuf,
        instance: PathBuf,
        query: PathBuf,
    },
    /// Certain answers over the exchange repairs.
    XrCertain {
        mapping: PathBuf,
        instance: PathBuf,
        query: PathBuf,
        /// Computation route; `all` cross-checks every applicable one.
        #[arg(long, value_enum, default_value_t = Route::Brute)]
        via: Route,
        /// Fail instead of compiling non-GAV mappings for the dlp route.
        #[arg(long)]
        no_auto_compile: bool,
    },
    /// Rewrite the target key constraints and a query to the source.
    RewriteCqa {
        mapping: PathBuf,
        query: Option<PathBuf>,
        /// Write the rewriting here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compile the mapping to an equivalent function-free GAV mapping.
    CompileGav {
        mapping: PathBuf,
        query: Option<PathBuf>,
        /// Keep rules whose relations can never be populated.
        #[arg(long)]
        no_prune: bool,
        /// Write the compiled mapping here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit the disjunctive logic program for the mapping.
    EmitDlp {
        mapping: PathBuf,
        instance: Option<PathBuf>,
        /// Inline the instance facts into the program.
        #[arg(long, requires = "instance")]
        with_facts: bool,
        /// Fail instead of compiling non-GAV mappings first.
        #[arg(long)]
        no_auto_compile: bool,
        /// Write the program here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// What a command produced: exit code, text rendering, JSON rendering,
/// and optionally a payload that `--out` diverts to a file.
struct Report {
    code: u8,
    text: String,
    json: serde_json::Value,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_FAILURE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(jobs) = cli.jobs {
        if jobs > 1 {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build_global();
        }
    }
    match run(&cli) {
        Ok(report) => {
            match cli.format {
                Format::Text => {
                    if !report.text.is_empty() {
                        print!("{}", report.text);
                    }
                }
                Format::Json => println!("{}", report.json),
            }
            ExitCode::from(report.code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: &Cli) -> CmdResult<Report> {
    let opts = repair_options(cli);
    match &cli.command {
        Command::Validate { mapping } => cmd_validate(mapping),
        Command::Chase { mapping, instance } => cmd_chase(mapping, instance),
        Command::Repairs {
            mapping,
            instance,
            out_dir,
        } => cmd_repairs(mapping, instance, out_dir.as_deref(), &opts),
        Command::Certain {
            mapping,
            instance,
            query,
        } => cmd_certain(mapping, instance, query),
        Command::XrCertain {
            mapping,
            instance,
            query,
            via,
            no_auto_compile,
        } => cmd_xr_certain(mapping, instance, query, *via, *no_auto_compile, &opts),
        Command::RewriteCqa {
            mapping,
            query,
            out,
        } => cmd_rewrite_cqa(mapping, query.as_deref(), out.as_deref()),
        Command::CompileGav {
            mapping,
            query,
            no_prune,
            out,
        } => cmd_compile_gav(mapping, query.as_deref(), *no_prune, out.as_deref()),
        Command::EmitDlp {
            mapping,
            instance,
            with_facts,
            no_auto_compile,
            out,
        } => cmd_emit_dlp(
            mapping,
            instance.as_deref(),
            *with_facts,
            *no_auto_compile,
            out.as_deref(),
        ),
    }
}

fn repair_options(cli: &Cli) -> RepairOptions {
    let mut opts = RepairOptions::default();
    if let Some(n) = cli.max_facts {
        opts.max_facts = n;
    }
    if cli.jobs == Some(1) {
        opts.parallel = false;
    }
    opts
}

// ---------------------------------------------------------------------
// Input loading

fn read_file(path: &Path) -> CmdResult<String> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, content: &str) -> CmdResult<()> {
    fs::write(path, content)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn load_mapping(path: &Path) -> CmdResult<SchemaMapping> {
    Ok(parse_mapping(&read_file(path)?)?)
}

fn load_source_instance(path: &Path, m: &SchemaMapping) -> CmdResult<Instance> {
    Ok(parse_instance(
        &read_file(path)?,
        &m.source,
        InstanceMode::Source,
    )?)
}

fn load_query(path: &Path) -> CmdResult<Ucq> {
    let queries = parse_queries(&read_file(path)?)?;
    match <[Ucq; 1]>::try_from(queries) {
        Ok([q]) => Ok(q),
        Err(qs) => Err(CliError::Core(xr_core::Error::Precondition(format!(
            "{} holds {} queries; expected exactly one",
            path.display(),
            qs.len()
        )))),
    }
}

/// Writes the payload to `out` when given, else hands it to stdout via
/// the report text.
fn payload_report(payload: String, json: serde_json::Value, out: Option<&Path>) -> CmdResult<Report> {
    let text = match out {
        Some(path) => {
            write_file(path, &payload)?;
            String::new()
        }
        None => payload,
    };
    Ok(Report {
        code: EXIT_OK,
        text,
        json,
    })
}

// ---------------------------------------------------------------------
// Rendering helpers

fn tuple_text(tuple: &[Value]) -> String {
    let parts: Vec<String> = tuple.iter().map(Value::to_string).collect();
    format!("({})", parts.join(", "))
}

fn answers_text(answers: &BTreeSet<Vec<Value>>) -> String {
    let mut out = String::new();
    for tuple in answers {
        out.push_str(&tuple_text(tuple));
        out.push('\n');
    }
    out
}

fn fact_json(fact: &Fact) -> serde_json::Value {
    serde_json::json!({
        "relation": fact.relation,
        "args": fact.args.iter().map(value_to_json).collect::<Vec<_>>(),
    })
}

fn instance_json(inst: &Instance) -> serde_json::Value {
    serde_json::Value::Array(inst.facts().map(|f| fact_json(&f)).collect())
}

fn position_name((relation, index): &Position) -> String {
    format!("{relation}.{}", index + 1)
}

// ---------------------------------------------------------------------
// validate

/// A cycle through at least one special edge, as a position sequence
/// that starts and ends at the same position.
fn special_cycle(report: &AcyclicityReport) -> Option<Vec<Position>> {
    let mut adj: BTreeMap<&Position, Vec<&Position>> = BTreeMap::new();
    for (u, v) in report.normal_edges.iter().chain(&report.special_edges) {
        adj.entry(u).or_default().push(v);
    }
    for (u, v) in &report.special_edges {
        if let Some(path) = bfs_path(v, u, &adj) {
            let mut cycle = vec![u.clone()];
            cycle.extend(path);
            return Some(cycle);
        }
    }
    None
}

fn bfs_path(
    from: &Position,
    to: &Position,
    adj: &BTreeMap<&Position, Vec<&Position>>,
) -> Option<Vec<Position>> {
    if from == to {
        return Some(vec![from.clone()]);
    }
    let mut prev: BTreeMap<&Position, &Position> = BTreeMap::new();
    let mut queue = VecDeque::from([from]);
    while let Some(p) = queue.pop_front() {
        for &next in adj.get(p).into_iter().flatten() {
            if next != from && !prev.contains_key(next) {
                prev.insert(next, p);
                if next == to {
                    let mut path = vec![next.clone()];
                    let mut cur = next;
                    while let Some(&p) = prev.get(cur) {
                        path.push(p.clone());
                        cur = p;
                    }
                    path.reverse();
                    return Some(path);
                }
                queue.push_back(next);
            }
        }
    }
    None
}

fn cmd_validate(mapping: &Path) -> CmdResult<Report> {
    let m = load_mapping(mapping)?;
    let class = m.class_label();
    let report = analyze_mapping(&m);
    if report.weakly_acyclic {
        let rank = report.rank.unwrap_or(0);
        let mut text = format!("class: {class}\nweakly acyclic: yes\nrank: {rank}\n");
        let mut ranks = serde_json::Map::new();
        for (pos, r) in &report.position_ranks {
            text.push_str(&format!("  {}: {r}\n", position_name(pos)));
            ranks.insert(position_name(pos), serde_json::Value::from(*r));
        }
        Ok(Report {
            code: EXIT_OK,
            text,
            json: serde_json::json!({
                "class": class,
                "weakly_acyclic": true,
                "rank": rank,
                "position_ranks": ranks,
            }),
        })
    } else {
        let cycle = special_cycle(&report).unwrap_or_default();
        let names: Vec<String> = cycle.iter().map(position_name).collect();
        Ok(Report {
            code: EXIT_CLASS,
            text: format!(
                "class: {class}\nweakly acyclic: no\ncycle: {}\n",
                names.join(" -> ")
            ),
            json: serde_json::json!({
                "class": class,
                "weakly_acyclic": false,
                "cycle": names,
            }),
        })
    }
}

// ---------------------------------------------------------------------
// chase

fn cmd_chase(mapping: &Path, instance: &Path) -> CmdResult<Report> {
    let m = load_mapping(mapping)?;
    let i = load_source_instance(instance, &m)?;
    let run = chase::chase(&i, &m)?;
    match run.outcome {
        ChaseOutcome::Success(solution) => Ok(Report {
            code: EXIT_OK,
            text: serialize_instance(&solution),
            json: serde_json::json!({
                "status": "success",
                "steps": run.log.len(),
                "solution": instance_json(&solution),
            }),
        }),
        ChaseOutcome::Failure(f) => Ok(Report {
            code: EXIT_NO_SOLUTION,
            text: format!(
                "no solution: constraint {} forces {} = {}\n",
                f.egd_index, f.left, f.right
            ),
            json: serde_json::json!({
                "status": "no_solution",
                "egd_index": f.egd_index,
                "left": value_to_json(&f.left),
                "right": value_to_json(&f.right),
            }),
        }),
    }
}

// ---------------------------------------------------------------------
// repairs

fn cmd_repairs(
    mapping: &Path,
    instance: &Path,
    out_dir: Option<&Path>,
    opts: &RepairOptions,
) -> CmdResult<Report> {
    let m = load_mapping(mapping)?;
    let i = load_source_instance(instance, &m)?;
    let set = enumerate_source_repairs(&i, &m, opts)?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    }
    let base_facts = set.base.facts().count();
    let mut text = format!("base: {base_facts} facts\nrepairs: {}\n", set.repairs.len());
    let mut entries = Vec::new();
    for (k, repair) in set.repairs.iter().enumerate() {
        let file_name = format!("repair_{k}.xinst");
        if let Some(dir) = out_dir {
            write_file(&dir.join(&file_name), &serialize_instance(&repair.source))?;
        }
        let kept = repair.source.facts().count();
        let solution_facts = repair.solution.facts().count();
        text.push_str(&format!(
            "repair {k}: kept {kept} of {base_facts}, solution {solution_facts} facts"
        ));
        if out_dir.is_some() {
            text.push_str(&format!(" ({file_name})"));
        }
        text.push('\n');
        entries.push(serde_json::json!({
            "kept": kept,
            "solution_facts": solution_facts,
            "file": out_dir.map(|_| file_name.clone()),
            "source": instance_json(&repair.source),
            "solution": instance_json(&repair.solution),
        }));
    }
    Ok(Report {
        code: EXIT_OK,
        text,
        json: serde_json::json!({
            "base_facts": base_facts,
            "count": set.repairs.len(),
            "repairs": entries,
        }),
    })
}

// ---------------------------------------------------------------------
// certain / xr-certain

fn cmd_certain(mapping: &Path, instance: &Path, query: &Path) -> CmdResult<Report> {
    let m = load_mapping(mapping)?;
    let i = load_source_instance(instance, &m)?;
    let q = load_query(query)?;
    match chase::certain_answers(&q, &i, &m)? {
        CertainAnswers::NoSolution => Ok(Report {
            code: EXIT_NO_SOLUTION,
            text: "no solution\n".to_string(),
            json: serde_json::json!({ "status": "no_solution" }),
        }),
        CertainAnswers::Answers(answers) => Ok(Report {
            code: EXIT_OK,
            text: answers_text(&answers),
            json: serde_json::json!({
                "status": "ok",
                "answers": answers_to_json(&answers),
            }),
        }),
    }
}

/// Whether the source-rewriting route applies: first-order full
/// source-to-target dependencies with egd-only target constraints.
fn cqa_applicable(m: &SchemaMapping) -> bool {
    m.is_first_order()
        && m.st_tgds().all(|t| t.is_full())
        && m.target_tgds().next().is_none()
}

/// Whether the program construction applies without compilation.
fn dlp_direct(m: &SchemaMapping) -> bool {
    m.is_first_order()
        && m.st_tgds().all(|t| t.is_full())
        && m.target_tgds().all(|t| t.is_full())
}

fn dlp_route(
    q: &Ucq,
    i: &Instance,
    m: &SchemaMapping,
    no_auto_compile: bool,
    opts: &RepairOptions,
) -> xr_core::Result<BTreeSet<Vec<Value>>> {
    if no_auto_compile && !dlp_direct(m) {
        return Err(xr_core::Error::Class(format!(
            "the program construction needs a GAV mapping, got {}; drop --no-auto-compile to compile it first",
            m.class_label()
        )));
    }
    xr_certain_via_dlp(q, i, m, opts)
}

fn cmd_xr_certain(
    mapping: &Path,
    instance: &Path,
    query: &Path,
    via: Route,
    no_auto_compile: bool,
    opts: &RepairOptions,
) -> CmdResult<Report> {
    let m = load_mapping(mapping)?;
    let i = load_source_instance(instance, &m)?;
    let q = load_query(query)?;
    let single = |answers: BTreeSet<Vec<Value>>| {
        Ok(Report {
            code: EXIT_OK,
            text: answers_text(&answers),
            json: serde_json::json!({ "answers": answers_to_json(&answers) }),
        })
    };
    match via {
        Route::Brute => single(xr_certain(&q, &i, &m, opts)?),
        Route::Cqa => single(xr_certain_via_cqa(&q, &i, &m, opts)?),
        Route::Dlp => single(dlp_route(&q, &i, &m, no_auto_compile, opts)?),
        Route::All => {
            let brute = xr_certain(&q, &i, &m, opts)?;
            let cqa = if cqa_applicable(&m) {
                Some(xr_certain_via_cqa(&q, &i, &m, opts)?)
            } else {
                None
            };
            let dlp = if no_auto_compile && !dlp_direct(&m) {
                None
            } else {
                Some(xr_certain_via_dlp(&q, &i, &m, opts)?)
            };
            let agree = [&cqa, &dlp]
                .into_iter()
                .flatten()
                .all(|answers| *answers == brute);
            let verdict = if agree { "AGREE" } else { "DISAGREE" };

            let mut text = String::new();
            let mut routes = serde_json::Map::new();
            let mut block = |name: &str, answers: &Option<BTreeSet<Vec<Value>>>, why: &str| {
                match answers {
                    Some(answers) => {
                        text.push_str(&format!("via {name}:\n{}", answers_text(answers)));
                        routes.insert(
                            name.to_string(),
                            serde_json::json!({ "answers": answers_to_json(answers) }),
                        );
                    }
                    None => {
                        text.push_str(&format!("via {name}: skipped ({why})\n"));
                        routes.insert(name.to_string(), serde_json::json!({ "skipped": why }));
                    }
                }
            };
            block("brute", &Some(brute), "");
            block("cqa", &cqa, "needs full source-to-target rules and egd-only target constraints");
            block("dlp", &dlp, "needs compilation, disabled by --no-auto-compile");
            text.push_str(&format!("verdict: {verdict}\n"));
            Ok(Report {
                code: if agree { EXIT_OK } else { EXIT_FAILURE },
                text,
                json: serde_json::json!({ "routes": routes, "verdict": verdict }),
            })
        }
    }
}

// ---------------------------------------------------------------------
// rewrite-cqa / compile-gav / emit-dlp

fn cmd_rewrite_cqa(mapping: &Path, query: Option<&Path>, out: Option<&Path>) -> CmdResult<Report> {
    let m = load_mapping(mapping)?;
    let rewriting = SourceRewriting::build(&m)?;
    let mut payload = serialize_constraint_fragment(&m.source, &rewriting.source_egds);
    let mut rewritten_query = None;
    if let Some(path) = query {
        let q = rewriting.unfold_query(&load_query(path)?)?;
        payload.push_str(&serialize_query(&q));
        rewritten_query = Some(serialize_query(&q));
    }
    let json = serde_json::json!({
        "source_egds": rewriting.source_egds.iter().map(|e| e.to_string()).collect::<Vec<_>>(),
        "query": rewritten_query,
    });
    payload_report(payload, json, out)
}

fn cmd_compile_gav(
    mapping: &Path,
    query: Option<&Path>,
    no_prune: bool,
    out: Option<&Path>,
) -> CmdResult<Report> {
    let m = load_mapping(mapping)?;
    let options = CompileOptions {
        prune: !no_prune,
        ..CompileOptions::default()
    };
    let compiled = compile_to_gav(&m, &options)?;
    let mut payload = serialize_mapping(&compiled.mapping);
    let mut rewritten_query = None;
    if let Some(path) = query {
        let q = compiled.transform_query(&load_query(path)?)?;
        payload.push_str(&serialize_query(&q));
        rewritten_query = Some(serialize_query(&q));
    }
    let json = serde_json::json!({
        "class": compiled.mapping.class_label(),
        "mapping": serialize_mapping(&compiled.mapping),
        "query": rewritten_query,
        "provenance": {
            "eq_relation": compiled.eq_relation,
            "depth_bound": compiled.depth_bound(),
            "shapes": compiled.shapes().iter().map(|s| s.to_string()).collect::<Vec<_>>(),
        },
    });
    payload_report(payload, json, out)
}

fn cmd_emit_dlp(
    mapping: &Path,
    instance: Option<&Path>,
    with_facts: bool,
    no_auto_compile: bool,
    out: Option<&Path>,
) -> CmdResult<Report> {
    let m = load_mapping(mapping)?;
    let m = if dlp_direct(&m) {
        m
    } else if no_auto_compile {
        return Err(CliError::Core(xr_core::Error::Class(format!(
            "the program construction needs a GAV mapping, got {}; drop --no-auto-compile to compile it first",
            m.class_label()
        ))));
    } else {
        compile_to_gav(&m, &CompileOptions::default())?.mapping
    };
    let artifact = build_dlp(&m)?;
    let inst = match instance {
        Some(path) if with_facts => Some(load_source_instance(path, &m)?),
        _ => None,
    };
    let payload = export_dlp_text(&artifact, inst.as_ref())?;
    let json = serde_json::json!({
        "program": payload,
        "rules": artifact.program.len(),
    });
    payload_report(payload, json, out)
}
