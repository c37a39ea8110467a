use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use tsens::dp::{tsens_dp, DpConfig};
use tsens::oracle::{brute_force_ls, reduce_3sat, Cnf3};
use tsens::query::{
    build_hypergraph, connected_components, gyo_decompose, is_doubly_acyclic, parse_query, validate_ghd,
    ConjunctiveQuery, GhdNodeSpec, Gyo,
};
use tsens::relation::{Count, Database};
use tsens::sensitivity::{Engine, Plan, SensitivityReport};

use crate::data::{export_database, load_database};
use crate::error::CliError;
use crate::report;

#[derive(Debug, Parser)]
#[command(
    name = "tsens",
    version,
    about = "Tuple and local sensitivity of counting conjunctive queries"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Join tree (or cyclicity witness) of a query.
    Decompose {
        #[arg(long)]
        query: PathBuf,
        /// Validate this hypertree decomposition instead of running GYO.
        #[arg(long)]
        ghd: Option<PathBuf>,
    },
    /// Local sensitivity and the most sensitive tuple.
    Sensitivity {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value_t = Mode::Exact)]
        mode: Mode,
        /// Kept keys per pass table in top-k mode.
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        output: Output,
    },
    /// Differentially private count.
    DpAnswer {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        epsilon: f64,
        /// Share of the budget for learning the threshold; defaults to half of `--epsilon`.
        #[arg(long)]
        epsilon_tsens: Option<f64>,
        /// Upper bound on the truncation threshold.
        #[arg(long)]
        ell: Count,
        #[arg(long)]
        primary_private: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Zero noise; the result is a deterministic function of the data.
        #[arg(long)]
        test_mode: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Local sensitivity by exhaustive recomputation (small instances only).
    Oracle {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        query: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Database and query whose local sensitivity is positive iff a 3CNF formula is satisfiable.
    ReduceSat {
        /// DIMACS file.
        #[arg(long)]
        cnf: PathBuf,
        /// Directory for the CSVs, manifest.json and query.cq.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also decide satisfiability both ways and compare.
        #[arg(long)]
        check: bool,
    },
}

#[derive(Debug, Args)]
struct Input {
    /// Manifest of CSV relations.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    query: PathBuf,
    /// Hypertree decomposition (JSON) for cyclic queries.
    #[arg(long)]
    ghd: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Output {
    /// Include wall-clock phase timings (breaks byte-identical output).
    #[arg(long)]
    timings: bool,
    /// Human-readable summary on stderr.
    #[arg(long)]
    pretty: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Exact,
    Topk,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Exact => "exact",
            Mode::Topk => "topk",
        }
    }
}

/// Runs one command, writing JSON to `out` and diagnostics to `err`; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = write!(out, "{e}");
            return 0;
        }
        Err(e) => {
            let _ = write!(err, "{e}");
            return emit_error(&CliError::Usage(e.kind().to_string()), out);
        }
    };
    match execute(cli.command, err) {
        Ok(value) => {
            let _ = writeln!(out, "{}", serde_json::to_string(&value).expect("reports serialize"));
            0
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            emit_error(&e, out)
        }
    }
}

fn emit_error(e: &CliError, out: &mut dyn Write) -> i32 {
    let code = e.exit_code();
    let value = report::error(e.kind(), code, &e.to_string());
    let _ = writeln!(out, "{value}");
    code
}

fn execute(command: Command, err: &mut dyn Write) -> Result<Value, CliError> {
    match command {
        Command::Decompose { query, ghd } => decompose(&query, ghd.as_deref()),
        Command::Sensitivity { input, mode, k, output } => {
            let engine = match (mode, k) {
                (Mode::Exact, None) => Engine::from_env()?,
                (Mode::Topk, Some(k)) => Engine::from_env()?.with_topk(k)?,
                (Mode::Exact, Some(_)) => return Err(CliError::Usage("--k requires --mode topk".into())),
                (Mode::Topk, None) => return Err(CliError::Usage("--mode topk requires --k".into())),
            };
            let (db, q, plan) = input.load()?;
            let analysis = engine.analyze(&db, &q, &plan)?;
            if output.pretty {
                pretty_sensitivity(analysis.report(), err);
            }
            let config = json!({
                "data": display(&input.data),
                "query": display(&input.query),
                "ghd": input.ghd.as_deref().map(display),
                "mode": mode.name(),
                "k": k,
            });
            let result = report::sensitivity(analysis.report(), output.timings);
            Ok(report::envelope("sensitivity", config, result))
        }
        Command::DpAnswer {
            input,
            epsilon,
            epsilon_tsens,
            ell,
            primary_private,
            seed,
            test_mode,
            output,
        } => {
            let mut cfg = DpConfig::new(epsilon, epsilon_tsens.unwrap_or(epsilon / 2.0), ell, primary_private);
            cfg.seed = seed;
            cfg.test_mode = test_mode;
            cfg.validate()?;
            let (db, q, plan) = input.load()?;
            let answer = tsens_dp(&db, &q, &plan, &cfg, Engine::from_env()?)?;
            if output.pretty {
                let _ = writeln!(
                    err,
                    "value {:.3}  tau {}  noise scale {:.3}",
                    answer.value, answer.tau, answer.noise_scale
                );
            }
            let config = json!({
                "data": display(&input.data),
                "query": display(&input.query),
                "ghd": input.ghd.as_deref().map(display),
                "epsilon": cfg.epsilon,
                "epsilon_tsens": cfg.epsilon_tsens,
                "ell": report::count(cfg.ell),
                "primary_private": cfg.primary_private,
                "seed": cfg.seed,
                "test_mode": cfg.test_mode,
            });
            Ok(report::envelope("dp-answer", config, report::dp_answer(&answer)))
        }
        Command::Oracle { data, query, output } => {
            let db = load_database(&data)?;
            let q = read_query(&query)?;
            let r = brute_force_ls(&db, &q)?;
            if output.pretty {
                pretty_sensitivity(&r, err);
            }
            let config = json!({ "data": display(&data), "query": display(&query) });
            Ok(report::envelope(
                "oracle",
                config,
                report::sensitivity(&r, output.timings),
            ))
        }
        Command::ReduceSat { cnf, out, check } => reduce_sat(&cnf, out.as_deref(), check),
    }
}

impl Input {
    fn load(&self) -> Result<(Database, ConjunctiveQuery, Plan), CliError> {
        let db = load_database(&self.data)?;
        let q = read_query(&self.query)?;
        let plan = match &self.ghd {
            Some(path) => Plan::from_tree(&q, read_ghd(path, &q)?)?,
            None => Plan::auto(&q)?,
        };
        Ok((db, q, plan))
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn read_query(path: &Path) -> Result<ConjunctiveQuery, CliError> {
    parse_query(&read_text(path)?).map_err(|e| CliError::format(path, e))
}

fn read_ghd(path: &Path, q: &ConjunctiveQuery) -> Result<tsens::query::JoinTree, CliError> {
    let spec = GhdNodeSpec::parse_file(&read_text(path)?).map_err(|e| CliError::format(path, e))?;
    validate_ghd(q, &spec).map_err(|e| CliError::format(path, e))
}

fn decompose(query: &Path, ghd: Option<&Path>) -> Result<Value, CliError> {
    let q = read_query(query)?;
    let h = build_hypergraph(&q);
    let mut components = Vec::new();
    let mut acyclic = true;
    for relations in connected_components(&h) {
        let entry = match gyo_decompose(&h.subgraph(&relations)).map_err(tsens::Error::from)? {
            Gyo::Tree(t) => json!({
                "relations": relations,
                "acyclic": true,
                "join_tree": report::tree(&t),
                "doubly_acyclic": report::doubly_acyclic(&is_doubly_acyclic(&t)),
            }),
            Gyo::Cyclic(residual) => {
                acyclic = false;
                json!({
                    "relations": relations,
                    "acyclic": false,
                    "residual": report::residual(&residual),
                })
            }
        };
        components.push(entry);
    }
    let mut result = json!({ "acyclic": acyclic, "components": components });
    if let Some(path) = ghd {
        result["ghd"] = report::tree(&read_ghd(path, &q)?);
    }
    let config = json!({ "query": display(query), "ghd": ghd.map(display) });
    Ok(report::envelope("decompose", config, result))
}

fn reduce_sat(cnf_path: &Path, out: Option<&Path>, check: bool) -> Result<Value, CliError> {
    let cnf = Cnf3::parse_dimacs(&read_text(cnf_path)?).map_err(|e| CliError::format(cnf_path, e))?;
    let (db, q) = reduce_3sat(&cnf)?;
    if let Some(dir) = out {
        export_database(&db, dir)?;
        let path = dir.join("query.cq");
        fs::write(&path, format!("{q}\n")).map_err(|e| CliError::io(&path, e))?;
    }
    let relations: Vec<Value> = db
        .relations()
        .map(|r| json!({ "name": r.name(), "schema": r.schema(), "rows": r.distinct_len() }))
        .collect();
    let mut result = json!({
        "num_vars": cnf.num_vars(),
        "num_clauses": cnf.clauses().len(),
        "query": q.to_string(),
        "relations": relations,
    });
    if check {
        let ls = brute_force_ls(&db, &q)?.ls;
        let satisfiable = cnf.is_satisfiable()?;
        result["check"] = json!({
            "ls": report::count(ls),
            "ls_positive": ls > 0,
            "satisfiable": satisfiable,
            "agree": (ls > 0) == satisfiable,
        });
    }
    let config = json!({ "cnf": display(cnf_path), "out": out.map(display), "check": check });
    Ok(report::envelope("reduce-sat", config, result))
}

fn pretty_sensitivity(r: &SensitivityReport, err: &mut dyn Write) {
    let _ = writeln!(err, "local sensitivity {}   |Q(D)| = {}", r.ls, r.join_size);
    let _ = writeln!(err, "{:<16} {:>12}  tuple", "relation", "tsens");
    for b in &r.per_relation {
        let tuple = b
            .values
            .as_ref()
            .map_or_else(|| "-".to_owned(), |v| format!("({})", v.join(", ")));
        let _ = writeln!(err, "{:<16} {:>12}  {}", b.relation, b.tsens, tuple);
    }
    for (phase, d) in &r.stats.timings {
        let _ = writeln!(err, "{phase:<16} {:>10.3} ms", d.as_secs_f64() * 1e3);
    }
}
