use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use cqa_core::attack::initial_strong_components;
use cqa_core::fd::{fd_of_query, fmt_vars, k_closure, sequential_proof};
use cqa_core::fuzz::{run_fuzz, FuzzConfig};
use cqa_core::oracle::{certain_oracle_capped, count_repairs, falsifying_repair_capped, DEFAULT_CAP};
use cqa_core::ptime::{find_premier_cycle, markov_graph, saturate, simplify, DEFAULT_GBLOCK_CAP};
use cqa_core::{
    attack_graph, certain_fo, classify, emit_rewriting, parse_database, parse_query, Classification,
    ComplexityClass, CqaError, Database, PtimeEngine, Query,
};
use serde_json::{json, Map, Value};

/// Certain answers to conjunctive queries over inconsistent databases.
#[derive(Parser, Debug)]
#[command(name = "cqa", version)]
struct Cli {
    /// Print one JSON object instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the complexity class of certainty for a query.
    Classify { query: PathBuf },
    /// Print the attack graph.
    AttackGraph {
        query: PathBuf,
        #[arg(long)]
        dot: bool,
    },
    /// Print the Markov graph of the simplified, saturated query.
    Markov {
        query: PathBuf,
        #[arg(long)]
        dot: bool,
    },
    /// Print the first-order rewriting as an s-expression.
    Rewrite { query: PathBuf },
    /// Decide whether the query holds in every repair.
    Certain {
        query: PathBuf,
        db: PathBuf,
        #[arg(long, value_enum, default_value_t = Engine::Auto)]
        engine: Engine,
        /// Print each polynomial-time pipeline step on stderr.
        #[arg(long)]
        trace: bool,
        /// Largest repair count the oracle enumerates.
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: u128,
        /// Largest repair count enumerated per gblock.
        #[arg(long, default_value_t = DEFAULT_GBLOCK_CAP)]
        gblock_cap: u128,
    },
    /// Decide certainty by enumerating repairs.
    Oracle {
        query: PathBuf,
        db: PathBuf,
        /// Also print the number of repairs.
        #[arg(long)]
        count: bool,
        /// Print a repair falsifying the query, if any.
        #[arg(long)]
        witness: bool,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: u128,
    },
    /// Print functional dependencies, key closures and sequential proofs.
    Explain { query: PathBuf },
    /// Cross-check the engines against the oracle on random inputs.
    Fuzz {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        cases: usize,
        #[arg(long, default_value_t = 5)]
        max_atoms: usize,
        #[arg(long, default_value_t = 12)]
        max_facts: usize,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: u128,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Engine {
    Auto,
    Fo,
    Ptime,
    Oracle,
}

impl Engine {
    fn name(self) -> &'static str {
        match self {
            Engine::Auto => "auto",
            Engine::Fo => "fo",
            Engine::Ptime => "ptime",
            Engine::Oracle => "oracle",
        }
    }
}

/// What a command produced: text for the terminal and the same content
/// as JSON fields.
#[derive(Default)]
struct Output {
    text: String,
    class: Option<Classification>,
    result: Value,
    stats: Map<String, Value>,
    code: u8,
}

impl Output {
    fn line(&mut self, s: impl AsRef<str>) {
        self.text.push_str(s.as_ref());
        self.text.push('\n');
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Classify { .. } => "classify",
        Command::AttackGraph { .. } => "attack-graph",
        Command::Markov { .. } => "markov",
        Command::Rewrite { .. } => "rewrite",
        Command::Certain { .. } => "certain",
        Command::Oracle { .. } => "oracle",
        Command::Explain { .. } => "explain",
        Command::Fuzz { .. } => "fuzz",
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_query(path: &Path) -> Result<Query> {
    Ok(parse_query(&read(path)?)?)
}

fn load_pair(query: &Path, db: &Path) -> Result<(Query, Database)> {
    let q = load_query(query)?;
    let db = parse_database(&read(db)?, &q)?;
    Ok((q, db))
}

fn size_stats(out: &mut Output, q: &Query, db: Option<&Database>) {
    out.stats.insert("atoms".into(), json!(q.len()));
    out.stats.insert("inconsistent_atoms".into(), json!(q.icard()));
    if let Some(db) = db {
        out.stats.insert("facts".into(), json!(db.len()));
    }
}

fn run(command: &Command) -> Result<Output> {
    let mut out = Output::default();
    match command {
        Command::Classify { query } => {
            let q = load_query(query)?;
            let c = classify(&q);
            out.line(c.to_string());
            out.result = json!(c.class.name());
            size_stats(&mut out, &q, None);
            out.class = Some(c);
        }
        Command::AttackGraph { query, dot } => {
            let q = load_query(query)?;
            let g = attack_graph(&q);
            if *dot {
                out.text = g.to_dot();
            } else {
                let name = |i: usize| q.atoms()[i].relation();
                for e in g.edges() {
                    let strength = format!("{:?}", e.strength).to_lowercase();
                    out.line(format!("{} -> {} ({strength})", name(e.from), name(e.to)));
                }
                let scc = initial_strong_components(&g);
                for (c, init) in scc.components.iter().zip(&scc.initial) {
                    let names: Vec<&str> = c.iter().map(|&i| name(i)).collect();
                    let tag = if *init { " initial" } else { "" };
                    out.line(format!("component{tag}: {{{}}}", names.join(", ")));
                }
            }
            out.result = json!({
                "edges": g.edges().iter().map(|e| json!({
                    "from": q.atoms()[e.from].relation(),
                    "to": q.atoms()[e.to].relation(),
                    "strength": e.strength,
                })).collect::<Vec<_>>(),
            });
            size_stats(&mut out, &q, None);
            out.class = Some(classify(&q));
        }
        Command::Markov { query, dot } => {
            let q = load_query(query)?;
            let (q1, db1) = simplify(&q, &Database::for_query(&q));
            let (q2, _) = saturate(&q1, &db1)?;
            let m = markov_graph(&q2)?;
            let premier = find_premier_cycle(&q2).ok();
            if *dot {
                out.text = m.to_dot();
            } else {
                for (a, b) in m.edges() {
                    out.line(format!("{a} -> {b}"));
                }
                for c in m.cycles() {
                    let names: Vec<&str> = c.iter().map(|v| v.name()).collect();
                    out.line(format!("cycle: ({})", names.join(", ")));
                }
                if let Some(c) = &premier {
                    let names: Vec<&str> = c.iter().map(|v| v.name()).collect();
                    out.line(format!("premier: ({})", names.join(", ")));
                }
            }
            let names = |c: &[cqa_core::Var]| c.iter().map(|v| v.to_string()).collect::<Vec<_>>();
            out.result = json!({
                "query": q2.to_string(),
                "edges": m.edges().iter().map(|(a, b)| [a.to_string(), b.to_string()]).collect::<Vec<_>>(),
                "cycles": m.cycles().iter().map(|c| names(c)).collect::<Vec<_>>(),
                "premier": premier.as_deref().map(names),
            });
            size_stats(&mut out, &q2, None);
        }
        Command::Rewrite { query } => {
            let q = load_query(query)?;
            let f = emit_rewriting(&q)?;
            out.line(f.to_string());
            out.result = json!(f.to_string());
            size_stats(&mut out, &q, None);
            out.class = Some(classify(&q));
        }
        Command::Certain {
            query,
            db,
            engine,
            trace,
            cap,
            gblock_cap,
        } => {
            let (q, db) = load_pair(query, db)?;
            let c = classify(&q);
            let chosen = match engine {
                Engine::Auto => match c.class {
                    ComplexityClass::Fo => Engine::Fo,
                    ComplexityClass::PtimeNotFo => Engine::Ptime,
                    ComplexityClass::ConpComplete => Engine::Oracle,
                },
                e => *e,
            };
            let v = match chosen {
                Engine::Fo => certain_fo(&q, &db)?,
                Engine::Ptime => {
                    let mut engine = PtimeEngine::new().gblock_cap(*gblock_cap);
                    if *trace {
                        engine = engine.on_trace(|line| eprintln!("{line}"));
                    }
                    engine.certain(&q, &db)?
                }
                Engine::Oracle | Engine::Auto => certain_oracle_capped(&q, &db, *cap)?,
            };
            out.line(v.to_string());
            out.result = json!(v);
            out.stats.insert("engine".into(), json!(chosen.name()));
            size_stats(&mut out, &q, Some(&db));
            out.class = Some(c);
        }
        Command::Oracle {
            query,
            db,
            count,
            witness,
            cap,
        } => {
            let (q, db) = load_pair(query, db)?;
            db.restrict_to(&q).check_consistent_relations()?;
            let falsifying = falsifying_repair_capped(&q, &db, *cap)?;
            let v = falsifying.is_none();
            out.line(v.to_string());
            out.result = json!(v);
            if *count {
                let n = count_repairs(&db.restrict_to(&q), *cap)?;
                out.line(format!("repairs: {n}"));
                out.stats.insert("repairs".into(), json!(n.to_string()));
            }
            if *witness {
                if let Some(r) = &falsifying {
                    out.line("falsifying repair:");
                    out.text.push_str(&r.to_string());
                }
                out.stats.insert(
                    "witness".into(),
                    falsifying.as_ref().map_or(Value::Null, |r| json!(r.to_string())),
                );
            }
            size_stats(&mut out, &q, Some(&db));
            out.class = Some(classify(&q));
        }
        Command::Explain { query } => {
            let q = load_query(query)?;
            explain(&q, &mut out)?;
            size_stats(&mut out, &q, None);
            out.class = Some(classify(&q));
        }
        Command::Fuzz {
            seed,
            cases,
            max_atoms,
            max_facts,
            cap,
        } => {
            let config = FuzzConfig {
                seed: *seed,
                cases: *cases,
                max_atoms: *max_atoms,
                max_facts: *max_facts,
                cap: *cap,
            };
            let report = run_fuzz(&config);
            out.text = report.to_string();
            out.result = json!(report.passed());
            out.stats.insert("cases".into(), json!(report.cases));
            out.stats.insert("skipped".into(), json!(report.skipped));
            out.stats.insert("disagreements".into(), json!(report.disagreements.len()));
            out.stats.insert(
                "by_class".into(),
                report.by_class.iter().map(|(c, n)| (c.name().to_string(), json!(n))).collect(),
            );
            if !report.passed() {
                out.stats.insert(
                    "counterexamples".into(),
                    report.disagreements.iter().map(|(i, d)| json!({"case": i, "report": d.to_string()})).collect(),
                );
                out.code = 4;
            }
        }
    }
    Ok(out)
}

fn explain(q: &Query, out: &mut Output) -> Result<()> {
    let fds = fd_of_query(q.atoms());
    out.line("functional dependencies:");
    for (a, fd) in q.atoms().iter().zip(&fds.deps) {
        out.line(format!("  {}: {fd}", a.relation()));
    }
    let mut atoms = Vec::new();
    for a in q.atoms() {
        let k = k_closure(q, a, false)?;
        let kp = k_closure(q, a, true)?;
        out.line(format!("{}:", a.relation()));
        out.line(format!("  K  = {}", fmt_vars(&k)));
        out.line(format!("  K+ = {}", fmt_vars(&kp)));
        let key = a.key_vars();
        let mut proofs = Map::new();
        for y in kp.iter().filter(|y| !key.contains(*y)) {
            let p = sequential_proof(q, &key, y).expect("every K+ variable has a proof");
            let steps: Vec<&str> = p.iter().map(|h| h.relation()).collect();
            out.line(format!("  {} -> {y}: {}", fmt_vars(&key), steps.join(", ")));
            proofs.insert(y.to_string(), json!(steps));
        }
        atoms.push(json!({
            "relation": a.relation(),
            "k": k.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
            "k_plus": kp.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
            "proofs": proofs,
        }));
    }
    out.result = json!({
        "fds": fds.deps.iter().map(|d| d.to_string()).collect::<Vec<_>>(),
        "atoms": atoms,
    });
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<CqaError>() {
        None | Some(CqaError::Parse { .. }) => 1,
        Some(
            CqaError::SelfJoin(_)
            | CqaError::ArityMismatch { .. }
            | CqaError::UnknownRelation(_)
            | CqaError::InconsistentConsistentRelation { .. }
            | CqaError::LengthMismatch { .. }
            | CqaError::AtomNotInQuery(_)
            | CqaError::UnknownVariable(_),
        ) => 2,
        Some(_) => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let name = command_name(&cli.command);
    let (stdout, code) = match run(&cli.command) {
        Ok(out) if cli.json => {
            let obj = json!({
                "command": name,
                "class": out.class.as_ref().map(|c| c.class),
                "evidence": out.class.as_ref().map(|c| &c.evidence),
                "result": out.result,
                "stats": out.stats,
            });
            (format!("{obj}\n"), out.code)
        }
        Ok(out) => (out.text, out.code),
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("error: {e:#}");
            let text = if cli.json {
                let mut s = json!({"command": name, "error": format!("{e:#}"), "exit_code": code}).to_string();
                let _ = writeln!(s);
                s
            } else {
                String::new()
            };
            (text, code)
        }
    };
    let _ = std::io::stdout().write_all(stdout.as_bytes());
    ExitCode::from(code)
}
