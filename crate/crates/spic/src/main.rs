//! `spic`: parse, typecheck, run, explore and check synchronous pi-calculus modules.

use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value as Json};

use spi::harness::{check_all, check_bisim_determinacy, explore_closed, Options, Status};
use spi::parser::{parse_module, pretty_module};
use spi::semantics::{Machine, Policy};
use spi::syntax::Module;
use spi::typecheck::{typecheck, Report};

#[derive(Parser)]
#[command(name = "spic", version, about = "Synchronous pi-calculus toolchain")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a module and print it back in normal form.
    Parse(Input),
    /// Typecheck a module and list its diagnostics and set-typed obligations.
    Typecheck(Input),
    /// Run the main program for a number of instants and print its trace as JSON lines.
    Run(RunArgs),
    /// Explore every schedule of the main program and summarise the state space.
    Explore(ExploreArgs),
    /// Run the metatheory checks on the main program.
    Check(CheckArgs),
}

#[derive(Args)]
struct Input {
    /// Module file.
    #[arg(required_unless_present = "stdin")]
    file: Option<PathBuf>,
    /// Read the module from standard input.
    #[arg(long, conflicts_with = "file")]
    stdin: bool,
    /// Print one JSON document instead of text.
    #[arg(long)]
    json: bool,
    /// Proceed even if the module does not typecheck.
    #[arg(long)]
    unchecked: bool,
}

#[derive(Args)]
struct Common {
    /// Number of instants.
    #[arg(long, default_value_t = 2)]
    instants: usize,
    /// Seed for every pseudo-random choice.
    #[arg(long, env = "SPIC_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Leftmost,
    Seeded,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    input: Input,
    #[command(flatten)]
    common: Common,
    /// Redex and ordering choice.
    #[arg(long, value_enum, default_value_t = PolicyArg::Seeded)]
    policy: PolicyArg,
    /// Include the canonical state in every trace record.
    #[arg(long)]
    emit_states: bool,
}

#[derive(Args)]
struct ExploreArgs {
    #[command(flatten)]
    input: Input,
    #[command(flatten)]
    common: Common,
    /// Maximum number of distinct states.
    #[arg(long, default_value_t = 20_000)]
    budget: usize,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    input: Input,
    #[command(flatten)]
    common: Common,
    /// Maximum number of distinct states per exploration.
    #[arg(long, default_value_t = 20_000)]
    budget: usize,
    /// Length of the random walks of subject reduction.
    #[arg(long, default_value_t = 200)]
    depth: usize,
    /// Random trials per set-typed parameter.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Also compare schedules by weak bisimulation.
    #[arg(long)]
    bisim: bool,
}

/// A failure carrying its exit code.
struct Exit {
    code: u8,
    message: String,
    json: Option<Json>,
}

impl Exit {
    fn usage(message: String) -> Exit {
        Exit {
            code: 2,
            message,
            json: None,
        }
    }

    fn internal(message: String) -> Exit {
        Exit {
            code: 3,
            message,
            json: None,
        }
    }
}

impl From<anyhow::Error> for Exit {
    fn from(e: anyhow::Error) -> Exit {
        Exit::usage(format!("{e:#}"))
    }
}

fn read(input: &Input) -> anyhow::Result<String> {
    match &input.file {
        Some(p) if !input.stdin => {
            std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))
        }
        _ => {
            let mut s = String::new();
            std::io::stdin()
                .read_to_string(&mut s)
                .context("cannot read standard input")?;
            Ok(s)
        }
    }
}

fn source_name(input: &Input) -> String {
    input
        .file
        .as_ref()
        .map_or("<stdin>".into(), |p| p.display().to_string())
}

fn parse(input: &Input) -> Result<Module, Exit> {
    let text = read(input)?;
    parse_module(&text).map_err(|e| {
        let json = json!({"ok": false, "error": {"line": e.line, "col": e.col, "message": e.message, "expected": e.expected}});
        Exit { code: 2, message: format!("{}:{e}", source_name(input)), json: Some(json) }
    })
}

fn report_json(m: &Module, r: &Report) -> Json {
    let signatures: serde_json::Map<String, Json> = m
        .thread_order
        .iter()
        .filter_map(|t| {
            m.thread_params(t).map(|ps| {
                (
                    t.to_string(),
                    json!(ps.iter().map(|p| p.to_string()).collect::<Vec<_>>()),
                )
            })
        })
        .collect();
    json!({"ok": r.ok(), "diagnostics": r.diagnostics, "obligations": r.obligations, "signatures": signatures})
}

/// Parses and typechecks; a module with diagnostics is an error unless `--unchecked`.
fn load(input: &Input) -> Result<Module, Exit> {
    let (m, r) = typecheck(&parse(input)?);
    if !r.ok() && !input.unchecked {
        let lines: Vec<String> = r
            .diagnostics
            .iter()
            .map(|d| format!("{}:{d}", source_name(input)))
            .collect();
        return Err(Exit {
            code: 1,
            message: lines.join("\n"),
            json: Some(report_json(&m, &r)),
        });
    }
    Ok(m)
}

fn options(common: &Common) -> Options {
    Options {
        instants: common.instants,
        seed: common.seed,
        ..Options::default()
    }
}

fn cmd_parse(input: &Input, out: &mut String) -> Result<(), Exit> {
    let m = parse(input)?;
    if input.json {
        let names = |v: &[spi::syntax::Name]| v.iter().map(|n| n.to_string()).collect::<Vec<_>>();
        let doc = json!({
            "ok": true,
            "types": names(&m.data_order),
            "functions": names(&m.fun_order),
            "threads": names(&m.thread_order),
            "main": m.entry.is_some(),
            "module": pretty_module(&m),
        });
        out.push_str(&doc.to_string());
        out.push('\n');
    } else {
        out.push_str(&pretty_module(&m));
    }
    Ok(())
}

fn cmd_typecheck(input: &Input, out: &mut String) -> Result<(), Exit> {
    let (m, r) = typecheck(&parse(input)?);
    if input.json {
        let doc = report_json(&m, &r);
        if !r.ok() {
            return Err(Exit {
                code: 1,
                message: String::new(),
                json: Some(doc),
            });
        }
        out.push_str(&doc.to_string());
        out.push('\n');
        return Ok(());
    }
    if !r.ok() {
        let lines: Vec<String> = r
            .diagnostics
            .iter()
            .map(|d| format!("{}:{d}", source_name(input)))
            .collect();
        return Err(Exit {
            code: 1,
            message: lines.join("\n"),
            json: None,
        });
    }
    for t in &m.thread_order {
        if let Some(ps) = m.thread_params(t) {
            let ps: Vec<String> = ps.iter().map(|p| p.to_string()).collect();
            out.push_str(&format!("{t} : ({})\n", ps.join(", ")));
        }
    }
    for o in &r.obligations {
        let what = if o.is_thread { "thread" } else { "function" };
        out.push_str(&format!(
            "obligation: {what} {} parameter {} : {} must be order-independent\n",
            o.owner, o.param, o.ty
        ));
    }
    Ok(())
}

fn cmd_run(a: &RunArgs, out: &mut String) -> Result<(), Exit> {
    let m = load(&a.input)?;
    let policy = match a.policy {
        PolicyArg::Leftmost => Policy::Leftmost,
        PolicyArg::Seeded => Policy::Seeded(a.common.seed),
    };
    let trace = Machine::new(&m).run(a.common.instants, policy, a.emit_states);
    if a.input.json {
        let doc = json!({
            "ok": trace.error.is_none(),
            "seed": a.common.seed,
            "records": trace.records,
            "final_state": trace.final_state,
            "error": trace.error.as_ref().map(|e| e.to_string()),
        });
        out.push_str(&doc.to_string());
        out.push('\n');
    } else {
        out.push_str(&trace.to_jsonl());
    }
    match trace.error {
        Some(e) => Err(Exit::internal(format!("run stopped: {e}"))),
        None => Ok(()),
    }
}

fn cmd_explore(a: &ExploreArgs, out: &mut String) -> Result<(), Exit> {
    let m = load(&a.input)?;
    let opts = Options {
        budget: a.budget,
        ..options(&a.common)
    };
    let mach = Machine::new(&m);
    let init = mach.initial().map_err(|e| Exit::internal(e.to_string()))?;
    let x = explore_closed(&mach, &init, a.common.instants, &opts)
        .map_err(|e| Exit::internal(e.to_string()))?;
    if a.input.json {
        out.push_str(&json!({"ok": true, "seed": a.common.seed, "exploration": x}).to_string());
        out.push('\n');
        return Ok(());
    }
    out.push_str(&format!(
        "states {} transitions {} exhaustive {}\n",
        x.states, x.transitions, x.exhaustive
    ));
    for (i, s) in x.instants.iter().enumerate() {
        out.push_str(&format!(
            "instant {i}: {} states, {} suspended, {} distinct end states\n",
            s.states,
            s.suspended,
            s.frontier.len()
        ));
    }
    out.push_str(&format!(
        "failed diamonds {}, end-of-instant disagreements {}, most orderings {} (exhaustive {}), most emissions on one signal {}\n",
        x.diamond_failures.len(),
        x.eoi_failures.len(),
        x.max_eoi_variants,
        x.eoi_exhaustive,
        x.max_emissions
    ));
    Ok(())
}

fn cmd_check(a: &CheckArgs, out: &mut String) -> Result<(), Exit> {
    let m = load(&a.input)?;
    let opts = Options {
        budget: a.budget,
        depth: a.depth,
        trials: a.trials,
        ..options(&a.common)
    };
    let mut reports = check_all(&m, &opts);
    if a.bisim {
        reports.push(check_bisim_determinacy(&m, &opts));
    }
    let failed = reports.iter().any(|r| r.status == Status::Fail);
    if a.input.json {
        out.push_str(
            &json!({"ok": !failed, "seed": a.common.seed, "reports": reports}).to_string(),
        );
        out.push('\n');
    } else {
        for r in &reports {
            let status = match r.status {
                Status::Pass => "pass",
                Status::Fail => "FAIL",
                Status::Inconclusive => "inconclusive",
            };
            let metrics: Vec<String> = r.metrics.iter().map(|(k, v)| format!("{k}={v}")).collect();
            out.push_str(&format!(
                "{:<20} {status:<12} seed={} exhaustive={} {}\n",
                r.check,
                r.seed,
                r.exhaustive,
                metrics.join(" ")
            ));
            for d in &r.details {
                out.push_str(&format!("    {d}\n"));
            }
            for step in r.counterexample.iter().flatten() {
                out.push_str(&format!("    | {step}\n"));
            }
        }
    }
    if failed {
        return Err(Exit {
            code: 1,
            message: String::new(),
            json: None,
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let mut out = String::new();
    let dispatched = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| match &cli.cmd {
        Command::Parse(i) => (i.json, cmd_parse(i, &mut out)),
        Command::Typecheck(i) => (i.json, cmd_typecheck(i, &mut out)),
        Command::Run(a) => (a.input.json, cmd_run(a, &mut out)),
        Command::Explore(a) => (a.input.json, cmd_explore(a, &mut out)),
        Command::Check(a) => (a.input.json, cmd_check(a, &mut out)),
    }));
    let _ = std::io::stdout().write_all(out.as_bytes());
    let (json, result) = match dispatched {
        Ok(r) => r,
        Err(_) => return ExitCode::from(3),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let (Some(doc), true) = (&e.json, json) {
                println!("{doc}");
            }
            if !e.message.is_empty() {
                eprintln!("spic: {}", e.message);
            }
            ExitCode::from(e.code)
        }
    }
}
