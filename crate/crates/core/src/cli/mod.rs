//! Command-line front end: DSL checking, allocation, experiments and the
//! distributed shell.

mod dshell;

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub use dshell::*;

use crate::allocator::{solve_exact, solve_oracle, AllocError, AllocationInstance, SolutionDoc};
use crate::dsl::{parse_program_named, validate_program};
use crate::experiments::{emit_results, run_experiment, ExperimentError};
use crate::topology::{NodeId, Topology, TopologyDoc};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "fogtree", version, about = "Cloud/fog/device simulator and allocation tool")]
pub struct Cli {
    /// Master seed; overrides any seed in config or topology files.
    #[arg(long, global = true, env = "FOGTREE_SEED")]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate a DSL file; prints the AST as JSON.
    Parse { file: PathBuf },
    /// Solve a fog allocation instance (JSON).
    Allocate {
        instance: PathBuf,
        /// Use the exhaustive solver instead of branch and bound.
        #[arg(long)]
        oracle: bool,
        /// Emit device,fog rows instead of JSON.
        #[arg(long)]
        csv: bool,
        /// Write the solution here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a named experiment and write its result files.
    Experiment {
        name: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Interactive job shell over a simulated topology.
    Dshell {
        #[arg(long)]
        topology: PathBuf,
        /// Replay commands from a file instead of standard input.
        #[arg(long)]
        script: Option<PathBuf>,
        /// Per-node spawn cost when reusing shell resources.
        #[arg(long, default_value_t = DEFAULT_REUSE_COST_MS)]
        reuse_ms: f64,
        /// Comma separated node ids the shell holds; all nodes by default.
        #[arg(long)]
        hold: Option<String>,
    },
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match cli.command {
        Command::Parse { file } => cmd_parse(&file, out, err),
        Command::Allocate {
            instance,
            oracle,
            csv,
            out: dest,
        } => cmd_allocate(&instance, oracle, csv, dest.as_deref(), out, err),
        Command::Experiment { name, config, out: dir } => cmd_experiment(&name, config.as_deref(), &dir, cli.seed, out, err),
        Command::Dshell {
            topology,
            script,
            reuse_ms,
            hold,
        } => cmd_dshell(&topology, script.as_deref(), reuse_ms, hold.as_deref(), cli.seed, out, err),
    }
}

fn read(path: &Path, err: &mut dyn Write) -> Option<String> {
    match std::fs::read_to_string(path) {
        Ok(s) => Some(s),
        Err(e) => {
            let _ = writeln!(err, "{}: {e}", path.display());
            None
        }
    }
}

pub fn cmd_parse(file: &Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let Some(src) = read(file, err) else {
        return EXIT_RUNTIME;
    };
    let name = file.file_stem().and_then(|s| s.to_str()).unwrap_or("app");
    let prog = match parse_program_named(name, &src) {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "{}:{e}", file.display());
            return EXIT_PARSE;
        }
    };
    let diags = validate_program(&prog);
    for d in &diags {
        let _ = writeln!(err, "{}:{d}", file.display());
    }
    if !diags.is_empty() {
        return EXIT_PARSE;
    }
    let _ = writeln!(out, "{}", serde_json::to_string_pretty(&prog).expect("AST serializes"));
    EXIT_OK
}

pub fn cmd_allocate(instance: &Path, oracle: bool, csv: bool, dest: Option<&Path>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let Some(text) = read(instance, err) else {
        return EXIT_RUNTIME;
    };
    let solved = AllocationInstance::from_json(&text).and_then(|inst| {
        let (alloc, stats) = if oracle { solve_oracle(&inst)? } else { solve_exact(&inst)? };
        Ok(SolutionDoc::new(&inst, &alloc, stats))
    });
    let doc = match solved {
        Ok(d) => d,
        Err(e) => {
            let _ = writeln!(err, "{}: {e}", instance.display());
            return match e {
                AllocError::Infeasible { .. } => EXIT_INFEASIBLE,
                AllocError::Document(_) => EXIT_PARSE,
                _ => EXIT_RUNTIME,
            };
        }
    };
    let body = if csv {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["device", "fog"]).expect("in memory");
        for a in &doc.assignment {
            w.write_record([&a.device, &a.fog]).expect("in memory");
        }
        String::from_utf8(w.into_inner().expect("in memory")).expect("utf-8")
    } else {
        serde_json::to_string_pretty(&doc).expect("solution serializes") + "\n"
    };
    match dest {
        Some(p) => {
            if let Err(e) = std::fs::write(p, body) {
                let _ = writeln!(err, "{}: {e}", p.display());
                return EXIT_RUNTIME;
            }
        }
        None => {
            let _ = out.write_all(body.as_bytes());
        }
    }
    EXIT_OK
}

pub fn cmd_experiment(name: &str, config: Option<&Path>, dir: &Path, seed: Option<u64>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let text = match config {
        Some(p) => match read(p, err) {
            Some(t) => Some(t),
            None => return EXIT_RUNTIME,
        },
        None => None,
    };
    let results = match run_experiment(name, text.as_deref(), seed) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "experiment {name}: {e}");
            return match e {
                ExperimentError::UnknownScenario(_) | ExperimentError::InvalidConfig(_) => EXIT_PARSE,
                _ => EXIT_RUNTIME,
            };
        }
    };
    for r in &results {
        let sub = dir.join(&r.name);
        if let Err(e) = emit_results(r, &sub) {
            let _ = writeln!(err, "{e}");
            return EXIT_RUNTIME;
        }
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        let _ = writeln!(
            out,
            "{} n={} mean={} p50={} p94={} p99={} -> {}",
            r.name,
            r.summary.count,
            fmt(r.summary.mean),
            fmt(r.summary.p50),
            fmt(r.summary.p94),
            fmt(r.summary.p99),
            sub.display()
        );
    }
    EXIT_OK
}

pub fn cmd_dshell(
    topology: &Path,
    script: Option<&Path>,
    reuse_ms: f64,
    hold: Option<&str>,
    seed: Option<u64>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let Some(text) = read(topology, err) else {
        return EXIT_RUNTIME;
    };
    let built = TopologyDoc::from_json(&text).and_then(|mut doc| {
        if seed.is_some() {
            doc.seed = seed;
        }
        Topology::build(&doc)
    });
    let topo = match built {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(err, "{}: {e}", topology.display());
            return EXIT_PARSE;
        }
    };
    let shell = match hold {
        Some(list) => DShell::holding(topo, list.split(',').map(NodeId::new).collect()),
        None => DShell::new(topo),
    };
    let mut shell = match shell {
        Ok(s) => s.with_reuse_cost(reuse_ms),
        Err(e) => {
            let _ = writeln!(err, "{e}");
            return EXIT_RUNTIME;
        }
    };
    match script {
        Some(p) => {
            let Some(text) = read(p, err) else {
                return EXIT_RUNTIME;
            };
            let _ = out.write_all(shell.run_script(&text).as_bytes());
        }
        None => {
            let stdin = std::io::stdin();
            for line in stdin.lock().lines() {
                let Ok(line) = line else { break };
                match shell.exec_line(&line) {
                    Ok(Some(text)) => {
                        let _ = out.write_all(text.as_bytes());
                    }
                    Ok(None) => break,
                    Err(e) => {
                        let _ = writeln!(out, "error: {e}");
                    }
                }
                let _ = out.flush();
            }
        }
    }
    EXIT_OK
}

#[cfg(test)]
mod tests;
