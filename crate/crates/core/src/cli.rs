//! Command-line front end: `run`, `verify` and `fuzz`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::log::parse_log;
use crate::runner::{execute, verify, RunResult};
use crate::task::parse_task;

#[derive(Debug, Parser)]
#[command(name = "vforge", version, about = "Exact local uniformization with replayable derivation logs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a task file; writes `<stem>.log` and `<stem>.report`.
    Run {
        task: PathBuf,
        /// Output directory (defaults to the task file's directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay a derivation log against its task file and re-check every claim.
    Verify { log: PathBuf, task: PathBuf },
    /// Generate random tasks and check that run followed by verify succeeds.
    Fuzz {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        cases: usize,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Writes through a temporary file and a rename.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    fs::write(&tmp, contents).map_err(|e| Error::Io(format!("{}: {e}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Paths of the log and report written for `task`.
pub fn output_paths(task: &Path, out: Option<&Path>) -> (PathBuf, PathBuf) {
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| task.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    let stem = task.file_stem().and_then(|s| s.to_str()).unwrap_or("task");
    (dir.join(format!("{stem}.log")), dir.join(format!("{stem}.report")))
}

/// `vforge run`. Parse errors produce no outputs.
pub fn run_file(task_path: &Path, out: Option<&Path>) -> Result<RunResult> {
    let task = parse_task(&read(task_path)?)?;
    let result = execute(&task);
    let (log_path, report_path) = output_paths(task_path, out);
    if let Some(dir) = log_path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        }
    }
    write_atomic(&log_path, &result.log.to_string())?;
    write_atomic(&report_path, &result.report)?;
    Ok(result)
}

/// `vforge verify`.
pub fn verify_files(log_path: &Path, task_path: &Path) -> Result<()> {
    let task = parse_task(&read(task_path)?)?;
    let log = parse_log(&read(log_path)?).map_err(|e| Error::Verify(format!("malformed log: {e}")))?;
    verify(&log, &task)
}

fn random_poly_text(rng: &mut ChaCha8Rng, names: &[&str], terms: usize, max_deg: u32) -> String {
    let mut parts = Vec::new();
    for _ in 0..terms {
        let c: i64 = *[-3, -2, -1, 1, 2, 3].choose(rng).unwrap();
        let mut factors = vec![c.to_string()];
        for n in names {
            let e = rng.gen_range(0..=max_deg);
            if e > 0 {
                factors.push(format!("{n}^{e}"));
            }
        }
        parts.push(factors.join("*"));
    }
    parts.join(" + ").replace("+ -", "- ")
}

/// A random task text covering the non-failing task kinds.
pub fn random_task(rng: &mut ChaCha8Rng) -> String {
    let choice = rng.gen_range(0..5);
    let field = if rng.gen_bool(0.5) { "Q" } else { "F 5" };
    match choice {
        0 => {
            let names = ["a", "b", "c"];
            let n = rng.gen_range(2..=3);
            let terms = rng.gen_range(1..=5);
            let poly = random_poly_text(rng, &names[..n], terms, 4);
            let decl: Vec<String> = names[..n].iter().map(|v| format!("{v}@1")).collect();
            format!("blocks: {n}\nvars: {}\nfield: {field}\ntask: monomialize\npoly f: {poly}\n", decl.join(" "))
        }
        1 => {
            let mono = |rng: &mut ChaCha8Rng| {
                format!("a^{}*b^{}*c^{}", rng.gen_range(0..=8), rng.gen_range(0..=8), rng.gen_range(0..=8))
            };
            let gens: Vec<String> = (0..3).map(|k| format!("poly m{k}: {}\n", mono(rng))).collect();
            format!("blocks: 2 1\nvars: a@1 b@1 c@2\nfield: Q\ntask: principalize\n{}", gens.concat())
        }
        2 => {
            let (e1, e2) = (rng.gen_range(1..=9), rng.gen_range(1..=9));
            format!("blocks: 2\nvars: a@1 b@1\nfield: Q\ntask: fraction\npoly g: a^{e1}*b^{e2}\npoly h: a^{e2}\n")
        }
        3 => {
            let s1 = random_root(rng);
            let s2 = random_root(rng);
            format!("blocks: 1\nvars: x@1\nfield: Q\ntask: expand\nrelation z: {}\norder: 12\n", planted(&s1, &s2))
        }
        _ => {
            let a = rng.gen_range(1..=4);
            format!("blocks: 1\nvars: x@1\nfield: Q\ntask: uniformize\nrelation z: z^2 - 2*x^{a}*z + x^{} - x^{}\n", 2 * a, 2 * a + 3)
        }
    }
}

fn random_root(rng: &mut ChaCha8Rng) -> Vec<i64> {
    let mut s: Vec<i64> = (0..=3).map(|_| rng.gen_range(-3..=3)).collect();
    s[0] = 0;
    if s.iter().all(|&c| c == 0) {
        s[1] = 1;
    }
    s
}

/// `(z − s1(x))·(z − s2(x))` expanded, as task text.
fn planted(s1: &[i64], s2: &[i64]) -> String {
    let mut prod = vec![0i64; s1.len() + s2.len()];
    for (i, a) in s1.iter().enumerate() {
        for (j, b) in s2.iter().enumerate() {
            prod[i + j] += a * b;
        }
    }
    let mut terms = vec!["z^2".to_string()];
    for (k, c) in s1.iter().zip(s2).map(|(a, b)| -(a + b)).enumerate() {
        if c != 0 {
            terms.push(format!("{c}*x^{k}*z"));
        }
    }
    for (k, &c) in prod.iter().enumerate() {
        if c != 0 {
            terms.push(format!("{c}*x^{k}"));
        }
    }
    terms.join(" + ").replace("+ -", "- ").replace("*x^0", "")
}

/// Runs `cases` random tasks through execute, log rendering, parsing and
/// verify. Returns the number of failures.
pub fn fuzz(seed: u64, cases: usize) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    for k in 0..cases {
        let text = random_task(&mut rng);
        let task = parse_task(&text)?;
        let result = execute(&task);
        let reparsed = parse_log(&result.log.to_string())?;
        let again = execute(&task);
        let outcome = verify(&reparsed, &task);
        let deterministic = again.log.to_string() == result.log.to_string();
        if outcome.is_err() || !deterministic {
            failures += 1;
            eprintln!("case {k} failed:\n{text}\n{outcome:?} deterministic={deterministic}");
        }
    }
    Ok(failures)
}

/// Entry point for the binary; returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    match cli.command {
        Command::Run { task, out } => match run_file(&task, out.as_deref()) {
            Ok(r) => {
                print!("{}", r.report);
                r.exit_code()
            }
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
        Command::Verify { log, task } => match verify_files(&log, &task) {
            Ok(()) => {
                println!("verify: ok");
                0
            }
            Err(Error::Verify(reason)) => {
                println!("verify: failed");
                println!("reason: {reason}");
                2
            }
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
        Command::Fuzz { seed, cases } => match fuzz(seed, cases) {
            Ok(0) => {
                println!("fuzz: {cases} cases, 0 failures");
                0
            }
            Ok(n) => {
                println!("fuzz: {cases} cases, {n} failures");
                4
            }
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
    }
}
