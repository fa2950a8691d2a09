use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use funcalc::{wbfile, Config, Workbook};
use funcalc_cli::{Reply, Session};

/// Spreadsheet engine with compiled sheet-defined functions.
///
/// Without --eval, starts an interactive session; type `help` for commands.
#[derive(Parser, Debug)]
#[command(version)]
struct Args {
    /// Workbook file to load.
    workbook: Option<PathBuf>,
    /// Print the value of a cell (`Sheet!A1`) and exit. May be repeated.
    #[arg(long, value_name = "ADDR")]
    eval: Vec<String>,
    /// Log specializer decisions to stderr as JSON lines.
    #[arg(long)]
    trace_spec: bool,
    /// Seed for RAND().
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// New specializations allowed per function within one SPECIALIZE.
    #[arg(long, default_value_t = 100)]
    spec_limit: usize,
    /// Only apply simplifications that keep error and text results.
    #[arg(long)]
    strict_simplify: bool,
}

fn load(args: &Args) -> anyhow::Result<Workbook> {
    let mut wb = Workbook::with_config(Config {
        seed: args.seed,
        spec_limit: args.spec_limit,
        strict_simplify: args.strict_simplify,
        ..Config::default()
    });
    if let Some(path) = &args.workbook {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        wbfile::load_into(&mut wb, &text).with_context(|| format!("loading {}", path.display()))?;
    }
    for d in wb.define_diagnostics() {
        eprintln!("warning: {d}");
    }
    if args.trace_spec {
        wb.set_trace_sink(|e| eprintln!("{}", e.to_json()));
    }
    Ok(wb)
}

fn run(args: Args) -> ExitCode {
    let wb = match load(&args) {
        Ok(wb) => wb,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let mut session = Session::new(wb);
    if !args.eval.is_empty() {
        let mut status = ExitCode::SUCCESS;
        for addr in &args.eval {
            match session.execute(&format!("eval {addr}")) {
                Ok(Reply::Text(t)) => println!("{t}"),
                Ok(Reply::Quit) => {}
                Err(e) => {
                    eprintln!("error: {e}");
                    status = ExitCode::from(2);
                }
            }
        }
        return status;
    }
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout();
    loop {
        print!("> ");
        let _ = stdout.flush();
        let mut line = String::new();
        match stdin.lock().read_line(&mut line) {
            Ok(0) => break,
            Ok(_) => {}
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::FAILURE;
            }
        }
        match session.execute(&line) {
            Ok(Reply::Text(t)) if t.is_empty() => {}
            Ok(Reply::Text(t)) => println!("{t}"),
            Ok(Reply::Quit) => break,
            Err(e) => eprintln!("error: {e}"),
        }
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let args = Args::parse();
    // Non-tail SDF recursion uses the native stack.
    std::thread::Builder::new()
        .stack_size(256 << 20)
        .spawn(move || run(args))
        .expect("spawn session thread")
        .join()
        .unwrap_or(ExitCode::FAILURE)
}
