//! Headless production cell simulator speaking the line protocol on stdio
//! or on one TCP connection. The exit report goes to stderr.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use prodcell::geometry::GeometryConfig;
use prodcell::simulator::{serve, ExitReport, Session, Simulator};

#[derive(Parser, Debug)]
#[command(name = "cellsim", version, about = "Production cell simulator")]
struct Args {
    /// Serve the protocol on stdin/stdout (the default).
    #[arg(long, conflicts_with = "listen")]
    stdio: bool,
    /// Accept one TCP connection on this port and serve it.
    #[arg(long, value_name = "PORT")]
    listen: Option<u16>,
    /// Geometry file; the built-in default geometry otherwise.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Halt after this many react steps.
    #[arg(long, value_name = "N")]
    max_steps: Option<u64>,
    /// Write every protocol line here, `>` received and `<` sent.
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
}

fn run(args: Args) -> anyhow::Result<ExitReport> {
    let cfg = match &args.config {
        Some(p) => GeometryConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => GeometryConfig::default(),
    };
    let mut session = Session::new(Simulator::new(cfg)).with_max_steps(args.max_steps);
    let mut trace = match &args.trace {
        Some(p) => Some(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => None,
    };
    let trace_ref = trace.as_mut().map(|t| t as &mut dyn Write);

    let report = match args.listen {
        Some(port) => {
            let listener = TcpListener::bind(("127.0.0.1", port))
                .with_context(|| format!("listening on port {port}"))?;
            eprintln!("cellsim: listening on {}", listener.local_addr()?);
            let (stream, peer) = listener.accept()?;
            eprintln!("cellsim: connection from {peer}");
            let reader = BufReader::new(stream.try_clone()?);
            serve(reader, stream, &mut session, trace_ref)?
        }
        None => serve(
            io::stdin().lock(),
            io::stdout().lock(),
            &mut session,
            trace_ref,
        )?,
    };
    if let Some(t) = trace.as_mut() {
        t.flush()?;
    }
    Ok(report)
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(report) => {
            eprint!("{report}");
            if report.errors.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("cellsim: {e:#}");
            ExitCode::from(2)
        }
    }
}
