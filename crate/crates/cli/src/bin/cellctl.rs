//! Runs the production cell controller against a simulator: `cellsim` as a
//! child process on stdio, or a simulator already listening on TCP.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStderr, ChildStdin, ChildStdout, Command as Proc, ExitCode, Stdio};
use std::str::FromStr;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use prodcell::bridge::{drive, DriveOptions, RunReport, StreamTransport, Transport};
use prodcell::controller::{build_controller, DispatchMode};
use prodcell::geometry::GeometryConfig;
use prodcell::simulator::ExitReport;

#[derive(Parser, Debug)]
#[command(name = "cellctl", version, about = "Production cell controller")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Drive the simulator for a few cycles (100 by default).
    Run(Common),
    /// Long run (20000 cycles by default) with a report file.
    Soak {
        #[command(flatten)]
        common: Common,
        /// Write the run report here as `key = value` lines.
        #[arg(long, value_name = "PATH")]
        report: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// `stdio` to spawn cellsim, or `tcp:<host:port>`.
    #[arg(long, default_value = "stdio")]
    connect: Connect,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reaction cycles to run.
    #[arg(long, value_name = "N")]
    steps: Option<u64>,
    #[arg(long, default_value = "seq", value_name = "seq|conc")]
    dispatcher: DispatchMode,
    /// Write the controller trace here.
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
    /// Geometry file, also handed to a spawned cellsim.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Print the gate/participation table and exit.
    #[arg(long)]
    dump_matrix: bool,
}

#[derive(Debug, Clone)]
enum Connect {
    Stdio,
    Tcp(String),
}

impl FromStr for Connect {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            _ if s == "stdio" => Ok(Connect::Stdio),
            Some(("tcp", addr)) if !addr.is_empty() => Ok(Connect::Tcp(addr.to_string())),
            _ => Err(format!("expected stdio or tcp:<host:port>, got {s:?}")),
        }
    }
}

/// `cellsim` as a child process; its exit report is read from stderr once
/// its input is closed.
struct ChildSim {
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
    stderr: Option<ChildStderr>,
}

impl ChildSim {
    fn spawn(config: Option<&Path>) -> anyhow::Result<Self> {
        let exe = cellsim_path()?;
        let mut cmd = Proc::new(&exe);
        cmd.arg("--stdio");
        if let Some(c) = config {
            cmd.arg("--config").arg(c);
        }
        let mut child = cmd
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .with_context(|| format!("starting {}", exe.display()))?;
        Ok(ChildSim {
            stdin: child.stdin.take(),
            stdout: BufReader::new(child.stdout.take().expect("piped stdout")),
            stderr: child.stderr.take(),
            child,
        })
    }
}

/// `$CELLSIM`, else `cellsim` next to this executable, else from `PATH`.
fn cellsim_path() -> anyhow::Result<PathBuf> {
    if let Some(p) = std::env::var_os("CELLSIM") {
        return Ok(p.into());
    }
    let exe = std::env::current_exe()?;
    let sibling = exe.with_file_name(format!("cellsim{}", std::env::consts::EXE_SUFFIX));
    Ok(if sibling.exists() {
        sibling
    } else {
        PathBuf::from("cellsim")
    })
}

impl Transport for ChildSim {
    fn send_line(&mut self, line: &str) -> io::Result<()> {
        let Some(w) = self.stdin.as_mut() else {
            return Ok(());
        };
        // a simulator that stopped reading shows up as end of input
        match w.write_all(line.as_bytes()).and_then(|_| w.flush()) {
            Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
            r => r,
        }
    }

    fn recv_line(&mut self) -> io::Result<Option<String>> {
        let mut buf = String::new();
        if self.stdout.read_line(&mut buf)? == 0 {
            return Ok(None);
        }
        Ok(Some(buf.trim_end_matches(['\n', '\r']).to_string()))
    }

    fn exit_report(&mut self) -> Option<ExitReport> {
        drop(self.stdin.take());
        let mut text = String::new();
        self.stderr.take()?.read_to_string(&mut text).ok()?;
        self.child.wait().ok()?;
        ExitReport::parse(&text)
    }
}

impl Drop for ChildSim {
    fn drop(&mut self) {
        drop(self.stdin.take());
        let _ = self.child.wait();
    }
}

fn execute(common: &Common, default_steps: u64) -> anyhow::Result<Option<RunReport>> {
    let cfg = match &common.config {
        Some(p) => GeometryConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => GeometryConfig::default(),
    };
    let ctrl = build_controller(common.dispatcher, &cfg)?;
    if common.dump_matrix {
        print!("{}", ctrl.dump_matrix());
        return Ok(None);
    }
    let opts = DriveOptions {
        seed: common.seed,
        cycles: common.steps.unwrap_or(default_steps),
        ..Default::default()
    };
    let mut trace = match &common.trace {
        Some(p) => Some(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => None,
    };
    let mut transport: Box<dyn Transport> = match &common.connect {
        Connect::Stdio => Box::new(ChildSim::spawn(common.config.as_deref())?),
        Connect::Tcp(addr) => {
            let stream =
                TcpStream::connect(addr).with_context(|| format!("connecting to {addr}"))?;
            Box::new(StreamTransport::new(
                BufReader::new(stream.try_clone()?),
                stream,
            ))
        }
    };
    let report = drive(
        &ctrl,
        transport.as_mut(),
        &opts,
        trace.as_mut().map(|t| t as &mut dyn Write),
    )?;
    if let Some(t) = trace.as_mut() {
        t.flush()?;
    }
    Ok(Some(report))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Cmd::Run(common) => execute(common, 100),
        Cmd::Soak { common, report } => execute(common, 20_000).and_then(|r| {
            if let (Some(r), Some(path)) = (&r, report) {
                std::fs::write(path, r.to_string())
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(r)
        }),
    };
    match outcome {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(report)) => {
            print!("{report}");
            if report.ok() {
                ExitCode::SUCCESS
            } else {
                if let Some(line) = &report.first_offending_line {
                    eprintln!("cellctl: first offending line: {line}");
                }
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("cellctl: {e:#}");
            ExitCode::from(2)
        }
    }
}
