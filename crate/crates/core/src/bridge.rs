//! Drives the controller composition against a simulator: fires internal
//! and actuator rendezvous until the cycle quiesces, then sends `react` and
//! `get_status` and feeds the reply back through `GET_STATUS`.

use std::collections::VecDeque;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::time::{Duration, Instant};

use crate::checks::Checker;
use crate::controller::{build_controller, status_values, Controller, DispatchMode};
use crate::geometry::GeometryConfig;
use crate::protocol::{decode_status, encode_command, Command, GROUP_COUNT};
use crate::simulator::{ExitReport, Session, Simulator};
use crate::sync_core::{EventRecord, Scheduler, Visibility};

/// Line transport to a simulator.
pub trait Transport {
    /// Sends one line; `line` carries its trailing newline.
    fn send_line(&mut self, line: &str) -> io::Result<()>;
    /// Next line from the simulator, without its newline; `None` at end.
    fn recv_line(&mut self) -> io::Result<Option<String>>;
    /// The simulator's own report, when the transport can obtain it.
    fn exit_report(&mut self) -> Option<ExitReport> {
        None
    }
}

/// A simulator session in the same process, still spoken to through the
/// line codec.
pub struct InProcess {
    session: Session,
    replies: VecDeque<String>,
}

impl InProcess {
    pub fn new(session: Session) -> Self {
        InProcess {
            session,
            replies: VecDeque::new(),
        }
    }

    pub fn session(&self) -> &Session {
        &self.session
    }
}

impl Transport for InProcess {
    fn send_line(&mut self, line: &str) -> io::Result<()> {
        let out = self.session.handle_line(line.trim_end_matches('\n'));
        self.replies.extend(out.reply);
        Ok(())
    }

    fn recv_line(&mut self) -> io::Result<Option<String>> {
        Ok(self
            .replies
            .pop_front()
            .map(|r| r.trim_end_matches('\n').to_string()))
    }

    fn exit_report(&mut self) -> Option<ExitReport> {
        Some(self.session.exit_report())
    }
}

/// Any reader/writer pair, e.g. a child's stdio or a TCP stream.
pub struct StreamTransport<R, W> {
    reader: R,
    writer: W,
}

impl<R: BufRead, W: Write> StreamTransport<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        StreamTransport { reader, writer }
    }

    pub fn into_inner(self) -> (R, W) {
        (self.reader, self.writer)
    }
}

impl<R: BufRead, W: Write> Transport for StreamTransport<R, W> {
    fn send_line(&mut self, line: &str) -> io::Result<()> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.flush()
    }

    fn recv_line(&mut self) -> io::Result<Option<String>> {
        let mut buf = String::new();
        if self.reader.read_line(&mut buf)? == 0 {
            return Ok(None);
        }
        Ok(Some(buf.trim_end_matches(['\n', '\r']).to_string()))
    }
}

/// Injects one extra command line `delay` cycles after the controller
/// first sends `trigger`, just before that cycle's `react`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaultInjector {
    pub trigger: Command,
    pub delay: u64,
    pub inject: Command,
    armed_at: Option<u64>,
    injected_at: Option<u64>,
}

impl FaultInjector {
    pub fn new(trigger: Command, delay: u64, inject: Command) -> Self {
        FaultInjector {
            trigger,
            delay,
            inject,
            armed_at: None,
            injected_at: None,
        }
    }

    /// A second command of the trigger's group in the same cycle.
    pub fn duplicate_group() -> Self {
        Self::new(Command::PressUpward, 0, Command::PressStop)
    }

    /// The opposite direction while the press is still moving up.
    pub fn reversal() -> Self {
        Self::new(Command::PressUpward, 2, Command::PressDownward)
    }

    /// Releasing arm 1's blank while the arm travels back from the table.
    pub fn magnet_release() -> Self {
        Self::new(Command::Arm1MagOn, 3, Command::Arm1MagOff)
    }

    fn sent(&mut self, c: Command, cycle: u64) {
        if c == self.trigger && self.armed_at.is_none() {
            self.armed_at = Some(cycle);
        }
    }

    fn due(&mut self, cycle: u64) -> Option<Command> {
        let at = self.armed_at? + self.delay;
        (at == cycle && self.injected_at.is_none()).then(|| {
            self.injected_at = Some(cycle);
            self.inject
        })
    }

    pub fn injected_at(&self) -> Option<u64> {
        self.injected_at
    }
}

#[derive(Debug, Clone)]
pub struct DriveOptions {
    pub seed: u64,
    /// Reaction cycles to run.
    pub cycles: u64,
    /// Most rendezvous allowed between two `react`s.
    pub livelock_bound: u32,
    pub injector: Option<FaultInjector>,
}

impl Default for DriveOptions {
    fn default() -> Self {
        DriveOptions {
            seed: 0,
            cycles: 0,
            livelock_bound: 1000,
            injector: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub mode: DispatchMode,
    pub seed: u64,
    /// Simulator steps, when the simulator reported them.
    pub steps: Option<u64>,
    pub cycles: u64,
    pub events: u64,
    pub commands_per_group: [u64; GROUP_COUNT as usize],
    pub forged_deliveries: Option<u64>,
    pub violations: Vec<String>,
    /// Trace line at which the first violation surfaced.
    pub first_offending_line: Option<String>,
    pub injected_at: Option<u64>,
    /// Cycle whose status carried the first simulator error.
    pub halted_at: Option<u64>,
    pub wall_time: Duration,
}

impl RunReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<u64>| v.map_or("unknown".to_string(), |v| v.to_string());
        writeln!(f, "mode = {}", self.mode)?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "cycles = {}", self.cycles)?;
        writeln!(f, "steps = {}", opt(self.steps))?;
        writeln!(f, "events = {}", self.events)?;
        for (g, n) in self.commands_per_group.iter().enumerate() {
            writeln!(f, "group_{} = {n}", g + 1)?;
        }
        writeln!(f, "forged_deliveries = {}", opt(self.forged_deliveries))?;
        writeln!(f, "wall_time_ms = {}", self.wall_time.as_millis())?;
        writeln!(f, "violations = {}", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "violation = {v}")?;
        }
        if let Some(l) = &self.first_offending_line {
            writeln!(f, "first_offending_line = {l}")?;
        }
        Ok(())
    }
}

struct Run<'a, 'b> {
    transport: &'a mut dyn Transport,
    trace: Option<&'b mut dyn Write>,
    checker: Checker,
    report: RunReport,
}

impl Run<'_, '_> {
    fn log(&mut self, line: &str) -> io::Result<()> {
        if let Some(t) = self.trace.as_deref_mut() {
            writeln!(t, "{line}")?;
        }
        Ok(())
    }

    fn send(&mut self, c: Command) -> io::Result<()> {
        self.log(&format!("> {c}"))?;
        if !self.checker.sent(c) {
            let v = self
                .checker
                .violations()
                .last()
                .cloned()
                .unwrap_or_default();
            self.violation(v, format!("> {c}"));
        }
        if let Some(g) = c.group() {
            self.report.commands_per_group[usize::from(g) - 1] += 1;
        }
        self.transport.send_line(&encode_command(c))
    }

    fn violation(&mut self, msg: String, line: String) {
        if self.report.first_offending_line.is_none() {
            self.report.first_offending_line = Some(line);
        }
        self.report.violations.push(msg);
    }
}

/// Runs the controller against `transport` for `opts.cycles` reaction
/// cycles, or until a violation, controller fault or deadlock.
pub fn drive(
    ctrl: &Controller,
    transport: &mut dyn Transport,
    opts: &DriveOptions,
    trace: Option<&mut dyn Write>,
) -> io::Result<RunReport> {
    let start = Instant::now();
    let comp = ctrl.composition();
    let mut states = ctrl.initial_states();
    let mut scheduler = Scheduler::new(&ctrl.scheduler_policy(opts.seed));
    let mut injector = opts.injector.clone();
    let mut run = Run {
        transport,
        trace,
        checker: Checker::new(),
        report: RunReport {
            mode: ctrl.mode(),
            seed: opts.seed,
            ..Default::default()
        },
    };
    let high = |g| comp.gate(g).visibility != Visibility::Status;
    let malformed = |e: crate::sync_core::CompositionError| io::Error::other(e.to_string());

    'cycles: for cycle in 0..opts.cycles {
        let mut fired = 0u32;
        loop {
            let table = comp.offer_table(&states).map_err(malformed)?;
            let enabled = comp.enabled_in(&table, high);
            let Some(k) = scheduler.choose(&enabled) else {
                break;
            };
            let event = comp
                .fire_in(&table, &mut states, &enabled[k], None)
                .map_err(|e| io::Error::other(e.to_string()))?;
            let record = EventRecord {
                step: run.report.events,
                event,
            };
            run.report.events += 1;
            run.log(&record.to_string())?;
            if comp.gate(record.event.gate).visibility == Visibility::External {
                let c = Command::from_gate_name(&record.event.gate_name)
                    .expect("external gates are actuator commands");
                if let Some(inj) = injector.as_mut() {
                    inj.sent(c, cycle);
                }
                run.send(c)?;
            }
            fired += 1;
            if fired > opts.livelock_bound {
                run.violation(
                    format!(
                        "cycle {cycle}: livelock, more than {} rendezvous",
                        opts.livelock_bound
                    ),
                    record.to_string(),
                );
                break 'cycles;
            }
        }
        if let Some(c) = injector.as_mut().and_then(|i| i.due(cycle)) {
            run.send(c)?;
        }
        run.send(Command::React)?;
        run.send(Command::GetStatus)?;
        let Some(line) = run.transport.recv_line()? else {
            run.violation(
                format!("cycle {cycle}: simulator closed the connection"),
                String::new(),
            );
            break;
        };
        run.log(&format!("< {line}"))?;
        let status = match decode_status(&line) {
            Ok(s) => s,
            Err(e) => {
                run.violation(
                    format!("cycle {cycle}: bad status line: {e}"),
                    format!("< {line}"),
                );
                break;
            }
        };
        if !status.errors.is_empty() {
            run.report.halted_at = Some(cycle);
            for e in &status.errors {
                run.violation(
                    format!("cycle {cycle}: simulator: {e}"),
                    format!("< {line}"),
                );
            }
            break;
        }

        let table = comp.offer_table(&states).map_err(malformed)?;
        let env = status_values(&status);
        let candidates = comp.enabled_on(&table, ctrl.status_gate(), Some(&env));
        let Some(r) = candidates.first() else {
            run.violation(
                format!("cycle {cycle}: deadlock, GET_STATUS not offered"),
                String::new(),
            );
            break;
        };
        let event = comp
            .fire_in(&table, &mut states, r, Some(&env))
            .map_err(|e| io::Error::other(e.to_string()))?;
        let record = EventRecord {
            step: run.report.events,
            event,
        };
        run.report.events += 1;
        run.log(&record.to_string())?;
        run.report.cycles += 1;
        if let Some(fault) = ctrl.fault(&states) {
            run.violation(
                format!("cycle {cycle}: controller fault: {fault}"),
                record.to_string(),
            );
            break;
        }
    }

    let mut report = run.report;
    report.injected_at = injector.and_then(|i| i.injected_at());
    if let Some(x) = run.transport.exit_report() {
        report.steps = Some(x.step_count);
        report.forged_deliveries = Some(x.forged_deliveries);
    }
    report.wall_time = start.elapsed();
    Ok(report)
}

/// Builds a controller and an in-process simulator and drives them.
pub fn soak(
    cfg: &GeometryConfig,
    mode: DispatchMode,
    opts: &DriveOptions,
    trace: Option<&mut dyn Write>,
) -> io::Result<RunReport> {
    let ctrl = build_controller(mode, cfg).map_err(|e| io::Error::other(e.to_string()))?;
    let mut transport = InProcess::new(Session::new(Simulator::new(cfg.clone())));
    drive(&ctrl, &mut transport, opts, trace)
}
