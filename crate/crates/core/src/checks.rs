//! Run-time checks over the command stream sent to the simulator.

use std::collections::BTreeSet;

use crate::protocol::{decode_command, Command};
use crate::simulator::{effect, Effect, Motion};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    /// Actuator commands may still be sent.
    Open,
    /// `react` sent, `get_status` expected next.
    Reacted,
}

/// Streaming checker for the per-cycle shape `(actuator)* react get_status`
/// and the per-device command disciplines.
#[derive(Debug, Clone)]
pub struct Checker {
    phase: Phase,
    groups: BTreeSet<u8>,
    /// Direction of each axis since its last stop.
    moving: [Option<Motion>; 8],
    /// Last switch command of each magnet.
    magnets: [Option<bool>; 3],
    cycles: u64,
    violations: Vec<String>,
}

impl Default for Checker {
    fn default() -> Self {
        Checker {
            phase: Phase::Open,
            groups: BTreeSet::new(),
            moving: [None; 8],
            magnets: [None; 3],
            cycles: 0,
            violations: Vec::new(),
        }
    }
}

impl Checker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Completed `react`/`get_status` pairs.
    pub fn cycles(&self) -> u64 {
        self.cycles
    }

    pub fn violations(&self) -> &[String] {
        &self.violations
    }

    fn violate(&mut self, msg: String) -> bool {
        self.violations
            .push(format!("cycle {}: {msg}", self.cycles));
        false
    }

    /// Feeds one sent command; returns false if it broke a rule.
    pub fn sent(&mut self, c: Command) -> bool {
        match (c, self.phase) {
            (Command::React, Phase::Open) => {
                self.phase = Phase::Reacted;
                true
            }
            (Command::React, Phase::Reacted) => self.violate("second react in one cycle".into()),
            (Command::GetStatus, Phase::Reacted) => {
                self.phase = Phase::Open;
                self.groups.clear();
                self.cycles += 1;
                true
            }
            (Command::GetStatus, Phase::Open) => self.violate("get_status without react".into()),
            (c, Phase::Reacted) => self.violate(format!("{c} between react and get_status")),
            (c, Phase::Open) => self.actuator(c),
        }
    }

    fn actuator(&mut self, c: Command) -> bool {
        let group = c.group().expect("actuator command");
        let mut ok = true;
        if !self.groups.insert(group) {
            ok &= self.violate(format!("second command of group {group}: {c}"));
        }
        match effect(c) {
            Some(Effect::Axis(a, Motion::Stopped)) => self.moving[a as usize] = None,
            Some(Effect::Axis(a, m)) => {
                let prev = self.moving[a as usize].replace(m);
                if prev.is_some_and(|p| p != m) {
                    ok &= self.violate(format!("{c} reverses {} without stop", a.name()));
                }
            }
            Some(Effect::Magnet(m, on)) => {
                let prev = self.magnets[m as usize].replace(on);
                if prev == Some(on) || (prev.is_none() && !on) {
                    ok &= self.violate(format!("{c} does not alternate"));
                }
            }
            _ => {}
        }
        ok
    }
}

/// Commands sent in a trace (`> ` lines), grouped per cycle. A cycle ends
/// with `get_status`; `react` and `get_status` are not included.
pub fn cycle_commands(trace: &str) -> Vec<Vec<Command>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for c in sent_commands(trace) {
        match c {
            Command::React => {}
            Command::GetStatus => out.push(std::mem::take(&mut cur)),
            c => cur.push(c),
        }
    }
    out
}

/// Every command line sent in a trace, in order. Unknown tokens are skipped.
pub fn sent_commands(trace: &str) -> impl Iterator<Item = Command> + '_ {
    trace
        .lines()
        .filter_map(|l| l.strip_prefix("> "))
        .filter_map(|l| decode_command(l).ok())
}

/// Runs a fresh [`Checker`] over the sent lines of a trace.
pub fn check_trace(trace: &str) -> Checker {
    let mut ch = Checker::new();
    for c in sent_commands(trace) {
        ch.sent(c);
    }
    ch
}

#[cfg(test)]
mod tests {
    use super::*;
    use Command::*;

    fn run(cmds: &[Command]) -> Vec<String> {
        let mut ch = Checker::new();
        for &c in cmds {
            ch.sent(c);
        }
        ch.violations().to_vec()
    }

    #[test]
    fn well_formed_cycles() {
        assert!(run(&[React, GetStatus, PressUpward, Belt1Start, React, GetStatus]).is_empty());
    }

    #[test]
    fn shape_violations() {
        assert_eq!(run(&[GetStatus]).len(), 1);
        assert_eq!(run(&[React, React]).len(), 1);
        assert_eq!(run(&[React, PressUpward, GetStatus]).len(), 1);
    }

    #[test]
    fn one_command_per_group() {
        let v = run(&[Belt1Start, BlankAdd, React, GetStatus]);
        assert_eq!(v, ["cycle 0: second command of group 12: blank_add"]);
    }

    #[test]
    fn reversal_needs_a_stop() {
        let v = run(&[
            PressUpward,
            React,
            GetStatus,
            PressDownward,
            React,
            GetStatus,
        ]);
        assert_eq!(v.len(), 1);
        let ok = [
            PressUpward,
            React,
            GetStatus,
            PressStop,
            React,
            GetStatus,
            PressDownward,
        ];
        assert!(run(&ok).is_empty());
    }

    #[test]
    fn magnets_alternate_from_on() {
        assert_eq!(run(&[Arm1MagOff]).len(), 1);
        let v = run(&[Arm1MagOn, React, GetStatus, Arm1MagOn]);
        assert_eq!(v.len(), 1);
        assert!(run(&[CraneMagOn, React, GetStatus, CraneMagOff]).is_empty());
    }

    #[test]
    fn trace_parsing() {
        let t = "> press_upward\nstep=0 gate=X participants=P binding=\n> react\n> get_status\n< status\n> react\n> get_status\n";
        assert_eq!(cycle_commands(t), vec![vec![PressUpward], vec![]]);
        assert_eq!(check_trace(t).cycles(), 2);
    }
}
