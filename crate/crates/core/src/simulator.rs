//! Headless production cell: discrete per-step kinematics, blank handovers,
//! sensor sampling and a safety monitor that halts on the first error.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{self, BufRead, Write};

use crate::cell_types::approx_eq;
use crate::geometry::{Axis, GeometryConfig};
use crate::protocol::{decode_command, encode_status, Command, SensorStatus};

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AxisId {
    Press,
    Arm1,
    Arm2,
    Robot,
    TableElev,
    TableRot,
    CraneX,
    CraneY,
}

impl AxisId {
    pub const ALL: [AxisId; 8] = [
        AxisId::Press,
        AxisId::Arm1,
        AxisId::Arm2,
        AxisId::Robot,
        AxisId::TableElev,
        AxisId::TableRot,
        AxisId::CraneX,
        AxisId::CraneY,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AxisId::Press => "press",
            AxisId::Arm1 => "arm1",
            AxisId::Arm2 => "arm2",
            AxisId::Robot => "robot",
            AxisId::TableElev => "table_elev",
            AxisId::TableRot => "table_rot",
            AxisId::CraneX => "crane_x",
            AxisId::CraneY => "crane_y",
        }
    }

    fn config(self, cfg: &GeometryConfig) -> &Axis {
        match self {
            AxisId::Press => &cfg.press,
            AxisId::Arm1 => &cfg.arm1,
            AxisId::Arm2 => &cfg.arm2,
            AxisId::Robot => &cfg.robot,
            AxisId::TableElev => &cfg.table_elev,
            AxisId::TableRot => &cfg.table_rot,
            AxisId::CraneX => &cfg.crane_x,
            AxisId::CraneY => &cfg.crane_y,
        }
    }
}

/// Motor mode of one axis. `Positive` increases the axis coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Motion {
    Negative,
    #[default]
    Stopped,
    Positive,
}

impl Motion {
    fn sign(self) -> f64 {
        match self {
            Motion::Negative => -1.0,
            Motion::Stopped => 0.0,
            Motion::Positive => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Belt {
    Feed,
    Deposit,
}

impl Belt {
    pub fn name(self) -> &'static str {
        match self {
            Belt::Feed => "feed belt",
            Belt::Deposit => "deposit belt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Magnet {
    Arm1,
    Arm2,
    Crane,
}

impl Magnet {
    pub const ALL: [Magnet; 3] = [Magnet::Arm1, Magnet::Arm2, Magnet::Crane];

    pub fn name(self) -> &'static str {
        match self {
            Magnet::Arm1 => "arm1 magnet",
            Magnet::Arm2 => "arm2 magnet",
            Magnet::Crane => "crane magnet",
        }
    }

    fn slot(self) -> Location {
        match self {
            Magnet::Arm1 => Location::Arm1,
            Magnet::Arm2 => Location::Arm2,
            Magnet::Crane => Location::Crane,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Location {
    FeedBelt(f64),
    Table,
    Arm1,
    Press,
    Arm2,
    DepositBelt(f64),
    Crane,
}

impl Location {
    pub const SINGLE_SLOTS: [Location; 5] = [
        Location::Table,
        Location::Press,
        Location::Arm1,
        Location::Arm2,
        Location::Crane,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Location::FeedBelt(_) => "feed belt",
            Location::Table => "table",
            Location::Arm1 => "arm1",
            Location::Press => "press",
            Location::Arm2 => "arm2",
            Location::DepositBelt(_) => "deposit belt",
            Location::Crane => "crane",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Blank {
    pub id: u32,
    pub location: Location,
    pub forged: bool,
}

/// What an actuator command does to the plant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Effect {
    Axis(AxisId, Motion),
    Belt(Belt, bool),
    Magnet(Magnet, bool),
    AddBlank,
}

/// Maps an actuator command to its effect; `None` for `react`/`get_status`.
pub fn effect(c: Command) -> Option<Effect> {
    use AxisId::*;
    use Command as C;
    use Motion::*;
    Some(match c {
        C::PressUpward => Effect::Axis(Press, Positive),
        C::PressStop => Effect::Axis(Press, Stopped),
        C::PressDownward => Effect::Axis(Press, Negative),
        C::Arm1Forward => Effect::Axis(Arm1, Positive),
        C::Arm1Stop => Effect::Axis(Arm1, Stopped),
        C::Arm1Backward => Effect::Axis(Arm1, Negative),
        C::Arm2Forward => Effect::Axis(Arm2, Positive),
        C::Arm2Stop => Effect::Axis(Arm2, Stopped),
        C::Arm2Backward => Effect::Axis(Arm2, Negative),
        C::Arm1MagOn => Effect::Magnet(Magnet::Arm1, true),
        C::Arm1MagOff => Effect::Magnet(Magnet::Arm1, false),
        C::Arm2MagOn => Effect::Magnet(Magnet::Arm2, true),
        C::Arm2MagOff => Effect::Magnet(Magnet::Arm2, false),
        C::RobotLeft => Effect::Axis(Robot, Positive),
        C::RobotStop => Effect::Axis(Robot, Stopped),
        C::RobotRight => Effect::Axis(Robot, Negative),
        C::TableLeft => Effect::Axis(TableRot, Positive),
        C::TableStopH => Effect::Axis(TableRot, Stopped),
        C::TableRight => Effect::Axis(TableRot, Negative),
        C::TableUpward => Effect::Axis(TableElev, Positive),
        C::TableStopV => Effect::Axis(TableElev, Stopped),
        C::TableDownward => Effect::Axis(TableElev, Negative),
        C::CraneToBelt2 => Effect::Axis(CraneX, Negative),
        C::CraneStopH => Effect::Axis(CraneX, Stopped),
        C::CraneToBelt1 => Effect::Axis(CraneX, Positive),
        C::CraneLift => Effect::Axis(CraneY, Positive),
        C::CraneStopV => Effect::Axis(CraneY, Stopped),
        C::CraneLower => Effect::Axis(CraneY, Negative),
        C::CraneMagOn => Effect::Magnet(Magnet::Crane, true),
        C::CraneMagOff => Effect::Magnet(Magnet::Crane, false),
        C::Belt1Start => Effect::Belt(Belt::Feed, true),
        C::Belt1Stop => Effect::Belt(Belt::Feed, false),
        C::BlankAdd => Effect::AddBlank,
        C::Belt2Start => Effect::Belt(Belt::Deposit, true),
        C::Belt2Stop => Effect::Belt(Belt::Deposit, false),
        C::React | C::GetStatus => return None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellPhysicalState {
    pub positions: [f64; 8],
    pub motion: [Motion; 8],
    /// Running flags of the feed and deposit belts.
    pub belts: [bool; 2],
    /// Arm 1, arm 2 and crane magnets.
    pub magnets: [bool; 3],
    pub blanks: Vec<Blank>,
    pub step_count: u64,
    pub forged_deliveries: u64,
    pub errors: Vec<String>,
    pub halted: bool,
    next_id: u32,
    commanded: BTreeSet<u8>,
}

impl CellPhysicalState {
    pub fn initial(cfg: &GeometryConfig) -> Self {
        let mut positions = [0.0; 8];
        for a in AxisId::ALL {
            positions[a as usize] = a.config(cfg).init;
        }
        CellPhysicalState {
            positions,
            motion: [Motion::Stopped; 8],
            belts: [false; 2],
            magnets: [false; 3],
            blanks: Vec::new(),
            step_count: 0,
            forged_deliveries: 0,
            errors: Vec::new(),
            halted: false,
            next_id: 0,
            commanded: BTreeSet::new(),
        }
    }

    pub fn position(&self, a: AxisId) -> f64 {
        self.positions[a as usize]
    }

    pub fn motion_of(&self, a: AxisId) -> Motion {
        self.motion[a as usize]
    }

    pub fn belt_running(&self, b: Belt) -> bool {
        self.belts[b as usize]
    }

    pub fn magnet_on(&self, m: Magnet) -> bool {
        self.magnets[m as usize]
    }

    fn blank_at(&self, loc: Location) -> Option<usize> {
        self.blanks.iter().position(|b| b.location == loc)
    }

    fn belt_positions(&self, belt: Belt) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .blanks
            .iter()
            .filter_map(|b| match (belt, b.location) {
                (Belt::Feed, Location::FeedBelt(p)) => Some(p),
                (Belt::Deposit, Location::DepositBelt(p)) => Some(p),
                _ => None,
            })
            .collect();
        v.sort_by(f64::total_cmp);
        v
    }
}

/// The plant together with its geometry.
#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: GeometryConfig,
    state: CellPhysicalState,
}

impl Simulator {
    pub fn new(cfg: GeometryConfig) -> Self {
        let state = CellPhysicalState::initial(&cfg);
        Simulator { cfg, state }
    }

    pub fn config(&self) -> &GeometryConfig {
        &self.cfg
    }

    pub fn state(&self) -> &CellPhysicalState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut CellPhysicalState {
        &mut self.state
    }

    pub fn halted(&self) -> bool {
        self.state.halted
    }

    /// Records a safety or protocol error and halts.
    pub fn fail(&mut self, msg: impl Into<String>) {
        self.state.errors.push(msg.into());
        self.state.halted = true;
    }

    /// Applies one actuator command. Positions do not change until the next
    /// react step.
    pub fn apply_command(&mut self, c: Command) {
        let Some(eff) = effect(c) else {
            return;
        };
        let group = c.group().expect("actuator command");
        if !self.state.commanded.insert(group) {
            self.fail(format!("duplicate group command: group {group}"));
            return;
        }
        match eff {
            Effect::Axis(a, m) => {
                let cur = self.state.motion[a as usize];
                if m != Motion::Stopped && cur != Motion::Stopped && cur != m {
                    self.fail(format!("reversal without stop: {}", a.name()));
                    return;
                }
                self.state.motion[a as usize] = m;
            }
            Effect::Belt(b, on) => self.state.belts[b as usize] = on,
            Effect::Magnet(m, on) => self.state.magnets[m as usize] = on,
            Effect::AddBlank => {
                let spacing = self.cfg.blank_spacing;
                if self
                    .state
                    .belt_positions(Belt::Feed)
                    .iter()
                    .any(|p| *p < spacing - EPS)
                {
                    self.fail("entry occupied: feed belt");
                    return;
                }
                let id = self.state.next_id;
                self.state.next_id += 1;
                self.state.blanks.push(Blank {
                    id,
                    location: Location::FeedBelt(0.0),
                    forged: false,
                });
            }
        }
    }

    /// Applies the buffered commands of one step, then advances the plant.
    pub fn react(&mut self, commands: &[Command]) {
        for &c in commands {
            if self.state.halted {
                break;
            }
            self.apply_command(c);
        }
        if !self.state.halted {
            self.react_step();
        }
    }

    /// One discrete step: magnet handovers, motion, belts, forging, then the
    /// safety monitor.
    pub fn react_step(&mut self) {
        self.handovers();
        for a in AxisId::ALL {
            let speed = a.config(&self.cfg).speed;
            self.state.positions[a as usize] += self.state.motion[a as usize].sign() * speed;
        }
        self.advance_feed_belt();
        self.advance_deposit_belt();
        if approx_eq(self.state.position(AxisId::Press), self.cfg.press_top) {
            if let Some(i) = self.state.blank_at(Location::Press) {
                self.state.blanks[i].forged = true;
            }
        }
        self.state.step_count += 1;
        self.check_safety();
        self.state.commanded.clear();
    }

    fn handovers(&mut self) {
        for m in Magnet::ALL {
            let carrying = self.state.blank_at(m.slot());
            match (self.state.magnet_on(m), carrying) {
                (true, None) => {
                    if let Some(i) = self.pick_source(m) {
                        self.state.blanks[i].location = m.slot();
                    }
                }
                (false, Some(i)) => match self.drop_target(m) {
                    Some(loc) => {
                        self.state.blanks[i].location = loc;
                        if matches!(loc, Location::DepositBelt(_)) && self.state.blanks[i].forged {
                            self.state.forged_deliveries += 1;
                        }
                    }
                    None => self.fail(format!("blank dropped: {}", m.name())),
                },
                _ => {}
            }
        }
    }

    fn at(&self, a: AxisId, v: f64) -> bool {
        approx_eq(self.state.position(a), v)
    }

    /// Index of the blank a magnet would lift right now.
    fn pick_source(&self, m: Magnet) -> Option<usize> {
        let c = &self.cfg;
        match m {
            Magnet::Arm1 => {
                let aligned = self.at(AxisId::Robot, c.robot_table)
                    && self.at(AxisId::Arm1, c.arm1_table)
                    && self.at(AxisId::TableRot, c.table_rot_transfer)
                    && self.at(AxisId::TableElev, c.table_elev_top);
                aligned
                    .then(|| self.state.blank_at(Location::Table))
                    .flatten()
            }
            Magnet::Arm2 => {
                let aligned = self.at(AxisId::Robot, c.robot_press)
                    && self.at(AxisId::Arm2, c.arm2_press)
                    && self.at(AxisId::Press, c.press_bottom);
                aligned
                    .then(|| self.state.blank_at(Location::Press))
                    .flatten()
            }
            Magnet::Crane => {
                let y = self.state.position(AxisId::CraneY);
                let aligned = self.at(AxisId::CraneX, c.crane_x_deposit)
                    && y < c.crane_y_drop
                    && !approx_eq(y, c.crane_y_drop);
                if !aligned {
                    return None;
                }
                self.state.blanks.iter().position(|b| match b.location {
                    Location::DepositBelt(p) => {
                        p >= c.deposit_photocell_end - EPS && p < c.deposit_belt_length
                    }
                    _ => false,
                })
            }
        }
    }

    /// Where a released blank lands, if anything receives it.
    fn drop_target(&self, m: Magnet) -> Option<Location> {
        let c = &self.cfg;
        match m {
            Magnet::Arm1 => (self.at(AxisId::Robot, c.robot_press)
                && self.at(AxisId::Arm1, c.arm1_press)
                && self.at(AxisId::Press, c.press_middle)
                && self.state.blank_at(Location::Press).is_none())
            .then_some(Location::Press),
            Magnet::Arm2 => (self.at(AxisId::Robot, c.robot_deposit)
                && self.at(AxisId::Arm2, c.arm2_deposit))
            .then_some(Location::DepositBelt(0.0)),
            Magnet::Crane => (self.at(AxisId::CraneX, c.crane_x_feed)
                && self.at(AxisId::CraneY, c.crane_y_drop))
            .then_some(Location::FeedBelt(0.0)),
        }
    }

    fn advance_feed_belt(&mut self) {
        if !self.state.belt_running(Belt::Feed) {
            return;
        }
        let (speed, len) = (self.cfg.feed_belt_speed, self.cfg.feed_belt_length);
        let table_ready = self.at(AxisId::TableRot, self.cfg.table_rot_load)
            && self.at(AxisId::TableElev, self.cfg.table_elev_bottom);
        let mut dropped = false;
        for i in 0..self.state.blanks.len() {
            let Location::FeedBelt(p) = self.state.blanks[i].location else {
                continue;
            };
            let p = p + speed;
            if p >= len - EPS {
                if table_ready && self.state.blank_at(Location::Table).is_none() {
                    self.state.blanks[i].location = Location::Table;
                } else {
                    self.state.blanks[i].location = Location::FeedBelt(p);
                    dropped = true;
                }
            } else {
                self.state.blanks[i].location = Location::FeedBelt(p);
            }
        }
        if dropped {
            self.fail("blank dropped: feed belt end");
        }
    }

    fn advance_deposit_belt(&mut self) {
        if !self.state.belt_running(Belt::Deposit) {
            return;
        }
        let (speed, len) = (self.cfg.deposit_belt_speed, self.cfg.deposit_belt_length);
        let mut dropped = false;
        for b in &mut self.state.blanks {
            if let Location::DepositBelt(p) = b.location {
                let p = p + speed;
                dropped |= p >= len - EPS;
                b.location = Location::DepositBelt(p);
            }
        }
        if dropped {
            self.fail("blank dropped: deposit belt end");
        }
    }

    /// Runs the monitor over the current state. Any finding halts the plant.
    pub fn check_safety(&mut self) -> Vec<String> {
        let mut found = Vec::new();
        let c = &self.cfg;
        let s = &self.state;
        for a in AxisId::ALL {
            let ax = a.config(c);
            let p = s.position(a);
            if p < ax.min - EPS || p > ax.max + EPS {
                found.push(format!("range: {}", a.name()));
            }
        }
        if s.motion_of(AxisId::Press) != Motion::Stopped && self.at(AxisId::Robot, c.robot_press) {
            if s.position(AxisId::Arm1) > c.arm1_press - c.press_clearance {
                found.push("collision: arm1/press".to_string());
            }
            if s.position(AxisId::Arm2) > c.arm2_press - c.press_clearance {
                found.push("collision: arm2/press".to_string());
            }
        }
        for belt in [Belt::Feed, Belt::Deposit] {
            let ps = s.belt_positions(belt);
            if ps.windows(2).any(|w| w[1] - w[0] < c.blank_spacing - EPS) {
                found.push(format!("spacing: {}", belt.name()));
            }
        }
        for loc in Location::SINGLE_SLOTS {
            if s.blanks.iter().filter(|b| b.location == loc).count() > 1 {
                found.push(format!("slot: {}", loc.name()));
            }
        }
        for msg in &found {
            self.fail(msg.clone());
        }
        found
    }

    pub fn sample_sensors(&self) -> SensorStatus {
        let c = &self.cfg;
        let s = &self.state;
        let feed = s.belt_positions(Belt::Feed);
        let deposit = s.belt_positions(Belt::Deposit);
        SensorStatus {
            s1: self.at(AxisId::Press, c.press_bottom),
            s2: self.at(AxisId::Press, c.press_middle),
            s3: self.at(AxisId::Press, c.press_top),
            s4: s.position(AxisId::Arm1),
            s5: s.position(AxisId::Arm2),
            s6: s.position(AxisId::Robot),
            s7: self.at(AxisId::TableRot, c.table_rot_load),
            s8: self.at(AxisId::TableRot, c.table_rot_transfer),
            s9: self.at(AxisId::CraneX, c.crane_x_deposit),
            s10: self.at(AxisId::CraneX, c.crane_x_feed),
            s11: s.position(AxisId::CraneY),
            s12: s.position(AxisId::TableElev),
            s13: feed
                .iter()
                .any(|p| *p >= c.feed_photocell - EPS && *p < c.feed_belt_length),
            s14: deposit.iter().any(|p| {
                *p >= c.deposit_photocell_start - EPS && *p < c.deposit_photocell_end - EPS
            }),
            errors: s.errors.clone(),
        }
    }
}

/// Reply to one received line and whether the session is over.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LineOutcome {
    pub reply: Option<String>,
    pub terminate: bool,
}

/// One protocol session: buffers actuator commands until `react`.
#[derive(Debug, Clone)]
pub struct Session {
    sim: Simulator,
    pending: Vec<Command>,
    max_steps: Option<u64>,
    finished: bool,
}

impl Session {
    pub fn new(sim: Simulator) -> Self {
        Session {
            sim,
            pending: Vec::new(),
            max_steps: None,
            finished: false,
        }
    }

    /// After `n` react steps the next `react` ends the session.
    pub fn with_max_steps(mut self, n: Option<u64>) -> Self {
        self.max_steps = n;
        self
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    pub fn finished(&self) -> bool {
        self.finished
    }

    pub fn handle_line(&mut self, line: &str) -> LineOutcome {
        if self.finished {
            return LineOutcome {
                reply: None,
                terminate: true,
            };
        }
        if self.sim.halted() {
            return self.halt_reply();
        }
        match decode_command(line) {
            Err(e) => {
                self.sim.fail(format!("protocol: {e}"));
                self.halt_reply()
            }
            Ok(Command::GetStatus) => LineOutcome {
                reply: Some(encode_status(&self.sim.sample_sensors())),
                terminate: false,
            },
            Ok(Command::React) => {
                if self
                    .max_steps
                    .is_some_and(|n| self.sim.state().step_count >= n)
                {
                    self.finished = true;
                    return LineOutcome {
                        reply: None,
                        terminate: true,
                    };
                }
                let cmds = std::mem::take(&mut self.pending);
                self.sim.react(&cmds);
                LineOutcome::default()
            }
            Ok(c) => {
                self.pending.push(c);
                LineOutcome::default()
            }
        }
    }

    fn halt_reply(&mut self) -> LineOutcome {
        self.finished = true;
        LineOutcome {
            reply: Some(encode_status(&self.sim.sample_sensors())),
            terminate: true,
        }
    }

    pub fn exit_report(&self) -> ExitReport {
        let s = self.sim.state();
        ExitReport {
            step_count: s.step_count,
            forged_deliveries: s.forged_deliveries,
            errors: s.errors.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExitReport {
    pub step_count: u64,
    pub forged_deliveries: u64,
    pub errors: Vec<String>,
}

impl fmt::Display for ExitReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "step_count = {}", self.step_count)?;
        writeln!(f, "forged_deliveries = {}", self.forged_deliveries)?;
        writeln!(f, "errors = {}", self.errors.join("; "))
    }
}

impl ExitReport {
    /// Parses the text produced by `Display`. Unknown keys are ignored.
    pub fn parse(text: &str) -> Option<ExitReport> {
        let mut r = ExitReport::default();
        let mut seen = 0;
        for line in text.lines() {
            let Some((k, v)) = line.split_once(" = ").or_else(|| line.split_once(" =")) else {
                continue;
            };
            match k.trim() {
                "step_count" => r.step_count = v.trim().parse().ok()?,
                "forged_deliveries" => r.forged_deliveries = v.trim().parse().ok()?,
                "errors" => {
                    r.errors = v
                        .split("; ")
                        .map(str::trim)
                        .filter(|e| !e.is_empty())
                        .map(str::to_string)
                        .collect()
                }
                _ => continue,
            }
            seen += 1;
        }
        (seen == 3).then_some(r)
    }
}

/// Serves one session over a line transport until end of input or halt.
/// Received lines are traced with `>` and sent lines with `<`.
pub fn serve<R: BufRead, W: Write>(
    input: R,
    mut output: W,
    session: &mut Session,
    mut trace: Option<&mut dyn Write>,
) -> io::Result<ExitReport> {
    for line in input.lines() {
        let line = line?;
        if let Some(t) = trace.as_deref_mut() {
            writeln!(t, "> {line}")?;
        }
        let out = session.handle_line(&line);
        if let Some(reply) = &out.reply {
            output.write_all(reply.as_bytes())?;
            output.flush()?;
            if let Some(t) = trace.as_deref_mut() {
                write!(t, "< {reply}")?;
            }
        }
        if out.terminate {
            break;
        }
    }
    Ok(session.exit_report())
}
