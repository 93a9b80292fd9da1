//! The production cell controller: a dispatcher and 13 device processes
//! composed on the rendezvous engine.
//!
//! Process `Pi` owns actuator group `i`. The dispatcher reads the sensor
//! status on `GET_STATUS` and forwards abstract values on `G1`..`G13`
//! (there are no `G4`, `G5`, `G11`: magnets need no sensor). Devices
//! coordinate blank transfers on seven `*_READY`/transfer gate pairs.
//!
//! A device accepts its `Gi` value at any time; the value is *fresh* until
//! the device issues a command or takes part in a coordination gate. Every
//! command needs a fresh value, so a device issues at most one command per
//! reaction cycle and never acts in the cycle it was released from a
//! coordination gate.

use std::fmt::{self, Write as _};

use crate::cell_types::{
    abstract_status, approx_eq, to_arm1_extension, to_arm2_extension, to_crane_height,
    to_crane_position, to_press_position, to_robot_angle, to_table_elevation, to_table_rotation,
    AbstractStatus, ArmExtension, CraneHeight, CranePosition, PressPosition, RobotAngle,
    TableElevation, TableRotation,
};
use crate::geometry::GeometryConfig;
use crate::protocol::{Command, SensorStatus};
use crate::sync_core::{
    Binding, Composition, CompositionBuilder, CompositionError, GateId, Offer, SchedulerPolicy,
    Value, Visibility,
};

pub const DISPATCHER: &str = "DISPATCHER";
pub const GET_STATUS: &str = "GET_STATUS";

/// Processes that receive a dispatch gate `Gi`.
pub const DISPATCHED: [u8; 10] = [1, 2, 3, 6, 7, 8, 9, 10, 12, 13];

pub const COORDINATION_GATES: [&str; 14] = [
    "FT_READY",
    "FT",
    "TA1_READY",
    "TA1",
    "A1P_READY",
    "A1P",
    "PA2_READY",
    "PA2",
    "A2D_READY",
    "A2D",
    "DC_READY",
    "DC",
    "CF_READY",
    "CF",
];

/// Participants of each coordination gate, by process number.
pub fn coordination_participants(gate: &str) -> &'static [u8] {
    match gate {
        "FT_READY" | "FT" => &[12, 7, 8],
        "TA1_READY" | "TA1" => &[7, 8, 2, 4, 6],
        "A1P_READY" | "A1P" => &[1, 2, 4, 6],
        "PA2_READY" | "PA2" => &[1, 3, 5, 6],
        "A2D_READY" | "A2D" => &[3, 5, 6, 13],
        "DC_READY" | "CF_READY" => &[9, 10],
        "DC" => &[9, 10, 11, 13],
        "CF" => &[9, 10, 11, 12],
        _ => &[],
    }
}

/// Names of the 15 `GET_STATUS` slots.
pub const STATUS_SLOTS: [&str; 15] = [
    "s1", "s2", "s3", "s4", "s5", "s6", "s7", "s8", "s9", "s10", "s11", "s12", "s13", "s14",
    "errors",
];

/// The `GET_STATUS` slot values for a decoded status line.
pub fn status_values(s: &SensorStatus) -> Vec<Value> {
    vec![
        Value::Bool(s.s1),
        Value::Bool(s.s2),
        Value::Bool(s.s3),
        Value::Real(s.s4),
        Value::Real(s.s5),
        Value::Real(s.s6),
        Value::Bool(s.s7),
        Value::Bool(s.s8),
        Value::Bool(s.s9),
        Value::Bool(s.s10),
        Value::Real(s.s11),
        Value::Real(s.s12),
        Value::Bool(s.s13),
        Value::Bool(s.s14),
        Value::Str(s.errors.join(";")),
    ]
}

fn status_from_binding(b: &Binding) -> Option<SensorStatus> {
    let flag = |k: &str| b.get(k)?.as_bool();
    let real = |k: &str| b.get(k)?.as_real();
    let errors = b.get("errors")?.as_str()?;
    Some(SensorStatus {
        s1: flag("s1")?,
        s2: flag("s2")?,
        s3: flag("s3")?,
        s4: real("s4")?,
        s5: real("s5")?,
        s6: real("s6")?,
        s7: flag("s7")?,
        s8: flag("s8")?,
        s9: flag("s9")?,
        s10: flag("s10")?,
        s11: real("s11")?,
        s12: real("s12")?,
        s13: flag("s13")?,
        s14: flag("s14")?,
        errors: if errors.is_empty() {
            Vec::new()
        } else {
            errors.split(';').map(str::to_string).collect()
        },
    })
}

/// Value forwarded on `Gi`.
pub fn dispatch_value(i: u8, a: &AbstractStatus) -> Option<Value> {
    Some(match i {
        1 => Value::Token(a.press.token()),
        2 => Value::Token(a.arm1.token()),
        3 => Value::Token(a.arm2.token()),
        6 => Value::Token(a.robot.token()),
        7 => Value::Token(a.table_rotation.token()),
        8 => Value::Token(a.table_elevation.token()),
        9 => Value::Token(a.crane_position.token()),
        10 => Value::Token(a.crane_height.token()),
        12 => Value::Bool(a.feed_cell),
        13 => Value::Bool(a.deposit_cell),
        _ => return None,
    })
}

/// When a moving device has reached the point where it must stop: one
/// predicate per axis over that axis's abstract value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Limit {
    Press(PressPosition),
    Arm1(ArmExtension),
    Arm2(ArmExtension),
    Robot(RobotAngle),
    TableRotation(TableRotation),
    TableElevation(TableElevation),
    CranePosition(CranePosition),
    CraneHeight(CraneHeight),
}

impl Limit {
    pub fn target(self) -> Value {
        Value::Token(match self {
            Limit::Press(p) => p.token(),
            Limit::Arm1(a) | Limit::Arm2(a) => a.token(),
            Limit::Robot(r) => r.token(),
            Limit::TableRotation(t) => t.token(),
            Limit::TableElevation(t) => t.token(),
            Limit::CranePosition(c) => c.token(),
            Limit::CraneHeight(c) => c.token(),
        })
    }

    pub fn holds(self, observed: &Value) -> bool {
        *observed == self.target()
    }

    /// Abstract value of this axis at the configured initial position.
    fn initial_value(self, cfg: &GeometryConfig) -> Option<Value> {
        let at = |x: f64, v: f64| approx_eq(x, v);
        Some(Value::Token(match self {
            Limit::Press(_) => {
                let p = cfg.press.init;
                to_press_position(
                    at(p, cfg.press_bottom),
                    at(p, cfg.press_middle),
                    at(p, cfg.press_top),
                )
                .ok()?
                .token()
            }
            Limit::Arm1(_) => to_arm1_extension(cfg.arm1.init, cfg).token(),
            Limit::Arm2(_) => to_arm2_extension(cfg.arm2.init, cfg).token(),
            Limit::Robot(_) => to_robot_angle(cfg.robot.init, cfg).token(),
            Limit::TableElevation(_) => to_table_elevation(cfg.table_elev.init, cfg).token(),
            Limit::CraneHeight(_) => to_crane_height(cfg.crane_y.init, cfg).token(),
            Limit::TableRotation(_) => {
                let r = cfg.table_rot.init;
                to_table_rotation(at(r, cfg.table_rot_load), at(r, cfg.table_rot_transfer))
                    .ok()?
                    .token()
            }
            Limit::CranePosition(_) => {
                let x = cfg.crane_x.init;
                to_crane_position(at(x, cfg.crane_x_deposit), at(x, cfg.crane_x_feed))
                    .ok()?
                    .token()
            }
        }))
    }
}

/// What a device waits for before its next command or coordination.
#[derive(Debug, Clone, PartialEq)]
pub enum Guard {
    Limit(Limit),
    Sensor(bool),
}

impl Guard {
    fn holds(&self, observed: Option<&Value>) -> bool {
        match (self, observed) {
            (Guard::Limit(l), Some(v)) => l.holds(v),
            (Guard::Sensor(b), Some(v)) => v.as_bool() == Some(*b),
            (_, None) => false,
        }
    }
}

/// One phase of a device choreography.
#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    /// Coordination gate.
    Sync(&'static str),
    /// Coordination gate taken once the fresh value satisfies the guard.
    SyncWhen(&'static str, Guard),
    /// Actuator command.
    Cmd(Command),
    /// Actuator command issued once the fresh value satisfies the guard.
    CmdWhen(Command, Guard),
    /// Advances as soon as a dispatched value satisfies the guard.
    Observe(Guard),
}

/// A device behavior: an initial prefix followed by a cycle repeated forever.
#[derive(Debug, Clone, PartialEq)]
pub struct Choreography {
    pub init: Vec<Step>,
    pub cycle: Vec<Step>,
}

impl Choreography {
    pub fn len(&self) -> usize {
        self.init.len() + self.cycle.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn step(&self, i: usize) -> &Step {
        if i < self.init.len() {
            &self.init[i]
        } else {
            &self.cycle[i - self.init.len()]
        }
    }

    /// Successor phase: the last step of the cycle wraps to its first.
    pub fn succ(&self, i: usize) -> usize {
        if i + 1 == self.len() {
            self.init.len()
        } else {
            i + 1
        }
    }
}

fn moving(start: Command, stop: Command, limit: Limit) -> [Step; 2] {
    [Step::Cmd(start), Step::CmdWhen(stop, Guard::Limit(limit))]
}

/// The canonical choreography of device `Pi`.
pub fn choreography(i: u8) -> Choreography {
    use Command as C;
    use Step::*;
    let cat = |parts: &[&[Step]]| parts.concat();
    let (init, cycle): (Vec<Step>, Vec<Step>) = match i {
        1 => (
            vec![],
            cat(&[
                &moving(
                    C::PressUpward,
                    C::PressStop,
                    Limit::Press(PressPosition::Middle),
                ),
                &[Sync("A1P_READY"), Sync("A1P")],
                &moving(
                    C::PressUpward,
                    C::PressStop,
                    Limit::Press(PressPosition::Top),
                ),
                &moving(
                    C::PressDownward,
                    C::PressStop,
                    Limit::Press(PressPosition::Bottom),
                ),
                &[Sync("PA2_READY"), Sync("PA2")],
            ]),
        ),
        2 => {
            let arm = |a| Limit::Arm1(a);
            (
                moving(C::Arm1Forward, C::Arm1Stop, arm(ArmExtension::Retracted)).to_vec(),
                cat(&[
                    &[Sync("TA1_READY")],
                    &moving(
                        C::Arm1Forward,
                        C::Arm1Stop,
                        arm(ArmExtension::AtTableOrDeposit),
                    ),
                    &[Sync("TA1")],
                    &moving(C::Arm1Backward, C::Arm1Stop, arm(ArmExtension::Retracted)),
                    &[Sync("A1P_READY")],
                    &moving(C::Arm1Forward, C::Arm1Stop, arm(ArmExtension::AtPress)),
                    &[Sync("A1P")],
                    &moving(C::Arm1Backward, C::Arm1Stop, arm(ArmExtension::Retracted)),
                ]),
            )
        }
        3 => {
            let arm = |a| Limit::Arm2(a);
            (
                moving(C::Arm2Forward, C::Arm2Stop, arm(ArmExtension::Retracted)).to_vec(),
                cat(&[
                    &[Sync("PA2_READY")],
                    &moving(C::Arm2Forward, C::Arm2Stop, arm(ArmExtension::AtPress)),
                    &[Sync("PA2")],
                    &moving(C::Arm2Backward, C::Arm2Stop, arm(ArmExtension::Retracted)),
                    &[Sync("A2D_READY")],
                    &moving(
                        C::Arm2Forward,
                        C::Arm2Stop,
                        arm(ArmExtension::AtTableOrDeposit),
                    ),
                    &[Sync("A2D")],
                    &moving(C::Arm2Backward, C::Arm2Stop, arm(ArmExtension::Retracted)),
                ]),
            )
        }
        4 => (
            vec![],
            vec![
                Sync("TA1_READY"),
                Sync("TA1"),
                Cmd(C::Arm1MagOn),
                Sync("A1P_READY"),
                Sync("A1P"),
                Cmd(C::Arm1MagOff),
            ],
        ),
        5 => (
            vec![],
            vec![
                Sync("PA2_READY"),
                Sync("PA2"),
                Cmd(C::Arm2MagOn),
                Sync("A2D_READY"),
                Sync("A2D"),
                Cmd(C::Arm2MagOff),
            ],
        ),
        6 => {
            let at = |r| Limit::Robot(r);
            (
                vec![],
                cat(&[
                    &moving(C::RobotRight, C::RobotStop, at(RobotAngle::AtTable)),
                    &[Sync("TA1_READY"), Sync("TA1")],
                    &moving(C::RobotLeft, C::RobotStop, at(RobotAngle::AtPress)),
                    &[
                        Sync("A1P_READY"),
                        Sync("A1P"),
                        Sync("PA2_READY"),
                        Sync("PA2"),
                    ],
                    &moving(C::RobotLeft, C::RobotStop, at(RobotAngle::AtDeposit)),
                    &[Sync("A2D_READY"), Sync("A2D")],
                ]),
            )
        }
        7 => {
            let at = |t| Limit::TableRotation(t);
            (
                vec![],
                cat(&[
                    &[Sync("FT_READY"), Sync("FT")],
                    &moving(C::TableLeft, C::TableStopH, at(TableRotation::AtTransfer)),
                    &[Sync("TA1_READY"), Sync("TA1")],
                    &moving(C::TableRight, C::TableStopH, at(TableRotation::AtLoad)),
                ]),
            )
        }
        8 => {
            let at = |t| Limit::TableElevation(t);
            (
                vec![],
                cat(&[
                    &[Sync("FT_READY"), Sync("FT")],
                    &moving(C::TableUpward, C::TableStopV, at(TableElevation::Top)),
                    &[Sync("TA1_READY"), Sync("TA1")],
                    &moving(C::TableDownward, C::TableStopV, at(TableElevation::Bottom)),
                ]),
            )
        }
        9 => {
            let at = |c| Limit::CranePosition(c);
            (
                vec![],
                cat(&[
                    &moving(
                        C::CraneToBelt2,
                        C::CraneStopH,
                        at(CranePosition::OverDeposit),
                    ),
                    &[Sync("DC_READY"), Sync("DC")],
                    &moving(C::CraneToBelt1, C::CraneStopH, at(CranePosition::OverFeed)),
                    &[Sync("CF_READY"), Sync("CF")],
                ]),
            )
        }
        10 => {
            let at = |c| Limit::CraneHeight(c);
            (
                vec![],
                cat(&[
                    &moving(C::CraneLower, C::CraneStopV, at(CraneHeight::Below)),
                    &[Sync("DC_READY"), Sync("DC")],
                    &moving(C::CraneLift, C::CraneStopV, at(CraneHeight::AtDrop)),
                    &[Sync("CF_READY"), Sync("CF")],
                ]),
            )
        }
        11 => (
            vec![],
            vec![
                Sync("DC"),
                Cmd(C::CraneMagOn),
                Sync("CF"),
                Cmd(C::CraneMagOff),
            ],
        ),
        12 => (
            vec![Cmd(C::Belt1Start)],
            vec![
                CmdWhen(C::Belt1Stop, Guard::Sensor(true)),
                Sync("FT_READY"),
                Cmd(C::Belt1Start),
                SyncWhen("FT", Guard::Sensor(false)),
            ],
        ),
        13 => (
            vec![Cmd(C::Belt2Start)],
            vec![
                Sync("A2D_READY"),
                Sync("A2D"),
                Observe(Guard::Sensor(true)),
                CmdWhen(C::Belt2Stop, Guard::Sensor(false)),
                Sync("DC"),
                Cmd(C::Belt2Start),
            ],
        ),
        _ => panic!("no device process P{i}"),
    };
    Choreography { init, cycle }
}

/// Blanks introduced by the feed belt process at start-up.
pub const BLANKS: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DispatchMode {
    /// `G1`..`G13` in increasing order.
    #[default]
    Sequential,
    /// All dispatch gates offered at once.
    Concurrent,
}

impl std::str::FromStr for DispatchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "seq" | "sequential" => Ok(DispatchMode::Sequential),
            "conc" | "concurrent" => Ok(DispatchMode::Concurrent),
            _ => Err(format!(
                "unknown dispatcher mode {s:?} (expected seq or conc)"
            )),
        }
    }
}

impl fmt::Display for DispatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DispatchMode::Sequential => "seq",
            DispatchMode::Concurrent => "conc",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DispatcherState {
    Await,
    /// `pending` has bit `k` set while `DISPATCHED[k]` is still to be sent.
    Dispatch {
        status: AbstractStatus,
        pending: u16,
    },
    Fault(String),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DeviceState {
    pub step: usize,
    /// Last value received on the dispatch gate.
    pub value: Option<Value>,
    pub fresh: bool,
    /// Feed belt only: photocell reading of the previous cycle.
    pub prev_cell: bool,
    /// Feed belt only: the belt entry may receive a blank.
    pub entry_clear: bool,
    /// Feed belt only: blanks introduced so far.
    pub added: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellState {
    Dispatcher(DispatcherState),
    Device(DeviceState),
}

const ALL_PENDING: u16 = (1 << DISPATCHED.len()) - 1;

struct DispatcherBehavior {
    mode: DispatchMode,
    status_gate: GateId,
    /// Gate of `DISPATCHED[k]`.
    gates: Vec<GateId>,
    cfg: std::sync::Arc<GeometryConfig>,
}

impl crate::sync_core::Behavior<CellState> for DispatcherBehavior {
    fn offers(&self, state: &CellState) -> Vec<Offer<CellState>> {
        let CellState::Dispatcher(d) = state else {
            return Vec::new();
        };
        match d {
            DispatcherState::Await => {
                let cfg = self.cfg.clone();
                let mut o = Offer::with(self.status_gate, move |b| {
                    let next = match status_from_binding(b) {
                        None => DispatcherState::Fault("malformed status binding".into()),
                        Some(s) => match abstract_status(&s, &cfg) {
                            Ok(status) => DispatcherState::Dispatch {
                                status,
                                pending: ALL_PENDING,
                            },
                            Err(e) => DispatcherState::Fault(e.to_string()),
                        },
                    };
                    CellState::Dispatcher(next)
                });
                for var in STATUS_SLOTS {
                    o = o.accept(var);
                }
                vec![o]
            }
            DispatcherState::Dispatch { status, pending } => {
                let ks = (0..DISPATCHED.len()).filter(|k| pending & (1 << k) != 0);
                let ks: Vec<usize> = match self.mode {
                    DispatchMode::Sequential => ks.take(1).collect(),
                    DispatchMode::Concurrent => ks.collect(),
                };
                ks.into_iter()
                    .map(|k| {
                        let rest = pending & !(1 << k);
                        let next = if rest == 0 {
                            DispatcherState::Await
                        } else {
                            DispatcherState::Dispatch {
                                status: *status,
                                pending: rest,
                            }
                        };
                        let v = dispatch_value(DISPATCHED[k], status).expect("dispatched process");
                        Offer::to(self.gates[k], CellState::Dispatcher(next)).emit(v)
                    })
                    .collect()
            }
            DispatcherState::Fault(_) => Vec::new(),
        }
    }
}

struct FeedGates {
    cf: GateId,
    blank_add: GateId,
}

struct DeviceBehavior {
    choreo: Choreography,
    /// Gate used by each step, if any.
    step_gates: Vec<Option<GateId>>,
    dispatch: Option<GateId>,
    feed: Option<FeedGates>,
}

impl DeviceBehavior {
    fn advance(&self, d: &DeviceState) -> CellState {
        CellState::Device(DeviceState {
            step: self.choreo.succ(d.step),
            fresh: false,
            ..d.clone()
        })
    }
}

impl crate::sync_core::Behavior<CellState> for DeviceBehavior {
    fn offers(&self, state: &CellState) -> Vec<Offer<CellState>> {
        let CellState::Device(d) = state else {
            return Vec::new();
        };
        let mut out = Vec::new();
        let step = self.choreo.step(d.step);

        if let Some(g) = self.dispatch {
            let observe = match step {
                Step::Observe(guard) => Some((guard.clone(), self.choreo.succ(d.step))),
                _ => None,
            };
            let feed = self.feed.is_some();
            let d0 = d.clone();
            out.push(
                Offer::with(g, move |b| {
                    let v = b.get("v").cloned();
                    let mut n = d0.clone();
                    if feed {
                        let cell = v.as_ref().and_then(Value::as_bool) == Some(true);
                        if cell && !n.prev_cell {
                            n.entry_clear = true;
                        }
                        n.prev_cell = cell;
                    }
                    if let Some((guard, next)) = &observe {
                        if guard.holds(v.as_ref()) {
                            n.step = *next;
                        }
                    }
                    n.value = v;
                    n.fresh = true;
                    CellState::Device(n)
                })
                .accept("v"),
            );
        }

        let ready = match step {
            Step::Sync(_) => true,
            Step::Cmd(_) => self.dispatch.is_none() || d.fresh,
            Step::SyncWhen(_, guard) | Step::CmdWhen(_, guard) => {
                d.fresh && guard.holds(d.value.as_ref())
            }
            Step::Observe(_) => false,
        };
        if ready {
            let gate = self.step_gates[d.step].expect("step gate");
            out.push(Offer::to(gate, self.advance(d)));
        }

        if let Some(f) = &self.feed {
            if d.entry_clear && d.added == BLANKS {
                let n = DeviceState {
                    entry_clear: false,
                    ..d.clone()
                };
                out.push(Offer::to(f.cf, CellState::Device(n)));
            }
            // a blank goes on the belt only while the main loop is waiting
            // on the photocell, so it never competes for the cycle's command
            let waiting = matches!(step, Step::CmdWhen(_, g) | Step::SyncWhen(_, g)
                if !g.holds(d.value.as_ref()));
            if d.fresh && d.entry_clear && d.added < BLANKS && waiting {
                let n = DeviceState {
                    entry_clear: false,
                    added: d.added + 1,
                    fresh: false,
                    ..d.clone()
                };
                out.push(Offer::to(f.blank_add, CellState::Device(n)));
            }
        }
        out
    }
}

/// Initial phase of a device: leading moves whose target already holds at
/// the configured initial position are skipped.
fn initial_step(c: &Choreography, cfg: &GeometryConfig) -> usize {
    let mut i = 0;
    for _ in 0..c.len() {
        let j = c.succ(i);
        match (c.step(i), c.step(j)) {
            (Step::Cmd(_), Step::CmdWhen(_, Guard::Limit(l)))
                if l.initial_value(cfg) == Some(l.target()) =>
            {
                i = c.succ(j)
            }
            _ => break,
        }
    }
    i
}

/// The composed controller together with its initial state vector.
pub struct Controller {
    composition: Composition<CellState>,
    initial: Vec<CellState>,
    mode: DispatchMode,
    status_gate: GateId,
    dispatch_gates: Vec<GateId>,
}

/// Builds the dispatcher and the 13 device processes.
///
/// ```
/// use prodcell::controller::{build_controller, DispatchMode};
/// use prodcell::geometry::GeometryConfig;
/// use prodcell::sync_core::Visibility;
///
/// let ctrl = build_controller(DispatchMode::Sequential, &GeometryConfig::default()).unwrap();
/// let comp = ctrl.composition();
/// let parts = |g: &str| comp.participation(comp.gate_id(g).unwrap()).len();
/// assert_eq!(parts("TA1_READY"), 5);
/// assert_eq!(parts("PA2"), 4);
/// assert_eq!(parts("FT"), 3);
/// assert_eq!(parts("DC_READY"), 2);
///
/// let count = |v: Visibility, arity: usize| {
///     comp.gates().iter().filter(|g| g.visibility == v && g.arity == arity).count()
/// };
/// assert_eq!(count(Visibility::Internal, 0), 14);
/// assert_eq!(count(Visibility::External, 0), 35);
/// assert!(["G4", "G5", "G11"].iter().all(|g| comp.gate_id(g).is_none()));
/// ```
pub fn build_controller(
    mode: DispatchMode,
    cfg: &GeometryConfig,
) -> Result<Controller, CompositionError> {
    let mut b = CompositionBuilder::new();

    let mut actuator = Vec::new();
    for c in Command::actuators() {
        actuator.push((c, b.gate(c.gate_name(), Visibility::External, 0)?));
    }
    let status_gate = b.gate(GET_STATUS, Visibility::Status, STATUS_SLOTS.len())?;
    let mut dispatch_gates = Vec::new();
    for i in DISPATCHED {
        dispatch_gates.push(b.gate(&format!("G{i}"), Visibility::Internal, 1)?);
    }
    let mut coordination = Vec::new();
    for name in COORDINATION_GATES {
        coordination.push((name, b.gate(name, Visibility::Internal, 0)?));
    }
    let gate_of_cmd = |c: Command| actuator.iter().find(|(a, _)| *a == c).map(|(_, g)| *g);
    let gate_of_sync = |n: &str| coordination.iter().find(|(a, _)| *a == n).map(|(_, g)| *g);

    let cfg = std::sync::Arc::new(cfg.clone());
    let dispatcher = b.process(
        DISPATCHER,
        DispatcherBehavior {
            mode,
            status_gate,
            gates: dispatch_gates.clone(),
            cfg: cfg.clone(),
        },
    )?;
    let mut initial = vec![CellState::Dispatcher(DispatcherState::Await)];
    let mut devices = Vec::new();
    for i in 1..=13u8 {
        let choreo = choreography(i);
        let step_gates = (0..choreo.len())
            .map(|k| match choreo.step(k) {
                Step::Sync(n) | Step::SyncWhen(n, _) => gate_of_sync(n),
                Step::Cmd(c) | Step::CmdWhen(c, _) => gate_of_cmd(*c),
                Step::Observe(_) => None,
            })
            .collect();
        let dispatch = DISPATCHED
            .iter()
            .position(|&d| d == i)
            .map(|k| dispatch_gates[k]);
        let feed = (i == 12).then(|| FeedGates {
            cf: gate_of_sync("CF").expect("CF gate"),
            blank_add: gate_of_cmd(Command::BlankAdd).expect("BLANK_ADD gate"),
        });
        initial.push(CellState::Device(DeviceState {
            step: initial_step(&choreo, &cfg),
            entry_clear: i == 12,
            ..Default::default()
        }));
        devices.push(b.process(
            &format!("P{i}"),
            DeviceBehavior {
                choreo,
                step_gates,
                dispatch,
                feed,
            },
        )?);
    }
    let p = |i: u8| devices[usize::from(i) - 1];

    for (c, g) in &actuator {
        b.participate(*g, &[p(c.group().expect("actuator group"))])?;
    }
    b.participate(status_gate, &[dispatcher])?;
    for (k, g) in dispatch_gates.iter().enumerate() {
        b.participate(*g, &[dispatcher, p(DISPATCHED[k])])?;
    }
    for (name, g) in &coordination {
        let parts: Vec<usize> = coordination_participants(name)
            .iter()
            .map(|&i| p(i))
            .collect();
        b.participate(*g, &parts)?;
    }

    Ok(Controller {
        composition: b.build()?,
        initial,
        mode,
        status_gate,
        dispatch_gates,
    })
}

impl Controller {
    pub fn composition(&self) -> &Composition<CellState> {
        &self.composition
    }

    pub fn initial_states(&self) -> Vec<CellState> {
        self.initial.clone()
    }

    pub fn mode(&self) -> DispatchMode {
        self.mode
    }

    pub fn status_gate(&self) -> GateId {
        self.status_gate
    }

    pub fn is_dispatch_gate(&self, g: GateId) -> bool {
        self.dispatch_gates.contains(&g)
    }

    /// Scheduling classes: dispatch gates first, so every device holds the
    /// cycle's value before anything else fires; then coordination and
    /// actuator gates; `GET_STATUS` last.
    pub fn scheduler_policy(&self, seed: u64) -> SchedulerPolicy {
        let priority = self
            .composition
            .gates()
            .iter()
            .enumerate()
            .map(|(i, g)| match g.visibility {
                Visibility::Status => 0,
                _ if self.is_dispatch_gate(GateId(i)) => 2,
                _ => 1,
            })
            .collect();
        SchedulerPolicy { priority, seed }
    }

    /// The dispatcher's fault message, once it has rejected a status.
    pub fn fault<'a>(&self, states: &'a [CellState]) -> Option<&'a str> {
        match &states[0] {
            CellState::Dispatcher(DispatcherState::Fault(m)) => Some(m),
            _ => None,
        }
    }

    /// One line per gate: name, visibility, arity and participants.
    pub fn dump_matrix(&self) -> String {
        let c = &self.composition;
        let mut out = String::new();
        for (i, g) in c.gates().iter().enumerate() {
            let parts: Vec<&str> = c
                .participation(GateId(i))
                .iter()
                .map(|&p| c.process_name(p))
                .collect();
            let vis = match g.visibility {
                Visibility::External => "external",
                Visibility::Internal => "internal",
                Visibility::Status => "status",
            };
            let _ = writeln!(out, "{} {} {} {}", g.name, vis, g.arity, parts.join(","));
        }
        out
    }
}
