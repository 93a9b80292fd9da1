//! Line codec for the controller/simulator protocol.
//!
//! Every message is one line terminated by `\n`. The controller sends
//! actuator commands, `react` and `get_status`; the simulator answers
//! `get_status` with a status line:
//!
//! ```text
//! status b b b r r r b b b b r r b b "e1;e2"
//! ```
//!
//! Booleans are `true`/`false`, reals carry exactly three fraction digits and
//! the error list is double-quoted and semicolon-separated (`""` when empty).

use std::fmt;

use thiserror::Error;

macro_rules! commands {
    ($($variant:ident => $token:literal, $gate:literal, $group:expr;)+) => {
        /// A protocol command: the 35 actuator commands plus `react` and
        /// `get_status`.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Command {
            $($variant),+
        }

        impl Command {
            pub const ALL: &'static [Command] = &[$(Command::$variant),+];

            pub fn token(self) -> &'static str {
                match self {
                    $(Command::$variant => $token),+
                }
            }

            /// Name of the controller gate carrying this command.
            pub fn gate_name(self) -> &'static str {
                match self {
                    $(Command::$variant => $gate),+
                }
            }

            /// Actuator group 1..=13; `None` for `react` and `get_status`.
            pub fn group(self) -> Option<u8> {
                match self {
                    $(Command::$variant => $group),+
                }
            }

            pub fn from_token(t: &str) -> Option<Command> {
                match t {
                    $($token => Some(Command::$variant),)+
                    _ => None,
                }
            }

            pub fn from_gate_name(g: &str) -> Option<Command> {
                match g {
                    $($gate => Some(Command::$variant),)+
                    _ => None,
                }
            }
        }
    };
}

commands! {
    PressUpward => "press_upward", "PRESS_UPWARD", Some(1);
    PressStop => "press_stop", "PRESS_STOP", Some(1);
    PressDownward => "press_downward", "PRESS_DOWNWARD", Some(1);
    Arm1Forward => "arm1_forward", "ARM1_FORWARD", Some(2);
    Arm1Stop => "arm1_stop", "ARM1_STOP", Some(2);
    Arm1Backward => "arm1_backward", "ARM1_BACKWARD", Some(2);
    Arm2Forward => "arm2_forward", "ARM2_FORWARD", Some(3);
    Arm2Stop => "arm2_stop", "ARM2_STOP", Some(3);
    Arm2Backward => "arm2_backward", "ARM2_BACKWARD", Some(3);
    Arm1MagOn => "arm1_mag_on", "ARM1_MAG_ON", Some(4);
    Arm1MagOff => "arm1_mag_off", "ARM1_MAG_OFF", Some(4);
    Arm2MagOn => "arm2_mag_on", "ARM2_MAG_ON", Some(5);
    Arm2MagOff => "arm2_mag_off", "ARM2_MAG_OFF", Some(5);
    RobotLeft => "robot_left", "ROBOT_LEFT", Some(6);
    RobotStop => "robot_stop", "ROBOT_STOP", Some(6);
    RobotRight => "robot_right", "ROBOT_RIGHT", Some(6);
    TableLeft => "table_left", "TABLE_LEFT", Some(7);
    TableStopH => "table_stop_h", "TABLE_STOP_H", Some(7);
    TableRight => "table_right", "TABLE_RIGHT", Some(7);
    TableUpward => "table_upward", "TABLE_UPWARD", Some(8);
    TableStopV => "table_stop_v", "TABLE_STOP_V", Some(8);
    TableDownward => "table_downward", "TABLE_DOWNWARD", Some(8);
    CraneToBelt2 => "crane_to_belt2", "CRANE_TO_BELT2", Some(9);
    CraneStopH => "crane_stop_h", "CRANE_STOP_H", Some(9);
    CraneToBelt1 => "crane_to_belt1", "CRANE_TO_BELT1", Some(9);
    CraneLift => "crane_lift", "CRANE_LIFT", Some(10);
    CraneStopV => "crane_stop_v", "CRANE_STOP_V", Some(10);
    CraneLower => "crane_lower", "CRANE_LOWER", Some(10);
    CraneMagOn => "crane_mag_on", "CRANE_MAG_ON", Some(11);
    CraneMagOff => "crane_mag_off", "CRANE_MAG_OFF", Some(11);
    Belt1Start => "belt1_start", "BELT1_START", Some(12);
    Belt1Stop => "belt1_stop", "BELT1_STOP", Some(12);
    BlankAdd => "blank_add", "BLANK_ADD", Some(12);
    Belt2Start => "belt2_start", "BELT2_START", Some(13);
    Belt2Stop => "belt2_stop", "BELT2_STOP", Some(13);
    React => "react", "REACT", None;
    GetStatus => "get_status", "GET_STATUS", None;
}

pub const GROUP_COUNT: u8 = 13;

impl Command {
    pub fn is_actuator(self) -> bool {
        self.group().is_some()
    }

    pub fn actuators() -> impl Iterator<Item = Command> {
        Command::ALL.iter().copied().filter(|c| c.is_actuator())
    }

    /// The actuator commands of group `g`, in table order.
    pub fn group_members(g: u8) -> Vec<Command> {
        Command::actuators()
            .filter(|c| c.group() == Some(g))
            .collect()
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("unknown token '{0}'")]
    UnknownToken(String),
    #[error("status line must start with `status `")]
    MissingTag,
    #[error("expected 14 sensor fields, found {0}")]
    FieldCount(usize),
    #[error("field s{index}: {text:?} is not a boolean")]
    BadBool { index: usize, text: String },
    #[error("field s{index}: {text:?} is not a real")]
    BadReal { index: usize, text: String },
    #[error("status line has no error list")]
    MissingErrorList,
    #[error("unterminated quote in error list")]
    UnterminatedQuote,
    #[error("stray quote inside error list")]
    StrayQuote,
}

/// Encodes a command as its wire line.
pub fn encode_command(c: Command) -> String {
    format!("{}\n", c.token())
}

/// Decodes a command line; the trailing newline is optional and tokens are
/// case-sensitive.
pub fn decode_command(line: &str) -> Result<Command, ProtocolError> {
    let token = strip_newline(line);
    Command::from_token(token).ok_or_else(|| ProtocolError::UnknownToken(token.to_string()))
}

fn strip_newline(line: &str) -> &str {
    line.strip_suffix('\n').unwrap_or(line)
}

/// The 14 sensor readings and the simulator's pending error messages.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SensorStatus {
    /// Press at bottom.
    pub s1: bool,
    /// Press at middle.
    pub s2: bool,
    /// Press at top.
    pub s3: bool,
    /// Extension of arm 1.
    pub s4: f64,
    /// Extension of arm 2.
    pub s5: f64,
    /// Robot rotation.
    pub s6: f64,
    /// Table rotated to the load position.
    pub s7: bool,
    /// Table rotated to the transfer position.
    pub s8: bool,
    /// Crane over the deposit belt.
    pub s9: bool,
    /// Crane over the feed belt.
    pub s10: bool,
    /// Crane gripper height.
    pub s11: f64,
    /// Table elevation.
    pub s12: f64,
    /// Feed belt end photocell.
    pub s13: bool,
    /// Deposit belt end photocell.
    pub s14: bool,
    pub errors: Vec<String>,
}

const BOOL_FIELDS: [usize; 9] = [1, 2, 3, 7, 8, 9, 10, 13, 14];

impl SensorStatus {
    pub fn booleans(&self) -> [bool; 9] {
        [
            self.s1, self.s2, self.s3, self.s7, self.s8, self.s9, self.s10, self.s13, self.s14,
        ]
    }

    pub fn reals(&self) -> [f64; 5] {
        [self.s4, self.s5, self.s6, self.s11, self.s12]
    }
}

/// Encodes a status line. Semicolons and double quotes inside error
/// messages cannot be represented and are replaced by `,` and `'`.
pub fn encode_status(s: &SensorStatus) -> String {
    let b = |v: bool| if v { "true" } else { "false" };
    let errors: Vec<String> = s
        .errors
        .iter()
        .map(|e| e.replace(';', ",").replace('"', "'").replace('\n', " "))
        .collect();
    format!(
        "status {} {} {} {:.3} {:.3} {:.3} {} {} {} {} {:.3} {:.3} {} {} \"{}\"\n",
        b(s.s1),
        b(s.s2),
        b(s.s3),
        s.s4,
        s.s5,
        s.s6,
        b(s.s7),
        b(s.s8),
        b(s.s9),
        b(s.s10),
        s.s11,
        s.s12,
        b(s.s13),
        b(s.s14),
        errors.join(";")
    )
}

pub fn decode_status(line: &str) -> Result<SensorStatus, ProtocolError> {
    let line = strip_newline(line);
    let rest = line
        .strip_prefix("status ")
        .ok_or(ProtocolError::MissingTag)?;
    let (head, quoted) = match rest.find('"') {
        Some(q) => (&rest[..q], &rest[q..]),
        None => (rest, ""),
    };
    let fields: Vec<&str> = head.split_whitespace().collect();
    if fields.len() != 14 {
        return Err(ProtocolError::FieldCount(fields.len()));
    }
    if quoted.is_empty() {
        return Err(ProtocolError::MissingErrorList);
    }
    if quoted.len() < 2 || !quoted.ends_with('"') {
        return Err(ProtocolError::UnterminatedQuote);
    }
    let inner = &quoted[1..quoted.len() - 1];
    if inner.contains('"') {
        return Err(ProtocolError::StrayQuote);
    }

    let boolean = |index: usize| -> Result<bool, ProtocolError> {
        match fields[index - 1] {
            "true" => Ok(true),
            "false" => Ok(false),
            text => Err(ProtocolError::BadBool {
                index,
                text: text.to_string(),
            }),
        }
    };
    let real = |index: usize| -> Result<f64, ProtocolError> {
        let text = fields[index - 1];
        text.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| ProtocolError::BadReal {
                index,
                text: text.to_string(),
            })
    };
    debug_assert!(BOOL_FIELDS.iter().all(|i| *i >= 1 && *i <= 14));

    Ok(SensorStatus {
        s1: boolean(1)?,
        s2: boolean(2)?,
        s3: boolean(3)?,
        s4: real(4)?,
        s5: real(5)?,
        s6: real(6)?,
        s7: boolean(7)?,
        s8: boolean(8)?,
        s9: boolean(9)?,
        s10: boolean(10)?,
        s11: real(11)?,
        s12: real(12)?,
        s13: boolean(13)?,
        s14: boolean(14)?,
        errors: if inner.is_empty() {
            Vec::new()
        } else {
            inner.split(';').map(str::to_string).collect()
        },
    })
}
