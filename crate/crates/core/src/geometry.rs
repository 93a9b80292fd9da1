//! Geometry of the cell: axis ranges, speeds and stop constants.
//!
//! Stored as a flat text file, one `key = number` per line, `#` comments.
//! Every key is optional when parsing; missing keys keep the shipped default.

use std::path::Path;

use thiserror::Error;

use crate::cell_types::APPROX_PRECISION;

pub const DEFAULT_GEOMETRY: &str = include_str!("../config/default_geometry.conf");

pub const FORMAT_VERSION: f64 = 1.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = number`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key {key}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: {key} is not a number")]
    NotANumber { line: usize, key: String },
    #[error("unsupported geometry version {0}")]
    Version(f64),
    #[error("invalid geometry: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Range, speed and start position of one movable axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub speed: f64,
    pub init: f64,
}

/// An axis name, its limits and its named stop positions.
pub type AxisStops = (&'static str, Axis, Vec<(&'static str, f64)>);

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryConfig {
    pub version: f64,
    pub press: Axis,
    pub press_bottom: f64,
    pub press_middle: f64,
    pub press_top: f64,
    pub arm1: Axis,
    pub arm1_retracted: f64,
    pub arm1_table: f64,
    pub arm1_press: f64,
    pub arm2: Axis,
    pub arm2_retracted: f64,
    pub arm2_deposit: f64,
    pub arm2_press: f64,
    pub robot: Axis,
    pub robot_table: f64,
    pub robot_press: f64,
    pub robot_deposit: f64,
    pub table_elev: Axis,
    pub table_elev_bottom: f64,
    pub table_elev_top: f64,
    pub table_rot: Axis,
    pub table_rot_load: f64,
    pub table_rot_transfer: f64,
    pub crane_x: Axis,
    pub crane_x_deposit: f64,
    pub crane_x_feed: f64,
    pub crane_y: Axis,
    pub crane_y_drop: f64,
    pub feed_belt_length: f64,
    pub feed_belt_speed: f64,
    /// The feed photocell sees a blank from here to the belt end.
    pub feed_photocell: f64,
    pub deposit_belt_length: f64,
    pub deposit_belt_speed: f64,
    pub deposit_photocell_start: f64,
    pub deposit_photocell_end: f64,
    pub blank_spacing: f64,
    /// An arm closer than this to its press stop is inside the press.
    pub press_clearance: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        let mut cfg = GeometryConfig::zeroed();
        cfg.apply(DEFAULT_GEOMETRY)
            .and_then(|_| cfg.validate())
            .expect("shipped geometry is valid");
        cfg
    }
}

const ZERO_AXIS: Axis = Axis {
    min: 0.0,
    max: 0.0,
    speed: 0.0,
    init: 0.0,
};

impl GeometryConfig {
    fn zeroed() -> Self {
        GeometryConfig {
            version: 0.0,
            press: ZERO_AXIS,
            press_bottom: 0.0,
            press_middle: 0.0,
            press_top: 0.0,
            arm1: ZERO_AXIS,
            arm1_retracted: 0.0,
            arm1_table: 0.0,
            arm1_press: 0.0,
            arm2: ZERO_AXIS,
            arm2_retracted: 0.0,
            arm2_deposit: 0.0,
            arm2_press: 0.0,
            robot: ZERO_AXIS,
            robot_table: 0.0,
            robot_press: 0.0,
            robot_deposit: 0.0,
            table_elev: ZERO_AXIS,
            table_elev_bottom: 0.0,
            table_elev_top: 0.0,
            table_rot: ZERO_AXIS,
            table_rot_load: 0.0,
            table_rot_transfer: 0.0,
            crane_x: ZERO_AXIS,
            crane_x_deposit: 0.0,
            crane_x_feed: 0.0,
            crane_y: ZERO_AXIS,
            crane_y_drop: 0.0,
            feed_belt_length: 0.0,
            feed_belt_speed: 0.0,
            feed_photocell: 0.0,
            deposit_belt_length: 0.0,
            deposit_belt_speed: 0.0,
            deposit_photocell_start: 0.0,
            deposit_photocell_end: 0.0,
            blank_spacing: 0.0,
            press_clearance: 0.0,
        }
    }

    fn fields_mut(&mut self) -> Vec<(&'static str, &mut f64)> {
        let mut out: Vec<(&'static str, &mut f64)> = vec![("version", &mut self.version)];
        let axes: [(&'static str, &mut Axis); 8] = [
            ("press", &mut self.press),
            ("arm1", &mut self.arm1),
            ("arm2", &mut self.arm2),
            ("robot", &mut self.robot),
            ("table_elev", &mut self.table_elev),
            ("table_rot", &mut self.table_rot),
            ("crane_x", &mut self.crane_x),
            ("crane_y", &mut self.crane_y),
        ];
        const AXIS_KEYS: [[&str; 4]; 8] = [
            ["press_min", "press_max", "press_speed", "press_init"],
            ["arm1_min", "arm1_max", "arm1_speed", "arm1_init"],
            ["arm2_min", "arm2_max", "arm2_speed", "arm2_init"],
            ["robot_min", "robot_max", "robot_speed", "robot_init"],
            [
                "table_elev_min",
                "table_elev_max",
                "table_elev_speed",
                "table_elev_init",
            ],
            [
                "table_rot_min",
                "table_rot_max",
                "table_rot_speed",
                "table_rot_init",
            ],
            [
                "crane_x_min",
                "crane_x_max",
                "crane_x_speed",
                "crane_x_init",
            ],
            [
                "crane_y_min",
                "crane_y_max",
                "crane_y_speed",
                "crane_y_init",
            ],
        ];
        for ((_, axis), keys) in axes.into_iter().zip(AXIS_KEYS) {
            let Axis {
                min,
                max,
                speed,
                init,
            } = axis;
            out.extend([
                (keys[0], min),
                (keys[1], max),
                (keys[2], speed),
                (keys[3], init),
            ]);
        }
        out.extend([
            ("press_bottom", &mut self.press_bottom),
            ("press_middle", &mut self.press_middle),
            ("press_top", &mut self.press_top),
            ("arm1_retracted", &mut self.arm1_retracted),
            ("arm1_table", &mut self.arm1_table),
            ("arm1_press", &mut self.arm1_press),
            ("arm2_retracted", &mut self.arm2_retracted),
            ("arm2_deposit", &mut self.arm2_deposit),
            ("arm2_press", &mut self.arm2_press),
            ("robot_table", &mut self.robot_table),
            ("robot_press", &mut self.robot_press),
            ("robot_deposit", &mut self.robot_deposit),
            ("table_elev_bottom", &mut self.table_elev_bottom),
            ("table_elev_top", &mut self.table_elev_top),
            ("table_rot_load", &mut self.table_rot_load),
            ("table_rot_transfer", &mut self.table_rot_transfer),
            ("crane_x_deposit", &mut self.crane_x_deposit),
            ("crane_x_feed", &mut self.crane_x_feed),
            ("crane_y_drop", &mut self.crane_y_drop),
            ("feed_belt_length", &mut self.feed_belt_length),
            ("feed_belt_speed", &mut self.feed_belt_speed),
            ("feed_photocell", &mut self.feed_photocell),
            ("deposit_belt_length", &mut self.deposit_belt_length),
            ("deposit_belt_speed", &mut self.deposit_belt_speed),
            ("deposit_photocell_start", &mut self.deposit_photocell_start),
            ("deposit_photocell_end", &mut self.deposit_photocell_end),
            ("blank_spacing", &mut self.blank_spacing),
            ("press_clearance", &mut self.press_clearance),
        ]);
        out
    }

    /// Parses a config text. Keys absent from `text` keep their default
    /// values.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = GeometryConfig::default();
        cfg.apply(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        GeometryConfig::parse(&std::fs::read_to_string(path)?)
    }

    fn apply(&mut self, text: &str) -> Result<(), ConfigError> {
        let mut fields = self.fields_mut();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or(ConfigError::Syntax { line })?;
            let key = key.trim();
            let slot = fields.iter_mut().find(|(k, _)| *k == key).ok_or_else(|| {
                ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                }
            })?;
            *slot.1 = value
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| ConfigError::NotANumber {
                    line,
                    key: key.to_string(),
                })?;
        }
        Ok(())
    }

    /// Renders the config in the file format; `parse(render(c)) == c`.
    pub fn render(&self) -> String {
        let mut copy = self.clone();
        let mut out = String::new();
        for (k, v) in copy.fields_mut() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    /// Stop constants per axis, named.
    pub fn stops(&self) -> Vec<AxisStops> {
        vec![
            (
                "press",
                self.press,
                vec![
                    ("bottom", self.press_bottom),
                    ("middle", self.press_middle),
                    ("top", self.press_top),
                ],
            ),
            (
                "arm1",
                self.arm1,
                vec![
                    ("retracted", self.arm1_retracted),
                    ("table", self.arm1_table),
                    ("press", self.arm1_press),
                ],
            ),
            (
                "arm2",
                self.arm2,
                vec![
                    ("retracted", self.arm2_retracted),
                    ("deposit", self.arm2_deposit),
                    ("press", self.arm2_press),
                ],
            ),
            (
                "robot",
                self.robot,
                vec![
                    ("table", self.robot_table),
                    ("press", self.robot_press),
                    ("deposit", self.robot_deposit),
                ],
            ),
            (
                "table_elev",
                self.table_elev,
                vec![
                    ("bottom", self.table_elev_bottom),
                    ("top", self.table_elev_top),
                ],
            ),
            (
                "table_rot",
                self.table_rot,
                vec![
                    ("load", self.table_rot_load),
                    ("transfer", self.table_rot_transfer),
                ],
            ),
            (
                "crane_x",
                self.crane_x,
                vec![
                    ("deposit", self.crane_x_deposit),
                    ("feed", self.crane_x_feed),
                ],
            ),
            ("crane_y", self.crane_y, vec![("drop", self.crane_y_drop)]),
        ]
    }

    /// The values of the five real sensors that the controller
    /// distinguishes, as (sensor, value) pairs.
    pub fn significant_values(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("s4", self.arm1_retracted),
            ("s4", self.arm1_table),
            ("s4", self.arm1_press),
            ("s5", self.arm2_retracted),
            ("s5", self.arm2_deposit),
            ("s5", self.arm2_press),
            ("s6", self.robot_table),
            ("s6", self.robot_press),
            ("s6", self.robot_deposit),
            ("s11", self.crane_y_drop),
            ("s12", self.table_elev_bottom),
            ("s12", self.table_elev_top),
        ]
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.version != FORMAT_VERSION {
            return Err(ConfigError::Version(self.version));
        }
        for (name, axis, stops) in self.stops() {
            if axis.min.partial_cmp(&axis.max) != Some(std::cmp::Ordering::Less) {
                return bad(format!("{name}: min must be below max"));
            }
            if axis.speed <= 2.0 * APPROX_PRECISION {
                // a slower axis could be sampled twice inside one stop window
                return bad(format!(
                    "{name}: speed must exceed {}",
                    2.0 * APPROX_PRECISION
                ));
            }
            if axis.init < axis.min || axis.init > axis.max {
                return bad(format!("{name}: init outside range"));
            }
            for (i, (a, x)) in stops.iter().enumerate() {
                if !(axis.min < *x && *x < axis.max) {
                    return bad(format!("{name}.{a} outside ({}, {})", axis.min, axis.max));
                }
                for (b, y) in &stops[i + 1..] {
                    if (x - y).abs() <= 2.0 * APPROX_PRECISION {
                        return bad(format!("{name}.{a} and {name}.{b} closer than 0.02"));
                    }
                }
            }
        }
        if self.feed_belt_speed <= 0.0 || self.deposit_belt_speed <= 0.0 {
            return bad("belt speeds must be positive".into());
        }
        if !(0.0 < self.feed_photocell && self.feed_photocell < self.feed_belt_length) {
            return bad("feed photocell must lie on the feed belt".into());
        }
        if !(0.0 < self.deposit_photocell_start
            && self.deposit_photocell_start < self.deposit_photocell_end
            && self.deposit_photocell_end + self.deposit_belt_speed < self.deposit_belt_length)
        {
            return bad("deposit photocell must lie on the deposit belt before its end".into());
        }
        if self.blank_spacing <= 0.0 || self.blank_spacing > self.feed_photocell {
            return bad("blank spacing must be positive and not beyond the feed photocell".into());
        }
        if self.feed_belt_length - self.feed_photocell + self.feed_belt_speed >= self.blank_spacing
        {
            return bad("feed photocell window must be shorter than the blank spacing".into());
        }
        if self.press_clearance <= APPROX_PRECISION {
            return bad("press clearance must exceed the approximate equality radius".into());
        }
        Ok(())
    }
}
