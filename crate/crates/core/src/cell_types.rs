//! Abstraction of concrete sensor readings into the few values the
//! controller distinguishes.

use std::fmt;

use thiserror::Error;

use crate::geometry::GeometryConfig;
use crate::protocol::SensorStatus;

/// Two readings closer than this are the same position.
pub const APPROX_PRECISION: f64 = 0.01;

/// Approximate equality of sensor readings: `|a - b| < 0.01`.
///
/// Reflexive and symmetric, not transitive.
pub fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() < APPROX_PRECISION
}

macro_rules! token_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $token:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn token(self) -> &'static str {
                match self {
                    $($name::$variant => $token),+
                }
            }

            pub fn from_token(t: &str) -> Option<Self> {
                match t {
                    $($token => Some($name::$variant),)+
                    _ => None,
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.token())
            }
        }
    };
}

token_enum!(
    /// Press position from switches S1 (bottom), S2 (middle), S3 (top).
    PressPosition {
        Bottom => "BOTTOM",
        Middle => "MIDDLE",
        Top => "TOP",
        Elsewhere => "ELSEWHERE",
    }
);

token_enum!(
    /// Table elevation from S12.
    TableElevation {
        Bottom => "BOTTOM",
        Between => "BETWEEN",
        Top => "TOP",
    }
);

token_enum!(
    /// Arm extension from S4 or S5. The middle stop is the table for arm 1
    /// and the deposit belt for arm 2.
    ArmExtension {
        Retracted => "RETRACTED",
        AtTableOrDeposit => "AT_TABLE_OR_DEPOSIT",
        AtPress => "AT_PRESS",
        Elsewhere => "ELSEWHERE",
    }
);

token_enum!(
    /// Robot rotation from S6.
    RobotAngle {
        AtTable => "AT_TABLE",
        AtPress => "AT_PRESS",
        AtDeposit => "AT_DEPOSIT",
        Elsewhere => "ELSEWHERE",
    }
);

token_enum!(
    /// Crane gripper height from S11, relative to its drop height.
    CraneHeight {
        AtDrop => "AT_DROP",
        Above => "ABOVE",
        Below => "BELOW",
    }
);

token_enum!(
    /// Table rotation from switches S7 (load) and S8 (transfer).
    TableRotation {
        AtLoad => "AT_LOAD",
        AtTransfer => "AT_TRANSFER",
        Between => "BETWEEN",
    }
);

token_enum!(
    /// Crane horizontal position from switches S9 (deposit) and S10 (feed).
    CranePosition {
        OverDeposit => "OVER_DEPOSIT",
        OverFeed => "OVER_FEED",
        Between => "BETWEEN",
    }
);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AbstractionError {
    #[error("press switches (s1,s2,s3) = ({0},{1},{2}) are not mutually exclusive")]
    PressSwitches(bool, bool, bool),
    #[error("table rotation switches (s7,s8) both on")]
    TableSwitches,
    #[error("crane position switches (s9,s10) both on")]
    CraneSwitches,
}

pub fn to_press_position(s1: bool, s2: bool, s3: bool) -> Result<PressPosition, AbstractionError> {
    match (s1, s2, s3) {
        (false, false, false) => Ok(PressPosition::Elsewhere),
        (true, false, false) => Ok(PressPosition::Bottom),
        (false, true, false) => Ok(PressPosition::Middle),
        (false, false, true) => Ok(PressPosition::Top),
        _ => Err(AbstractionError::PressSwitches(s1, s2, s3)),
    }
}

pub fn to_table_elevation(s12: f64, cfg: &GeometryConfig) -> TableElevation {
    if approx_eq(s12, cfg.table_elev_bottom) {
        TableElevation::Bottom
    } else if approx_eq(s12, cfg.table_elev_top) {
        TableElevation::Top
    } else {
        TableElevation::Between
    }
}

pub fn to_arm1_extension(s4: f64, cfg: &GeometryConfig) -> ArmExtension {
    arm_extension(s4, cfg.arm1_retracted, cfg.arm1_table, cfg.arm1_press)
}

pub fn to_arm2_extension(s5: f64, cfg: &GeometryConfig) -> ArmExtension {
    arm_extension(s5, cfg.arm2_retracted, cfg.arm2_deposit, cfg.arm2_press)
}

fn arm_extension(v: f64, retracted: f64, middle: f64, press: f64) -> ArmExtension {
    if approx_eq(v, retracted) {
        ArmExtension::Retracted
    } else if approx_eq(v, middle) {
        ArmExtension::AtTableOrDeposit
    } else if approx_eq(v, press) {
        ArmExtension::AtPress
    } else {
        ArmExtension::Elsewhere
    }
}

pub fn to_robot_angle(s6: f64, cfg: &GeometryConfig) -> RobotAngle {
    if approx_eq(s6, cfg.robot_table) {
        RobotAngle::AtTable
    } else if approx_eq(s6, cfg.robot_press) {
        RobotAngle::AtPress
    } else if approx_eq(s6, cfg.robot_deposit) {
        RobotAngle::AtDeposit
    } else {
        RobotAngle::Elsewhere
    }
}

pub fn to_crane_height(s11: f64, cfg: &GeometryConfig) -> CraneHeight {
    if approx_eq(s11, cfg.crane_y_drop) {
        CraneHeight::AtDrop
    } else if s11 > cfg.crane_y_drop {
        CraneHeight::Above
    } else {
        CraneHeight::Below
    }
}

pub fn to_table_rotation(s7: bool, s8: bool) -> Result<TableRotation, AbstractionError> {
    match (s7, s8) {
        (true, true) => Err(AbstractionError::TableSwitches),
        (true, false) => Ok(TableRotation::AtLoad),
        (false, true) => Ok(TableRotation::AtTransfer),
        (false, false) => Ok(TableRotation::Between),
    }
}

pub fn to_crane_position(s9: bool, s10: bool) -> Result<CranePosition, AbstractionError> {
    match (s9, s10) {
        (true, true) => Err(AbstractionError::CraneSwitches),
        (true, false) => Ok(CranePosition::OverDeposit),
        (false, true) => Ok(CranePosition::OverFeed),
        (false, false) => Ok(CranePosition::Between),
    }
}

/// Everything the dispatcher hands out in one reaction step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AbstractStatus {
    pub press: PressPosition,
    pub arm1: ArmExtension,
    pub arm2: ArmExtension,
    pub robot: RobotAngle,
    pub table_rotation: TableRotation,
    pub table_elevation: TableElevation,
    pub crane_position: CranePosition,
    pub crane_height: CraneHeight,
    /// S13: a blank is at the end of the feed belt.
    pub feed_cell: bool,
    /// S14: a blank is at the end of the deposit belt.
    pub deposit_cell: bool,
}

pub fn abstract_status(
    s: &SensorStatus,
    cfg: &GeometryConfig,
) -> Result<AbstractStatus, AbstractionError> {
    Ok(AbstractStatus {
        press: to_press_position(s.s1, s.s2, s.s3)?,
        arm1: to_arm1_extension(s.s4, cfg),
        arm2: to_arm2_extension(s.s5, cfg),
        robot: to_robot_angle(s.s6, cfg),
        table_rotation: to_table_rotation(s.s7, s.s8)?,
        table_elevation: to_table_elevation(s.s12, cfg),
        crane_position: to_crane_position(s.s9, s.s10)?,
        crane_height: to_crane_height(s.s11, cfg),
        feed_cell: s.s13,
        deposit_cell: s.s14,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn approx_eq_precision_window() {
        assert!(approx_eq(1.000, 1.005));
        assert!(!approx_eq(0.00, 0.02));
        assert!(approx_eq(0.3, 0.3));
        // not transitive
        let a = 0.5;
        assert!(approx_eq(a, a + 0.009));
        assert!(approx_eq(a + 0.009, a + 0.018));
        assert!(!approx_eq(a, a + 0.018));
    }

    #[test]
    fn press_mapping() {
        assert_eq!(
            to_press_position(true, false, false),
            Ok(PressPosition::Bottom)
        );
        assert_eq!(
            to_press_position(false, true, false),
            Ok(PressPosition::Middle)
        );
        assert_eq!(
            to_press_position(false, false, true),
            Ok(PressPosition::Top)
        );
        assert_eq!(
            to_press_position(false, false, false),
            Ok(PressPosition::Elsewhere)
        );
        assert_eq!(
            to_press_position(true, true, false),
            Err(AbstractionError::PressSwitches(true, true, false))
        );
    }

    #[test]
    fn table_elevation_windows() {
        let cfg = GeometryConfig::default();
        assert_eq!(
            to_table_elevation(cfg.table_elev_bottom, &cfg),
            TableElevation::Bottom
        );
        let mid = (cfg.table_elev_bottom + cfg.table_elev_top) / 2.0;
        assert_eq!(to_table_elevation(mid, &cfg), TableElevation::Between);
        assert_eq!(
            to_table_elevation(cfg.table_elev_top - 0.005, &cfg),
            TableElevation::Top
        );
    }

    #[test]
    fn switch_pairs() {
        let cfg = GeometryConfig::default();
        assert_eq!(
            to_arm1_extension(cfg.arm1_press, &cfg),
            ArmExtension::AtPress
        );
        assert_eq!(to_crane_position(false, false), Ok(CranePosition::Between));
        assert_eq!(
            to_crane_position(true, true),
            Err(AbstractionError::CraneSwitches)
        );
        assert_eq!(
            to_table_rotation(true, true),
            Err(AbstractionError::TableSwitches)
        );
        assert_eq!(
            to_table_rotation(false, true),
            Ok(TableRotation::AtTransfer)
        );
    }

    #[test]
    fn crane_height_relative_to_drop() {
        let cfg = GeometryConfig::default();
        assert_eq!(to_crane_height(cfg.crane_y_drop, &cfg), CraneHeight::AtDrop);
        assert_eq!(
            to_crane_height(cfg.crane_y_drop - 0.03, &cfg),
            CraneHeight::Below
        );
        assert_eq!(
            to_crane_height(cfg.crane_y_drop + 0.03, &cfg),
            CraneHeight::Above
        );
    }

    #[test]
    fn tokens_round_trip() {
        for p in PressPosition::ALL {
            assert_eq!(PressPosition::from_token(p.token()), Some(*p));
        }
        for a in ArmExtension::ALL {
            assert_eq!(ArmExtension::from_token(a.token()), Some(*a));
        }
        assert_eq!(RobotAngle::from_token("SIDEWAYS"), None);
    }
}
