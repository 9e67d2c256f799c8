//! Answer-option vocabulary and the sign conventions that pick an option.
//!
//! Conventions are expressed in the source camera frame (x right, y down,
//! z forward) for the motion that carries the source camera onto the target:
//!
//! * positive yaw turns the optical axis towards +x, i.e. the camera yaws right;
//! * positive pitch turns the optical axis towards -y, i.e. the camera pitches up;
//! * positive roll turns +x towards +y, a clockwise roll as seen from behind the camera;
//! * positive `tx`, `ty`, `tz` move the camera right, down and forward.

use serde::{Deserialize, Serialize};

use super::CurationError;
use crate::geometry::PoseVector;

/// Bench answer options in prompt order.
pub const BENCH_OPTIONS: [&str; 2] = ["Move left while yawing right", "Move right while yawing left"];

/// Bench option selected by a positive relative yaw. An orbit that keeps
/// the same point centered couples yawing right with moving left.
pub const POSITIVE_YAW_OPTION: u8 = 0;

/// Bench option selected by a positive lateral (`tx`) translation.
pub const POSITIVE_LATERAL_OPTION: u8 = 1 - POSITIVE_YAW_OPTION;

/// Smallest yaw magnitude that `verbalize_bench` will name.
pub const MIN_LABEL_YAW: f64 = 1e-6;

/// Which component of a pose vector decides the binary Bench label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifyRule {
    /// Sign of the relative yaw.
    #[default]
    Yaw,
    /// Sign of the lateral (camera x) translation.
    Lateral,
}

impl ClassifyRule {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "yaw" => Some(ClassifyRule::Yaw),
            "lateral" => Some(ClassifyRule::Lateral),
            _ => None,
        }
    }
}

/// One of the six pose-vector components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dof {
    Pitch,
    Yaw,
    Roll,
    Tx,
    Ty,
    Tz,
}

impl Dof {
    pub const ALL: [Dof; 6] = [Dof::Pitch, Dof::Yaw, Dof::Roll, Dof::Tx, Dof::Ty, Dof::Tz];

    /// Position in `PoseVector::components()`.
    pub fn position(self) -> usize {
        self as usize
    }

    pub fn is_rotation(self) -> bool {
        matches!(self, Dof::Pitch | Dof::Yaw | Dof::Roll)
    }

    pub fn name(self) -> &'static str {
        match self {
            Dof::Pitch => "pitch",
            Dof::Yaw => "yaw",
            Dof::Roll => "roll",
            Dof::Tx => "tx",
            Dof::Ty => "ty",
            Dof::Tz => "tz",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.name() == s)
    }

    /// `[positive-sign option, negative-sign option]`.
    pub fn options(self) -> [&'static str; 2] {
        match self {
            Dof::Pitch => ["Pitch up", "Pitch down"],
            Dof::Yaw => ["Yaw right", "Yaw left"],
            Dof::Roll => ["Roll clockwise", "Roll counter-clockwise"],
            Dof::Tx => ["Translate right", "Translate left"],
            Dof::Ty => ["Translate down", "Translate up"],
            Dof::Tz => ["Translate forward", "Translate backward"],
        }
    }
}

/// Bench label from the sign of relative yaw.
pub fn verbalize_bench(v: &PoseVector) -> Result<(&'static str, u8), CurationError> {
    let index = bench_label_index(v, ClassifyRule::Yaw, MIN_LABEL_YAW)?;
    Ok((BENCH_OPTIONS[index as usize], index))
}

/// Bench option index under `rule`; the governing component must exceed `min_magnitude`.
pub fn bench_label_index(v: &PoseVector, rule: ClassifyRule, min_magnitude: f64) -> Result<u8, CurationError> {
    let (value, positive_option) = match rule {
        ClassifyRule::Yaw => (v.yaw, POSITIVE_YAW_OPTION),
        ClassifyRule::Lateral => (v.tx, POSITIVE_LATERAL_OPTION),
    };
    if !(value.abs() > min_magnitude) {
        return Err(CurationError::AmbiguousMotion { rule, value });
    }
    Ok(if value > 0.0 { positive_option } else { 1 - positive_option })
}

/// Diag label for motion along `dof` with the given sign (`> 0` or `< 0`).
pub fn verbalize_diag(dof: Dof, sign: i8) -> (&'static str, u8) {
    let index = if sign > 0 { 0 } else { 1 };
    (dof.options()[index as usize], index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn diag_vocabulary_is_total_and_distinct() {
        let mut seen = HashSet::new();
        for dof in Dof::ALL {
            for sign in [1, -1] {
                seen.insert(verbalize_diag(dof, sign).0);
            }
        }
        assert_eq!(seen.len(), 12);
    }

    #[test]
    fn bench_label_sign_flip() {
        let mut v = PoseVector { yaw: 0.3, tx: -0.5, ..Default::default() };
        assert_eq!(verbalize_bench(&v).unwrap(), ("Move left while yawing right", 0));
        assert_eq!(bench_label_index(&v, ClassifyRule::Lateral, 1e-9).unwrap(), 0);
        v.yaw = -0.3;
        v.tx = 0.5;
        assert_eq!(verbalize_bench(&v).unwrap(), ("Move right while yawing left", 1));
        assert_eq!(bench_label_index(&v, ClassifyRule::Lateral, 1e-9).unwrap(), 1);
    }

    #[test]
    fn zero_yaw_is_ambiguous() {
        let v = PoseVector { tx: 1.0, ..Default::default() };
        assert!(matches!(verbalize_bench(&v), Err(CurationError::AmbiguousMotion { .. })));
    }

    #[test]
    fn dof_names_round_trip() {
        for d in Dof::ALL {
            assert_eq!(Dof::parse(d.name()), Some(d));
        }
    }
}
