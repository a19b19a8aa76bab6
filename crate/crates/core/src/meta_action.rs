//! The discrete decision space: a longitudinal choice paired with a lateral choice.

use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SpeedAction {
    SpeedUp,
    SlowDown,
    SlowdownRapidly,
    MaintainSlowSpeed,
    MaintainModerateSpeed,
    MaintainFastSpeed,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PathAction {
    TurnLeft,
    TurnRight,
    ChangeLaneLeft,
    ChangeLaneRight,
    Straight,
    LaneFollow,
}

pub const SPEED_ACTIONS: usize = 7;
pub const PATH_ACTIONS: usize = 6;
pub const JOINT_ACTIONS: usize = SPEED_ACTIONS * PATH_ACTIONS;

impl SpeedAction {
    pub const ALL: [SpeedAction; SPEED_ACTIONS] = [
        SpeedAction::SpeedUp,
        SpeedAction::SlowDown,
        SpeedAction::SlowdownRapidly,
        SpeedAction::MaintainSlowSpeed,
        SpeedAction::MaintainModerateSpeed,
        SpeedAction::MaintainFastSpeed,
        SpeedAction::Stop,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl PathAction {
    pub const ALL: [PathAction; PATH_ACTIONS] = [
        PathAction::TurnLeft,
        PathAction::TurnRight,
        PathAction::ChangeLaneLeft,
        PathAction::ChangeLaneRight,
        PathAction::Straight,
        PathAction::LaneFollow,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MetaAction {
    pub speed: SpeedAction,
    pub path: PathAction,
}

impl MetaAction {
    pub const fn new(speed: SpeedAction, path: PathAction) -> Self {
        MetaAction { speed, path }
    }

    /// Joint index `speed * 6 + path`, in `0..42`.
    pub fn index(self) -> usize {
        self.speed.index() * PATH_ACTIONS + self.path.index()
    }

    pub fn from_index(i: usize) -> Option<Self> {
        if i >= JOINT_ACTIONS {
            return None;
        }
        Some(MetaAction {
            speed: SpeedAction::ALL[i / PATH_ACTIONS],
            path: PathAction::ALL[i % PATH_ACTIONS],
        })
    }

    /// All 42 joint actions in index order.
    pub fn all() -> impl Iterator<Item = MetaAction> {
        (0..JOINT_ACTIONS).map(|i| MetaAction::from_index(i).unwrap())
    }

    /// Concatenated one-hot encoding (7 speed slots then 6 path slots).
    pub fn one_hot(self) -> [f64; SPEED_ACTIONS + PATH_ACTIONS] {
        let mut v = [0.0; SPEED_ACTIONS + PATH_ACTIONS];
        v[self.speed.index()] = 1.0;
        v[SPEED_ACTIONS + self.path.index()] = 1.0;
        v
    }
}

impl fmt::Display for MetaAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}+{:?}", self.speed, self.path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn joint_space_size() {
        assert_eq!(SpeedAction::ALL.len(), 7);
        assert_eq!(PathAction::ALL.len(), 6);
        assert_eq!(MetaAction::all().count(), 42);
    }

    #[test]
    fn index_round_trip() {
        for (i, a) in MetaAction::all().enumerate() {
            assert_eq!(a.index(), i);
            assert_eq!(MetaAction::from_index(i), Some(a));
        }
        assert_eq!(MetaAction::from_index(42), None);
    }
}
