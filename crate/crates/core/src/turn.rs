use serde::{Deserialize, Serialize};

/// Which agent acts at a decision step. Leader moves at even steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Turn {
    Leader,
    Follower,
}

impl Turn {
    pub fn of_step(step: usize) -> Self {
        if step.is_multiple_of(2) {
            Turn::Leader
        } else {
            Turn::Follower
        }
    }

    pub fn other(self) -> Self {
        match self {
            Turn::Leader => Turn::Follower,
            Turn::Follower => Turn::Leader,
        }
    }

    /// `+1` for the leader, `-1` for the follower; used as a model input.
    pub fn flag(self) -> f64 {
        match self {
            Turn::Leader => 1.0,
            Turn::Follower => -1.0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Turn::Leader => 0,
            Turn::Follower => 1,
        }
    }
}

impl std::fmt::Display for Turn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Turn::Leader => "leader",
            Turn::Follower => "follower",
        })
    }
}
