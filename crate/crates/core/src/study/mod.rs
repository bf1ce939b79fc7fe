//! Blinded two-alternative forced-choice study: trial plans, judgments and
//! per-rater statistics.

mod session;
mod stats;

pub use session::{plan_trials, Judgment, Session, Trial};
pub use stats::{compute_stats, RaterRow, StudyStats, Tally, TotalRow};

/// Which kind of images a session compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StudyCondition {
    /// Single-model patches.
    PatchLevel,
    /// Random crops of full synthesized slides.
    WsiCrop,
}

impl StudyCondition {
    pub const ALL: [StudyCondition; 2] = [StudyCondition::PatchLevel, StudyCondition::WsiCrop];

    pub fn name(self) -> &'static str {
        match self {
            StudyCondition::PatchLevel => "patch-level",
            StudyCondition::WsiCrop => "wsi-crop",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "left" => Some(Side::Left),
            "right" => Some(Side::Right),
            _ => None,
        }
    }
}

/// Image references available to one condition, tagged by magnification.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImagePools {
    pub real: alloc::vec::Vec<(u8, alloc::string::String)>,
    pub synthetic: alloc::vec::Vec<(u8, alloc::string::String)>,
}
