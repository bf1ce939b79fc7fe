use alloc::string::String;
use alloc::vec::Vec;

use crate::error::bail;
use crate::rng::NoiseStream;
use crate::{Error, Result};

use super::{ImagePools, Side, StudyCondition};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub id: usize,
    pub magnification: u8,
    pub real_ref: String,
    pub synthetic_ref: String,
    /// Side the real image is shown on.
    pub real_side: Side,
}

impl Trial {
    pub fn left(&self) -> &str {
        match self.real_side {
            Side::Left => &self.real_ref,
            Side::Right => &self.synthetic_ref,
        }
    }

    pub fn right(&self) -> &str {
        match self.real_side {
            Side::Left => &self.synthetic_ref,
            Side::Right => &self.real_ref,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Judgment {
    pub session: String,
    pub trial: usize,
    pub rater: String,
    pub condition: StudyCondition,
    pub chosen: Side,
    pub correct: bool,
    pub timestamp: u64,
}

/// Seeded trial plan: each trial draws a magnification present in both
/// pools, one real and one synthetic image of it, and a fair side.
pub fn plan_trials(pools: &ImagePools, count: usize, seed: u64) -> Result<Vec<Trial>> {
    let mut mags: Vec<u8> = pools
        .real
        .iter()
        .map(|(m, _)| *m)
        .filter(|m| pools.synthetic.iter().any(|(s, _)| s == m))
        .collect();
    mags.sort_unstable();
    mags.dedup();
    if mags.is_empty() {
        bail!(Setup, "no magnification has both real and synthetic images");
    }
    let mut rng = NoiseStream::new(seed);
    let pick = |pool: &[(u8, String)], m: u8, rng: &mut NoiseStream| -> String {
        let of: Vec<&String> = pool.iter().filter(|(k, _)| *k == m).map(|(_, r)| r).collect();
        of[rng.below(of.len())].clone()
    };
    Ok((0..count)
        .map(|id| {
            let m = mags[rng.below(mags.len())];
            let real_ref = pick(&pools.real, m, &mut rng);
            let synthetic_ref = pick(&pools.synthetic, m, &mut rng);
            let real_side = if rng.coin() { Side::Left } else { Side::Right };
            Trial {
                id,
                magnification: m,
                real_ref,
                synthetic_ref,
                real_side,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub id: String,
    pub rater: String,
    pub condition: StudyCondition,
    pub seed: u64,
    pub trials: Vec<Trial>,
    judgments: Vec<Option<Judgment>>,
}

impl Session {
    pub fn new(id: String, rater: String, condition: StudyCondition, seed: u64, trials: Vec<Trial>) -> Self {
        let n = trials.len();
        Self {
            id,
            rater,
            condition,
            seed,
            trials,
            judgments: alloc::vec![None; n],
        }
    }

    /// First trial without a judgment.
    pub fn next_trial(&self) -> Option<&Trial> {
        self.trials.iter().zip(&self.judgments).find(|(_, j)| j.is_none()).map(|(t, _)| t)
    }

    pub fn judged(&self) -> usize {
        self.judgments.iter().filter(|j| j.is_some()).count()
    }

    pub fn is_finished(&self) -> bool {
        self.judged() == self.trials.len()
    }

    pub fn judgments(&self) -> impl Iterator<Item = &Judgment> {
        self.judgments.iter().flatten()
    }

    pub fn judge(&mut self, trial: usize, chosen: Side, timestamp: u64) -> Result<Judgment> {
        let Some(t) = self.trials.get(trial) else {
            return Err(Error::NotFound(alloc::format!("trial {trial} in session {}", self.id)));
        };
        if self.judgments[trial].is_some() {
            bail!(Conflict, "trial {trial} of session {} already judged", self.id);
        }
        let j = Judgment {
            session: self.id.clone(),
            trial,
            rater: self.rater.clone(),
            condition: self.condition,
            chosen,
            correct: chosen == t.real_side,
            timestamp,
        };
        self.judgments[trial] = Some(j.clone());
        Ok(j)
    }

    /// Restores a judgment read back from the log.
    pub fn replay(&mut self, j: &Judgment) -> Result<()> {
        self.judge(j.trial, j.chosen, j.timestamp).map(|_| ())
    }
}
