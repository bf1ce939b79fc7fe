use alloc::string::ToString;
use alloc::vec::Vec;

use crate::diffusion::KnownPixels;
use crate::error::bail;
use crate::{Error, Result, Tensor};

use super::{tile_seed, Canvas, Rect, TileGrid, TileId, WavefrontSchedule};

/// Produces one tile's pixels (`[C, P, P]`, values in `[0, 1]`).
///
/// Implementations must be deterministic in `(id, seed, known)` and must
/// reproduce constrained pixels exactly.
pub trait TileGenerator: Sync {
    fn generate(&self, id: TileId, rect: Rect, seed: u64, known: &KnownPixels) -> Result<TileOutcome>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileOutcome {
    pub image: Tensor,
    /// The tile was filled by the white-background substitution.
    pub white: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transition {
    Ready,
    Started,
    Done,
    SkippedWhite,
    Failed,
}

impl Transition {
    pub fn name(self) -> &'static str {
        match self {
            Transition::Ready => "ready",
            Transition::Started => "started",
            Transition::Done => "done",
            Transition::SkippedWhite => "skipped-white",
            Transition::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageEvent {
    /// Position in the event order of this stage.
    pub seq: u64,
    /// Value of the state's clock when the event was logged.
    pub time: u64,
    pub tile: TileId,
    pub transition: Transition,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct StageOutput {
    pub canvas: Canvas,
    pub schedule: WavefrontSchedule,
    pub events: Vec<StageEvent>,
}

/// A stage that stopped at a failing tile, with whatever was assembled.
#[derive(Debug, Clone)]
pub struct StageFailure {
    pub error: Error,
    pub partial: Canvas,
    pub events: Vec<StageEvent>,
}

/// Mutable bookkeeping of one stage run: canvas, tile states and event log.
///
/// Runners drive it through [`StageState::begin_next`] and
/// [`StageState::complete`]; a parallel runner wraps it in a lock.
#[derive(Debug, Clone)]
pub struct StageState {
    stage: usize,
    global_seed: u64,
    canvas: Canvas,
    schedule: WavefrontSchedule,
    events: Vec<StageEvent>,
    clock: fn() -> u64,
}

/// A tile handed to a worker.
#[derive(Debug, Clone)]
pub struct TileTask {
    pub id: TileId,
    pub rect: Rect,
    pub seed: u64,
    pub known: KnownPixels,
}

impl StageState {
    pub fn new(grid: TileGrid, channels: usize, stage: usize, global_seed: u64) -> Self {
        let mut s = Self {
            stage,
            global_seed,
            canvas: Canvas::new(grid.canvas, channels),
            schedule: WavefrontSchedule::new(grid),
            events: Vec::new(),
            clock: || 0,
        };
        for id in s.schedule.ready() {
            s.log(id, Transition::Ready);
        }
        s
    }

    /// Timestamps events with `clock`, including those already logged.
    pub fn with_clock(mut self, clock: fn() -> u64) -> Self {
        self.clock = clock;
        for e in &mut self.events {
            e.time = clock();
        }
        self
    }

    fn log(&mut self, tile: TileId, transition: Transition) {
        let seed = tile_seed(self.global_seed, self.stage, tile);
        self.events.push(StageEvent {
            seq: self.events.len() as u64,
            time: (self.clock)(),
            tile,
            transition,
            seed,
        });
    }

    pub fn schedule(&self) -> &WavefrontSchedule {
        &self.schedule
    }

    pub fn canvas(&self) -> &Canvas {
        &self.canvas
    }

    pub fn is_complete(&self) -> bool {
        self.schedule.is_complete()
    }

    /// Starts the first ready tile in raster order, if any.
    pub fn begin_next(&mut self) -> Result<Option<TileTask>> {
        let Some(id) = self.schedule.ready().first().copied() else {
            return Ok(None);
        };
        let known = self.canvas.known_region(&self.schedule, id)?;
        self.schedule.start(id)?;
        self.log(id, Transition::Started);
        Ok(Some(TileTask {
            id,
            rect: self.schedule.grid().rect(id),
            seed: tile_seed(self.global_seed, self.stage, id),
            known,
        }))
    }

    pub fn complete(&mut self, id: TileId, outcome: Result<TileOutcome>) -> Result<()> {
        let outcome = match outcome {
            Ok(o) => o,
            Err(e) => {
                self.log(id, Transition::Failed);
                return Err(match e {
                    Error::Tile { .. } => e,
                    other => Error::Tile {
                        i: id.i,
                        j: id.j,
                        message: other.to_string(),
                    },
                });
            }
        };
        let rect = self.schedule.grid().rect(id);
        if let Err(e) = self.canvas.write(rect, &outcome.image) {
            self.log(id, Transition::Failed);
            return Err(Error::Tile {
                i: id.i,
                j: id.j,
                message: e.to_string(),
            });
        }
        let released = self.schedule.finish(id, outcome.white)?;
        self.log(id, if outcome.white { Transition::SkippedWhite } else { Transition::Done });
        for r in released {
            self.log(r, Transition::Ready);
        }
        Ok(())
    }

    pub fn finish(self) -> Result<StageOutput, StageFailure> {
        if !self.schedule.is_complete() {
            let e = Error::Scheduling("stage ended with unfinished tiles".to_string());
            return Err(self.fail(e));
        }
        Ok(StageOutput {
            canvas: self.canvas,
            schedule: self.schedule,
            events: self.events,
        })
    }

    pub fn fail(self, error: Error) -> StageFailure {
        StageFailure {
            error,
            partial: self.canvas,
            events: self.events,
        }
    }
}

/// Sequential raster-order execution of one stage.
pub fn run_stage(
    grid: TileGrid,
    channels: usize,
    stage: usize,
    global_seed: u64,
    generator: &dyn TileGenerator,
) -> Result<StageOutput, StageFailure> {
    let mut state = StageState::new(grid, channels, stage, global_seed);
    loop {
        let task = match state.begin_next() {
            Ok(Some(t)) => t,
            Ok(None) => break,
            Err(e) => return Err(state.fail(e)),
        };
        let outcome = generator.generate(task.id, task.rect, task.seed, &task.known);
        if let Err(e) = state.complete(task.id, outcome) {
            return Err(state.fail(e));
        }
    }
    if state.is_complete() {
        state.finish()
    } else {
        let e = Error::Scheduling("no ready tile but stage incomplete".to_string());
        Err(state.fail(e))
    }
}

/// Checks that events respect the dependency order: every tile starts after
/// each of its dependencies finished.
pub fn check_event_order(grid: &TileGrid, events: &[StageEvent]) -> Result<()> {
    let mut finished_at = alloc::vec![None; grid.len()];
    for e in events {
        if matches!(e.transition, Transition::Done | Transition::SkippedWhite) {
            finished_at[grid.index(e.tile)] = Some(e.seq);
        }
    }
    for e in events.iter().filter(|e| e.transition == Transition::Started) {
        for d in grid.dependencies(e.tile) {
            match finished_at[grid.index(d)] {
                Some(seq) if seq < e.seq => {}
                _ => bail!(
                    Scheduling,
                    "tile ({}, {}) started before dependency ({}, {}) finished",
                    e.tile.i,
                    e.tile.j,
                    d.i,
                    d.j
                ),
            }
        }
    }
    Ok(())
}
