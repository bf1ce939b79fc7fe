//! Multi-threaded tile execution: workers pull ready tiles from a shared
//! [`StageState`] and block on a condition variable until the next
//! wavefront is released.

use std::fmt::Write as _;
use std::sync::{Condvar, Mutex, OnceLock};
use std::time::Instant;

use urcdm_core::cascade::StageRunner;
use urcdm_core::tiler::{StageEvent, StageFailure, StageOutput, StageState, TileGenerator, TileGrid};
use urcdm_core::Error;

/// Microseconds since the first call in this process.
pub fn monotonic_micros() -> u64 {
    static START: OnceLock<Instant> = OnceLock::new();
    START.get_or_init(Instant::now).elapsed().as_micros() as u64
}

#[derive(Debug, Clone, Copy)]
pub struct ThreadedRunner {
    pub workers: usize,
}

impl ThreadedRunner {
    pub fn new(workers: usize) -> Self {
        Self { workers: workers.max(1) }
    }
}

struct Shared {
    state: StageState,
    error: Option<Error>,
}

impl StageRunner for ThreadedRunner {
    fn run(
        &self,
        grid: TileGrid,
        channels: usize,
        stage: usize,
        seed: u64,
        generator: &dyn TileGenerator,
    ) -> Result<StageOutput, StageFailure> {
        let shared = Mutex::new(Shared {
            state: StageState::new(grid, channels, stage, seed).with_clock(monotonic_micros),
            error: None,
        });
        let wake = Condvar::new();
        let workers = self.workers.min(grid.max_wavefront_width()).max(1);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| worker(&shared, &wake, generator));
            }
        });
        let Shared { state, error } = shared.into_inner().unwrap_or_else(|p| p.into_inner());
        match error {
            Some(e) => Err(state.fail(e)),
            None => state.finish(),
        }
    }
}

fn worker(shared: &Mutex<Shared>, wake: &Condvar, generator: &dyn TileGenerator) {
    loop {
        let task = {
            let mut g = shared.lock().unwrap_or_else(|p| p.into_inner());
            loop {
                if g.error.is_some() || g.state.is_complete() {
                    return;
                }
                match g.state.begin_next() {
                    Ok(Some(t)) => break t,
                    Ok(None) if g.state.schedule().running() == 0 => {
                        g.error = Some(Error::Scheduling("no ready tile but stage incomplete".into()));
                        wake.notify_all();
                        return;
                    }
                    Ok(None) => g = wake.wait(g).unwrap_or_else(|p| p.into_inner()),
                    Err(e) => {
                        g.error = Some(e);
                        wake.notify_all();
                        return;
                    }
                }
            }
        };
        let outcome = generator.generate(task.id, task.rect, task.seed, &task.known);
        let mut g = shared.lock().unwrap_or_else(|p| p.into_inner());
        if let Err(e) = g.state.complete(task.id, outcome) {
            g.error.get_or_insert(e);
        }
        wake.notify_all();
    }
}

/// Event log lines: `seq time_us tile_i tile_j transition seed`.
pub fn format_events(stage: usize, events: &[StageEvent]) -> String {
    let mut s = String::new();
    writeln!(s, "# stage={stage} seq time_us i j transition seed").unwrap();
    for e in events {
        writeln!(
            s,
            "{} {} {} {} {} {:016x}",
            e.seq,
            e.time,
            e.tile.i,
            e.tile.j,
            e.transition.name(),
            e.seed
        )
        .unwrap();
    }
    s
}
