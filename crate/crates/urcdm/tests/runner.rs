use urcdm::runner::{format_events, ThreadedRunner};
use urcdm_core::cascade::StageRunner;
use urcdm_core::diffusion::KnownPixels;
use urcdm_core::rng::NoiseStream;
use urcdm_core::tiler::{check_event_order, plan_grid, Rect, TileGenerator, TileId, TileOutcome, Transition};
use urcdm_core::{Error, Result};

/// Seeded noise with the known pixels imposed, and an optional failing tile.
struct NoiseTiles {
    fail_at: Option<TileId>,
}

impl TileGenerator for NoiseTiles {
    fn generate(&self, id: TileId, rect: Rect, seed: u64, known: &KnownPixels) -> Result<TileOutcome> {
        if Some(id) == self.fail_at {
            return Err(Error::Numeric("diverged".into()));
        }
        let mut image = NoiseStream::new(seed).normal_tensor(&[3, rect.h, rect.w]).map(|v| 0.5 + 0.1 * v);
        known.impose_exact(&mut image);
        Ok(TileOutcome { image, white: false })
    }
}

#[test]
fn worker_count_does_not_change_the_canvas() {
    let grid = plan_grid(116, 32, 0.125).unwrap();
    assert_eq!(grid.per_side, 4);
    let gen = NoiseTiles { fail_at: None };
    let one = ThreadedRunner::new(1).run(grid, 3, 3, 11, &gen).unwrap();
    for workers in [2, 4, 8] {
        let many = ThreadedRunner::new(workers).run(grid, 3, 3, 11, &gen).unwrap();
        assert_eq!(many.canvas.to_tensor(), one.canvas.to_tensor(), "{workers} workers");
        assert_eq!(many.canvas.seam_violations(), 0);
        check_event_order(&grid, &many.events).unwrap();
        assert!(many.events.windows(2).all(|w| w[0].time <= w[1].time));
    }
    assert!(one.canvas.is_fully_written());
    let other = ThreadedRunner::new(4).run(grid, 3, 3, 12, &gen).unwrap();
    assert_ne!(other.canvas.to_tensor(), one.canvas.to_tensor());
}

#[test]
fn failure_stops_the_stage_and_keeps_the_partial_canvas() {
    let grid = plan_grid(116, 32, 0.125).unwrap();
    let gen = NoiseTiles { fail_at: Some(TileId { i: 1, j: 1 }) };
    let f = ThreadedRunner::new(4).run(grid, 3, 2, 0, &gen).unwrap_err();
    assert!(matches!(f.error, Error::Tile { i: 1, j: 1, .. }), "{:?}", f.error);
    assert!(f.partial.writer_count(0, 0) > 0);
    assert_eq!(f.partial.writer_count(115, 115), 0);
    assert!(f.events.iter().any(|e| e.transition == Transition::Failed && e.tile == TileId { i: 1, j: 1 }));
    assert!(!f.events.iter().any(|e| e.tile == TileId { i: 3, j: 3 } && e.transition == Transition::Started));
}

#[test]
fn event_log_has_one_line_per_event() {
    let grid = plan_grid(60, 32, 0.125).unwrap();
    let out = ThreadedRunner::new(2).run(grid, 3, 2, 5, &NoiseTiles { fail_at: None }).unwrap();
    let text = format_events(2, &out.events);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), out.events.len() + 1);
    assert!(lines[0].starts_with("# stage=2"));
    let fields: Vec<&str> = lines[1].split(' ').collect();
    assert_eq!(fields.len(), 6);
    assert_eq!(fields[4], "ready");
    assert_eq!(text.matches(" done ").count(), 4);
}
