use std::collections::HashSet;

use urcdm_core::diffusion::KnownPixels;
use urcdm_core::rng::stable_hash;
use urcdm_core::tiler::{
    bilinear_footprint, check_event_order, plan_grid, run_stage, stride_for, Rect, StageState, TileGenerator,
    TileGrid, TileId, TileOutcome, Transition, WhiteRule,
};
use urcdm_core::{Error, Result, Tensor};

/// Fills unknown pixels with a seed-dependent pattern and copies known ones.
struct PatternTiles {
    channels: usize,
    white: HashSet<TileId>,
}

impl TileGenerator for PatternTiles {
    fn generate(&self, id: TileId, rect: Rect, seed: u64, known: &KnownPixels) -> Result<TileOutcome> {
        let hw = rect.h * rect.w;
        let image = Tensor::from_fn(&[self.channels, rect.h, rect.w], |k| {
            if known.mask[k % hw] {
                known.values.data()[k]
            } else {
                (stable_hash(&[seed, k as u64]) % 1000) as f64 / 1000.0
            }
        });
        Ok(TileOutcome { image, white: self.white.contains(&id) })
    }
}

/// Ignores constraints entirely.
struct CarelessTiles;

impl TileGenerator for CarelessTiles {
    fn generate(&self, _: TileId, rect: Rect, seed: u64, _: &KnownPixels) -> Result<TileOutcome> {
        let image = Tensor::full(&[1, rect.h, rect.w], (seed % 97) as f64 / 97.0);
        Ok(TileOutcome { image, white: false })
    }
}

struct FailingTile(TileId);

impl TileGenerator for FailingTile {
    fn generate(&self, id: TileId, rect: Rect, _: u64, _: &KnownPixels) -> Result<TileOutcome> {
        if id == self.0 {
            return Err(Error::Numeric("diverged".into()));
        }
        Ok(TileOutcome { image: Tensor::zeros(&[1, rect.h, rect.w]), white: false })
    }
}

#[test]
fn paper_consistent_grids() {
    let g = plan_grid(6400, 1024, 0.125).unwrap();
    assert_eq!((g.per_side, g.stride), (7, 896));
    let g = plan_grid(41344, 1024, 0.125).unwrap();
    assert_eq!(g.per_side, 46);
    assert_eq!(plan_grid(1376, 32, 0.125).unwrap().per_side, 49);
    assert_eq!(plan_grid(200, 32, 0.125).unwrap().per_side, 7);
}

#[test]
fn incompatible_geometry_is_rejected() {
    let e = plan_grid(41300, 1024, 0.125).unwrap_err();
    assert!(matches!(&e, Error::Geometry(m) if m.contains("remainder")));
    assert!(stride_for(32, 0.1).is_err());
    assert!(stride_for(32, 1.0).is_err());
    assert!(plan_grid(16, 32, 0.125).is_err());
}

#[test]
fn known_region_sizes_match_overlap_counts() {
    let g = plan_grid(116, 32, 0.125).unwrap();
    let mut state = StageState::new(g, 1, 2, 0);
    let gen = PatternTiles { channels: 1, white: HashSet::new() };
    let po = 4;
    while let Some(task) = state.begin_next().unwrap() {
        let expected = match (task.id.i > 0, task.id.j > 0) {
            (false, false) => 0,
            (true, true) => 2 * 32 * po - po * po,
            _ => 32 * po,
        };
        assert_eq!(task.known.count(), expected, "{:?}", task.id);
        let out = gen.generate(task.id, task.rect, task.seed, &task.known);
        state.complete(task.id, out).unwrap();
    }
}

#[test]
fn dependencies_cover_everything_written_before() {
    let g = plan_grid(144, 32, 0.125).unwrap();
    let mut written = vec![false; g.canvas * g.canvas];
    let mut state = StageState::new(g, 1, 3, 11);
    let gen = PatternTiles { channels: 1, white: HashSet::new() };
    while let Some(task) = state.begin_next().unwrap() {
        let r = task.rect;
        for dy in 0..r.h {
            for dx in 0..r.w {
                let before = written[(r.y + dy) * g.canvas + r.x + dx];
                assert_eq!(task.known.mask[dy * r.w + dx], before, "{:?} ({dy},{dx})", task.id);
            }
        }
        for dy in 0..r.h {
            for dx in 0..r.w {
                written[(r.y + dy) * g.canvas + r.x + dx] = true;
            }
        }
        let out = gen.generate(task.id, task.rect, task.seed, &task.known);
        state.complete(task.id, out).unwrap();
    }
}

#[test]
fn wavefront_widths() {
    let g = plan_grid(200, 32, 0.125).unwrap();
    assert_eq!(g.wavefront_count(), 13);
    let widths: Vec<_> = (0..13).map(|l| g.wavefront_width(l)).collect();
    assert_eq!(widths, [1, 2, 3, 4, 5, 6, 7, 6, 5, 4, 3, 2, 1]);
    assert_eq!(widths.iter().sum::<usize>(), 49);
    assert_eq!(g.max_wavefront_width(), 7);
    for l in 0..13 {
        let brute = g.tiles().filter(|t| t.i + t.j == l).count();
        assert_eq!(brute, g.wavefront_width(l));
    }
}

#[test]
fn stage_run_is_seam_exact_with_expected_coverage() {
    let g = plan_grid(116, 32, 0.125).unwrap();
    let gen = PatternTiles { channels: 3, white: HashSet::new() };
    let out = run_stage(g, 3, 2, 5, &gen).unwrap();
    assert!(out.canvas.is_fully_written());
    assert_eq!(out.canvas.seam_violations(), 0);
    let counts: HashSet<u16> = out.canvas.writers().iter().copied().collect();
    assert_eq!(counts, HashSet::from([1, 2, 4]));
    let total: usize = out.canvas.writers().iter().map(|&w| w as usize).sum();
    assert_eq!(total, g.len() * 32 * 32);
    let fours = out.canvas.writers().iter().filter(|&&w| w == 4).count();
    assert_eq!(fours, 9 * 16);
    check_event_order(&g, &out.events).unwrap();

    let again = run_stage(g, 3, 2, 5, &gen).unwrap();
    assert_eq!(again.canvas.to_tensor(), out.canvas.to_tensor());
    let other = run_stage(g, 3, 2, 6, &gen).unwrap();
    assert_ne!(other.canvas.to_tensor(), out.canvas.to_tensor());
}

#[test]
fn ignoring_constraints_is_detected() {
    let g = plan_grid(60, 32, 0.125).unwrap();
    let out = run_stage(g, 1, 2, 1, &CarelessTiles).unwrap();
    assert!(out.canvas.seam_violations() > 0);
}

#[test]
fn neighbours_of_a_white_tile_constrain_on_its_pixels() {
    let g = plan_grid(88, 32, 0.125).unwrap();
    let white = TileId { i: 1, j: 1 };
    let gen = PatternTiles { channels: 1, white: HashSet::from([white]) };
    let mut state = StageState::new(g, 1, 3, 2);
    let mut white_pixels = None;
    while let Some(task) = state.begin_next().unwrap() {
        let out = gen.generate(task.id, task.rect, task.seed, &task.known).unwrap();
        if task.id == white {
            white_pixels = Some(out.image.clone());
        }
        if task.id == (TileId { i: 1, j: 2 }) {
            let w = white_pixels.as_ref().unwrap();
            for dy in 0..32 {
                for dx in 0..4 {
                    assert!(task.known.mask[dy * 32 + dx]);
                    assert_eq!(task.known.values.data()[dy * 32 + dx], w.data()[dy * 32 + 28 + dx]);
                }
            }
        }
        state.complete(task.id, Ok(out)).unwrap();
    }
    let out = state.finish().unwrap();
    assert_eq!(out.canvas.seam_violations(), 0);
    let skipped: Vec<_> = out.events.iter().filter(|e| e.transition == Transition::SkippedWhite).collect();
    assert_eq!(skipped.len(), 1);
    assert_eq!(skipped[0].tile, white);
}

#[test]
fn failure_keeps_partial_canvas() {
    let g = plan_grid(88, 32, 0.125).unwrap();
    let bad = TileId { i: 1, j: 0 };
    let fail = run_stage(g, 1, 2, 0, &FailingTile(bad)).unwrap_err();
    assert!(matches!(fail.error, Error::Tile { i: 1, j: 0, .. }));
    assert!(fail.partial.writer_count(0, 0) > 0);
    assert!(!fail.partial.is_fully_written());
    assert_eq!(fail.events.last().unwrap().transition, Transition::Failed);
}

#[test]
fn out_of_order_log_is_rejected() {
    let g: TileGrid = plan_grid(60, 32, 0.125).unwrap();
    let out = run_stage(g, 1, 2, 0, &CarelessTiles).unwrap();
    let mut events = out.events.clone();
    let first_done = events.iter().position(|e| e.transition == Transition::Done).unwrap();
    let later_start = events.iter().rposition(|e| e.transition == Transition::Started).unwrap();
    let (a, b) = (events[first_done].seq, events[later_start].seq);
    events[first_done].seq = b;
    events[later_start].seq = a;
    assert!(check_event_order(&g, &events).is_err());
}

/// Direct bilinear interpolation at pixel centres.
fn bilinear_oracle(prev: &Tensor, canvas: usize, c: usize, y: usize, x: usize) -> f64 {
    let (_, hp, wp) = prev.dims3().unwrap();
    let at = |yy: usize, xx: usize| prev.data()[(c * hp + yy) * wp + xx];
    let sy = ((y as f64 + 0.5) * hp as f64 / canvas as f64 - 0.5).max(0.0).min((hp - 1) as f64);
    let sx = ((x as f64 + 0.5) * wp as f64 / canvas as f64 - 0.5).max(0.0).min((wp - 1) as f64);
    let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(hp - 1), (x0 + 1).min(wp - 1));
    let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
    (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x1)) + fy * ((1.0 - fx) * at(y1, x0) + fx * at(y1, x1))
}

#[test]
fn footprint_matches_bilinear_oracle_and_agrees_on_overlaps() {
    let prev = Tensor::from_fn(&[3, 20, 20], |k| ((k * 37) % 101) as f64 / 100.0);
    let a = Rect { y: 28, x: 56, h: 32, w: 32 };
    let b = Rect { y: 28, x: 84, h: 32, w: 32 };
    let fa = bilinear_footprint(&prev, 137, a).unwrap();
    let fb = bilinear_footprint(&prev, 137, b).unwrap();
    for c in 0..3 {
        for dy in 0..32 {
            for dx in 0..32 {
                let v = fa.data()[(c * 32 + dy) * 32 + dx];
                let o = bilinear_oracle(&prev, 137, c, a.y + dy, a.x + dx);
                assert!((v - o).abs() < 1e-12);
            }
            for dx in 0..4 {
                let va = fa.data()[(c * 32 + dy) * 32 + 28 + dx];
                let vb = fb.data()[(c * 32 + dy) * 32 + dx];
                assert_eq!(va.to_bits(), vb.to_bits());
            }
        }
    }
}

#[test]
fn white_rule_thresholds() {
    let rule = WhiteRule::default();
    assert!(rule.is_white(&Tensor::full(&[3, 8, 8], 0.95)));
    assert!(!rule.is_white(&Tensor::full(&[3, 8, 8], 0.8)));
    // 3 of 64 dark pixels is below the 5% allowance, 4 is not.
    let with_dark = |n: usize| {
        Tensor::from_fn(&[3, 8, 8], |k| if k % 64 < n { 0.1 } else { 0.99 })
    };
    assert!(rule.is_white(&with_dark(3)));
    assert!(!rule.is_white(&with_dark(4)));
    // Bright in two channels only.
    let tinted = Tensor::from_fn(&[3, 8, 8], |k| if k / 64 == 1 { 0.7 } else { 1.0 });
    assert!(!rule.is_white(&tinted));
}
