use alloc::vec;
use alloc::vec::Vec;

use crate::error::bail;
use crate::Result;

use super::{TileGrid, TileId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TileStatus {
    Pending,
    Ready,
    Running,
    Done,
    SkippedWhite,
}

impl TileStatus {
    pub fn is_finished(self) -> bool {
        matches!(self, TileStatus::Done | TileStatus::SkippedWhite)
    }
}

/// Tile state machine over the left/top dependency DAG.
#[derive(Debug, Clone)]
pub struct WavefrontSchedule {
    grid: TileGrid,
    status: Vec<TileStatus>,
}

impl WavefrontSchedule {
    pub fn new(grid: TileGrid) -> Self {
        let mut s = Self {
            grid,
            status: vec![TileStatus::Pending; grid.len()],
        };
        s.promote();
        s
    }

    pub fn grid(&self) -> &TileGrid {
        &self.grid
    }

    pub fn status(&self, id: TileId) -> TileStatus {
        self.status[self.grid.index(id)]
    }

    fn promote(&mut self) {
        for id in self.grid.tiles().collect::<Vec<_>>() {
            let k = self.grid.index(id);
            if self.status[k] == TileStatus::Pending && self.dependencies_finished(id) {
                self.status[k] = TileStatus::Ready;
            }
        }
    }

    pub fn dependencies_finished(&self, id: TileId) -> bool {
        self.grid
            .dependencies(id)
            .iter()
            .all(|d| self.status[self.grid.index(*d)].is_finished())
    }

    /// Ready tiles in raster order.
    pub fn ready(&self) -> Vec<TileId> {
        self.grid
            .tiles()
            .filter(|id| self.status[self.grid.index(*id)] == TileStatus::Ready)
            .collect()
    }

    pub fn running(&self) -> usize {
        self.status.iter().filter(|s| **s == TileStatus::Running).count()
    }

    pub fn start(&mut self, id: TileId) -> Result<()> {
        let k = self.grid.index(id);
        if self.status[k] != TileStatus::Ready {
            bail!(Scheduling, "tile ({}, {}) started while {:?}", id.i, id.j, self.status[k]);
        }
        self.status[k] = TileStatus::Running;
        Ok(())
    }

    /// Marks a running tile finished and returns the tiles that became ready.
    pub fn finish(&mut self, id: TileId, white: bool) -> Result<Vec<TileId>> {
        let k = self.grid.index(id);
        if self.status[k] != TileStatus::Running {
            bail!(Scheduling, "tile ({}, {}) finished while {:?}", id.i, id.j, self.status[k]);
        }
        self.status[k] = if white { TileStatus::SkippedWhite } else { TileStatus::Done };
        let before: Vec<TileId> = self.ready();
        self.promote();
        Ok(self.ready().into_iter().filter(|r| !before.contains(r)).collect())
    }

    pub fn is_complete(&self) -> bool {
        self.status.iter().all(|s| s.is_finished())
    }

    pub fn count(&self, status: TileStatus) -> usize {
        self.status.iter().filter(|s| **s == status).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tiler::plan_grid;

    #[test]
    fn only_origin_ready_initially() {
        let s = WavefrontSchedule::new(plan_grid(116, 32, 0.125).unwrap());
        assert_eq!(s.ready(), [TileId { i: 0, j: 0 }]);
    }

    #[test]
    fn finishing_releases_dependents() {
        let mut s = WavefrontSchedule::new(plan_grid(60, 32, 0.125).unwrap());
        let o = TileId { i: 0, j: 0 };
        s.start(o).unwrap();
        let released = s.finish(o, false).unwrap();
        assert_eq!(released, [TileId { i: 0, j: 1 }, TileId { i: 1, j: 0 }]);
        assert!(s.start(TileId { i: 1, j: 1 }).is_err());
    }

    #[test]
    fn double_start_rejected() {
        let mut s = WavefrontSchedule::new(plan_grid(32, 32, 0.125).unwrap());
        let o = TileId { i: 0, j: 0 };
        s.start(o).unwrap();
        assert!(matches!(s.start(o), Err(crate::Error::Scheduling(_))));
    }
}
