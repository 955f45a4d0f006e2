//! Axial cell list.
//!
//! The tube cross-section is bounded, so binning along the axis alone keeps
//! every cell's population O(1) at bounded density and queries O(1).

use std::collections::HashMap;

use thiserror::Error;

use crate::model::{Configuration, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndexError {
    #[error("cell width {width} is smaller than the interaction range {range}")]
    CellTooNarrow { width: f64, range: f64 },
}

/// Particles binned by `floor(x . n / w)`.
#[derive(Debug, Clone)]
pub struct AxialCellIndex {
    width: f64,
    range: f64,
    reach: i64,
    cells: HashMap<i64, Vec<usize>>,
    cell_of: Vec<i64>,
    positions: Vec<Vec3>,
}

impl AxialCellIndex {
    pub fn build(positions: &[Vec3], axis: &Vec3, width: f64, range: f64) -> Result<Self, IndexError> {
        if !(width >= range) || !(width > 0.0) {
            return Err(IndexError::CellTooNarrow { width, range });
        }
        let mut cells: HashMap<i64, Vec<usize>> = HashMap::new();
        let cell_of: Vec<i64> = positions
            .iter()
            .map(|x| (x.dot(axis) / width).floor() as i64)
            .collect();
        for (i, &c) in cell_of.iter().enumerate() {
            cells.entry(c).or_default().push(i);
        }
        Ok(Self {
            width,
            range,
            reach: (range / width).ceil() as i64,
            cells,
            cell_of,
            positions: positions.to_vec(),
        })
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_of(&self, i: usize) -> i64 {
        self.cell_of[i]
    }

    pub fn cell(&self, c: i64) -> &[usize] {
        self.cells.get(&c).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Indices `j != i` with `|x_i - x_j| <= range`, ascending.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::new();
        self.neighbors_into(i, &mut out);
        out
    }

    /// Like [`Self::neighbors`], reusing `out`.
    pub fn neighbors_into(&self, i: usize, out: &mut Vec<usize>) {
        out.clear();
        let c = self.cell_of[i];
        let xi = &self.positions[i];
        let r2 = self.range * self.range;
        for cc in c - self.reach..=c + self.reach {
            if let Some(members) = self.cells.get(&cc) {
                out.extend(
                    members
                        .iter()
                        .copied()
                        .filter(|&j| j != i && (self.positions[j] - xi).norm_squared() <= r2),
                );
            }
        }
        out.sort_unstable();
    }
}

/// Index of `config` with cell width `width` and query range `range`.
pub fn build_index(config: &Configuration, width: f64, range: f64) -> Result<AxialCellIndex, IndexError> {
    AxialCellIndex::build(&config.positions(), &config.geometry().axis(), width, range)
}
