use crate::error::{Error, Result};

/// Union of square regions on an `H x W` grid, with its cardinality cached.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionMask {
    height: usize,
    width: usize,
    cells: Vec<bool>,
    cardinality: usize,
}

impl RegionMask {
    pub fn full(height: usize, width: usize) -> Self {
        RegionMask {
            height,
            width,
            cells: vec![true; height * width],
            cardinality: height * width,
        }
    }

    /// Marks every cell covered by some `region_h x region_w` square whose
    /// top-left corner is in `positions`. Duplicate positions collapse.
    pub fn union(
        positions: &[(usize, usize)],
        region_h: usize,
        region_w: usize,
        height: usize,
        width: usize,
    ) -> Result<Self> {
        let mut cells = vec![false; height * width];
        for &(i, j) in positions {
            if i + region_h > height || j + region_w > width {
                return Err(Error::Invariant(format!(
                    "region {region_h}x{region_w} at ({i}, {j}) leaves the {height}x{width} map"
                )));
            }
            for row in i..i + region_h {
                cells[row * width + j..row * width + j + region_w].fill(true);
            }
        }
        let cardinality = cells.iter().filter(|&&c| c).count();
        Ok(RegionMask {
            height,
            width,
            cells,
            cardinality,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Row-major membership grid.
    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.cells[i * self.width + j]
    }

    pub fn cardinality(&self) -> usize {
        self.cardinality
    }
}
