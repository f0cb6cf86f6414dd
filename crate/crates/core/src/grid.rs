//! Row-major 2D mask grids, square-kernel dilation and frontier extraction.
//!
//! Flat index `i` maps to `(i / width, i % width)`. Cells outside the grid are
//! treated as not observed (zero padding).

use serde::{Deserialize, Serialize};

use crate::error::{LadrError, Result};

/// Odd square structuring element of side `size`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Kernel(usize);

impl Kernel {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 || size.is_multiple_of(2) {
            return Err(LadrError::Config(format!(
                "kernel size must be odd and >= 1, got {size}"
            )));
        }
        Ok(Kernel(size))
    }

    pub fn size(self) -> usize {
        self.0
    }

    pub fn radius(self) -> usize {
        self.0 / 2
    }
}

impl Default for Kernel {
    fn default() -> Self {
        Kernel(3)
    }
}

impl TryFrom<usize> for Kernel {
    type Error = LadrError;

    fn try_from(size: usize) -> Result<Self> {
        Kernel::new(size)
    }
}

impl From<Kernel> for usize {
    fn from(k: Kernel) -> usize {
        k.0
    }
}

/// `height x width` boolean field; `true` marks a masked position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskGrid {
    height: usize,
    width: usize,
    cells: Vec<bool>,
}

impl MaskGrid {
    pub fn from_flat(mask: Vec<bool>, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(LadrError::InvalidInput(format!(
                "grid dimensions must be positive, got {height}x{width}"
            )));
        }
        if mask.len() != height * width {
            return Err(LadrError::InvalidInput(format!(
                "mask of length {} does not reshape to {height}x{width}",
                mask.len()
            )));
        }
        Ok(MaskGrid {
            height,
            width,
            cells: mask,
        })
    }

    pub fn filled(height: usize, width: usize, masked: bool) -> Result<Self> {
        MaskGrid::from_flat(vec![masked; height * width], height, width)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn to_flat(&self) -> &[bool] {
        &self.cells
    }

    pub fn into_flat(self) -> Vec<bool> {
        self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.width + col]
    }

    pub fn is_masked(&self, i: usize) -> bool {
        self.cells[i]
    }

    pub fn masked_count(&self) -> usize {
        self.cells.iter().filter(|&&m| m).count()
    }

    /// Dilation of the observed set (`!mask`) by `kernel`: a cell is set iff
    /// some observed cell lies in the `k x k` window centred on it.
    pub fn dilate_observed(&self, kernel: Kernel) -> MaskGrid {
        let (h, w, r) = (self.height, self.width, kernel.radius());
        // Separable: horizontal pass then vertical pass, each a windowed OR
        // evaluated with prefix sums.
        let mut horiz = vec![false; h * w];
        let mut prefix = vec![0u32; w.max(h) + 1];
        for row in 0..h {
            for col in 0..w {
                prefix[col + 1] = prefix[col] + u32::from(!self.cells[row * w + col]);
            }
            for col in 0..w {
                let lo = col.saturating_sub(r);
                let hi = (col + r + 1).min(w);
                horiz[row * w + col] = prefix[hi] > prefix[lo];
            }
        }
        let mut out = vec![false; h * w];
        for col in 0..w {
            for row in 0..h {
                prefix[row + 1] = prefix[row] + u32::from(horiz[row * w + col]);
            }
            for row in 0..h {
                let lo = row.saturating_sub(r);
                let hi = (row + r + 1).min(h);
                out[row * w + col] = prefix[hi] > prefix[lo];
            }
        }
        MaskGrid {
            height: h,
            width: w,
            cells: out,
        }
    }

    /// Masked cells with at least one observed cell inside their kernel window,
    /// in ascending flat-index order.
    pub fn frontier(&self, kernel: Kernel) -> Vec<usize> {
        let reach = self.dilate_observed(kernel);
        self.cells
            .iter()
            .zip(&reach.cells)
            .enumerate()
            .filter_map(|(i, (&masked, &near))| (masked && near).then_some(i))
            .collect()
    }

    /// Observed cells in the `k x k` window around `i`, excluding `i`.
    pub fn observed_neighbor_count(&self, i: usize, kernel: Kernel) -> Result<usize> {
        if i >= self.cells.len() {
            return Err(LadrError::InvalidInput(format!(
                "index {i} out of range for {}x{} grid",
                self.height, self.width
            )));
        }
        Ok(self.observed_in_window(i, kernel.radius()))
    }

    pub(crate) fn observed_in_window(&self, i: usize, r: usize) -> usize {
        let (row, col) = (i / self.width, i % self.width);
        let mut n = 0;
        for rr in row.saturating_sub(r)..(row + r + 1).min(self.height) {
            for cc in col.saturating_sub(r)..(col + r + 1).min(self.width) {
                let j = rr * self.width + cc;
                if j != i && !self.cells[j] {
                    n += 1;
                }
            }
        }
        n
    }

    /// Flat indices of the (up to four) edge-adjacent cells of `i`.
    pub fn four_neighbors(&self, i: usize) -> impl Iterator<Item = usize> {
        let (h, w) = (self.height, self.width);
        four_neighbors(h, w, i)
    }
}

pub(crate) fn four_neighbors(h: usize, w: usize, i: usize) -> impl Iterator<Item = usize> {
    let (row, col) = (i / w, i % w);
    let up = (row > 0).then(|| i - w);
    let down = (row + 1 < h).then(|| i + w);
    let left = (col > 0).then(|| i - 1);
    let right = (col + 1 < w).then(|| i + 1);
    [up, down, left, right].into_iter().flatten()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn k3() -> Kernel {
        Kernel::new(3).unwrap()
    }

    /// Per-cell window scan, independent of the separable dilation.
    fn naive_frontier(mask: &[bool], h: usize, w: usize, k: usize) -> Vec<usize> {
        let r = (k / 2) as isize;
        let mut out = Vec::new();
        for i in 0..h * w {
            if !mask[i] {
                continue;
            }
            let (row, col) = ((i / w) as isize, (i % w) as isize);
            let mut hit = false;
            for dr in -r..=r {
                for dc in -r..=r {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (rr, cc) = (row + dr, col + dc);
                    if rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w {
                        hit |= !mask[rr as usize * w + cc as usize];
                    }
                }
            }
            if hit {
                out.push(i);
            }
        }
        out
    }

    #[test]
    fn from_flat_row_major() {
        let g = MaskGrid::from_flat(vec![true, false, true, false], 2, 2).unwrap();
        assert!(g.get(0, 0) && !g.get(0, 1) && g.get(1, 0) && !g.get(1, 1));
        let all = MaskGrid::filled(3, 3, true).unwrap();
        assert_eq!(all.masked_count(), 9);
        assert!(matches!(
            MaskGrid::from_flat(vec![true, false, true], 2, 2),
            Err(LadrError::InvalidInput(_))
        ));
    }

    #[test]
    fn kernel_must_be_odd() {
        assert!(Kernel::new(0).is_err());
        assert!(Kernel::new(4).is_err());
        assert_eq!(Kernel::new(5).unwrap().radius(), 2);
    }

    #[test]
    fn dilation_examples() {
        let mut cells = vec![true; 9];
        cells[4] = false;
        let g = MaskGrid::from_flat(cells, 3, 3).unwrap();
        assert!(g.dilate_observed(k3()).to_flat().iter().all(|&b| b));

        let none = MaskGrid::filled(3, 3, true).unwrap();
        assert!(none.dilate_observed(k3()).to_flat().iter().all(|&b| !b));

        let row = MaskGrid::from_flat(vec![false, true, true, true], 1, 4).unwrap();
        assert_eq!(row.dilate_observed(k3()).to_flat(), &[true, true, false, false]);
    }

    #[test]
    fn frontier_examples() {
        let mut cells = vec![true; 9];
        cells[4] = false;
        let g = MaskGrid::from_flat(cells, 3, 3).unwrap();
        assert_eq!(g.frontier(k3()), vec![0, 1, 2, 3, 5, 6, 7, 8]);
        assert!(MaskGrid::filled(3, 3, true).unwrap().frontier(k3()).is_empty());
        assert!(MaskGrid::filled(3, 3, false).unwrap().frontier(k3()).is_empty());
    }

    #[test]
    fn neighbor_count_examples() {
        let mut cells = vec![false; 9];
        cells[4] = true;
        let g = MaskGrid::from_flat(cells, 3, 3).unwrap();
        assert_eq!(g.observed_neighbor_count(4, k3()).unwrap(), 8);
        let none = MaskGrid::filled(3, 3, true).unwrap();
        assert_eq!(none.observed_neighbor_count(0, k3()).unwrap(), 0);
        let row = MaskGrid::from_flat(vec![false, true, true, true], 1, 4).unwrap();
        assert_eq!(row.observed_neighbor_count(1, k3()).unwrap(), 1);
        assert!(matches!(
            row.observed_neighbor_count(4, k3()),
            Err(LadrError::InvalidInput(_))
        ));
    }

    #[test]
    fn four_neighbors_at_corner_and_center() {
        let g = MaskGrid::filled(3, 3, true).unwrap();
        let mut c: Vec<_> = g.four_neighbors(0).collect();
        c.sort();
        assert_eq!(c, vec![1, 3]);
        let mut m: Vec<_> = g.four_neighbors(4).collect();
        m.sort();
        assert_eq!(m, vec![1, 3, 5, 7]);
    }

    fn mask_strategy() -> impl Strategy<Value = (usize, usize, Vec<bool>, usize)> {
        (1usize..=32, 1usize..=32, prop_oneof![Just(1usize), Just(3), Just(5)]).prop_flat_map(
            |(h, w, k)| {
                (
                    Just(h),
                    Just(w),
                    proptest::collection::vec(any::<bool>(), h * w),
                    Just(k),
                )
            },
        )
    }

    proptest! {
        #[test]
        fn frontier_matches_window_scan((h, w, mask, k) in mask_strategy()) {
            let g = MaskGrid::from_flat(mask.clone(), h, w).unwrap();
            let kernel = Kernel::new(k).unwrap();
            let got = g.frontier(kernel);
            prop_assert_eq!(&got, &naive_frontier(&mask, h, w, k));
            prop_assert!(got.iter().all(|&i| mask[i]));
            let any_masked = mask.iter().any(|&m| m);
            let any_observed = mask.iter().any(|&m| !m);
            if k > 1 && h * w > 1 {
                // Emptiness only follows from the masked/observed split when
                // every cell has a neighbour inside the window.
                if !any_masked || !any_observed {
                    prop_assert!(got.is_empty());
                }
            }
            prop_assert_eq!(g.to_flat(), &mask[..]);
        }
    }

    #[test]
    fn frontier_empty_iff_degenerate_split_for_connected_grids() {
        // With a 3x3 kernel a grid that has both masked and observed cells must
        // have one masked cell touching an observed cell (the grid is 8-connected).
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let h = rng.gen_range(1..=12);
            let w = rng.gen_range(1..=12);
            let mask: Vec<bool> = (0..h * w).map(|_| rng.gen_bool(0.7)).collect();
            let g = MaskGrid::from_flat(mask.clone(), h, w).unwrap();
            let degenerate = mask.iter().all(|&m| m) || mask.iter().all(|&m| !m);
            assert_eq!(g.frontier(k3()).is_empty(), degenerate);
        }
    }
}
