//! Spatial hash with cell side equal to the interaction radius.

use std::collections::HashMap;

use crate::point::{self, Point};

type CellKey = [i64; 3];

#[derive(Clone, Debug)]
pub struct CellGrid {
    side: f64,
    dim: usize,
    cells: HashMap<CellKey, Vec<usize>>,
}

impl CellGrid {
    pub fn build(positions: &[Point], dim: usize, side: f64) -> Self {
        let mut cells: HashMap<CellKey, Vec<usize>> = HashMap::new();
        for (i, p) in positions.iter().enumerate() {
            cells.entry(Self::key(p, dim, side)).or_default().push(i);
        }
        Self { side, dim, cells }
    }

    #[inline]
    fn key(p: &Point, dim: usize, side: f64) -> CellKey {
        let mut k = [0i64; 3];
        for a in 0..dim {
            k[a] = (p[a] / side).floor() as i64;
        }
        k
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn occupied_cells(&self) -> usize {
        self.cells.len()
    }

    /// Members of the cell containing `p`.
    pub fn members(&self, p: &Point) -> &[usize] {
        self.cells
            .get(&Self::key(p, self.dim, self.side))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    fn offsets(&self) -> Vec<CellKey> {
        let span = |a: usize| if a < self.dim { -1..=1 } else { 0..=0 };
        let mut out = Vec::with_capacity(27);
        for dx in span(0) {
            for dy in span(1) {
                for dz in span(2) {
                    out.push([dx, dy, dz]);
                }
            }
        }
        out
    }

    /// All pairs `(i, j)`, `i < j`, at distance strictly below `radius`,
    /// sorted lexicographically. Requires `radius <= side`.
    pub fn pairs_within(&self, positions: &[Point], radius: f64) -> Vec<(usize, usize)> {
        debug_assert!(radius <= self.side);
        let offsets = self.offsets();
        let mut out = Vec::new();
        for (key, members) in &self.cells {
            for off in &offsets {
                let (Some(x), Some(y), Some(z)) = (
                    key[0].checked_add(off[0]),
                    key[1].checked_add(off[1]),
                    key[2].checked_add(off[2]),
                ) else {
                    continue;
                };
                let Some(others) = self.cells.get(&[x, y, z]) else {
                    continue;
                };
                for &a in members {
                    for &b in others {
                        if a < b && point::dist(&positions[a], &positions[b]) < radius {
                            out.push((a, b));
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// O(N²) reference enumeration.
pub fn brute_force_pairs(positions: &[Point], radius: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            if point::dist(&positions[i], &positions[j]) < radius {
                out.push((i, j));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn extreme_coordinates_do_not_overflow() {
        let pos: Vec<Point> = vec![[1e300, 0.0, 0.0], [1e300, 0.5, 0.0], [-1e300, 0.0, 0.0]];
        let g = CellGrid::build(&pos, 2, 1.0);
        assert_eq!(g.pairs_within(&pos, 1.0), vec![(0, 1)]);
    }

    #[test]
    fn every_particle_in_exactly_one_cell() {
        let pos: Vec<Point> = (0..50).map(|i| [i as f64 * 0.37 - 9.0, (i % 7) as f64 * -0.9, 0.0]).collect();
        let g = CellGrid::build(&pos, 2, 1.0);
        let mut seen = vec![0usize; pos.len()];
        for members in g.cells.values() {
            for &m in members {
                seen[m] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn distance_exactly_r_is_outside() {
        let pos = vec![[0.0; 3], [1.0, 0.0, 0.0]];
        let g = CellGrid::build(&pos, 1, 1.0);
        assert!(g.pairs_within(&pos, 1.0).is_empty());
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            dim in 1usize..=3,
            coords in prop::collection::vec(-4.0f64..4.0, 3 * 80),
        ) {
            let pos: Vec<Point> = coords
                .chunks(3)
                .map(|c| {
                    let mut p = [0.0; 3];
                    p[..dim].copy_from_slice(&c[..dim]);
                    p
                })
                .collect();
            let g = CellGrid::build(&pos, dim, 1.0);
            prop_assert_eq!(g.pairs_within(&pos, 1.0), brute_force_pairs(&pos, 1.0));
        }
    }
}
