//! Uniform hash grid for radius and nearest-neighbor queries.
//!
//! Ties on distance resolve to the lowest point index, so every query agrees
//! exactly with a linear scan.

use std::collections::HashMap;

use crate::cloud::squared_distance;

type Cell = [i64; 3];

#[derive(Clone, Debug)]
pub struct UniformGrid {
    dim: usize,
    cell_size: f64,
    points: Vec<f64>,
    cells: HashMap<Cell, Vec<usize>>,
    lo: Cell,
    hi: Cell,
}

impl UniformGrid {
    /// Indexes `points` (flat, `dim` values per point).
    pub fn new(dim: usize, points: &[f64], cell_size: f64) -> Self {
        assert!(cell_size > 0.0, "cell size must be positive");
        let mut cells: HashMap<Cell, Vec<usize>> = HashMap::new();
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        for (i, p) in points.chunks_exact(dim).enumerate() {
            let c = cell_of(dim, p, cell_size);
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
            cells.entry(c).or_default().push(i);
        }
        Self {
            dim,
            cell_size,
            points: points.to_vec(),
            cells,
            lo,
            hi,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Indices within `radius` of `q` (inclusive), ascending.
    pub fn within_radius(&self, q: &[f64], radius: f64) -> Vec<usize> {
        let r2 = radius * radius;
        let reach = (radius / self.cell_size).ceil() as i64;
        let c = cell_of(self.dim, q, self.cell_size);
        let mut out = Vec::new();
        self.visit_block(c, reach, |i| {
            if squared_distance(self.point(i), q) <= r2 {
                out.push(i);
            }
        });
        out.sort_unstable();
        out
    }

    /// Nearest point and its squared distance.
    pub fn nearest(&self, q: &[f64]) -> Option<(usize, f64)> {
        self.k_nearest(q, 1).into_iter().next()
    }

    /// Up to `k` nearest points sorted by (squared distance, index).
    pub fn k_nearest(&self, q: &[f64], k: usize) -> Vec<(usize, f64)> {
        if k == 0 || self.is_empty() {
            return Vec::new();
        }
        let k = k.min(self.len());
        let c = cell_of(self.dim, q, self.cell_size);
        let max_ring = (0..self.dim)
            .map(|a| (c[a] - self.lo[a]).abs().max((self.hi[a] - c[a]).abs()))
            .max()
            .unwrap_or(0);
        let mut best: Vec<(usize, f64)> = Vec::new();
        let mut ring = 0i64;
        loop {
            self.visit_ring(c, ring, |i| {
                best.push((i, squared_distance(self.point(i), q)));
            });
            best.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            best.truncate(k);
            // Unvisited points are strictly farther than ring * cell.
            let bound = ring as f64 * self.cell_size;
            if (best.len() == k && best[k - 1].1 <= bound * bound) || ring >= max_ring {
                break;
            }
            ring += 1;
        }
        best
    }

    fn visit_block(&self, c: Cell, reach: i64, mut f: impl FnMut(usize)) {
        let (rz_lo, rz_hi) = if self.dim == 3 { (-reach, reach) } else { (0, 0) };
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in rz_lo..=rz_hi {
                    if let Some(list) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        list.iter().for_each(|&i| f(i));
                    }
                }
            }
        }
    }

    fn visit_ring(&self, c: Cell, ring: i64, mut f: impl FnMut(usize)) {
        let (rz_lo, rz_hi) = if self.dim == 3 { (-ring, ring) } else { (0, 0) };
        for dx in -ring..=ring {
            for dy in -ring..=ring {
                for dz in rz_lo..=rz_hi {
                    if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                        continue;
                    }
                    if let Some(list) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        list.iter().for_each(|&i| f(i));
                    }
                }
            }
        }
    }
}

fn cell_of(dim: usize, p: &[f64], cell: f64) -> Cell {
    let mut c = [0i64; 3];
    for a in 0..dim {
        c[a] = (p[a] / cell).floor() as i64;
    }
    c
}

/// Growable grid for dart throwing: points are inserted one by one and the
/// query asks whether any stored point is strictly closer than a radius.
#[derive(Clone, Debug)]
pub struct InsertGrid {
    dim: usize,
    cell_size: f64,
    points: Vec<f64>,
    cells: HashMap<Cell, Vec<usize>>,
}

impl InsertGrid {
    pub fn new(dim: usize, cell_size: f64) -> Self {
        assert!(cell_size > 0.0, "cell size must be positive");
        Self {
            dim,
            cell_size,
            points: Vec::new(),
            cells: HashMap::new(),
        }
    }

    pub fn insert(&mut self, p: &[f64]) {
        let i = self.points.len() / self.dim;
        self.points.extend_from_slice(p);
        self.cells.entry(cell_of(self.dim, p, self.cell_size)).or_default().push(i);
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// True if some stored point lies at distance `< radius` from `q`.
    pub fn any_closer_than(&self, q: &[f64], radius: f64) -> bool {
        let r2 = radius * radius;
        let reach = (radius / self.cell_size).ceil() as i64;
        let c = cell_of(self.dim, q, self.cell_size);
        let rz = if self.dim == 3 { reach } else { 0 };
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -rz..=rz {
                    if let Some(list) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        for &i in list {
                            let p = &self.points[i * self.dim..(i + 1) * self.dim];
                            if squared_distance(p, q) < r2 {
                                return true;
                            }
                        }
                    }
                }
            }
        }
        false
    }
}

/// Dart throwing over candidate points in the given order: a candidate is
/// accepted when no accepted point (or point of `existing`) is closer than
/// `spacing`. Exhausting the candidates makes the result maximal.
pub fn poisson_select(dim: usize, points: &[f64], order: &[usize], spacing: f64, existing: &[f64]) -> Vec<usize> {
    let mut grid = InsertGrid::new(dim, spacing);
    for p in existing.chunks_exact(dim) {
        grid.insert(p);
    }
    let mut chosen = Vec::new();
    for &i in order {
        let p = &points[i * dim..(i + 1) * dim];
        if !grid.any_closer_than(p, spacing) {
            grid.insert(p);
            chosen.push(i);
        }
    }
    chosen
}

/// Linear-scan nearest neighbor with the same tie rule as the grid.
pub fn brute_force_nearest(dim: usize, points: &[f64], q: &[f64]) -> Option<(usize, f64)> {
    points
        .chunks_exact(dim)
        .enumerate()
        .map(|(i, p)| (i, squared_distance(p, q)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn random_points(rng: &mut RngStream, n: usize, dim: usize, extent: f64) -> Vec<f64> {
        (0..n * dim).map(|_| rng.range(-extent, extent)).collect()
    }

    #[test]
    fn nearest_matches_linear_scan() {
        let mut rng = RngStream::new(1, 0);
        for dim in [2, 3] {
            let pts = random_points(&mut rng, 300, dim, 5.0);
            let grid = UniformGrid::new(dim, &pts, 0.7);
            for _ in 0..200 {
                let q: Vec<f64> = (0..dim).map(|_| rng.range(-8.0, 8.0)).collect();
                assert_eq!(grid.nearest(&q), brute_force_nearest(dim, &pts, &q));
            }
        }
    }

    #[test]
    fn k_nearest_matches_sorted_scan() {
        let mut rng = RngStream::new(2, 0);
        let pts = random_points(&mut rng, 200, 2, 3.0);
        let grid = UniformGrid::new(2, &pts, 0.5);
        for _ in 0..50 {
            let q = [rng.range(-3.0, 3.0), rng.range(-3.0, 3.0)];
            let mut all: Vec<(usize, f64)> = pts
                .chunks_exact(2)
                .enumerate()
                .map(|(i, p)| (i, squared_distance(p, &q)))
                .collect();
            all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            all.truncate(8);
            assert_eq!(grid.k_nearest(&q, 8), all);
        }
    }

    #[test]
    fn radius_query_matches_scan() {
        let mut rng = RngStream::new(3, 0);
        let pts = random_points(&mut rng, 400, 3, 2.0);
        let grid = UniformGrid::new(3, &pts, 0.4);
        let q = [0.1, -0.2, 0.3];
        let expected: Vec<usize> = pts
            .chunks_exact(3)
            .enumerate()
            .filter(|(_, p)| squared_distance(p, &q) <= 1.0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(grid.within_radius(&q, 1.0), expected);
    }

    #[test]
    fn duplicate_points_prefer_lowest_index() {
        let pts = [1.0, 1.0, 1.0, 1.0, 0.0, 0.0];
        let grid = UniformGrid::new(2, &pts, 1.0);
        assert_eq!(grid.nearest(&[1.0, 1.0]), Some((0, 0.0)));
    }

    #[test]
    fn poisson_select_is_spaced_and_maximal() {
        let mut rng = RngStream::new(4, 0);
        let pts = random_points(&mut rng, 500, 2, 4.0);
        let order = rng.permutation(500);
        let chosen = poisson_select(2, &pts, &order, 0.6, &[]);
        for (a, &i) in chosen.iter().enumerate() {
            for &j in &chosen[a + 1..] {
                assert!(squared_distance(&pts[2 * i..2 * i + 2], &pts[2 * j..2 * j + 2]) >= 0.36);
            }
        }
        for p in pts.chunks_exact(2) {
            assert!(chosen.iter().any(|&i| squared_distance(&pts[2 * i..2 * i + 2], p) < 0.36));
        }
    }

    #[test]
    fn empty_grid() {
        let grid = UniformGrid::new(2, &[], 1.0);
        assert_eq!(grid.nearest(&[0.0, 0.0]), None);
    }
}
