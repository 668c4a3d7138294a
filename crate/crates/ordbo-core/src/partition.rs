//! Rank-induced hyperrectangle decomposition of the search space.
//!
//! A cell is identified by, per dimension, the pair of observation indices
//! whose coordinates bound it. That identity is durable: the original-space
//! box is fixed, while the latent box is re-derived from whatever warp state
//! is current, so a warp refit moves latent faces without touching cell
//! identity. Containment uses half-open faces (lower-inclusive), with the
//! topmost cell per dimension closed above.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionMode {
    Exhaustive,
    TreeSearch,
}

/// One rank-interval cell. `bounds[j] = (lo_idx, hi_idx)` are observation
/// indices with `x[lo_idx][j] < x[hi_idx][j]`.
#[derive(Debug, Clone)]
pub struct Cell {
    pub id: usize,
    pub bounds: Vec<(usize, usize)>,
    pub alive: bool,
    pub parent: Option<usize>,
}

/// Axis-aligned box, one (lo, hi) pair per dimension.
pub type BoxBounds<S> = Vec<(S, S)>;

#[derive(Debug, Clone)]
pub struct Partition<S> {
    pub mode: PartitionMode,
    cells: Vec<Cell>,
    dim: usize,
    alive_count: usize,
    _marker: std::marker::PhantomData<S>,
}

impl<S: Scalar> Partition<S> {
    /// Grid partition over the per-dimension sorted coordinates of `x`,
    /// giving (n-1)^d cells. The data must contain the domain extremes in
    /// every dimension (the harness guarantees this by adding the two
    /// domain corners to the initial design).
    pub fn build_exhaustive(x: &Mat<S>) -> Result<Self> {
        let n = x.nrows();
        let d = x.ncols();
        if n < 2 {
            return Err(Error::domain("exhaustive partition needs at least two points"));
        }
        // per-dimension observation indices sorted by coordinate
        let mut sorted: Vec<Vec<usize>> = Vec::with_capacity(d);
        for j in 0..d {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| x[(a, j)].partial_cmp(&x[(b, j)]).unwrap().then(a.cmp(&b)));
            for w in idx.windows(2) {
                if x[(w[0], j)] == x[(w[1], j)] {
                    return Err(Error::domain(format!(
                        "duplicate coordinate in dimension {j}: zero-width cell"
                    )));
                }
            }
            sorted.push(idx);
        }
        let per_dim = n - 1;
        let total = per_dim.pow(d as u32);
        let mut cells = Vec::with_capacity(total);
        for id in 0..total {
            let mut rest = id;
            let mut bounds = Vec::with_capacity(d);
            for j in 0..d {
                let k = rest % per_dim;
                rest /= per_dim;
                bounds.push((sorted[j][k], sorted[j][k + 1]));
            }
            cells.push(Cell { id, bounds, alive: true, parent: None });
        }
        Ok(Partition {
            mode: PartitionMode::Exhaustive,
            cells,
            dim: d,
            alive_count: total,
            _marker: std::marker::PhantomData,
        })
    }

    /// Same grid construction but flagged for tree-search maintenance.
    pub fn build_tree(x: &Mat<S>) -> Result<Self> {
        let mut p = Self::build_exhaustive(x)?;
        p.mode = PartitionMode::TreeSearch;
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_cells(&self) -> usize {
        self.alive_count
    }

    pub fn cell(&self, id: usize) -> Result<&Cell> {
        self.cells.get(id).ok_or_else(|| Error::internal(format!("no cell with id {id}")))
    }

    /// Alive cells in ascending id order.
    pub fn alive_cells(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(|c| c.alive)
    }

    /// Original-space box of a cell.
    pub fn original_box(&self, cell: &Cell, x: &Mat<S>) -> Result<BoxBounds<S>> {
        self.derive_box(cell, x)
    }

    /// Latent-space box of a cell under the current latent coordinates.
    /// Refitting the warp changes this box; the rank interval does not.
    pub fn latent_box(&self, cell: &Cell, latent: &Mat<S>) -> Result<BoxBounds<S>> {
        self.derive_box(cell, latent)
    }

    fn derive_box(&self, cell: &Cell, coords: &Mat<S>) -> Result<BoxBounds<S>> {
        let n = coords.nrows();
        let mut out = Vec::with_capacity(self.dim);
        for (j, &(lo_idx, hi_idx)) in cell.bounds.iter().enumerate() {
            if lo_idx >= n || hi_idx >= n {
                return Err(Error::internal("stale observation index in cell bounds"));
            }
            let lo = coords[(lo_idx, j)];
            let hi = coords[(hi_idx, j)];
            if !(lo < hi) {
                return Err(Error::internal(format!(
                    "degenerate cell bounds in dimension {j}: {lo:?} >= {hi:?}"
                )));
            }
            out.push((lo, hi));
        }
        Ok(out)
    }

    /// Splits `cell_id` at an interior point into 2^d children that share
    /// the corner `x_new` (observation index `new_idx`). Children are
    /// appended in ascending corner-mask order; the parent is retired.
    pub fn split_cell(&mut self, cell_id: usize, x: &Mat<S>, new_idx: usize) -> Result<Vec<usize>> {
        let cell = self.cell(cell_id)?.clone();
        if !cell.alive {
            return Err(Error::internal(format!("cell {cell_id} already split")));
        }
        let cell_box = self.original_box(&cell, x)?;
        for (j, &(lo, hi)) in cell_box.iter().enumerate() {
            let v = x[(new_idx, j)];
            if !(v > lo && v < hi) {
                return Err(Error::domain(format!(
                    "split point touches a cell face in dimension {j}"
                )));
            }
        }
        let d = self.dim;
        let mut child_ids = Vec::with_capacity(1 << d);
        for mask in 0..(1usize << d) {
            let mut bounds = Vec::with_capacity(d);
            for (j, &(lo_idx, hi_idx)) in cell.bounds.iter().enumerate() {
                if mask & (1 << j) == 0 {
                    bounds.push((lo_idx, new_idx));
                } else {
                    bounds.push((new_idx, hi_idx));
                }
            }
            let id = self.cells.len();
            self.cells.push(Cell { id, bounds, alive: true, parent: Some(cell_id) });
            child_ids.push(id);
        }
        self.cells[cell_id].alive = false;
        self.alive_count += (1 << d) - 1;
        Ok(child_ids)
    }

    /// The alive cell containing `probe` under the half-open convention.
    pub fn find_cell(&self, probe: &[S], x: &Mat<S>) -> Result<usize> {
        let mut found = None;
        for cell in self.alive_cells() {
            if self.contains(cell, probe, x)? {
                if found.is_some() {
                    return Err(Error::internal("probe contained in two cells"));
                }
                found = Some(cell.id);
            }
        }
        found.ok_or_else(|| Error::domain("probe outside every cell"))
    }

    fn contains(&self, cell: &Cell, probe: &[S], x: &Mat<S>) -> Result<bool> {
        let cell_box = self.original_box(cell, x)?;
        for (j, &(lo, hi)) in cell_box.iter().enumerate() {
            let v = probe[j];
            // topmost cell in a dimension owns its upper face
            let top = self.is_top_cell(cell, j, x);
            let inside = if top { v >= lo && v <= hi } else { v >= lo && v < hi };
            if !inside {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn is_top_cell(&self, cell: &Cell, j: usize, x: &Mat<S>) -> bool {
        let hi = x[(cell.bounds[j].1, j)];
        (0..x.nrows()).all(|i| x[(i, j)] <= hi)
    }

    /// Flat export: (cell id, per-dimension original bounds, per-dimension
    /// bounding observation indices) for every alive cell.
    pub fn export_table(&self, x: &Mat<S>) -> Result<Vec<(usize, BoxBounds<S>, Vec<(usize, usize)>)>> {
        let mut rows = Vec::with_capacity(self.alive_count);
        for cell in self.alive_cells() {
            rows.push((cell.id, self.original_box(cell, x)?, cell.bounds.clone()));
        }
        Ok(rows)
    }
}

/// Uniform sample strictly inside the cell's original-space box. Draws are
/// relative coordinates in (0, 1), so two runs whose cells coincide get the
/// same points from the same generator even if the raw coordinates differ.
/// Retries (up to 100) if a draw lands exactly on a face.
pub fn sample_in_cell<S: Scalar, R: Rng + ?Sized>(
    cell_box: &BoxBounds<S>,
    rng: &mut R,
) -> Result<Vec<S>> {
    for _ in 0..100 {
        let mut x = Vec::with_capacity(cell_box.len());
        let mut ok = true;
        for &(lo, hi) in cell_box {
            let u = S::unit_uniform(rng);
            let v = lo + u * (hi - lo);
            if !(v > lo && v < hi) {
                ok = false;
                break;
            }
            x.push(v);
        }
        if ok {
            return Ok(x);
        }
    }
    Err(Error::numerical("sample_in_cell exhausted retries on a degenerate box"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn grid_points(n: usize, d: usize, seed: u64) -> Mat<f64> {
        // random interior points plus the two domain corners
        let mut rng = crate::rng::derive_rng(seed, "partition-pts");
        let mut rows: Vec<Vec<f64>> = vec![vec![0.0; d], vec![1.0; d]];
        while rows.len() < n {
            rows.push((0..d).map(|_| rng.gen_range(0.05..0.95)).collect());
        }
        Mat::from_rows(&rows).unwrap()
    }

    #[test]
    fn exhaustive_counts() {
        let x = grid_points(5, 2, 1);
        let p = Partition::build_exhaustive(&x).unwrap();
        assert_eq!(p.n_cells(), 16);

        let x1 = Mat::from_rows(&[vec![0.0f64], vec![1.0]]).unwrap();
        let p1 = Partition::build_exhaustive(&x1).unwrap();
        assert_eq!(p1.n_cells(), 1);

        let x3 = grid_points(4, 3, 2);
        let p3 = Partition::build_exhaustive(&x3).unwrap();
        assert_eq!(p3.n_cells(), 27);
    }

    #[test]
    fn duplicate_coordinate_rejected() {
        let x = Mat::from_rows(&[vec![0.0f64, 0.0], vec![1.0, 1.0], vec![0.0, 0.5]]).unwrap();
        assert!(Partition::build_exhaustive(&x).is_err());
    }

    #[test]
    fn exhaustive_tiles_domain() {
        let mut rng = crate::rng::derive_rng(5, "partition-tile");
        let x = grid_points(4, 3, 3);
        let p = Partition::build_exhaustive(&x).unwrap();
        for _ in 0..2000 {
            let probe: Vec<f64> = (0..3).map(|_| rng.gen()).collect();
            p.find_cell(&probe, &x).unwrap();
        }
        // volumes of the 27 cells sum to the unit cube
        let mut vol = 0.0;
        for cell in p.alive_cells() {
            let b = p.original_box(cell, &x).unwrap();
            vol += b.iter().map(|&(lo, hi)| hi - lo).product::<f64>();
        }
        assert!((vol - 1.0).abs() < 1e-12);
    }

    #[test]
    fn split_counts_and_tiling() {
        for d in 1..=3usize {
            let n0 = 3;
            let mut x = grid_points(n0, d, 10 + d as u64);
            let mut p = Partition::build_tree(&x).unwrap();
            let before = p.n_cells();
            // split the cell containing an interior point
            let probe: Vec<f64> = vec![0.512345; d];
            let cid = p.find_cell(&probe, &x).unwrap();
            let parent_box = p.original_box(p.cell(cid).unwrap(), &x).unwrap();
            x.push_row(&probe);
            let children = p.split_cell(cid, &x, x.nrows() - 1).unwrap();
            assert_eq!(children.len(), 1 << d);
            assert_eq!(p.n_cells(), before + (1 << d) - 1);
            // children tile the parent
            let mut vol = 0.0;
            for &c in &children {
                let b = p.original_box(p.cell(c).unwrap(), &x).unwrap();
                vol += b.iter().map(|&(lo, hi)| hi - lo).product::<f64>();
            }
            let pv: f64 = parent_box.iter().map(|&(lo, hi)| hi - lo).product();
            assert!((vol - pv).abs() < 1e-12);
        }
    }

    #[test]
    fn split_rejects_face_point() {
        let x0 = grid_points(3, 2, 77);
        let mut p = Partition::build_tree(&x0).unwrap();
        let cid = p.find_cell(&[0.5, 0.5], &x0).unwrap();
        let cell_box = p.original_box(p.cell(cid).unwrap(), &x0).unwrap();
        let mut x = x0.clone();
        // point on the lower face of dimension 0
        x.push_row(&[cell_box[0].0, 0.5 * (cell_box[1].0 + cell_box[1].1)]);
        assert!(p.split_cell(cid, &x, x.nrows() - 1).is_err());
    }

    #[test]
    fn count_formulas_along_insertion_sequences() {
        let mut rng = crate::rng::derive_rng(21, "partition-seq");
        for d in 1..=3usize {
            let n_init = 3;
            let mut x = grid_points(n_init, d, 40 + d as u64);
            let mut tree = Partition::build_tree(&x).unwrap();
            for step in 0..8 {
                // insert a random point inside a random alive cell
                let ids: Vec<usize> = tree.alive_cells().map(|c| c.id).collect();
                let cid = ids[rng.gen_range(0..ids.len())];
                let b = tree.original_box(tree.cell(cid).unwrap(), &x).unwrap();
                let pt = sample_in_cell(&b, &mut rng).unwrap();
                x.push_row(&pt);
                tree.split_cell(cid, &x, x.nrows() - 1).unwrap();
                let n = n_init + step + 1;
                let expect_tree = (n_init - 1).pow(d as u32) + (n - n_init) * ((1 << d) - 1);
                assert_eq!(tree.n_cells(), expect_tree, "tree count at n={n}, d={d}");
                let fresh = Partition::<f64>::build_exhaustive(&x).unwrap();
                assert_eq!(fresh.n_cells(), (n - 1).pow(d as u32), "exhaustive count");
            }
        }
    }

    #[test]
    fn latent_box_follows_warp() {
        use crate::warp::{RankedDataset, WarpState};
        let x = grid_points(4, 2, 8);
        let y = vec![3.0f64, 1.0, 2.0, 4.0];
        let ds = RankedDataset::new(x.clone(), y).unwrap();
        let p = Partition::build_exhaustive(&x).unwrap();

        // all free deltas one: latent bounds are integer rank positions
        let mut w = WarpState::<f64>::init(4, 2).unwrap();
        for j in 0..2 {
            for i in 1..4 {
                w.input_deltas[j][i] = 1.0;
            }
        }
        let (s, _) = w.latent_coordinates(&ds).unwrap();
        for cell in p.alive_cells() {
            let lb = p.latent_box(cell, &s).unwrap();
            for &(lo, hi) in &lb {
                assert_eq!(lo.fract(), 0.0);
                assert_eq!(hi.fract(), 0.0);
                assert_eq!(hi - lo, 1.0); // adjacent ranks
            }
        }

        // a refit moves the latent faces of unchanged rank intervals
        let mut w2 = w.clone();
        w2.input_deltas[0][2] = 2.5;
        let (s2, _) = w2.latent_coordinates(&ds).unwrap();
        let mut changed = 0;
        for cell in p.alive_cells() {
            let b1 = p.latent_box(cell, &s).unwrap();
            let b2 = p.latent_box(cell, &s2).unwrap();
            if b1 != b2 {
                changed += 1;
            }
        }
        assert!(changed > 0);
    }

    #[test]
    fn rank_adjacent_cells_share_faces() {
        let x = grid_points(4, 2, 12);
        let p = Partition::build_exhaustive(&x).unwrap();
        let mut shares = 0;
        let cells: Vec<&Cell> = p.alive_cells().collect();
        for a in &cells {
            for b in &cells {
                if a.id >= b.id {
                    continue;
                }
                // adjacency in dimension 0 while matching in dimension 1
                if a.bounds[1] == b.bounds[1] && a.bounds[0].1 == b.bounds[0].0 {
                    let ba = p.original_box(a, &x).unwrap();
                    let bb = p.original_box(b, &x).unwrap();
                    assert_eq!(ba[0].1, bb[0].0);
                    shares += 1;
                }
            }
        }
        assert!(shares > 0);
    }

    #[test]
    fn sample_in_cell_contract() {
        let cell_box = vec![(0.0f64, 1.0)];
        let mut rng = crate::rng::derive_rng(9, "cell-sample");
        let x = sample_in_cell(&cell_box, &mut rng).unwrap();
        let mut rng2 = crate::rng::derive_rng(9, "cell-sample");
        let x2 = sample_in_cell(&cell_box, &mut rng2).unwrap();
        assert_eq!(x[0].to_bits(), x2[0].to_bits());

        let b2 = vec![(0.25f64, 0.5), (-1.0, 3.0)];
        let mut mean = [0.0f64; 2];
        let n = 100_000;
        for _ in 0..n {
            let p = sample_in_cell(&b2, &mut rng).unwrap();
            assert!(p[0] > 0.25 && p[0] < 0.5 && p[1] > -1.0 && p[1] < 3.0);
            mean[0] += p[0];
            mean[1] += p[1];
        }
        mean[0] /= n as f64;
        mean[1] /= n as f64;
        // 3 sigma of the uniform-mean estimator
        let se0 = 0.25 / 12f64.sqrt() / (n as f64).sqrt();
        let se1 = 4.0 / 12f64.sqrt() / (n as f64).sqrt();
        assert!((mean[0] - 0.375).abs() < 3.0 * se0);
        assert!((mean[1] - 1.0).abs() < 3.0 * se1);
    }

    #[test]
    fn containment_determined_by_ranks() {
        // the containing cell can be recomputed from the per-dimension ranks
        // of the probe among existing observations
        let x = grid_points(5, 2, 30);
        let p = Partition::build_exhaustive(&x).unwrap();
        let mut rng = crate::rng::derive_rng(31, "rank-containment");
        for _ in 0..200 {
            let probe: Vec<f64> = (0..2).map(|_| rng.gen()).collect();
            let cid = p.find_cell(&probe, &x).unwrap();
            let cell = p.cell(cid).unwrap();
            for j in 0..2 {
                let below = (0..x.nrows()).filter(|&i| x[(i, j)] <= probe[j]).count();
                // the lower bound observation is the below-th sorted value
                let mut col: Vec<f64> = (0..x.nrows()).map(|i| x[(i, j)]).collect();
                col.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let lo = x[(cell.bounds[j].0, j)];
                let expected_lo = col[below.saturating_sub(1).min(x.nrows() - 2)];
                assert_eq!(lo, expected_lo);
            }
        }
    }
}
