//! Structured fine and coarse grids, oversampled blocks, and element coloring.
//!
//! Cells are unit-aspect squares indexed row major from the bottom-left
//! corner. Edges split into a vertical family (normal along +x) and a
//! horizontal family (normal along +y); a signed flux on an edge is positive
//! in the direction of increasing coordinate. The coarse grid partitions the
//! fine cells into rectangular elements; an oversampled block extends an
//! element by a fixed number of fine-cell layers, clipped at the domain
//! boundary.

use crate::error::Error;
use crate::Result;

/// Domain side, used to classify boundary edges and boundary conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    /// All four sides in the fixed bottom, right, top, left traversal order.
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Right, Side::Top, Side::Left];
}

/// Uniform rectangular grid of square cells.
#[derive(Debug, Clone)]
pub struct FineGrid {
    nx: usize,
    ny: usize,
    h: f64,
}

impl FineGrid {
    /// Grid of `nx` by `ny` cells covering `[0, lx] x [0, ly]`.
    ///
    /// The extents must yield square cells: `lx / nx == ly / ny` up to a
    /// relative tolerance of 1e-12.
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::config("grid must have at least one cell per axis"));
        }
        if !(lx > 0.0) || !(ly > 0.0) {
            return Err(Error::config("domain extents must be positive"));
        }
        let hx = lx / nx as f64;
        let hy = ly / ny as f64;
        if (hx - hy).abs() > 1e-12 * hx.max(hy) {
            return Err(Error::config(format!(
                "cells must be square: {nx}x{ny} over {lx}x{ly} gives hx={hx}, hy={hy}"
            )));
        }
        Ok(FineGrid { nx, ny, h: hx })
    }

    /// Grid with cell size `1 / nx`, so an `nx` by `nx` grid covers the unit
    /// square and other aspect ratios shrink or extend the y extent.
    pub fn unit(nx: usize, ny: usize) -> Result<Self> {
        Self::new(nx, ny, 1.0, ny as f64 / nx as f64)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Cell side length.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Cell area `h^2`.
    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    /// Count of vertical edges.
    pub fn n_vertical_edges(&self) -> usize {
        (self.nx + 1) * self.ny
    }

    /// Total edge count over both families.
    pub fn n_edges(&self) -> usize {
        (self.nx + 1) * self.ny + self.nx * (self.ny + 1)
    }

    /// Row-major cell id.
    #[inline]
    pub fn cell(&self, ix: usize, iy: usize) -> usize {
        debug_assert!(ix < self.nx && iy < self.ny);
        iy * self.nx + ix
    }

    /// Inverse of [`FineGrid::cell`].
    #[inline]
    pub fn cell_xy(&self, t: usize) -> (usize, usize) {
        (t % self.nx, t / self.nx)
    }

    /// Cell-center coordinates.
    pub fn cell_center(&self, t: usize) -> (f64, f64) {
        let (ix, iy) = self.cell_xy(t);
        ((ix as f64 + 0.5) * self.h, (iy as f64 + 0.5) * self.h)
    }

    /// Vertical edge between columns `ix - 1` and `ix` at row `iy`.
    #[inline]
    pub fn vertical_edge(&self, ix: usize, iy: usize) -> usize {
        debug_assert!(ix <= self.nx && iy < self.ny);
        iy * (self.nx + 1) + ix
    }

    /// Horizontal edge between rows `iy - 1` and `iy` at column `ix`.
    #[inline]
    pub fn horizontal_edge(&self, ix: usize, iy: usize) -> usize {
        debug_assert!(ix < self.nx && iy <= self.ny);
        self.n_vertical_edges() + iy * self.nx + ix
    }

    /// Whether the edge belongs to the vertical family.
    #[inline]
    pub fn is_vertical(&self, e: usize) -> bool {
        e < self.n_vertical_edges()
    }

    /// Lattice coordinates of an edge within its family.
    #[inline]
    pub fn edge_xy(&self, e: usize) -> (usize, usize) {
        if self.is_vertical(e) {
            (e % (self.nx + 1), e / (self.nx + 1))
        } else {
            let k = e - self.n_vertical_edges();
            (k % self.nx, k / self.nx)
        }
    }

    /// Cells on the negative and positive side of the edge's normal.
    ///
    /// A `None` marks the domain boundary; interior edges have both.
    pub fn edge_cells(&self, e: usize) -> (Option<usize>, Option<usize>) {
        let (ix, iy) = self.edge_xy(e);
        if self.is_vertical(e) {
            let neg = (ix > 0).then(|| self.cell(ix - 1, iy));
            let pos = (ix < self.nx).then(|| self.cell(ix, iy));
            (neg, pos)
        } else {
            let neg = (iy > 0).then(|| self.cell(ix, iy - 1));
            let pos = (iy < self.ny).then(|| self.cell(ix, iy));
            (neg, pos)
        }
    }

    /// The four edges of a cell as `[left, right, bottom, top]`.
    pub fn cell_edges(&self, t: usize) -> [usize; 4] {
        let (ix, iy) = self.cell_xy(t);
        [
            self.vertical_edge(ix, iy),
            self.vertical_edge(ix + 1, iy),
            self.horizontal_edge(ix, iy),
            self.horizontal_edge(ix, iy + 1),
        ]
    }

    /// Outward sign of the edge's global orientation for cell `t`.
    ///
    /// Positive when the +x/+y direction points out of `t`, so that
    /// `sign * flux` is the outflow through the edge.
    pub fn outward_sign(&self, t: usize, e: usize) -> f64 {
        let (neg, pos) = self.edge_cells(e);
        if neg == Some(t) {
            1.0
        } else {
            debug_assert_eq!(pos, Some(t));
            -1.0
        }
    }

    /// Domain side of a boundary edge, `None` for interior edges.
    pub fn boundary_side(&self, e: usize) -> Option<Side> {
        let (ix, iy) = self.edge_xy(e);
        if self.is_vertical(e) {
            if ix == 0 {
                Some(Side::Left)
            } else if ix == self.nx {
                Some(Side::Right)
            } else {
                None
            }
        } else if iy == 0 {
            Some(Side::Bottom)
        } else if iy == self.ny {
            Some(Side::Top)
        } else {
            None
        }
    }

    /// Midpoint coordinates of an edge.
    pub fn edge_midpoint(&self, e: usize) -> (f64, f64) {
        let (ix, iy) = self.edge_xy(e);
        if self.is_vertical(e) {
            (ix as f64 * self.h, (iy as f64 + 0.5) * self.h)
        } else {
            ((ix as f64 + 0.5) * self.h, iy as f64 * self.h)
        }
    }

    /// Boundary edges of one side with ascending coordinate.
    pub fn side_edges(&self, side: Side) -> Vec<usize> {
        match side {
            Side::Bottom => (0..self.nx).map(|ix| self.horizontal_edge(ix, 0)).collect(),
            Side::Right => (0..self.ny)
                .map(|iy| self.vertical_edge(self.nx, iy))
                .collect(),
            Side::Top => (0..self.nx)
                .map(|ix| self.horizontal_edge(ix, self.ny))
                .collect(),
            Side::Left => (0..self.ny).map(|iy| self.vertical_edge(0, iy)).collect(),
        }
    }

    /// All boundary edges in the fixed bottom, right, top, left order with
    /// ascending coordinate within each side.
    pub fn boundary_edges_ordered(&self) -> Vec<usize> {
        Side::ALL
            .iter()
            .flat_map(|&s| self.side_edges(s))
            .collect()
    }
}

/// Partition of a fine grid into rectangular coarse elements.
#[derive(Debug, Clone)]
pub struct CoarseGrid {
    nx: usize,
    ny: usize,
    mx: usize,
    my: usize,
}

impl CoarseGrid {
    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Fine cells per element along x.
    pub fn cells_x(&self) -> usize {
        self.mx
    }

    /// Fine cells per element along y.
    pub fn cells_y(&self) -> usize {
        self.my
    }

    pub fn n_elements(&self) -> usize {
        self.nx * self.ny
    }

    /// Row-major element id.
    #[inline]
    pub fn element(&self, ex: usize, ey: usize) -> usize {
        debug_assert!(ex < self.nx && ey < self.ny);
        ey * self.nx + ex
    }

    #[inline]
    pub fn element_xy(&self, el: usize) -> (usize, usize) {
        (el % self.nx, el / self.nx)
    }
}

/// A fine grid together with its coarse partition.
#[derive(Debug, Clone)]
pub struct GridHierarchy {
    fine: FineGrid,
    coarse: CoarseGrid,
}

impl GridHierarchy {
    /// Couples a fine grid with a `coarse_nx` by `coarse_ny` element grid.
    ///
    /// Fine dimensions must be divisible by the coarse ones.
    pub fn new(fine: FineGrid, coarse_nx: usize, coarse_ny: usize) -> Result<Self> {
        if coarse_nx == 0 || coarse_ny == 0 {
            return Err(Error::config("coarse grid must have at least one element"));
        }
        if fine.nx() % coarse_nx != 0 || fine.ny() % coarse_ny != 0 {
            return Err(Error::config(format!(
                "coarse grid {coarse_nx}x{coarse_ny} does not divide fine grid {}x{}",
                fine.nx(),
                fine.ny()
            )));
        }
        let coarse = CoarseGrid {
            nx: coarse_nx,
            ny: coarse_ny,
            mx: fine.nx() / coarse_nx,
            my: fine.ny() / coarse_ny,
        };
        Ok(GridHierarchy { fine, coarse })
    }

    pub fn fine(&self) -> &FineGrid {
        &self.fine
    }

    pub fn coarse(&self) -> &CoarseGrid {
        &self.coarse
    }

    pub fn n_elements(&self) -> usize {
        self.coarse.n_elements()
    }

    /// Fine-cell rectangle `(x0, y0, w, h)` covered by an element.
    pub fn element_rect(&self, el: usize) -> (usize, usize, usize, usize) {
        let (ex, ey) = self.coarse.element_xy(el);
        (
            ex * self.coarse.mx,
            ey * self.coarse.my,
            self.coarse.mx,
            self.coarse.my,
        )
    }

    /// Fine cells of an element, row major within the element.
    pub fn element_cells(&self, el: usize) -> Vec<usize> {
        let (x0, y0, w, h) = self.element_rect(el);
        let mut cells = Vec::with_capacity(w * h);
        for iy in y0..y0 + h {
            for ix in x0..x0 + w {
                cells.push(self.fine.cell(ix, iy));
            }
        }
        cells
    }

    /// Position of a fine cell within [`GridHierarchy::element_cells`] order.
    pub fn local_cell_index(&self, el: usize, cell: usize) -> usize {
        let (x0, y0, w, _) = self.element_rect(el);
        let (ix, iy) = self.fine.cell_xy(cell);
        (iy - y0) * w + (ix - x0)
    }

    /// Element containing a fine cell.
    pub fn element_of_cell(&self, cell: usize) -> usize {
        let (ix, iy) = self.fine.cell_xy(cell);
        self.coarse
            .element(ix / self.coarse.mx, iy / self.coarse.my)
    }

    /// Fine edges strictly inside an element.
    pub fn element_interior_edges(&self, el: usize) -> Vec<usize> {
        let (x0, y0, w, h) = self.element_rect(el);
        let mut edges = Vec::with_capacity((w - 1) * h + w * (h - 1));
        for iy in y0..y0 + h {
            for ix in x0 + 1..x0 + w {
                edges.push(self.fine.vertical_edge(ix, iy));
            }
        }
        for iy in y0 + 1..y0 + h {
            for ix in x0..x0 + w {
                edges.push(self.fine.horizontal_edge(ix, iy));
            }
        }
        edges
    }

    /// Fine edges on the element boundary, bottom/right/top/left order with
    /// ascending coordinate within each side.
    pub fn element_boundary_edges(&self, el: usize) -> Vec<usize> {
        let (x0, y0, w, h) = self.element_rect(el);
        let mut edges = Vec::with_capacity(2 * (w + h));
        for ix in x0..x0 + w {
            edges.push(self.fine.horizontal_edge(ix, y0));
        }
        for iy in y0..y0 + h {
            edges.push(self.fine.vertical_edge(x0 + w, iy));
        }
        for ix in x0..x0 + w {
            edges.push(self.fine.horizontal_edge(ix, y0 + h));
        }
        for iy in y0..y0 + h {
            edges.push(self.fine.vertical_edge(x0, iy));
        }
        edges
    }

    /// Edge-sharing neighbor elements (up to four).
    pub fn element_neighbors(&self, el: usize) -> Vec<usize> {
        let (ex, ey) = self.coarse.element_xy(el);
        let mut out = Vec::with_capacity(4);
        if ex > 0 {
            out.push(self.coarse.element(ex - 1, ey));
        }
        if ex + 1 < self.coarse.nx {
            out.push(self.coarse.element(ex + 1, ey));
        }
        if ey > 0 {
            out.push(self.coarse.element(ex, ey - 1));
        }
        if ey + 1 < self.coarse.ny {
            out.push(self.coarse.element(ex, ey + 1));
        }
        out
    }

    /// Fine edges on the interface between two edge-adjacent elements, each
    /// with its adjacent cell in `a` and in `b`.
    pub fn interface_edges(&self, a: usize, b: usize) -> Vec<(usize, usize, usize)> {
        let (ax, ay) = self.coarse.element_xy(a);
        let (bx, by) = self.coarse.element_xy(b);
        let (mx, my) = (self.coarse.mx, self.coarse.my);
        let mut out = Vec::new();
        if ay == by && (ax + 1 == bx || bx + 1 == ax) {
            let xf = ax.max(bx) * mx;
            for iy in ay * my..(ay + 1) * my {
                let e = self.fine.vertical_edge(xf, iy);
                let left = self.fine.cell(xf - 1, iy);
                let right = self.fine.cell(xf, iy);
                if ax < bx {
                    out.push((e, left, right));
                } else {
                    out.push((e, right, left));
                }
            }
        } else if ax == bx && (ay + 1 == by || by + 1 == ay) {
            let yf = ay.max(by) * my;
            for ix in ax * mx..(ax + 1) * mx {
                let e = self.fine.horizontal_edge(ix, yf);
                let below = self.fine.cell(ix, yf - 1);
                let above = self.fine.cell(ix, yf);
                if ay < by {
                    out.push((e, below, above));
                } else {
                    out.push((e, above, below));
                }
            }
        }
        out
    }

    /// Four independent element classes by the parity of 1-based indices:
    /// odd/odd, odd/even, even/odd, even/even. No two elements within a class
    /// share a coarse edge.
    pub fn four_coloring(&self) -> [Vec<usize>; 4] {
        let mut classes: [Vec<usize>; 4] = Default::default();
        for el in 0..self.coarse.n_elements() {
            let (ex, ey) = self.coarse.element_xy(el);
            let i_odd = (ex + 1) % 2 == 1;
            let j_odd = (ey + 1) % 2 == 1;
            let class = match (i_odd, j_odd) {
                (true, true) => 0,
                (true, false) => 1,
                (false, true) => 2,
                (false, false) => 3,
            };
            classes[class].push(el);
        }
        classes
    }

    /// Oversampled block around an element, clipped at the domain boundary.
    pub fn oversample(&self, el: usize, layers: usize) -> OversampledBlock {
        let (x0, y0, w, h) = self.element_rect(el);
        let bx0 = x0.saturating_sub(layers);
        let by0 = y0.saturating_sub(layers);
        let bx1 = (x0 + w + layers).min(self.fine.nx());
        let by1 = (y0 + h + layers).min(self.fine.ny());
        let (bw, bh) = (bx1 - bx0, by1 - by0);
        let grid = FineGrid {
            nx: bw,
            ny: bh,
            h: self.fine.h(),
        };
        let mut global_cells = Vec::with_capacity(bw * bh);
        for iy in by0..by1 {
            for ix in bx0..bx1 {
                global_cells.push(self.fine.cell(ix, iy));
            }
        }
        let mut target_local_cells = Vec::with_capacity(w * h);
        for iy in y0..y0 + h {
            for ix in x0..x0 + w {
                target_local_cells.push((iy - by0) * bw + (ix - bx0));
            }
        }
        let boundary_edges_local = grid.boundary_edges_ordered();
        OversampledBlock {
            element: el,
            layers,
            x0: bx0,
            y0: by0,
            grid,
            global_cells,
            target_local_cells,
            boundary_edges_local,
        }
    }
}

/// An element extended by fine-cell layers, with local/global cell maps.
#[derive(Debug, Clone)]
pub struct OversampledBlock {
    /// Element this block oversamples.
    pub element: usize,
    /// Requested layer count (the block may be clipped at the boundary).
    pub layers: usize,
    /// Fine-cell origin of the block.
    pub x0: usize,
    /// Fine-cell origin of the block.
    pub y0: usize,
    /// Local grid over the block cells (same cell size as the fine grid).
    pub grid: FineGrid,
    /// Global fine cell per local cell, in local row-major order.
    pub global_cells: Vec<usize>,
    /// Local cells of the target element, in element row-major order.
    pub target_local_cells: Vec<usize>,
    /// Local boundary edges in the fixed bottom/right/top/left order; one
    /// snapshot column is built per entry.
    pub boundary_edges_local: Vec<usize>,
}

impl OversampledBlock {
    /// Number of snapshot columns the block supports.
    pub fn n_columns(&self) -> usize {
        self.boundary_edges_local.len()
    }

    /// Local cell id of a global fine cell inside the block.
    pub fn local_cell(&self, fine: &FineGrid, cell: usize) -> Option<usize> {
        let (ix, iy) = fine.cell_xy(cell);
        let nx = self.grid.nx();
        let ny = self.grid.ny();
        if ix < self.x0 || iy < self.y0 || ix >= self.x0 + nx || iy >= self.y0 + ny {
            return None;
        }
        Some((iy - self.y0) * nx + (ix - self.x0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hier(nx: usize, ny: usize, cx: usize, cy: usize) -> GridHierarchy {
        GridHierarchy::new(FineGrid::unit(nx, ny).unwrap(), cx, cy).unwrap()
    }

    #[test]
    fn edge_count_identity() {
        for (nx, ny) in [(1, 1), (4, 4), (7, 3), (100, 100), (220, 60)] {
            let g = FineGrid::new(nx, ny, nx as f64, ny as f64).unwrap();
            assert_eq!(g.n_edges(), nx * (ny + 1) + (nx + 1) * ny);
        }
    }

    #[test]
    fn edge_cell_adjacency_is_consistent() {
        let g = FineGrid::unit(5, 3).unwrap();
        for e in 0..g.n_edges() {
            let (neg, pos) = g.edge_cells(e);
            assert!(neg.is_some() || pos.is_some());
            for t in [neg, pos].into_iter().flatten() {
                assert!(g.cell_edges(t).contains(&e));
            }
            if neg.is_some() && pos.is_some() {
                assert!(g.boundary_side(e).is_none());
            } else {
                assert!(g.boundary_side(e).is_some());
            }
        }
        for t in 0..g.n_cells() {
            for e in g.cell_edges(t) {
                let (neg, pos) = g.edge_cells(e);
                assert!(neg == Some(t) || pos == Some(t));
            }
        }
    }

    #[test]
    fn outward_signs_oppose_across_interior_edges() {
        let g = FineGrid::unit(4, 4).unwrap();
        for e in 0..g.n_edges() {
            if let (Some(a), Some(b)) = g.edge_cells(e) {
                assert_eq!(g.outward_sign(a, e), 1.0);
                assert_eq!(g.outward_sign(b, e), -1.0);
            }
        }
    }

    #[test]
    fn element_cells_partition_the_grid() {
        let h = hier(12, 8, 3, 2);
        let mut seen = vec![false; h.fine().n_cells()];
        for el in 0..h.coarse().n_elements() {
            for c in h.element_cells(el) {
                assert!(!seen[c], "cell {c} in two elements");
                seen[c] = true;
                assert_eq!(h.element_of_cell(c), el);
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn element_edge_counts_match_rectangle_formulas() {
        let h = hier(20, 20, 4, 5);
        let (mx, my) = (h.coarse().cells_x(), h.coarse().cells_y());
        for el in [0, 7, 19] {
            assert_eq!(
                h.element_interior_edges(el).len(),
                (mx - 1) * my + mx * (my - 1)
            );
            assert_eq!(h.element_boundary_edges(el).len(), 2 * (mx + my));
        }
    }

    #[test]
    fn interface_edges_are_symmetric_and_oriented() {
        let h = hier(8, 8, 2, 2);
        for a in 0..h.coarse().n_elements() {
            for b in h.element_neighbors(a) {
                let ab = h.interface_edges(a, b);
                let ba = h.interface_edges(b, a);
                assert_eq!(ab.len(), 4);
                for ((e1, ca, cb), (e2, cb2, ca2)) in ab.iter().zip(&ba) {
                    assert_eq!(e1, e2);
                    assert_eq!(ca, ca2);
                    assert_eq!(cb, cb2);
                    assert_eq!(h.element_of_cell(*ca), a);
                    assert_eq!(h.element_of_cell(*cb), b);
                }
            }
        }
    }

    #[test]
    fn oversample_interior_and_clipped_blocks() {
        let h = hier(100, 100, 10, 10);
        let interior = h.oversample(h.coarse().element(5, 5), 2);
        assert_eq!((interior.grid.nx(), interior.grid.ny()), (14, 14));
        assert_eq!(interior.n_columns(), 56);
        let corner = h.oversample(0, 2);
        assert_eq!((corner.grid.nx(), corner.grid.ny()), (12, 12));
        assert_eq!(corner.n_columns(), 48);
        assert_eq!((corner.x0, corner.y0), (0, 0));
        let zero = h.oversample(33, 0);
        assert_eq!((zero.grid.nx(), zero.grid.ny()), (10, 10));
        assert_eq!(zero.n_columns(), 40);
    }

    #[test]
    fn oversample_cell_maps_are_mutually_inverse() {
        let h = hier(30, 30, 10, 10);
        let b = h.oversample(h.coarse().element(4, 7), 2);
        for (local, &global) in b.global_cells.iter().enumerate() {
            assert_eq!(b.local_cell(h.fine(), global), Some(local));
        }
        let cells = h.element_cells(b.element);
        for (k, &lc) in b.target_local_cells.iter().enumerate() {
            assert_eq!(b.global_cells[lc], cells[k]);
        }
    }

    #[test]
    fn boundary_edge_order_walks_bottom_right_top_left() {
        let g = FineGrid::unit(3, 2).unwrap();
        let edges = g.boundary_edges_ordered();
        assert_eq!(edges.len(), 10);
        let sides: Vec<_> = edges.iter().map(|&e| g.boundary_side(e).unwrap()).collect();
        assert_eq!(
            sides,
            vec![
                Side::Bottom,
                Side::Bottom,
                Side::Bottom,
                Side::Right,
                Side::Right,
                Side::Top,
                Side::Top,
                Side::Top,
                Side::Left,
                Side::Left,
            ]
        );
        let mids: Vec<_> = edges.iter().map(|&e| g.edge_midpoint(e)).collect();
        assert!(mids[0].0 < mids[1].0 && mids[1].0 < mids[2].0);
        assert!(mids[3].1 < mids[4].1);
        assert!(mids[8].1 < mids[9].1);
    }

    #[test]
    fn four_coloring_matches_parity_examples() {
        let h22 = hier(4, 4, 2, 2);
        let classes = h22.four_coloring();
        assert_eq!(classes[0], vec![h22.coarse().element(0, 0)]);
        assert_eq!(classes[1], vec![h22.coarse().element(0, 1)]);
        assert_eq!(classes[2], vec![h22.coarse().element(1, 0)]);
        assert_eq!(classes[3], vec![h22.coarse().element(1, 1)]);

        let h32 = hier(6, 4, 3, 2);
        let sizes: Vec<_> = h32.four_coloring().iter().map(|c| c.len()).collect();
        assert_eq!(sizes, vec![2, 2, 1, 1]);

        let h10 = hier(100, 100, 10, 10);
        for class in h10.four_coloring() {
            assert_eq!(class.len(), 25);
        }
    }

    #[test]
    fn same_color_elements_never_share_an_interface() {
        let h = hier(12, 12, 4, 4);
        for class in h.four_coloring() {
            for &a in &class {
                for b in h.element_neighbors(a) {
                    assert!(!class.contains(&b), "elements {a} and {b} share a color");
                }
            }
        }
    }

    #[test]
    fn bad_shapes_are_rejected() {
        assert!(FineGrid::new(10, 10, 1.0, 2.0).is_err());
        assert!(FineGrid::new(0, 10, 1.0, 1.0).is_err());
        assert!(GridHierarchy::new(FineGrid::unit(10, 10).unwrap(), 3, 5).is_err());
        assert!(GridHierarchy::new(FineGrid::unit(10, 10).unwrap(), 0, 5).is_err());
        assert!(FineGrid::new(220, 60, 2.2, 0.6).is_ok());
    }
}
