//! Local snapshot families on (oversampled) blocks and per-block source
//! correction functions.
//!
//! A snapshot column is the pressure of a local Dirichlet problem on the
//! block: unit trace on one boundary fine edge, zero on the rest, no source.
//! Block-boundary edges carry the half-cell transmissibility `2 k_t`
//! regardless of where the block sits in the domain; interior block edges
//! keep the global harmonic values. One factorization per block serves all
//! columns. The correction function absorbs the source term: a local no-flow
//! problem forced by the block-mean-free part of `f`, fixed to zero mean.

use nalgebra::DMatrix;

use crate::field::{transmissibilities, EdgeCondition, Permeability, SourceField};
use crate::fine::{assemble, recover_velocity};
use crate::grid::{GridHierarchy, OversampledBlock};
use crate::linalg::{self, SymBanded};
use crate::Result;

/// Snapshot family of one block: pressures, velocities, and the restriction
/// to the target element.
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    pub block: OversampledBlock,
    /// Block-local edge transmissibilities the columns were solved with.
    pub local_trans: Vec<f64>,
    /// Block cells by columns; one column per boundary edge, in the block's
    /// boundary-edge order.
    pub pressures: DMatrix<f64>,
    /// Block edges by columns, fluxes of each column's solution.
    pub velocities: DMatrix<f64>,
    /// Target-element cells by columns: the pressure restriction that the
    /// multiscale basis is built from.
    pub restricted: DMatrix<f64>,
}

impl SnapshotSet {
    /// Number of snapshot columns.
    pub fn n_columns(&self) -> usize {
        self.pressures.ncols()
    }

    /// Restriction of an arbitrary coefficient combination to the element.
    pub fn restrict_combination(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.restricted.nrows()];
        for (j, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(self.restricted.column(j).iter()) {
                *o += c * v;
            }
        }
        out
    }
}

fn block_boundary_bc(block: &OversampledBlock, value_edge: Option<(usize, f64)>) -> Vec<EdgeCondition> {
    let grid = &block.grid;
    let mut bc = vec![EdgeCondition::Interior; grid.n_edges()];
    for &e in &block.boundary_edges_local {
        bc[e] = EdgeCondition::Dirichlet(0.0);
    }
    if let Some((e, v)) = value_edge {
        bc[e] = EdgeCondition::Dirichlet(v);
    }
    bc
}

fn local_permeability(block: &OversampledBlock, perm: &Permeability) -> Result<Permeability> {
    Permeability::from_values(
        &block.grid,
        block.global_cells.iter().map(|&c| perm.at(c)).collect(),
    )
}

/// Builds the snapshot family on the `layers`-oversampled block of an
/// element (`layers = 0` keeps the block at the element itself).
pub fn build_snapshots(
    hier: &GridHierarchy,
    perm: &Permeability,
    element: usize,
    layers: usize,
) -> Result<SnapshotSet> {
    let block = hier.oversample(element, layers);
    let grid = block.grid.clone();
    let local_perm = local_permeability(&block, perm)?;
    let bc_zero = block_boundary_bc(&block, None);
    let local_trans = transmissibilities(&grid, &local_perm, &bc_zero);
    let system = assemble(&grid, &local_trans, &bc_zero, &vec![0.0; grid.n_cells()]);
    let factor = system.matrix.cholesky(1e-14)?;

    let n_cells = grid.n_cells();
    let j_cols = block.n_columns();
    let mut pressures = DMatrix::<f64>::zeros(n_cells, j_cols);
    let mut velocities = DMatrix::<f64>::zeros(grid.n_edges(), j_cols);
    let mut rhs = vec![0.0; n_cells];
    for (j, &edge) in block.boundary_edges_local.iter().enumerate() {
        let (neg, pos) = grid.edge_cells(edge);
        let t = neg.or(pos).expect("boundary edge with no adjacent cell");
        rhs[t] = local_trans[edge];
        let report = linalg::solve_with_factor(&system.matrix, &factor, &rhs, 1e-8)?;
        rhs[t] = 0.0;
        let bc_j = block_boundary_bc(&block, Some((edge, 1.0)));
        let flux = recover_velocity(&grid, &local_trans, &bc_j, &report.x);
        for (i, v) in report.x.iter().enumerate() {
            pressures[(i, j)] = *v;
        }
        for (i, v) in flux.iter().enumerate() {
            velocities[(i, j)] = *v;
        }
    }

    let n_t = block.target_local_cells.len();
    let mut restricted = DMatrix::<f64>::zeros(n_t, j_cols);
    for (row, &lc) in block.target_local_cells.iter().enumerate() {
        for j in 0..j_cols {
            restricted[(row, j)] = pressures[(lc, j)];
        }
    }

    Ok(SnapshotSet {
        block,
        local_trans,
        pressures,
        velocities,
        restricted,
    })
}

/// Zero-mean correction function of one block.
#[derive(Debug, Clone)]
pub struct CorrectionFunction {
    pub element: usize,
    /// Pressure on the block cells, zero mean over the block.
    pub pressure: Vec<f64>,
    /// Restriction to the target element cells.
    pub restricted: Vec<f64>,
}

/// Solves the local no-flow problem driven by the block-mean-free part of
/// the source and fixes the mean to zero.
pub fn build_correction(
    hier: &GridHierarchy,
    perm: &Permeability,
    f: &SourceField,
    element: usize,
    layers: usize,
) -> Result<CorrectionFunction> {
    let block = hier.oversample(element, layers);
    let grid = block.grid.clone();
    let n = grid.n_cells();
    let local_perm = local_permeability(&block, perm)?;
    let mut bc = vec![EdgeCondition::Interior; grid.n_edges()];
    for &e in &block.boundary_edges_local {
        bc[e] = EdgeCondition::NoFlow;
    }
    let trans = transmissibilities(&grid, &local_perm, &bc);

    let f_local: Vec<f64> = block.global_cells.iter().map(|&c| f.at(c)).collect();
    let mean = f_local.iter().sum::<f64>() / n as f64;
    let compat: Vec<f64> = f_local.iter().map(|v| v - mean).collect();

    let pressure = if compat.iter().all(|&v| v == 0.0) {
        vec![0.0; n]
    } else {
        // The no-flow system is singular with a constant kernel; pinning the
        // first cell keeps it SPD and the row dropped is implied by the
        // mean-free right-hand side.
        let area = grid.cell_area();
        let mut reduced = SymBanded::new(n - 1, grid.nx());
        for e in 0..grid.n_edges() {
            if trans[e] <= 0.0 {
                continue;
            }
            let (neg, pos) = grid.edge_cells(e);
            let (a, b) = (neg.unwrap(), pos.unwrap());
            if a > 0 {
                reduced.add(a - 1, a - 1, trans[e]);
            }
            if b > 0 {
                reduced.add(b - 1, b - 1, trans[e]);
            }
            if a > 0 && b > 0 {
                reduced.add(a - 1, b - 1, -trans[e]);
            }
        }
        let rhs: Vec<f64> = compat[1..].iter().map(|v| v * area).collect();
        let report = linalg::solve_direct(&reduced, &rhs, 1e-8)?;
        let mut p = Vec::with_capacity(n);
        p.push(0.0);
        p.extend(report.x);
        let shift = p.iter().sum::<f64>() / n as f64;
        for v in &mut p {
            *v -= shift;
        }
        p
    };

    let restricted = block
        .target_local_cells
        .iter()
        .map(|&lc| pressure[lc])
        .collect();
    Ok(CorrectionFunction {
        element,
        pressure,
        restricted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{gen_perm, PermSpec, SourceField};
    use crate::fine::{flux_imbalance, saddle_oracle};
    use crate::grid::{FineGrid, GridHierarchy};
    use nalgebra::DVector;

    fn hier(nx: usize, ny: usize, cx: usize, cy: usize) -> GridHierarchy {
        GridHierarchy::new(FineGrid::unit(nx, ny).unwrap(), cx, cy).unwrap()
    }

    #[test]
    fn columns_sum_to_the_constant_with_zero_velocity() {
        let h = hier(20, 20, 4, 4);
        let perm = gen_perm(h.fine(), &PermSpec::Lognormal { sigma: 1.5 }, 3).unwrap();
        let snap = build_snapshots(&h, &perm, h.coarse().element(1, 2), 2).unwrap();
        assert_eq!(snap.n_columns(), 2 * (9 + 9));
        for i in 0..snap.pressures.nrows() {
            let s: f64 = snap.pressures.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-10, "cell {i} sums to {s}");
        }
        let vscale = snap
            .velocities
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..snap.velocities.nrows() {
            let s: f64 = snap.velocities.row(i).iter().sum();
            assert!(s.abs() <= 1e-10 * vscale.max(1.0));
        }
    }

    #[test]
    fn columns_obey_the_maximum_principle() {
        let h = hier(16, 16, 4, 4);
        let perm = gen_perm(h.fine(), &PermSpec::Lognormal { sigma: 2.0 }, 8).unwrap();
        let snap = build_snapshots(&h, &perm, 5, 1).unwrap();
        for v in snap.pressures.iter() {
            assert!((-1e-12..=1.0 + 1e-12).contains(v));
        }
    }

    #[test]
    fn snapshot_column_matches_saddle_oracle_on_its_block() {
        let h = hier(8, 8, 2, 2);
        let perm = gen_perm(h.fine(), &PermSpec::Lognormal { sigma: 1.0 }, 4).unwrap();
        let snap = build_snapshots(&h, &perm, 3, 1).unwrap();
        let grid = &snap.block.grid;
        for j in [0, snap.n_columns() / 2, snap.n_columns() - 1] {
            let edge = snap.block.boundary_edges_local[j];
            let bc = block_boundary_bc(&snap.block, Some((edge, 1.0)));
            let oracle =
                saddle_oracle(grid, &snap.local_trans, &bc, &vec![0.0; grid.n_cells()]).unwrap();
            for i in 0..grid.n_cells() {
                assert!((snap.pressures[(i, j)] - oracle.pressure[i]).abs() < 1e-10);
            }
            for e in 0..grid.n_edges() {
                assert!((snap.velocities[(e, j)] - oracle.flux[e]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn restriction_picks_target_element_cells() {
        let h = hier(12, 12, 3, 3);
        let perm = gen_perm(h.fine(), &PermSpec::Lognormal { sigma: 1.0 }, 1).unwrap();
        let el = h.coarse().element(1, 1);
        let snap = build_snapshots(&h, &perm, el, 2).unwrap();
        let cells = h.element_cells(el);
        for (row, &lc) in snap.block.target_local_cells.iter().enumerate() {
            assert_eq!(snap.block.global_cells[lc], cells[row]);
            for j in 0..snap.n_columns() {
                assert_eq!(snap.restricted[(row, j)], snap.pressures[(lc, j)]);
            }
        }
        let coeffs = vec![1.0; snap.n_columns()];
        let combo = snap.restrict_combination(&coeffs);
        for v in combo {
            assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn correction_balances_the_mean_free_source() {
        let h = hier(12, 12, 3, 3);
        let perm = gen_perm(h.fine(), &PermSpec::Lognormal { sigma: 1.5 }, 6).unwrap();
        let f_vals: Vec<f64> = (0..144).map(|i| ((i % 5) as f64) - 1.0).collect();
        let f = SourceField::from_values(h.fine(), f_vals).unwrap();
        let el = 4;
        let corr = build_correction(&h, &perm, &f, el, 1).unwrap();
        let block = h.oversample(el, 1);
        let grid = &block.grid;
        let mean: f64 = corr.pressure.iter().sum::<f64>() / grid.n_cells() as f64;
        assert!(mean.abs() < 1e-12);

        let local_perm = local_permeability(&block, &perm).unwrap();
        let mut bc = vec![EdgeCondition::Interior; grid.n_edges()];
        for &e in &block.boundary_edges_local {
            bc[e] = EdgeCondition::NoFlow;
        }
        let trans = transmissibilities(grid, &local_perm, &bc);
        let flux = recover_velocity(grid, &trans, &bc, &corr.pressure);
        let f_local: Vec<f64> = block.global_cells.iter().map(|&c| f.at(c)).collect();
        let f_mean = f_local.iter().sum::<f64>() / grid.n_cells() as f64;
        let compat: Vec<f64> = f_local.iter().map(|v| v - f_mean).collect();
        let scale = flux.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for d in flux_imbalance(grid, &flux, &compat) {
            assert!(d.abs() <= 1e-9 * scale.max(1.0));
        }
    }

    #[test]
    fn correction_matches_dense_constrained_solve_and_symmetry() {
        let h = hier(4, 4, 1, 1);
        let perm = gen_perm(h.fine(), &PermSpec::Uniform { value: 2.0 }, 0).unwrap();
        let f_vals: Vec<f64> = (0..16)
            .map(|t| {
                let ix = t % 4;
                if ix < 2 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        let f = SourceField::from_values(h.fine(), f_vals.clone()).unwrap();
        let corr = build_correction(&h, &perm, &f, 0, 0).unwrap();

        let grid = h.fine();
        for iy in 0..4 {
            for ix in 0..4 {
                let a = corr.pressure[grid.cell(ix, iy)];
                let b = corr.pressure[grid.cell(3 - ix, iy)];
                assert!((a + b).abs() < 1e-12, "mirror pair ({ix},{iy})");
            }
        }

        let block = h.oversample(0, 0);
        let local_perm = local_permeability(&block, &perm).unwrap();
        let mut bc = vec![EdgeCondition::Interior; grid.n_edges()];
        for &e in &block.boundary_edges_local {
            bc[e] = EdgeCondition::NoFlow;
        }
        let trans = transmissibilities(grid, &local_perm, &bc);
        let n = grid.n_cells();
        let mut dense = DMatrix::<f64>::zeros(n + 1, n + 1);
        for e in 0..grid.n_edges() {
            if trans[e] <= 0.0 {
                continue;
            }
            let (neg, pos) = grid.edge_cells(e);
            let (a, b) = (neg.unwrap(), pos.unwrap());
            dense[(a, a)] += trans[e];
            dense[(b, b)] += trans[e];
            dense[(a, b)] -= trans[e];
            dense[(b, a)] -= trans[e];
        }
        for t in 0..n {
            dense[(n, t)] = 1.0;
            dense[(t, n)] = 1.0;
        }
        let mut rhs = DVector::<f64>::zeros(n + 1);
        let area = grid.cell_area();
        for t in 0..n {
            rhs[t] = f_vals[t] * area;
        }
        let sol = dense.lu().solve(&rhs).unwrap();
        for t in 0..n {
            assert!((corr.pressure[t] - sol[t]).abs() < 1e-11);
        }
    }

    #[test]
    fn constant_source_yields_zero_correction() {
        let h = hier(8, 8, 2, 2);
        let perm = gen_perm(h.fine(), &PermSpec::Lognormal { sigma: 1.0 }, 2).unwrap();
        let f = SourceField::from_values(h.fine(), vec![3.5; 64]).unwrap();
        let corr = build_correction(&h, &perm, &f, 1, 2).unwrap();
        assert!(corr.pressure.iter().all(|&v| v == 0.0));
        assert!(corr.restricted.iter().all(|&v| v == 0.0));
    }
}
