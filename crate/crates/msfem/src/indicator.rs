//! Residual functionals, their weighted dual norms, online Riesz
//! representatives, and the theta selection rule.
//!
//! All indicators consume the global fine residual of the current multiscale
//! pressure. Restricted to one element's cells it is the residual functional
//! on zero-extended local test fields: interface and Dirichlet edges
//! contribute through the fine matrix rows, so no separate boundary handling
//! is needed here.

use crate::error::Error;
use crate::grid::GridHierarchy;
use crate::linalg::{solve_with_factor, BandedCholesky, SymBanded};
use crate::snapshot::SnapshotSet;
use crate::spectral::OfflineEig;
use crate::Result;

/// Residual functional applied to each snapshot column restricted to the
/// element: `r_j = q_j . (fine rhs - K p_ms)` over the element's cells.
pub fn residual_vector(hier: &GridHierarchy, snap: &SnapshotSet, res: &[f64]) -> Vec<f64> {
    let cells = hier.element_cells(snap.block.element);
    let j = snap.n_columns();
    let mut r = vec![0.0; j];
    for (local, &cell) in cells.iter().enumerate() {
        let rv = res[cell];
        if rv == 0.0 {
            continue;
        }
        let row = snap.restricted.row(local);
        for (k, rk) in r.iter_mut().enumerate() {
            *rk += row[k] * rv;
        }
    }
    r
}

/// Offline indicator: squared dual norm of the residual in the weighted
/// pressure Gram, scaled by the next unused eigenvalue. Saturated elements
/// (no eigenvalue left) report zero.
pub fn eta_offline(eig: &OfflineEig, r: &[f64], l: usize) -> f64 {
    match eig.next_lambda(l) {
        None => 0.0,
        Some(lambda) => {
            let norm_sq = eig.dual_norm_sq(r);
            if lambda <= 0.0 {
                if norm_sq == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                norm_sq / lambda
            }
        }
    }
}

/// Riesz representative of the residual on one element.
#[derive(Debug, Clone)]
pub struct OnlineBasis {
    /// Representative field over the element cells, local row-major order.
    pub field: Vec<f64>,
    /// Squared energy norm of the residual, `a(phi, phi) = phi . r`.
    pub eta_sq: f64,
}

/// Energy form of one element's local fine space, factored once and reused
/// across enrichment levels.
///
/// The matrix is the principal submatrix of the fine pressure system on the
/// element's cells: interior-edge couplings plus every positive edge weight
/// on the diagonal, which is exactly the zero-extension form.
pub struct LocalEnergyOp {
    pub element: usize,
    cells: Vec<usize>,
    matrix: SymBanded,
    factor: BandedCholesky,
}

impl LocalEnergyOp {
    pub fn new(hier: &GridHierarchy, trans: &[f64], element: usize) -> Result<Self> {
        let grid = hier.fine();
        let cells = hier.element_cells(element);
        let n = cells.len();
        let bw = hier.coarse().cells_x().min(n.saturating_sub(1));
        let mut matrix = SymBanded::new(n, bw);
        for (local, &cell) in cells.iter().enumerate() {
            let diag: f64 = grid.cell_edges(cell).iter().map(|&e| trans[e]).sum();
            matrix.add(local, local, diag);
        }
        for e in hier.element_interior_edges(element) {
            let k = trans[e];
            if k == 0.0 {
                continue;
            }
            let (neg, pos) = grid.edge_cells(e);
            let l1 = hier.local_cell_index(element, neg.unwrap());
            let l2 = hier.local_cell_index(element, pos.unwrap());
            matrix.add(l1, l2, -k);
        }
        let factor = matrix.cholesky(1e-14).map_err(|e| match e {
            Error::NotPositiveDefinite { index, detail } => Error::NotPositiveDefinite {
                index,
                detail: format!("local energy form on element {element}: {detail}"),
            },
            other => other,
        })?;
        Ok(LocalEnergyOp {
            element,
            cells,
            matrix,
            factor,
        })
    }

    /// Solves `a(phi, q) = r(q)` over the element and evaluates
    /// `eta^2 = phi . r`.
    pub fn riesz(&self, res: &[f64]) -> Result<OnlineBasis> {
        let rhs: Vec<f64> = self.cells.iter().map(|&c| res[c]).collect();
        let report = solve_with_factor(&self.matrix, &self.factor, &rhs, 1e-8)?;
        let eta_sq: f64 = report
            .x
            .iter()
            .zip(&rhs)
            .map(|(p, r)| p * r)
            .sum::<f64>()
            .max(0.0);
        Ok(OnlineBasis {
            field: report.x,
            eta_sq,
        })
    }
}

/// Smallest prefix of elements, sorted by descending indicator, whose sum
/// reaches `theta` times the total. Zero indicators are never selected; ties
/// break toward the smaller element id.
pub fn select_elements(eta_sq: &[f64], theta: f64) -> Vec<usize> {
    let total: f64 = eta_sq.iter().sum();
    if total <= 0.0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..eta_sq.len()).filter(|&i| eta_sq[i] > 0.0).collect();
    order.sort_by(|&a, &b| {
        eta_sq[b]
            .partial_cmp(&eta_sq[a])
            .expect("indicator comparison")
            .then(a.cmp(&b))
    });
    let target = theta * total;
    let mut selected = Vec::new();
    let mut acc = 0.0;
    for i in order {
        if acc >= target {
            break;
        }
        acc += eta_sq[i];
        selected.push(i);
    }
    selected
}
