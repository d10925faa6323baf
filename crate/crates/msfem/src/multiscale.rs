//! Coarse space bookkeeping, coarse-system assembly, and the multiscale
//! solve.
//!
//! Basis fields live on single coarse elements and are zero elsewhere, so
//! the coarse matrix couples only same-element and edge-adjacent pairs.
//! Source corrections never enter the space; they shift the right-hand side
//! and the expanded pressure as an affine offset.

use crate::error::Error;
use crate::field::EdgeCondition;
use crate::fine::{recover_velocity, PressureSystem};
use crate::grid::GridHierarchy;
use crate::linalg::{solve_direct, SymBanded};
use crate::snapshot::CorrectionFunction;
use crate::Result;

/// Provenance of one basis field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisTag {
    /// Offline eigenfunction, by ascending eigenvalue rank.
    Offline { rank: usize },
    /// Online Riesz representative, by the enrichment level that added it.
    Online { level: usize },
}

/// One basis field on one coarse element, stored over the element's cells in
/// local row-major order.
#[derive(Debug, Clone)]
pub struct BasisField {
    pub tag: BasisTag,
    pub values: Vec<f64>,
}

/// Per-element ordered basis lists with contiguous global dof numbering.
#[derive(Debug, Clone)]
pub struct MultiscaleSpace {
    bases: Vec<Vec<BasisField>>,
}

impl MultiscaleSpace {
    pub fn new(n_elements: usize) -> Self {
        MultiscaleSpace {
            bases: vec![Vec::new(); n_elements],
        }
    }

    pub fn n_elements(&self) -> usize {
        self.bases.len()
    }

    /// Appends a field after the element's existing bases.
    pub fn add_basis(&mut self, element: usize, values: Vec<f64>, tag: BasisTag) -> Result<()> {
        if values.iter().all(|&v| v == 0.0) {
            return Err(Error::Usage(format!(
                "rejected an identically zero basis field on element {element}"
            )));
        }
        self.bases[element].push(BasisField { tag, values });
        Ok(())
    }

    pub fn fields(&self, element: usize) -> &[BasisField] {
        &self.bases[element]
    }

    pub fn count(&self, element: usize) -> usize {
        self.bases[element].len()
    }

    /// Per-element basis counts, the `l_i` map.
    pub fn counts(&self) -> Vec<usize> {
        self.bases.iter().map(Vec::len).collect()
    }

    pub fn dofs(&self) -> usize {
        self.bases.iter().map(Vec::len).sum()
    }

    /// First global dof of each element, plus the total as a sentinel.
    pub fn offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.bases.len() + 1);
        let mut acc = 0;
        for fields in &self.bases {
            offsets.push(acc);
            acc += fields.len();
        }
        offsets.push(acc);
        offsets
    }

    /// Expands coarse coefficients onto the fine grid on top of `base`.
    pub fn expand(&self, hier: &GridHierarchy, coeffs: &[f64], base: &[f64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.dofs());
        let mut p = base.to_vec();
        let mut dof = 0;
        for (el, fields) in self.bases.iter().enumerate() {
            let cells = hier.element_cells(el);
            for field in fields {
                let c = coeffs[dof];
                for (local, &cell) in cells.iter().enumerate() {
                    p[cell] += c * field.values[local];
                }
                dof += 1;
            }
        }
        p
    }
}

/// Sums per-element corrections into one fine-grid field, zero outside the
/// corrected elements.
pub fn merge_corrections(hier: &GridHierarchy, corrections: &[CorrectionFunction]) -> Vec<f64> {
    let mut p = vec![0.0; hier.fine().n_cells()];
    for corr in corrections {
        for (local, &cell) in hier.element_cells(corr.element).iter().enumerate() {
            p[cell] += corr.restricted[local];
        }
    }
    p
}

/// Assembled coarse system together with the correction-shifted right-hand
/// side it was built from.
#[derive(Debug, Clone)]
pub struct CoarseSystem {
    pub matrix: SymBanded,
    pub rhs: Vec<f64>,
}

/// Galerkin projection of the fine system onto the multiscale space.
///
/// `p_corr` is the merged correction field; the right-hand side entries are
/// `phi_a . (fine rhs - K p_corr)` restricted to the element of `phi_a`.
pub fn assemble_coarse(
    hier: &GridHierarchy,
    trans: &[f64],
    space: &MultiscaleSpace,
    fine_sys: &PressureSystem,
    p_corr: &[f64],
) -> CoarseSystem {
    let grid = hier.fine();
    let offsets = space.offsets();
    let dofs = space.dofs();

    let mut bw = 0usize;
    for el in 0..space.n_elements() {
        let count = space.count(el);
        if count > 0 {
            bw = bw.max(count - 1);
        }
        for nb in hier.element_neighbors(el) {
            if nb > el && space.count(nb) > 0 {
                bw = bw.max(offsets[nb] + space.count(nb) - 1 - offsets[el]);
            }
        }
    }
    let mut matrix = SymBanded::new(dofs, bw.min(dofs.saturating_sub(1)));

    let mut shifted = fine_sys.rhs.clone();
    let mut kp = vec![0.0; shifted.len()];
    fine_sys.matrix.matvec(p_corr, &mut kp);
    for (s, k) in shifted.iter_mut().zip(&kp) {
        *s -= k;
    }
    let mut rhs = vec![0.0; dofs];

    for el in 0..space.n_elements() {
        let fields = space.fields(el);
        if fields.is_empty() {
            continue;
        }
        let base = offsets[el];
        let cells = hier.element_cells(el);

        for e in hier.element_interior_edges(el) {
            let k = trans[e];
            if k == 0.0 {
                continue;
            }
            let (neg, pos) = grid.edge_cells(e);
            let l1 = hier.local_cell_index(el, neg.unwrap());
            let l2 = hier.local_cell_index(el, pos.unwrap());
            for (a, fa) in fields.iter().enumerate() {
                let ja = fa.values[l1] - fa.values[l2];
                if ja == 0.0 {
                    continue;
                }
                for (b, fb) in fields.iter().enumerate().skip(a) {
                    let jb = fb.values[l1] - fb.values[l2];
                    matrix.add(base + a, base + b, k * ja * jb);
                }
            }
        }
        for e in hier.element_boundary_edges(el) {
            let k = trans[e];
            if k == 0.0 {
                continue;
            }
            let (neg, pos) = grid.edge_cells(e);
            let inner = match (neg, pos) {
                (Some(t), _) if hier.element_of_cell(t) == el => t,
                (_, Some(t)) => t,
                _ => unreachable!("edge without cells"),
            };
            let li = hier.local_cell_index(el, inner);
            for (a, fa) in fields.iter().enumerate() {
                let va = fa.values[li];
                if va == 0.0 {
                    continue;
                }
                for (b, fb) in fields.iter().enumerate().skip(a) {
                    matrix.add(base + a, base + b, k * va * fb.values[li]);
                }
            }
        }

        for nb in hier.element_neighbors(el) {
            if nb <= el || space.count(nb) == 0 {
                continue;
            }
            let nb_fields = space.fields(nb);
            let nb_base = offsets[nb];
            for (e, cell_a, cell_b) in hier.interface_edges(el, nb) {
                let k = trans[e];
                if k == 0.0 {
                    continue;
                }
                let la = hier.local_cell_index(el, cell_a);
                let lb = hier.local_cell_index(nb, cell_b);
                for (a, fa) in fields.iter().enumerate() {
                    let va = fa.values[la];
                    if va == 0.0 {
                        continue;
                    }
                    for (b, fb) in nb_fields.iter().enumerate() {
                        matrix.add(base + a, nb_base + b, -k * va * fb.values[lb]);
                    }
                }
            }
        }

        for (a, fa) in fields.iter().enumerate() {
            rhs[base + a] = cells
                .iter()
                .enumerate()
                .map(|(local, &cell)| fa.values[local] * shifted[cell])
                .sum();
        }
    }

    CoarseSystem { matrix, rhs }
}

/// Multiscale solution expanded to the fine grid.
#[derive(Debug, Clone)]
pub struct MsSolution {
    /// Coarse coefficients in global dof order.
    pub coeffs: Vec<f64>,
    /// Fine-cell pressure, corrections included.
    pub pressure: Vec<f64>,
    /// Fine-edge flux recovered from the pressure by the elimination rule.
    pub flux: Vec<f64>,
    /// Enrichment level that produced this space.
    pub level: usize,
}

/// Solves the coarse system and expands the result.
pub fn solve_ms(
    hier: &GridHierarchy,
    trans: &[f64],
    bc: &[EdgeCondition],
    space: &MultiscaleSpace,
    system: &CoarseSystem,
    p_corr: &[f64],
    level: usize,
) -> Result<MsSolution> {
    let report = solve_direct(&system.matrix, &system.rhs, 1e-8).map_err(|e| match e {
        Error::NotPositiveDefinite { index, .. } => Error::DependentBasis { dof: index },
        other => other,
    })?;
    let pressure = space.expand(hier, &report.x, p_corr);
    let flux = recover_velocity(hier.fine(), trans, bc, &pressure);
    Ok(MsSolution {
        coeffs: report.x,
        pressure,
        flux,
        level,
    })
}
