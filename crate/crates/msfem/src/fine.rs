//! Fine-scale discretization: assembly of the eliminated pressure system,
//! direct/iterative solves, flux recovery, discrete norms, and a saddle-point
//! reference solver.
//!
//! The trapezoidal quadrature of the mixed method makes the velocity mass
//! matrix diagonal, so each edge flux is `u_e = trans_e * jump_e(p)` and the
//! pressure satisfies a five-point symmetric positive definite system whose
//! entries are edge transmissibilities. Dirichlet data enters the jump on
//! boundary edges and therefore the right-hand side; no-flow edges drop out
//! entirely. The saddle-point solver keeps velocity unknowns explicit and
//! factors the full indefinite system densely; it exists to certify the
//! elimination and stays restricted to small grids.

use nalgebra::{DMatrix, DVector};

use crate::error::Error;
use crate::field::EdgeCondition;
use crate::grid::{FineGrid, GridHierarchy};
use crate::linalg::{self, SolveReport, SymBanded};
use crate::Result;

/// Assembled pressure system `K p = b`.
#[derive(Debug, Clone)]
pub struct PressureSystem {
    pub matrix: SymBanded,
    pub rhs: Vec<f64>,
}

impl PressureSystem {
    /// Residual `b - K p`.
    pub fn residual(&self, p: &[f64]) -> Vec<f64> {
        self.matrix.residual(p, &self.rhs)
    }
}

/// Pressure and edge fluxes of a solved problem.
#[derive(Debug, Clone)]
pub struct FineSolution {
    pub pressure: Vec<f64>,
    pub flux: Vec<f64>,
}

/// Linear solver selection and tolerances.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Largest unknown count the direct band factorization handles.
    pub direct_limit: usize,
    /// Relative residual the solve must reach.
    pub rtol: f64,
    /// Iteration cap for the conjugate gradient path.
    pub cg_max_iters: usize,
    /// Forces the conjugate gradient path regardless of size.
    pub force_cg: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            direct_limit: 40_000,
            rtol: 1e-8,
            cg_max_iters: 200_000,
            force_cg: false,
        }
    }
}

/// Assembles the eliminated pressure system.
///
/// `trans` holds per-edge transmissibilities, `bc` per-edge conditions, and
/// `f` the per-cell source density (integrated against the cell area here).
pub fn assemble(
    grid: &FineGrid,
    trans: &[f64],
    bc: &[EdgeCondition],
    f: &[f64],
) -> PressureSystem {
    assert_eq!(trans.len(), grid.n_edges());
    assert_eq!(bc.len(), grid.n_edges());
    assert_eq!(f.len(), grid.n_cells());
    let area = grid.cell_area();
    let mut matrix = SymBanded::new(grid.n_cells(), grid.nx());
    let mut rhs: Vec<f64> = f.iter().map(|ft| ft * area).collect();
    for e in 0..grid.n_edges() {
        let k = trans[e];
        match bc[e] {
            EdgeCondition::NoFlow => {}
            EdgeCondition::Interior => {
                let (neg, pos) = grid.edge_cells(e);
                let (a, b) = (
                    neg.expect("interior edge missing negative cell"),
                    pos.expect("interior edge missing positive cell"),
                );
                matrix.add(a, a, k);
                matrix.add(b, b, k);
                matrix.add(a, b, -k);
            }
            EdgeCondition::Dirichlet(g) => {
                let (neg, pos) = grid.edge_cells(e);
                let t = neg.or(pos).expect("edge with no adjacent cell");
                matrix.add(t, t, k);
                rhs[t] += k * g;
            }
        }
    }
    PressureSystem { matrix, rhs }
}

/// Solves the pressure system, choosing the direct band factorization below
/// the size threshold and preconditioned conjugate gradients above it.
pub fn solve_spd(system: &PressureSystem, opts: &SolverOptions) -> Result<SolveReport> {
    let n = system.matrix.dim();
    if opts.force_cg || n > opts.direct_limit {
        linalg::solve_cg(&system.matrix, &system.rhs, opts.rtol, opts.cg_max_iters)
    } else {
        linalg::solve_direct(&system.matrix, &system.rhs, opts.rtol)
    }
}

/// Recovers edge fluxes from a pressure field: `trans_e` times the pressure
/// jump in the edge's orientation, with Dirichlet data supplying the missing
/// side and no-flow edges fixed at zero.
pub fn recover_velocity(
    grid: &FineGrid,
    trans: &[f64],
    bc: &[EdgeCondition],
    pressure: &[f64],
) -> Vec<f64> {
    assert_eq!(pressure.len(), grid.n_cells());
    (0..grid.n_edges())
        .map(|e| match bc[e] {
            EdgeCondition::NoFlow => 0.0,
            EdgeCondition::Interior => {
                let (neg, pos) = grid.edge_cells(e);
                trans[e] * (pressure[neg.unwrap()] - pressure[pos.unwrap()])
            }
            EdgeCondition::Dirichlet(g) => {
                let (neg, pos) = grid.edge_cells(e);
                match (neg, pos) {
                    (Some(t), None) => trans[e] * (pressure[t] - g),
                    (None, Some(t)) => trans[e] * (g - pressure[t]),
                    _ => unreachable!("Dirichlet edge must touch exactly one cell"),
                }
            }
        })
        .collect()
}

/// Assembles and solves in one step.
pub fn solve_fine(
    grid: &FineGrid,
    trans: &[f64],
    bc: &[EdgeCondition],
    f: &[f64],
    opts: &SolverOptions,
) -> Result<(FineSolution, PressureSystem)> {
    let system = assemble(grid, trans, bc, f);
    let report = solve_spd(&system, opts)?;
    let flux = recover_velocity(grid, trans, bc, &report.x);
    Ok((
        FineSolution {
            pressure: report.x,
            flux,
        },
        system,
    ))
}

/// Per-cell mass defect `sum of outward fluxes - cell source integral`.
pub fn flux_imbalance(grid: &FineGrid, flux: &[f64], f: &[f64]) -> Vec<f64> {
    let area = grid.cell_area();
    (0..grid.n_cells())
        .map(|t| {
            let out: f64 = grid
                .cell_edges(t)
                .iter()
                .map(|&e| grid.outward_sign(t, e) * flux[e])
                .sum();
            out - f[t] * area
        })
        .collect()
}

/// Scope of the weighted velocity norm.
#[derive(Debug, Clone, Copy)]
pub enum EnergyScope<'a> {
    /// All edges carrying a transmissibility.
    Global,
    /// Fine edges strictly inside one coarse element.
    ElementInterior {
        hier: &'a GridHierarchy,
        element: usize,
    },
    /// Interior edges plus element-boundary terms `trans_e * p_t^2` with the
    /// inner-cell pressure of the zero-extended generating field; requires
    /// the pressure argument.
    ElementWithBoundary {
        hier: &'a GridHierarchy,
        element: usize,
    },
}

/// Squared weighted velocity norm `sum trans_e^{-1} u_e^2` over the scope.
///
/// The boundary-augmented scope adds `trans_e * p_t^2` over the element
/// boundary edges still carrying a transmissibility, `p` being the pressure
/// field that generates `u` (zero-extended outside the element).
pub fn energy_norm_sq(
    trans: &[f64],
    flux: &[f64],
    pressure: Option<&[f64]>,
    scope: EnergyScope,
) -> Result<f64> {
    let edge_sum = |edges: &mut dyn Iterator<Item = usize>| -> f64 {
        edges
            .filter(|&e| trans[e] > 0.0)
            .map(|e| flux[e] * flux[e] / trans[e])
            .sum()
    };
    match scope {
        EnergyScope::Global => Ok(edge_sum(&mut (0..trans.len()))),
        EnergyScope::ElementInterior { hier, element } => {
            Ok(edge_sum(&mut hier.element_interior_edges(element).into_iter()))
        }
        EnergyScope::ElementWithBoundary { hier, element } => {
            let p = pressure.ok_or_else(|| {
                Error::Usage(
                    "the boundary-augmented energy norm needs the generating pressure field"
                        .into(),
                )
            })?;
            let mut total = edge_sum(&mut hier.element_interior_edges(element).into_iter());
            for e in hier.element_boundary_edges(element) {
                if trans[e] <= 0.0 {
                    continue;
                }
                let (neg, pos) = hier.fine().edge_cells(e);
                let inner = [neg, pos]
                    .into_iter()
                    .flatten()
                    .find(|&t| hier.element_of_cell(t) == element)
                    .expect("element boundary edge must touch the element");
                total += trans[e] * p[inner] * p[inner];
            }
            Ok(total)
        }
    }
}

/// Relative pressure and flux errors of a candidate solution against a
/// reference: cell-volume-weighted L2 for pressure, transmissibility-weighted
/// energy norm for flux.
pub fn rel_errors(
    grid: &FineGrid,
    trans: &[f64],
    candidate: &FineSolution,
    reference: &FineSolution,
) -> Result<(f64, f64)> {
    let area = grid.cell_area();
    let mut dp = 0.0;
    let mut pref = 0.0;
    for (a, b) in candidate.pressure.iter().zip(&reference.pressure) {
        dp += (a - b) * (a - b) * area;
        pref += b * b * area;
    }
    if pref == 0.0 {
        return Err(Error::ZeroReference { name: "pressure" });
    }
    let mut du = 0.0;
    let mut uref = 0.0;
    for e in 0..grid.n_edges() {
        if trans[e] <= 0.0 {
            continue;
        }
        let d = candidate.flux[e] - reference.flux[e];
        du += d * d / trans[e];
        uref += reference.flux[e] * reference.flux[e] / trans[e];
    }
    if uref == 0.0 {
        return Err(Error::ZeroReference { name: "flux" });
    }
    Ok(((dp / pref).sqrt(), (du / uref).sqrt()))
}

/// Reference solver that keeps velocities explicit: assembles the full
/// indefinite block system over active edges and cells and factors it
/// densely.
///
/// Intended for cross-checking the eliminated path on small grids; errors on
/// systems past a few thousand unknowns.
pub fn saddle_oracle(
    grid: &FineGrid,
    trans: &[f64],
    bc: &[EdgeCondition],
    f: &[f64],
) -> Result<FineSolution> {
    let active: Vec<usize> = (0..grid.n_edges())
        .filter(|&e| !matches!(bc[e], EdgeCondition::NoFlow))
        .collect();
    let m1 = active.len();
    let m2 = grid.n_cells();
    let n = m1 + m2;
    if n > 5_000 {
        return Err(Error::Usage(format!(
            "saddle-point reference solver is limited to small grids, got {n} unknowns"
        )));
    }
    let area = grid.cell_area();
    let mut mat = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for (row, &e) in active.iter().enumerate() {
        if trans[e] <= 0.0 {
            return Err(Error::Usage(format!(
                "active edge {e} has non-positive transmissibility"
            )));
        }
        mat[(row, row)] = 1.0 / trans[e];
        let (neg, pos) = grid.edge_cells(e);
        for t in [neg, pos].into_iter().flatten() {
            let s = grid.outward_sign(t, e);
            mat[(row, m1 + t)] = -s;
            mat[(m1 + t, row)] = -s;
        }
        if let EdgeCondition::Dirichlet(g) = bc[e] {
            let t = neg.or(pos).expect("edge with no adjacent cell");
            rhs[row] = -g * grid.outward_sign(t, e);
        }
    }
    for t in 0..m2 {
        rhs[m1 + t] = -f[t] * area;
    }
    let lu = mat.lu();
    let sol = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Usage("saddle-point system is singular".into()))?;
    let mut flux = vec![0.0; grid.n_edges()];
    for (row, &e) in active.iter().enumerate() {
        flux[e] = sol[row];
    }
    let pressure = (0..m2).map(|t| sol[m1 + t]).collect();
    Ok(FineSolution { pressure, flux })
}
