//! Local generalized eigenproblems over snapshot families and the offline
//! basis selection.
//!
//! For a block's snapshot family the velocity-energy matrix `A` (inverse
//! transmissibility weighted, assembled from the stored column fluxes) is
//! paired with the weighted pressure Gram `M` (cell-weight times area). The
//! generalized problem `A x = lambda M x` ranks snapshot combinations:
//! low-lying eigenvalues mark pressure shapes that are cheap in energy yet
//! heavy in weighted mass, exactly the features a coarse space must resolve
//! first.
//!
//! `M` is structurally rank deficient: at each corner cell of the block the
//! two corner boundary edges drive the same cell, so their difference mode
//! carries no pressure at all. The solver eigendecomposes `M`, drops those
//! zero-pressure directions, and eliminates the energy block over them by a
//! Schur complement, so returned pairs satisfy the raw pencil to machine
//! precision and the coarse space never receives a zero field.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::Error;
use crate::snapshot::SnapshotSet;
use crate::Result;

/// Relative eigenvalue threshold below which an `M` direction is treated as
/// carrying no pressure.
const NULL_SPACE_REL_TOL: f64 = 1e-12;

/// Edge set feeding the velocity-energy matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyEdges {
    /// All block edges; boundary edges enter at the half-cell weight they
    /// were solved with. The oversampled pipeline uses this.
    Block,
    /// Interior block edges only. The no-oversampling pipeline uses this;
    /// it is what makes the spectral projection bound exact.
    Interior,
}

/// Eigen decomposition of one block's snapshot family.
#[derive(Debug, Clone)]
pub struct OfflineEig {
    pub element: usize,
    /// Ascending eigenvalues of the retained pressure-carrying subspace.
    pub lambdas: Vec<f64>,
    /// Snapshot-coefficient vectors by columns, M-orthonormal, sign-fixed so
    /// the largest-magnitude coefficient is positive.
    pub vectors: DMatrix<f64>,
    /// Assembled velocity-energy matrix.
    pub a_mat: DMatrix<f64>,
    /// Assembled weighted pressure Gram.
    pub m_mat: DMatrix<f64>,
    /// Dropped zero-pressure directions.
    pub dropped: usize,
    m_basis: DMatrix<f64>,
    m_vals: Vec<f64>,
}

impl OfflineEig {
    /// Retained eigenpair count (the snapshot pressure rank).
    pub fn n_modes(&self) -> usize {
        self.lambdas.len()
    }

    /// Eigenvalue `lambda_{l+1}` that controls the error left by the first
    /// `l` modes; `None` once `l` exhausts the spectrum.
    pub fn next_lambda(&self, l: usize) -> Option<f64> {
        self.lambdas.get(l).copied()
    }

    /// Squared dual norm of a coefficient functional against the weighted
    /// pressure Gram: `sup |r . c|^2 / (c^T M c)` over pressure-carrying `c`.
    pub fn dual_norm_sq(&self, r: &[f64]) -> f64 {
        assert_eq!(r.len(), self.m_basis.nrows());
        let rv = DVector::from_column_slice(r);
        let proj = self.m_basis.transpose() * rv;
        proj.iter()
            .zip(&self.m_vals)
            .map(|(p, m)| p * p / m)
            .sum()
    }
}

fn symmetric_eigen_sorted(mat: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = mat.nrows();
    let eig = SymmetricEigen::new(mat);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .expect("eigenvalue comparison")
    });
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::<f64>::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vecs.set_column(col, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Pseudo-inverse of a small symmetric PSD subblock, zeroing modes at or
/// below `floor`.
///
/// `floor` must be anchored to the scale of the parent matrix the block was
/// cut from: when the block is exactly zero in exact arithmetic its computed
/// eigenvalues are pure roundoff, and a threshold relative to the block's own
/// largest eigenvalue would invert that noise.
fn pseudo_inverse_sym(mat: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let n = mat.nrows();
    let mut inv = DMatrix::<f64>::zeros(n, n);
    if n == 0 {
        return inv;
    }
    let (vals, vecs) = symmetric_eigen_sorted(mat.clone());
    for (k, &v) in vals.iter().enumerate() {
        if v > floor {
            let q = vecs.column(k);
            for i in 0..n {
                for j in 0..n {
                    inv[(i, j)] += q[i] * q[j] / v;
                }
            }
        }
    }
    inv
}

/// Solves the generalized eigenproblem of a snapshot family.
///
/// `weights` are the global weighted cell coefficients; the block maps into
/// them through its global cell ids.
pub fn local_eig(snap: &SnapshotSet, weights: &[f64], edges: EnergyEdges) -> Result<OfflineEig> {
    let grid = &snap.block.grid;
    let j = snap.n_columns();
    let area = grid.cell_area();

    let mut a_mat = DMatrix::<f64>::zeros(j, j);
    for e in 0..grid.n_edges() {
        if edges == EnergyEdges::Interior && grid.boundary_side(e).is_some() {
            continue;
        }
        let k = snap.local_trans[e];
        if k <= 0.0 {
            continue;
        }
        let w = 1.0 / k;
        let row = snap.velocities.row(e);
        for r in 0..j {
            let vr = row[r];
            if vr == 0.0 {
                continue;
            }
            for l in r..j {
                a_mat[(r, l)] += w * vr * row[l];
            }
        }
    }
    for r in 0..j {
        for l in 0..r {
            a_mat[(r, l)] = a_mat[(l, r)];
        }
    }

    let mut m_mat = DMatrix::<f64>::zeros(j, j);
    for (local, &global) in snap.block.global_cells.iter().enumerate() {
        let w = weights[global] * area;
        let row = snap.pressures.row(local);
        for r in 0..j {
            let pr = row[r];
            if pr == 0.0 {
                continue;
            }
            for l in r..j {
                m_mat[(r, l)] += w * pr * row[l];
            }
        }
    }
    for r in 0..j {
        for l in 0..r {
            m_mat[(r, l)] = m_mat[(l, r)];
        }
    }

    let (m_vals_all, m_vecs_all) = symmetric_eigen_sorted(m_mat.clone());
    let mmax = m_vals_all.iter().fold(0.0f64, |m, &v| m.max(v));
    if !(mmax > 0.0) {
        return Err(Error::Usage(
            "snapshot family carries no pressure mass".into(),
        ));
    }
    let retained: Vec<usize> = (0..j)
        .filter(|&k| m_vals_all[k] > NULL_SPACE_REL_TOL * mmax)
        .collect();
    let dropped = j - retained.len();
    let r = retained.len();
    let mut y = DMatrix::<f64>::zeros(j, r);
    let mut mu = Vec::with_capacity(r);
    for (col, &k) in retained.iter().enumerate() {
        y.set_column(col, &m_vecs_all.column(k));
        mu.push(m_vals_all[k]);
    }
    let mut z = DMatrix::<f64>::zeros(j, dropped);
    for (col, &k) in (0..j)
        .filter(|k| !retained.contains(k))
        .collect::<Vec<_>>()
        .iter()
        .enumerate()
    {
        z.set_column(col, &m_vecs_all.column(k));
    }

    let a_yy = y.transpose() * &a_mat * &y;
    let (schur, corr) = if dropped > 0 {
        let a_zz = z.transpose() * &a_mat * &z;
        let a_zy = z.transpose() * &a_mat * &y;
        let a_floor = NULL_SPACE_REL_TOL * a_mat.iter().map(|v| v * v).sum::<f64>().sqrt();
        let corr = -(pseudo_inverse_sym(&a_zz, a_floor) * &a_zy);
        let schur = &a_yy + a_zy.transpose() * &corr;
        (schur, Some(corr))
    } else {
        (a_yy, None)
    };
    let mut schur = 0.5 * (&schur + schur.transpose());

    let scale: Vec<f64> = mu.iter().map(|&m| 1.0 / m.sqrt()).collect();
    for i in 0..r {
        for k in 0..r {
            schur[(i, k)] *= scale[i] * scale[k];
        }
    }
    let (lam_raw, u) = symmetric_eigen_sorted(schur);
    let lambdas: Vec<f64> = lam_raw.iter().map(|&v| v.max(0.0)).collect();

    let mut coeff = DMatrix::<f64>::zeros(r, r);
    for i in 0..r {
        for k in 0..r {
            coeff[(i, k)] = scale[i] * u[(i, k)];
        }
    }
    let mut vectors = &y * &coeff;
    if let Some(corr) = corr {
        vectors += &z * (corr * &coeff);
    }

    for mut col in vectors.column_iter_mut() {
        let mut best = 0.0f64;
        let mut best_abs = 0.0f64;
        for &v in col.iter() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = v;
            }
        }
        if best < 0.0 {
            col.neg_mut();
        }
    }

    Ok(OfflineEig {
        element: snap.block.element,
        lambdas,
        vectors,
        a_mat,
        m_mat,
        dropped,
        m_basis: y,
        m_vals: mu,
    })
}

/// Restriction of the first `l` eigenfunctions to the target element, the
/// first one replaced by the exact constant normalized in the weighted cell
/// norm over the element. Caps at the retained mode count.
pub fn select_offline(
    eig: &OfflineEig,
    snap: &SnapshotSet,
    weights: &[f64],
    hier: &crate::grid::GridHierarchy,
    l: usize,
) -> Vec<Vec<f64>> {
    let l = l.min(eig.n_modes());
    let mut fields = Vec::with_capacity(l);
    for k in 0..l {
        let coeffs: Vec<f64> = eig.vectors.column(k).iter().copied().collect();
        fields.push(snap.restrict_combination(&coeffs));
    }
    if !fields.is_empty() {
        let area = hier.fine().cell_area();
        let mass: f64 = hier
            .element_cells(eig.element)
            .iter()
            .map(|&t| weights[t] * area)
            .sum();
        let c = 1.0 / mass.sqrt();
        fields[0] = vec![c; fields[0].len()];
    }
    fields
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{
        boundary_conditions, cell_weights, gen_perm, transmissibilities, BoundarySpec,
        Permeability, PermSpec,
    };
    use crate::grid::{FineGrid, GridHierarchy};
    use crate::snapshot::build_snapshots;

    fn setup(
        nx: usize,
        cx: usize,
        spec: &PermSpec,
        seed: u64,
    ) -> (GridHierarchy, Permeability, Vec<f64>) {
        let hier = GridHierarchy::new(FineGrid::unit(nx, nx).unwrap(), cx, cx).unwrap();
        let perm = gen_perm(hier.fine(), spec, seed).unwrap();
        let bc = boundary_conditions(hier.fine(), &BoundarySpec::flow_through(1.0, 0.0)).unwrap();
        let trans = transmissibilities(hier.fine(), &perm, &bc);
        let weights = cell_weights(hier.fine(), &trans);
        (hier, perm, weights)
    }

    fn frob(m: &DMatrix<f64>) -> f64 {
        m.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    #[test]
    fn eigenpairs_satisfy_the_raw_pencil() {
        for (edges, layers) in [(EnergyEdges::Block, 2), (EnergyEdges::Interior, 0)] {
            let (hier, perm, weights) =
                setup(16, 4, &PermSpec::Lognormal { sigma: 1.5 }, 21);
            let snap = build_snapshots(&hier, &perm, 5, layers).unwrap();
            let eig = local_eig(&snap, &weights, edges).unwrap();
            assert_eq!(eig.dropped, 4);
            assert_eq!(eig.n_modes(), snap.n_columns() - 4);
            let na = frob(&eig.a_mat);
            let nm = frob(&eig.m_mat);
            for k in 0..eig.n_modes() {
                let x = eig.vectors.column(k).clone_owned();
                let res = &eig.a_mat * &x - eig.lambdas[k] * (&eig.m_mat * &x);
                let bound = 1e-9 * (na + eig.lambdas[k] * nm);
                assert!(res.norm() <= bound, "mode {k}: {} > {bound}", res.norm());
            }
            let gram = eig.vectors.transpose() * &eig.m_mat * &eig.vectors;
            for i in 0..eig.n_modes() {
                for j in 0..eig.n_modes() {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((gram[(i, j)] - want).abs() <= 1e-9);
                }
            }
            assert!(eig.lambdas.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn smallest_mode_is_the_constant() {
        let (hier, perm, weights) = setup(16, 4, &PermSpec::Lognormal { sigma: 2.0 }, 3);
        let snap = build_snapshots(&hier, &perm, 6, 2).unwrap();
        let eig = local_eig(&snap, &weights, EnergyEdges::Block).unwrap();
        let lmax = eig.lambdas.last().copied().unwrap();
        assert!(eig.lambdas[0] <= 1e-10 * lmax.max(1.0));
        let coeffs: Vec<f64> = eig.vectors.column(0).iter().copied().collect();
        let mut field = vec![0.0; snap.pressures.nrows()];
        for (j, &c) in coeffs.iter().enumerate() {
            for (fv, pv) in field.iter_mut().zip(snap.pressures.column(j).iter()) {
                *fv += c * pv;
            }
        }
        let mean = field.iter().sum::<f64>() / field.len() as f64;
        for v in &field {
            assert!((v - mean).abs() <= 1e-7 * mean.abs().max(1e-30));
        }
    }

    #[test]
    fn boundary_crossing_inclusions_add_small_eigenvalues() {
        let small_count = |values: Vec<f64>| {
            let grid = FineGrid::unit(12, 12).unwrap();
            let hier = GridHierarchy::new(grid, 2, 2).unwrap();
            let perm = Permeability::from_values(hier.fine(), values).unwrap();
            let bc =
                boundary_conditions(hier.fine(), &BoundarySpec::flow_through(1.0, 0.0)).unwrap();
            let trans = transmissibilities(hier.fine(), &perm, &bc);
            let weights = cell_weights(hier.fine(), &trans);
            let snap = build_snapshots(&hier, &perm, 0, 0).unwrap();
            let eig = local_eig(&snap, &weights, EnergyEdges::Interior).unwrap();
            let lmax = *eig.lambdas.last().unwrap();
            eig.lambdas.iter().filter(|&&l| l < 1e-3 * lmax).count()
        };
        let grid = FineGrid::unit(12, 12).unwrap();
        let stamp = |values: &mut Vec<f64>, xs: std::ops::Range<usize>, ys: std::ops::Range<usize>| {
            for iy in ys {
                for ix in xs.clone() {
                    values[grid.cell(ix, iy)] = 1e6;
                }
            }
        };

        let uniform = vec![1.0; 144];
        assert_eq!(small_count(uniform), 1, "only the constant on a plain block");

        let mut interior = vec![1.0; 144];
        stamp(&mut interior, 2..4, 2..4);
        assert_eq!(
            small_count(interior),
            1,
            "a strictly interior inclusion stays pinned to the constant: the \
             family is equipotential on it, and its free value is absorbed by \
             the global constant"
        );

        let mut crossing = vec![1.0; 144];
        stamp(&mut crossing, 4..8, 1..3);
        stamp(&mut crossing, 1..3, 4..8);
        assert_eq!(
            small_count(crossing),
            2,
            "two components crossing the block boundary carry one free \
             constant each: the global constant plus their difference"
        );
    }

    #[test]
    fn projection_bound_holds_for_random_members() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let (hier, perm, weights) = setup(12, 3, &PermSpec::Lognormal { sigma: 1.0 }, 9);
        let snap = build_snapshots(&hier, &perm, 4, 0).unwrap();
        let eig = local_eig(&snap, &weights, EnergyEdges::Interior).unwrap();
        let mut rng = StdRng::seed_from_u64(17);
        let j = snap.n_columns();
        for _ in 0..25 {
            let c: Vec<f64> = (0..j).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let cv = nalgebra::DVector::from_column_slice(&c);
            let d = eig.vectors.transpose() * &eig.m_mat * &cv;
            let energy = (cv.transpose() * &eig.a_mat * &cv)[(0, 0)];
            for l in 1..eig.n_modes() {
                let tail: f64 = (l..eig.n_modes()).map(|k| d[k] * d[k]).sum();
                let bound = energy / eig.lambdas[l] + 1e-9;
                assert!(tail <= bound, "l={l}: {tail} > {bound}");
            }
        }
    }

    #[test]
    fn selection_replaces_the_first_field_by_the_normalized_constant() {
        let (hier, perm, weights) = setup(12, 3, &PermSpec::Lognormal { sigma: 1.5 }, 5);
        let snap = build_snapshots(&hier, &perm, 7, 2).unwrap();
        let eig = local_eig(&snap, &weights, EnergyEdges::Block).unwrap();
        let fields = select_offline(&eig, &snap, &weights, &hier, 3);
        assert_eq!(fields.len(), 3);
        let c = fields[0][0];
        assert!(fields[0].iter().all(|&v| v == c));
        let area = hier.fine().cell_area();
        let mass: f64 = hier
            .element_cells(7)
            .iter()
            .map(|&t| weights[t] * area * c * c)
            .sum();
        assert!((mass - 1.0).abs() < 1e-12);
        let capped = select_offline(&eig, &snap, &weights, &hier, 10_000);
        assert_eq!(capped.len(), eig.n_modes());
    }

    #[test]
    fn sign_convention_makes_peak_coefficients_positive() {
        let (hier, perm, weights) = setup(12, 3, &PermSpec::Lognormal { sigma: 1.0 }, 2);
        let snap = build_snapshots(&hier, &perm, 0, 1).unwrap();
        let eig = local_eig(&snap, &weights, EnergyEdges::Block).unwrap();
        for k in 0..eig.n_modes() {
            let col = eig.vectors.column(k);
            let peak = col
                .iter()
                .copied()
                .max_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap())
                .unwrap();
            assert!(peak > 0.0, "mode {k} has negative peak {peak}");
        }
    }

    #[test]
    fn dual_norm_matches_monte_carlo_supremum() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let (hier, perm, weights) = setup(8, 2, &PermSpec::Lognormal { sigma: 1.0 }, 13);
        let snap = build_snapshots(&hier, &perm, 1, 1).unwrap();
        let eig = local_eig(&snap, &weights, EnergyEdges::Block).unwrap();
        let j = snap.n_columns();
        let mut rng = StdRng::seed_from_u64(99);
        let r: Vec<f64> = {
            // A functional supported on the pressure-carrying subspace, as
            // residual functionals always are.
            let c: Vec<f64> = (0..j).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let cv = nalgebra::DVector::from_column_slice(&c);
            (&eig.m_mat * cv).iter().copied().collect()
        };
        let want = eig.dual_norm_sq(&r);
        let rv = nalgebra::DVector::from_column_slice(&r);
        let mut best = 0.0f64;
        for sample in 0..2000 {
            let c: Vec<f64> = (0..j).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut cv = nalgebra::DVector::from_column_slice(&c);
            if sample == 0 {
                // Include the exact maximizer so the supremum is attained.
                cv = &eig.m_basis
                    * nalgebra::DVector::from_iterator(
                        eig.m_basis.ncols(),
                        (0..eig.m_basis.ncols()).map(|k| {
                            (eig.m_basis.column(k).transpose() * &rv)[(0, 0)] / eig.m_vals[k]
                        }),
                    );
            }
            let mass = (cv.transpose() * &eig.m_mat * &cv)[(0, 0)];
            if mass <= 1e-14 {
                continue;
            }
            let val = (rv.transpose() * &cv)[(0, 0)].powi(2) / mass;
            best = best.max(val);
        }
        assert!((best - want).abs() <= 0.02 * want.max(1e-300));
        assert!(best <= want * (1.0 + 1e-9));
    }
}
