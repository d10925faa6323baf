//! Symmetric banded direct solver and a Jacobi-preconditioned conjugate
//! gradient fallback.
//!
//! Every linear system in the pipeline is symmetric positive definite with a
//! known band profile: the fine five-point pressure system has bandwidth `nx`
//! in row-major cell order, local block systems have the block width, and the
//! coarse system is banded once dofs are numbered element by element. A dense
//! band Cholesky factorization is therefore the natural direct solver; the
//! conjugate gradient path covers systems past the direct-size threshold and
//! doubles as an independent cross-check of the factorization.

use crate::error::Error;
use crate::Result;

/// Symmetric matrix stored by its lower band.
///
/// Entry `(i, j)` with `i - bw <= j <= i` lives at `rows[i * (bw + 1) + (j - i
/// + bw)]`; entries outside the band are structurally zero.
#[derive(Debug, Clone)]
pub struct SymBanded {
    n: usize,
    bw: usize,
    rows: Vec<f64>,
}

impl SymBanded {
    /// Zero matrix of size `n` with half-bandwidth `bw` (clamped to `n - 1`).
    pub fn new(n: usize, bw: usize) -> Self {
        let bw = if n == 0 { 0 } else { bw.min(n - 1) };
        SymBanded {
            n,
            bw,
            rows: vec![0.0; n * (bw + 1)],
        }
    }

    /// Matrix dimension.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Half-bandwidth of the stored profile.
    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Adds `v` to entry `(i, j)`; symmetric entries are stored once.
    ///
    /// Panics if `|i - j|` exceeds the bandwidth.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        assert!(
            hi - lo <= self.bw,
            "entry ({i}, {j}) outside bandwidth {}",
            self.bw
        );
        let s = self.slot(hi, lo);
        self.rows[s] += v;
    }

    /// Returns entry `(i, j)`, zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        if hi - lo > self.bw {
            0.0
        } else {
            self.rows[self.slot(hi, lo)]
        }
    }

    /// Diagonal as a vector.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.rows[self.slot(i, i)]).collect()
    }

    /// Dense symmetric matvec `y = A x` using the band profile.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        y.fill(0.0);
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.bw);
            let base = i * (self.bw + 1) + self.bw;
            let mut acc = 0.0;
            for j in j0..i {
                let v = self.rows[base - (i - j)];
                acc += v * x[j];
                y[j] += v * x[i];
            }
            acc += self.rows[base] * x[i];
            y[i] += acc;
        }
    }

    /// Residual `b - A x` into a fresh vector.
    pub fn residual(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        let mut ax = vec![0.0; self.n];
        self.matvec(x, &mut ax);
        b.iter().zip(ax).map(|(bi, axi)| bi - axi).collect()
    }

    /// Band Cholesky factorization `A = L L^T`.
    ///
    /// Fails with [`Error::NotPositiveDefinite`] when a pivot drops to or
    /// below `pivot_floor` times the original diagonal entry (ticking floor
    /// for exact zero diagonals), which is how duplicated or dependent basis
    /// fields in a coarse system surface.
    pub fn cholesky(&self, pivot_floor: f64) -> Result<BandedCholesky> {
        let bw = self.bw;
        let mut l = self.rows.clone();
        let stride = bw + 1;
        for i in 0..self.n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut sum = l[i * stride + (j + bw - i)];
                for k in k0..j {
                    sum -= l[i * stride + (k + bw - i)] * l[j * stride + (k + bw - j)];
                }
                if j < i {
                    l[i * stride + (j + bw - i)] = sum / l[j * stride + bw];
                } else {
                    let orig = self.rows[i * stride + bw].abs();
                    let floor = pivot_floor * orig.max(f64::MIN_POSITIVE);
                    if !(sum > floor) {
                        return Err(Error::NotPositiveDefinite {
                            index: i,
                            detail: format!("pivot {sum:.3e} against floor {floor:.3e}"),
                        });
                    }
                    l[i * stride + bw] = sum.sqrt();
                }
            }
        }
        Ok(BandedCholesky {
            n: self.n,
            bw,
            l,
        })
    }
}

/// Lower-triangular band factor produced by [`SymBanded::cholesky`].
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    /// Solves `L L^T x = b` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        let stride = self.bw + 1;
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.bw);
            let mut sum = x[i];
            for j in j0..i {
                sum -= self.l[i * stride + (j + self.bw - i)] * x[j];
            }
            x[i] = sum / self.l[i * stride + self.bw];
        }
        for i in (0..self.n).rev() {
            let mut sum = x[i];
            let jmax = (i + self.bw).min(self.n - 1);
            for j in (i + 1)..=jmax {
                sum -= self.l[j * stride + (i + self.bw - j)] * x[j];
            }
            x[i] = sum / self.l[i * stride + self.bw];
        }
    }

    /// Solves into a fresh vector.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Outcome of a linear solve, with the measured relative residual.
#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Solution vector.
    pub x: Vec<f64>,
    /// `||b - A x|| / ||b||` (zero right-hand side reports zero).
    pub rel_residual: f64,
    /// Iterations taken (zero for the direct path).
    pub iterations: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Direct band Cholesky solve with iterative refinement until the residual
/// meets `rtol` (at most three refinement rounds).
pub fn solve_direct(a: &SymBanded, b: &[f64], rtol: f64) -> Result<SolveReport> {
    let chol = a.cholesky(1e-14)?;
    solve_with_factor(a, &chol, b, rtol)
}

/// Refined solve against an existing factorization of `a`.
///
/// Refinement continues until the relative residual stops improving or drops
/// below the floor where further rounds cannot help; `rtol` is the
/// acceptability threshold for the final residual, not the stopping target.
pub fn solve_with_factor(
    a: &SymBanded,
    chol: &BandedCholesky,
    b: &[f64],
    rtol: f64,
) -> Result<SolveReport> {
    let bnorm = norm(b);
    let mut x = chol.solve(b);
    if bnorm == 0.0 {
        return Ok(SolveReport {
            x,
            rel_residual: 0.0,
            iterations: 0,
        });
    }
    let floor = rtol.min(1e-15);
    let mut rel = norm(&a.residual(&x, b)) / bnorm;
    let mut iterations = 0;
    for _ in 0..5 {
        if rel <= floor {
            break;
        }
        let r = a.residual(&x, b);
        let dx = chol.solve(&r);
        let trial: Vec<f64> = x.iter().zip(&dx).map(|(xi, di)| xi + di).collect();
        let trial_rel = norm(&a.residual(&trial, b)) / bnorm;
        if trial_rel >= rel {
            break;
        }
        x = trial;
        rel = trial_rel;
        iterations += 1;
    }
    if rel > rtol {
        return Err(Error::SolverStalled {
            iterations,
            residual: rel,
            target: rtol,
        });
    }
    Ok(SolveReport {
        x,
        rel_residual: rel,
        iterations,
    })
}

/// Jacobi-preconditioned conjugate gradients on a banded SPD matrix.
pub fn solve_cg(a: &SymBanded, b: &[f64], rtol: f64, max_iters: usize) -> Result<SolveReport> {
    let n = a.dim();
    assert_eq!(b.len(), n);
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(SolveReport {
            x: vec![0.0; n],
            rel_residual: 0.0,
            iterations: 0,
        });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iters {
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::SolverStalled {
                iterations: it,
                residual: norm(&r) / bnorm,
                target: rtol,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = norm(&r) / bnorm;
        if rel <= rtol {
            return Ok(SolveReport {
                x,
                rel_residual: rel,
                iterations: it,
            });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverStalled {
        iterations: max_iters,
        residual: norm(&r) / bnorm,
        target: rtol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn laplacian_1d(n: usize) -> SymBanded {
        let mut a = SymBanded::new(n, 1);
        for i in 0..n {
            a.add(i, i, 2.0);
            if i + 1 < n {
                a.add(i, i + 1, -1.0);
            }
        }
        a
    }

    #[test]
    fn direct_solve_matches_manual_tridiagonal() {
        let a = laplacian_1d(4);
        let b = vec![1.0, 0.0, 0.0, 1.0];
        let rep = solve_direct(&a, &b, 1e-12).unwrap();
        for (xi, want) in rep.x.iter().zip([1.0, 1.0, 1.0, 1.0]) {
            assert!((xi - want).abs() < 1e-12, "got {xi}, want {want}");
        }
    }

    #[test]
    fn matvec_agrees_with_dense_random_band() {
        let mut rng = StdRng::seed_from_u64(11);
        let n = 17;
        let bw = 4;
        let mut a = SymBanded::new(n, bw);
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i.saturating_sub(bw)..=i {
                let v: f64 = rng.gen_range(-1.0..1.0);
                a.add(i, j, v);
                dense[i][j] += v;
                if i != j {
                    dense[j][i] += v;
                }
            }
        }
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut y = vec![0.0; n];
        a.matvec(&x, &mut y);
        for i in 0..n {
            let want: f64 = (0..n).map(|j| dense[i][j] * x[j]).sum();
            assert!((y[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite_matrix() {
        let mut a = SymBanded::new(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, 1.0);
        a.add(0, 1, 2.0);
        match a.cholesky(1e-14) {
            Err(Error::NotPositiveDefinite { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected pivot failure, got {other:?}"),
        }
    }

    #[test]
    fn cg_and_direct_agree_on_random_spd_system() {
        let mut rng = StdRng::seed_from_u64(23);
        let n = 60;
        let bw = 6;
        let mut a = SymBanded::new(n, bw);
        for i in 0..n {
            a.add(i, i, 8.0 + rng.gen_range(0.0..1.0));
            for j in i.saturating_sub(bw)..i {
                a.add(i, j, rng.gen_range(-0.5..0.5));
            }
        }
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let direct = solve_direct(&a, &b, 1e-12).unwrap();
        let cg = solve_cg(&a, &b, 1e-13, 10 * n).unwrap();
        for (d, c) in direct.x.iter().zip(&cg.x) {
            assert!((d - c).abs() < 1e-10, "direct {d} vs cg {c}");
        }
        assert!(cg.iterations > 0);
    }

    #[test]
    fn refinement_reports_small_residual() {
        let mut rng = StdRng::seed_from_u64(5);
        let n = 40;
        let mut a = SymBanded::new(n, 3);
        for i in 0..n {
            a.add(i, i, 4.0);
            for j in i.saturating_sub(3)..i {
                a.add(i, j, rng.gen_range(-0.9..0.9));
            }
        }
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rep = solve_direct(&a, &b, 1e-13).unwrap();
        assert!(rep.rel_residual <= 1e-13);
    }

    #[test]
    fn zero_rhs_returns_zero_solution() {
        let a = laplacian_1d(5);
        let rep = solve_direct(&a, &[0.0; 5], 1e-12).unwrap();
        assert!(rep.x.iter().all(|&x| x == 0.0));
        let rep = solve_cg(&a, &[0.0; 5], 1e-12, 100).unwrap();
        assert!(rep.x.iter().all(|&x| x == 0.0));
    }
}
