//! Enrichment loop orchestration: offline and online pipelines, uniform and
//! adaptive selection, with per-level history records.
//!
//! A run solves the fine problem once as the error reference, builds the
//! initial offline space, then alternates coarse solves with basis additions
//! until a stopping rule fires. Offline enrichment draws the next precomputed
//! eigenfields; online enrichment adds Riesz representatives of the current
//! residual. Colored sweeps split one enrichment level into four subiterations
//! over parity classes of the coarse grid, re-solving between classes so that
//! neighboring elements never react to the same residual.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::Error;
use crate::field::{
    boundary_conditions, cell_weights, transmissibilities, BoundarySpec, EdgeCondition,
    Permeability, SourceField,
};
use crate::fine::{self, EnergyScope, FineSolution, PressureSystem, SolverOptions};
use crate::grid::GridHierarchy;
use crate::indicator::{eta_offline, residual_vector, select_elements, LocalEnergyOp, OnlineBasis};
use crate::multiscale::{
    assemble_coarse, merge_corrections, solve_ms, BasisTag, MsSolution, MultiscaleSpace,
};
use crate::snapshot::{build_correction, build_snapshots, SnapshotSet};
use crate::spectral::{local_eig, select_offline, EnergyEdges, OfflineEig};
use crate::Result;

/// Enrichment strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    OfflineAdaptive,
    OnlineAdaptive,
    OfflineUniform,
    OnlineUniform,
}

impl Mode {
    pub fn is_online(self) -> bool {
        matches!(self, Mode::OnlineAdaptive | Mode::OnlineUniform)
    }

    pub fn is_adaptive(self) -> bool {
        matches!(self, Mode::OfflineAdaptive | Mode::OnlineAdaptive)
    }
}

/// How online additions within one level are grouped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    /// All additions come from the level's single residual.
    Batch,
    /// Four subiterations over the parity color classes, re-solving between
    /// them.
    Colored,
}

/// Indicator driving offline-adaptive selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OfflineIndicator {
    /// Residual dual norm scaled by the next eigenvalue.
    Weighted,
    /// True local error energy against the fine reference (experiment mode).
    Exact,
}

/// Problem data shared by every pipeline stage.
pub struct Problem {
    pub hier: GridHierarchy,
    pub perm: Permeability,
    pub source: SourceField,
    pub bc: Vec<EdgeCondition>,
    pub trans: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Problem {
    pub fn new(
        hier: GridHierarchy,
        perm: Permeability,
        spec: &BoundarySpec,
        source: SourceField,
    ) -> Result<Self> {
        let bc = boundary_conditions(hier.fine(), spec)?;
        let trans = transmissibilities(hier.fine(), &perm, &bc);
        let weights = cell_weights(hier.fine(), &trans);
        Ok(Problem {
            hier,
            perm,
            source,
            bc,
            trans,
            weights,
        })
    }
}

#[derive(Debug, Clone)]
pub struct EnrichmentConfig {
    pub mode: Mode,
    /// Selection fraction for adaptive modes.
    pub theta: f64,
    /// Offline basis count per element in the initial space.
    pub init_basis: usize,
    /// Offline fields added per selected element per level.
    pub add_count: usize,
    /// Oversampling layers for snapshots and corrections.
    pub layers: usize,
    /// Stop once `max_i eta_i` falls to this value.
    pub tol: f64,
    /// Stop after this many enrichment steps.
    pub max_iters: usize,
    /// Stop once total dofs reach this value.
    pub dof_cap: usize,
    /// Online grouping; `None` picks batch for adaptive, colored for uniform.
    pub sweep: Option<Sweep>,
    pub indicator: OfflineIndicator,
    pub solver: SolverOptions,
}

impl Default for EnrichmentConfig {
    fn default() -> Self {
        EnrichmentConfig {
            mode: Mode::OfflineAdaptive,
            theta: 0.7,
            init_basis: 3,
            add_count: 1,
            layers: 2,
            tol: 0.0,
            max_iters: 20,
            dof_cap: usize::MAX,
            sweep: None,
            indicator: OfflineIndicator::Weighted,
            solver: SolverOptions::default(),
        }
    }
}

impl EnrichmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::config(format!(
                "theta must lie in (0, 1], got {}",
                self.theta
            )));
        }
        if self.init_basis == 0 {
            return Err(Error::config("initial basis count must be at least 1"));
        }
        if self.add_count == 0 {
            return Err(Error::config("per-element add count must be at least 1"));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(Error::config(format!(
                "tolerance must be nonnegative, got {}",
                self.tol
            )));
        }
        if self.dof_cap == 0 {
            return Err(Error::config("dof cap must be at least 1"));
        }
        Ok(())
    }

    fn effective_sweep(&self) -> Sweep {
        self.sweep.unwrap_or(match self.mode {
            Mode::OnlineUniform => Sweep::Colored,
            _ => Sweep::Batch,
        })
    }
}

/// One history row, written at every level solve before enrichment.
#[derive(Debug, Clone)]
pub struct LevelRecord {
    /// Level index, starting at 1 for the initial space.
    pub iter: usize,
    pub dofs: usize,
    /// Relative weighted pressure error against the fine reference.
    pub erp: f64,
    /// Relative flux energy error against the fine reference.
    pub eru: f64,
    /// Sum of squared indicators over all elements.
    pub sum_eta2: f64,
    /// Milliseconds since the run started.
    pub wall_ms: f64,
    /// Per-element basis counts at this level.
    pub levels: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Tolerance,
    DofCap,
    MaxIters,
    Saturated,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Tolerance => "tolerance",
            StopReason::DofCap => "dof-cap",
            StopReason::MaxIters => "max-iters",
            StopReason::Saturated => "saturated",
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnrichmentHistory {
    pub records: Vec<LevelRecord>,
    pub stop: StopReason,
}

/// Everything a finished run exposes.
pub struct RunOutcome {
    pub history: EnrichmentHistory,
    /// Multiscale solution at every recorded level, in record order.
    pub solutions: Vec<MsSolution>,
    pub reference: FineSolution,
}

impl RunOutcome {
    pub fn final_solution(&self) -> &MsSolution {
        self.solutions.last().expect("a run records at least one level")
    }
}

/// True local error energy of the multiscale flux on one element, boundary
/// terms carried by the pressure difference.
pub fn exact_indicator(
    problem: &Problem,
    reference: &FineSolution,
    ms: &MsSolution,
    element: usize,
) -> Result<f64> {
    let flux_diff: Vec<f64> = reference
        .flux
        .iter()
        .zip(&ms.flux)
        .map(|(a, b)| a - b)
        .collect();
    let p_diff: Vec<f64> = reference
        .pressure
        .iter()
        .zip(&ms.pressure)
        .map(|(a, b)| a - b)
        .collect();
    fine::energy_norm_sq(
        &problem.trans,
        &flux_diff,
        Some(&p_diff),
        EnergyScope::ElementWithBoundary {
            hier: &problem.hier,
            element,
        },
    )
}

struct ElementData {
    /// All offline eigenfields on the element, constant-first.
    fields: Vec<Vec<f64>>,
    /// Snapshot family and eigen data, kept for the weighted offline
    /// indicator.
    offline: Option<(SnapshotSet, OfflineEig)>,
    /// Factored local energy form, kept for online Riesz solves.
    op: Option<LocalEnergyOp>,
}

fn precompute(problem: &Problem, cfg: &EnrichmentConfig) -> Result<Vec<ElementData>> {
    let edges = if cfg.layers == 0 {
        EnergyEdges::Interior
    } else {
        EnergyEdges::Block
    };
    let online = cfg.mode.is_online();
    (0..problem.hier.n_elements())
        .into_par_iter()
        .map(|el| {
            let snap = build_snapshots(&problem.hier, &problem.perm, el, cfg.layers)?;
            let eig = local_eig(&snap, &problem.weights, edges)?;
            let fields = select_offline(&eig, &snap, &problem.weights, &problem.hier, eig.n_modes());
            let op = if online {
                Some(LocalEnergyOp::new(&problem.hier, &problem.trans, el)?)
            } else {
                None
            };
            let offline = if online { None } else { Some((snap, eig)) };
            Ok(ElementData {
                fields,
                offline,
                op,
            })
        })
        .collect()
}

fn build_corrections(problem: &Problem, cfg: &EnrichmentConfig) -> Result<Vec<f64>> {
    let corrections = (0..problem.hier.n_elements())
        .into_par_iter()
        .map(|el| build_correction(&problem.hier, &problem.perm, &problem.source, el, cfg.layers))
        .collect::<Result<Vec<_>>>()?;
    Ok(merge_corrections(&problem.hier, &corrections))
}

fn as_fine(ms: &MsSolution) -> FineSolution {
    FineSolution {
        pressure: ms.pressure.clone(),
        flux: ms.flux.clone(),
    }
}

/// Indicators for every element at the current solution; online modes also
/// return the Riesz fields they were computed from.
fn measure(
    problem: &Problem,
    cfg: &EnrichmentConfig,
    data: &[ElementData],
    space: &MultiscaleSpace,
    reference: &FineSolution,
    ms: &MsSolution,
    res: &[f64],
) -> Result<(Vec<f64>, Vec<Option<OnlineBasis>>)> {
    let n = problem.hier.n_elements();
    if cfg.mode.is_online() {
        let pairs = (0..n)
            .into_par_iter()
            .map(|el| {
                let basis = data[el].op.as_ref().expect("online data").riesz(res)?;
                Ok((basis.eta_sq, Some(basis)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(pairs.into_iter().unzip())
    } else {
        let etas = match cfg.indicator {
            OfflineIndicator::Weighted => (0..n)
                .into_par_iter()
                .map(|el| {
                    let (snap, eig) = data[el].offline.as_ref().expect("offline data");
                    let r = residual_vector(&problem.hier, snap, res);
                    Ok(eta_offline(eig, &r, space.count(el)))
                })
                .collect::<Result<Vec<_>>>()?,
            OfflineIndicator::Exact => (0..n)
                .into_par_iter()
                .map(|el| exact_indicator(problem, reference, ms, el))
                .collect::<Result<Vec<_>>>()?,
        };
        Ok((etas, vec![None; n]))
    }
}

fn normalized_online_field(problem: &Problem, element: usize, basis: &OnlineBasis) -> Option<Vec<f64>> {
    let area = problem.hier.fine().cell_area();
    let cells = problem.hier.element_cells(element);
    let norm_sq: f64 = cells
        .iter()
        .zip(&basis.field)
        .map(|(&cell, &v)| problem.weights[cell] * v * v * area)
        .sum();
    if norm_sq <= 0.0 {
        return None;
    }
    let scale = 1.0 / norm_sq.sqrt();
    Some(basis.field.iter().map(|&v| v * scale).collect())
}

fn enrich_offline(
    cfg: &EnrichmentConfig,
    data: &[ElementData],
    space: &mut MultiscaleSpace,
    etas: &[f64],
) -> Result<bool> {
    let selected: Vec<usize> = if cfg.mode.is_adaptive() {
        select_elements(etas, cfg.theta)
    } else {
        (0..space.n_elements()).collect()
    };
    let mut any = false;
    for el in selected {
        let have = space.count(el);
        let avail = data[el].fields.len();
        for rank in have..(have + cfg.add_count).min(avail) {
            space.add_basis(el, data[el].fields[rank].clone(), BasisTag::Offline { rank })?;
            any = true;
        }
    }
    Ok(any)
}

fn add_online_bases(
    problem: &Problem,
    cfg: &EnrichmentConfig,
    space: &mut MultiscaleSpace,
    level: usize,
    candidates: &[usize],
    etas: &[f64],
    bases: &mut [Option<OnlineBasis>],
) -> Result<bool> {
    let local_etas: Vec<f64> = candidates.iter().map(|&el| etas[el]).collect();
    let picked: Vec<usize> = if cfg.mode.is_adaptive() {
        select_elements(&local_etas, cfg.theta)
            .into_iter()
            .map(|i| candidates[i])
            .collect()
    } else {
        candidates
            .iter()
            .copied()
            .filter(|&el| etas[el] > 0.0)
            .collect()
    };
    let mut any = false;
    for el in picked {
        let basis = bases[el].take().expect("online basis for picked element");
        if let Some(field) = normalized_online_field(problem, el, &basis) {
            space.add_basis(el, field, BasisTag::Online { level })?;
            any = true;
        }
    }
    Ok(any)
}

fn enrich_online(
    problem: &Problem,
    cfg: &EnrichmentConfig,
    data: &[ElementData],
    space: &mut MultiscaleSpace,
    fine_sys: &PressureSystem,
    p_corr: &[f64],
    reference: &FineSolution,
    level: usize,
    etas: Vec<f64>,
    mut bases: Vec<Option<OnlineBasis>>,
) -> Result<bool> {
    match cfg.effective_sweep() {
        Sweep::Batch => {
            let all: Vec<usize> = (0..space.n_elements()).collect();
            add_online_bases(problem, cfg, space, level, &all, &etas, &mut bases)
        }
        Sweep::Colored => {
            let classes = problem.hier.four_coloring();
            let mut any = false;
            let mut etas = etas;
            let mut bases = bases;
            for (ci, class) in classes.iter().enumerate() {
                if ci > 0 {
                    let coarse = assemble_coarse(&problem.hier, &problem.trans, space, fine_sys, p_corr);
                    let ms = solve_ms(
                        &problem.hier,
                        &problem.trans,
                        &problem.bc,
                        space,
                        &coarse,
                        p_corr,
                        level,
                    )?;
                    let res = fine_sys.residual(&ms.pressure);
                    let (e, b) = measure(problem, cfg, data, space, reference, &ms, &res)?;
                    etas = e;
                    bases = b;
                }
                if add_online_bases(problem, cfg, space, level, class, &etas, &mut bases)? {
                    any = true;
                }
            }
            Ok(any)
        }
    }
}

/// Runs one enrichment experiment end to end.
pub fn run(problem: &Problem, cfg: &EnrichmentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let data = precompute(problem, cfg)?;
    let p_corr = build_corrections(problem, cfg)?;
    let (reference, fine_sys) = fine::solve_fine(
        problem.hier.fine(),
        &problem.trans,
        &problem.bc,
        problem.source.values(),
        &cfg.solver,
    )?;

    let mut space = MultiscaleSpace::new(problem.hier.n_elements());
    for (el, d) in data.iter().enumerate() {
        for (rank, field) in d.fields.iter().take(cfg.init_basis).enumerate() {
            space.add_basis(el, field.clone(), BasisTag::Offline { rank })?;
        }
    }

    let mut records: Vec<LevelRecord> = Vec::new();
    let mut solutions: Vec<MsSolution> = Vec::new();
    let stop;
    let mut level = 1;
    loop {
        let coarse = assemble_coarse(&problem.hier, &problem.trans, &space, &fine_sys, &p_corr);
        let ms = solve_ms(
            &problem.hier,
            &problem.trans,
            &problem.bc,
            &space,
            &coarse,
            &p_corr,
            level,
        )?;
        let res = fine_sys.residual(&ms.pressure);
        let (etas, bases) = measure(problem, cfg, &data, &space, &reference, &ms, &res)?;
        let (erp, eru) = fine::rel_errors(problem.hier.fine(), &problem.trans, &as_fine(&ms), &reference)?;
        records.push(LevelRecord {
            iter: level,
            dofs: space.dofs(),
            erp,
            eru,
            sum_eta2: etas.iter().sum(),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            levels: space.counts(),
        });
        solutions.push(ms);

        let max_eta2 = etas.iter().cloned().fold(0.0f64, f64::max);
        if max_eta2.sqrt() <= cfg.tol {
            stop = StopReason::Tolerance;
            break;
        }
        if space.dofs() >= cfg.dof_cap {
            stop = StopReason::DofCap;
            break;
        }
        if records.len() - 1 >= cfg.max_iters {
            stop = StopReason::MaxIters;
            break;
        }
        let added = if cfg.mode.is_online() {
            enrich_online(
                problem, cfg, &data, &mut space, &fine_sys, &p_corr, &reference, level, etas,
                bases,
            )?
        } else {
            enrich_offline(cfg, &data, &mut space, &etas)?
        };
        if !added {
            stop = StopReason::Saturated;
            break;
        }
        level += 1;
    }

    Ok(RunOutcome {
        history: EnrichmentHistory { records, stop },
        solutions,
        reference,
    })
}
