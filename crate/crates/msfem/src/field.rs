//! Permeability fields, source terms, boundary data, and the derived edge
//! transmissibilities and cell weights.
//!
//! The quadrature rule of the mixed discretization reduces all material data
//! to one number per edge: interior edges carry the harmonic average
//! `2 / (1/k1 + 1/k2)` of the adjacent cell permeabilities, Dirichlet
//! boundary edges the half-cell value `2 k_t`, and no-flow edges zero. The
//! weighted cell coefficient used by pressure mass matrices is the sum of a
//! cell's edge transmissibilities.

use std::path::Path;

use rand::distributions::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::grid::{FineGrid, GridHierarchy, Side};
use crate::Result;

/// Boundary value along one side, as a function of the side coordinate
/// (x on bottom/top, y on left/right).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryValue {
    Constant(f64),
    /// `a + b * s` with `s` the coordinate along the side.
    Affine { a: f64, b: f64 },
}

impl BoundaryValue {
    /// Evaluates the value at side coordinate `s`.
    pub fn eval(&self, s: f64) -> f64 {
        match *self {
            BoundaryValue::Constant(c) => c,
            BoundaryValue::Affine { a, b } => a + b * s,
        }
    }
}

/// Condition on one domain side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SideCondition {
    /// Prescribed pressure.
    Dirichlet(BoundaryValue),
    /// No-flow (homogeneous Neumann).
    Neumann,
}

/// Per-side boundary specification.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySpec {
    pub left: SideCondition,
    pub right: SideCondition,
    pub bottom: SideCondition,
    pub top: SideCondition,
}

impl BoundarySpec {
    /// Left/right Dirichlet constants, no-flow top and bottom; the standard
    /// flow-through setup.
    pub fn flow_through(p_left: f64, p_right: f64) -> Self {
        BoundarySpec {
            left: SideCondition::Dirichlet(BoundaryValue::Constant(p_left)),
            right: SideCondition::Dirichlet(BoundaryValue::Constant(p_right)),
            bottom: SideCondition::Neumann,
            top: SideCondition::Neumann,
        }
    }

    /// Dirichlet on all four sides with the same boundary function of (x, y),
    /// given per side.
    pub fn dirichlet_all(left: BoundaryValue, right: BoundaryValue, bottom: BoundaryValue, top: BoundaryValue) -> Self {
        BoundarySpec {
            left: SideCondition::Dirichlet(left),
            right: SideCondition::Dirichlet(right),
            bottom: SideCondition::Dirichlet(bottom),
            top: SideCondition::Dirichlet(top),
        }
    }

    pub fn side(&self, side: Side) -> SideCondition {
        match side {
            Side::Left => self.left,
            Side::Right => self.right,
            Side::Bottom => self.bottom,
            Side::Top => self.top,
        }
    }

    /// The pressure needs at least one Dirichlet side to be grounded.
    pub fn validate(&self) -> Result<()> {
        let any_dirichlet = Side::ALL
            .iter()
            .any(|&s| matches!(self.side(s), SideCondition::Dirichlet(_)));
        if any_dirichlet {
            Ok(())
        } else {
            Err(Error::AllNeumann)
        }
    }
}

/// Resolved condition for a single fine edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeCondition {
    Interior,
    /// Prescribed pressure trace (the trapezoidal average over the edge).
    Dirichlet(f64),
    /// Zero normal flux.
    NoFlow,
}

/// Expands a per-side specification into one condition per edge.
pub fn boundary_conditions(grid: &FineGrid, spec: &BoundarySpec) -> Result<Vec<EdgeCondition>> {
    spec.validate()?;
    let mut out = vec![EdgeCondition::Interior; grid.n_edges()];
    for side in Side::ALL {
        let cond = spec.side(side);
        for e in grid.side_edges(side) {
            out[e] = match cond {
                SideCondition::Neumann => EdgeCondition::NoFlow,
                SideCondition::Dirichlet(v) => {
                    let (x, y) = grid.edge_midpoint(e);
                    let s = match side {
                        Side::Left | Side::Right => y,
                        Side::Bottom | Side::Top => x,
                    };
                    EdgeCondition::Dirichlet(v.eval(s))
                }
            };
        }
    }
    Ok(out)
}

/// Cell permeability field.
#[derive(Debug, Clone)]
pub struct Permeability {
    values: Vec<f64>,
}

impl Permeability {
    /// Wraps explicit per-cell values after validating size and positivity.
    pub fn from_values(grid: &FineGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::FieldData(format!(
                "expected {} cells, got {}",
                grid.n_cells(),
                values.len()
            )));
        }
        for (cell, &v) in values.iter().enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                let (ix, iy) = grid.cell_xy(cell);
                return Err(Error::NonPositivePermeability {
                    cell,
                    ix,
                    iy,
                    value: v,
                });
            }
        }
        Ok(Permeability { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, cell: usize) -> f64 {
        self.values[cell]
    }
}

/// Synthetic permeability family.
#[derive(Debug, Clone, PartialEq)]
pub enum PermSpec {
    /// Constant field.
    Uniform { value: f64 },
    /// Unit background with square high-permeability inclusions placed on a
    /// jittered lattice, one per zone.
    Inclusions {
        contrast: f64,
        count: usize,
        size: usize,
    },
    /// Unit background with horizontal high-permeability streaks of seeded
    /// position, height, and extent.
    Channels { contrast: f64, count: usize },
    /// `exp(sigma * z)` with `z` standard normal per cell.
    Lognormal { sigma: f64 },
}

impl PermSpec {
    /// Parses `name,key=value,...` spec strings, e.g.
    /// `inclusions,contrast=1e4,count=100,size=4`.
    pub fn parse(s: &str) -> Result<Self> {
        let mut parts = s.split(',').map(str::trim);
        let name = parts.next().unwrap_or_default();
        let mut pairs = Vec::new();
        for part in parts {
            if part.is_empty() {
                continue;
            }
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::config(format!("malformed spec field `{part}` in `{s}`")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("bad number `{v}` in spec `{s}`")))?;
            pairs.push((k.trim(), v));
        }
        let lookup = |keys: &[&str], default: f64| -> Result<f64> {
            for &(k, v) in &pairs {
                if keys.contains(&k) {
                    return Ok(v);
                }
            }
            Ok(default)
        };
        let check_keys = |allowed: &[&str]| -> Result<()> {
            for &(k, _) in &pairs {
                if !allowed.contains(&k) {
                    return Err(Error::config(format!("unknown key `{k}` in spec `{s}`")));
                }
            }
            Ok(())
        };
        let as_count = |v: f64, what: &str| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 && v <= usize::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(Error::config(format!("{what} must be a positive integer, got {v}")))
            }
        };
        let spec = match name {
            "uniform" => {
                check_keys(&["c", "value"])?;
                PermSpec::Uniform {
                    value: lookup(&["c", "value"], 1.0)?,
                }
            }
            "inclusions" => {
                check_keys(&["contrast", "count", "size"])?;
                PermSpec::Inclusions {
                    contrast: lookup(&["contrast"], 1e4)?,
                    count: as_count(lookup(&["count"], 64.0)?, "count")?,
                    size: as_count(lookup(&["size"], 4.0)?, "size")?,
                }
            }
            "channels" => {
                check_keys(&["contrast", "count"])?;
                PermSpec::Channels {
                    contrast: lookup(&["contrast"], 1e4)?,
                    count: as_count(lookup(&["count"], 8.0)?, "count")?,
                }
            }
            "lognormal" => {
                check_keys(&["sigma"])?;
                PermSpec::Lognormal {
                    sigma: lookup(&["sigma"], 1.0)?,
                }
            }
            other => {
                return Err(Error::config(format!(
                    "unknown permeability generator `{other}` (expected uniform, inclusions, channels, or lognormal)"
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{what} must be positive, got {v}")))
            }
        };
        match *self {
            PermSpec::Uniform { value } => positive(value, "uniform value"),
            PermSpec::Inclusions { contrast, .. } => positive(contrast, "contrast"),
            PermSpec::Channels { contrast, .. } => positive(contrast, "contrast"),
            PermSpec::Lognormal { sigma } => positive(sigma, "sigma"),
        }
    }
}

/// Generates a deterministic permeability field from a spec and seed.
pub fn gen_perm(grid: &FineGrid, spec: &PermSpec, seed: u64) -> Result<Permeability> {
    spec.validate()?;
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = match *spec {
        PermSpec::Uniform { value } => vec![value; grid.n_cells()],
        PermSpec::Lognormal { sigma } => {
            let normal = rand_distr::StandardNormal;
            (0..grid.n_cells())
                .map(|_| {
                    let z: f64 = normal.sample(&mut rng);
                    (sigma * z).exp()
                })
                .collect()
        }
        PermSpec::Inclusions {
            contrast,
            count,
            size,
        } => {
            let mut values = vec![1.0; grid.n_cells()];
            let zk = (count as f64).sqrt().ceil().max(1.0) as usize;
            for z in 0..count {
                let (zx, zy) = (z % zk, z / zk);
                if zy >= zk {
                    break;
                }
                let x0 = zx * nx / zk;
                let x1 = ((zx + 1) * nx / zk).max(x0 + 1);
                let y0 = zy * ny / zk;
                let y1 = ((zy + 1) * ny / zk).max(y0 + 1);
                let (zw, zh) = (x1 - x0, y1 - y0);
                let s = size.min(zw).min(zh).max(1);
                let jx = ((zw - s) / 2).saturating_sub(3).min(2);
                let jy = ((zh - s) / 2).saturating_sub(3).min(2);
                let dx = if jx > 0 {
                    rng.gen_range(0..=2 * jx) as i64 - jx as i64
                } else {
                    0
                };
                let dy = if jy > 0 {
                    rng.gen_range(0..=2 * jy) as i64 - jy as i64
                } else {
                    0
                };
                let ox = (x0 + (zw - s) / 2) as i64 + dx;
                let oy = (y0 + (zh - s) / 2) as i64 + dy;
                for iy in oy..oy + s as i64 {
                    for ix in ox..ox + s as i64 {
                        if ix >= 0 && iy >= 0 && (ix as usize) < nx && (iy as usize) < ny {
                            values[grid.cell(ix as usize, iy as usize)] = contrast;
                        }
                    }
                }
            }
            values
        }
        PermSpec::Channels { contrast, count } => {
            let mut values = vec![1.0; grid.n_cells()];
            for _ in 0..count {
                let y = if ny > 2 { rng.gen_range(1..ny - 1) } else { 0 };
                let height = if ny > 3 { rng.gen_range(1..=2usize) } else { 1 };
                let shape = rng.gen_range(0..3u8);
                let (x0, x1) = match shape {
                    0 => (0, nx),
                    1 => (0, (7 * nx) / 10),
                    _ => ((3 * nx) / 10, nx),
                };
                for iy in y..(y + height).min(ny) {
                    for ix in x0..x1 {
                        values[grid.cell(ix, iy)] = contrast;
                    }
                }
            }
            values
        }
    };
    Permeability::from_values(grid, values)
}

fn parse_raster(grid: &FineGrid, contents: &str, what: &str) -> Result<Vec<f64>> {
    let mut tokens = contents.split_whitespace();
    let mut dim = |name: &str| -> Result<usize> {
        tokens
            .next()
            .ok_or_else(|| Error::FieldData(format!("{what}: missing header dimension {name}")))?
            .parse()
            .map_err(|_| Error::FieldData(format!("{what}: bad header dimension {name}")))
    };
    let nx = dim("nx")?;
    let ny = dim("ny")?;
    if nx != grid.nx() || ny != grid.ny() {
        return Err(Error::FieldData(format!(
            "{what}: raster is {nx}x{ny} but the grid is {}x{}",
            grid.nx(),
            grid.ny()
        )));
    }
    let mut values = Vec::with_capacity(nx * ny);
    for (i, tok) in tokens.by_ref().take(nx * ny).enumerate() {
        let v: f64 = tok
            .parse()
            .map_err(|_| Error::FieldData(format!("{what}: bad value `{tok}` at entry {i}")))?;
        if !v.is_finite() {
            return Err(Error::FieldData(format!(
                "{what}: non-finite value at entry {i}"
            )));
        }
        values.push(v);
    }
    if values.len() < nx * ny {
        return Err(Error::FieldData(format!(
            "{what}: expected {} values, found {}",
            nx * ny,
            values.len()
        )));
    }
    if tokens.next().is_some() {
        return Err(Error::FieldData(format!(
            "{what}: trailing data after {} values",
            nx * ny
        )));
    }
    Ok(values)
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads a permeability raster: header `nx ny`, then `nx * ny` strictly
/// positive values in row-major order, bottom row first.
pub fn load_perm(grid: &FineGrid, path: impl AsRef<Path>) -> Result<Permeability> {
    let contents = read_file(path.as_ref())?;
    parse_perm_text(grid, &contents)
}

/// Parses permeability raster text; see [`load_perm`].
pub fn parse_perm_text(grid: &FineGrid, contents: &str) -> Result<Permeability> {
    let values = parse_raster(grid, contents, "permeability raster")?;
    Permeability::from_values(grid, values)
}

/// Per-cell source density.
#[derive(Debug, Clone)]
pub struct SourceField {
    values: Vec<f64>,
}

impl SourceField {
    pub fn zero(grid: &FineGrid) -> Self {
        SourceField {
            values: vec![0.0; grid.n_cells()],
        }
    }

    pub fn from_values(grid: &FineGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::FieldData(format!(
                "expected {} cells, got {}",
                grid.n_cells(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::FieldData(format!("non-finite source at cell {i}")));
        }
        Ok(SourceField { values })
    }

    /// Loads a source raster with the same format as [`load_perm`], values of
    /// any sign.
    pub fn load(grid: &FineGrid, path: impl AsRef<Path>) -> Result<Self> {
        let contents = read_file(path.as_ref())?;
        Self::parse_text(grid, &contents)
    }

    /// Parses source raster text; see [`SourceField::load`].
    pub fn parse_text(grid: &FineGrid, contents: &str) -> Result<Self> {
        let values = parse_raster(grid, contents, "source raster")?;
        Self::from_values(grid, values)
    }

    /// A net-zero source: `+magnitude` on all cells of one coarse element and
    /// `-magnitude` on a distant one.
    pub fn balanced_blobs(hier: &GridHierarchy, magnitude: f64) -> Self {
        let c = hier.coarse();
        let src = c.element(1.min(c.nx() - 1), 1.min(c.ny() - 1));
        let sink = c.element(
            c.nx() - 1 - 1.min(c.nx() - 1),
            c.ny() - 1 - 1.min(c.ny() - 1),
        );
        let mut values = vec![0.0; hier.fine().n_cells()];
        for cell in hier.element_cells(src) {
            values[cell] = magnitude;
        }
        for cell in hier.element_cells(sink) {
            values[cell] = -magnitude;
        }
        if src == sink {
            for cell in hier.element_cells(src) {
                values[cell] = 0.0;
            }
        }
        SourceField { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, cell: usize) -> f64 {
        self.values[cell]
    }
}

/// Edge transmissibilities: harmonic average on interior edges, `2 k_t` on
/// Dirichlet edges, zero on no-flow edges.
pub fn transmissibilities(
    grid: &FineGrid,
    perm: &Permeability,
    bc: &[EdgeCondition],
) -> Vec<f64> {
    assert_eq!(bc.len(), grid.n_edges());
    (0..grid.n_edges())
        .map(|e| {
            let (neg, pos) = grid.edge_cells(e);
            match bc[e] {
                EdgeCondition::NoFlow => 0.0,
                EdgeCondition::Dirichlet(_) => {
                    let t = neg.or(pos).expect("edge with no adjacent cell");
                    2.0 * perm.at(t)
                }
                EdgeCondition::Interior => {
                    let (a, b) = (
                        neg.expect("interior edge missing negative cell"),
                        pos.expect("interior edge missing positive cell"),
                    );
                    2.0 / (1.0 / perm.at(a) + 1.0 / perm.at(b))
                }
            }
        })
        .collect()
}

/// Weighted cell coefficients: each cell sums its edge transmissibilities.
pub fn cell_weights(grid: &FineGrid, trans: &[f64]) -> Vec<f64> {
    assert_eq!(trans.len(), grid.n_edges());
    (0..grid.n_cells())
        .map(|t| grid.cell_edges(t).iter().map(|&e| trans[e]).sum())
        .collect()
}
