//! Exact enumeration of dyadic incidences and the inequality evaluators built
//! on it.
//!
//! The default counter sweeps each tube across the occupied columns of `P`,
//! computing the exact row range per column and intersecting it with the
//! column's sorted cells. A quadratic mode is kept as an oracle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::grid::{self, Cell};
use crate::sets::{self, CellFamily, DualCellFamily};

/// Counting algorithm.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CountMode {
    #[default]
    Sweep,
    Brute,
}

/// All incident (cell, tube) pairs, stored as per-tube fibers of cell indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IncidenceSet {
    m: u32,
    tube_ptr: Vec<usize>,
    tube_cells: Vec<u32>,
    cell_degree: Vec<u32>,
}

impl IncidenceSet {
    /// Assembles a set from per-tube fibers (each sorted ascending).
    pub fn from_fibers(m: u32, n_cells: usize, fibers: Vec<Vec<u32>>) -> Self {
        let mut tube_ptr = Vec::with_capacity(fibers.len() + 1);
        tube_ptr.push(0);
        let total: usize = fibers.iter().map(Vec::len).sum();
        let mut tube_cells = Vec::with_capacity(total);
        let mut cell_degree = vec![0u32; n_cells];
        for f in fibers {
            for &c in &f {
                cell_degree[c as usize] += 1;
            }
            tube_cells.extend_from_slice(&f);
            tube_ptr.push(tube_cells.len());
        }
        IncidenceSet {
            m,
            tube_ptr,
            tube_cells,
            cell_degree,
        }
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn len(&self) -> usize {
        self.tube_cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tube_cells.is_empty()
    }

    pub fn n_tubes(&self) -> usize {
        self.tube_ptr.len() - 1
    }

    pub fn n_cells(&self) -> usize {
        self.cell_degree.len()
    }

    /// Indices of the cells met by tube `ti`, ascending.
    pub fn tube_fiber(&self, ti: usize) -> &[u32] {
        &self.tube_cells[self.tube_ptr[ti]..self.tube_ptr[ti + 1]]
    }

    pub fn tube_count(&self, ti: usize) -> usize {
        self.tube_ptr[ti + 1] - self.tube_ptr[ti]
    }

    pub fn tube_counts(&self) -> Vec<usize> {
        (0..self.n_tubes()).map(|t| self.tube_count(t)).collect()
    }

    /// Number of tubes through cell `ci`.
    pub fn cell_degree(&self, ci: usize) -> usize {
        self.cell_degree[ci] as usize
    }

    pub fn cell_degrees(&self) -> &[u32] {
        &self.cell_degree
    }

    /// `(cell index, tube index)` pairs ordered by tube, then cell.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_tubes()).flat_map(move |t| self.tube_fiber(t).iter().map(move |&c| (c as usize, t)))
    }

    /// The incidences of the cells with `keep[ci]`, reindexed to the kept
    /// cells in their original order.
    pub fn restrict(&self, keep: &[bool]) -> IncidenceSet {
        assert_eq!(keep.len(), self.n_cells());
        let mut map = vec![u32::MAX; keep.len()];
        let mut next = 0u32;
        for (ci, _) in keep.iter().enumerate().filter(|(_, &k)| k) {
            map[ci] = next;
            next += 1;
        }
        let fibers = (0..self.n_tubes())
            .map(|t| {
                self.tube_fiber(t)
                    .iter()
                    .filter(|&&c| keep[c as usize])
                    .map(|&c| map[c as usize])
                    .collect()
            })
            .collect();
        IncidenceSet::from_fibers(self.m, next as usize, fibers)
    }

    /// Tubes through each cell, ascending.
    pub fn cell_fibers(&self) -> Vec<Vec<u32>> {
        let mut out: Vec<Vec<u32>> = self
            .cell_degree
            .iter()
            .map(|&d| Vec::with_capacity(d as usize))
            .collect();
        for (c, t) in self.pairs() {
            out[c].push(t as u32);
        }
        out
    }
}

/// Occupied columns of a family sorted by `(x, y)`: `(x, start, end)`.
pub(crate) fn column_index(cells: &[Cell]) -> Vec<(i64, usize, usize)> {
    let mut cols = Vec::new();
    let mut i = 0;
    while i < cells.len() {
        let x = cells[i].x;
        let s = i;
        while i < cells.len() && cells[i].x == x {
            i += 1;
        }
        cols.push((x, s, i));
    }
    cols
}

fn sweep_fiber(m: u32, cells: &[Cell], cols: &[(i64, usize, usize)], a: i64, b: i64) -> Vec<u32> {
    let mut out = Vec::new();
    for &(x, s, e) in cols {
        let (lo, hi) = grid::column_rows(m, a, b, x);
        let col = &cells[s..e];
        let i0 = col.partition_point(|c| c.y < lo);
        let i1 = col.partition_point(|c| c.y <= hi);
        out.extend((s + i0..s + i1).map(|i| i as u32));
    }
    out
}

fn sweep_count(m: u32, cells: &[Cell], cols: &[(i64, usize, usize)], a: i64, b: i64) -> usize {
    cols.iter()
        .map(|&(x, s, e)| {
            let (lo, hi) = grid::column_rows(m, a, b, x);
            let col = &cells[s..e];
            col.partition_point(|c| c.y <= hi) - col.partition_point(|c| c.y < lo)
        })
        .sum()
}

fn brute_fiber(m: u32, cells: &[Cell], a: i64, b: i64) -> Vec<u32> {
    cells
        .iter()
        .enumerate()
        .filter(|(_, c)| grid::meets(m, c.x, c.y, a, b))
        .map(|(i, _)| i as u32)
        .collect()
}

fn check_scale(p: &CellFamily, t: &DualCellFamily) -> Result<u32> {
    if p.m() != t.m() {
        return Err(Error::ScaleMismatch(p.m(), t.m()));
    }
    Ok(p.m())
}

/// All incidences between `p` and `t`.
pub fn incidences(p: &CellFamily, t: &DualCellFamily) -> Result<IncidenceSet> {
    incidences_with(p, t, CountMode::Sweep, Exec::Auto)
}

pub fn incidences_with(p: &CellFamily, t: &DualCellFamily, mode: CountMode, exec: Exec) -> Result<IncidenceSet> {
    let m = check_scale(p, t)?;
    let cells = p.cells();
    let fibers = match mode {
        CountMode::Sweep => {
            let cols = column_index(cells);
            exec::map(exec, t.cells(), |d| sweep_fiber(m, cells, &cols, d.a, d.b))
        }
        CountMode::Brute => exec::map(exec, t.cells(), |d| brute_fiber(m, cells, d.a, d.b)),
    };
    Ok(IncidenceSet::from_fibers(m, cells.len(), fibers))
}

/// `|𝒫̄_T|` for every tube, without storing pairs.
pub fn tube_counts(p: &CellFamily, t: &DualCellFamily, exec: Exec) -> Result<Vec<usize>> {
    let m = check_scale(p, t)?;
    let cells = p.cells();
    let cols = column_index(cells);
    Ok(exec::map(exec, t.cells(), |d| sweep_count(m, cells, &cols, d.a, d.b)))
}

/// Number of incident pairs.
pub fn count_incidences(p: &CellFamily, t: &DualCellFamily) -> Result<usize> {
    Ok(tube_counts(p, t, Exec::Auto)?.iter().sum())
}

/// `f(s,t) = (s²+st+t²)/(s+t)`.
pub fn fu_ren_exponent(s: f64, t: f64) -> f64 {
    (s * s + s * t + t * t) / (s + t)
}

/// Parameters echoed by a [`BoundReport`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub m: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_l: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
}

/// Both sides of an inequality and their ratio.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub bound: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub incidences: usize,
    pub p_size: usize,
    pub l_size: usize,
    pub params: BoundParams,
}

/// Evaluates `|I|^{s+t}` against `δ^{-st(1+ε)} K_P^t K_L^s |P|^s |T|^t`.
pub fn fu_ren_check(
    p: &CellFamily,
    t_fam: &DualCellFamily,
    s: f64,
    t: f64,
    eps: f64,
    k_p: f64,
    k_l: f64,
) -> Result<BoundReport> {
    let m = check_scale(p, t_fam)?;
    if !(s > 0.0 && s <= 1.0 && t > 0.0 && t <= 1.0) {
        return Err(Error::Invalid(format!("s={s}, t={t} must lie in (0, 1]")));
    }
    if !(eps >= 0.0) || !(k_p > 0.0) || !(k_l > 0.0) {
        return Err(Error::Invalid(format!(
            "need eps >= 0 and positive constants, got eps={eps}, K_P={k_p}, K_L={k_l}"
        )));
    }
    if p.is_empty() || t_fam.is_empty() {
        return Err(Error::Empty("fu_ren_check needs nonzero covering numbers".into()));
    }
    let n = count_incidences(p, t_fam)?;
    let lhs = (n as f64).powf(s + t);
    let rhs = (m as f64 * s * t * (1.0 + eps)).exp2()
        * k_p.powf(t)
        * k_l.powf(s)
        * (p.len() as f64).powf(s)
        * (t_fam.len() as f64).powf(t);
    Ok(BoundReport {
        bound: "fu_ren".into(),
        lhs,
        rhs,
        ratio: lhs / rhs,
        incidences: n,
        p_size: p.len(),
        l_size: t_fam.len(),
        params: BoundParams {
            m,
            s: Some(s),
            t: Some(t),
            eps: Some(eps),
            k_p: Some(k_p),
            k_l: Some(k_l),
            r: None,
        },
    })
}

/// Evaluates `|∪ 𝒫_T|` against `|𝒯|^{1/2} M r^{1/2}` after verifying the
/// 2-ends condition at radius `r = 2^-r_exp`.
pub fn two_ends_check(tubes: &DualCellFamily, per_tube: &[CellFamily], r_exp: u32) -> Result<BoundReport> {
    let m = tubes.m();
    if per_tube.len() != tubes.len() {
        return Err(Error::Invalid(format!(
            "{} per-tube sets for {} tubes",
            per_tube.len(),
            tubes.len()
        )));
    }
    if tubes.is_empty() {
        return Err(Error::Empty("two_ends_check needs at least one tube".into()));
    }
    if r_exp > m {
        return Err(Error::Invalid(format!("radius 2^-{r_exp} below δ = 2^-{m}")));
    }
    let big_m = per_tube[0].len();
    let j = m - r_exp;
    for (tube, set) in tubes.cells().iter().zip(per_tube) {
        if set.m() != m {
            return Err(Error::ScaleMismatch(set.m(), m));
        }
        if set.len() != big_m || big_m == 0 {
            return Err(Error::Precondition(format!(
                "tube ({}, {}) has {} cells, expected a common positive size {big_m}",
                tube.a,
                tube.b,
                set.len()
            )));
        }
        if let Some(c) = set.cells().iter().find(|c| !grid::meets(m, c.x, c.y, tube.a, tube.b)) {
            return Err(Error::Precondition(format!(
                "cell ({}, {}) does not meet tube ({}, {})",
                c.x, c.y, tube.a, tube.b
            )));
        }
        let coords: Vec<(i64, i64)> = set.coords().collect();
        let best = sets::level_max(&coords, j);
        if 3 * best.count > big_m {
            let c = best.center_units();
            let d = (-(m as f64)).exp2();
            return Err(Error::Precondition(format!(
                "2-ends condition fails for tube ({}, {}): box of side 2^-{r_exp} centered at ({}, {}) holds {} of {big_m} cells",
                tube.a,
                tube.b,
                c.0 * d,
                c.1 * d,
                best.count
            )));
        }
    }
    let mut union: Vec<Cell> = per_tube.iter().flat_map(|f| f.cells().iter().copied()).collect();
    union.sort_unstable();
    union.dedup();
    let r = (-(r_exp as f64)).exp2();
    let lhs = union.len() as f64;
    let rhs = (tubes.len() as f64).sqrt() * big_m as f64 * r.sqrt();
    Ok(BoundReport {
        bound: "two_ends".into(),
        lhs,
        rhs,
        ratio: lhs / rhs,
        incidences: big_m * tubes.len(),
        p_size: union.len(),
        l_size: tubes.len(),
        params: BoundParams {
            m,
            r: Some(r),
            ..Default::default()
        },
    })
}

/// `M = max_p |𝒯_p|` together with the check `|I| ≤ M |P|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxLinesReport {
    pub max_lines: usize,
    pub incidences: usize,
    pub p_size: usize,
    pub holds: bool,
}

pub fn max_lines_per_cell(p: &CellFamily, t: &DualCellFamily) -> Result<MaxLinesReport> {
    let inc = incidences(p, t)?;
    let max_lines = inc.cell_degrees().iter().copied().max().unwrap_or(0) as usize;
    Ok(MaxLinesReport {
        max_lines,
        incidences: inc.len(),
        p_size: p.len(),
        holds: inc.len() <= max_lines * p.len(),
    })
}
