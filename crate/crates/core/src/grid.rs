//! Dyadic geometry kernel: cells, dual cells (tubes), the exact incidence
//! predicate, point-line duality, rescaling and a diagnostic line metric.
//!
//! A cell at scale `m` is the half-open square
//! `[xδ, (x+1)δ) × [yδ, (y+1)δ)` with `δ = 2^-m`. A dual cell `(a, b)` is the
//! square `[aδ, (a+1)δ) × [bδ, (b+1)δ)` of the (slope, intercept) plane; the
//! union of the lines `y = αx + β` it contains is the dyadic tube.
//!
//! All incidence decisions are made in integers after scaling by `2^{2m}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sets::{CellFamily, DualCellFamily};

/// Largest supported exponent. Corner products stay below `2^62`.
pub const MAX_M: u32 = 30;

/// Grid resolution `δ = 2^-m`, optionally split into blocks of `h` levels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Scale {
    pub m: u32,
    pub h: Option<u32>,
}

impl Scale {
    pub fn new(m: u32) -> Result<Self> {
        if m == 0 || m > MAX_M {
            return Err(Error::InvalidScale(format!("m must lie in 1..={MAX_M}, got {m}")));
        }
        Ok(Scale { m, h: None })
    }

    pub fn blocked(m: u32, h: u32) -> Result<Self> {
        let mut s = Scale::new(m)?;
        if h == 0 || !m.is_multiple_of(h) {
            return Err(Error::InvalidScale(format!("block size {h} does not divide m={m}")));
        }
        s.h = Some(h);
        Ok(s)
    }

    /// Scale of a rescaled family; `m = 0` is the unit square itself.
    pub(crate) fn any(m: u32) -> Result<Self> {
        if m > MAX_M {
            return Err(Error::InvalidScale(format!("m={m} exceeds {MAX_M}")));
        }
        Ok(Scale { m, h: None })
    }

    pub fn side(self) -> i64 {
        1i64 << self.m
    }

    pub fn delta(self) -> f64 {
        (-(self.m as f64)).exp2()
    }

    pub fn blocks(self) -> Option<u32> {
        self.h.map(|h| self.m / h)
    }
}

/// A dyadic δ-square of `[0,1)²`. Ordered lexicographically by `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub x: i64,
    pub y: i64,
    pub m: u32,
}

impl Cell {
    pub fn new(x: i64, y: i64, m: u32) -> Result<Self> {
        if m > MAX_M {
            return Err(Error::InvalidScale(format!("m={m} exceeds {MAX_M}")));
        }
        let side = 1i64 << m;
        if !(0..side).contains(&x) || !(0..side).contains(&y) {
            return Err(Error::OutOfRange(format!(
                "cell ({x}, {y}) outside [0, {side})² at m={m}"
            )));
        }
        Ok(Cell { x, y, m })
    }

    /// The ancestor at the coarser scale `2^-k`.
    pub fn ancestor(&self, k: u32) -> Cell {
        debug_assert!(k <= self.m);
        let sh = self.m - k;
        Cell {
            x: self.x >> sh,
            y: self.y >> sh,
            m: k,
        }
    }

    pub fn contains(&self, other: &Cell) -> bool {
        other.m >= self.m && other.ancestor(self.m) == *self
    }

    pub fn side_len(&self) -> f64 {
        (-(self.m as f64)).exp2()
    }

    pub fn center(&self) -> (f64, f64) {
        let d = self.side_len();
        ((self.x as f64 + 0.5) * d, (self.y as f64 + 0.5) * d)
    }
}

/// A dyadic δ-square of the dual plane: slopes `[aδ,(a+1)δ)`, intercepts `[bδ,(b+1)δ)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DualCell {
    pub a: i64,
    pub b: i64,
    pub m: u32,
}

impl DualCell {
    pub fn new(a: i64, b: i64, m: u32) -> Result<Self> {
        if m > MAX_M {
            return Err(Error::InvalidScale(format!("m={m} exceeds {MAX_M}")));
        }
        let side = 1i64 << m;
        if !(-side..side).contains(&a) || !(-side..2 * side).contains(&b) {
            return Err(Error::OutOfRange(format!(
                "dual cell ({a}, {b}) outside slope band [-{side}, {side}) or intercept band [-{side}, {})",
                2 * side
            )));
        }
        Ok(DualCell { a, b, m })
    }

    /// Ancestor at scale `2^-k`; floor division for negative indices.
    pub fn ancestor(&self, k: u32) -> DualCell {
        debug_assert!(k <= self.m);
        let sh = self.m - k;
        DualCell {
            a: self.a >> sh,
            b: self.b >> sh,
            m: k,
        }
    }

    pub fn side_len(&self) -> f64 {
        (-(self.m as f64)).exp2()
    }

    pub fn slope_range(&self) -> (f64, f64) {
        let d = self.side_len();
        (self.a as f64 * d, (self.a + 1) as f64 * d)
    }

    pub fn intercept_range(&self) -> (f64, f64) {
        let d = self.side_len();
        (self.b as f64 * d, (self.b + 1) as f64 * d)
    }

    /// The line through the center of the dual square.
    pub fn center_line(&self) -> Line {
        let d = self.side_len();
        Line {
            a: (self.a as f64 + 0.5) * d,
            b: (self.b as f64 + 0.5) * d,
        }
    }
}

/// The line `y = a·x + b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub a: f64,
    pub b: f64,
}

impl Line {
    pub fn new(a: f64, b: f64) -> Self {
        Line { a, b }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.a * x + self.b
    }

    /// Whether the line may enter a family (non-vertical reduction).
    pub fn is_admissible(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.a.abs() <= 1.0
    }

    /// Perpendicular distance from `p` to the line.
    pub fn distance(&self, p: (f64, f64)) -> f64 {
        (self.a * p.0 - p.1 + self.b).abs() / (1.0 + self.a * self.a).sqrt()
    }
}

/// An oriented rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub center: (f64, f64),
    pub direction: (f64, f64),
    pub length: f64,
    pub width: f64,
}

impl Rect {
    pub fn new(center: (f64, f64), direction: (f64, f64), length: f64, width: f64) -> Result<Self> {
        let n = direction.0.hypot(direction.1);
        if !(n > 0.0) || !(width > 0.0) || length < width {
            return Err(Error::Invalid(format!(
                "rectangle needs length >= width > 0 and a nonzero direction, got {length} x {width}"
            )));
        }
        Ok(Rect {
            center,
            direction: (direction.0 / n, direction.1 / n),
            length,
            width,
        })
    }

    pub fn contains(&self, p: (f64, f64)) -> bool {
        let (dx, dy) = (p.0 - self.center.0, p.1 - self.center.1);
        let along = dx * self.direction.0 + dy * self.direction.1;
        let across = -dx * self.direction.1 + dy * self.direction.0;
        along.abs() <= self.length / 2.0 && across.abs() <= self.width / 2.0
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        let (ux, uy) = self.direction;
        let (vx, vy) = (-uy, ux);
        let (hl, hw) = (self.length / 2.0, self.width / 2.0);
        let c = self.center;
        [
            (c.0 - hl * ux - hw * vx, c.1 - hl * uy - hw * vy),
            (c.0 + hl * ux - hw * vx, c.1 + hl * uy - hw * vy),
            (c.0 + hl * ux + hw * vx, c.1 + hl * uy + hw * vy),
            (c.0 - hl * ux + hw * vx, c.1 - hl * uy + hw * vy),
        ]
    }

    pub fn diam(&self) -> f64 {
        self.length.hypot(self.width)
    }
}

#[inline]
fn corner_extremes(a: (i64, i64), x: (i64, i64)) -> (i128, i128) {
    let p = [
        a.0 as i128 * x.0 as i128,
        a.0 as i128 * x.1 as i128,
        a.1 as i128 * x.0 as i128,
        a.1 as i128 * x.1 as i128,
    ];
    let mut lo = p[0];
    let mut hi = p[0];
    for &v in &p[1..] {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// Closed-region test at scale `m`: is there `α ∈ [a.0, a.1]δ`, `x ∈ [x.0, x.1]δ`,
/// `β ∈ [b.0, b.1]δ` with `αx + β ∈ [y.0, y.1]δ`?
pub fn meets_region(m: u32, a: (i64, i64), b: (i64, i64), x: (i64, i64), y: (i64, i64)) -> bool {
    let s = 1i128 << m;
    let (pmin, pmax) = corner_extremes(a, x);
    let lo = pmin + b.0 as i128 * s;
    let hi = pmax + b.1 as i128 * s;
    lo <= y.1 as i128 * s && hi >= y.0 as i128 * s
}

/// Unchecked predicate on raw indices at scale `m`.
#[inline]
pub fn meets(m: u32, x: i64, y: i64, a: i64, b: i64) -> bool {
    meets_region(m, (a, a + 1), (b, b + 1), (x, x + 1), (y, y + 1))
}

/// Whether the cell `p` meets the dyadic tube `t` (closed-interval convention).
pub fn cell_meets_tube(p: &Cell, t: &DualCell) -> Result<bool> {
    if p.m != t.m {
        return Err(Error::ScaleMismatch(p.m, t.m));
    }
    Ok(meets(p.m, p.x, p.y, t.a, t.b))
}

/// Inclusive row range `(lo, hi)` of cells in column `x` met by tube `(a, b)`,
/// not clamped to the grid. Empty ranges cannot occur.
///
/// With `m ≤ 30` every intermediate value fits in `i64`, and division by
/// `2^m` is an arithmetic shift.
#[inline]
pub fn column_rows(m: u32, a: i64, b: i64, x: i64) -> (i64, i64) {
    let (p0, p1, p2, p3) = (a * x, a * (x + 1), (a + 1) * x, (a + 1) * (x + 1));
    let pmin = p0.min(p1).min(p2).min(p3);
    let pmax = p0.max(p1).max(p2).max(p3);
    let lo = pmin + (b << m);
    let hi = pmax + ((b + 1) << m);
    (-((-lo) >> m) - 1, hi >> m)
}

/// The line `ℓ_{x,y}` dual to the point `(x, y)`.
pub fn dual_point(x: f64, y: f64) -> Line {
    Line { a: x, b: y }
}

/// The point `(-a, b)` dual to the line `ℓ_{a,b}`.
pub fn dual_line(l: &Line) -> (f64, f64) {
    (-l.a, l.b)
}

/// Index map of the dual of a tube: the cell `(-a-1, b)`.
pub fn tube_to_cell_index(a: i64, b: i64) -> (i64, i64) {
    (-a - 1, b)
}

/// Index map of the dual of a cell: the dual cell `(x, y)`.
pub fn cell_to_tube_index(x: i64, y: i64) -> (i64, i64) {
    (x, y)
}

fn check_same(p: &CellFamily, t: &DualCellFamily) -> Result<u32> {
    if p.m() != t.m() {
        return Err(Error::ScaleMismatch(p.m(), t.m()));
    }
    Ok(p.m())
}

/// Swaps the roles of points and tubes: `P★ = D★(T)`, `T★ = D(P)`.
pub fn dualize_config(p: &CellFamily, t: &DualCellFamily) -> Result<(CellFamily, DualCellFamily)> {
    let m = check_same(p, t)?;
    let cells = t
        .cells()
        .iter()
        .map(|c| {
            let (x, y) = tube_to_cell_index(c.a, c.b);
            Cell::new(x, y, m).map_err(|_| {
                Error::OutOfRange(format!(
                    "tube ({}, {}) dualizes to ({x}, {y}), outside the unit square",
                    c.a, c.b
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let tubes = p
        .cells()
        .iter()
        .map(|c| {
            let (a, b) = cell_to_tube_index(c.x, c.y);
            DualCell::new(a, b, m)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((
        CellFamily::new(t.scale(), cells)?,
        DualCellFamily::new(p.scale(), tubes)?,
    ))
}

/// Inverse of [`dualize_config`].
///
/// Applying the forward map twice reflects every index (`x ↦ -x-1`,
/// `a ↦ -a-1`), which leaves the unit square; this map undoes one application
/// directly.
pub fn undualize_config(p_star: &CellFamily, t_star: &DualCellFamily) -> Result<(CellFamily, DualCellFamily)> {
    let m = check_same(p_star, t_star)?;
    let cells = t_star
        .cells()
        .iter()
        .map(|c| Cell::new(c.a, c.b, m))
        .collect::<Result<Vec<_>>>()?;
    let tubes = p_star
        .cells()
        .iter()
        .map(|c| DualCell::new(-c.x - 1, c.y, m))
        .collect::<Result<Vec<_>>>()?;
    Ok((
        CellFamily::new(t_star.scale(), cells)?,
        DualCellFamily::new(p_star.scale(), tubes)?,
    ))
}

/// Maps the cells of `p` inside `q` onto the unit square at scale `2^-(m-k)`.
pub fn rescale(q: &Cell, p: &CellFamily) -> Result<CellFamily> {
    let (k, m) = (q.m, p.m());
    if k > m {
        return Err(Error::Precondition(format!(
            "square scale m={k} is finer than family scale m={m}"
        )));
    }
    let mask = (1i64 << (m - k)) - 1;
    let cells = p
        .cells()
        .iter()
        .map(|c| {
            if c.ancestor(k) != *q {
                return Err(Error::Precondition(format!(
                    "cell ({}, {}) is not contained in Q = ({}, {}) at m={k}",
                    c.x, c.y, q.x, q.y
                )));
            }
            Ok(Cell {
                x: c.x & mask,
                y: c.y & mask,
                m: m - k,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    CellFamily::new(Scale::any(m - k)?, cells)
}

/// `|sin(θ₁-θ₂)| + |v₁-v₂|` with `v` the foot of the perpendicular from the
/// origin. Diagnostic only.
pub fn line_metric(l1: &Line, l2: &Line) -> f64 {
    let foot = |l: &Line| {
        let n = 1.0 + l.a * l.a;
        (-l.a * l.b / n, l.b / n)
    };
    let (t1, t2) = (l1.a.atan(), l2.a.atan());
    let (v1, v2) = (foot(l1), foot(l2));
    (t1 - t2).sin().abs() + (v1.0 - v2.0).hypot(v1.1 - v2.1)
}
