//! Families of cells and dual cells, covering numbers at every dyadic scale,
//! and Katz-Tao / (δ,s,C) non-concentration scans.
//!
//! Balls of radius `r` are realized as half-open boxes of side `r` whose lower
//! corners sit on the lattice of spacing `r/2`, with `r = 2^-k` dyadic and
//! `δ ≤ r ≤ 1`. The reported constant is exact for this boxed variant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::grid::{Cell, DualCell, Line, Scale};

/// Which plane a family lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Cell,
    Dual,
}

impl FamilyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FamilyKind::Cell => "cell",
            FamilyKind::Dual => "dual",
        }
    }
}

/// Common interface of [`Cell`] and [`DualCell`].
pub trait DyadicIndex: Copy + Ord + Eq + std::hash::Hash + std::fmt::Debug + Send + Sync {
    const KIND: FamilyKind;
    fn coords(&self) -> (i64, i64);
    fn scale_m(&self) -> u32;
    fn from_coords(u: i64, v: i64, m: u32) -> Result<Self>;
    fn ancestor_at(&self, k: u32) -> Self;
}

impl DyadicIndex for Cell {
    const KIND: FamilyKind = FamilyKind::Cell;
    fn coords(&self) -> (i64, i64) {
        (self.x, self.y)
    }
    fn scale_m(&self) -> u32 {
        self.m
    }
    fn from_coords(u: i64, v: i64, m: u32) -> Result<Self> {
        Cell::new(u, v, m)
    }
    fn ancestor_at(&self, k: u32) -> Self {
        self.ancestor(k)
    }
}

impl DyadicIndex for DualCell {
    const KIND: FamilyKind = FamilyKind::Dual;
    fn coords(&self) -> (i64, i64) {
        (self.a, self.b)
    }
    fn scale_m(&self) -> u32 {
        self.m
    }
    fn from_coords(u: i64, v: i64, m: u32) -> Result<Self> {
        DualCell::new(u, v, m)
    }
    fn ancestor_at(&self, k: u32) -> Self {
        self.ancestor(k)
    }
}

/// A sorted, deduplicated family of indices sharing one scale.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Family<C> {
    scale: Scale,
    cells: Vec<C>,
}

pub type CellFamily = Family<Cell>;
pub type DualCellFamily = Family<DualCell>;

impl<C: DyadicIndex> Family<C> {
    /// Builds a family, validating scale and range, then sorting and deduplicating.
    pub fn new(scale: Scale, cells: impl IntoIterator<Item = C>) -> Result<Self> {
        let mut v: Vec<C> = cells.into_iter().collect();
        for c in &v {
            if c.scale_m() != scale.m {
                return Err(Error::ScaleMismatch(c.scale_m(), scale.m));
            }
            let (u, w) = c.coords();
            C::from_coords(u, w, scale.m)?;
        }
        v.sort_unstable();
        v.dedup();
        Ok(Family { scale, cells: v })
    }

    pub fn from_coords(scale: Scale, coords: &[(i64, i64)]) -> Result<Self> {
        let cells = coords
            .iter()
            .map(|&(u, v)| C::from_coords(u, v, scale.m))
            .collect::<Result<Vec<_>>>()?;
        Self::new(scale, cells)
    }

    pub fn empty(scale: Scale) -> Self {
        Family {
            scale,
            cells: Vec::new(),
        }
    }

    pub fn kind(&self) -> FamilyKind {
        C::KIND
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn m(&self) -> u32 {
        self.scale.m
    }

    pub fn cells(&self) -> &[C] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, c: &C) -> bool {
        self.cells.binary_search(c).is_ok()
    }

    pub fn coords(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        self.cells.iter().map(|c| c.coords())
    }

    /// Sub-family of members satisfying `keep`; order is preserved.
    pub fn filter(&self, keep: impl Fn(&C) -> bool) -> Self {
        Family {
            scale: self.scale,
            cells: self.cells.iter().copied().filter(|c| keep(c)).collect(),
        }
    }

    pub fn union(&self, other: &Self) -> Result<Self> {
        if self.m() != other.m() {
            return Err(Error::ScaleMismatch(self.m(), other.m()));
        }
        Self::new(self.scale, self.cells.iter().chain(other.cells.iter()).copied())
    }

    pub fn difference(&self, other: &Self) -> Self {
        self.filter(|c| !other.contains(c))
    }

    pub fn intersection(&self, other: &Self) -> Self {
        self.filter(|c| other.contains(c))
    }

    /// Distinct ancestors at scale `2^-k`.
    pub fn coarsen(&self, k: u32) -> Result<Self> {
        if k > self.m() {
            return Err(Error::Precondition(format!(
                "coarsening exponent {k} exceeds m={}",
                self.m()
            )));
        }
        let mut v: Vec<C> = self.cells.iter().map(|c| c.ancestor_at(k)).collect();
        v.sort_unstable();
        v.dedup();
        Ok(Family {
            scale: Scale::any(k)?,
            cells: v,
        })
    }

    /// Same members with the block size recorded in the scale.
    pub fn with_scale(&self, scale: Scale) -> Result<Self> {
        if scale.m != self.m() {
            return Err(Error::ScaleMismatch(scale.m, self.m()));
        }
        Ok(Family {
            scale,
            cells: self.cells.clone(),
        })
    }
}

impl CellFamily {
    /// Cells lying inside the (coarser) cell `q`.
    pub fn within(&self, q: &Cell) -> Self {
        self.filter(|c| q.contains(c))
    }
}

/// Number of distinct ancestors at scale `2^-k`.
pub fn covering_number<C: DyadicIndex>(f: &Family<C>, k: u32) -> Result<usize> {
    Ok(f.coarsen(k)?.len())
}

/// Which normalization a scan uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KtVariant {
    /// `|F ∩ B(x,r)| / (r/δ)^s`.
    KatzTao,
    /// `|F ∩ B(x,r)| / (r^s |F|)`.
    DeltaS,
}

/// The box achieving the best constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    /// Box center in real coordinates.
    pub center: (f64, f64),
    /// Box side `r = 2^-radius_exp`.
    pub radius: f64,
    pub radius_exp: u32,
    pub count: usize,
}

/// Result of a non-concentration scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KTReport {
    pub variant: KtVariant,
    pub s: f64,
    pub best_constant: f64,
    pub witness: Witness,
    /// Distortion between the boxed scan and Euclidean balls.
    pub overlap_factor: f64,
    pub family_size: usize,
}

/// Overlap factor of the `r/2`-lattice box cover against Euclidean balls.
pub const OVERLAP_FACTOR: f64 = 4.0;

#[derive(Clone, Copy, Debug)]
pub(crate) struct LevelMax {
    pub j: u32,
    pub count: usize,
    pub key: (i64, i64),
}

impl LevelMax {
    /// Box center in δ-units.
    pub fn center_units(&self) -> (f64, f64) {
        if self.j == 0 {
            (self.key.0 as f64 + 0.5, self.key.1 as f64 + 0.5)
        } else {
            let bs = (1i64 << (self.j - 1)) as f64;
            ((self.key.0 as f64 + 1.0) * bs, (self.key.1 as f64 + 1.0) * bs)
        }
    }
}

/// Largest box count at level `j` (box side `2^j` in δ-units). Ties go to
/// the lexicographically smallest box.
pub(crate) fn level_max(coords: &[(i64, i64)], j: u32) -> LevelMax {
    if j == 0 {
        let key = coords.iter().copied().min().unwrap_or((0, 0));
        return LevelMax {
            j,
            count: usize::from(!coords.is_empty()),
            key,
        };
    }
    let sh = j - 1;
    let mut blocks: Vec<(i64, i64)> = coords.iter().map(|&(u, v)| (u >> sh, v >> sh)).collect();
    blocks.sort_unstable();
    let mut windows: Vec<((i64, i64), usize)> = Vec::with_capacity(blocks.len() * 4);
    let mut i = 0;
    while i < blocks.len() {
        let b = blocks[i];
        let mut n = 0;
        while i < blocks.len() && blocks[i] == b {
            n += 1;
            i += 1;
        }
        for dx in 0..2 {
            for dy in 0..2 {
                windows.push(((b.0 - dx, b.1 - dy), n));
            }
        }
    }
    windows.sort_unstable_by_key(|w| w.0);
    let mut best = LevelMax {
        j,
        count: 0,
        key: (0, 0),
    };
    let mut i = 0;
    while i < windows.len() {
        let k = windows[i].0;
        let mut n = 0;
        while i < windows.len() && windows[i].0 == k {
            n += windows[i].1;
            i += 1;
        }
        if n > best.count {
            best = LevelMax { j, count: n, key: k };
        }
    }
    best
}

fn scan<C: DyadicIndex>(f: &Family<C>, s: f64, variant: KtVariant, exec: Exec) -> Result<KTReport> {
    if f.is_empty() {
        return Err(Error::Empty("non-concentration scan needs a nonempty family".into()));
    }
    if !(0.0..=2.0).contains(&s) {
        return Err(Error::Invalid(format!("exponent s={s} outside [0, 2]")));
    }
    let m = f.m();
    let coords: Vec<(i64, i64)> = f.coords().collect();
    let levels = exec::map_range(exec, m as usize + 1, |j| level_max(&coords, j as u32));
    let n = f.len() as f64;
    let ratio = |l: &LevelMax| match variant {
        KtVariant::KatzTao => l.count as f64 / (l.j as f64 * s).exp2(),
        KtVariant::DeltaS => l.count as f64 / (((l.j as f64) - m as f64) * s).exp2() / n,
    };
    let mut best = levels[0];
    let mut best_ratio = ratio(&best);
    for l in &levels[1..] {
        let r = ratio(l);
        if r > best_ratio {
            best = *l;
            best_ratio = r;
        }
    }
    let delta = (-(m as f64)).exp2();
    let cu = best.center_units();
    let center = (cu.0 * delta, cu.1 * delta);
    Ok(KTReport {
        variant,
        s,
        best_constant: best_ratio,
        witness: Witness {
            center,
            radius: ((best.j as f64) - m as f64).exp2(),
            radius_exp: m - best.j,
            count: best.count,
        },
        overlap_factor: OVERLAP_FACTOR,
        family_size: f.len(),
    })
}

/// Best Katz-Tao constant: `max |F ∩ B| / (r/δ)^s` over the boxed scan.
pub fn katz_tao_constant<C: DyadicIndex>(f: &Family<C>, s: f64) -> Result<KTReport> {
    scan(f, s, KtVariant::KatzTao, Exec::Auto)
}

/// Best (δ,s,C) constant: `max |F ∩ B| / (r^s |F|)` over the boxed scan.
pub fn delta_s_constant<C: DyadicIndex>(f: &Family<C>, s: f64) -> Result<KTReport> {
    scan(f, s, KtVariant::DeltaS, Exec::Auto)
}

/// Scan with an explicit execution policy.
pub fn scan_with<C: DyadicIndex>(f: &Family<C>, s: f64, variant: KtVariant, exec: Exec) -> Result<KTReport> {
    scan(f, s, variant, exec)
}

/// The dual cells containing the dual points `(a, b)` of the given lines.
pub fn tube_family_from_lines(lines: &[Line], m: u32) -> Result<DualCellFamily> {
    let scale = Scale::new(m)?;
    let side = (1i64 << m) as f64;
    let tubes = lines
        .iter()
        .map(|l| {
            if !(l.a.is_finite() && l.b.is_finite()) || !(-1.0..1.0).contains(&l.a) {
                return Err(Error::OutOfRange(format!("line slope {} outside [-1, 1)", l.a)));
            }
            DualCell::new((l.a * side).floor() as i64, (l.b * side).floor() as i64, m)
        })
        .collect::<Result<Vec<_>>>()?;
    DualCellFamily::new(scale, tubes)
}
