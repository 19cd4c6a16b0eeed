use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::grid::{Cell, Scale};
use crate::sets::CellFamily;

/// A family whose per-ancestor child counts are constant at every block scale.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UniformFamily {
    pub family: CellFamily,
    pub h: u32,
    /// `N_1, …, N_{m'}`, each a power of two.
    pub branching: Vec<u64>,
    /// Size of the family this one was extracted from.
    pub input_size: usize,
}

impl UniformFamily {
    pub fn blocks(&self) -> u32 {
        self.branching.len() as u32
    }

    pub fn len(&self) -> usize {
        self.family.len()
    }

    pub fn is_empty(&self) -> bool {
        self.family.is_empty()
    }

    pub fn retention(&self) -> f64 {
        self.family.len() as f64 / self.input_size as f64
    }

    /// `(2H)^{-m'}`.
    pub fn guarantee(&self) -> f64 {
        (2.0 * self.h as f64).powi(-(self.blocks() as i32))
    }

    /// Exact check of `|P'| ≥ (2H)^{-m'} |P|`.
    pub fn meets_guarantee(&self) -> bool {
        let factor = (2u128 * self.h as u128).pow(self.blocks());
        self.family.len() as u128 * factor >= self.input_size as u128
    }
}

fn check_block(m: u32, h: u32) -> Result<u32> {
    if h == 0 || !m.is_multiple_of(h) {
        return Err(Error::InvalidScale(format!("block size {h} does not divide m={m}")));
    }
    Ok(m / h)
}

struct Ancestor {
    /// `(mass, child)` sorted by mass descending, then child ascending.
    children: Vec<(u64, Cell)>,
}

/// Greedy fine-to-coarse uniformization with block size `h`.
///
/// At block level `j` every ancestor at scale `2^{-(j-1)h}` is classified by
/// the dyadic size of its child count. For the chosen class `k`, ancestors
/// with at least `2^k` children keep exactly their `2^k` heaviest children
/// (ties lexicographic) and the others are dropped; `k` maximizes the number
/// of δ-cells kept, ties going to the larger `k`.
pub fn uniformize(p: &CellFamily, h: u32) -> Result<UniformFamily> {
    if p.is_empty() {
        return Err(Error::Empty("uniformize needs a nonempty family".into()));
    }
    let m = p.m();
    let blocks = check_block(m, h)?;
    let mut cells: Vec<Cell> = p.cells().to_vec();
    let mut branching = vec![0u64; blocks as usize];
    for j in (1..=blocks).rev() {
        let (child_lvl, par_lvl) = (j * h, (j - 1) * h);
        let mut keyed: Vec<(Cell, Cell)> = cells
            .iter()
            .map(|c| (c.ancestor(par_lvl), c.ancestor(child_lvl)))
            .collect();
        keyed.sort_unstable();
        let mut ancestors: Vec<Ancestor> = Vec::new();
        let mut i = 0;
        while i < keyed.len() {
            let parent = keyed[i].0;
            let mut children: Vec<(u64, Cell)> = Vec::new();
            while i < keyed.len() && keyed[i].0 == parent {
                let child = keyed[i].1;
                let mut mass = 0;
                while i < keyed.len() && keyed[i].1 == child {
                    mass += 1;
                    i += 1;
                }
                children.push((mass, child));
            }
            children.sort_unstable_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            ancestors.push(Ancestor { children });
        }
        let max_k = 2 * h;
        let mut best_k = 0u32;
        let mut best_mass = 0u64;
        for k in 0..=max_k {
            let n = 1usize << k;
            let mass: u64 = ancestors
                .iter()
                .filter(|a| a.children.len() >= n)
                .map(|a| a.children[..n].iter().map(|c| c.0).sum::<u64>())
                .sum();
            if mass >= best_mass && mass > 0 {
                best_mass = mass;
                best_k = k;
            }
        }
        let n = 1usize << best_k;
        let mut kept: Vec<Cell> = ancestors
            .iter()
            .filter(|a| a.children.len() >= n)
            .flat_map(|a| a.children[..n].iter().map(|c| c.1))
            .collect();
        kept.sort_unstable();
        cells.retain(|c| kept.binary_search(&c.ancestor(child_lvl)).is_ok());
        branching[j as usize - 1] = n as u64;
    }
    Ok(UniformFamily {
        family: CellFamily::new(Scale::blocked(m, h)?, cells)?,
        h,
        branching,
        input_size: p.len(),
    })
}

/// Full traversal check of uniformity; returns `N_1..N_{m'}` when uniform.
pub fn is_uniform(p: &CellFamily, h: u32) -> Option<Vec<u64>> {
    let blocks = check_block(p.m(), h).ok()?;
    if p.is_empty() {
        return None;
    }
    let mut out = Vec::with_capacity(blocks as usize);
    for j in 1..=blocks {
        let mut children: BTreeMap<Cell, BTreeSet<Cell>> = BTreeMap::new();
        for c in p.cells() {
            children
                .entry(c.ancestor((j - 1) * h))
                .or_default()
                .insert(c.ancestor(j * h));
        }
        let mut counts = children.values().map(BTreeSet::len);
        let first = counts.next()?;
        if !first.is_power_of_two() || counts.any(|n| n != first) {
            return None;
        }
        out.push(first as u64);
    }
    Some(out)
}

/// Smallest divisor `H` of `m` with `log₂(2H)/H ≤ ε`, or `m` when none exists.
pub fn choose_block(m: u32, eps: f64) -> u32 {
    (1..=m)
        .filter(|h| m.is_multiple_of(*h))
        .find(|&h| (2.0 * h as f64).log2() / h as f64 <= eps)
        .unwrap_or(m)
}

/// Why [`decompose_uniform`] stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecomposeStop {
    /// The remainder fell to at most `δ^ε |P|`.
    RemainderSmall,
    /// The next extracted piece was below `δ^{2ε} |P|` and was merged back.
    PieceTooSmall,
}

/// Disjoint uniform pieces plus the leftover cells.
#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    pub h: u32,
    pub eps: f64,
    pub pieces: Vec<UniformFamily>,
    pub remainder: CellFamily,
    pub stop: DecomposeStop,
}

/// Repeatedly uniformizes the remainder until it is small or a piece is too small.
pub fn decompose_uniform(p: &CellFamily, eps: f64, h: Option<u32>) -> Result<Decomposition> {
    if !(eps > 0.0) {
        return Err(Error::Invalid(format!("eps={eps} must be positive")));
    }
    let m = p.m();
    let h = h.unwrap_or_else(|| choose_block(m, eps));
    check_block(m, h)?;
    let total = p.len() as f64;
    let rem_cap = (-(m as f64) * eps).exp2() * total;
    let piece_floor = (-2.0 * m as f64 * eps).exp2() * total;
    let mut remainder = p.clone();
    let mut pieces = Vec::new();
    let stop = loop {
        if remainder.len() as f64 <= rem_cap {
            break DecomposeStop::RemainderSmall;
        }
        let piece = uniformize(&remainder, h)?;
        if (piece.len() as f64) < piece_floor {
            break DecomposeStop::PieceTooSmall;
        }
        remainder = remainder.difference(&piece.family);
        pieces.push(piece);
    };
    Ok(Decomposition {
        h,
        eps,
        pieces,
        remainder,
        stop,
    })
}
