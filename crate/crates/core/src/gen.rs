//! Seeded generators: planted sheaf configurations with ground-truth labels,
//! Cantor-type Katz-Tao families and uniform random families.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::grid::{self, Cell, DualCell, Scale};
use crate::sets::{katz_tao_constant, CellFamily, DualCellFamily};

/// One planted clique.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantedClique {
    pub index: usize,
    /// The Δ-square holding the clique's points.
    pub square: Cell,
    /// Slope index of the anchor line.
    pub slope: i64,
    pub cells: CellFamily,
    pub tubes: DualCellFamily,
}

/// A union of planted cliques.
#[derive(Clone, Debug, PartialEq)]
pub struct SheafConfig {
    pub s: f64,
    pub t: f64,
    pub m: u32,
    pub seed: u64,
    /// `Δ = 2^{-delta_exp}`.
    pub delta_exp: u32,
    pub n: usize,
    pub p: CellFamily,
    pub l: DualCellFamily,
    /// Cells and tubes shared by two cliques belong to the lower index.
    pub cliques: Vec<PlantedClique>,
    /// Measured `katz_tao_constant(P, s)`.
    pub k_p: f64,
    /// Measured `katz_tao_constant(L, t)`.
    pub k_l: f64,
}

/// Per-member clique index, aligned with the sorted families.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Labels {
    pub cells: Vec<usize>,
    pub tubes: Vec<usize>,
}

impl SheafConfig {
    pub fn labels(&self) -> Labels {
        let find_cell = |c: &Cell| self.cliques.iter().position(|q| q.cells.contains(c)).unwrap();
        let find_tube = |d: &DualCell| self.cliques.iter().position(|q| q.tubes.contains(d)).unwrap();
        Labels {
            cells: self.p.cells().iter().map(find_cell).collect(),
            tubes: self.l.cells().iter().map(find_tube).collect(),
        }
    }

    pub fn labels_json(&self) -> serde_json::Value {
        let labels = self.labels();
        let cells: Vec<[i64; 3]> = self
            .p
            .cells()
            .iter()
            .zip(&labels.cells)
            .map(|(c, &j)| [c.x, c.y, j as i64])
            .collect();
        let tubes: Vec<[i64; 3]> = self
            .l
            .cells()
            .iter()
            .zip(&labels.tubes)
            .map(|(d, &j)| [d.a, d.b, j as i64])
            .collect();
        serde_json::json!({
            "s": self.s, "t": self.t, "m": self.m, "seed": self.seed,
            "delta_exp": self.delta_exp, "n": self.n,
            "k_p": self.k_p, "k_l": self.k_l,
            "cliques": self.cliques.iter().map(|q| serde_json::json!({
                "index": q.index,
                "square": [q.square.x, q.square.y, q.square.m],
                "slope": q.slope,
                "cells": q.cells.len(),
                "tubes": q.tubes.len(),
            })).collect::<Vec<_>>(),
            "cell_labels": cells,
            "tube_labels": tubes,
        })
    }
}

/// Options for [`sheaf_config`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SheafOptions {
    /// Plant a single clique instead of `N`.
    pub single: bool,
}

fn check_dims(s: f64, t: f64) -> Result<()> {
    if !(s > 0.0 && s <= 1.0 && t > 0.0 && t <= 1.0) {
        return Err(Error::Invalid(format!("need s, t in (0, 1], got s={s}, t={t}")));
    }
    Ok(())
}

/// Planted union of cliques at scale `2^-m`.
///
/// `Δ = 2^{-⌈mt/(s+t)⌉}` and `N = 2^{⌈mst/(s+t)⌉}`. Clique `j` sits in its own
/// Δ-square with anchor slope at the center of the `j`-th of `N` slope slots
/// in `[-1, 1)`. Its `⌈(1/Δ)^t⌉` tubes pass through the square's center with
/// slopes spread over a window of width `δ/Δ`, and its `⌈(Δ/δ)^s⌉` points sit
/// on evenly spread columns next to the anchor line.
pub fn sheaf_config(s: f64, t: f64, m: u32, seed: u64, opts: SheafOptions) -> Result<SheafConfig> {
    check_dims(s, t)?;
    Scale::new(m)?;
    let mf = m as f64;
    let k_delta = (mf * t / (s + t)).ceil() as u32;
    let n_exp = (mf * s * t / (s + t)).ceil() as u32;
    // The slope window of the first slot must stay inside [-1, 1).
    if k_delta == 0 || n_exp == 0 || k_delta > m || n_exp + k_delta > m + 1 {
        return Err(Error::InvalidScale(format!(
            "m={m} too small for s={s}, t={t}: Δ exponent {k_delta}, clique exponent {n_exp}"
        )));
    }
    let n_exp = if opts.single { 0 } else { n_exp };
    let (g, n) = (1i64 << k_delta, 1i64 << n_exp);
    let w = 1i64 << (m - k_delta);
    let n_points = (w as f64).powf(s).ceil() as i64;
    let n_tubes = (g as f64).powf(t).ceil() as i64;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<i64> = sample(&mut rng, g as usize, g as usize)
        .into_iter()
        .map(|i| i as i64)
        .collect();
    let side = 1i64 << m;
    let build = |j: usize| -> Result<PlantedClique> {
        let j = j as i64;
        let sx = j * (g / n.min(g)) % g;
        let sy = rows[sx as usize];
        let a0 = -side + j * (2 * side / n) + side / n;
        // Center of the Δ-square in half-δ units.
        let (x2, y2) = (sx * 2 * w + w, sy * 2 * w + w);
        let tubes = (0..n_tubes)
            .map(|i| {
                let a = a0 - g / 2 + i * g / n_tubes;
                let num = (y2 as i128) * (2i128 << m) - (2 * a as i128 + 1) * x2 as i128;
                let b = num.div_euclid(4i128 << m) as i64;
                DualCell::new(a, b, m)
            })
            .collect::<Result<Vec<_>>>()?;
        let cells = (0..n_points)
            .map(|i| {
                let x = sx * w + (2 * i + 1) * w / (2 * n_points);
                // Anchor line through the square center, evaluated at the column center.
                let y_anchor = (y2 as f64 + (2 * a0 + 1) as f64 * ((2 * x + 1) - x2) as f64 / (2 * side) as f64) / 2.0;
                let base = y_anchor.floor() as i64;
                let score = |y: i64| tubes.iter().filter(|d| grid::meets(m, x, y, d.a, d.b)).count();
                let y = [base, base - 1, base + 1]
                    .into_iter()
                    .filter(|y| (0..side).contains(y))
                    .max_by_key(|&y| (score(y), y == base, -y))
                    .unwrap_or(base.clamp(0, side - 1));
                Cell::new(x, y, m)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PlantedClique {
            index: j as usize,
            square: Cell::new(sx, sy, k_delta)?,
            slope: a0,
            cells: CellFamily::new(Scale::new(m)?, cells)?,
            tubes: DualCellFamily::new(Scale::new(m)?, tubes)?,
        })
    };
    let mut cliques = exec::map_range(Exec::Auto, n as usize, build)
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    // First owner wins.
    let scale = Scale::new(m)?;
    let mut p = CellFamily::empty(scale);
    let mut l = DualCellFamily::empty(scale);
    for q in &mut cliques {
        q.cells = q.cells.difference(&p);
        q.tubes = q.tubes.difference(&l);
        p = p.union(&q.cells)?;
        l = l.union(&q.tubes)?;
    }
    let k_p = katz_tao_constant(&p, s)?.best_constant;
    let k_l = katz_tao_constant(&l, t)?.best_constant;
    Ok(SheafConfig {
        s,
        t,
        m,
        seed,
        delta_exp: k_delta,
        n: n as usize,
        p,
        l,
        cliques,
        k_p,
        k_l,
    })
}

/// Uniform Cantor-type indices in `[0, 2^m)²` with `2^{round(Hs)}` children per block.
fn cantor_coords(m: u32, s: f64, h: u32, seed: Option<u64>) -> Result<Vec<(i64, i64)>> {
    Scale::blocked(m, h)?;
    if !(0.0..=2.0).contains(&s) {
        return Err(Error::Invalid(format!("dimension {s} outside [0, 2]")));
    }
    let k = (h as f64 * s).round() as u32;
    let (children, n) = (1u64 << (2 * h), 1u64 << k);
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    let mut cur: Vec<(i64, i64)> = vec![(0, 0)];
    for _ in 0..m / h {
        let mut next = Vec::with_capacity(cur.len() * n as usize);
        for &(x, y) in &cur {
            let picks: Vec<u64> = match rng.as_mut() {
                Some(r) => sample(r, children as usize, n as usize)
                    .into_iter()
                    .map(|c| c as u64)
                    .collect(),
                None => (0..n).map(|i| i * children / n).collect(),
            };
            for c in picks {
                next.push(((x << h) + (c >> h) as i64, (y << h) + (c & ((1 << h) - 1)) as i64));
            }
        }
        cur = next;
    }
    Ok(cur)
}

/// Cantor set with `2^{round(Hs)}` children per block; even picks when `seed` is `None`.
pub fn cantor_set(m: u32, s: f64, h: u32, seed: Option<u64>) -> Result<CellFamily> {
    CellFamily::from_coords(Scale::blocked(m, h)?, &cantor_coords(m, s, h, seed)?)
}

/// The same construction in the dual plane, slopes in `[-1/2, 1/2)`, intercepts in `[0, 1)`.
pub fn cantor_tubes(m: u32, t: f64, h: u32, seed: Option<u64>) -> Result<DualCellFamily> {
    let half = 1i64 << (m - 1);
    let coords: Vec<_> = cantor_coords(m, t, h, seed)?
        .into_iter()
        .map(|(u, v)| (u - half, v))
        .collect();
    DualCellFamily::from_coords(Scale::blocked(m, h)?, &coords)
}

/// `count` distinct cells sampled uniformly.
pub fn random_cells(m: u32, count: usize, seed: u64) -> Result<CellFamily> {
    let scale = Scale::new(m)?;
    let total = 1usize << (2 * m);
    if count > total {
        return Err(Error::Invalid(format!("{count} cells requested, grid holds {total}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<_> = sample(&mut rng, total, count)
        .into_iter()
        .map(|i| ((i >> m) as i64, (i & ((1 << m) - 1)) as i64))
        .collect();
    CellFamily::from_coords(scale, &coords)
}

/// `count` distinct tubes with slopes in `[-1, 1)` and intercepts in `[0, 1)`.
pub fn random_tubes(m: u32, count: usize, seed: u64) -> Result<DualCellFamily> {
    let scale = Scale::new(m)?;
    let side = 1i64 << m;
    let total = 2usize << (2 * m);
    if count > total {
        return Err(Error::Invalid(format!("{count} tubes requested, band holds {total}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<_> = sample(&mut rng, total, count)
        .into_iter()
        .map(|i| ((i >> m) as i64 - side, (i & ((1 << m) - 1)) as i64))
        .collect();
    DualCellFamily::from_coords(scale, &coords)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::incidence::count_incidences;

    #[test]
    fn sheaf_shape() {
        let c = sheaf_config(1.0, 1.0, 8, 1, SheafOptions::default()).unwrap();
        assert_eq!((c.delta_exp, c.n), (4, 16));
        assert_eq!(c.cliques.len(), 16);
        for q in &c.cliques {
            assert_eq!(q.cells.len(), 16);
            assert_eq!(q.tubes.len(), 16);
            let inc = count_incidences(&q.cells, &q.tubes).unwrap();
            assert!(inc as f64 >= 0.9 * 256.0, "clique {} has {inc}", q.index);
            assert!(q.cells.cells().iter().all(|p| q.square.contains(p)));
        }
        let labels = c.labels();
        assert_eq!(labels.cells.len(), c.p.len());
    }

    #[test]
    fn sheaf_is_deterministic() {
        let a = sheaf_config(0.5, 1.0, 12, 3, SheafOptions::default()).unwrap();
        let b = sheaf_config(0.5, 1.0, 12, 3, SheafOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cliques[0].cells.len(), 4);
        assert_eq!(a.n, 16);
    }

    #[test]
    fn single_clique() {
        let c = sheaf_config(1.0, 1.0, 10, 0, SheafOptions { single: true }).unwrap();
        assert_eq!(c.cliques.len(), 1);
        assert_eq!(c.p.len(), 32);
        assert_eq!(c.l.len(), 32);
    }

    #[test]
    fn sheaf_rejects_tiny_scale() {
        assert!(sheaf_config(1.0, 1.0, 0, 0, SheafOptions::default()).is_err());
        assert!(sheaf_config(0.01, 0.01, 1, 0, SheafOptions::default()).is_ok());
        assert!(sheaf_config(1.5, 1.0, 8, 0, SheafOptions::default()).is_err());
    }

    #[test]
    fn cantor_extremes() {
        assert_eq!(cantor_set(4, 2.0, 2, None).unwrap().len(), 256);
        assert_eq!(cantor_set(4, 0.0, 1, Some(5)).unwrap().len(), 1);
        let f = cantor_set(10, 1.0, 1, Some(7)).unwrap();
        assert_eq!(f.len(), 1024);
        assert!(katz_tao_constant(&f, 1.0).unwrap().best_constant <= 8.0);
        assert_eq!(cantor_tubes(6, 1.0, 2, Some(1)).unwrap().len(), 64);
        assert!(cantor_set(5, 1.0, 2, None).is_err());
    }

    #[test]
    fn random_families() {
        assert_eq!(random_cells(3, 64, 1).unwrap().len(), 64);
        assert_eq!(random_cells(3, 1, 1).unwrap().len(), 1);
        assert!(random_cells(3, 65, 1).is_err());
        assert_eq!(random_cells(6, 100, 9).unwrap(), random_cells(6, 100, 9).unwrap());
        let t = random_tubes(4, 50, 2).unwrap();
        assert_eq!(t.len(), 50);
        assert!(t.cells().iter().all(|d| d.center_line().is_admissible()));
    }
}
