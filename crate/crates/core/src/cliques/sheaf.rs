use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::is_clique;
use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::grid::{column_rows, Rect};
use crate::incidence::incidences;
use crate::sets::{CellFamily, DualCellFamily};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RectangleParams {
    pub s: f64,
    pub t: f64,
    pub c_prime: f64,
}

impl Default for RectangleParams {
    fn default() -> Self {
        RectangleParams {
            s: 1.0,
            t: 1.0,
            c_prime: 4.0,
        }
    }
}

/// Output of [`find_sheaf_rectangle`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RectangleReport {
    pub rect: Rect,
    /// Anchor tube `(a, b)`.
    pub anchor: (i64, i64),
    /// Slope band `[α, 2α)` with `α = 2^{alpha_exp} δ`.
    pub alpha_exp: u32,
    pub alpha: f64,
    pub points_in_r: usize,
    pub lines_through_r: usize,
    pub predicted_diam: f64,
    pub diam: f64,
    /// `θ²|P|/2`.
    pub tau: f64,
    pub theta: f64,
    /// Tubes of the band whose intersection with the anchor lies over `R`.
    pub covered: usize,
    /// Tubes sharing at least `τ` cells with the anchor.
    pub comparable: usize,
    pub c_prime: f64,
}

/// Points of `p` whose cell centers lie in `r`.
pub fn points_in(r: &Rect, p: &CellFamily) -> usize {
    p.cells().iter().filter(|c| r.contains(c.center())).count()
}

/// Tubes whose center line passes within `C′δ` of every corner of `r`.
pub fn lines_through(r: &Rect, l: &DualCellFamily, c_prime: f64) -> usize {
    let tol = c_prime * (-(l.m() as f64)).exp2();
    let corners = r.corners();
    l.cells()
        .iter()
        .filter(|d| {
            let line = d.center_line();
            corners.iter().all(|&c| line.distance(c) <= tol)
        })
        .count()
}

/// Locates a rectangle of dimensions `C′δ × C′δ/α` along a popular tube that
/// holds many points of a clique.
pub fn find_sheaf_rectangle(
    p: &CellFamily,
    l: &DualCellFamily,
    theta: f64,
    params: &RectangleParams,
) -> Result<RectangleReport> {
    let test = is_clique(p, l, theta)?;
    if !test.holds {
        return Err(Error::Precondition(format!(
            "not a clique at theta={theta}: achieved {}",
            test.theta
        )));
    }
    let m = p.m();
    let side = 1i64 << m;
    let delta = (-(m as f64)).exp2();
    let inc = incidences(p, l)?;
    let cell_fibers = inc.cell_fibers();
    let tau = theta * theta * p.len() as f64 / 2.0;
    let n = l.len();

    let shared = |t0: usize| -> Vec<u32> {
        let mut cnt = vec![0u32; n];
        for &c in inc.tube_fiber(t0) {
            for &t in &cell_fibers[c as usize] {
                cnt[t as usize] += 1;
            }
        }
        cnt
    };
    let scores = exec::map_range(Exec::Auto, n, |t0| {
        shared(t0)
            .iter()
            .enumerate()
            .filter(|&(t, &c)| t != t0 && c as f64 >= tau)
            .count()
    });
    let t0 = (0..n).fold(0, |b, i| if scores[i] > scores[b] { i } else { b });
    let anchor = l.cells()[t0];
    let cnt = shared(t0);
    let comparable: Vec<usize> = (0..n).filter(|&t| t != t0 && cnt[t] as f64 >= tau).collect();

    // x-extent of each comparable tube's intersection with the anchor, in δ columns.
    let overlap = |t: usize| -> Option<(i64, i64)> {
        let d = l.cells()[t];
        let mut range: Option<(i64, i64)> = None;
        for x in 0..side {
            let (lo0, hi0) = column_rows(m, anchor.a, anchor.b, x);
            let (lo1, hi1) = column_rows(m, d.a, d.b, x);
            let (lo, hi) = (lo0.max(lo1).max(0), hi0.min(hi1).min(side - 1));
            if lo <= hi {
                range = Some(range.map_or((x, x), |(a, _)| (a, x)));
            }
        }
        range
    };
    let mut classes: BTreeMap<u32, Vec<(i64, i64)>> = BTreeMap::new();
    for &t in &comparable {
        let d = (l.cells()[t].a - anchor.a).unsigned_abs();
        let k = if d == 0 { 0 } else { 63 - d.leading_zeros() };
        if let Some(r) = overlap(t) {
            classes.entry(k).or_default().push(r);
        }
    }
    if classes.is_empty() {
        // No partner tubes: shortest admissible rectangle.
        classes.insert(m, Vec::new());
    }

    let line = anchor.center_line();
    let dir = (1.0, line.a);
    let span = (1.0 + line.a * line.a).sqrt();
    let width = params.c_prime * delta;
    // (covered, k, rect index) with ties to the larger k, then the first rectangle.
    let mut best: Option<(usize, u32, Rect)> = None;
    for (&k, ranges) in &classes {
        let length = params.c_prime * (-(k as f64)).exp2();
        let step = length / 4.0;
        let steps = (span / step).ceil() as usize;
        let rects: Vec<Rect> = (0..=steps)
            .map(|i| {
                let x = (i as f64 * step / span).min(1.0);
                Rect::new((x, line.eval(x)), dir, length, width)
            })
            .collect::<Result<Vec<_>>>()?;
        let evaluated = exec::map(Exec::Auto, &rects, |r| {
            if (points_in(r, p) as f64) < tau {
                return None;
            }
            let xs = r.corners().map(|c| c.0);
            let (x_lo, x_hi) = xs
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            Some(
                ranges
                    .iter()
                    .filter(|&&(a, b)| a as f64 * delta >= x_lo && (b + 1) as f64 * delta <= x_hi)
                    .count(),
            )
        });
        for (r, covered) in rects.iter().zip(evaluated) {
            let Some(covered) = covered else { continue };
            if best.is_none_or(|(bc, bk, _)| covered > bc || (covered == bc && k > bk)) {
                best = Some((covered, k, *r));
            }
        }
    }
    let (covered, k, rect) =
        best.ok_or_else(|| Error::pipeline("rectangle", format!("no rectangle holds tau={tau:.3} points")))?;
    Ok(RectangleReport {
        rect,
        anchor: (anchor.a, anchor.b),
        alpha_exp: k,
        alpha: (k as f64).exp2() * delta,
        points_in_r: points_in(&rect, p),
        lines_through_r: lines_through(&rect, l, params.c_prime),
        predicted_diam: delta.powf(params.t / (params.s + params.t)),
        diam: rect.diam(),
        tau,
        theta: test.theta,
        covered,
        comparable: comparable.len(),
        c_prime: params.c_prime,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{sheaf_config, SheafOptions};
    use crate::grid::{meets, Scale};

    #[test]
    fn pencil_gives_a_small_rectangle() {
        let m = 8;
        let s = Scale::new(m).unwrap();
        let p = CellFamily::from_coords(s, &[(100, 120)]).unwrap();
        let side = 1i64 << m;
        let tubes: Vec<(i64, i64)> = (-side..side)
            .step_by(4)
            .flat_map(|a| {
                (-side..2 * side)
                    .filter(move |&b| meets(m, 100, 120, a, b))
                    .map(move |b| (a, b))
                    .take(1)
            })
            .collect();
        let l = DualCellFamily::from_coords(s, &tubes).unwrap();
        let r = find_sheaf_rectangle(&p, &l, 1.0, &RectangleParams::default()).unwrap();
        assert_eq!(r.points_in_r, 1);
        assert!(r.diam <= 16.0 / side as f64, "{r:?}");
    }

    #[test]
    fn planted_clique_rectangle() {
        let cfg = sheaf_config(1.0, 1.0, 10, 0, SheafOptions { single: true }).unwrap();
        let theta = is_clique(&cfg.p, &cfg.l, 0.0).unwrap().theta;
        let r = find_sheaf_rectangle(&cfg.p, &cfg.l, theta, &RectangleParams::default()).unwrap();
        assert!(
            r.points_in_r as f64 >= theta * theta * cfg.p.len() as f64 / 4.0,
            "{r:?}"
        );
        assert_eq!(r.points_in_r, points_in(&r.rect, &cfg.p));
        assert!(
            r.diam <= 16.0 * r.predicted_diam && r.diam >= r.predicted_diam / 16.0,
            "{r:?}"
        );
    }

    #[test]
    fn rejects_non_clique() {
        let s = Scale::new(4).unwrap();
        let p = CellFamily::from_coords(s, &[(0, 0)]).unwrap();
        let l = DualCellFamily::from_coords(s, &[(0, 12)]).unwrap();
        assert!(matches!(
            find_sheaf_rectangle(&p, &l, 0.5, &RectangleParams::default()),
            Err(Error::Precondition(_))
        ));
    }
}
