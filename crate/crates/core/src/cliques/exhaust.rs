use std::collections::BTreeMap;

use serde::Serialize;

use super::extract::run;
use super::{check_dims, dyadic_class, extract_clique, CliqueParams, CliqueReport};
use crate::error::{Error, Result};
use crate::incidence::{fu_ren_exponent, incidences};
use crate::sets::{CellFamily, DualCellFamily};

/// Why [`exhaust_cliques`] stopped.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum ExhaustStop {
    /// Residual incidences fell below half the floor.
    Floor,
    /// No tubes or no incidences to work with.
    Empty,
    /// The iteration cap was reached.
    Cap,
    Failure {
        iteration: usize,
        error: String,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExhaustReport {
    pub cliques: Vec<CliqueReport>,
    pub stop: ExhaustStop,
    pub floor: f64,
    /// `δ^{u - f(s,t)}`.
    pub target: f64,
    pub total_pairs: usize,
    pub initial_incidences: usize,
    pub residual_incidences: usize,
}

impl ExhaustReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "stop": self.stop,
            "floor": self.floor,
            "target": self.target,
            "total_pairs": self.total_pairs,
            "initial_incidences": self.initial_incidences,
            "residual_incidences": self.residual_incidences,
            "cliques": self.cliques.iter().map(CliqueReport::to_json).collect::<Vec<_>>(),
        })
    }
}

/// Repeatedly extracts cliques with pairwise disjoint point sets.
///
/// Each round keeps the cells whose tube count lies in the dyadic class
/// carrying the most incidences, extracts a clique from them and removes its
/// points from the working set.
pub fn exhaust_cliques(
    p: &CellFamily,
    l: &DualCellFamily,
    s: f64,
    t: f64,
    u: f64,
    params: &CliqueParams,
) -> Result<ExhaustReport> {
    check_dims(s, t, u)?;
    if p.m() != l.m() {
        return Err(Error::ScaleMismatch(p.m(), l.m()));
    }
    let m = p.m();
    let floor = params.resolved_floor(m, s, t);
    let target = (m as f64 * (fu_ren_exponent(s, t) - u)).exp2();
    let all = incidences(p, l)?;
    let mut alive = vec![true; p.len()];
    let mut cliques: Vec<CliqueReport> = Vec::new();
    let mut initial = None;
    let (stop, residual) = loop {
        let inc = all.restrict(&alive);
        let residual = inc.len();
        initial.get_or_insert(residual);
        if l.is_empty() || residual == 0 {
            break (ExhaustStop::Empty, residual);
        }
        if (residual as f64) < floor / 2.0 {
            break (ExhaustStop::Floor, residual);
        }
        if cliques.len() >= params.n_max {
            break (ExhaustStop::Cap, residual);
        }
        let mut totals: BTreeMap<u32, usize> = BTreeMap::new();
        for &d in inc.cell_degrees() {
            if d > 0 {
                *totals.entry(dyadic_class(d as usize)).or_default() += d as usize;
            }
        }
        let (&k, _) = totals.iter().max_by_key(|(k, n)| (**n, **k)).expect("residual > 0");
        let mut in_bucket = vec![false; p.len()];
        let mut live = 0;
        for ci in 0..p.len() {
            if alive[ci] {
                let d = inc.cell_degree(live);
                in_bucket[ci] = d > 0 && dyadic_class(d) == k;
                live += 1;
            }
        }
        let bucket = CellFamily::new(
            p.scale(),
            p.cells().iter().zip(&in_bucket).filter(|(_, &b)| b).map(|(c, _)| *c),
        )?;
        let result = if s <= t {
            run(&bucket, l, &all.restrict(&in_bucket), s, t, u, params)
        } else {
            extract_clique(&bucket, l, s, t, u, params)
        };
        let r = match result {
            Ok(r) => r,
            Err(e) => {
                break (
                    ExhaustStop::Failure {
                        iteration: cliques.len(),
                        error: e.to_string(),
                    },
                    residual,
                )
            }
        };
        if r.p_prime.is_empty() {
            break (
                ExhaustStop::Failure {
                    iteration: cliques.len(),
                    error: "empty clique".into(),
                },
                residual,
            );
        }
        // Disjointness, cell by cell.
        for c in r.p_prime.cells() {
            let ci = p.cells().binary_search(c).map_err(|_| {
                Error::pipeline(
                    "exhaust",
                    format!("iteration {}: cell ({}, {}) not in P", cliques.len(), c.x, c.y),
                )
            })?;
            if !alive[ci] {
                return Err(Error::pipeline(
                    "exhaust",
                    format!("iteration {}: cell ({}, {}) already used", cliques.len(), c.x, c.y),
                ));
            }
            alive[ci] = false;
        }
        log::debug!(
            "exhaust round {}: |P'|={} |L'|={} theta={:.3}",
            cliques.len(),
            r.p_prime.len(),
            r.l_prime.len(),
            r.theta
        );
        cliques.push(r);
    };
    Ok(ExhaustReport {
        total_pairs: cliques.iter().map(|c| c.pairs).sum(),
        cliques,
        stop,
        floor,
        target,
        initial_incidences: initial.unwrap_or(0),
        residual_incidences: residual,
    })
}
