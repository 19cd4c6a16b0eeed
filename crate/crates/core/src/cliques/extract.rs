use std::collections::BTreeMap;

use super::{check_dims, dyadic_class, CliqueParams, CliqueReport, TraceStep, TubePacket};
use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::grid::{dualize_config, undualize_config, Cell, DualCell, Scale};
use crate::incidence::{count_incidences, incidences, IncidenceSet};
use crate::sets::{CellFamily, DualCellFamily};
use crate::structure::{decompose_uniform, locate, uniformize, Eta};

/// Non-concentration constant of the certificates: `400/(su)` when `s = t`,
/// `160/(su(t-s))` when `s < t`.
pub fn clique_constant(s: f64, t: f64, u: f64) -> f64 {
    if (t - s).abs() < 1e-12 {
        400.0 / (s * u)
    } else {
        160.0 / (s * u * (t - s))
    }
}

/// Extracts a `(δ, θ)`-clique `P′ × L′` with `P′ = P ∩ Q₀`.
///
/// When `s > t` the configuration is dualized, the pipeline runs with the
/// roles of `s` and `t` swapped, and the result is mapped back.
pub fn extract_clique(
    p: &CellFamily,
    l: &DualCellFamily,
    s: f64,
    t: f64,
    u: f64,
    params: &CliqueParams,
) -> Result<CliqueReport> {
    check_dims(s, t, u)?;
    if p.m() != l.m() {
        return Err(Error::ScaleMismatch(p.m(), l.m()));
    }
    if p.is_empty() || l.is_empty() {
        return Err(Error::pipeline("input", "empty point or tube family"));
    }
    if s <= t {
        return run(p, l, &incidences(p, l)?, s, t, u, params);
    }
    let (ps, ls) = dualize_config(p, l).map_err(|e| Error::pipeline("dualize", e.to_string()))?;
    let mut r = run(&ps, &ls, &incidences(&ps, &ls)?, t, s, u, params)?;
    let (pp, lp) = undualize_config(&r.p_prime, &r.l_prime).map_err(|e| Error::pipeline("dualize", e.to_string()))?;
    let before = r.p_prime.len();
    r.p_prime = pp;
    r.l_prime = lp;
    r.pairs = count_incidences(&r.p_prime, &r.l_prime)?;
    r.theta = r.pairs as f64 / (r.p_prime.len() as f64 * r.l_prime.len() as f64);
    r.dual_frame = true;
    r.trace.push(TraceStep::new(
        "dualize",
        "mapped back to the original frame",
        before,
        r.p_prime.len(),
    ));
    Ok(r)
}

/// Center-line height at `x = (2X+1)/2^{k+1}`, in units of `δ/2^{k+2}`.
fn height_at(d: &DualCell, x: i64, k: u32) -> i128 {
    (2 * d.a as i128 + 1) * (2 * x as i128 + 1) + ((2 * d.b as i128 + 1) << (k + 1))
}

/// The pipeline for `s ≤ t`, given all incidences of `p × l`.
pub(crate) fn run(
    p: &CellFamily,
    l: &DualCellFamily,
    all: &IncidenceSet,
    s: f64,
    t: f64,
    u: f64,
    params: &CliqueParams,
) -> Result<CliqueReport> {
    let m = p.m();
    let mut trace = Vec::new();

    // Step 1: uniform piece, then the heaviest dyadic class of tube counts.
    let dec = decompose_uniform(p, params.eps, params.decompose_h)
        .map_err(|e| Error::pipeline("decompose", e.to_string()))?;
    let mut pieces = dec.pieces;
    if pieces.is_empty() {
        // The first extract fell below the piece floor; use it anyway.
        pieces.push(uniformize(p, dec.h).map_err(|e| Error::pipeline("decompose", e.to_string()))?);
        trace.push(TraceStep::new(
            "decompose",
            format!("{:?}: kept the rejected piece", dec.stop),
            p.len(),
            pieces[0].len(),
        ));
    }
    let piece_inc: Vec<usize> = pieces
        .iter()
        .map(|u| {
            u.family
                .cells()
                .iter()
                .map(|c| all.cell_degree(p.cells().binary_search(c).unwrap()))
                .sum()
        })
        .collect();
    let pi = (0..piece_inc.len()).fold(0, |b, i| if piece_inc[i] > piece_inc[b] { i } else { b });
    let piece = pieces[pi].family.with_scale(Scale::new(m)?)?;
    trace.push(TraceStep::new(
        "decompose",
        format!(
            "{} pieces at H={} ({:?}); kept piece {pi} with {} incidences",
            pieces.len(),
            dec.h,
            dec.stop,
            piece_inc[pi]
        ),
        p.len(),
        piece.len(),
    ));

    let keep: Vec<bool> = p.cells().iter().map(|c| piece.contains(c)).collect();
    let inc = all.restrict(&keep);
    let mut totals: BTreeMap<u32, usize> = BTreeMap::new();
    for ti in 0..l.len() {
        let n = inc.tube_count(ti);
        if n > 0 {
            *totals.entry(dyadic_class(n)).or_default() += n;
        }
    }
    let Some((&k, &mass)) = totals.iter().max_by_key(|(k, n)| (**n, **k)) else {
        return Err(Error::pipeline("bucket", "no tube meets the uniform piece"));
    };
    let kept: Vec<usize> = (0..l.len())
        .filter(|&ti| inc.tube_count(ti) > 0 && dyadic_class(inc.tube_count(ti)) == k)
        .collect();
    trace.push(TraceStep::new(
        "bucket",
        format!("tube class 2^{k} holding {mass} incidences"),
        l.len(),
        kept.len(),
    ));

    // Step 2: per-tube certificates, then pigeonhole (Δ, η) and Q₀.
    let c = clique_constant(s, t, u);
    let scale = Scale::new(m)?;
    let certs: Vec<Option<(u32, Eta, Cell)>> = exec::map(Exec::Auto, &kept, |&ti| {
        let fiber = CellFamily::new(scale, inc.tube_fiber(ti).iter().map(|&ci| piece.cells()[ci as usize])).ok()?;
        let loc = locate(&fiber, c, None, params.cert_h).ok()?;
        Some((loc.y0 * params.cert_h, loc.eta, loc.q))
    });
    let certified: Vec<(usize, u32, Eta, Cell)> = kept
        .iter()
        .zip(certs)
        .filter_map(|(&ti, c)| c.map(|(d, e, q)| (ti, d, e, q)))
        .collect();
    trace.push(TraceStep::new(
        "certificate",
        format!("certified tubes with C={c}"),
        kept.len(),
        certified.len(),
    ));
    if certified.is_empty() {
        return Err(Error::pipeline(
            "certificate",
            format!("none of {} tubes admits a certificate", kept.len()),
        ));
    }

    let mut groups: BTreeMap<(u32, Eta), Vec<usize>> = BTreeMap::new();
    for (i, (_, d, e, _)) in certified.iter().enumerate() {
        groups.entry((*d, e.clone())).or_default().push(i);
    }
    let mut best: Option<(&(u32, Eta), &Vec<usize>)> = None;
    for g in &groups {
        if best.is_none_or(|b| g.1.len() > b.1.len()) {
            best = Some(g);
        }
    }
    let ((delta_exp, eta), members) = best.expect("nonempty");
    let (delta_exp, eta) = (*delta_exp, eta.clone());
    trace.push(TraceStep::new(
        "pigeonhole",
        format!("Δ=2^-{delta_exp}, η={}", eta.describe()),
        certified.len(),
        members.len(),
    ));

    let mut by_q: BTreeMap<Cell, usize> = BTreeMap::new();
    for &i in members {
        *by_q.entry(certified[i].3).or_default() += 1;
    }
    let mut q0 = *by_q.keys().next().expect("nonempty");
    for (q, n) in &by_q {
        if *n > by_q[&q0] {
            q0 = *q;
        }
    }
    let t0: Vec<DualCell> = members
        .iter()
        .filter(|&&i| certified[i].3 == q0)
        .map(|&i| l.cells()[certified[i].0])
        .collect();
    trace.push(TraceStep::new(
        "anchor",
        format!("Q0=({}, {}) at scale 2^-{}", q0.x, q0.y, q0.m),
        members.len(),
        t0.len(),
    ));

    // Tube packets: |Δa| ≤ C′·Δ/δ and heights at Q₀'s center within C′δ/2.
    let slope_band = params.c_prime * (delta_exp as f64).exp2();
    let height_band = params.c_prime * ((delta_exp + 1) as f64).exp2();
    let comparable = |x: &DualCell, y: &DualCell| {
        (x.a - y.a).abs() as f64 <= slope_band
            && (height_at(x, q0.x, delta_exp) - height_at(y, q0.x, delta_exp)).abs() as f64 <= height_band
    };
    let mut packets: Vec<Vec<DualCell>> = Vec::new();
    for d in &t0 {
        match packets.iter_mut().find(|pk| pk.iter().all(|e| comparable(e, d))) {
            Some(pk) => pk.push(*d),
            None => packets.push(vec![*d]),
        }
    }
    let largest = (0..packets.len()).fold(0, |b, i| if packets[i].len() > packets[b].len() { i } else { b });
    let members = DualCellFamily::new(scale, packets[largest].iter().copied())?;
    trace.push(TraceStep::new(
        "packet",
        format!("{} packets, kept packet {largest}", packets.len()),
        t0.len(),
        members.len(),
    ));

    // Step 3.
    let p_prime = p.within(&q0);
    let pairs = count_incidences(&p_prime, &members)?;
    let theta = pairs as f64 / (p_prime.len() as f64 * members.len() as f64);
    trace.push(TraceStep::new(
        "clique",
        format!("theta={theta:.6}"),
        p.len(),
        p_prime.len(),
    ));
    Ok(CliqueReport {
        p_prime,
        l_prime: members.clone(),
        pairs,
        theta,
        q0,
        delta_exp,
        eta,
        c,
        c_prime: params.c_prime,
        packet: TubePacket {
            anchor: members.cells()[0],
            members,
        },
        packets: packets.len(),
        dual_frame: false,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{sheaf_config, SheafOptions};

    #[test]
    fn recovers_a_planted_clique() {
        let cfg = sheaf_config(1.0, 1.0, 8, 2, SheafOptions::default()).unwrap();
        let r = extract_clique(&cfg.p, &cfg.l, 1.0, 1.0, 1.0, &CliqueParams::default()).unwrap();
        assert!(r.theta >= 0.5, "{:?}", r.trace);
        assert!(r.replay().unwrap());
        assert_eq!(r.delta_exp, cfg.delta_exp);
        assert!(r.p_prime.len() >= 8 && r.l_prime.len() >= 8, "{:?}", r.trace);
        assert_eq!(r.p_prime, cfg.p.within(&r.q0));
    }

    #[test]
    fn single_clique_is_returned() {
        let cfg = sheaf_config(1.0, 1.0, 10, 0, SheafOptions { single: true }).unwrap();
        let r = extract_clique(&cfg.p, &cfg.l, 1.0, 1.0, 1.0, &CliqueParams::default()).unwrap();
        assert!(r.theta >= 0.9);
        assert_eq!(r.p_prime, cfg.p);
    }

    #[test]
    fn deterministic_trace() {
        let cfg = sheaf_config(0.5, 1.0, 10, 4, SheafOptions::default()).unwrap();
        let a = extract_clique(&cfg.p, &cfg.l, 0.5, 1.0, 1.0, &CliqueParams::default()).unwrap();
        let b = extract_clique(&cfg.p, &cfg.l, 0.5, 1.0, 1.0, &CliqueParams::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_stage_is_named() {
        let s = Scale::new(4).unwrap();
        let p = CellFamily::from_coords(s, &[(0, 0), (15, 15)]).unwrap();
        let l = DualCellFamily::from_coords(s, &[(0, 12)]).unwrap();
        match extract_clique(&p, &l, 1.0, 1.0, 1.0, &CliqueParams::default()) {
            Err(Error::Pipeline { stage, .. }) => assert_eq!(stage, "bucket"),
            other => panic!("{other:?}"),
        }
    }
}
