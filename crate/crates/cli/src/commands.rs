use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use incidence_lab::cliques::{
    exhaust_cliques, extract_clique, find_sheaf_rectangle, is_clique, CliqueParams, CliqueReport, RectangleParams,
};
use incidence_lab::gen::{cantor_set, cantor_tubes, random_cells, random_tubes, sheaf_config, SheafOptions};
use incidence_lab::incidence::{count_incidences, fu_ren_check, incidences_with, tube_counts, CountMode};
use incidence_lab::io::{family_digest, family_to_text, read_family, tube_counts_csv, AnyFamily};
use incidence_lab::sets::{delta_s_constant, katz_tao_constant, DyadicIndex, Family};
use incidence_lab::structure::{merge_slopes, q_to_f64, q_to_string, uniformize, BranchingProfile, Rational};
use incidence_lab::{CellFamily, DualCellFamily, Exec};

use crate::output::{envelope, input, Sink};
use crate::{Command, GenArgs, GenKind, Global, Mode, Plane, Variant};

const DEFAULT_M: u32 = 10;

/// Global flags with defaults filled in.
#[derive(Serialize)]
struct Resolved {
    s: f64,
    t: f64,
    u: f64,
    m: u32,
    seed: u64,
}

impl Resolved {
    fn new(g: &Global) -> Result<Self> {
        let r = Resolved {
            s: g.s.unwrap_or(1.0),
            t: g.t.unwrap_or(1.0),
            u: g.u.unwrap_or(1.0),
            m: g.m.unwrap_or(DEFAULT_M),
            seed: g.seed.unwrap_or(0),
        };
        for (name, v) in [("s", r.s), ("t", r.t), ("u", r.u)] {
            ensure!(
                v.is_finite() && (0.0..=2.0).contains(&v),
                "--{name}={v} must lie in [0, 2]"
            );
        }
        Ok(r)
    }
}

fn parse_params<T: DeserializeOwned + Default>(g: &Global) -> Result<T> {
    let Some(raw) = &g.params else {
        return Ok(T::default());
    };
    let text = if raw.trim_start().starts_with('{') {
        raw.clone()
    } else {
        std::fs::read_to_string(raw).with_context(|| format!("cannot read params file {raw}"))?
    };
    serde_json::from_str(&text).with_context(|| format!("invalid --params: {text}"))
}

fn no_params(g: &Global, command: &str) -> Result<()> {
    ensure!(g.params.is_none(), "--params is not used by `{command}`");
    Ok(())
}

fn load_cells(path: &Path) -> Result<CellFamily> {
    let f = read_family(path).with_context(|| format!("points file {}", path.display()))?;
    f.into_cells()
        .with_context(|| format!("points file {}", path.display()))
}

fn load_tubes(path: &Path) -> Result<DualCellFamily> {
    let f = read_family(path).with_context(|| format!("lines file {}", path.display()))?;
    f.into_tubes().with_context(|| format!("lines file {}", path.display()))
}

fn load_pair(points: &Path, lines: &Path) -> Result<(CellFamily, DualCellFamily, Vec<Value>)> {
    let p = load_cells(points)?;
    let l = load_tubes(lines)?;
    let inputs = vec![input("points", points, &p), input("lines", lines, &l)];
    Ok((p, l, inputs))
}

pub fn run(g: &Global, cmd: &Command) -> Result<()> {
    if let Some(j) = g.jobs {
        ensure!(j >= 1, "--jobs must be at least 1");
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    let r = Resolved::new(g)?;
    let sink = Sink::new(g.out.as_deref())?;
    match cmd {
        Command::Gen(a) => gen(g, &r, a, &sink),
        Command::Verify { file, variant } => verify(g, &r, file, *variant, &sink),
        Command::Count { points, lines, mode } => count(g, points, lines, *mode, &sink),
        Command::Bound {
            points,
            lines,
            eps,
            kp,
            kl,
        } => bound(g, &r, points, lines, *eps, *kp, *kl, &sink),
        Command::Clique { points, lines } => clique(g, &r, points, lines, &sink),
        Command::Sheaf { points, lines, theta } => sheaf(g, points, lines, *theta, &sink),
        Command::Exhaust { points, lines } => exhaust(g, &r, points, lines, &sink),
        Command::Uniformize { points, h } => uniformize_cmd(g, points, *h, &sink),
        Command::Branching { points, h } => branching(g, points, *h, &sink),
        Command::Sweep { ms, seeds } => sweep(g, &r, ms, seeds, &sink),
    }
}

fn family_summary<C: DyadicIndex>(f: &Family<C>, s: f64) -> Result<Value> {
    let kt = katz_tao_constant(f, s)?;
    Ok(json!({ "size": f.len(), "digest": family_digest(f), "katz_tao_constant": kt.best_constant }))
}

fn gen(g: &Global, r: &Resolved, a: &GenArgs, sink: &Sink) -> Result<()> {
    no_params(g, "gen")?;
    ensure!(sink.has_dir(), "`gen` writes files and needs --out");
    let (params, result) = match a.kind {
        GenKind::Sheaf => {
            let c = sheaf_config(r.s, r.t, r.m, r.seed, SheafOptions { single: a.single })?;
            sink.file("points.txt", &family_to_text(&c.p))?;
            sink.file("lines.txt", &family_to_text(&c.l))?;
            let mut labels = serde_json::to_string_pretty(&c.labels_json())?;
            labels.push('\n');
            sink.file("labels.json", &labels)?;
            let params = json!({ "kind": "sheaf", "s": r.s, "t": r.t, "m": r.m, "seed": r.seed, "single": a.single });
            let result = json!({
                "delta_exp": c.delta_exp,
                "cliques": c.n,
                "points": { "size": c.p.len(), "digest": family_digest(&c.p), "katz_tao_constant": c.k_p },
                "lines": { "size": c.l.len(), "digest": family_digest(&c.l), "katz_tao_constant": c.k_l },
                "incidences": count_incidences(&c.p, &c.l)?,
            });
            (params, result)
        }
        GenKind::Cantor => {
            let params = json!({ "kind": "cantor", "plane": plane_name(a.plane), "m": r.m, "h": a.h, "seed": r.seed });
            let result = match a.plane {
                Plane::Cell => {
                    let f = cantor_set(r.m, r.s, a.h, Some(r.seed))?;
                    sink.file("points.txt", &family_to_text(&f))?;
                    json!({ "s": r.s, "family": family_summary(&f, r.s)? })
                }
                Plane::Dual => {
                    let f = cantor_tubes(r.m, r.t, a.h, Some(r.seed))?;
                    sink.file("lines.txt", &family_to_text(&f))?;
                    json!({ "t": r.t, "family": family_summary(&f, r.t)? })
                }
            };
            (params, result)
        }
        GenKind::Random => {
            let count = a.count.context("`gen random` needs --count")?;
            let params =
                json!({ "kind": "random", "plane": plane_name(a.plane), "m": r.m, "count": count, "seed": r.seed });
            let result = match a.plane {
                Plane::Cell => {
                    let f = random_cells(r.m, count, r.seed)?;
                    sink.file("points.txt", &family_to_text(&f))?;
                    json!({ "family": family_summary(&f, r.s)? })
                }
                Plane::Dual => {
                    let f = random_tubes(r.m, count, r.seed)?;
                    sink.file("lines.txt", &family_to_text(&f))?;
                    json!({ "family": family_summary(&f, r.t)? })
                }
            };
            (params, result)
        }
    };
    sink.report(&envelope("gen", params, vec![], result))
}

fn plane_name(p: Plane) -> &'static str {
    match p {
        Plane::Cell => "cell",
        Plane::Dual => "dual",
    }
}

fn verify(g: &Global, r: &Resolved, file: &Path, variant: Variant, sink: &Sink) -> Result<()> {
    no_params(g, "verify")?;
    let f = read_family(file).with_context(|| format!("family file {}", file.display()))?;
    let (report, inp) = match &f {
        AnyFamily::Cells(c) => (run_scan(c, r.s, variant)?, input("family", file, c)),
        AnyFamily::Tubes(t) => (run_scan(t, r.s, variant)?, input("family", file, t)),
    };
    let result = serde_json::to_value(report)?;
    let params =
        json!({ "s": r.s, "variant": match variant { Variant::KatzTao => "katz_tao", Variant::DeltaS => "delta_s" } });
    sink.report(&envelope("verify", params, vec![inp], result))
}

fn run_scan<C: DyadicIndex>(f: &Family<C>, s: f64, v: Variant) -> Result<incidence_lab::sets::KTReport> {
    Ok(match v {
        Variant::KatzTao => katz_tao_constant(f, s)?,
        Variant::DeltaS => delta_s_constant(f, s)?,
    })
}

fn count(g: &Global, points: &Path, lines: &Path, mode: Mode, sink: &Sink) -> Result<()> {
    no_params(g, "count")?;
    let (p, l, inputs) = load_pair(points, lines)?;
    let mode_name = match mode {
        Mode::Sweep => "sweep",
        Mode::Brute => "brute",
    };
    let mode = match mode {
        Mode::Sweep => CountMode::Sweep,
        Mode::Brute => CountMode::Brute,
    };
    let n = incidences_with(&p, &l, mode, Exec::Auto)?.len();
    println!("{n}");
    if sink.has_dir() {
        let counts = tube_counts(&p, &l, Exec::Auto)?;
        sink.file("tube_counts.csv", &tube_counts_csv(&l, &counts))?;
        let result = json!({ "incidences": n, "max_tube_count": counts.iter().max().copied().unwrap_or(0) });
        sink.report(&envelope("count", json!({ "mode": mode_name }), inputs, result))?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn bound(
    g: &Global,
    r: &Resolved,
    points: &Path,
    lines: &Path,
    eps: f64,
    kp: Option<f64>,
    kl: Option<f64>,
    sink: &Sink,
) -> Result<()> {
    no_params(g, "bound")?;
    let (p, l, inputs) = load_pair(points, lines)?;
    let k_p = match kp {
        Some(k) => k,
        None => katz_tao_constant(&p, r.s)?.best_constant,
    };
    let k_l = match kl {
        Some(k) => k,
        None => katz_tao_constant(&l, r.t)?.best_constant,
    };
    let report = fu_ren_check(&p, &l, r.s, r.t, eps, k_p, k_l)?;
    let params =
        json!({ "s": r.s, "t": r.t, "eps": eps, "k_p": k_p, "k_l": k_l, "k_measured": [kp.is_none(), kl.is_none()] });
    sink.report(&envelope("bound", params, inputs, serde_json::to_value(report)?))
}

fn trace_clique(index: Option<usize>, r: &CliqueReport) {
    let tag = index.map(|i| format!("clique {i}: ")).unwrap_or_default();
    for step in &r.trace {
        eprintln!(
            "[trace] {tag}{}: {} ({} -> {})",
            step.stage, step.decision, step.before, step.after
        );
    }
}

fn clique(g: &Global, r: &Resolved, points: &Path, lines: &Path, sink: &Sink) -> Result<()> {
    let params: CliqueParams = parse_params(g)?;
    let (p, l, inputs) = load_pair(points, lines)?;
    let report = extract_clique(&p, &l, r.s, r.t, r.u, &params)?;
    if g.trace {
        trace_clique(None, &report);
    }
    let mut result = report.to_json();
    result["replay"] = report.replay()?.into();
    let resolved = json!({ "s": r.s, "t": r.t, "u": r.u, "clique": params });
    sink.report(&envelope("clique", resolved, inputs, result))
}

fn sheaf(g: &Global, points: &Path, lines: &Path, theta: Option<f64>, sink: &Sink) -> Result<()> {
    let mut params: RectangleParams = parse_params(g)?;
    if let Some(s) = g.s {
        params.s = s;
    }
    if let Some(t) = g.t {
        params.t = t;
    }
    let (p, l, inputs) = load_pair(points, lines)?;
    let theta = match theta {
        Some(t) => t,
        None => is_clique(&p, &l, 0.0)?.theta,
    };
    let report = find_sheaf_rectangle(&p, &l, theta, &params)?;
    let resolved = json!({ "theta": theta, "rectangle": params });
    sink.report(&envelope("sheaf", resolved, inputs, serde_json::to_value(report)?))
}

fn exhaust(g: &Global, r: &Resolved, points: &Path, lines: &Path, sink: &Sink) -> Result<()> {
    let params: CliqueParams = parse_params(g)?;
    let (p, l, inputs) = load_pair(points, lines)?;
    let report = exhaust_cliques(&p, &l, r.s, r.t, r.u, &params)?;
    if g.trace {
        for (i, c) in report.cliques.iter().enumerate() {
            trace_clique(Some(i), c);
        }
        eprintln!("[trace] stop: {:?}", report.stop);
    }
    let resolved = json!({ "s": r.s, "t": r.t, "u": r.u, "clique": params });
    sink.report(&envelope("exhaust", resolved, inputs, report.to_json()))
}

fn uniformize_cmd(g: &Global, points: &Path, h: u32, sink: &Sink) -> Result<()> {
    no_params(g, "uniformize")?;
    let p = load_cells(points)?;
    let u = uniformize(&p, h)?;
    sink.file("uniform.txt", &family_to_text(&u.family))?;
    let result = json!({
        "size": u.len(),
        "input_size": u.input_size,
        "branching": u.branching,
        "retention": u.retention(),
        "guarantee": u.guarantee(),
        "meets_guarantee": u.meets_guarantee(),
        "digest": family_digest(&u.family),
    });
    sink.report(&envelope(
        "uniformize",
        json!({ "h": h }),
        vec![input("points", points, &p)],
        result,
    ))
}

fn decomposition_csv(profile: &BranchingProfile) -> String {
    let dec = &profile.decomposition;
    let mut out = String::from("start,end,slope\n");
    for (j, sigma) in dec.slopes.iter().enumerate() {
        let (a, b): (&Rational, &Rational) = (&dec.breakpoints[j], &dec.breakpoints[j + 1]);
        out.push_str(&format!("{},{},{}\n", q_to_f64(a), q_to_f64(b), q_to_f64(sigma)));
    }
    out
}

fn branching(g: &Global, points: &Path, h: u32, sink: &Sink) -> Result<()> {
    no_params(g, "branching")?;
    let p = load_cells(points)?;
    let u = uniformize(&p, h)?;
    let profile = BranchingProfile::from_uniform(&u)?;
    // Independent replay of the stored decomposition.
    let replay = merge_slopes(&profile.function(), &Rational::from_integer(2.into()))?;
    ensure!(replay == profile.decomposition, "slope decomposition does not replay");
    sink.file("branching.csv", &profile.to_csv())?;
    sink.file("decomposition.csv", &decomposition_csv(&profile))?;
    let slopes: Vec<String> = profile.decomposition.slopes.iter().map(q_to_string).collect();
    let mut result = profile.to_json();
    result["uniform_size"] = u.len().into();
    result["exact_slopes"] = slopes.into();
    sink.report(&envelope(
        "branching",
        json!({ "h": h }),
        vec![input("points", points, &p)],
        result,
    ))
}

/// Least-squares slope and intercept.
fn fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

struct Point {
    m: u32,
    seed: u64,
    cells: usize,
    tubes: usize,
    incidences: usize,
}

fn sweep(g: &Global, r: &Resolved, ms: &[u32], seeds: &[u64], sink: &Sink) -> Result<()> {
    no_params(g, "sweep")?;
    ensure!(!ms.is_empty() && !seeds.is_empty(), "--ms and --seeds must be nonempty");
    let grid: Vec<(u32, u64)> = ms.iter().flat_map(|&m| seeds.iter().map(move |&s| (m, s))).collect();
    let points: Vec<Point> = grid
        .par_iter()
        .map(|&(m, seed)| -> Result<Point> {
            let c = sheaf_config(r.s, r.t, m, seed, SheafOptions::default())?;
            log::info!("sweep point m={m} seed={seed}");
            Ok(Point {
                m,
                seed,
                cells: c.p.len(),
                tubes: c.l.len(),
                incidences: count_incidences(&c.p, &c.l)?,
            })
        })
        .collect::<Result<_>>()?;

    let mut table = String::from("m,seed,cells,tubes,incidences,log2_incidences\n");
    for pt in &points {
        let log = (pt.incidences.max(1) as f64).log2();
        table.push_str(&format!(
            "{},{},{},{},{},{log:.6}\n",
            pt.m, pt.seed, pt.cells, pt.tubes, pt.incidences
        ));
    }
    let mut fits = String::from("seed,points,slope,intercept\n");
    let mut fit_json = Vec::new();
    let groups: Vec<(String, Vec<&Point>)> = seeds
        .iter()
        .map(|s| (s.to_string(), points.iter().filter(|p| p.seed == *s).collect()))
        .chain(std::iter::once(("all".to_string(), points.iter().collect())))
        .collect();
    for (label, pts) in groups {
        let xs: Vec<f64> = pts.iter().map(|p| p.m as f64).collect();
        let ys: Vec<f64> = pts.iter().map(|p| (p.incidences.max(1) as f64).log2()).collect();
        let Some((slope, intercept)) = fit(&xs, &ys) else {
            bail!("exponent fit needs at least two distinct scales");
        };
        fits.push_str(&format!("{label},{},{slope:.6},{intercept:.6}\n", pts.len()));
        fit_json.push(json!({ "seed": label, "points": pts.len(), "slope": slope, "intercept": intercept }));
    }
    sink.file("sweep.csv", &table)?;
    sink.file("fits.csv", &fits)?;
    if !sink.has_dir() {
        print!("{fits}");
        return Ok(());
    }
    let params = json!({ "generator": "sheaf", "s": r.s, "t": r.t, "ms": ms, "seeds": seeds });
    sink.report(&envelope("sweep", params, vec![], json!({ "fits": fit_json })))
}
