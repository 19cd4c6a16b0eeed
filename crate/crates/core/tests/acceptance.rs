//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Every tolerance and time budget is a
//! constant below.

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use incidence_lab::cliques::{
    exhaust_cliques, extract_clique, find_sheaf_rectangle, is_clique, CliqueParams, RectangleParams,
};
use incidence_lab::gen::{cantor_set, cantor_tubes, random_cells, random_tubes, sheaf_config, SheafOptions};
use incidence_lab::grid::{cell_meets_tube, dualize_config, undualize_config, Cell, DualCell, Scale};
use incidence_lab::incidence::{count_incidences, fu_ren_check, incidences_with, CountMode};
use incidence_lab::sets::{katz_tao_constant, DualCellFamily, DyadicIndex, Family};
use incidence_lab::structure::{
    extract_nonconcentrated, is_uniform, merge_slopes, uniformize, verify_certificate, PiecewiseAffine,
};
use incidence_lab::Exec;

/// Largest fu_ren_check ratio over the corpus, measured at 1.54 and frozen.
const FU_REN_PINNED: f64 = 2.0;
const EXPONENT_TARGET: f64 = 1.5;
const EXPONENT_TOL: f64 = 0.15;
const CLIQUE_THETA_MIN: f64 = 0.5;
const CLIQUE_SIZE_FACTOR: f64 = 8.0;
const EXHAUST_MIN_CLIQUES: usize = 32;
const RECT_DIAM_FACTOR: f64 = 16.0;
const DUALITY_FACTOR: f64 = 4.0;
/// Relative distance to a cell edge below which a sampled value counts as a boundary case.
const BOUNDARY_MARGIN: f64 = 1e-6;
const SAMPLES_PER_AXIS: usize = 17;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn kt<C: DyadicIndex>(f: &Family<C>, s: f64) -> f64 {
    katz_tao_constant(f, s).unwrap().best_constant
}

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Dense sampling of `αx + β` over the closed box; `None` for tangential
/// contact, where the sampled range ends within the margin of the row band.
fn sampled_meets(m: u32, x: i64, y: i64, a: i64, b: i64) -> Option<bool> {
    let d = (-(m as f64)).exp2();
    let n = SAMPLES_PER_AXIS - 1;
    let (y0, y1) = (y as f64 * d, (y + 1) as f64 * d);
    let mut hit = false;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..=n {
        let alpha = (a as f64 + i as f64 / n as f64) * d;
        for j in 0..=n {
            let xx = (x as f64 + j as f64 / n as f64) * d;
            for k in 0..=n {
                let beta = (b as f64 + k as f64 / n as f64) * d;
                let v = alpha * xx + beta;
                hit |= v >= y0 && v <= y1;
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    let margin = BOUNDARY_MARGIN * d;
    if (hi - y0).abs() < margin || (lo - y1).abs() < margin {
        None
    } else {
        Some(hit)
    }
}

fn criterion_1() -> Outcome {
    let m = 6;
    let side = 1i64 << m;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut agree, mut skipped, mut met) = (0, 0, 0);
    let mut mismatches = Vec::new();
    for _ in 0..1000 {
        let a = rng.gen_range(-side..side);
        let b = rng.gen_range(0..side);
        let x = rng.gen_range(0..side);
        // Rows near the tube, so that both outcomes occur.
        let center = ((a * x) >> m) + b;
        let y = (center + rng.gen_range(-3..=3)).clamp(0, side - 1);
        let exact = cell_meets_tube(&Cell::new(x, y, m).unwrap(), &DualCell::new(a, b, m).unwrap()).unwrap();
        match sampled_meets(m, x, y, a, b) {
            None => skipped += 1,
            Some(s) if s == exact => {
                agree += 1;
                met += usize::from(exact);
            }
            Some(_) => mismatches.push((x, y, a, b)),
        }
    }
    check(
        mismatches.is_empty() && agree + skipped == 1000,
        format!("1000 pairs at m=6: {agree} agree ({met} incident), {skipped} boundary cases excluded, mismatches {mismatches:?}"),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut bad = Vec::new();
    for i in 0..200u64 {
        let m = rng.gen_range(2..=7);
        let cells = rng.gen_range(1..=(1usize << (2 * m)).min(400));
        let tubes = rng.gen_range(1..=(2usize << m).min(200));
        let p = random_cells(m, cells, i).unwrap();
        let t = random_tubes(m, tubes, 1000 + i).unwrap();
        let fast = incidences_with(&p, &t, CountMode::Sweep, Exec::Auto).unwrap();
        let slow = incidences_with(&p, &t, CountMode::Brute, Exec::Sequential).unwrap();
        if fast != slow {
            bad.push(i);
        }
    }
    check(
        bad.is_empty(),
        format!("200 random configs, m<=7: sweep equals brute force; failing configs {bad:?}"),
    )
}

fn criterion_3() -> Outcome {
    let ms = [8u32, 10, 12];
    let logs: Vec<f64> = ms
        .iter()
        .map(|&m| {
            let c = sheaf_config(1.0, 1.0, m, 1, SheafOptions::default()).unwrap();
            (count_incidences(&c.p, &c.l).unwrap() as f64).log2()
        })
        .collect();
    let xs: Vec<f64> = ms.iter().map(|&m| m as f64).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 3.0, logs.iter().sum::<f64>() / 3.0);
    let slope = xs.iter().zip(&logs).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    check(
        (slope - EXPONENT_TARGET).abs() <= EXPONENT_TOL,
        format!("log2|I| = {logs:.3?} at m = {ms:?}; fitted exponent {slope:.4} (target {EXPONENT_TARGET} +/- {EXPONENT_TOL})"),
    )
}

fn criterion_4() -> Outcome {
    let mut worst = (0.0f64, String::new());
    let mut runs = 0;
    let mut record = |ratio: f64, label: String| {
        runs += 1;
        if ratio > worst.0 {
            worst = (ratio, label);
        }
    };
    for m in [6u32, 8, 10, 12] {
        for (s, t) in [(1.0, 1.0), (0.5, 1.0), (1.0, 0.5), (0.75, 0.75), (0.5, 0.5)] {
            for seed in 0..3 {
                let c = sheaf_config(s, t, m, seed, SheafOptions::default()).unwrap();
                let r = fu_ren_check(&c.p, &c.l, s, t, 0.0, c.k_p, c.k_l).unwrap();
                record(r.ratio, format!("sheaf m={m} s={s} t={t} seed={seed}"));
            }
        }
        for (s, t) in [(1.0, 1.0), (0.5, 1.0), (1.0, 0.5)] {
            for h in [1u32, 2] {
                let p = cantor_set(m, s, h, Some(m as u64)).unwrap();
                let l = cantor_tubes(m, t, h, Some(m as u64 + 1)).unwrap();
                let r = fu_ren_check(&p, &l, s, t, 0.0, kt(&p, s), kt(&l, t)).unwrap();
                record(r.ratio, format!("cantor m={m} s={s} t={t} h={h}"));
            }
        }
        for seed in 0..3u64 {
            let p = random_cells(m, 1 << m, seed).unwrap();
            let l = random_tubes(m, 1 << m, seed + 100).unwrap();
            for (s, t) in [(1.0, 1.0), (0.5, 0.5)] {
                let r = fu_ren_check(&p, &l, s, t, 0.0, kt(&p, s), kt(&l, t)).unwrap();
                record(r.ratio, format!("random m={m} s={s} t={t} seed={seed}"));
            }
        }
    }
    check(
        worst.0 <= FU_REN_PINNED,
        format!(
            "{runs} configs, m<=12; worst ratio {:.4} ({}) against pinned {FU_REN_PINNED}",
            worst.0, worst.1
        ),
    )
}

fn criterion_5() -> Outcome {
    let c = sheaf_config(1.0, 1.0, 12, 1, SheafOptions::default()).unwrap();
    let params = CliqueParams::default();
    let r = extract_clique(&c.p, &c.l, 1.0, 1.0, 1.0, &params).unwrap();
    let target = 64.0;
    let within = |n: usize| n as f64 >= target / CLIQUE_SIZE_FACTOR && n as f64 <= target * CLIQUE_SIZE_FACTOR;
    let extract_ok = c.cliques.len() == 64
        && r.theta >= CLIQUE_THETA_MIN
        && within(r.p_prime.len())
        && within(r.l_prime.len())
        && r.replay().unwrap();

    let e = exhaust_cliques(&c.p, &c.l, 1.0, 1.0, 1.0, &params).unwrap();
    let labels = c.labels();
    let mut matched = BTreeSet::new();
    let mut disjoint = true;
    let mut seen = BTreeSet::new();
    for clique in &e.cliques {
        let mut per_label: BTreeMap<usize, usize> = BTreeMap::new();
        for cell in clique.p_prime.cells() {
            disjoint &= seen.insert(*cell);
            let i = c.p.cells().binary_search(cell).unwrap();
            *per_label.entry(labels.cells[i]).or_default() += 1;
        }
        // The planted clique this one overlaps most, if it holds at least half of it.
        if let Some((&j, &n)) = per_label.iter().max_by_key(|(j, n)| (**n, std::cmp::Reverse(**j))) {
            if 2 * n >= c.cliques[j].cells.len() {
                matched.insert(j);
            }
        }
    }
    check(
        extract_ok && disjoint && matched.len() >= EXHAUST_MIN_CLIQUES,
        format!(
            "extract: theta={:.3} |P'|={} |L'|={} (planted 64, factor {CLIQUE_SIZE_FACTOR}); exhaust: {} cliques, disjoint={disjoint}, {} distinct planted cliques matched (need {EXHAUST_MIN_CLIQUES})",
            r.theta,
            r.p_prime.len(),
            r.l_prime.len(),
            e.cliques.len(),
            matched.len()
        ),
    )
}

fn criterion_6() -> Outcome {
    let c = sheaf_config(1.0, 1.0, 12, 0, SheafOptions { single: true }).unwrap();
    let theta = is_clique(&c.p, &c.l, 0.0).unwrap().theta;
    let r = find_sheaf_rectangle(&c.p, &c.l, theta, &RectangleParams::default()).unwrap();
    let need = theta * theta * c.p.len() as f64 / 4.0;
    let target = 2f64.powi(-6);
    let diam_ok = r.diam <= RECT_DIAM_FACTOR * target && r.diam >= target / RECT_DIAM_FACTOR;
    check(
        r.points_in_r as f64 >= need && diam_ok,
        format!(
            "theta={theta:.3}; pointsInR={} (need {need:.1}); diam={:.5} vs 2^-6 (factor {RECT_DIAM_FACTOR}); linesThroughR={}",
            r.points_in_r, r.diam, r.lines_through_r
        ),
    )
}

/// Lower convex hull by brute force: a point is a vertex iff it lies strictly
/// below every chord joining a point on its left with a point on its right.
fn hull_oracle(pts: &[(BigRational, BigRational)]) -> (Vec<BigRational>, Vec<BigRational>) {
    let n = pts.len();
    let below = |i: usize, j: usize, k: usize| {
        let (xi, yi) = &pts[i];
        let (xj, yj) = &pts[j];
        let (xk, yk) = &pts[k];
        let chord = yi + (yk - yi) * (xj - xi) / (xk - xi);
        yj < &chord
    };
    let vertices: Vec<usize> = (0..n)
        .filter(|&j| j == 0 || j == n - 1 || (0..j).all(|i| (j + 1..n).all(|k| below(i, j, k))))
        .collect();
    let xs = vertices.iter().map(|&v| pts[v].0.clone()).collect();
    let slopes = vertices
        .windows(2)
        .map(|w| (&pts[w[1]].1 - &pts[w[0]].1) / (&pts[w[1]].0 - &pts[w[0]].0))
        .collect();
    (xs, slopes)
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let d = q(2, 1);
    let mut bad = 0;
    for _ in 0..10_000 {
        let n = rng.gen_range(2..=12);
        let mut pts = vec![(q(0, 1), q(0, 1))];
        for _ in 1..n {
            let (x, y) = pts.last().unwrap().clone();
            let dx = q(rng.gen_range(1..=6), rng.gen_range(1..=3));
            // Slopes k/4 in [0, 2]; ties between neighbours are frequent on purpose.
            let slope = q(rng.gen_range(0..=8), 4);
            pts.push((&x + &dx, y + slope * dx));
        }
        let f = PiecewiseAffine::new(pts.clone()).unwrap();
        let dec = merge_slopes(&f, &d).unwrap();
        if (dec.breakpoints, dec.slopes) != hull_oracle(&pts) {
            bad += 1;
        }
    }
    check(
        bad == 0,
        format!("10000 random monotone functions; {bad} differ from the hull oracle"),
    )
}

fn criterion_8() -> Outcome {
    let (m, h) = (8u32, 2u32);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut ok, mut worst) = (0, f64::INFINITY);
    for i in 0..500u64 {
        let count = rng.gen_range(1..=4096);
        let p = random_cells(m, count, i).unwrap();
        let u = uniformize(&p, h).unwrap();
        // (2H)^{m/H} · |P'| ≥ |P|, in integers.
        let factor = (2u64 * h as u64).pow(m / h);
        let retained = u.len() as u64 * factor >= p.len() as u64;
        let uniform = is_uniform(&u.family, h).as_ref() == Some(&u.branching);
        let subset = u.family.cells().iter().all(|c| p.contains(c));
        if retained && uniform && subset {
            ok += 1;
        }
        worst = worst.min(u.retention());
    }
    check(
        ok == 500,
        format!("{ok}/500 families (m=8, H=2) retain >= (2H)^(-m/H)|P| and pass full traversal; worst retention {worst:.4} vs {:.6}", 4f64.powi(-4)),
    )
}

fn criterion_9() -> Outcome {
    let m = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut ok = 0;
    let mut failures = Vec::new();
    let mut exact_eta = 0;
    for i in 0..100u64 {
        let p = if i % 2 == 0 {
            random_cells(m, rng.gen_range(16..=4096), 500 + i).unwrap()
        } else {
            cantor_set(
                m,
                [0.5, 0.75, 1.0][(i / 2) as usize % 3],
                [1, 2][(i / 6) as usize % 2],
                Some(i),
            )
            .unwrap()
        };
        let c = [1.0, 2.0, 4.0][i as usize % 3];
        let h = [1u32, 2, 4][(i / 3) as usize % 3];
        match extract_nonconcentrated(&p, c, None, h) {
            Ok(cert) => {
                let replay = verify_certificate(&p, &cert).unwrap();
                if replay.passes() {
                    ok += 1;
                    exact_eta += usize::from(matches!(cert.eta, incidence_lab::structure::Eta::Value(_)));
                } else {
                    failures.push(format!("family {i}: {replay:?}"));
                }
            }
            Err(e) => failures.push(format!("family {i}: {e}")),
        }
    }
    check(
        ok == 100,
        format!("{ok}/100 certificates replay (size and rescaled bound); {exact_eta} with eta above the floor; failures {failures:?}"),
    )
}

fn criterion_10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 1.0;
    let mut identity = true;
    for i in 0..100u64 {
        let m = rng.gen_range(4..=8);
        let side = 1i64 << m;
        let scale = Scale::new(m).unwrap();
        let p = random_cells(m, (side * side / 4) as usize, i).unwrap();
        // Tubes with slopes in [-1, 0) and intercepts in [0, 1) dualize into the unit square.
        let coords: Vec<(i64, i64)> = (0..side * 2)
            .map(|_| (rng.gen_range(-side..0), rng.gen_range(0..side)))
            .collect();
        let t = DualCellFamily::from_coords(scale, &coords).unwrap();
        let (ps, ts) = dualize_config(&p, &t).unwrap();
        let before = count_incidences(&p, &t).unwrap() as f64;
        let after = count_incidences(&ps, &ts).unwrap() as f64;
        let ratio = if before > after {
            before / after.max(1.0)
        } else {
            after / before.max(1.0)
        };
        worst = worst.max(ratio);
        let (p2, t2) = undualize_config(&ps, &ts).unwrap();
        identity &= p2 == p && t2 == t;
        // Raw index maps: two forward applications are the reflection x ↦ -x-1.
        identity &= p.cells().iter().all(|c| {
            let (a, b) = incidence_lab::grid::cell_to_tube_index(c.x, c.y);
            let (x2, y2) = incidence_lab::grid::tube_to_cell_index(a, b);
            (-x2 - 1, y2) == (c.x, c.y)
        });
    }
    check(
        worst <= DUALITY_FACTOR && identity,
        format!("100 configs, m<=8: worst count ratio {worst:.3} (factor {DUALITY_FACTOR}); double dualization identity={identity}"),
    )
}

type Criterion = (u32, &'static str, fn() -> Outcome, Duration);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (1, "predicate oracle equivalence", criterion_1, Duration::from_secs(10)),
        (2, "incidence counting oracle", criterion_2, Duration::from_secs(30)),
        (3, "extremal exponent", criterion_3, Duration::from_secs(120)),
        (4, "Fu-Ren sanity", criterion_4, Duration::from_secs(600)),
        (5, "clique recovery", criterion_5, Duration::from_secs(300)),
        (6, "sheaf rectangle", criterion_6, Duration::from_secs(60)),
        (7, "convex-minorant oracle", criterion_7, Duration::from_secs(30)),
        (8, "uniformization guarantee", criterion_8, Duration::from_secs(60)),
        (
            9,
            "non-concentration certificates",
            criterion_9,
            Duration::from_secs(120),
        ),
        (10, "duality", criterion_10, Duration::from_secs(60)),
    ];
    let only: Option<u32> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (n, name, run, budget) in criteria {
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let took = start.elapsed();
        let pass = out.pass && took <= budget;
        failed += usize::from(!pass);
        println!(
            "criterion {n:>2} [{name}]: {} ({:.2}s of {}s) {}",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            budget.as_secs(),
            out.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
