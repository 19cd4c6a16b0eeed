use std::cmp::Ordering;

use num_bigint::BigInt;
use num_traits::{Pow, ToPrimitive, Zero};
use serde::Serialize;

use super::rational::{cmp_pow2_neg, from_f64, int, q_to_f64, q_to_string, Rational};
use super::slopes::{superlinearity_check, BranchingProfile};
use super::uniform::{is_uniform, uniformize, UniformFamily};
use crate::error::{Error, Result};
use crate::grid::{rescale, Cell};
use crate::sets::{covering_number, delta_s_constant, CellFamily, KTReport};

/// Multiplier in the rescaled-set bound `DIMENSION_CONSTANT · 2^{H s}`.
pub const DIMENSION_CONSTANT: f64 = 4.0;

/// Relative slack for float comparisons against the rescaled bound.
pub const REL_TOL: f64 = 1e-9;

/// Largest `η₀ = 2^{-i}` with `η₀ · exp(C²/2) < t` and `η₀ ≤ 2/C`; returns `i`.
pub fn choose_eta0_log2(c: f64, t: f64) -> Result<u64> {
    if !(c >= 1.0) || !(t > 0.0) || !c.is_finite() || !t.is_finite() {
        return Err(Error::Invalid(format!("need C ≥ 1 and t > 0, got C={c}, t={t}")));
    }
    let ln2 = std::f64::consts::LN_2;
    let from_exp = ((c * c / 2.0 - t.ln()) / ln2).floor() + 1.0;
    let from_lip = (c / 2.0).log2().floor() + 1.0;
    let mut i = from_exp.max(from_lip).max(1.0) as u64;
    // Guard the boundary against rounding in the float estimate.
    while (c * c / 2.0 - i as f64 * ln2) >= t.ln() || (-(i as f64)).exp2() * c > 2.0 {
        i += 1;
    }
    Ok(i)
}

/// The exponent `η`: either the floor `η₀ = 2^{-i}` or an exact value above it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Eta {
    Floor(u64),
    Value(Rational),
}

impl Eta {
    pub fn to_f64(&self) -> f64 {
        match self {
            Eta::Floor(i) => (-(*i as f64)).exp2(),
            Eta::Value(q) => q_to_f64(q),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Eta::Floor(i) => format!("2^-{i}"),
            Eta::Value(q) => q_to_string(q),
        }
    }
}

impl PartialOrd for Eta {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Orders by value; a floor is below every exact value above it.
impl Ord for Eta {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Eta::Floor(i), Eta::Floor(j)) => j.cmp(i),
            (Eta::Floor(_), Eta::Value(_)) => Ordering::Less,
            (Eta::Value(_), Eta::Floor(_)) => Ordering::Greater,
            (Eta::Value(a), Eta::Value(b)) => a.cmp(b),
        }
    }
}

impl Serialize for Eta {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.describe())
    }
}

/// Output of [`extract_nonconcentrated`].
#[derive(Clone, Debug, PartialEq)]
pub struct NonConcentrationCertificate {
    pub c: f64,
    pub t: f64,
    pub eta0_log2: u64,
    pub eta: Eta,
    pub h: u32,
    /// Block index `y₀`; `Δ = 2^{-y₀ H}`.
    pub y0: u32,
    pub q: Cell,
    /// The uniformized family the certificate is relative to.
    pub uniform: UniformFamily,
    pub profile: BranchingProfile,
    /// Index of the accepted decomposition interval.
    pub interval: usize,
    pub subset: CellFamily,
    /// `delta_s_constant(rescale(Q, subset), Cη)` measured at construction.
    pub rescaled_constant: f64,
}

impl NonConcentrationCertificate {
    pub fn delta_exp(&self) -> u32 {
        self.y0 * self.h
    }

    pub fn delta(&self) -> f64 {
        (-(self.delta_exp() as f64)).exp2()
    }

    pub fn exponent(&self) -> f64 {
        self.c * self.eta.to_f64()
    }

    /// `4 · 2^{H·Cη}`, the non-concentration constant promised for the rescaled subset.
    pub fn bound(&self) -> f64 {
        DIMENSION_CONSTANT * (self.h as f64 * self.exponent()).exp2()
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "c": self.c,
            "t": self.t,
            "eta0": format!("2^-{}", self.eta0_log2),
            "eta": self.eta,
            "eta_f64": self.eta.to_f64(),
            "h": self.h,
            "delta_exp": self.delta_exp(),
            "q": [self.q.x, self.q.y, self.q.m],
            "uniform_size": self.uniform.len(),
            "subset_size": self.subset.len(),
            "rescaled_constant": self.rescaled_constant,
            "bound": self.bound(),
            "profile": self.profile.to_json(),
        })
    }
}

/// `|sub| ≥ δ^η |whole|` for a family at scale `2^-m`.
fn size_ok(sub: usize, whole: usize, m: u32, eta: &Eta) -> bool {
    if sub >= whole {
        return true;
    }
    if sub == 0 {
        return false;
    }
    match eta {
        // sub^{2^i} · 2^m ≥ whole^{2^i}, evaluated exactly while feasible.
        Eta::Floor(i) if *i <= 16 => {
            let e = 1u32 << i;
            BigInt::from(sub).pow(e) << m as usize >= BigInt::from(whole).pow(e)
        }
        Eta::Floor(i) => ((whole as f64).log2() - (sub as f64).log2()) <= m as f64 * (-(*i as f64)).exp2(),
        // sub^den · 2^{m·num} ≥ whole^den.
        Eta::Value(q) => {
            let (Some(num), Some(den)) = ((q.numer() * BigInt::from(m)).to_u64(), q.denom().to_u32()) else {
                return false;
            };
            BigInt::from(sub).pow(den) << num as usize >= BigInt::from(whole).pow(den)
        }
    }
}

fn rescaled_constant(q: &Cell, subset: &CellFamily, s: f64) -> Result<KTReport> {
    delta_s_constant(&rescale(q, subset)?, s)
}

/// Everything the construction decides before measuring anything.
pub(crate) struct Located {
    pub t: f64,
    pub eta0_log2: u64,
    pub uniform: UniformFamily,
    pub profile: BranchingProfile,
    pub interval: usize,
    pub eta: Eta,
    pub y0: u32,
    pub q: Cell,
}

pub(crate) fn locate(p: &CellFamily, c: f64, t: Option<f64>, h: u32) -> Result<Located> {
    if p.is_empty() {
        return Err(Error::Empty("extract_nonconcentrated needs a nonempty family".into()));
    }
    let m = p.m();
    let uniform = uniformize(p, h)?;
    // Read from the uniform family, which is what the certificate speaks about.
    let t = t.unwrap_or_else(|| (uniform.len() as f64).log2() / m as f64);
    let t = if t > 0.0 { t } else { f64::MIN_POSITIVE };
    let i = choose_eta0_log2(c, t)?;
    let profile = BranchingProfile::from_uniform(&uniform)?;
    let blocks = profile.blocks() as i64;
    let dec = &profile.decomposition;
    let c_q = from_f64(c).ok_or_else(|| Error::Invalid(format!("C={c} is not finite")))?;
    // g(x) = β(m' x)/m' at x = a_j / m'.
    let g = |j: usize| &profile.values[dec.breakpoints[j].to_integer().to_usize().unwrap()] / int(blocks);

    let start = (0..dec.intervals())
        .find(|&j| cmp_pow2_neg(&g(j + 1), i) == Ordering::Greater)
        .ok_or_else(|| Error::NoBreakpoint {
            profile: profile.summary(),
        })?;
    let mut accepted = None;
    for j in start..dec.intervals() {
        let sigma = &dec.slopes[j];
        let eta = if j == start {
            Eta::Floor(i)
        } else {
            let gj = g(j);
            match cmp_pow2_neg(&gj, i) {
                Ordering::Greater => Eta::Value(gj),
                _ => Eta::Floor(i),
            }
        };
        let ok = match &eta {
            // σ ≥ C·2^{-i}
            Eta::Floor(i) => cmp_pow2_neg(&(sigma / &c_q), *i) != Ordering::Less,
            Eta::Value(v) => *sigma >= &c_q * v,
        };
        if ok {
            accepted = Some((j, eta));
            break;
        }
    }
    let (interval, eta) = accepted.ok_or_else(|| Error::NoBreakpoint {
        profile: profile.summary(),
    })?;
    let y0 = dec.breakpoints[interval].to_integer().to_u32().unwrap();
    let level = y0 * h;

    let mut best: Option<(usize, Cell)> = None;
    let fam = &uniform.family;
    let mut k = 0;
    while k < fam.len() {
        let q = fam.cells()[k].ancestor(level);
        let mut n = 0;
        // Cells sharing an ancestor are contiguous in lexicographic order.
        while k < fam.len() && fam.cells()[k].ancestor(level) == q {
            n += 1;
            k += 1;
        }
        if best.is_none_or(|(bn, _)| n > bn) {
            best = Some((n, q));
        }
    }
    let q = best.expect("nonempty family").1;
    Ok(Located {
        t,
        eta0_log2: i,
        uniform,
        profile,
        interval,
        eta,
        y0,
        q,
    })
}

/// Constructs a non-concentrated subset of `p` following the branching-function argument.
///
/// The family is first uniformized with block size `h` and the certificate is
/// stated relative to that uniform family `P'`. `t` defaults to `log|P'| / log(1/δ)`.
pub fn extract_nonconcentrated(p: &CellFamily, c: f64, t: Option<f64>, h: u32) -> Result<NonConcentrationCertificate> {
    let Located {
        t,
        eta0_log2,
        uniform,
        profile,
        interval,
        eta,
        y0,
        q,
    } = locate(p, c, t, h)?;
    let subset = uniform.family.within(&q);
    let report = rescaled_constant(&q, &subset, c * eta.to_f64())?;
    let cert = NonConcentrationCertificate {
        c,
        t,
        eta0_log2,
        eta,
        h,
        y0,
        q,
        uniform,
        profile,
        interval,
        subset,
        rescaled_constant: report.best_constant,
    };
    let check = verify_certificate(p, &cert)?;
    if !check.passes() {
        return Err(Error::pipeline(
            "nonconcentration",
            format!("certificate failed its own replay: {check:?}"),
        ));
    }
    Ok(cert)
}

/// Independent replay of a certificate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertificateCheck {
    pub uniform_ok: bool,
    pub subset_ok: bool,
    pub size_ok: bool,
    pub bound_ok: bool,
    pub measured_constant: f64,
    pub bound: f64,
}

impl CertificateCheck {
    pub fn passes(&self) -> bool {
        self.uniform_ok && self.subset_ok && self.size_ok && self.bound_ok
    }
}

/// Rechecks a certificate against the original family without trusting stored values.
pub fn verify_certificate(p: &CellFamily, cert: &NonConcentrationCertificate) -> Result<CertificateCheck> {
    let uni = &cert.uniform.family;
    let uniform_ok =
        uni.cells().iter().all(|c| p.contains(c)) && is_uniform(uni, cert.h).as_ref() == Some(&cert.uniform.branching);
    let m = p.m();
    let subset_ok = cert.q.m == cert.delta_exp()
        && cert
            .subset
            .cells()
            .iter()
            .all(|c| cert.q.contains(c) && uni.contains(c))
        && cert.subset.len() == uni.within(&cert.q).len();
    let sub = covering_number(&cert.subset, m)?;
    let whole = covering_number(uni, m)?;
    let size_ok = size_ok(sub, whole, m, &cert.eta);
    let report = rescaled_constant(&cert.q, &cert.subset, cert.exponent())?;
    let bound = cert.bound();
    Ok(CertificateCheck {
        uniform_ok,
        subset_ok,
        size_ok,
        bound_ok: report.best_constant <= bound * (1.0 + REL_TOL),
        measured_constant: report.best_constant,
        bound,
    })
}

/// Worst rescaled non-concentration constant over the squares at block level `a`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RescaledReport {
    pub a: u32,
    pub b: u32,
    pub s: f64,
    pub squares: usize,
    pub worst: KTReport,
    pub worst_square: (i64, i64),
    pub bound: f64,
    pub passes: bool,
}

/// For every block-level-`a` square `Q`, rescales `P ∩ Q` at resolution `Δ^{b-a}`
/// and measures its `(·, s)` constant against `4·Δ^{-s}` with `Δ = 2^{-H}`.
pub fn rescaled_set_check(p: &UniformFamily, a: u32, b: u32, s: f64) -> Result<RescaledReport> {
    let profile = BranchingProfile::from_uniform(p)?;
    if a >= b || b > profile.blocks() {
        return Err(Error::Precondition(format!(
            "need a < b ≤ {} block levels, got a={a}, b={b}",
            profile.blocks()
        )));
    }
    let s_q = from_f64(s).ok_or_else(|| Error::Invalid(format!("s={s} is not finite")))?;
    if !superlinearity_check(
        &profile.function(),
        &int(a as i64),
        &int(b as i64),
        &s_q,
        &Rational::zero(),
    ) {
        return Err(Error::Precondition(format!(
            "branching function is not {s}-superlinear on [{a}, {b}]"
        )));
    }
    let h = p.h;
    let coarse = p.family.coarsen(b * h)?;
    let squares = p.family.coarsen(a * h)?;
    let bound = DIMENSION_CONSTANT * (h as f64 * s).exp2();
    let mut worst: Option<(KTReport, Cell)> = None;
    for q in squares.cells() {
        let r = rescaled_constant(q, &coarse.within(q), s)?;
        if worst.as_ref().is_none_or(|(w, _)| r.best_constant > w.best_constant) {
            worst = Some((r, *q));
        }
    }
    let (worst, q) = worst.expect("nonempty family");
    Ok(RescaledReport {
        a,
        b,
        s,
        squares: squares.len(),
        passes: worst.best_constant <= bound * (1.0 + REL_TOL),
        worst,
        worst_square: (q.x, q.y),
        bound,
    })
}
