use num_traits::{Signed, Zero};
use serde::Serialize;

use super::rational::{int, q_to_f64, q_to_string, Rational};
use super::uniform::UniformFamily;
use crate::error::{Error, Result};

/// Continuous piecewise-affine function given by its breakpoints.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PiecewiseAffine {
    xs: Vec<Rational>,
    ys: Vec<Rational>,
}

impl PiecewiseAffine {
    /// Needs at least two points with strictly increasing abscissae.
    pub fn new(points: Vec<(Rational, Rational)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Invalid("need at least two breakpoints".into()));
        }
        if points.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Invalid("breakpoint abscissae must increase strictly".into()));
        }
        let (xs, ys) = points.into_iter().unzip();
        Ok(Self { xs, ys })
    }

    pub fn from_values(values: &[Rational]) -> Result<Self> {
        Self::new(
            values
                .iter()
                .enumerate()
                .map(|(i, y)| (int(i as i64), y.clone()))
                .collect(),
        )
    }

    pub fn xs(&self) -> &[Rational] {
        &self.xs
    }

    pub fn ys(&self) -> &[Rational] {
        &self.ys
    }

    pub fn domain(&self) -> (&Rational, &Rational) {
        (&self.xs[0], self.xs.last().unwrap())
    }

    pub fn slopes(&self) -> Vec<Rational> {
        (0..self.xs.len() - 1)
            .map(|i| (&self.ys[i + 1] - &self.ys[i]) / (&self.xs[i + 1] - &self.xs[i]))
            .collect()
    }

    /// `None` outside the domain.
    pub fn eval(&self, x: &Rational) -> Option<Rational> {
        let (lo, hi) = self.domain();
        if x < lo || x > hi {
            return None;
        }
        let i = match self.xs.binary_search(x) {
            Ok(i) => return Some(self.ys[i].clone()),
            Err(i) => i - 1,
        };
        let slope = (&self.ys[i + 1] - &self.ys[i]) / (&self.xs[i + 1] - &self.xs[i]);
        Some(&self.ys[i] + slope * (x - &self.xs[i]))
    }
}

/// Breakpoints `a_0 < … < a_n` and strictly increasing slopes `σ_0 < … < σ_{n-1}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlopeDecomposition {
    pub breakpoints: Vec<Rational>,
    pub slopes: Vec<Rational>,
}

impl SlopeDecomposition {
    pub fn intervals(&self) -> usize {
        self.slopes.len()
    }

    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct Piece {
            a: String,
            b: String,
            sigma: String,
            a_f64: f64,
            b_f64: f64,
            sigma_f64: f64,
        }
        let pieces: Vec<Piece> = self
            .slopes
            .iter()
            .enumerate()
            .map(|(j, s)| Piece {
                a: q_to_string(&self.breakpoints[j]),
                b: q_to_string(&self.breakpoints[j + 1]),
                sigma: q_to_string(s),
                a_f64: q_to_f64(&self.breakpoints[j]),
                b_f64: q_to_f64(&self.breakpoints[j + 1]),
                sigma_f64: q_to_f64(s),
            })
            .collect();
        serde_json::json!({ "intervals": pieces })
    }
}

/// Merges adjacent affine pieces until slopes increase strictly.
///
/// The output is the lower convex envelope of the breakpoints of `f`.
pub fn merge_slopes(f: &PiecewiseAffine, d: &Rational) -> Result<SlopeDecomposition> {
    if !f.xs[0].is_zero() || !f.ys[0].is_zero() {
        return Err(Error::Invalid("f must start at (0, 0)".into()));
    }
    let slopes = f.slopes();
    if let Some(i) = slopes.iter().position(|s| s.is_negative()) {
        return Err(Error::Invalid(format!("f decreases on piece {i}")));
    }
    if let Some(i) = slopes.iter().position(|s| s > d) {
        return Err(Error::Invalid(format!(
            "slope on piece {i} exceeds the Lipschitz bound"
        )));
    }
    // Each entry is the index of the left endpoint of a merged piece.
    let mut stack: Vec<usize> = Vec::new();
    let chord = |i: usize, k: usize| (&f.ys[k] - &f.ys[i]) / (&f.xs[k] - &f.xs[i]);
    let mut ends: Vec<usize> = Vec::new();
    for k in 1..f.xs.len() {
        let mut start = k - 1;
        // The piece below is [below, start], the top piece is [start, k].
        while let Some(&below) = stack.last() {
            if chord(start, k) > chord(below, start) {
                break;
            }
            stack.pop();
            ends.pop();
            start = below;
        }
        stack.push(start);
        ends.push(k);
    }
    let mut breakpoints: Vec<Rational> = stack.iter().map(|&i| f.xs[i].clone()).collect();
    breakpoints.push(f.xs.last().unwrap().clone());
    let slopes = stack.iter().zip(&ends).map(|(&i, &k)| chord(i, k)).collect();
    Ok(SlopeDecomposition { breakpoints, slopes })
}

/// Checks `f(x) ≥ f(a) + σ(x−a) − ε(b−a)` on `[a, b]`.
///
/// Testing `a`, `b` and the breakpoints in between suffices since both sides are
/// affine between breakpoints.
pub fn superlinearity_check(f: &PiecewiseAffine, a: &Rational, b: &Rational, sigma: &Rational, eps: &Rational) -> bool {
    if a >= b {
        return false;
    }
    let (Some(fa), Some(_)) = (f.eval(a), f.eval(b)) else {
        return false;
    };
    let slack = eps * (b - a);
    std::iter::once(b)
        .chain(f.xs.iter().filter(|x| *x > a && *x < b))
        .all(|x| f.eval(x).unwrap() >= &fa + sigma * (x - a) - &slack)
}

/// Branching function `β(j) = log₂(N_1⋯N_j)/H` of a uniform family.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BranchingProfile {
    pub h: u32,
    pub values: Vec<Rational>,
    pub decomposition: SlopeDecomposition,
}

impl BranchingProfile {
    pub fn from_counts(h: u32, counts: &[u64]) -> Result<Self> {
        if h == 0 || counts.is_empty() {
            return Err(Error::Invalid("need H ≥ 1 and at least one block".into()));
        }
        let mut values = vec![int(0)];
        let mut acc = 0i64;
        for &n in counts {
            if !n.is_power_of_two() || n.trailing_zeros() > 2 * h {
                return Err(Error::Invalid(format!(
                    "branching count {n} is not a power of two ≤ 4^H"
                )));
            }
            acc += n.trailing_zeros() as i64;
            values.push(Rational::new(acc.into(), (h as i64).into()));
        }
        let decomposition = merge_slopes(&PiecewiseAffine::from_values(&values)?, &int(2))?;
        Ok(Self {
            h,
            values,
            decomposition,
        })
    }

    pub fn from_uniform(u: &UniformFamily) -> Result<Self> {
        Self::from_counts(u.h, &u.branching)
    }

    pub fn blocks(&self) -> u32 {
        self.values.len() as u32 - 1
    }

    pub fn function(&self) -> PiecewiseAffine {
        PiecewiseAffine::from_values(&self.values).expect("at least two values")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("j,beta\n");
        for (j, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{j},{}\n", q_to_f64(v)));
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "h": self.h,
            "blocks": self.blocks(),
            "beta": self.values.iter().map(q_to_string).collect::<Vec<_>>(),
            "decomposition": self.decomposition.to_json(),
        })
    }

    /// Compact description used in diagnostics.
    pub fn summary(&self) -> String {
        let beta: Vec<String> = self.values.iter().map(q_to_string).collect();
        let pieces: Vec<String> = self
            .decomposition
            .slopes
            .iter()
            .enumerate()
            .map(|(j, s)| {
                format!(
                    "[{},{}]:{}",
                    q_to_string(&self.decomposition.breakpoints[j]),
                    q_to_string(&self.decomposition.breakpoints[j + 1]),
                    q_to_string(s)
                )
            })
            .collect();
        format!("H={} beta=[{}] pieces={}", self.h, beta.join(","), pieces.join(" "))
    }
}
