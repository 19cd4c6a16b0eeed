//! Cliques: the clique test, the extraction pipeline, sheaf-rectangle recovery
//! and exhaustion.

mod exhaust;
mod extract;
mod sheaf;

use serde::{Deserialize, Serialize};

pub use exhaust::{exhaust_cliques, ExhaustReport, ExhaustStop};
pub use extract::{clique_constant, extract_clique};
pub use sheaf::{find_sheaf_rectangle, RectangleParams, RectangleReport};

use crate::error::{Error, Result};
use crate::grid::{Cell, DualCell};
use crate::incidence::{count_incidences, fu_ren_exponent};
use crate::io::family_to_json;
use crate::sets::{CellFamily, DualCellFamily};
use crate::structure::Eta;

/// Tuning knobs of the pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliqueParams {
    pub eps: f64,
    /// Block size for the uniform decomposition; derived from `eps` when absent.
    pub decompose_h: Option<u32>,
    /// Block size used by the per-tube certificates.
    pub cert_h: u32,
    /// Constant of the comparability rectangle and of `[ℓ]_{C′δ}`.
    pub c_prime: f64,
    pub n_max: usize,
    /// Incidence floor of the exhaustion; `δ^{0.1 - f(s,t)}` when absent.
    pub floor: Option<f64>,
}

impl Default for CliqueParams {
    fn default() -> Self {
        CliqueParams {
            eps: 0.05,
            decompose_h: None,
            cert_h: 1,
            c_prime: 4.0,
            n_max: 1024,
            floor: None,
        }
    }
}

impl CliqueParams {
    pub fn resolved_floor(&self, m: u32, s: f64, t: f64) -> f64 {
        self.floor
            .unwrap_or_else(|| (m as f64 * (fu_ren_exponent(s, t) - 0.1)).exp2())
    }
}

/// One recorded pigeonhole decision.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceStep {
    pub stage: String,
    pub decision: String,
    pub before: usize,
    pub after: usize,
}

impl TraceStep {
    pub(crate) fn new(stage: &str, decision: impl Into<String>, before: usize, after: usize) -> Self {
        TraceStep {
            stage: stage.into(),
            decision: decision.into(),
            before,
            after,
        }
    }
}

/// Result of [`is_clique`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CliqueTest {
    pub holds: bool,
    pub theta: f64,
    pub pairs: usize,
    pub p_size: usize,
    pub l_size: usize,
}

/// `|I(P, L)| ≥ θ |P| |L|`.
pub fn is_clique(p: &CellFamily, l: &DualCellFamily, theta: f64) -> Result<CliqueTest> {
    if p.is_empty() || l.is_empty() {
        return Err(Error::Empty("a clique needs nonempty point and tube families".into()));
    }
    let pairs = count_incidences(p, l)?;
    let (np, nl) = (p.len(), l.len());
    let achieved = pairs as f64 / (np as f64 * nl as f64);
    Ok(CliqueTest {
        holds: pairs as f64 >= theta * np as f64 * nl as f64,
        theta: achieved,
        pairs,
        p_size: np,
        l_size: nl,
    })
}

/// A group of pairwise comparable tubes through `Q₀`.
#[derive(Clone, Debug, PartialEq)]
pub struct TubePacket {
    /// First member in lexicographic order.
    pub anchor: DualCell,
    pub members: DualCellFamily,
}

/// Output of [`extract_clique`].
#[derive(Clone, Debug, PartialEq)]
pub struct CliqueReport {
    pub p_prime: CellFamily,
    pub l_prime: DualCellFamily,
    pub pairs: usize,
    pub theta: f64,
    /// Anchor square, in the frame the pipeline ran in.
    pub q0: Cell,
    pub delta_exp: u32,
    pub eta: Eta,
    /// Non-concentration constant used for the certificates.
    pub c: f64,
    pub c_prime: f64,
    pub packet: TubePacket,
    pub packets: usize,
    /// Whether the pipeline ran on the dualized configuration.
    pub dual_frame: bool,
    pub trace: Vec<TraceStep>,
}

impl CliqueReport {
    /// Recounts the incidences of `P′ × L′` and compares with the stored values.
    pub fn replay(&self) -> Result<bool> {
        let t = is_clique(&self.p_prime, &self.l_prime, 0.0)?;
        Ok(t.pairs == self.pairs && t.theta == self.theta)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "theta": self.theta,
            "pairs": self.pairs,
            "p_size": self.p_prime.len(),
            "l_size": self.l_prime.len(),
            "q0": [self.q0.x, self.q0.y, self.q0.m],
            "delta_exp": self.delta_exp,
            "eta": self.eta,
            "eta_f64": self.eta.to_f64(),
            "c": self.c,
            "c_prime": self.c_prime,
            "packet_anchor": [self.packet.anchor.a, self.packet.anchor.b],
            "packets": self.packets,
            "dual_frame": self.dual_frame,
            "trace": self.trace,
            "p_prime": family_to_json(&self.p_prime),
            "l_prime": family_to_json(&self.l_prime),
        })
    }
}

pub(crate) fn check_dims(s: f64, t: f64, u: f64) -> Result<()> {
    for (name, v) in [("s", s), ("t", t), ("u", u)] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::Invalid(format!("{name}={v} must lie in (0, 1]")));
        }
    }
    Ok(())
}

/// `⌈log₂ n⌉` for `n ≥ 1`: the dyadic class `(2^{k-1}, 2^k]`.
pub(crate) fn dyadic_class(n: usize) -> u32 {
    debug_assert!(n >= 1);
    usize::BITS - (n - 1).leading_zeros()
}
