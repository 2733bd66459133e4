//! Layer contracts and their evaluation: indemnity, retained tail risk,
//! the reinsurer's expected margin, expected surplus, the risk-over-surplus
//! criterion, and the marginal-gain scan that recovers optimal layer
//! structures from the pricing curve.

use crate::error::{Error, Result};
use crate::pricing::{KFunction, SmoothedCdf};
use crate::severity::EmpiricalLoss;

/// A one- or two-layer indemnity schedule on the money scale: a ground-up
/// layer paying min(x, b2) plus an upper layer paying the part of x between
/// a1 and a2. `b2 = 0` encodes a single-layer contract; `b2 = 0, a1 = a2`
/// encodes no reinsurance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerProgram {
    b2: f64,
    a1: f64,
    a2: f64,
}

impl LayerProgram {
    pub fn new(b2: f64, a1: f64, a2: f64) -> Result<Self> {
        if !(b2 >= 0.0 && b2 <= a1 && a1 <= a2) || !a2.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "layer bounds must satisfy 0 <= b2 <= a1 <= a2, got ({b2}, {a1}, {a2})"
            )));
        }
        Ok(Self { b2, a1, a2 })
    }

    pub fn one_layer(a1: f64, a2: f64) -> Result<Self> {
        Self::new(0.0, a1, a2)
    }

    /// Degenerate program paying nothing.
    pub fn no_reinsurance(x_eps: f64) -> Self {
        Self {
            b2: 0.0,
            a1: x_eps,
            a2: x_eps,
        }
    }

    /// Full cover of every loss up to `x_eps`.
    pub fn full_cover(x_eps: f64) -> Self {
        Self {
            b2: 0.0,
            a1: 0.0,
            a2: x_eps,
        }
    }

    pub fn b2(&self) -> f64 {
        self.b2
    }

    pub fn a1(&self) -> f64 {
        self.a1
    }

    pub fn a2(&self) -> f64 {
        self.a2
    }

    /// Reinsured amount at loss x: min(x, b2) + clamp(x - a1, 0, a2 - a1).
    pub fn indemnity(&self, x: f64) -> f64 {
        debug_assert!(x >= 0.0);
        x.min(self.b2) + (x - self.a1).clamp(0.0, self.a2 - self.a1)
    }

    /// Retained loss at the tail point: x_eps - I(x_eps). Because the
    /// indemnity grows at most one-for-one, this is the retained tail
    /// quantile itself.
    pub fn retained_at(&self, x_eps: f64) -> f64 {
        x_eps - self.indemnity(x_eps)
    }

    pub fn is_no_reinsurance(&self) -> bool {
        self.b2 == 0.0 && self.a1 == self.a2
    }

    /// Clip all layers at `x_eps`; never increases the criterion.
    pub fn truncate_at(&self, x_eps: f64) -> Self {
        Self {
            b2: self.b2.min(x_eps),
            a1: self.a1.min(x_eps),
            a2: self.a2.min(x_eps),
        }
    }
}

/// Evaluation of a program against a loss sample and a pricing curve.
#[derive(Debug, Clone, Copy)]
pub struct CriterionResult {
    pub var_retained: f64,
    pub expected_surplus: f64,
    pub reinsurer_margin: f64,
    /// var_retained / expected_surplus; `None` when the surplus is not
    /// positive.
    pub criterion: Option<f64>,
    pub feasible: bool,
    /// Feasible but with a surplus so small the ratio is numerically
    /// meaningless; optimizers must not chase such values.
    pub unstable: bool,
}

/// Reinsurer's expected margin on the program: the integral of K composed
/// with the empirical distribution across the covered layers. The margin
/// is exact for the empirical measure: piecewise-constant segments between
/// order statistics, or the closed form gamma_re * E I(X) when K is linear.
pub fn reinsurer_margin(prog: &LayerProgram, k: &KFunction, loss: &EmpiricalLoss) -> f64 {
    if let Some(gamma_re) = k.linear_gamma_re() {
        let ground = loss.mean() - loss.expected_excess(prog.b2); // E min(X, b2)
        let upper = loss.expected_excess(prog.a1) - loss.expected_excess(prog.a2);
        return gamma_re * (ground + upper);
    }
    segment_integral(k, loss, 0.0, prog.b2) + segment_integral(k, loss, prog.a1, prog.a2)
}

/// Integral of K{F(t)} dt over [lo, hi] against the empirical step CDF.
fn segment_integral(k: &KFunction, loss: &EmpiricalLoss, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let sample = loss.sample();
    let m = sample.len();
    let mut i = sample.partition_point(|v| *v <= lo);
    let mut left = lo;
    let mut total = 0.0;
    while left < hi {
        let (right, next_i) = if i < m && sample[i] < hi {
            (sample[i].max(left), i + 1)
        } else {
            (hi, i)
        };
        total += k.k(i as f64 / m as f64) * (right - left);
        left = right;
        i = next_i;
    }
    total
}

/// Expected surplus of the cedent under the program:
/// gamma E(X) - margin - beta (x_eps - I(x_eps)).
pub fn expected_surplus(
    prog: &LayerProgram,
    k: &KFunction,
    loss: &EmpiricalLoss,
    gamma: f64,
    beta: f64,
    x_eps: f64,
) -> f64 {
    gamma * loss.mean() - reinsurer_margin(prog, k, loss) - beta * prog.retained_at(x_eps)
}

/// Fraction of gamma E(X) below which a positive surplus is flagged as
/// numerically unstable.
const UNSTABLE_SURPLUS_FRACTION: f64 = 1e-12;

/// Assemble retained tail risk, surplus and their ratio at tail level
/// `epsilon`; infeasibility (non-positive surplus) is data, not an error.
pub fn criterion(
    prog: &LayerProgram,
    k: &KFunction,
    loss: &EmpiricalLoss,
    gamma: f64,
    beta: f64,
    epsilon: f64,
) -> CriterionResult {
    let x_eps = loss.percentile(1.0 - epsilon);
    let margin = reinsurer_margin(prog, k, loss);
    let var_retained = prog.retained_at(x_eps);
    let surplus = gamma * loss.mean() - margin - beta * var_retained;
    let feasible = surplus > 0.0;
    CriterionResult {
        var_retained,
        expected_surplus: surplus,
        reinsurer_margin: margin,
        criterion: feasible.then(|| var_retained / surplus),
        feasible,
        unstable: feasible && surplus <= UNSTABLE_SURPLUS_FRACTION * gamma * loss.mean(),
    }
}

/// Distribution estimate used inside the marginal-gain scan.
#[derive(Clone, Copy)]
pub enum LossCdf<'a> {
    /// Step CDF of the sorted sample.
    Empirical(&'a EmpiricalLoss),
    /// Gaussian-kernel smoothed CDF.
    Smoothed(&'a SmoothedCdf),
}

impl LossCdf<'_> {
    fn eval(&self, x: f64) -> f64 {
        match self {
            LossCdf::Empirical(loss) => loss.cdf(x),
            LossCdf::Smoothed(cdf) => cdf.eval(x),
        }
    }
}

/// Marginal gain of covering losses at x when tail risk is priced at
/// beta + lambda: psi(x) = -K{F(x)} + (beta + lambda) for x below the tail
/// point, and -K{F(x)} above it. Coverage is worth buying exactly where
/// psi is positive.
pub fn psi_lambda(
    k: &KFunction,
    loss: &EmpiricalLoss,
    x: f64,
    beta: f64,
    lambda: f64,
    epsilon: f64,
) -> f64 {
    let x_eps = loss.percentile(1.0 - epsilon);
    psi_lambda_with(k, &LossCdf::Empirical(loss), x_eps, x, beta, lambda)
}

pub fn psi_lambda_with(
    k: &KFunction,
    cdf: &LossCdf,
    x_eps: f64,
    x: f64,
    beta: f64,
    lambda: f64,
) -> f64 {
    let indicator = if x < x_eps { beta + lambda } else { 0.0 };
    -k.k(cdf.eval(x)) + indicator
}

const PSI_SCAN_POINTS: usize = 4096;

/// Recover the optimal layer program implied by the sign structure of psi
/// on [0, x_eps): scan a dense grid, refine each sign change by bisection
/// to 1e-8 of the range, and map the positive set onto layers. At most two
/// positive intervals are admissible -- a ground-up layer starting at 0
/// and/or an upper layer ending at the tail point; anything else signals a
/// regime with a non-monotone price level (or numerical noise) and errors.
pub fn layers_from_psi(
    k: &KFunction,
    loss: &EmpiricalLoss,
    beta: f64,
    lambda: f64,
    epsilon: f64,
) -> Result<LayerProgram> {
    let x_eps = loss.percentile(1.0 - epsilon);
    layers_from_psi_with(k, &LossCdf::Empirical(loss), x_eps, beta, lambda)
}

pub fn layers_from_psi_with(
    k: &KFunction,
    cdf: &LossCdf,
    x_eps: f64,
    beta: f64,
    lambda: f64,
) -> Result<LayerProgram> {
    assert!(lambda >= 0.0, "lambda must be non-negative");
    assert!(x_eps > 0.0, "tail point must be positive");
    let psi = |x: f64| psi_lambda_with(k, cdf, x_eps, x, beta, lambda);
    // stay strictly below the tail point where the indicator drops away
    let top = x_eps * (1.0 - 1e-9);
    let n = PSI_SCAN_POINTS;
    let grid_at = |i: usize| top * i as f64 / n as f64;

    let mut intervals: Vec<(f64, f64)> = Vec::new();
    let mut open: Option<f64> = if psi(0.0) > 0.0 { Some(0.0) } else { None };
    let mut prev = grid_at(0);
    let mut prev_pos = psi(prev) > 0.0;
    for i in 1..=n {
        let cur = grid_at(i);
        let cur_pos = psi(cur) > 0.0;
        if cur_pos != prev_pos {
            let edge = crate::numeric::bisect(|x| psi(x), prev, cur, 1e-8 * x_eps);
            if cur_pos {
                open = Some(edge);
            } else if let Some(start) = open.take() {
                intervals.push((start, edge));
            }
        }
        prev = cur;
        prev_pos = cur_pos;
    }
    if let Some(start) = open {
        intervals.push((start, x_eps));
    }

    match intervals.len() {
        0 => Ok(LayerProgram::no_reinsurance(x_eps)),
        1 => {
            let (lo, hi) = intervals[0];
            if hi >= x_eps {
                // upper layer; lo == 0 is full cover
                LayerProgram::new(0.0, lo, x_eps)
            } else if lo <= 1e-8 * x_eps {
                // ground-up layer only
                LayerProgram::new(hi, x_eps, x_eps)
            } else {
                Err(Error::StructureViolation(1))
            }
        }
        2 => {
            let (g_lo, g_hi) = intervals[0];
            let (u_lo, u_hi) = intervals[1];
            if g_lo <= 1e-8 * x_eps && u_hi >= x_eps {
                LayerProgram::new(g_hi, u_lo, x_eps)
            } else {
                Err(Error::StructureViolation(2))
            }
        }
        n_int => Err(Error::StructureViolation(n_int)),
    }
}
