//! Reinsurance premium regimes.
//!
//! A regime prices a ceded layer through a market factor M(Z) correlated
//! with the aggregate loss. Writing U for the loss quantile level, the
//! conditional price level W(u) = E{M(Z) | U = u} and its integral
//! K(u) = int_u^1 (W(v) - 1) dv drive every contract computation: the
//! reinsurer's expected margin on a layer is the integral of K composed
//! with the loss distribution across the layer. K(1) = 0 by construction;
//! under the no-cheap-reinsurance condition (W non-decreasing and
//! K(0) > gamma) K is non-negative with a unique level delta solving
//! K(1 - delta) = gamma on its decreasing branch.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numeric;

/// Non-degenerate Gamma law for the market factor driver Z, stored as
/// (mean, sd) and exposed as shape/scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZFactor {
    pub mean: f64,
    pub sd: f64,
}

impl ZFactor {
    pub fn shape(&self) -> f64 {
        (self.mean / self.sd).powi(2)
    }

    pub fn scale(&self) -> f64 {
        self.sd * self.sd / self.mean
    }

    /// E(e^{omega Z}) in closed form; requires omega < 1/scale.
    pub fn exp_moment(&self, omega: f64) -> f64 {
        (1.0 - omega * self.scale()).powf(-self.shape())
    }

    pub fn quantile(&self, p: f64) -> f64 {
        numeric::gamma_quantile(self.shape(), self.scale(), p)
    }

    fn quantile_table(&self) -> ZQuantileTable {
        ZQuantileTable::build(self)
    }

    pub fn cdf(&self, z: f64) -> f64 {
        if z <= 0.0 {
            0.0
        } else {
            statrs::function::gamma::gamma_lr(self.shape(), z / self.scale())
        }
    }

    fn pdf(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        let k = self.shape();
        let s = self.scale();
        ((k - 1.0) * (z / s).ln() - z / s - statrs::function::gamma::ln_gamma(k) - s.ln()).exp()
    }
}

/// Cubic-Hermite interpolant of the driver quantile G^{-1}(v), tabulated
/// against the normal quantile s = Phi^{-1}(v). The map is near-linear in
/// s, so a few hundred nodes reach ~1e-9 absolute accuracy; levels beyond
/// |s| = 8.5 (mass below 1e-16) clamp to the end nodes.
#[derive(Debug, Clone)]
pub(crate) struct ZQuantileTable {
    s_lo: f64,
    step: f64,
    z: Vec<f64>,
    slope: Vec<f64>,
    v_lo: f64,
    v_hi: f64,
}

impl ZQuantileTable {
    const NODES: usize = 768;

    fn build(zf: &ZFactor) -> Self {
        // Phi(8) stays strictly below 1 in f64; beyond that the cdf rounds up
        let (s_lo, s_hi) = (-8.0f64, 8.0f64);
        let step = (s_hi - s_lo) / Self::NODES as f64;
        let (shape, scale) = (zf.shape(), zf.scale());
        let mut z = Vec::with_capacity(Self::NODES + 1);
        let mut slope = Vec::with_capacity(Self::NODES + 1);
        for i in 0..=Self::NODES {
            let s = s_lo + i as f64 * step;
            let v = numeric::std_normal_cdf(s).min(1.0 - 1e-16);
            let q = numeric::gamma_quantile(shape, scale, v);
            let dens = numeric::gamma_pdf(shape, scale, q);
            // dZ/ds = phi(s) / g(Z); flat where the density underflows
            slope.push(if dens > 1e-290 {
                numeric::std_normal_pdf(s) / dens
            } else {
                0.0
            });
            z.push(q);
        }
        Self {
            s_lo,
            step,
            v_lo: numeric::std_normal_cdf(s_lo),
            v_hi: numeric::std_normal_cdf(s_hi),
            z,
            slope,
        }
    }

    pub(crate) fn quantile(&self, v: f64) -> f64 {
        if v <= self.v_lo {
            return if v <= 0.0 { 0.0 } else { self.z[0] };
        }
        if v >= self.v_hi {
            return *self.z.last().unwrap();
        }
        let s = numeric::std_normal_quantile(v);
        let pos = (s - self.s_lo) / self.step;
        let i = (pos.floor() as usize).min(Self::NODES - 1);
        let t = pos - i as f64;
        let (z0, z1) = (self.z[i], self.z[i + 1]);
        let (m0, m1) = (self.slope[i] * self.step, self.slope[i + 1] * self.step);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * z0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * z1
            + (t3 - t2) * m1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegimeVariant {
    /// Constant market factor 1 + gamma_re.
    ExpectedValue { gamma_re: f64 },
    /// M(Z) = (1 + gamma_re) e^{omega Z} / E(e^{omega Z}) with (U, V)
    /// joined by a Clayton copula with parameter theta and Z = G^{-1}(V).
    ExponentialMarket {
        gamma_re: f64,
        omega: f64,
        z: ZFactor,
        theta: f64,
    },
}

/// A reinsurance pricing regime together with the cedent's own loading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PricingRegime {
    pub variant: RegimeVariant,
    /// The cedent's proportional loading gamma in the primary market.
    pub gamma: f64,
}

impl PricingRegime {
    pub fn expected_value(gamma: f64, gamma_re: f64) -> Result<Self> {
        validate_loadings(gamma, gamma_re)?;
        Ok(Self {
            variant: RegimeVariant::ExpectedValue { gamma_re },
            gamma,
        })
    }

    pub fn exponential_market(
        gamma: f64,
        gamma_re: f64,
        omega: f64,
        z_mean: f64,
        z_sd: f64,
        theta: f64,
    ) -> Result<Self> {
        validate_loadings(gamma, gamma_re)?;
        if !(omega >= 0.0) || !omega.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "omega must be non-negative, got {omega}"
            )));
        }
        if !(z_mean > 0.0) || !(z_sd > 0.0) {
            return Err(Error::InvalidParameter(
                "market factor driver needs positive mean and sd".into(),
            ));
        }
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "copula theta must be positive, got {theta}"
            )));
        }
        let z = ZFactor {
            mean: z_mean,
            sd: z_sd,
        };
        if omega >= 1.0 / z.scale() {
            return Err(Error::InvalidParameter(format!(
                "omega {omega} too large: e^(omega Z) has no finite mean beyond {}",
                1.0 / z.scale()
            )));
        }
        Ok(Self {
            variant: RegimeVariant::ExponentialMarket {
                gamma_re,
                omega,
                z,
                theta,
            },
            gamma,
        })
    }

    pub fn gamma_re(&self) -> f64 {
        match self.variant {
            RegimeVariant::ExpectedValue { gamma_re } => gamma_re,
            RegimeVariant::ExponentialMarket { gamma_re, .. } => gamma_re,
        }
    }

    /// E{M(Z)} = 1 + gamma_re for both variants.
    pub fn market_factor_mean(&self) -> f64 {
        1.0 + self.gamma_re()
    }

    pub fn market_factor(&self, z: f64) -> f64 {
        match self.variant {
            RegimeVariant::ExpectedValue { gamma_re } => 1.0 + gamma_re,
            RegimeVariant::ExponentialMarket {
                gamma_re,
                omega,
                z: zf,
                ..
            } => (1.0 + gamma_re) * (omega * z).exp() / zf.exp_moment(omega),
        }
    }

    /// Conditional price level W(u) = E{M(Z) | U = u}, u in [0, 1].
    ///
    /// For the exponential-market variant this integrates e^{omega z} over
    /// the conditional probability level y, mapping y through the Clayton
    /// conditional inverse and the driver quantile. Integrating on the
    /// conditional level keeps the integrand O(1) at any dependence
    /// strength. Absolute quadrature tolerance 1e-9; the top 1e-12 of the
    /// level range is truncated (its mass is negligible for any omega
    /// admitted by construction away from the exponential-moment bound).
    pub fn w(&self, u: f64) -> Result<f64> {
        match self.variant {
            RegimeVariant::ExpectedValue { gamma_re } => {
                assert!((0.0..=1.0).contains(&u), "u must be in [0,1]");
                Ok(1.0 + gamma_re)
            }
            RegimeVariant::ExponentialMarket { z, .. } => {
                self.w_with_quantile(u, &|v| z.quantile(v))
            }
        }
    }

    fn w_with_quantile<Q: Fn(f64) -> f64>(&self, u: f64, quantile: &Q) -> Result<f64> {
        assert!((0.0..=1.0).contains(&u), "u must be in [0,1]");
        match self.variant {
            RegimeVariant::ExpectedValue { gamma_re } => Ok(1.0 + gamma_re),
            RegimeVariant::ExponentialMarket {
                gamma_re,
                omega,
                z,
                theta,
            } => {
                let norm = (1.0 + gamma_re) / z.exp_moment(omega);
                if u == 0.0 {
                    // V | U=0 degenerates at 0, so Z = 0 and e^{omega Z} = 1
                    return Ok(norm);
                }
                let integrand = |y: f64| {
                    let v = clayton_conditional_unchecked(u, y, theta);
                    (omega * quantile(v)).exp()
                };
                let val = numeric::tanh_sinh(&integrand, 0.0, 1.0, 1e-10)?;
                Ok(norm * val)
            }
        }
    }

    /// Checks the pricing restriction: (i) W non-decreasing on a
    /// 10^4-point grid and (ii) K(0) > gamma.
    pub fn condition_check(&self) -> Result<ConditionReport> {
        k_function(self).map(|k| k.condition_report())
    }

    pub(crate) fn z_factor(&self) -> Option<(ZFactor, f64)> {
        match self.variant {
            RegimeVariant::ExpectedValue { .. } => None,
            RegimeVariant::ExponentialMarket { z, theta, .. } => Some((z, theta)),
        }
    }
}

fn validate_loadings(gamma: f64, gamma_re: f64) -> Result<()> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "primary loading gamma must be positive, got {gamma}"
        )));
    }
    if !(gamma_re >= 0.0) || !gamma_re.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "reinsurance loading gamma_re must be non-negative, got {gamma_re}"
        )));
    }
    Ok(())
}

/// Clayton conditional inverse: the value v with P(V <= v | U = u) = y.
/// Sampling y uniform yields V distributed as V | U = u. Errors outside
/// the open unit square.
pub fn clayton_conditional(u: f64, y: f64, theta: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) || !(y > 0.0 && y < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "clayton conditional needs u, y in (0,1), got ({u}, {y})"
        )));
    }
    if !(theta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "clayton theta must be positive, got {theta}"
        )));
    }
    Ok(clayton_conditional_unchecked(u, y, theta))
}

/// As `clayton_conditional` but tolerant of the y = 0 boundary (maps to 0).
/// Uses the overflow-free factored form u (t + u^theta)^(-1/theta) with
/// t = y^(-theta/(1+theta)) - 1.
pub(crate) fn clayton_conditional_unchecked(u: f64, y: f64, theta: f64) -> f64 {
    let t = y.powf(-theta / (1.0 + theta)) - 1.0;
    if t == 0.0 {
        return 1.0;
    }
    u * (t + u.powf(theta)).powf(-1.0 / theta)
}

/// Report from the pricing-restriction check.
#[derive(Debug, Clone, Copy)]
pub struct ConditionReport {
    pub w_nondecreasing: bool,
    pub k0: f64,
    pub gamma: f64,
    pub k0_exceeds_gamma: bool,
}

impl ConditionReport {
    pub fn holds(&self) -> bool {
        self.w_nondecreasing && self.k0_exceeds_gamma
    }
}

const W_GRID: usize = 4096; // W cached at W_GRID + 1 nodes
const K_GRID: usize = 2048; // K cached at K_GRID + 1 nodes (even W nodes)

#[derive(Debug, Clone)]
enum KRepr {
    /// K(u) = gamma_re (1 - u) exactly.
    Linear { gamma_re: f64 },
    /// Uniform caches with linear interpolation between nodes.
    Grid { w: Vec<f64>, k: Vec<f64> },
}

/// The margin curve K with its conditional price level W, the value K(0)
/// and the root delta of K(1 - delta) = gamma for the regime's own gamma.
/// Immutable and shareable across threads after construction.
#[derive(Debug, Clone)]
pub struct KFunction {
    repr: KRepr,
    gamma: f64,
    k0: f64,
    delta: Option<f64>,
}

/// Build the margin curve for a regime. The expected-value variant is
/// closed form; the exponential-market variant caches W on a uniform grid
/// and accumulates K by composite Simpson from u = 1 downward, then
/// cross-checks K(0) against E{M(Z)} - 1 (must agree within 1e-6).
pub fn k_function(regime: &PricingRegime) -> Result<KFunction> {
    let gamma = regime.gamma;
    match regime.variant {
        RegimeVariant::ExpectedValue { gamma_re } => {
            let mut k = KFunction {
                repr: KRepr::Linear { gamma_re },
                gamma,
                k0: gamma_re,
                delta: None,
            };
            k.delta = solve_delta(&k, gamma);
            Ok(k)
        }
        RegimeVariant::ExponentialMarket { z, .. } => {
            let table = z.quantile_table();
            let quantile = |v: f64| table.quantile(v);
            let mut w = Vec::with_capacity(W_GRID + 1);
            for i in 0..=W_GRID {
                w.push(regime.w_with_quantile(i as f64 / W_GRID as f64, &quantile)?);
            }
            // composite Simpson over pairs of W intervals, from the top down;
            // W has a power-law kink at u = 0 (slope like u^(1/shape - 1)),
            // so the bottom cells are integrated adaptively instead
            let low_cells = 16usize;
            let h = 1.0 / W_GRID as f64;
            let mut k = vec![0.0; K_GRID + 1];
            for j in (low_cells..K_GRID).rev() {
                let (w0, w1, w2) = (w[2 * j], w[2 * j + 1], w[2 * j + 2]);
                k[j] = k[j + 1] + h / 3.0 * ((w0 - 1.0) + 4.0 * (w1 - 1.0) + (w2 - 1.0));
            }
            for j in (0..low_cells).rev() {
                let (lo, hi) = (j as f64 / K_GRID as f64, (j + 1) as f64 / K_GRID as f64);
                let cell = numeric::tanh_sinh(
                    &|v: f64| regime.w_with_quantile(v, &quantile).map(|x| x - 1.0).unwrap_or(f64::NAN),
                    lo,
                    hi,
                    1e-12,
                )?;
                k[j] = k[j + 1] + cell;
            }
            let k0 = k[0];
            let independent = regime.market_factor_mean() - 1.0;
            if (k0 - independent).abs() > 1e-6 {
                return Err(Error::QuadratureFailure {
                    lo: 0.0,
                    hi: 1.0,
                    tol: 1e-6,
                });
            }
            let mut kf = KFunction {
                repr: KRepr::Grid { w, k },
                gamma,
                k0,
                delta: None,
            };
            kf.delta = solve_delta(&kf, gamma);
            Ok(kf)
        }
    }
}

impl KFunction {
    pub fn k(&self, u: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&u));
        match &self.repr {
            KRepr::Linear { gamma_re } => gamma_re * (1.0 - u),
            KRepr::Grid { k, .. } => interp_uniform(k, u),
        }
    }

    pub fn w(&self, u: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&u));
        match &self.repr {
            KRepr::Linear { gamma_re } => 1.0 + gamma_re,
            KRepr::Grid { w, .. } => interp_uniform(w, u),
        }
    }

    /// K'(u) = -(W(u) - 1).
    pub fn k_prime(&self, u: f64) -> f64 {
        -(self.w(u) - 1.0)
    }

    pub fn k0(&self) -> f64 {
        self.k0
    }

    /// Root of K(1 - delta) = gamma for the regime's own loading, if any.
    pub fn delta(&self) -> Option<f64> {
        self.delta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// The loading gamma_re when K is exactly linear, enabling closed-form
    /// margin integrals downstream.
    pub fn linear_gamma_re(&self) -> Option<f64> {
        match &self.repr {
            KRepr::Linear { gamma_re } => Some(*gamma_re),
            KRepr::Grid { .. } => None,
        }
    }

    /// Grid location of the maximum of K; the decreasing branch lies to
    /// its right.
    fn argmax(&self) -> f64 {
        match &self.repr {
            KRepr::Linear { .. } => 0.0,
            KRepr::Grid { k, .. } => {
                let mut best = 0;
                for (i, v) in k.iter().enumerate() {
                    if *v > k[best] {
                        best = i;
                    }
                }
                best as f64 / K_GRID as f64
            }
        }
    }

    pub fn condition_report(&self) -> ConditionReport {
        let n = 10_000;
        let mut nondecreasing = true;
        let mut prev = self.w(0.0);
        for i in 1..=n {
            let cur = self.w(i as f64 / n as f64);
            if cur < prev - 1e-12 {
                nondecreasing = false;
                break;
            }
            prev = cur;
        }
        ConditionReport {
            w_nondecreasing: nondecreasing,
            k0: self.k0,
            gamma: self.gamma,
            k0_exceeds_gamma: self.k0 > self.gamma,
        }
    }
}

fn interp_uniform(values: &[f64], u: f64) -> f64 {
    let n = values.len() - 1;
    let pos = u * n as f64;
    let i = (pos.floor() as usize).min(n - 1);
    let frac = pos - i as f64;
    values[i] * (1.0 - frac) + values[i + 1] * frac
}

/// Solve K(1 - delta) = gamma on the decreasing branch right of K's
/// maximum, to |K - gamma| below 1e-10. Returns `None` when K stays below
/// gamma on that branch: reinsurance is too expensive at every attachment
/// and the caller treats the book as fully retained.
pub fn solve_delta(k: &KFunction, gamma: f64) -> Option<f64> {
    assert!(gamma > 0.0, "gamma must be positive");
    if let KRepr::Linear { gamma_re } = k.repr {
        if gamma > gamma_re {
            return None;
        }
        return Some(gamma / gamma_re);
    }
    let lo = k.argmax();
    if k.k(lo) < gamma {
        return None;
    }
    if k.k(lo) == gamma {
        return Some(1.0 - lo);
    }
    // K(1) = 0 < gamma, so a sign change is bracketed on [lo, 1]
    let root = numeric::bisect(|u| k.k(u) - gamma, lo, 1.0, 1e-13);
    Some(1.0 - root)
}

/// One grid point of the kernel-CDF Monte Carlo margin estimate.
#[derive(Debug, Clone, Copy)]
pub struct KfPoint {
    pub x: f64,
    /// Kernel-smoothed distribution estimate F*(x).
    pub f_star: f64,
    /// Estimated margin level K*{F*(x)}.
    pub k_star: f64,
}

/// Monte Carlo estimate of K{F(x)} on an x-grid.
#[derive(Debug, Clone)]
pub struct CopulaMcEstimate {
    pub points: Vec<KfPoint>,
    pub m: usize,
    pub bandwidth_factor: f64,
    pub seed: u64,
}

/// Estimate K{F(x)} = E{(M(Z) - 1) I(U > F(x))} by simulation:
/// draw losses X*, smooth them into F*(x) = mean Phi((x - X_i)/(s* h)),
/// set U_i = F*(X_i), draw V_i from the Clayton conditional, map
/// Z_i = G^{-1}(V_i) and average (M(Z_i) - 1) over U_i > F*(x).
///
/// `sampler` draws one aggregate loss per call; the regime must carry a
/// market-factor driver (use omega = 0 for a constant factor).
pub fn kf_monte_carlo<F>(
    mut sampler: F,
    regime: &PricingRegime,
    m: usize,
    bandwidth_factor: f64,
    seed: u64,
    x_grid: &[f64],
) -> Result<CopulaMcEstimate>
where
    F: FnMut(&mut ChaCha8Rng) -> f64,
{
    if m < 1000 {
        return Err(Error::InsufficientPoints { need: 1000, have: m });
    }
    let (z, theta) = regime.z_factor().ok_or_else(|| {
        Error::InvalidParameter(
            "kernel-CDF estimation needs a market-factor driver; use omega = 0 for a constant factor"
                .into(),
        )
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs: Vec<f64> = (0..m).map(|_| sampler(&mut rng)).collect();
    xs.sort_unstable_by(f64::total_cmp);

    let mean = xs.iter().sum::<f64>() / m as f64;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m as f64 - 1.0);
    let bandwidth = bandwidth_factor * var.sqrt();

    let smoothed = SmoothedCdf {
        points: xs.clone(),
        bandwidth,
    };
    // U_i = F*(X_i) is increasing in X_i, so the U array stays sorted
    let u: Vec<f64> = xs.iter().map(|&x| smoothed.eval(x)).collect();

    // margin-factor excess (M(Z_i) - 1), suffix-summed in U order
    let table = z.quantile_table();
    let mut suffix = vec![0.0; m + 1];
    for i in (0..m).rev() {
        let y: f64 = rng.random();
        let v = clayton_conditional_unchecked(u[i], y, theta);
        let zi = table.quantile(v);
        suffix[i] = suffix[i + 1] + (regime.market_factor(zi) - 1.0);
    }
    // the uniforms above were consumed in reverse index order; that is a
    // fixed deterministic order for a given seed
    let points = x_grid
        .iter()
        .map(|&x| {
            let fx = smoothed.eval(x);
            let idx = u.partition_point(|ui| *ui <= fx);
            KfPoint {
                x,
                f_star: fx,
                k_star: suffix[idx] / m as f64,
            }
        })
        .collect();
    Ok(CopulaMcEstimate {
        points,
        m,
        bandwidth_factor,
        seed,
    })
}

/// Gaussian-kernel distribution estimate over a sorted sample.
#[derive(Debug, Clone)]
pub struct SmoothedCdf {
    points: Vec<f64>,
    bandwidth: f64,
}

impl SmoothedCdf {
    /// `bandwidth_factor` scales the sample standard deviation.
    pub fn new(sorted_sample: &[f64], bandwidth_factor: f64) -> Self {
        debug_assert!(sorted_sample.windows(2).all(|w| w[0] <= w[1]));
        let m = sorted_sample.len() as f64;
        let mean = sorted_sample.iter().sum::<f64>() / m;
        let var = sorted_sample.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0);
        Self {
            points: sorted_sample.to_vec(),
            bandwidth: bandwidth_factor * var.sqrt(),
        }
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// F*(x) = mean of Phi((x - X_i) / bandwidth). Kernel tails beyond
    /// eight bandwidths contribute 0 or 1 to machine precision and are
    /// counted, not evaluated.
    pub fn eval(&self, x: f64) -> f64 {
        let m = self.points.len();
        if self.bandwidth == 0.0 {
            return self.points.partition_point(|v| *v <= x) as f64 / m as f64;
        }
        let lo = self.points.partition_point(|v| *v <= x - 8.0 * self.bandwidth);
        let hi = self.points.partition_point(|v| *v < x + 8.0 * self.bandwidth);
        let mut total = lo as f64;
        for i in lo..hi {
            total += numeric::std_normal_cdf((x - self.points[i]) / self.bandwidth);
        }
        total / m as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::severity::{simulate_portfolio, PortfolioSpec, SeverityFamily, SeverityModel};

    fn default_market() -> PricingRegime {
        PricingRegime::exponential_market(0.1, 0.2, 0.1, 1.0, 0.3, 10.0).unwrap()
    }

    #[test]
    fn expected_value_w_is_constant() {
        let regime = PricingRegime::expected_value(0.1, 0.2).unwrap();
        for u in [0.0, 0.3, 1.0] {
            assert_eq!(regime.w(u).unwrap(), 1.2);
        }
    }

    #[test]
    fn zero_omega_market_w_is_constant() {
        let regime = PricingRegime::exponential_market(0.1, 0.2, 0.0, 1.0, 0.3, 10.0).unwrap();
        for u in [0.0, 0.25, 0.9, 1.0] {
            assert!((regime.w(u).unwrap() - 1.2).abs() < 1e-9, "u={u}");
        }
    }

    #[test]
    fn z_factor_matches_moments() {
        let z = ZFactor { mean: 1.0, sd: 0.3 };
        assert!((z.shape() - 1.0 / 0.09).abs() < 1e-12);
        assert!((z.scale() - 0.09).abs() < 1e-12);
        // exp moment against quadrature of e^{wz} g(z)
        let w = 0.1;
        let quad = numeric::adaptive_simpson(
            &|t: f64| (w * t).exp() * z.pdf(t),
            0.0,
            z.quantile(1.0 - 1e-14),
            1e-10,
        )
        .unwrap();
        assert!((z.exp_moment(w) - quad).abs() < 1e-8);
    }

    #[test]
    fn quantile_table_tracks_exact_quantile() {
        let z = ZFactor { mean: 1.0, sd: 0.3 };
        let table = z.quantile_table();
        for i in 1..2000 {
            let v = i as f64 / 2000.0;
            let exact = z.quantile(v);
            assert!(
                (table.quantile(v) - exact).abs() < 1e-8 * (1.0 + exact),
                "v={v}"
            );
        }
        assert_eq!(table.quantile(0.0), 0.0);
        for v in [1e-20, 1.0 - 1e-18] {
            assert!(table.quantile(v).is_finite());
        }
    }

    #[test]
    fn omega_beyond_exponential_moment_rejected() {
        let err =
            PricingRegime::exponential_market(0.1, 0.2, 12.0, 1.0, 0.3, 10.0).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
    }

    #[test]
    fn conditional_w_matches_sampling_oracle() {
        // independent route: sample V | U = u through the conditional
        // inverse and average M(G^{-1}(V))
        let regime = default_market();
        let (z, theta) = regime.z_factor().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = 0.9;
        let n = 200_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let y: f64 = rng.random();
            let v = clayton_conditional_unchecked(u, y, theta);
            let m = regime.market_factor(z.quantile(v));
            sum += m;
            sumsq += m * m;
        }
        let mc = sum / n as f64;
        let se = ((sumsq / n as f64 - mc * mc) / n as f64).sqrt();
        let w = regime.w(u).unwrap();
        assert!((w - mc).abs() < 3.0 * se, "w={w} mc={mc} se={se}");
    }

    #[test]
    fn expected_value_k_closed_form() {
        let regime = PricingRegime::expected_value(0.1, 0.2).unwrap();
        let k = k_function(&regime).unwrap();
        assert_eq!(k.k(0.0), 0.2);
        assert_eq!(k.k(1.0), 0.0);
        assert!((k.k(0.5) - 0.1).abs() < 1e-15);
        assert_eq!(k.k0(), 0.2);
    }

    #[test]
    fn market_k_ends_at_zero_and_matches_mean_identity() {
        let k = k_function(&default_market()).unwrap();
        assert_eq!(k.k(1.0), 0.0);
        // K(0) equals E{M(Z)} - 1 = gamma_re within the build tolerance
        assert!((k.k0() - 0.2).abs() < 1e-6, "k0={}", k.k0());
        // non-negative under the pricing restriction
        for i in 0..=1000 {
            assert!(k.k(i as f64 / 1000.0) >= -1e-9);
        }
    }

    #[test]
    fn k_prime_matches_finite_differences() {
        // fourth-order central differences at cache-aligned points, so the
        // quotient sees node values rather than interpolation error
        for regime in [PricingRegime::expected_value(0.1, 0.2).unwrap(), default_market()] {
            let k = k_function(&regime).unwrap();
            let h = 1.0 / 2048.0;
            let mut worst = 0.0f64;
            for i in 1..=99 {
                let u = 20.0 * i as f64 * h;
                let fd = (-k.k(u + 2.0 * h) + 8.0 * k.k(u + h) - 8.0 * k.k(u - h)
                    + k.k(u - 2.0 * h))
                    / (12.0 * h);
                worst = worst.max((fd - k.k_prime(u)).abs());
            }
            assert!(worst < 1e-5, "max |fd - k'| = {worst}");
        }
    }

    #[test]
    fn delta_for_expected_value_loading() {
        let regime = PricingRegime::expected_value(0.1, 0.2).unwrap();
        let k = k_function(&regime).unwrap();
        let delta = k.delta().unwrap();
        assert!((delta - 0.5).abs() < 1e-10);
        assert!((k.k(1.0 - delta) - 0.1).abs() < 1e-10);
        // loading equal to gamma pushes the root to the bottom percentile
        let tight = k_function(&PricingRegime::expected_value(0.1, 0.1).unwrap()).unwrap();
        assert!((tight.delta().unwrap() - 1.0).abs() < 1e-12);
        // reinsurance dearer than any attachment can bear
        let none = k_function(&PricingRegime::expected_value(0.3, 0.2).unwrap()).unwrap();
        assert_eq!(none.delta(), None);
    }

    #[test]
    fn delta_matches_dense_grid_scan() {
        let k = k_function(&default_market()).unwrap();
        let delta = k.delta().unwrap();
        // brute scan at 1e-6 resolution on the decreasing branch
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=1_000_000 {
            let u = i as f64 * 1e-6;
            let gap = (k.k(u) - 0.1).abs();
            if gap < best.0 {
                best = (gap, u);
            }
        }
        assert!(
            ((1.0 - delta) - best.1).abs() < 2e-6,
            "root {} scan {}",
            1.0 - delta,
            best.1
        );
    }

    #[test]
    fn condition_check_cases() {
        let ok = PricingRegime::expected_value(0.1, 0.2).unwrap().condition_check().unwrap();
        assert!(ok.w_nondecreasing && ok.k0_exceeds_gamma && ok.holds());

        let thin = PricingRegime::expected_value(0.1, 0.05).unwrap().condition_check().unwrap();
        assert!(thin.w_nondecreasing && !thin.k0_exceeds_gamma);

        // E{M} = 1 (no net loading): K(0) = 0 cannot exceed gamma
        let buhlmann = PricingRegime::exponential_market(0.1, 0.0, 0.1, 1.0, 0.3, 10.0)
            .unwrap()
            .condition_check()
            .unwrap();
        assert!(!buhlmann.k0_exceeds_gamma);
        assert!(buhlmann.w_nondecreasing);
    }

    #[test]
    fn clayton_independence_limit() {
        for y in [0.1, 0.5, 0.9] {
            let v = clayton_conditional(0.3, y, 1e-9).unwrap();
            assert!((v - y).abs() < 1e-6, "y={y} v={v}");
        }
    }

    #[test]
    fn clayton_stays_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let u: f64 = rng.random();
            let y: f64 = rng.random();
            if u == 0.0 || y == 0.0 {
                continue;
            }
            for theta in [0.5, 1.0, 5.0, 10.0] {
                let v = clayton_conditional(u, y, theta).unwrap();
                assert!(v > 0.0 && v < 1.0, "u={u} y={y} theta={theta} v={v}");
            }
        }
        assert!(clayton_conditional(0.0, 0.5, 1.0).is_err());
        assert!(clayton_conditional(0.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn clayton_kendall_tau_identity() {
        // tau = theta / (theta + 2); inversion count over sampled pairs
        let theta = 10.0;
        let n = 200_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let y: f64 = rng.random();
                (u, clayton_conditional_unchecked(u.max(1e-300), y.max(1e-300), theta))
            })
            .collect();
        pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let mut vs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let inversions = count_inversions(&mut vs);
        let tau = 1.0 - 4.0 * inversions as f64 / (n as f64 * (n as f64 - 1.0));
        assert!((tau - theta / (theta + 2.0)).abs() < 0.004, "tau={tau}");
    }

    fn count_inversions(v: &mut [f64]) -> u64 {
        let n = v.len();
        if n <= 1 {
            return 0;
        }
        let mid = n / 2;
        let (left, right) = v.split_at_mut(mid);
        let mut inv = count_inversions(left) + count_inversions(right);
        let mut merged = Vec::with_capacity(n);
        let (mut i, mut j) = (0, 0);
        while i < left.len() && j < right.len() {
            if left[i] <= right[j] {
                merged.push(left[i]);
                i += 1;
            } else {
                inv += (left.len() - i) as u64;
                merged.push(right[j]);
                j += 1;
            }
        }
        merged.extend_from_slice(&left[i..]);
        merged.extend_from_slice(&right[j..]);
        v.copy_from_slice(&merged);
        inv
    }

    fn gamma_loss_sampler() -> (PortfolioSpec, impl FnMut(&mut ChaCha8Rng) -> f64) {
        let sev = SeverityModel::calibrate(SeverityFamily::Gamma, 10.0, 15.0).unwrap();
        let spec = PortfolioSpec::new(1000, 0.05, sev).unwrap();
        let loss = simulate_portfolio(&spec, 65_536, 13);
        let sample: Vec<f64> = loss.sample().to_vec();
        let mut idx = 0usize;
        (spec, move |_rng: &mut ChaCha8Rng| {
            idx = (idx + 1) % sample.len();
            sample[idx]
        })
    }

    #[test]
    fn kf_estimator_constant_factor_tracks_closed_form() {
        let regime = PricingRegime::exponential_market(0.1, 0.2, 0.0, 1.0, 0.3, 10.0).unwrap();
        let (_, sampler) = gamma_loss_sampler();
        let m = 20_000;
        let grid: Vec<f64> = (0..=60).map(|i| 200.0 + 12.0 * i as f64).collect();
        let est = kf_monte_carlo(sampler, &regime, m, 0.2, 3, &grid).unwrap();
        let sup = est
            .points
            .iter()
            .map(|p| (p.k_star - 0.2 * (1.0 - p.f_star)).abs())
            .fold(0.0f64, f64::max);
        assert!(sup < 4.0 / (m as f64).sqrt(), "sup gap {sup}");
    }

    #[test]
    fn kf_estimator_unit_factor_vanishes() {
        let regime = PricingRegime::exponential_market(0.1, 0.0, 0.0, 1.0, 0.3, 10.0).unwrap();
        let (_, sampler) = gamma_loss_sampler();
        let grid = [300.0, 500.0, 800.0];
        let est = kf_monte_carlo(sampler, &regime, 5_000, 0.2, 4, &grid).unwrap();
        for p in est.points {
            assert_eq!(p.k_star, 0.0);
        }
    }

    #[test]
    fn kf_estimator_at_origin_recovers_mean_excess() {
        let regime = default_market();
        let (_, sampler) = gamma_loss_sampler();
        let m = 20_000;
        let est = kf_monte_carlo(sampler, &regime, m, 0.2, 9, &[0.0]).unwrap();
        let p = est.points[0];
        assert!(p.f_star < 1e-12);
        // K*(0) estimates E{M} - 1 = 0.2; se of (M - 1) is below 0.05
        assert!((p.k_star - 0.2).abs() < 3.0 * 0.05 / (m as f64).sqrt(), "{}", p.k_star);
    }

    #[test]
    fn kf_estimator_needs_driver_and_sample_size() {
        let ev = PricingRegime::expected_value(0.1, 0.2).unwrap();
        let (_, sampler) = gamma_loss_sampler();
        assert!(kf_monte_carlo(sampler, &ev, 5_000, 0.2, 1, &[0.0]).is_err());
        let (_, sampler) = gamma_loss_sampler();
        assert!(matches!(
            kf_monte_carlo(sampler, &default_market(), 100, 0.2, 1, &[0.0]),
            Err(Error::InsufficientPoints { .. })
        ));
    }

    #[test]
    fn smoothed_cdf_is_close_to_empirical() {
        let (spec, _) = gamma_loss_sampler();
        let loss = simulate_portfolio(&spec, 20_000, 8);
        let smoothed = SmoothedCdf::new(loss.sample(), 0.2);
        for x in [300.0, 450.0, 600.0, 900.0] {
            assert!((smoothed.eval(x) - loss.cdf(x)).abs() < 0.01);
        }
        assert!(smoothed.eval(f64::NEG_INFINITY.max(-1e12)) == 0.0);
    }
}
