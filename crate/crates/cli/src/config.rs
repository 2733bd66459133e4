//! Flat sectioned key=value configuration: parsing, strict validation and
//! conversion into the core model types. Unknown sections or keys are
//! rejected so a typo cannot silently fall back to a default.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use cedent_core::pricing::PricingRegime;
use cedent_core::severity::{PortfolioSpec, SeverityFamily, SeverityModel};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdfChoice {
    Empirical,
    Kernel,
}

/// Portfolio block: book size, per-policy claim frequency and severity law.
#[derive(Debug, Clone)]
pub struct PortfolioConfig {
    pub policy_count: u64,
    pub claim_frequency: f64,
    pub family: SeverityFamily,
    pub mean_per_event: f64,
    pub sd_per_event: f64,
}

/// Regime block: premium principle and the criterion levels.
#[derive(Debug, Clone)]
pub struct RegimeConfig {
    pub variant: RegimeKind,
    pub gamma: f64,
    pub gamma_re: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub omega: f64,
    pub theta: f64,
    pub z_mean: f64,
    pub z_sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeKind {
    ExpectedValue,
    ExponentialMarket,
}

/// Run block: sample sizes, seed, output directory and command grids.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub m: usize,
    pub seed: u64,
    pub out_dir: Option<String>,
    pub lambda: f64,
    pub psi_points: usize,
    pub jmu_grid: Vec<f64>,
    pub kf_points: usize,
    pub kf_mc_m: usize,
    pub cdf: CdfChoice,
    pub kernel_h: f64,
    pub percentiles: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub portfolio: PortfolioConfig,
    pub regime: RegimeConfig,
    pub run: RunConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            portfolio: PortfolioConfig {
                policy_count: 1000,
                claim_frequency: 0.05,
                family: SeverityFamily::Gamma,
                mean_per_event: 10.0,
                sd_per_event: 15.0,
            },
            regime: RegimeConfig {
                variant: RegimeKind::ExpectedValue,
                gamma: 0.1,
                gamma_re: 0.2,
                beta: 0.0,
                epsilon: 0.01,
                omega: 0.1,
                theta: 10.0,
                z_mean: 1.0,
                z_sd: 0.3,
            },
            run: RunConfig {
                m: 100_000,
                seed: 42,
                out_dir: None,
                lambda: 0.1,
                psi_points: 1024,
                jmu_grid: vec![5.0, 50.0, 500.0, 5000.0],
                kf_points: 1024,
                kf_mc_m: 10_000,
                cdf: CdfChoice::Empirical,
                kernel_h: 0.2,
                percentiles: vec![0.5, 0.75, 0.9, 0.95, 0.99, 0.995, 0.999],
            },
        }
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn parse_num<T: std::str::FromStr>(section: &str, key: &str, raw: &str) -> Result<T, CliError> {
    raw.parse()
        .map_err(|_| bad(format!("[{section}] {key}: cannot parse '{raw}'")))
}

fn parse_list(section: &str, key: &str, raw: &str) -> Result<Vec<f64>, CliError> {
    raw.split(',')
        .map(|s| parse_num::<f64>(section, key, s.trim()))
        .collect()
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_str_strict(&text)
    }

    /// Parse INI-style text: `[section]` headers, `key = value` lines,
    /// `#` or `;` comments. Unknown sections/keys are errors.
    pub fn from_str_strict(text: &str) -> Result<Self, CliError> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let name = name.trim().to_lowercase();
                if !["portfolio", "regime", "run"].contains(&name.as_str()) {
                    return Err(bad(format!("line {}: unknown section [{name}]", lineno + 1)));
                }
                sections.entry(name.clone()).or_default();
                current = Some(name);
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(bad(format!("line {}: expected key = value", lineno + 1)));
            };
            let Some(section) = current.as_ref() else {
                return Err(bad(format!("line {}: key outside any section", lineno + 1)));
            };
            let key = key.trim().to_lowercase();
            let value = value.trim().to_string();
            if sections
                .get_mut(section)
                .unwrap()
                .insert(key.clone(), value)
                .is_some()
            {
                return Err(bad(format!("line {}: duplicate key {key}", lineno + 1)));
            }
        }

        let mut cfg = ExperimentConfig::default();
        if let Some(map) = sections.get("portfolio") {
            for (key, value) in map {
                let p = &mut cfg.portfolio;
                match key.as_str() {
                    "policy_count" => p.policy_count = parse_num("portfolio", key, value)?,
                    "claim_frequency" => p.claim_frequency = parse_num("portfolio", key, value)?,
                    "family" => {
                        p.family = match value.to_lowercase().as_str() {
                            "gamma" => SeverityFamily::Gamma,
                            "lognormal" => SeverityFamily::Lognormal,
                            "pareto" => SeverityFamily::Pareto,
                            other => {
                                return Err(bad(format!(
                                    "[portfolio] family: unknown family '{other}'"
                                )))
                            }
                        }
                    }
                    "mean_per_event" => p.mean_per_event = parse_num("portfolio", key, value)?,
                    "sd_per_event" => p.sd_per_event = parse_num("portfolio", key, value)?,
                    other => return Err(bad(format!("[portfolio] unknown key '{other}'"))),
                }
            }
        }
        let mut copula_keys_seen = false;
        if let Some(map) = sections.get("regime") {
            for (key, value) in map {
                let r = &mut cfg.regime;
                match key.as_str() {
                    "variant" => {
                        r.variant = match value.to_lowercase().as_str() {
                            "expected_value" => RegimeKind::ExpectedValue,
                            "exponential_market" => RegimeKind::ExponentialMarket,
                            other => {
                                return Err(bad(format!(
                                    "[regime] variant: unknown variant '{other}'"
                                )))
                            }
                        }
                    }
                    "gamma" => r.gamma = parse_num("regime", key, value)?,
                    "gamma_re" => r.gamma_re = parse_num("regime", key, value)?,
                    "beta" => r.beta = parse_num("regime", key, value)?,
                    "epsilon" => r.epsilon = parse_num("regime", key, value)?,
                    "omega" => {
                        copula_keys_seen = true;
                        r.omega = parse_num("regime", key, value)?;
                    }
                    "theta" => {
                        copula_keys_seen = true;
                        r.theta = parse_num("regime", key, value)?;
                    }
                    "z_mean" => {
                        copula_keys_seen = true;
                        r.z_mean = parse_num("regime", key, value)?;
                    }
                    "z_sd" => {
                        copula_keys_seen = true;
                        r.z_sd = parse_num("regime", key, value)?;
                    }
                    other => return Err(bad(format!("[regime] unknown key '{other}'"))),
                }
            }
        }
        if copula_keys_seen && cfg.regime.variant == RegimeKind::ExpectedValue {
            return Err(bad(
                "[regime] omega/theta/z_mean/z_sd apply only to variant = exponential_market",
            ));
        }
        if let Some(map) = sections.get("run") {
            for (key, value) in map {
                let r = &mut cfg.run;
                match key.as_str() {
                    "m" => r.m = parse_num("run", key, value)?,
                    "seed" => r.seed = parse_num("run", key, value)?,
                    "out_dir" => r.out_dir = Some(value.clone()),
                    "lambda" => r.lambda = parse_num("run", key, value)?,
                    "psi_points" => r.psi_points = parse_num("run", key, value)?,
                    "jmu_grid" => r.jmu_grid = parse_list("run", key, value)?,
                    "kf_points" => r.kf_points = parse_num("run", key, value)?,
                    "kf_mc_m" => r.kf_mc_m = parse_num("run", key, value)?,
                    "cdf" => {
                        r.cdf = match value.to_lowercase().as_str() {
                            "empirical" => CdfChoice::Empirical,
                            "kernel" => CdfChoice::Kernel,
                            other => {
                                return Err(bad(format!("[run] cdf: unknown choice '{other}'")))
                            }
                        }
                    }
                    "kernel_h" => r.kernel_h = parse_num("run", key, value)?,
                    "percentiles" => r.percentiles = parse_list("run", key, value)?,
                    other => return Err(bad(format!("[run] unknown key '{other}'"))),
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Field validation beyond what the core constructors enforce.
    pub fn validate(&self) -> Result<(), CliError> {
        self.severity().map_err(|e| bad(e.to_string()))?;
        self.portfolio_spec(None).map_err(|e| bad(e.to_string()))?;
        self.pricing_regime().map_err(|e| bad(e.to_string()))?;
        let r = &self.regime;
        if !(r.epsilon > 0.0 && r.epsilon < 1.0) {
            return Err(bad(format!("[regime] epsilon must be in (0,1), got {}", r.epsilon)));
        }
        if !(r.beta >= 0.0) {
            return Err(bad(format!("[regime] beta must be non-negative, got {}", r.beta)));
        }
        let run = &self.run;
        if run.m < 2 {
            return Err(bad(format!("[run] m must be at least 2, got {}", run.m)));
        }
        if !(run.lambda >= 0.0) {
            return Err(bad(format!("[run] lambda must be non-negative, got {}", run.lambda)));
        }
        if run.psi_points < 2 || run.kf_points < 2 {
            return Err(bad("[run] psi_points and kf_points must be at least 2"));
        }
        if run.kf_mc_m < 1000 {
            return Err(bad(format!(
                "[run] kf_mc_m must be at least 1000, got {}",
                run.kf_mc_m
            )));
        }
        if !(run.kernel_h > 0.0) {
            return Err(bad(format!("[run] kernel_h must be positive, got {}", run.kernel_h)));
        }
        if run.jmu_grid.is_empty() || run.jmu_grid.iter().any(|&j| !(j > 0.0)) {
            return Err(bad("[run] jmu_grid must list positive values"));
        }
        if run
            .percentiles
            .iter()
            .any(|&p| !(p > 0.0 && p < 1.0))
        {
            return Err(bad("[run] percentiles must lie in (0,1)"));
        }
        Ok(())
    }

    pub fn severity(&self) -> cedent_core::Result<SeverityModel> {
        SeverityModel::calibrate(
            self.portfolio.family,
            self.portfolio.mean_per_event,
            self.portfolio.sd_per_event,
        )
    }

    /// The configured book; with `jmu` given, the policy count is rescaled
    /// so that the expected claim count matches it at the configured
    /// per-policy frequency.
    pub fn portfolio_spec(&self, jmu: Option<f64>) -> cedent_core::Result<PortfolioSpec> {
        let policy_count = match jmu {
            None => self.portfolio.policy_count,
            Some(target) => (target / self.portfolio.claim_frequency).round() as u64,
        };
        PortfolioSpec::new(policy_count, self.portfolio.claim_frequency, self.severity()?)
    }

    pub fn pricing_regime(&self) -> cedent_core::Result<PricingRegime> {
        let r = &self.regime;
        match r.variant {
            RegimeKind::ExpectedValue => PricingRegime::expected_value(r.gamma, r.gamma_re),
            RegimeKind::ExponentialMarket => PricingRegime::exponential_market(
                r.gamma, r.gamma_re, r.omega, r.z_mean, r.z_sd, r.theta,
            ),
        }
    }

    /// Canonical dump of every resolved field; hashed into output headers
    /// so identical effective configurations produce identical bytes.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let p = &self.portfolio;
        let _ = write!(
            s,
            "portfolio:policy_count={};claim_frequency={};family={};mean_per_event={};sd_per_event={};",
            p.policy_count,
            p.claim_frequency,
            p.family.name(),
            p.mean_per_event,
            p.sd_per_event
        );
        let r = &self.regime;
        let variant = match r.variant {
            RegimeKind::ExpectedValue => "expected_value",
            RegimeKind::ExponentialMarket => "exponential_market",
        };
        let _ = write!(
            s,
            "regime:variant={variant};gamma={};gamma_re={};beta={};epsilon={};",
            r.gamma, r.gamma_re, r.beta, r.epsilon
        );
        if r.variant == RegimeKind::ExponentialMarket {
            let _ = write!(s, "omega={};theta={};z_mean={};z_sd={};", r.omega, r.theta, r.z_mean, r.z_sd);
        }
        let run = &self.run;
        let fmt_list = |xs: &[f64]| {
            xs.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let cdf = match run.cdf {
            CdfChoice::Empirical => "empirical",
            CdfChoice::Kernel => "kernel",
        };
        let _ = write!(
            s,
            "run:m={};seed={};lambda={};psi_points={};jmu_grid={};kf_points={};kf_mc_m={};cdf={cdf};kernel_h={};percentiles={}",
            run.m,
            run.seed,
            run.lambda,
            run.psi_points,
            fmt_list(&run.jmu_grid),
            run.kf_points,
            run.kf_mc_m,
            run.kernel_h,
            fmt_list(&run.percentiles)
        );
        s
    }

    pub fn hash(&self) -> String {
        format!("{:016x}", fnv1a64(self.canonical().as_bytes()))
    }
}

/// FNV-1a 64-bit hash; stable across runs and platforms.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Deterministic per-cell seed for (family, jmu) cells derived from the
/// master seed.
pub fn cell_seed(master: u64, family: SeverityFamily, jmu: f64) -> u64 {
    master ^ fnv1a64(format!("{}:{}", family.name(), jmu).as_bytes())
}
