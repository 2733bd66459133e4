//! The five experiment commands. Each returns its structured result and
//! the list of files written, so tests can assert on outcomes without
//! re-parsing the emitted CSV/JSON.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use cedent_core::contracts::{layers_from_psi_with, psi_lambda_with, LayerProgram, LossCdf};
use cedent_core::optimizer::{
    decay_slope, degradation_report, ApproximationKind, DegradationReport,
};
use cedent_core::pricing::{k_function, kf_monte_carlo, SmoothedCdf};
use cedent_core::severity::{
    sample_aggregate_loss, simulate_portfolio, SeverityFamily,
};

use crate::config::{cell_seed, CdfChoice, ExperimentConfig, RegimeKind};
use crate::output::{write_csv, write_json, OutputMeta, VERSION};
use crate::CliError;

fn meta(cfg: &ExperimentConfig) -> OutputMeta {
    OutputMeta {
        seed: cfg.run.seed,
        config_hash: cfg.hash(),
    }
}

// ---------------------------------------------------------------- psi ---

#[derive(Debug, Clone, Serialize)]
pub struct LayerSpan {
    pub kind: &'static str,
    pub from: f64,
    pub to: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PsiReport {
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub lambda: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub cdf: &'static str,
    pub x_eps: f64,
    pub psi_at_zero: f64,
    pub layer_count: usize,
    pub layers: Vec<LayerSpan>,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

#[derive(Debug)]
pub struct PsiOutcome {
    pub rows: Vec<(f64, f64)>,
    pub program: LayerProgram,
    pub report: PsiReport,
    pub files: Vec<PathBuf>,
}

/// Tabulate the marginal coverage gain psi over [0, ~1.02 x_eps] and
/// report the implied layer program.
pub fn run_psi(cfg: &ExperimentConfig, out_dir: &Path) -> Result<PsiOutcome, CliError> {
    let spec = cfg.portfolio_spec(None)?;
    let regime = cfg.pricing_regime()?;
    let k = k_function(&regime)?;
    let loss = simulate_portfolio(&spec, cfg.run.m, cfg.run.seed);
    let x_eps = loss.percentile(1.0 - cfg.regime.epsilon);

    let smoothed;
    let (cdf, cdf_name) = match cfg.run.cdf {
        CdfChoice::Empirical => (LossCdf::Empirical(&loss), "empirical"),
        CdfChoice::Kernel => {
            smoothed = SmoothedCdf::new(loss.sample(), cfg.run.kernel_h);
            (LossCdf::Smoothed(&smoothed), "kernel")
        }
    };
    let (beta, lambda) = (cfg.regime.beta, cfg.run.lambda);

    let n = cfg.run.psi_points;
    let rows: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let x = 1.02 * x_eps * i as f64 / (n - 1) as f64;
            (x, psi_lambda_with(&k, &cdf, x_eps, x, beta, lambda))
        })
        .collect();

    let program = layers_from_psi_with(&k, &cdf, x_eps, beta, lambda)?;
    let mut layers = Vec::new();
    if program.b2() > 0.0 {
        layers.push(LayerSpan {
            kind: "ground",
            from: 0.0,
            to: program.b2(),
        });
    }
    if program.a2() > program.a1() {
        layers.push(LayerSpan {
            kind: "upper",
            from: program.a1(),
            to: program.a2(),
        });
    }
    let m = meta(cfg);
    let report = PsiReport {
        version: VERSION.to_string(),
        seed: m.seed,
        config_hash: m.config_hash.clone(),
        lambda,
        beta,
        epsilon: cfg.regime.epsilon,
        cdf: cdf_name,
        x_eps,
        psi_at_zero: psi_lambda_with(&k, &cdf, x_eps, 0.0, beta, lambda),
        layer_count: layers.len(),
        layers,
        b2: program.b2(),
        a1: program.a1(),
        a2: program.a2(),
    };

    let csv = write_csv(
        out_dir,
        "psi.csv",
        &m,
        "x,psi",
        rows.iter().map(|(x, p)| format!("{x},{p}")),
    )?;
    let json = write_json(out_dir, "psi_layers.json", &report)?;
    Ok(PsiOutcome {
        rows,
        program,
        report,
        files: vec![csv, json],
    })
}

// ------------------------------------------------------------- table51 ---

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkRow {
    pub family: &'static str,
    pub jmu: f64,
    pub c_optimal: f64,
    pub d_exact: f64,
    pub d_gaussian: f64,
    pub d_np: f64,
}

#[derive(Debug)]
pub struct TableOutcome {
    pub rows: Vec<BenchmarkRow>,
    pub files: Vec<PathBuf>,
}

const TABLE_FAMILIES: [SeverityFamily; 3] = [
    SeverityFamily::Gamma,
    SeverityFamily::Lognormal,
    SeverityFamily::Pareto,
];

fn run_cell(
    cfg: &ExperimentConfig,
    family: SeverityFamily,
    jmu: f64,
) -> Result<DegradationReport, CliError> {
    let mut cell_cfg = cfg.clone();
    cell_cfg.portfolio.family = family;
    let spec = cell_cfg.portfolio_spec(Some(jmu))?;
    let regime = cell_cfg.pricing_regime()?;
    let seed = cell_seed(cfg.run.seed, family, jmu);
    degradation_report(
        &spec,
        &regime,
        cfg.run.m,
        seed,
        cfg.regime.epsilon,
        cfg.regime.beta,
    )
    .map_err(|e| {
        let wrapped = CliError::from(e);
        match wrapped {
            CliError::Infeasible(msg) => {
                CliError::Infeasible(format!("cell {}/{jmu}: {msg}", family.name()))
            }
            other => other,
        }
    })
}

fn report_to_row(family: SeverityFamily, report: &DegradationReport) -> BenchmarkRow {
    BenchmarkRow {
        family: family.name(),
        jmu: report.jmu,
        c_optimal: report.criterion_optimal,
        d_exact: report.outcome(ApproximationKind::ExactPercentile).degradation,
        d_gaussian: report.outcome(ApproximationKind::Gaussian).degradation,
        d_np: report.outcome(ApproximationKind::NormalPower).degradation,
    }
}

/// Degradation benchmark over every severity family and the configured
/// expected-claim grid; one shared sample per cell, cell seeds derived
/// from the master seed. Requires the expected-value regime.
pub fn run_table51(cfg: &ExperimentConfig, out_dir: &Path) -> Result<TableOutcome, CliError> {
    if cfg.regime.variant != RegimeKind::ExpectedValue {
        return Err(CliError::Config(
            "the benchmark table requires [regime] variant = expected_value".into(),
        ));
    }
    let cells: Vec<(SeverityFamily, f64)> = TABLE_FAMILIES
        .iter()
        .flat_map(|&f| cfg.run.jmu_grid.iter().map(move |&j| (f, j)))
        .collect();
    let reports: Vec<BenchmarkRow> = cells
        .par_iter()
        .map(|&(family, jmu)| run_cell(cfg, family, jmu).map(|r| report_to_row(family, &r)))
        .collect::<Result<_, _>>()?;

    let m = meta(cfg);
    let csv = write_csv(
        out_dir,
        "table51.csv",
        &m,
        "family,jmu,c_optimal,d_exact,d_gaussian,d_np",
        reports.iter().map(|r| {
            format!(
                "{},{},{},{},{},{}",
                r.family, r.jmu, r.c_optimal, r.d_exact, r.d_gaussian, r.d_np
            )
        }),
    )?;
    Ok(TableOutcome {
        rows: reports,
        files: vec![csv],
    })
}

// ----------------------------------------------------------- kfunction ---

#[derive(Debug, Clone, Serialize)]
pub struct ConditionJson {
    pub w_nondecreasing: bool,
    pub k0_exceeds_gamma: bool,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct KfunctionReport {
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub gamma: f64,
    pub k0: f64,
    pub delta: Option<f64>,
    pub condition: ConditionJson,
}

#[derive(Debug)]
pub struct KfunctionOutcome {
    pub report: KfunctionReport,
    /// sup |K*{F*(x)} - K(F*(x))| over the Monte Carlo grid, when the
    /// regime carries a market-factor driver.
    pub mc_sup_gap: Option<f64>,
    pub files: Vec<PathBuf>,
}

/// Tabulate the margin curve K and price level W on a uniform grid, report
/// K(0), the delta root and the pricing-restriction verdict; for the
/// market-factor regime also emit the kernel-CDF Monte Carlo estimate of
/// K{F(x)} next to the quadrature values.
pub fn run_kfunction(cfg: &ExperimentConfig, out_dir: &Path) -> Result<KfunctionOutcome, CliError> {
    let regime = cfg.pricing_regime()?;
    let k = k_function(&regime)?;
    let m = meta(cfg);

    let n = cfg.run.kf_points;
    let csv = write_csv(
        out_dir,
        "kfunction.csv",
        &m,
        "u,k,w",
        (0..=n).map(|i| {
            let u = i as f64 / n as f64;
            format!("{},{},{}", u, k.k(u), k.w(u))
        }),
    )?;
    let condition = k.condition_report();
    let report = KfunctionReport {
        version: VERSION.to_string(),
        seed: m.seed,
        config_hash: m.config_hash.clone(),
        gamma: k.gamma(),
        k0: k.k0(),
        delta: k.delta(),
        condition: ConditionJson {
            w_nondecreasing: condition.w_nondecreasing,
            k0_exceeds_gamma: condition.k0_exceeds_gamma,
            holds: condition.holds(),
        },
    };
    let json = write_json(out_dir, "kfunction_report.json", &report)?;
    let mut files = vec![csv, json];

    let mut mc_sup_gap = None;
    if cfg.regime.variant == RegimeKind::ExponentialMarket {
        let spec = cfg.portfolio_spec(None)?;
        // span the bulk of the loss distribution for the comparison grid
        let pilot = simulate_portfolio(&spec, 8192, cfg.run.seed ^ 0x9e37_79b9);
        let (lo, hi) = (pilot.percentile(0.001), pilot.percentile(0.999));
        let grid: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
        let est = kf_monte_carlo(
            |rng| sample_aggregate_loss(&spec, rng),
            &regime,
            cfg.run.kf_mc_m,
            cfg.run.kernel_h,
            cfg.run.seed,
            &grid,
        )?;
        let sup = est
            .points
            .iter()
            .map(|p| (p.k_star - k.k(p.f_star)).abs())
            .fold(0.0f64, f64::max);
        mc_sup_gap = Some(sup);
        let mc_csv = write_csv(
            out_dir,
            "kfunction_mc.csv",
            &m,
            "x,f_star,k_star,k_quadrature",
            est.points
                .iter()
                .map(|p| format!("{},{},{},{}", p.x, p.f_star, p.k_star, k.k(p.f_star))),
        )?;
        files.push(mc_csv);
    }
    Ok(KfunctionOutcome {
        report,
        mc_sup_gap,
        files,
    })
}

// --------------------------------------------------------------- rates ---

#[derive(Debug, Clone, Serialize)]
pub struct RatesCell {
    pub jmu: f64,
    pub m: usize,
    pub seed: u64,
    pub c_optimal: f64,
    pub d_exact: f64,
    pub d_gaussian: f64,
    pub d_np: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RatesReport {
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub family: String,
    pub epsilon: f64,
    pub beta: f64,
    pub cells: Vec<RatesCell>,
    pub slope_exact: f64,
    pub slope_gaussian: f64,
    pub slope_np: f64,
    pub zeta1: Option<f64>,
    pub zeta2: Option<f64>,
}

#[derive(Debug)]
pub struct RatesOutcome {
    pub report: RatesReport,
    pub files: Vec<PathBuf>,
}

/// Degradation decay study for the configured family: one benchmark cell
/// per grid point, log-log decay slopes per attachment rule, and the
/// theoretical rate constants.
pub fn run_rates(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RatesOutcome, CliError> {
    if cfg.run.jmu_grid.len() < 3 {
        return Err(CliError::Config(format!(
            "[run] jmu_grid: decay slopes need at least 3 points, got {}",
            cfg.run.jmu_grid.len()
        )));
    }
    let family = cfg.portfolio.family;
    let reports: Vec<DegradationReport> = cfg
        .run
        .jmu_grid
        .par_iter()
        .map(|&jmu| run_cell(cfg, family, jmu))
        .collect::<Result<_, _>>()?;

    let slope = |kind| {
        decay_slope(&reports, kind).map_err(|e| CliError::Numerical(e.to_string()))
    };
    let m = meta(cfg);
    let report = RatesReport {
        version: VERSION.to_string(),
        seed: m.seed,
        config_hash: m.config_hash.clone(),
        family: family.name().to_string(),
        epsilon: cfg.regime.epsilon,
        beta: cfg.regime.beta,
        cells: reports
            .iter()
            .map(|r| RatesCell {
                jmu: r.jmu,
                m: r.m,
                seed: r.seed,
                c_optimal: r.criterion_optimal,
                d_exact: r.outcome(ApproximationKind::ExactPercentile).degradation,
                d_gaussian: r.outcome(ApproximationKind::Gaussian).degradation,
                d_np: r.outcome(ApproximationKind::NormalPower).degradation,
            })
            .collect(),
        slope_exact: slope(ApproximationKind::ExactPercentile)?,
        slope_gaussian: slope(ApproximationKind::Gaussian)?,
        slope_np: slope(ApproximationKind::NormalPower)?,
        zeta1: reports[0].zeta1,
        zeta2: reports[0].zeta2,
    };
    let json = write_json(out_dir, "rates.json", &report)?;
    Ok(RatesOutcome {
        report,
        files: vec![json],
    })
}

// ------------------------------------------------------------ simulate ---

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub m: usize,
    pub sample_mean: f64,
    pub sample_sd: f64,
    pub sample_skewness: f64,
    pub mean: f64,
    pub sd: f64,
    pub skewness: f64,
    pub kappa: f64,
}

#[derive(Debug)]
pub struct SimulateOutcome {
    pub report: SimulateReport,
    pub files: Vec<PathBuf>,
}

/// Simulate the configured book, emit the requested percentiles and the
/// sample-vs-closed-form moment report.
pub fn run_simulate(cfg: &ExperimentConfig, out_dir: &Path) -> Result<SimulateOutcome, CliError> {
    let spec = cfg.portfolio_spec(None)?;
    let loss = simulate_portfolio(&spec, cfg.run.m, cfg.run.seed);
    let moms = spec.compound_moments()?;
    let m = meta(cfg);
    let csv = write_csv(
        out_dir,
        "simulate.csv",
        &m,
        "level,percentile",
        cfg.run
            .percentiles
            .iter()
            .map(|&p| format!("{},{}", p, loss.percentile(p))),
    )?;
    let report = SimulateReport {
        version: VERSION.to_string(),
        seed: m.seed,
        config_hash: m.config_hash.clone(),
        m: cfg.run.m,
        sample_mean: loss.mean(),
        sample_sd: loss.sample_variance().sqrt(),
        sample_skewness: loss.sample_skewness(),
        mean: moms.mean,
        sd: moms.sd(),
        skewness: moms.skewness,
        kappa: moms.kappa,
    };
    let json = write_json(out_dir, "simulate_report.json", &report)?;
    Ok(SimulateOutcome {
        report,
        files: vec![csv, json],
    })
}
