use std::time::Instant;

use anyhow::{bail, Result};
use bruijn_regret::game::{rescaled_values, value_and_move};
use bruijn_regret::local::{cell_gap, h_limit, h_tables, HessianContext, BRUTE_MAX_DEPTH, INDIFFERENCE_MAX_DEPTH};
use bruijn_regret::pde::{heat_residual, operator_residual};
use bruijn_regret::strategy::{
    block_length, exact_engine, BlockInvestor, ConstantInvestor, ExactInvestor, ExhaustiveMarket, GradientInvestor, GreedyMarket,
    RandomMarket,
};
use bruijn_regret::{
    simulate, BruteOptions, DerivativeMode, Engine, ExpertPanel, GameSpec, Investor, Market, Payoff, PdeSolution,
    Quadrature,
};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{BlockRule, ExperimentConfig};
use crate::output::{self, fmt_all, loglog_slope, numbered, Meta};

/// Panel diagnostics. Returns whether both assumptions hold.
pub fn validate(panel: &ExpertPanel) -> bool {
    let diag = panel.diagnostics();
    let verdict = |ok: bool| if ok { "pass" } else { "fail" };
    println!("experts      {}", panel.experts());
    println!("window       {}", panel.window());
    println!("states       {}", panel.states().len());
    println!("vartheta     {}", diag.vartheta);
    println!("lambda_min   {}", diag.lambda_min);
    println!("lambda_min_B {}", diag.lambda_min_b);
    println!("B psd        {}", verdict(diag.lambda_min_b >= -1e-12));
    println!("E1           {}", verdict(diag.e1_holds));
    println!("E2           {}", verdict(diag.e2_holds));
    diag.e1_holds && diag.e2_holds
}

/// The requested engine, or an exact one when the payoff allows it.
fn pick_engine(requested: Option<Engine>, payoff: &Payoff, steps: usize) -> Result<Engine> {
    Ok(match requested {
        Some(e) => e,
        None => exact_engine(payoff, steps)?,
    })
}

fn solution(cfg: &ExperimentConfig, panel: &ExpertPanel) -> Result<PdeSolution> {
    Ok(match cfg.quad_order {
        Some(order) => PdeSolution::new(panel, &cfg.payoff, Quadrature::GaussHermite { order })?,
        None => PdeSolution::with_defaults(panel, &cfg.payoff)?,
    })
}

#[derive(Serialize)]
struct ValueReport {
    horizon: usize,
    day: usize,
    state: String,
    x: Vec<f64>,
    engine: String,
    value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    first_move: Option<f64>,
}

pub fn value_report(cfg: &ExperimentConfig, panel: &ExpertPanel) -> Result<String> {
    let n = panel.experts();
    let x = cfg.value_x.clone().unwrap_or_else(|| vec![0.0; n]);
    let m = cfg.state(cfg.value_state.as_deref(), panel)?;
    let spec = GameSpec::new(panel, &cfg.payoff, cfg.value_horizon, x.clone(), m, cfg.value_day)?;
    let engine = pick_engine(cfg.engine, &cfg.payoff, spec.steps())?;
    let brute = BruteOptions { f_grid: cfg.f_grid, ..BruteOptions::default() };
    let (value, first_move) = if spec.steps() == 0 {
        (cfg.payoff.eval(&x), None)
    } else {
        let (v, f) = value_and_move(&spec, engine, brute)?;
        (v, Some(f))
    };
    let report = ValueReport {
        horizon: cfg.value_horizon,
        day: cfg.value_day,
        state: m.to_string(),
        x,
        engine: engine.to_string(),
        value,
        first_move,
    };
    Ok(serde_json::to_string_pretty(&report)? + "\n")
}

pub fn pde(cfg: &ExperimentConfig, panel: &ExpertPanel, meta: &Meta) -> Result<String> {
    let n = panel.experts();
    let sol = solution(cfg, panel)?;
    let mut header = vec!["t".to_string()];
    header.extend(numbered("x", n));
    header.push("u".into());
    header.extend(numbered("grad", n));
    header.extend(["ut", "heat_residual", "operator_residual", "error"].map(String::from));
    let rows = cfg
        .probes
        .par_iter()
        .map(|probe| {
            let mut row = vec![probe.t.to_string()];
            let x = match probe.point(n) {
                Ok(x) => x,
                Err(e) => {
                    row.extend(vec![String::new(); header.len() - 2]);
                    row.push(e.to_string());
                    return row;
                }
            };
            row.extend(fmt_all(&x));
            let u = sol.evaluate_u(&x, probe.t);
            let d = if probe.t < 1.0 { Some(sol.derivatives(&x, probe.t, DerivativeMode::FiniteDifference)) } else { None };
            match (u, d) {
                (Ok(u), Some(Ok(d))) => {
                    row.push(u.to_string());
                    row.extend(fmt_all(&d.grad));
                    row.push(d.ut.to_string());
                    row.push(heat_residual(&d, panel).to_string());
                    row.push(operator_residual(&d, panel).map_or_else(|e| e.to_string(), |r| r.to_string()));
                    row.push(String::new());
                }
                (Ok(u), None) => {
                    row.push(u.to_string());
                    row.extend(vec![String::new(); n + 3]);
                    row.push(String::new());
                }
                (Err(e), _) | (_, Some(Err(e))) => {
                    row.extend(vec![String::new(); n + 4]);
                    row.push(e.to_string());
                }
            }
            row
        })
        .collect::<Vec<_>>();
    Ok(output::csv(&header, &rows, &[], meta))
}

#[derive(Debug, Clone)]
pub struct ConvergenceRecord {
    pub horizon: usize,
    pub t: f64,
    pub x: Vec<f64>,
    pub u_n_plus: f64,
    pub u_n_minus: f64,
    pub u_pde: f64,
    pub err_plus: f64,
    pub err_minus: f64,
    pub engine: Engine,
    pub wall_time: f64,
    pub error: Option<String>,
}

#[derive(Serialize)]
struct ConvergenceSummary {
    horizons: Vec<usize>,
    max_errors: Vec<f64>,
    slope: Option<f64>,
    records: usize,
    failed_records: usize,
}

pub fn converge(cfg: &ExperimentConfig, panel: &ExpertPanel, meta: &Meta) -> Result<(String, String)> {
    let n = panel.experts();
    let sol = solution(cfg, panel)?;
    let engine = cfg.engine.unwrap_or(Engine::Lattice);
    let mut points = Vec::new();
    for &horizon in &cfg.horizons {
        for probe in &cfg.probes {
            points.push((horizon, probe.clone()));
        }
    }
    let records: Vec<ConvergenceRecord> = points
        .par_iter()
        .map(|(horizon, probe)| {
            let started = Instant::now();
            let x = probe.point(n).unwrap_or_else(|_| vec![f64::NAN; n]);
            let computed = probe.point(n).map_err(|e| e.to_string()).and_then(|x| {
                let u_pde = sol.evaluate_u(&x, probe.t).map_err(|e| e.to_string())?;
                let all = rescaled_values(panel, &cfg.payoff, *horizon, &x, probe.t, engine, None).map_err(|e| e.to_string())?;
                let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
                Ok((hi, lo, u_pde))
            });
            let (hi, lo, u_pde, error) = match computed {
                Ok((hi, lo, u)) => (hi, lo, u, None),
                Err(e) => (f64::NAN, f64::NAN, f64::NAN, Some(e)),
            };
            ConvergenceRecord {
                horizon: *horizon,
                t: probe.t,
                x,
                u_n_plus: hi,
                u_n_minus: lo,
                u_pde,
                err_plus: (hi - u_pde).abs(),
                err_minus: (lo - u_pde).abs(),
                engine,
                wall_time: started.elapsed().as_secs_f64(),
                error,
            }
        })
        .collect();

    let mut header = vec!["N".to_string(), "t".to_string()];
    header.extend(numbered("x", n));
    header.extend(["u_N_plus", "u_N_minus", "u_pde", "err_plus", "err_minus", "engine", "error"].map(String::from));
    if cfg.timing {
        header.push("wall_time".into());
    }
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let mut row = vec![r.horizon.to_string(), r.t.to_string()];
            row.extend(fmt_all(&r.x));
            row.extend(fmt_all(&[r.u_n_plus, r.u_n_minus, r.u_pde, r.err_plus, r.err_minus]));
            row.push(r.engine.to_string());
            row.push(r.error.clone().unwrap_or_default().replace(',', ";"));
            if cfg.timing {
                row.push(r.wall_time.to_string());
            }
            row
        })
        .collect();
    let max_errors: Vec<f64> = cfg
        .horizons
        .iter()
        .map(|&h| {
            records
                .iter()
                .filter(|r| r.horizon == h && r.error.is_none())
                .map(|r| r.err_plus.max(r.err_minus))
                .fold(0.0, f64::max)
        })
        .collect();
    let pts: Vec<(f64, f64)> = cfg.horizons.iter().zip(&max_errors).map(|(&h, &e)| (h as f64, e)).collect();
    let slope = loglog_slope(&pts);
    let comment = format!("slope={}", slope.map_or("nan".to_string(), |s| s.to_string()));
    let summary = ConvergenceSummary {
        horizons: cfg.horizons.clone(),
        max_errors,
        slope,
        records: records.len(),
        failed_records: records.iter().filter(|r| r.error.is_some()).count(),
    };
    Ok((output::csv(&header, &rows, &[comment], meta), serde_json::to_string_pretty(&summary)? + "\n"))
}

#[derive(Serialize)]
struct SimulationSummary {
    investor: String,
    market: String,
    horizon: usize,
    runs: usize,
    seeds: Vec<u64>,
    final_payoffs: Vec<f64>,
    mean_final_payoff: f64,
    max_final_payoff: f64,
    clamps_total: usize,
    clamps_max: usize,
    ragged_block: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    game_value: Option<f64>,
    config_hash: String,
}

/// Trajectory CSVs by file name, and the summary JSON.
pub fn simulate_runs(cfg: &ExperimentConfig, panel: &ExpertPanel, meta: &Meta) -> Result<(Vec<(String, String)>, String)> {
    let n = panel.experts();
    let x0 = cfg.sim_x0.clone().unwrap_or_else(|| vec![0.0; n]);
    let m0 = cfg.state(cfg.sim_state.as_deref(), panel)?;
    let spec = GameSpec::new(panel, &cfg.payoff, cfg.sim_horizon, x0, m0, 1)?;
    let needs_pde = matches!(cfg.investor.as_str(), "gradient" | "block") || cfg.market == "greedy";
    let sol = if needs_pde { Some(solution(cfg, panel)?) } else { None };
    let k = match cfg.block_k {
        BlockRule::Auto => block_length(cfg.sim_horizon, panel.window()),
        BlockRule::Fixed(k) => k,
    };
    let runs = cfg.runs.max(1);
    let mut files = Vec::with_capacity(runs);
    let mut finals = Vec::with_capacity(runs);
    let mut clamps = Vec::with_capacity(runs);
    let mut ragged = false;
    let mut seeds = Vec::with_capacity(runs);
    for r in 0..runs {
        let seed = cfg.seed + r as u64;
        let mut investor: Box<dyn Investor> = match cfg.investor.as_str() {
            "exact" => Box::new(ExactInvestor { brute: BruteOptions { f_grid: cfg.f_grid, ..Default::default() } }),
            "gradient" => Box::new(GradientInvestor::new(sol.as_ref().expect("solution built"))),
            "block" => Box::new(BlockInvestor::new(sol.as_ref().expect("solution built"), k)),
            other => match other.strip_prefix("constant:") {
                Some(f) => Box::new(ConstantInvestor(f.trim().parse()?)),
                None => bail!("unknown investor `{other}` (exact, gradient, block, constant:F)"),
            },
        };
        let mut market: Box<dyn Market> = match cfg.market.as_str() {
            "exhaustive" => Box::new(ExhaustiveMarket),
            "greedy" => Box::new(GreedyMarket { sol: sol.as_ref().expect("solution built") }),
            "random" => Box::new(RandomMarket),
            other => bail!("unknown market `{other}` (exhaustive, greedy, random)"),
        };
        let t = simulate(&spec, investor.as_mut(), market.as_mut(), seed)?;
        let name = format!("trajectory_{}_{}_{seed}.csv", investor.name(), market.name());
        let mut text = t.to_csv();
        text.push_str(&meta.line());
        text.push('\n');
        files.push((name, text));
        finals.push(t.final_payoff);
        clamps.push(t.clamps);
        ragged |= t.ragged_block;
        seeds.push(seed);
    }
    // V_N is only reported when it is cheap to get.
    let game_value = match exact_engine(&cfg.payoff, spec.steps()) {
        Ok(Engine::Lattice) | Err(_) => None,
        Ok(engine) => Some(bruijn_regret::game::value(&spec, engine)?),
    };
    let summary = SimulationSummary {
        investor: cfg.investor.clone(),
        market: cfg.market.clone(),
        horizon: cfg.sim_horizon,
        runs,
        seeds,
        mean_final_payoff: finals.iter().sum::<f64>() / runs as f64,
        max_final_payoff: finals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        final_payoffs: finals,
        clamps_total: clamps.iter().sum(),
        clamps_max: clamps.iter().copied().max().unwrap_or(0),
        ragged_block: ragged,
        game_value,
        config_hash: meta.config_hash.clone(),
    };
    Ok((files, serde_json::to_string_pretty(&summary)? + "\n"))
}

pub fn local(cfg: &ExperimentConfig, panel: &ExpertPanel, meta: &Meta) -> Result<String> {
    let n = panel.experts();
    let x = match &cfg.local_hessian {
        Some(rows) => {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                bail!("local.hessian must be {n}x{n}");
            }
            DMatrix::from_fn(n, n, |i, j| rows[i][j])
        }
        None => DMatrix::identity(n, n),
    };
    let p = cfg.local_gradient.clone().unwrap_or_else(|| vec![1.0 / n as f64; n]);
    let ctx = HessianContext::new(x, p)?;
    let m = cfg.state(cfg.sim_state.as_deref(), panel)?;
    let k_max = cfg.local_k_max.min(INDIFFERENCE_MAX_DEPTH);
    let tables = h_tables(&ctx, panel, k_max)?;
    let lim = h_limit(&ctx, panel)?;
    let header: Vec<String> = [
        "k", "eps", "h_min", "h_max", "h_mean", "h_mean_over_k", "h_limit", "delta_min", "delta_max", "local_value",
        "gap", "bound_shape", "regime", "method", "error",
    ]
    .map(String::from)
    .to_vec();
    let cases: Vec<(usize, f64)> = (1..=k_max).flat_map(|k| cfg.local_eps.iter().map(move |&e| (k, e))).collect();
    let rows = cases
        .par_iter()
        .map(|&(k, eps)| {
            let t = &tables[k];
            let mean = t.values.iter().sum::<f64>() / t.values.len() as f64;
            let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
            let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut row = vec![k.to_string(), eps.to_string()];
            row.extend(fmt_all(&[min(&t.values), max(&t.values), mean, mean / k as f64, lim, min(&t.deltas), max(&t.deltas)]));
            match cell_gap(&ctx, panel, m, k, eps, cfg.local_f_grid) {
                Ok(g) => {
                    row.extend(fmt_all(&[g.local_value, g.gap, g.bound_shape, g.regime]));
                    row.push(if k <= BRUTE_MAX_DEPTH { "search" } else { "indifference" }.into());
                    row.push(String::new());
                }
                Err(e) => {
                    row.extend(vec![String::new(); 5]);
                    row.push(e.to_string().replace(',', ";"));
                }
            }
            row
        })
        .collect::<Vec<_>>();
    Ok(output::csv(&header, &rows, &[format!("state={m}")], meta))
}
