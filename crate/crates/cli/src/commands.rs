use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};
use tubewcp::analysis::{
    iteration_lemma_verdict, sobolev_constant_estimate, volume_growth_fit, weight_admissibility, FiberQuadrature,
    GrowthFit, TrialFamily,
};
use tubewcp::fermi::{epsilon1, estimate_k1, metric_rows, rts_tensors, write_metric_csv, FermiChart, SampleGrid};
use tubewcp::geometry::Base;
use tubewcp::pde::{solve, write_field_csv, EllipticProblem, FieldSidecar, GridSpec, SolveReport, TubeGrid};
use tubewcp::reach::{pairwise_reach, tube_exists, ReachSampling};
use tubewcp::wcp::{epsilon0_bisect, epsilon0_solve, theta_constants, verify_wcp, WcpConfig, EPS0_MARGIN};

use crate::config::ExperimentConfig;
use crate::CliError;

/// Everything a command produced: the JSON result, side files and exit code.
pub struct Outcome {
    pub result: Value,
    pub files: Vec<(String, Vec<u8>)>,
    pub exit: u8,
}

impl Outcome {
    fn ok(result: impl Serialize) -> Result<Self, CliError> {
        Ok(Self {
            result: to_value(result)?,
            files: Vec::new(),
            exit: 0,
        })
    }
}

fn to_value(v: impl Serialize) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Io(e.to_string()))
}

pub struct Flags {
    pub force: bool,
}

fn chart(cfg: &ExperimentConfig) -> Result<FermiChart, CliError> {
    Ok(cfg.chart().build()?)
}

fn sample_grid(cfg: &ExperimentConfig, chart: &FermiChart) -> SampleGrid {
    SampleGrid::regular(chart, cfg.samples.base, cfg.samples.normal, 0.5)
}

fn base_samples(cfg: &ExperimentConfig, chart: &FermiChart) -> Vec<Vec<f64>> {
    sample_grid(cfg, chart).base
}

fn pbar(cfg: &ExperimentConfig, chart: &FermiChart) -> Vec<f64> {
    cfg.ladder
        .pbar
        .clone()
        .unwrap_or_else(|| chart.domain().iter().map(|(a, b)| 0.5 * (a + b)).collect())
}

pub fn metric(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let chart = chart(cfg)?;
    let grid = sample_grid(cfg, &chart);
    let rows = metric_rows(&chart, &grid)?;
    let k1 = estimate_k1(&chart, &grid)?;
    let mut csv = Vec::new();
    write_metric_csv(&rows, &mut csv)?;
    let lambda = rows.iter().map(|r| r.lambda);
    let (lo, hi) = lambda.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), l| (a.min(l), b.max(l)));
    Ok(Outcome {
        result: json!({
            "chart": cfg.chart().summary()?,
            "k1": k1,
            "epsilon1": epsilon1(k1),
            "rows": rows.len(),
            "lambda_min": lo,
            "lambda_max": hi,
        }),
        files: vec![("metric.csv".into(), csv)],
        exit: 0,
    })
}

fn matrix(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn rts(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let chart = chart(cfg)?;
    let rows = base_samples(cfg, &chart)
        .iter()
        .map(|x| {
            let t = rts_tensors(&chart, x)?;
            Ok(json!({
                "x": x,
                "h": matrix(&t.h),
                "r": t.r.iter().map(matrix).collect::<Vec<_>>(),
                "t": t.t.iter().map(matrix).collect::<Vec<_>>(),
                "s": t.s.iter().map(|row| row.iter().map(matrix).collect::<Vec<_>>()).collect::<Vec<_>>(),
            }))
        })
        .collect::<Result<Vec<_>, tubewcp::Error>>()?;
    Outcome::ok(json!({ "samples": rows }))
}

fn sampling(cfg: &ExperimentConfig) -> ReachSampling {
    ReachSampling {
        samples: cfg.reach.samples,
        window: cfg.window.clone(),
        resolution: cfg.reach.resolution.unwrap_or(cfg.eps),
    }
}

pub fn reach(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let manifold = cfg.manifold.build()?;
    let report = pairwise_reach(&manifold, &sampling(cfg))?;
    let min = report.min().clone();
    Outcome::ok(json!({
        "min_rho": min.rho,
        "at": min,
        "tube_exists": min.rho >= cfg.eps,
        "report": report,
    }))
}

#[derive(Debug, Serialize)]
struct Assumption {
    name: &'static str,
    pass: bool,
    #[serde(skip_serializing_if = "Value::is_null")]
    constants: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    failure: Option<String>,
}

impl Assumption {
    fn from(name: &'static str, r: Result<(bool, Value), tubewcp::Error>) -> Self {
        match r {
            Ok((pass, constants)) => Self {
                name,
                pass,
                constants,
                failure: None,
            },
            Err(e) => Self {
                name,
                pass: false,
                constants: Value::Null,
                failure: Some(e.to_string()),
            },
        }
    }
}

fn derivative_bounds(base: &Base, samples: &[Vec<f64>]) -> (f64, f64) {
    let mut first: f64 = 0.0;
    let mut second: f64 = 0.0;
    for x in samples {
        match base {
            Base::Plane(c) => {
                first = first.max(c.derivative(x[0], 1).norm());
                second = second.max(c.derivative(x[0], 2).norm());
            }
            Base::Space(c) => {
                first = first.max(c.derivative(x[0], 1).norm());
                second = second.max(c.derivative(x[0], 2).norm());
            }
            Base::Surface(s) => {
                for a in 0..2 {
                    first = first.max(s.partial(x[0], x[1], a).norm());
                    for b in 0..2 {
                        second = second.max(s.second_partial(x[0], x[1], a, b).norm());
                    }
                }
            }
        }
    }
    (first, second)
}

fn growth(cfg: &ExperimentConfig, chart: &FermiChart) -> Result<GrowthFit, tubewcp::Error> {
    volume_growth_fit(chart.base(), &pbar(cfg, chart), &cfg.ladder.radii, cfg.ladder.r0)
}

fn assumptions(cfg: &ExperimentConfig) -> Result<Vec<Assumption>, CliError> {
    let chart = chart(cfg)?;
    let samples = base_samples(cfg, &chart);
    let k = chart.codim();
    let manifold = cfg.manifold.build()?;
    let main = tube_exists(&manifold, cfg.eps, &sampling(cfg)).map(|v| {
        let pass = v.exists;
        (pass, json!({ "reach": v.min_rho, "eps": v.eps, "at": v.at }))
    });
    let weight = cfg.weight.build()?;
    let a1 = if cfg.t > k as f64 {
        weight_admissibility(&weight, cfg.t, &chart, &samples, &FiberQuadrature::default())
            .map(|c_a| (true, json!({ "C_a": c_a, "t": cfg.t, "k": k })))
    } else {
        Err(tubewcp::Error::BadExponent { t: cfg.t, k })
    };
    let reaction = cfg.reaction.build()?;
    let grid = sample_grid(cfg, &chart);
    let z: Vec<Vec<f64>> = grid
        .base
        .iter()
        .flat_map(|x| grid.normal.iter().map(move |y| [x.clone(), y.clone()].concat()))
        .collect();
    let l_f = reaction.lipschitz(cfg.lipschitz_m, &z, 64);
    let a2 = Ok((l_f.is_finite(), json!({ "L_f": l_f, "m": cfg.lipschitz_m })));
    let (d1, d2) = derivative_bounds(chart.base(), &samples);
    let a3 = Ok((
        d1.is_finite() && d2.is_finite(),
        json!({ "first_derivative": d1, "second_derivative": d2 }),
    ));
    let a4 = growth(cfg, &chart).map(|fit| (fit.gamma.is_finite() && fit.c1.is_finite(), to_value(fit).unwrap_or(Value::Null)));
    Ok(vec![
        Assumption::from("main", main),
        Assumption::from("A1", a1),
        Assumption::from("A2", a2),
        Assumption::from("A3", a3),
        Assumption::from("A4", a4),
    ])
}

pub fn check_assumptions(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let list = assumptions(cfg)?;
    let failures: Vec<&str> = list.iter().filter(|a| !a.pass).map(|a| a.name).collect();
    Ok(Outcome {
        result: json!({ "assumptions": list, "failures": failures }),
        files: Vec::new(),
        exit: if failures.is_empty() { 0 } else { 4 },
    })
}

pub fn sobolev(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let chart = chart(cfg)?;
    let samples = base_samples(cfg, &chart);
    let weight = cfg.weight.build()?;
    let quad = FiberQuadrature::default();
    let c_a = weight_admissibility(&weight, cfg.t, &chart, &samples, &quad)?;
    let est = sobolev_constant_estimate(&weight, cfg.t, chart.codim(), cfg.eps, &samples, &TrialFamily::default(), &quad)?;
    Outcome::ok(json!({ "C_a": c_a, "estimate": est }))
}

pub fn epsilon0(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let chart = chart(cfg)?;
    let e = &cfg.epsilon0;
    let gamma = match e.gamma {
        Some(g) => g,
        None => growth(cfg, &chart)?.gamma,
    };
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(CliError::Config(format!("gamma = {gamma} must be positive")));
    }
    let r_large = e
        .r_large
        .unwrap_or_else(|| 2.0 * cfg.ladder.radii.last().copied().unwrap_or(1.0));
    let mut inputs = e.constants.clone();
    if inputs.eps1.is_none() {
        inputs.eps1 = Some(epsilon1(estimate_k1(&chart, &sample_grid(cfg, &chart))?));
    }
    if let Some(slope) = e.synthetic_slope {
        let eps1 = inputs.eps1.unwrap_or(1.0);
        let target = (1.0 - EPS0_MARGIN) * 2f64.powf(-gamma);
        let (eps0, bracket) = epsilon0_bisect(|eps| slope * eps, eps1, target)?;
        return Outcome::ok(json!({
            "epsilon0": eps0,
            "epsilon1": eps1,
            "theta_at_r_large": slope * eps0,
            "r_large": r_large,
            "gamma": gamma,
            "bracket": bracket,
            "inputs": { "synthetic_slope": slope },
        }));
    }
    let k = chart.codim();
    inputs.k.get_or_insert(k);
    inputs.t.get_or_insert(cfg.t);
    inputs.eps.get_or_insert(cfg.eps);
    inputs.lambda.get_or_insert(cfg.lambda);
    inputs.q.get_or_insert(cfg.q);
    let weight = cfg.weight.build()?;
    inputs.a_sup.get_or_insert_with(|| weight.sup_norm(&chart));
    let samples = base_samples(cfg, &chart);
    let quad = FiberQuadrature::default();
    if inputs.c_a.is_none() {
        inputs.c_a = Some(weight_admissibility(&weight, cfg.t, &chart, &samples, &quad)?);
    }
    if inputs.c_s.is_none() {
        inputs.c_s = Some(
            sobolev_constant_estimate(&weight, cfg.t, k, cfg.eps, &samples, &TrialFamily::default(), &quad)?.c_s,
        );
    }
    let sol = epsilon0_solve(&inputs, gamma, r_large)?;
    let bundle = theta_constants(&inputs)?;
    Outcome::ok(json!({
        "epsilon0": sol.epsilon0,
        "epsilon1": sol.epsilon1,
        "theta_at_r_large": sol.theta_at_r_large,
        "r_large": r_large,
        "gamma": gamma,
        "target": sol.target,
        "theta1_at_epsilon0": sol.theta1,
        "bracket": sol.bracket,
        "constants_at_eps": bundle,
        "inputs": inputs,
    }))
}

fn problem(cfg: &ExperimentConfig, dirichlet: f64) -> Result<EllipticProblem, CliError> {
    let chart = chart(cfg)?;
    let spec = GridSpec {
        window: None,
        nx: cfg.grid.nx,
        ny: cfg.grid.ny,
        half_width: cfg.grid.half_width,
    };
    let grid = Arc::new(TubeGrid::new(&chart, &spec)?);
    Ok(EllipticProblem::new(
        grid,
        cfg.weight.build()?,
        cfg.lambda,
        cfg.q,
        cfg.reaction.build()?,
        move |_, _| dirichlet,
    )?)
}

fn boundary(cfg: &ExperimentConfig) -> Result<&crate::config::Boundary, CliError> {
    cfg.boundary
        .as_ref()
        .ok_or_else(|| CliError::Config("boundary data missing (set boundary.u)".into()))
}

fn field_files(name: &str, p: &EllipticProblem, rep: &SolveReport) -> Result<Vec<(String, Vec<u8>)>, CliError> {
    let mut csv = Vec::new();
    write_field_csv(&p.grid, &rep.field, &mut csv)?;
    let sidecar = serde_json::to_vec_pretty(&FieldSidecar::new(&p.grid, rep.history.clone()))
        .map_err(|e| CliError::Io(e.to_string()))?;
    Ok(vec![(format!("{name}.csv"), csv), (format!("{name}.meta.json"), sidecar)])
}

pub fn solve_cmd(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let b = boundary(cfg)?;
    let p = problem(cfg, b.u)?;
    let rep = solve(&p, &cfg.solver)?;
    Ok(Outcome {
        result: json!({
            "iterations": rep.iterations,
            "residual": rep.residual,
            "nodes": p.grid.len(),
            "sup": rep.field.sup_norm(),
        }),
        files: field_files("u", &p, &rep)?,
        exit: 0,
    })
}

pub fn verify(cfg: &ExperimentConfig, flags: &Flags) -> Result<Outcome, CliError> {
    let b = boundary(cfg)?;
    let v_data = b
        .v
        .ok_or_else(|| CliError::Config("boundary data missing (set boundary.v)".into()))?;
    let checks = assumptions(cfg)?;
    let failed: Vec<&str> = checks.iter().filter(|a| !a.pass).map(|a| a.name).collect();
    if !failed.is_empty() && !flags.force {
        return Err(CliError::Assumption(format!(
            "assumptions failed: {} (use --force to proceed)",
            failed.join(", ")
        )));
    }
    let pu = problem(cfg, b.u)?;
    let pv = pu.with_dirichlet(move |_, _| v_data);
    let u = solve(&pu, &cfg.solver)?;
    let v = solve(&pv, &cfg.solver)?;
    let chart = pu.grid.chart();
    let fit = volume_growth_fit(chart.base(), &pbar(cfg, chart), &cfg.ladder.radii, cfg.ladder.r0)?;
    let wcfg = WcpConfig {
        pbar: pbar(cfg, chart),
        radii: cfg.ladder.radii.clone(),
        gamma: fit.gamma,
        c1: fit.c1,
        t: cfg.t,
        beta: cfg.ladder.beta,
    };
    let report = verify_wcp(&pu, &u.field, &v.field, &wcfg)?;
    let exit = if report.hypothesis_void {
        if report.verdicts.pointwise {
            0
        } else {
            7
        }
    } else if !report.verdicts.pointwise {
        7
    } else if report.passes() {
        0
    } else {
        8
    };
    let mut files = field_files("u", &pu, &u)?;
    files.extend(field_files("v", &pv, &v)?);
    Ok(Outcome {
        result: json!({
            "assumptions": checks,
            "growth": fit,
            "solves": {
                "u": { "iterations": u.iterations, "residual": u.residual },
                "v": { "iterations": v.iterations, "residual": v.residual },
            },
            "report": report,
        }),
        files,
        exit,
    })
}

pub fn volume_growth(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let chart = chart(cfg)?;
    Outcome::ok(json!({ "pbar": pbar(cfg, &chart), "fit": growth(cfg, &chart)? }))
}

pub fn iterate_lemma(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let it = cfg
        .iteration
        .as_ref()
        .ok_or_else(|| CliError::Config("iteration section missing".into()))?;
    let verdict = iteration_lemma_verdict(&it.ladder, it.theta, it.gamma, it.c);
    let exit = if verdict.is_forced_zero() { 0 } else { 8 };
    Ok(Outcome {
        result: to_value(verdict)?,
        files: Vec::new(),
        exit,
    })
}
