//! Cut-offs, the energy functionals of a pair `(u, v)`, the contraction
//! constants and the end-to-end weak comparison check.

mod theta;

pub use theta::{
    epsilon0_bisect, epsilon0_solve, theta_constants, Epsilon0, ResolvedInputs, ThetaBundle, ThetaInputs,
    EPS0_MARGIN, EPS0_TOL,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    geodesic_distance_field, iteration_lemma_verdict, sobolev_constant_estimate, weight_admissibility,
    DistanceField, FiberQuadrature, IterationVerdict, Ladder, TrialFamily, Weight, MESH_RATIO,
};
use crate::fermi::{epsilon1, estimate_k1, SampleGrid};
use crate::pde::{gradient_norm, weak_residual, EllipticProblem, FieldKind, GridField, TubeGrid};
use crate::quadrature::pairwise_sum;
use crate::{Error, Result};

/// Safety factor on measured gradient sup norms.
pub const GRADIENT_SAFETY: f64 = 1.05;
/// Certification tolerance per unit of domain volume.
pub const CERT_TOL: f64 = 1e-8;
pub const POINTWISE_TOL: f64 = 1e-10;
/// Slack on measured ratios of small quadratures.
pub const RATIO_TOL: f64 = 0.02;

/// `phi_R(d)`: 1 on `[0, R)`, `((2R - d)/R)^2` on `[R, 2R)`, 0 beyond.
pub fn cutoff_profile(d: f64, radius: f64) -> f64 {
    if d < radius {
        1.0
    } else if d < 2.0 * radius {
        ((2.0 * radius - d) / radius).powi(2)
    } else {
        0.0
    }
}

/// Geodesic distance from the base point at every grid node.
pub fn node_distances(grid: &TubeGrid, field: &DistanceField) -> Vec<f64> {
    (0..grid.len())
        .into_par_iter()
        .map(|n| field.distance_at(&grid.coords(n).0))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffProfile {
    pub radius: f64,
    pub values: Vec<f64>,
    /// Sampled sup of `|grad phi_R|` in the tube metric.
    pub gradient_bound: f64,
    #[serde(skip)]
    gradient: Vec<f64>,
}

impl CutoffProfile {
    /// `|grad phi_R|` at every node.
    pub fn gradient(&self) -> &[f64] {
        &self.gradient
    }
}

pub fn cutoff_phi(radius: f64, field: &DistanceField, grid: &TubeGrid) -> CutoffProfile {
    cutoff_from_distances(radius, &node_distances(grid, field), grid)
}

pub fn cutoff_from_distances(radius: f64, distances: &[f64], grid: &TubeGrid) -> CutoffProfile {
    let values: Vec<f64> = distances.iter().map(|&d| cutoff_profile(d, radius)).collect();
    let gradient = gradient_norm(grid, &GridField::new(values.clone(), FieldKind::Derived)).values;
    let gradient_bound = gradient.iter().fold(0.0, |m: f64, v| m.max(*v));
    CutoffProfile {
        radius,
        values,
        gradient_bound,
        gradient,
    }
}

/// `psi_R = [(u - v)^+]^beta phi_R^2`, set to zero on boundary nodes.
pub fn test_function_psi(grid: &TubeGrid, u: &GridField, v: &GridField, beta: f64, phi: &CutoffProfile) -> GridField {
    assert!(beta >= 1.0, "beta = {beta} must be at least 1");
    let values = (0..grid.len())
        .map(|n| {
            let w = (u.values[n] - v.values[n]).max(0.0);
            if grid.is_boundary(n) || w == 0.0 {
                0.0
            } else {
                w.powf(beta) * phi.values[n].powi(2)
            }
        })
        .collect();
    GridField::new(values, FieldKind::TestFunction)
}

/// Nodewise ingredients of the functionals of a pair.
#[derive(Debug, Clone)]
pub struct PairFields {
    /// `(u - v)^+`.
    pub positive: Vec<f64>,
    /// `|grad (u - v)|`.
    pub grad: Vec<f64>,
    /// `a` at the nodes.
    pub weight: Vec<f64>,
    pub distances: Vec<f64>,
}

impl PairFields {
    pub fn new(grid: &TubeGrid, weight: &Weight, u: &GridField, v: &GridField, distances: Vec<f64>) -> Self {
        let diff: Vec<f64> = u.values.iter().zip(&v.values).map(|(a, b)| a - b).collect();
        let grad = gradient_norm(grid, &GridField::new(diff.clone(), FieldKind::Derived)).values;
        let weight = (0..grid.len())
            .into_par_iter()
            .map(|n| {
                let (x, y) = grid.coords(n);
                weight.eval(&x, &y)
            })
            .collect();
        Self {
            positive: diff.iter().map(|d| d.max(0.0)).collect(),
            grad,
            weight,
            distances,
        }
    }

    /// `sup a (u-v)^+ |grad(u-v)|^2`.
    pub fn energy_sup(&self) -> f64 {
        (0..self.positive.len())
            .map(|n| self.weight[n] * self.positive[n] * self.grad[n].powi(2))
            .fold(0.0, f64::max)
    }

    /// `int_{Omega_R} a [(u-v)^+]^{beta-1} |grad(u-v)|^2` with `Omega_R` the
    /// tube over `d < R`.
    pub fn ball_energy(&self, grid: &TubeGrid, radius: f64, beta: f64) -> f64 {
        integrate(grid, |n| {
            if self.distances[n] < radius && self.positive[n] > 0.0 {
                self.weight[n] * self.positive[n].powf(beta - 1.0) * self.grad[n].powi(2)
            } else {
                0.0
            }
        })
    }

    /// `L_{2R} = int a [(u-v)^+]^{beta-1} |grad(u-v)|^2 phi_R^2`.
    pub fn cutoff_energy(&self, grid: &TubeGrid, phi: &CutoffProfile, beta: f64) -> f64 {
        integrate(grid, |n| {
            if self.positive[n] > 0.0 {
                self.weight[n] * self.positive[n].powf(beta - 1.0) * self.grad[n].powi(2) * phi.values[n].powi(2)
            } else {
                0.0
            }
        })
    }

    /// `A_{2R} = int [(u-v)^+]^beta |grad(u-v)| phi_R^2`.
    pub fn a_term(&self, grid: &TubeGrid, phi: &CutoffProfile, beta: f64) -> f64 {
        integrate(grid, |n| self.positive[n].powf(beta) * self.grad[n] * phi.values[n].powi(2))
    }

    /// `B_{2R} = int [(u-v)^+]^{beta+1} phi_R^2`.
    pub fn b_term(&self, grid: &TubeGrid, phi: &CutoffProfile, beta: f64) -> f64 {
        integrate(grid, |n| self.positive[n].powf(beta + 1.0) * phi.values[n].powi(2))
    }

    /// `C_{2R} = int a [(u-v)^+]^beta |grad(u-v)| |grad phi_R| phi_R`.
    pub fn c_term(&self, grid: &TubeGrid, phi: &CutoffProfile, beta: f64) -> f64 {
        integrate(grid, |n| {
            self.weight[n] * self.positive[n].powf(beta) * self.grad[n] * phi.gradient[n] * phi.values[n]
        })
    }
}

fn integrate(grid: &TubeGrid, f: impl Fn(usize) -> f64) -> f64 {
    let terms: Vec<f64> = (0..grid.len()).map(|n| grid.mass(n) * f(n)).collect();
    pairwise_sum(&terms)
}

/// `L~_R = int_{Omega_R} a (u-v)^+ |grad(u-v)|^2 dvol`.
pub fn l_tilde(grid: &TubeGrid, weight: &Weight, u: &GridField, v: &GridField, radius: f64, field: &DistanceField) -> f64 {
    PairFields::new(grid, weight, u, v, node_distances(grid, field)).ball_energy(grid, radius, 2.0)
}

/// Measure every constant of the contraction bound for a pair on `problem`.
pub fn measure_inputs(problem: &EllipticProblem, u: &GridField, v: &GridField, t: f64) -> Result<ThetaInputs> {
    let grid = &problem.grid;
    let chart = grid.chart();
    let k = chart.codim();
    let base_samples = base_nodes(grid);
    let quad = FiberQuadrature::default();
    let c_a = weight_admissibility(&problem.weight, t, chart, &base_samples, &quad)?;
    let c_s = sobolev_constant_estimate(&problem.weight, t, k, chart.eps(), &base_samples, &TrialFamily::default(), &quad)?.c_s;
    let m = u.sup_norm().max(v.sup_norm()).max(1e-12);
    let stride = (grid.len() / 2000).max(1);
    let z: Vec<Vec<f64>> = (0..grid.len())
        .step_by(stride)
        .map(|n| {
            let (x, y) = grid.coords(n);
            [x, y].concat()
        })
        .collect();
    let l_f = problem.reaction.lipschitz(m, &z, 64);
    let sample = SampleGrid::regular(chart, 16, 4, 0.5);
    let eps1 = epsilon1(estimate_k1(chart, &sample)?);
    Ok(ThetaInputs {
        c_a: Some(c_a),
        c_s: Some(c_s),
        gamma_k: None,
        t: Some(t),
        k: Some(k),
        eps: Some(chart.eps()),
        eps1: Some(eps1),
        lambda: Some(problem.lambda),
        q: Some(problem.q),
        l_f: Some(l_f),
        a_sup: Some(problem.weight.sup_norm(chart)),
        grad_u: Some(GRADIENT_SAFETY * gradient_norm(grid, u).sup_norm()),
        grad_v: Some(GRADIENT_SAFETY * gradient_norm(grid, v).sup_norm()),
    })
}

/// Base parameters of the grid's base axes.
fn base_nodes(grid: &TubeGrid) -> Vec<Vec<f64>> {
    let axes = &grid.axes()[..grid.base_dim()];
    match axes {
        [a] => (0..a.n).map(|i| vec![a.coord(i)]).collect(),
        [a, b] => {
            let step = |n: usize| (n / 24).max(1);
            (0..a.n)
                .step_by(step(a.n))
                .flat_map(|i| (0..b.n).step_by(step(b.n)).map(move |j| vec![a.coord(i), b.coord(j)]))
                .collect()
        }
        _ => unreachable!("bases have dimension 1 or 2"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WcpConfig {
    /// Centre `pbar` of the geodesic balls, in base parameters.
    pub pbar: Vec<f64>,
    /// Dyadic ladder `R_0, 2 R_0, ...`.
    pub radii: Vec<f64>,
    pub gamma: f64,
    pub c1: f64,
    /// Integrability exponent of `a^{-t}`.
    pub t: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

fn default_beta() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderRow {
    #[serde(rename = "R")]
    pub radius: f64,
    #[serde(rename = "L_tilde")]
    pub l_tilde: f64,
    /// `L~_R / L~_{2R}`, zero when both vanish.
    pub ratio: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichRow {
    #[serde(rename = "R")]
    pub radius: f64,
    pub l_tilde_r: f64,
    pub l_2r: f64,
    pub l_tilde_2r: f64,
    pub holds: bool,
}

/// Measured left sides and bundle right sides of the three estimates at one rung.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RungAudit {
    #[serde(rename = "R")]
    pub radius: f64,
    pub l_2r: f64,
    pub a: f64,
    /// `None` when `Lambda = 0` (the term carries a factor `|Lambda|`).
    pub a_bound: Option<f64>,
    pub b: f64,
    pub b_bound: f64,
    pub c: f64,
    pub c_bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certification {
    /// Largest weak residual of `u` over the test family (`<= tol` required).
    pub sub_residual: f64,
    /// Smallest weak residual of `v` over the test family (`>= -tol` required).
    pub super_residual: f64,
    /// Largest `u - v` on boundary nodes.
    pub boundary_gap: f64,
    pub tol: f64,
    pub family_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdicts {
    pub contraction: bool,
    pub iteration: IterationVerdict,
    pub pointwise: bool,
    pub sandwich: bool,
    pub audit: bool,
    /// `min (v - u)` over all nodes.
    pub min_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WcpReport {
    pub constants: ThetaBundle,
    pub ladder: Vec<LadderRow>,
    pub verdicts: Verdicts,
    pub certification: Certification,
    pub sandwich: Vec<SandwichRow>,
    pub audits: Vec<RungAudit>,
    pub epsilon0: Option<Epsilon0>,
    pub gamma: f64,
    pub c1: f64,
    /// `C = C1 sup a (u-v)^+ |grad(u-v)|^2`.
    pub growth_constant: f64,
    /// `theta` handed to the iteration lemma, `theta(R_0)`.
    pub theta_lemma: f64,
    pub threshold: f64,
    /// The smallness hypothesis fails, so no conclusion is claimed.
    pub hypothesis_void: bool,
    /// The outermost ball covers the whole base.
    pub saturated: bool,
    pub notes: Vec<String>,
}

impl WcpReport {
    /// Every verdict of the comparison chain holds.
    pub fn passes(&self) -> bool {
        let v = &self.verdicts;
        !self.hypothesis_void && v.contraction && v.iteration.is_forced_zero() && v.pointwise && v.sandwich && v.audit
    }
}

/// Run the comparison chain on a certified pair `u` (subsolution) and `v`
/// (supersolution) of `problem`.
pub fn verify_wcp(problem: &EllipticProblem, u: &GridField, v: &GridField, config: &WcpConfig) -> Result<WcpReport> {
    let grid = &problem.grid;
    if u.values.len() != grid.len() || v.values.len() != grid.len() {
        return Err(Error::InvalidInput("u and v must live on the problem grid".into()));
    }
    let radii = &config.radii;
    if radii.is_empty() || !(radii[0] > 0.0) {
        return Err(Error::InvalidInput("the ladder needs positive radii".into()));
    }
    if !(config.beta >= 1.0) {
        return Err(Error::InvalidInput(format!("beta = {} must be >= 1", config.beta)));
    }
    if !(config.gamma > 0.0 && config.c1 > 0.0) {
        return Err(Error::InvalidInput("gamma and C1 must be positive".into()));
    }
    let beta = config.beta;

    let field = geodesic_distance_field(grid.chart().base(), &config.pbar, radii[0] / (2.0 * MESH_RATIO))?;
    let pair = PairFields::new(grid, &problem.weight, u, v, node_distances(grid, &field));
    let mut rungs = radii.clone();
    rungs.push(2.0 * radii[radii.len() - 1]);
    let cutoffs: Vec<CutoffProfile> = rungs
        .par_iter()
        .map(|&r| cutoff_from_distances(r, &pair.distances, grid))
        .collect();

    let certification = certify(problem, u, v, beta, &cutoffs)?;

    let inputs = measure_inputs(problem, u, v, config.t)?;
    let constants = theta_constants(&inputs)?;
    let threshold = 2f64.powf(-config.gamma);
    let mut notes = vec![
        "the weight factor C_a^{-t} and the square C_S^2 are used as displayed; \
         the weighted Sobolev bound suggests C_a^{1/t} and C_S"
            .to_string(),
    ];
    let epsilon0 = match epsilon0_solve(&inputs, config.gamma, rungs[rungs.len() - 1]) {
        Ok(e) => Some(e),
        Err(e) => {
            notes.push(format!("eps_0 unavailable: {e}"));
            None
        }
    };

    let l: Vec<f64> = rungs.iter().map(|&r| pair.ball_energy(grid, r, 2.0)).collect();
    let n = radii.len();
    let ladder: Vec<LadderRow> = (0..n)
        .map(|j| LadderRow {
            radius: radii[j],
            l_tilde: l[j],
            ratio: if l[j] == 0.0 { 0.0 } else { l[j] / l[j + 1] },
            theta: constants.theta(radii[j]),
        })
        .collect();
    let contraction = ladder.iter().all(|row| row.ratio <= row.theta + RATIO_TOL);

    // theta decreases in R, so the innermost rung bounds every contraction.
    let theta_lemma = constants.theta(radii[0]);
    let g = vec![0.0; n];
    let growth_constant = config.c1 * pair.energy_sup();
    let iteration = iteration_lemma_verdict(
        &Ladder {
            radii: radii.clone(),
            l: l[..n].to_vec(),
            g,
        },
        theta_lemma,
        config.gamma,
        growth_constant,
    );

    let min_gap = v
        .values
        .iter()
        .zip(&u.values)
        .map(|(b, a)| b - a)
        .fold(f64::INFINITY, f64::min);
    let pointwise = min_gap >= -POINTWISE_TOL;

    let sandwich: Vec<SandwichRow> = (0..n)
        .map(|j| {
            let l_2r = pair.cutoff_energy(grid, &cutoffs[j], 2.0);
            SandwichRow {
                radius: radii[j],
                l_tilde_r: l[j],
                l_2r,
                l_tilde_2r: l[j + 1],
                holds: l[j] <= l_2r && l_2r <= l[j + 1],
            }
        })
        .collect();

    let r = constants.inputs;
    let audits: Vec<RungAudit> = (0..n)
        .map(|j| {
            let phi = &cutoffs[j];
            let l_2r = pair.cutoff_energy(grid, phi, beta);
            let a = pair.a_term(grid, phi, beta);
            let b = pair.b_term(grid, phi, beta);
            let c = pair.c_term(grid, phi, beta);
            let a_bound = constants.tau.map(|tau| r.audit_a(beta, tau) * l_2r);
            let b_bound = r.audit_b(beta) * l_2r;
            let c_bound = constants.tau_prime * l_2r
                + r.audit_c(beta, constants.tau_prime, radii[j]) * pair.ball_energy(grid, 2.0 * radii[j], beta);
            let within = |lhs: f64, rhs: f64| lhs <= (1.0 + RATIO_TOL) * rhs;
            RungAudit {
                radius: radii[j],
                l_2r,
                a,
                a_bound,
                b,
                b_bound,
                c,
                c_bound,
                holds: a_bound.is_none_or(|ab| within(a, ab)) && within(b, b_bound) && within(c, c_bound),
            }
        })
        .collect();
    if constants.tau.is_none() {
        notes.push("Lambda = 0: the gradient term and its estimate drop out".into());
    }

    let mut hypothesis_void = !(theta_lemma < threshold);
    if hypothesis_void {
        notes.push(format!(
            "theta = {theta_lemma:.6e} at the innermost rung is not below 2^-gamma = {threshold:.6e}"
        ));
    }
    if let Some(e) = &epsilon0 {
        if r.eps > e.epsilon0 {
            hypothesis_void = true;
            notes.push(format!("eps = {} exceeds eps_0 = {:.6e}", r.eps, e.epsilon0));
        }
    }
    let saturated = field.ball_volume(rungs[n])? >= field.total_volume() * (1.0 - 1e-12);
    if saturated {
        notes.push(format!("the ball of radius {} covers the whole base", rungs[n]));
    }

    Ok(WcpReport {
        constants,
        ladder,
        verdicts: Verdicts {
            contraction,
            iteration,
            pointwise,
            sandwich: sandwich.iter().all(|s| s.holds),
            audit: audits.iter().all(|a| a.holds),
            min_gap,
        },
        certification,
        sandwich,
        audits,
        epsilon0,
        gamma: config.gamma,
        c1: config.c1,
        growth_constant,
        theta_lemma,
        threshold,
        hypothesis_void,
        saturated,
        notes,
    })
}

/// Weak residuals of `u` and `v` against `psi_R` and the plain cut-offs
/// `phi_R^2` (zeroed on the boundary) for every rung.
fn certify(problem: &EllipticProblem, u: &GridField, v: &GridField, beta: f64, cutoffs: &[CutoffProfile]) -> Result<Certification> {
    let grid = &problem.grid;
    let volume = grid.integrate(&vec![1.0; grid.len()]);
    let tol = CERT_TOL * volume;
    let boundary_gap = (0..grid.len())
        .filter(|&n| grid.is_boundary(n))
        .map(|n| u.values[n] - v.values[n])
        .fold(f64::NEG_INFINITY, f64::max);
    if boundary_gap > tol {
        return Err(Error::NotCertified {
            reason: "u exceeds v on the boundary".into(),
            residual: boundary_gap,
        });
    }
    let mut family = Vec::with_capacity(2 * cutoffs.len());
    for phi in cutoffs {
        family.push(test_function_psi(grid, u, v, beta, phi));
        let plain = (0..grid.len())
            .map(|n| if grid.is_boundary(n) { 0.0 } else { phi.values[n].powi(2) })
            .collect();
        family.push(GridField::new(plain, FieldKind::TestFunction));
    }
    let mut sub_residual = f64::NEG_INFINITY;
    let mut super_residual = f64::INFINITY;
    for psi in &family {
        sub_residual = sub_residual.max(weak_residual(u, psi, problem)?);
        super_residual = super_residual.min(weak_residual(v, psi, problem)?);
    }
    if sub_residual > tol {
        return Err(Error::NotCertified {
            reason: "u is not a subsolution".into(),
            residual: sub_residual,
        });
    }
    if super_residual < -tol {
        return Err(Error::NotCertified {
            reason: "v is not a supersolution".into(),
            residual: super_residual,
        });
    }
    Ok(Certification {
        sub_residual,
        super_residual,
        boundary_gap,
        tol,
        family_size: family.len(),
    })
}
