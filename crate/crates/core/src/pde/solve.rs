use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{FieldKind, GridField, TubeGrid};
use super::operator::{assemble_divergence_operator, DivergenceOperator};
use super::sparse::pcg;
use crate::analysis::{Reaction, Weight};
use crate::quadrature::pairwise_sum;
use crate::{Error, Result};

/// Dirichlet data `u(x, y)`, also used as the initial iterate.
pub type Dirichlet = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// `-div(a grad u) + Lambda |grad u|^q = f(z, u)` on a tube grid.
#[derive(Clone)]
pub struct EllipticProblem {
    pub weight: Weight,
    pub lambda: f64,
    pub q: f64,
    pub reaction: Reaction,
    pub dirichlet: Dirichlet,
    pub grid: Arc<TubeGrid>,
    operator: Arc<DivergenceOperator>,
}

impl fmt::Debug for EllipticProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EllipticProblem")
            .field("weight", &self.weight)
            .field("lambda", &self.lambda)
            .field("q", &self.q)
            .field("reaction", &self.reaction)
            .field("nodes", &self.grid.len())
            .finish()
    }
}

impl EllipticProblem {
    pub fn new(
        grid: Arc<TubeGrid>,
        weight: Weight,
        lambda: f64,
        q: f64,
        reaction: Reaction,
        dirichlet: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(q >= 1.0 && q.is_finite()) {
            return Err(Error::InvalidInput(format!("gradient exponent q = {q} must be >= 1")));
        }
        if !lambda.is_finite() {
            return Err(Error::InvalidInput("Lambda must be finite".into()));
        }
        let operator = Arc::new(assemble_divergence_operator(&grid, &weight)?);
        Ok(Self {
            weight,
            lambda,
            q,
            reaction,
            dirichlet: Arc::new(dirichlet),
            grid,
            operator,
        })
    }

    /// Same operator, different Dirichlet data.
    pub fn with_dirichlet(&self, dirichlet: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            dirichlet: Arc::new(dirichlet),
            ..self.clone()
        }
    }

    /// Same operator, different reaction.
    pub fn with_reaction(&self, reaction: Reaction) -> Self {
        Self {
            reaction,
            ..self.clone()
        }
    }

    pub fn operator(&self) -> &DivergenceOperator {
        &self.operator
    }

    /// `Lambda |grad u|^q - f(z, u)` at every node.
    fn lower_order(&self, u: &[f64]) -> Vec<f64> {
        let grad = gradient_norm(&self.grid, &GridField::new(u.to_vec(), FieldKind::Solution));
        (0..u.len())
            .into_par_iter()
            .map(|n| {
                let (x, y) = self.grid.coords(n);
                let z = [x, y].concat();
                self.lambda * grad.values[n].powf(self.q) - self.reaction.eval(&z, u[n])
            })
            .collect()
    }

    /// Strong residual at interior nodes (zero on the boundary).
    pub fn strong_residual(&self, u: &GridField) -> GridField {
        let su = self.operator.apply_stiffness(&u.values);
        let low = self.lower_order(&u.values);
        let values = (0..u.values.len())
            .map(|n| {
                if self.grid.is_boundary(n) {
                    0.0
                } else {
                    su[n] / self.operator.mass[n] + low[n]
                }
            })
            .collect();
        GridField::new(values, FieldKind::Residual)
    }

    pub fn boundary_values(&self) -> GridField {
        let d = self.dirichlet.clone();
        self.grid.field_from(FieldKind::Solution, move |x, y| d(x, y))
    }
}

/// `|grad_g u| = sqrt(g^{ij} d_i u d_j u)` with centered differences inside
/// and second-order one-sided differences on non-periodic ends.
pub fn gradient_norm(grid: &TubeGrid, field: &GridField) -> GridField {
    let u = &field.values;
    let d = grid.dim();
    let values = (0..grid.len())
        .into_par_iter()
        .map(|n| {
            let idx = grid.multi_index(n);
            let du: Vec<f64> = (0..d)
                .map(|a| {
                    let ax = grid.axes()[a];
                    match (grid.neighbor(n, a, -1), grid.neighbor(n, a, 1)) {
                        (Some(l), Some(r)) => (u[r] - u[l]) / (2.0 * ax.h),
                        (None, Some(r)) => {
                            let r2 = grid.neighbor(n, a, 2).expect("axis has at least 3 nodes");
                            (4.0 * (u[r] - u[n]) - (u[r2] - u[n])) / (2.0 * ax.h)
                        }
                        (Some(l), None) => {
                            let l2 = grid.neighbor(n, a, -2).expect("axis has at least 3 nodes");
                            (4.0 * (u[n] - u[l]) - (u[n] - u[l2])) / (2.0 * ax.h)
                        }
                        (None, None) => unreachable!("axis {a} of length {} at {idx:?}", ax.n),
                    }
                })
                .collect();
            let inv = &grid.metric(n).inv;
            let mut s = 0.0;
            for i in 0..d {
                for j in 0..d {
                    s += inv[(i, j)] * du[i] * du[j];
                }
            }
            s.max(0.0).sqrt()
        })
        .collect();
    GridField::new(values, FieldKind::Derived)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverParams {
    pub omega: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            omega: 0.7,
            tol: 1e-10,
            max_iter: 500,
            cg_tol: 1e-12,
            cg_max_iter: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub field: GridField,
    pub iterations: usize,
    /// Sup-norm of the strong residual after each iterate, the initial one first.
    pub history: Vec<f64>,
    pub residual: f64,
}

/// Damped Picard iteration: freeze the lower-order terms, solve for the
/// correction by preconditioned CG, relax by `omega`.
pub fn solve(problem: &EllipticProblem, params: &SolverParams) -> Result<SolveReport> {
    let grid = &problem.grid;
    let op = problem.operator();
    let active: Vec<bool> = grid.boundary_mask().iter().map(|b| !b).collect();
    let mut u = problem.boundary_values().values;
    let mut history = Vec::new();
    let sup = |v: &GridField| v.sup_norm();
    let mut res = sup(&problem.strong_residual(&GridField::new(u.clone(), FieldKind::Solution)));
    history.push(res);
    let mut it = 0;
    while res > params.tol {
        if it == params.max_iter || !res.is_finite() {
            return Err(Error::NoConvergence {
                iterations: it,
                last: res,
                history,
            });
        }
        // Correction form of the frozen linear problem:
        // S_II d = -(S u + M N(u))_I, then u += omega d.
        let low = problem.lower_order(&u);
        let su = op.apply_stiffness(&u);
        let rhs: Vec<f64> = (0..u.len()).map(|n| -su[n] - op.mass[n] * low[n]).collect();
        let mut d = vec![0.0; u.len()];
        pcg(&op.stiffness, &rhs, &mut d, &active, params.cg_tol, params.cg_max_iter);
        for n in 0..u.len() {
            if active[n] {
                u[n] += params.omega * d[n];
            }
        }
        it += 1;
        res = sup(&problem.strong_residual(&GridField::new(u.clone(), FieldKind::Solution)));
        history.push(res);
    }
    Ok(SolveReport {
        field: GridField::new(u, FieldKind::Solution),
        iterations: it,
        history,
        residual: res,
    })
}

/// `int (a <grad u, grad psi> + Lambda |grad u|^q psi - f(z, u) psi) dvol`.
///
/// Non-positive certifies `u` as a discrete subsolution against `psi`,
/// non-negative as a supersolution.
pub fn weak_residual(u: &GridField, psi: &GridField, problem: &EllipticProblem) -> Result<f64> {
    let grid = &problem.grid;
    for (n, &p) in psi.values.iter().enumerate() {
        if !(p >= 0.0) {
            return Err(Error::InvalidTestFunction(format!("psi = {p} < 0 at node {n}")));
        }
        if grid.is_boundary(n) && p != 0.0 {
            return Err(Error::InvalidTestFunction(format!(
                "psi = {p} on boundary node {n}"
            )));
        }
    }
    let op = problem.operator();
    let su = op.apply_stiffness(&u.values);
    let low = problem.lower_order(&u.values);
    let terms: Vec<f64> = (0..su.len())
        .map(|n| psi.values[n] * (su[n] + op.mass[n] * low[n]))
        .collect();
    Ok(pairwise_sum(&terms))
}
