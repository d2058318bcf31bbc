use rayon::prelude::*;

use super::grid::{metric_at, TubeGrid};
use super::sparse::Csr;
use crate::analysis::Weight;
use crate::Result;

/// `-div_g(a grad_g u)` as a symmetric stiffness matrix `S` and a lumped
/// mass `M`, so that the strong operator is `M^{-1} S`.
///
/// `S` is the Hessian of the discrete energy
/// `sum A^{ii}_face (d_i u)^2 + 2 sum_{i<j} A^{ij}_cell D_i u D_j u` with
/// `A = a sqrt(det g) g^{-1}`: diagonal terms on cell faces, mixed terms at
/// the centers of the coordinate plaquettes.
#[derive(Debug, Clone)]
pub struct DivergenceOperator {
    pub stiffness: Csr,
    pub mass: Vec<f64>,
}

impl DivergenceOperator {
    pub fn apply_stiffness(&self, u: &[f64]) -> Vec<f64> {
        self.stiffness.mul(u)
    }

    /// Strong form `(S u)_n / M_n`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.stiffness
            .mul(u)
            .iter()
            .zip(&self.mass)
            .map(|(s, m)| s / m)
            .collect()
    }
}

/// `a sqrt(det g) g^{ij}` at the point with fractional multi-index `idx`.
fn flux_coefficient(grid: &TubeGrid, weight: &Weight, idx: &[f64], i: usize, j: usize) -> Result<f64> {
    let (x, y) = grid.point(idx);
    let g = metric_at(grid.chart(), &x, &y)?;
    Ok(weight.eval(&x, &y) * g.sqrt_det() * g.inv[(i, j)])
}

pub fn assemble_divergence_operator(grid: &TubeGrid, weight: &Weight) -> Result<DivergenceOperator> {
    let d = grid.dim();
    let n = grid.len();
    let h: Vec<f64> = grid.axes().iter().map(|a| a.h).collect();
    let vol = grid.cell_volume();
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect();

    // face[i][n]: conductance of the face between n and n + e_i.
    let faces: Vec<Vec<Option<f64>>> = (0..d)
        .map(|i| {
            (0..n)
                .into_par_iter()
                .map(|node| {
                    if grid.neighbor(node, i, 1).is_none() {
                        return Ok(None);
                    }
                    let mut idx: Vec<f64> = grid.multi_index(node).iter().map(|&v| v as f64).collect();
                    idx[i] += 0.5;
                    Ok(Some(flux_coefficient(grid, weight, &idx, i, i)? * vol / (h[i] * h[i])))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    // cell[p][n]: mixed coefficient of the plaquette spanned from n by e_i, e_j.
    let cells: Vec<Vec<Option<f64>>> = pairs
        .iter()
        .map(|&(i, j)| {
            (0..n)
                .into_par_iter()
                .map(|node| {
                    let ni = grid.neighbor(node, i, 1);
                    if ni.is_none() || grid.neighbor(node, j, 1).is_none() {
                        return Ok(None);
                    }
                    let mut idx: Vec<f64> = grid.multi_index(node).iter().map(|&v| v as f64).collect();
                    idx[i] += 0.5;
                    idx[j] += 0.5;
                    Ok(Some(flux_coefficient(grid, weight, &idx, i, j)? * vol))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|node| {
            let mut row = Vec::with_capacity(1 + 2 * d + 9 * pairs.len());
            for i in 0..d {
                if let (Some(c), Some(nb)) = (faces[i][node], grid.neighbor(node, i, 1)) {
                    row.push((node, c));
                    row.push((nb, -c));
                }
                if let Some(nb) = grid.neighbor(node, i, -1) {
                    if let Some(c) = faces[i][nb] {
                        row.push((node, c));
                        row.push((nb, -c));
                    }
                }
            }
            for (p, &(i, j)) in pairs.iter().enumerate() {
                // Plaquettes with `node` at corner (si, sj), lower corner at node - (si, sj).
                for si in 0..2i64 {
                    for sj in 0..2i64 {
                        let Some(lower) = grid
                            .neighbor(node, i, -si)
                            .and_then(|l| grid.neighbor(l, j, -sj))
                        else {
                            continue;
                        };
                        let Some(c) = cells[p][lower] else { continue };
                        let corner = |ci: i64, cj: i64| {
                            grid.neighbor(lower, i, ci)
                                .and_then(|v| grid.neighbor(v, j, cj))
                                .expect("plaquette corners exist")
                        };
                        // D_i u = sum_corners di(c) u_c, likewise D_j.
                        let di = |ci: i64, _cj: i64| if ci == 1 { 0.5 / h[i] } else { -0.5 / h[i] };
                        let dj = |_ci: i64, cj: i64| if cj == 1 { 0.5 / h[j] } else { -0.5 / h[j] };
                        for qi in 0..2i64 {
                            for qj in 0..2i64 {
                                let v = c * (di(qi, qj) * dj(si, sj) + dj(qi, qj) * di(si, sj));
                                row.push((corner(qi, qj), v));
                            }
                        }
                    }
                }
            }
            row
        })
        .collect();
    let mass = (0..n).map(|node| grid.mass(node)).collect();
    Ok(DivergenceOperator {
        stiffness: Csr::from_rows(rows),
        mass,
    })
}
