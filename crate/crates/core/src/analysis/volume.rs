use petgraph::algo::dijkstra;
use petgraph::graph::{NodeIndex, UnGraph};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::Base;
use crate::quadrature::{pairwise_sum, UnitRule};
use crate::{Error, Result};

/// Stencil reach of the surface graph: neighbors `(i, j)` with
/// `|i|, |j| <= STENCIL` and `gcd(i, j) = 1`.
const STENCIL: i64 = 4;
/// Sub-samples per cell side when measuring sub-level sets on a surface.
const CELL_SPLIT: usize = 4;
/// Mesh edges may not exceed `R / MESH_RATIO`.
pub const MESH_RATIO: f64 = 10.0;
/// Lower clamp on the fitted exponent (compact bases saturate).
pub const GAMMA_FLOOR: f64 = 1e-3;

fn axis_nodes(lo: f64, hi: f64, n: usize, periodic: bool) -> Vec<f64> {
    let count = if periodic { n } else { n + 1 };
    (0..count).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

fn wrap(x: f64, lo: f64, hi: f64, periodic: bool) -> f64 {
    if periodic {
        lo + (x - lo).rem_euclid(hi - lo)
    } else {
        x.clamp(lo, hi)
    }
}

/// Locate `x` in a uniform axis: cell index and fractional position.
fn locate(x: f64, lo: f64, hi: f64, n: usize) -> (usize, f64) {
    let s = (x - lo) / (hi - lo) * n as f64;
    let i = (s.floor() as i64).clamp(0, n as i64 - 1) as usize;
    (i, (s - i as f64).clamp(0.0, 1.0))
}

#[derive(Debug, Clone)]
enum Layout {
    Chain {
        /// Node parameters, increasing; the base point is one of them.
        xs: Vec<f64>,
        /// Arc length of each edge `(i, i + 1)` (the closing edge last when periodic).
        lengths: Vec<f64>,
    },
    Grid {
        /// Sub-cell areas, `CELL_SPLIT^2` per cell, cells row-major in `u`.
        pieces: Vec<f64>,
    },
}

/// Graph shortest-path distance from a base point, sampled on a mesh of the
/// parameter box.
#[derive(Debug, Clone)]
pub struct DistanceField {
    domain: Vec<(f64, f64)>,
    periodic: Vec<bool>,
    cells: Vec<usize>,
    dist: Vec<f64>,
    max_edge: f64,
    layout: Layout,
}

impl DistanceField {
    /// Longest mesh edge in the induced metric.
    pub fn max_edge(&self) -> f64 {
        self.max_edge
    }

    fn counts(&self) -> Vec<usize> {
        self.cells
            .iter()
            .zip(&self.periodic)
            .map(|(&n, &p)| if p { n } else { n + 1 })
            .collect()
    }

    fn node(&self, idx: &[usize]) -> f64 {
        let counts = self.counts();
        match idx.len() {
            1 => self.dist[idx[0] % counts[0]],
            _ => self.dist[(idx[0] % counts[0]) * counts[1] + idx[1] % counts[1]],
        }
    }

    /// Distance at base parameters `x`, interpolated (multi-)linearly.
    pub fn distance_at(&self, x: &[f64]) -> f64 {
        let loc: Vec<(usize, f64)> = (0..self.cells.len().min(x.len()))
            .map(|a| {
                let (lo, hi) = self.domain[a];
                locate(wrap(x[a], lo, hi, self.periodic[a]), lo, hi, self.cells[a])
            })
            .collect();
        if let Layout::Chain { xs, .. } = &self.layout {
            let (lo, hi) = self.domain[0];
            let x = wrap(x[0], lo, hi, self.periodic[0]);
            let n = xs.len();
            let i = xs.partition_point(|&v| v <= x).saturating_sub(1);
            let (a, b) = if i + 1 < n { (xs[i], xs[i + 1]) } else { (xs[i], hi) };
            let s = if b > a { ((x - a) / (b - a)).clamp(0.0, 1.0) } else { 0.0 };
            return (1.0 - s) * self.dist[i] + s * self.dist[(i + 1) % n];
        }
        match loc.as_slice() {
            [(i, s), (j, t)] => {
                (1.0 - s) * (1.0 - t) * self.node(&[*i, *j])
                    + s * (1.0 - t) * self.node(&[i + 1, *j])
                    + (1.0 - s) * t * self.node(&[*i, j + 1])
                    + s * t * self.node(&[i + 1, j + 1])
            }
            _ => unreachable!("bases have dimension 1 or 2"),
        }
    }

    /// Measure of the whole mesh.
    pub fn total_volume(&self) -> f64 {
        self.volume_below(f64::INFINITY)
    }

    fn volume_below(&self, r: f64) -> f64 {
        match &self.layout {
            Layout::Chain { lengths, .. } => {
                let n = self.dist.len();
                let terms: Vec<f64> = lengths
                    .iter()
                    .enumerate()
                    .map(|(e, &l)| {
                        let (da, db) = (self.dist[e], self.dist[(e + 1) % n]);
                        if r.is_infinite() {
                            return l;
                        }
                        let covered = ((r - da) / l).max(0.0) + ((r - db) / l).max(0.0);
                        l * covered.min(1.0)
                    })
                    .collect();
                pairwise_sum(&terms)
            }
            Layout::Grid { pieces } => {
                let [nu, nv] = [self.cells[0], self.cells[1]];
                let m = CELL_SPLIT;
                let per_cell: Vec<f64> = (0..nu * nv)
                    .into_par_iter()
                    .map(|c| {
                        let (i, j) = (c / nv, c % nv);
                        let d = [
                            self.node(&[i, j]),
                            self.node(&[i + 1, j]),
                            self.node(&[i, j + 1]),
                            self.node(&[i + 1, j + 1]),
                        ];
                        let mut acc = 0.0;
                        for a in 0..m {
                            for b in 0..m {
                                let s = (a as f64 + 0.5) / m as f64;
                                let t = (b as f64 + 0.5) / m as f64;
                                let di = (1.0 - s) * (1.0 - t) * d[0]
                                    + s * (1.0 - t) * d[1]
                                    + (1.0 - s) * t * d[2]
                                    + s * t * d[3];
                                if di < r {
                                    acc += pieces[c * m * m + a * m + b];
                                }
                            }
                        }
                        acc
                    })
                    .collect();
                pairwise_sum(&per_cell)
            }
        }
    }

    /// Measure of `{d < radius}`.
    pub fn ball_volume(&self, radius: f64) -> Result<f64> {
        let limit = radius / MESH_RATIO;
        if self.max_edge > limit {
            return Err(Error::MeshTooCoarse {
                edge: self.max_edge,
                limit,
            });
        }
        Ok(self.volume_below(radius))
    }
}

fn curve_speed(base: &Base, x: f64) -> f64 {
    match base {
        Base::Plane(c) => c.speed(x),
        Base::Space(c) => c.speed(x),
        Base::Surface(_) => unreachable!("curve bases only"),
    }
}

fn chain_field(base: &Base, pbar: f64, spacing: f64) -> Result<DistanceField> {
    let (lo, hi) = base.domain()[0];
    let periodic = base.periodic()[0];
    let rule = UnitRule::gauss_legendre(4);
    let probe = 4096;
    let rough: f64 = (0..probe)
        .map(|i| {
            let a = lo + (hi - lo) * i as f64 / probe as f64;
            rule.integrate(a, a + (hi - lo) / probe as f64, |x| curve_speed(base, x))
        })
        .sum();
    let n = ((rough / spacing).ceil() as usize).max(2);
    let mut xs = axis_nodes(lo, hi, n, periodic);
    let p = wrap(pbar, lo, hi, periodic);
    let (cell, _) = locate(p, lo, hi, n);
    // The base point becomes a node by splitting its cell.
    let pi = cell + 1;
    xs.insert(pi, p);
    let count = xs.len();
    let edges = if periodic { count } else { count - 1 };
    let lengths: Vec<f64> = (0..edges)
        .map(|e| {
            let a = xs[e];
            let b = if e + 1 == count { hi } else { xs[e + 1] };
            rule.integrate(a, b, |x| curve_speed(base, x))
        })
        .collect();
    let mut fwd = vec![f64::INFINITY; count];
    fwd[pi] = 0.0;
    let steps = if periodic { count } else { count - pi };
    for s in 1..steps {
        let (prev, cur) = ((pi + s - 1) % count, (pi + s) % count);
        fwd[cur] = fwd[prev] + lengths[prev];
    }
    let mut back = vec![f64::INFINITY; count];
    back[pi] = 0.0;
    let steps = if periodic { count } else { pi + 1 };
    for s in 1..steps {
        let cur = (pi + count - s) % count;
        back[cur] = back[(cur + 1) % count] + lengths[cur];
    }
    let dist: Vec<f64> = fwd.iter().zip(&back).map(|(a, b)| a.min(*b)).collect();
    let max_edge = lengths.iter().copied().fold(0.0, f64::max);
    Ok(DistanceField {
        domain: vec![(lo, hi)],
        periodic: vec![periodic],
        cells: vec![count - usize::from(!periodic)],
        dist,
        max_edge,
        layout: Layout::Chain { xs, lengths },
    })
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

fn grid_field(base: &Base, pbar: &[f64], spacing: f64) -> Result<DistanceField> {
    let Base::Surface(surf) = base else {
        unreachable!("surface bases only")
    };
    let dom = surf.domain();
    let per = surf.periodicity();
    let mut cells = [0usize; 2];
    for a in 0..2 {
        let (lo, hi) = dom[a];
        let mut top: f64 = 0.0;
        for i in 0..=16 {
            for j in 0..=16 {
                let u = dom[0].0 + (dom[0].1 - dom[0].0) * i as f64 / 16.0;
                let v = dom[1].0 + (dom[1].1 - dom[1].0) * j as f64 / 16.0;
                top = top.max(surf.partial(u, v, a).norm());
            }
        }
        cells[a] = (((hi - lo) * top * 1.05 / spacing).ceil() as usize).max(4);
    }
    let axes: Vec<Vec<f64>> = (0..2)
        .map(|a| axis_nodes(dom[a].0, dom[a].1, cells[a], per[a]))
        .collect();
    let (nu, nv) = (axes[0].len(), axes[1].len());
    let step = [
        (dom[0].1 - dom[0].0) / cells[0] as f64,
        (dom[1].1 - dom[1].0) / cells[1] as f64,
    ];
    let pos = |i: i64, j: i64, s: f64, t: f64| {
        surf.position(
            dom[0].0 + (i as f64 + s) * step[0],
            dom[1].0 + (j as f64 + t) * step[1],
        )
    };
    let seg = |i: i64, j: i64, di: i64, dj: i64| {
        let parts = 2 * di.abs().max(dj.abs());
        let mut len = 0.0;
        let mut prev = pos(i, j, 0.0, 0.0);
        for p in 1..=parts {
            let f = p as f64 / parts as f64;
            let next = pos(i, j, di as f64 * f, dj as f64 * f);
            len += (next - prev).norm();
            prev = next;
        }
        len
    };

    let mut stencil = Vec::new();
    for di in 0..=STENCIL {
        for dj in -STENCIL..=STENCIL {
            if (di == 0 && dj <= 0) || gcd(di, dj) != 1 {
                continue;
            }
            stencil.push((di, dj));
        }
    }
    let index = |i: i64, j: i64| -> Option<usize> {
        let fix = |k: i64, n: usize, p: bool| {
            if p {
                Some(k.rem_euclid(n as i64) as usize)
            } else if k >= 0 && (k as usize) < n {
                Some(k as usize)
            } else {
                None
            }
        };
        Some(fix(i, nu, per[0])? * nv + fix(j, nv, per[1])?)
    };
    let edges: Vec<(usize, usize, f64)> = (0..nu * nv)
        .into_par_iter()
        .flat_map_iter(|n| {
            let (i, j) = ((n / nv) as i64, (n % nv) as i64);
            stencil
                .iter()
                .filter_map(move |&(di, dj)| index(i + di, j + dj).map(|m| (n, m, di, dj)))
                .map(move |(n, m, di, dj)| (n, m, seg(i, j, di, dj)))
                .collect::<Vec<_>>()
        })
        .collect();
    let mut max_edge: f64 = 0.0;
    for i in 0..nu as i64 {
        for j in 0..nv as i64 {
            if index(i + 1, j).is_some() {
                max_edge = max_edge.max(seg(i, j, 1, 0));
            }
            if index(i, j + 1).is_some() {
                max_edge = max_edge.max(seg(i, j, 0, 1));
            }
        }
    }

    let mut graph = UnGraph::<(), f64>::with_capacity(nu * nv + 1, edges.len() + 64);
    for _ in 0..nu * nv {
        graph.add_node(());
    }
    for &(a, b, w) in &edges {
        if a != b {
            graph.add_edge(NodeIndex::new(a), NodeIndex::new(b), w);
        }
    }
    // A virtual source wired to the nodes around the base point.
    let source = graph.add_node(());
    let pu = wrap(pbar[0], dom[0].0, dom[0].1, per[0]);
    let pv = wrap(pbar[1], dom[1].0, dom[1].1, per[1]);
    let p_emb = surf.position(pu, pv);
    let (ci, _) = locate(pu, dom[0].0, dom[0].1, cells[0]);
    let (cj, _) = locate(pv, dom[1].0, dom[1].1, cells[1]);
    for di in -STENCIL..=STENCIL + 1 {
        for dj in -STENCIL..=STENCIL + 1 {
            let (i, j) = (ci as i64 + di, cj as i64 + dj);
            if let Some(m) = index(i, j) {
                let q = pos(i, j, 0.0, 0.0);
                graph.add_edge(source, NodeIndex::new(m), (q - p_emb).norm());
            }
        }
    }
    let found = dijkstra(&graph, source, None, |e| *e.weight());
    let mut dist = vec![f64::INFINITY; nu * nv];
    for (node, d) in found {
        if node != source {
            dist[node.index()] = d;
        }
    }

    let m = CELL_SPLIT;
    let pieces: Vec<f64> = (0..cells[0] * cells[1])
        .into_par_iter()
        .flat_map_iter(|c| {
            let (i, j) = (c / cells[1], c % cells[1]);
            (0..m * m)
                .map(|ab| {
                    let (a, b) = (ab / m, ab % m);
                    let u = dom[0].0 + (i as f64 + (a as f64 + 0.5) / m as f64) * step[0];
                    let v = dom[1].0 + (j as f64 + (b as f64 + 0.5) / m as f64) * step[1];
                    surf.raw_normal(u, v).norm() * step[0] * step[1] / (m * m) as f64
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(DistanceField {
        domain: dom.to_vec(),
        periodic: per.to_vec(),
        cells: cells.to_vec(),
        dist,
        max_edge,
        layout: Layout::Grid { pieces },
    })
}

/// Graph distance from `pbar` on a mesh whose edges are at most about `spacing`.
pub fn geodesic_distance_field(base: &Base, pbar: &[f64], spacing: f64) -> Result<DistanceField> {
    if pbar.len() != base.base_dim() {
        return Err(Error::InvalidInput(format!(
            "base point needs {} coordinates",
            base.base_dim()
        )));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::InvalidInput(format!("mesh spacing {spacing} must be positive")));
    }
    match base.base_dim() {
        1 => chain_field(base, pbar[0], spacing),
        _ => grid_field(base, pbar, spacing),
    }
}

/// `vol(B(pbar, radius))` on a mesh of spacing `radius / 20`.
pub fn geodesic_ball_volume(base: &Base, pbar: &[f64], radius: f64) -> Result<f64> {
    geodesic_distance_field(base, pbar, radius / (2.0 * MESH_RATIO))?.ball_volume(radius)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub c1: f64,
    pub gamma: f64,
    pub r0: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
    /// Slope of the fit before clamping to [`GAMMA_FLOOR`].
    pub gamma_fit: f64,
    pub radii: Vec<f64>,
    pub volumes: Vec<f64>,
}

impl GrowthFit {
    pub fn bound(&self, radius: f64) -> f64 {
        self.c1 * radius.powf(self.gamma)
    }
}

/// Least-squares fit of `log vol` against `log R`, with `C1` raised until the
/// bound holds at every fitted radius.
pub fn volume_growth_fit(base: &Base, pbar: &[f64], radii: &[f64], r0: f64) -> Result<GrowthFit> {
    if radii.len() < 2 {
        return Err(Error::InvalidInput("growth fit needs at least two radii".into()));
    }
    if radii[0] <= r0 || radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput(
            "radii must be increasing and exceed R0".into(),
        ));
    }
    let field = geodesic_distance_field(base, pbar, radii[0] / (2.0 * MESH_RATIO))?;
    let volumes = radii
        .iter()
        .map(|&r| field.ball_volume(r))
        .collect::<Result<Vec<_>>>()?;
    let lx: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ly: Vec<f64> = volumes.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let gamma_fit = sxy / sxx;
    let intercept = my - gamma_fit * mx;
    let residual = (lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - gamma_fit * x).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let gamma = gamma_fit.max(GAMMA_FLOOR);
    let c1 = radii
        .iter()
        .zip(&volumes)
        .map(|(r, v)| v / r.powf(gamma))
        .fold(intercept.exp(), f64::max);
    Ok(GrowthFit {
        c1,
        gamma,
        r0,
        residual,
        gamma_fit,
        radii: radii.to_vec(),
        volumes,
    })
}
