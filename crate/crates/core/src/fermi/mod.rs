//! Fermi charts `Phi(x, y) = phi(x) + sum y^i E^i(x)` over curves and surfaces,
//! their pullback metrics and the volume distortion `lambda`.

mod atlas;

use nalgebra::{DMatrix, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{frenet_frame, Base, ManifoldSpec, H_GEO};
use crate::{Error, Result};

pub use atlas::TwoChartCircle;

/// Determinants at or below this are treated as degenerate.
pub const DET_MIN: f64 = 1e-12;

/// Inflation applied to sampled suprema.
pub const SAFETY: f64 = 1.05;

/// A Fermi chart of radius `eps` over a single base component.
#[derive(Debug, Clone)]
pub struct FermiChart {
    base: Base,
    eps: f64,
}

/// Point, tangents `d_a phi`, normals `E^i` and their first derivatives at a
/// base parameter, all embedded in `R^3` (plane curves use `z = 0`).
#[derive(Debug, Clone)]
pub struct FrameJet {
    pub point: Vector3<f64>,
    pub tangents: Vec<Vector3<f64>>,
    pub normals: Vec<Vector3<f64>>,
    /// `normal_derivs[a][i] = d_a E^i`.
    pub normal_derivs: Vec<Vec<Vector3<f64>>>,
}

/// How the Jacobian of `Phi` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricRoute {
    /// Differentiate the unit normals through the base derivatives.
    FrameJet,
    /// Fourth-order central differences of `Phi` itself.
    MapDifferences,
}

impl FermiChart {
    pub fn new(base: Base, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::EpsilonOutOfRange { eps });
        }
        Ok(Self { base, eps })
    }

    pub fn base(&self) -> &Base {
        &self.base
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(self.base.clone(), eps)
    }

    pub fn base_dim(&self) -> usize {
        self.base.base_dim()
    }

    pub fn codim(&self) -> usize {
        self.base.codim()
    }

    /// Dimension of the tube, equal to the ambient dimension.
    pub fn dim(&self) -> usize {
        self.base.ambient_dim()
    }

    pub fn domain(&self) -> Vec<(f64, f64)> {
        self.base.domain()
    }

    pub fn periodic(&self) -> Vec<bool> {
        self.base.periodic()
    }

    fn check_point(&self, x: &[f64], y: &[f64]) -> Result<()> {
        let bad = || Error::OutOfChart {
            x: x.to_vec(),
            y: y.to_vec(),
        };
        if x.len() != self.base_dim() || y.len() != self.codim() {
            return Err(bad());
        }
        for ((&xi, &(a, b)), &per) in x.iter().zip(&self.domain()).zip(&self.periodic()) {
            if !per && !(xi >= a && xi <= b) {
                return Err(bad());
            }
        }
        if !(norm(y) < self.eps) {
            return Err(bad());
        }
        Ok(())
    }

    /// Orthonormal normal frame and its derivatives at `x`.
    ///
    /// Plane curves use the left normal; space curves use `(N, N x T)`;
    /// surfaces use `d1 phi x d2 phi` normalized.
    pub fn jet(&self, x: &[f64]) -> Result<FrameJet> {
        match &self.base {
            Base::Plane(c) => {
                let t = x[0];
                let d1 = c.derivative(t, 1);
                let d2 = c.derivative(t, 2);
                let speed = d1.norm();
                let tan = d1 / speed;
                let dtan = (d2 - tan * tan.dot(&d2)) / speed;
                let p = c.position(t);
                Ok(FrameJet {
                    point: Vector3::new(p.x, p.y, 0.0),
                    tangents: vec![Vector3::new(d1.x, d1.y, 0.0)],
                    normals: vec![Vector3::new(-tan.y, tan.x, 0.0)],
                    normal_derivs: vec![vec![Vector3::new(-dtan.y, dtan.x, 0.0)]],
                })
            }
            Base::Space(c) => {
                let t = x[0];
                frenet_frame(c, t)?;
                let d1 = c.derivative(t, 1);
                let d2 = c.derivative(t, 2);
                let d3 = c.derivative(t, 3);
                let speed = d1.norm();
                let tan = d1 / speed;
                let dtan = (d2 - tan * tan.dot(&d2)) / speed;
                let cross = d1.cross(&d2);
                let dcross = d1.cross(&d3);
                let cn = cross.norm();
                let b = cross / cn;
                let db = (dcross - b * b.dot(&dcross)) / cn;
                let n = b.cross(&tan);
                let dn = db.cross(&tan) + b.cross(&dtan);
                Ok(FrameJet {
                    point: c.position(t),
                    tangents: vec![d1],
                    normals: vec![n, -b],
                    normal_derivs: vec![vec![dn, -db]],
                })
            }
            Base::Surface(s) => {
                let (u, v) = (x[0], x[1]);
                let e = s.unit_normal(u, v)?;
                Ok(FrameJet {
                    point: s.position(u, v),
                    tangents: vec![s.partial(u, v, 0), s.partial(u, v, 1)],
                    normals: vec![e],
                    normal_derivs: vec![
                        vec![s.normal_derivative(u, v, 0)?],
                        vec![s.normal_derivative(u, v, 1)?],
                    ],
                })
            }
        }
    }

    fn map_unchecked(&self, x: &[f64], y: &[f64]) -> Result<Vector3<f64>> {
        let jet = self.jet(x)?;
        Ok(jet
            .normals
            .iter()
            .zip(y)
            .fold(jet.point, |acc, (e, &yi)| acc + e * yi))
    }
}

fn norm(y: &[f64]) -> f64 {
    y.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `Phi(x, y)` as a point of the ambient space.
pub fn fermi_map(chart: &FermiChart, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    chart.check_point(x, y)?;
    let p = chart.map_unchecked(x, y)?;
    Ok(p.as_slice()[..chart.dim()].to_vec())
}

/// A sampled metric with its determinant and inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSample {
    pub g: DMatrix<f64>,
    pub det: f64,
    pub inv: DMatrix<f64>,
}

impl MetricSample {
    pub fn from_matrix(g: DMatrix<f64>, x: &[f64], y: &[f64]) -> Result<Self> {
        let g = (&g + g.transpose()) * 0.5;
        let det = g.determinant();
        if !(det > DET_MIN) {
            return Err(Error::DegenerateMetric {
                x: x.to_vec(),
                y: y.to_vec(),
                det,
            });
        }
        let inv = g.clone().try_inverse().ok_or_else(|| Error::DegenerateMetric {
            x: x.to_vec(),
            y: y.to_vec(),
            det,
        })?;
        Ok(Self { g, det, inv })
    }

    pub fn sqrt_det(&self) -> f64 {
        self.det.sqrt()
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }
}

fn jacobian_from_jet(chart: &FermiChart, jet: &FrameJet, y: &[f64]) -> DMatrix<f64> {
    let (m, k, n) = (chart.base_dim(), chart.codim(), chart.dim());
    let mut cols: Vec<Vector3<f64>> = Vec::with_capacity(m + k);
    for a in 0..m {
        let mut c = jet.tangents[a];
        for i in 0..k {
            c += jet.normal_derivs[a][i] * y[i];
        }
        cols.push(c);
    }
    cols.extend(jet.normals.iter().copied());
    DMatrix::from_fn(n, m + k, |r, c| cols[c][r])
}

fn jacobian_by_differences(chart: &FermiChart, x: &[f64], y: &[f64]) -> Result<DMatrix<f64>> {
    let (m, k, n) = (chart.base_dim(), chart.codim(), chart.dim());
    let h = H_GEO;
    let mut jac = DMatrix::zeros(n, m + k);
    for c in 0..m + k {
        let eval = |s: f64| -> Result<Vector3<f64>> {
            let mut xx = x.to_vec();
            let mut yy = y.to_vec();
            if c < m {
                xx[c] += s;
            } else {
                yy[c - m] += s;
            }
            chart.map_unchecked(&xx, &yy)
        };
        let d = (eval(-2.0 * h)? - eval(2.0 * h)? + (eval(h)? - eval(-h)?) * 8.0) / (12.0 * h);
        for r in 0..n {
            jac[(r, c)] = d[r];
        }
    }
    Ok(jac)
}

/// `g_ab = d_a Phi . d_b Phi`, with the Jacobian from the frame jet.
pub fn pullback_metric_direct(chart: &FermiChart, x: &[f64], y: &[f64]) -> Result<MetricSample> {
    pullback_metric_direct_with(chart, x, y, MetricRoute::FrameJet)
}

pub fn pullback_metric_direct_with(
    chart: &FermiChart,
    x: &[f64],
    y: &[f64],
    route: MetricRoute,
) -> Result<MetricSample> {
    chart.check_point(x, y)?;
    let jac = match route {
        MetricRoute::FrameJet => jacobian_from_jet(chart, &chart.jet(x)?, y),
        MetricRoute::MapDifferences => jacobian_by_differences(chart, x, y)?,
    };
    MetricSample::from_matrix(jac.transpose() * jac, x, y)
}

/// Coefficients of the expansion
/// `Phi*g = h + sum y^i (r^i + 2 t^i) + sum y^i y^j s^ij`.
///
/// `h` is `m x m` (base block), `r[i]` and `s[i][j]` are `m x m`, and
/// `t[i]` is `m x k` with `t[i][(a, j)] = d_a E^i . E^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct RtsTensors {
    pub h: DMatrix<f64>,
    pub r: Vec<DMatrix<f64>>,
    pub t: Vec<DMatrix<f64>>,
    pub s: Vec<Vec<DMatrix<f64>>>,
}

impl RtsTensors {
    /// Reassemble the full `n x n` metric at normal offset `y`.
    pub fn assemble(&self, y: &[f64]) -> DMatrix<f64> {
        let m = self.h.nrows();
        let k = self.r.len();
        let mut g = DMatrix::zeros(m + k, m + k);
        let mut base = self.h.clone();
        for i in 0..k {
            base += &self.r[i] * y[i];
            for j in 0..k {
                base += &self.s[i][j] * (y[i] * y[j]);
            }
        }
        g.view_mut((0, 0), (m, m)).copy_from(&base);
        for a in 0..m {
            for j in 0..k {
                let v: f64 = (0..k).map(|i| y[i] * self.t[i][(a, j)]).sum();
                g[(a, m + j)] = v;
                g[(m + j, a)] = v;
            }
        }
        for j in 0..k {
            g[(m + j, m + j)] = 1.0;
        }
        g
    }
}

pub fn rts_tensors(chart: &FermiChart, x: &[f64]) -> Result<RtsTensors> {
    let jet = chart.jet(x)?;
    let (m, k) = (chart.base_dim(), chart.codim());
    let dphi = &jet.tangents;
    let de = &jet.normal_derivs;
    let h = DMatrix::from_fn(m, m, |a, b| dphi[a].dot(&dphi[b]));
    let r = (0..k)
        .map(|i| DMatrix::from_fn(m, m, |a, b| dphi[a].dot(&de[b][i]) + dphi[b].dot(&de[a][i])))
        .collect();
    let t = (0..k)
        .map(|i| DMatrix::from_fn(m, k, |a, j| de[a][i].dot(&jet.normals[j])))
        .collect();
    let s = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    DMatrix::from_fn(m, m, |a, b| {
                        0.5 * (de[a][i].dot(&de[b][j]) + de[a][j].dot(&de[b][i]))
                    })
                })
                .collect()
        })
        .collect();
    Ok(RtsTensors { h, r, t, s })
}

/// The metric from curvature data alone: `(1 - kappa y)^2 dx^2 + dy^2` for
/// plane curves, the torsion-coupled form for space curves and
/// `I - 2y II + y^2 III + dy^2` for surfaces. Curves that are not unit speed
/// pick up the factor `|phi'|` on each `dx`.
pub fn pullback_metric_closed_form(chart: &FermiChart, x: &[f64], y: &[f64]) -> Result<MetricSample> {
    chart.check_point(x, y)?;
    let g = match chart.base() {
        Base::Plane(c) => {
            let s = c.speed(x[0]);
            let kappa = crate::geometry::plane_curvature(c, x[0]);
            let a = s * (1.0 - kappa * y[0]);
            DMatrix::from_row_slice(2, 2, &[a * a, 0.0, 0.0, 1.0])
        }
        Base::Space(c) => {
            let s = c.speed(x[0]);
            let f = frenet_frame(c, x[0])?;
            let (k, t) = (f.kappa, f.tau);
            let (y1, y2) = (y[0], y[1]);
            let gxx = s * s * ((1.0 - k * y1).powi(2) + t * t * (y1 * y1 + y2 * y2));
            DMatrix::from_row_slice(
                3,
                3,
                &[
                    gxx,
                    s * t * y2,
                    -s * t * y1,
                    s * t * y2,
                    1.0,
                    0.0,
                    -s * t * y1,
                    0.0,
                    1.0,
                ],
            )
        }
        Base::Surface(surf) => {
            let ff = crate::geometry::fundamental_forms(surf, x[0], x[1])?;
            let y = y[0];
            let blk = ff.first - ff.second * (2.0 * y) + ff.third * (y * y);
            let mut g = DMatrix::zeros(3, 3);
            for a in 0..2 {
                for b in 0..2 {
                    g[(a, b)] = blk[(a, b)];
                }
            }
            g[(2, 2)] = 1.0;
            g
        }
    };
    MetricSample::from_matrix(g, x, y)
}

/// `sqrt(det h')`, the density of the base metric in its coordinates.
pub fn base_density_mu(chart: &FermiChart, x: &[f64]) -> Result<f64> {
    let jet = chart.jet(x).or_else(|e| match (&chart.base, e) {
        // Curves without a Frenet frame still have a well-defined density.
        (Base::Space(c), Error::VanishingCurvature { .. }) => Ok(FrameJet {
            point: c.position(x[0]),
            tangents: vec![c.derivative(x[0], 1)],
            normals: vec![],
            normal_derivs: vec![],
        }),
        (_, e) => Err(e),
    })?;
    let m = jet.tangents.len();
    let h = DMatrix::from_fn(m, m, |a, b| jet.tangents[a].dot(&jet.tangents[b]));
    let det = h.determinant();
    if !(det > 0.0) {
        return Err(Error::DegenerateParametrization { at: x.to_vec(), det });
    }
    Ok(det.sqrt())
}

/// `lambda = sqrt(det Phi*g / det h)` where `h = h' + dy^2`.
pub fn volume_distortion(chart: &FermiChart, x: &[f64], y: &[f64]) -> Result<f64> {
    let g = pullback_metric_direct(chart, x, y)?;
    let mu = base_density_mu(chart, x)?;
    Ok(g.sqrt_det() / mu)
}

/// Base and normal sample points for the tube estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    pub base: Vec<Vec<f64>>,
    pub normal: Vec<Vec<f64>>,
}

impl SampleGrid {
    /// `n_base` points per base direction and `n_normal` radial levels inside
    /// the open ball of radius `eps`. `offset` in `(0, 1)` shifts every node
    /// within its cell, so distinct offsets give disjoint hold-out grids.
    pub fn regular(chart: &FermiChart, n_base: usize, n_normal: usize, offset: f64) -> Self {
        let dom = chart.domain();
        let axes: Vec<Vec<f64>> = dom
            .iter()
            .map(|&(a, b)| {
                (0..n_base)
                    .map(|i| a + (b - a) * (i as f64 + offset) / n_base as f64)
                    .collect()
            })
            .collect();
        let base = match axes.as_slice() {
            [u] => u.iter().map(|&x| vec![x]).collect(),
            [u, v] => u
                .iter()
                .flat_map(|&a| v.iter().map(move |&b| vec![a, b]))
                .collect(),
            _ => unreachable!("base dimension is 1 or 2"),
        };
        let eps = chart.eps();
        let normal = match chart.codim() {
            1 => (0..2 * n_normal)
                .map(|j| vec![eps * (2.0 * (j as f64 + offset) / (2 * n_normal) as f64 - 1.0)])
                .collect(),
            _ => {
                let n_ang = 4 * n_normal.max(2);
                let mut pts = Vec::new();
                for j in 0..n_normal {
                    let r = eps * (j as f64 + offset) / n_normal as f64;
                    for l in 0..n_ang {
                        let a = std::f64::consts::TAU * (l as f64 + offset) / n_ang as f64;
                        pts.push(vec![r * a.cos(), r * a.sin()]);
                    }
                }
                pts
            }
        };
        Self { base, normal }
    }

    pub fn len(&self) -> usize {
        self.base.len() * self.normal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `K1 = 1.05 * max |lambda - 1| / |y|` over the grid (points with `y = 0` skipped).
pub fn estimate_k1(chart: &FermiChart, grid: &SampleGrid) -> Result<f64> {
    let ratios: Vec<Result<Option<f64>>> = grid
        .base
        .par_iter()
        .flat_map_iter(|x| {
            grid.normal.iter().map(move |y| {
                let ny = norm(y);
                if ny == 0.0 {
                    return Ok(None);
                }
                let lam = volume_distortion(chart, x, y)?;
                Ok(Some((lam - 1.0).abs() / ny))
            })
        })
        .collect();
    let mut best: Option<f64> = None;
    for r in ratios {
        if let Some(v) = r? {
            best = Some(best.map_or(v, |b: f64| b.max(v)));
        }
    }
    best.map(|b| SAFETY * b).ok_or(Error::EmptySample)
}

/// `min{1, 1/(2 K1)}`.
pub fn epsilon1(k1: f64) -> f64 {
    if k1 <= 0.0 {
        1.0
    } else {
        (0.5 / k1).min(1.0)
    }
}

/// Serializable description of a chart: a named base, an optional parameter
/// window and the radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartDescription {
    pub base: ManifoldSpec,
    pub eps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Vec<(f64, f64)>>,
}

/// `ChartDescription` together with the values derived from the base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSummary {
    pub base: ManifoldSpec,
    pub k: usize,
    pub eps: f64,
    pub domain: Vec<(f64, f64)>,
    pub periodic: Vec<bool>,
}

impl ChartDescription {
    pub fn build(&self) -> Result<FermiChart> {
        let manifold = self.base.build()?;
        let base = manifold.single()?;
        let base = match &self.window {
            Some(w) => base.restrict(w)?,
            None => base.clone(),
        };
        FermiChart::new(base, self.eps)
    }

    pub fn summary(&self) -> Result<ChartSummary> {
        let chart = self.build()?;
        Ok(ChartSummary {
            base: self.base.clone(),
            k: chart.codim(),
            eps: chart.eps(),
            domain: chart.domain(),
            periodic: chart.periodic(),
        })
    }
}

/// One row of an exported metric grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Upper triangle of `g`, row-major.
    pub g: Vec<f64>,
    pub lambda: f64,
}

pub fn metric_rows(chart: &FermiChart, grid: &SampleGrid) -> Result<Vec<MetricRow>> {
    let rows: Vec<Result<MetricRow>> = grid
        .base
        .par_iter()
        .flat_map_iter(|x| {
            grid.normal.iter().map(move |y| {
                let m = pullback_metric_direct(chart, x, y)?;
                let n = m.dim();
                let g = (0..n)
                    .flat_map(|i| (i..n).map(move |j| (i, j)))
                    .map(|(i, j)| m.g[(i, j)])
                    .collect();
                let lambda = m.sqrt_det() / base_density_mu(chart, x)?;
                Ok(MetricRow {
                    x: x.clone(),
                    y: y.clone(),
                    g,
                    lambda,
                })
            })
        })
        .collect();
    rows.into_iter().collect()
}

/// CSV with columns `x1.., y1.., g_ij (i <= j).., lambda`.
pub fn write_metric_csv<W: std::io::Write>(rows: &[MetricRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if let Some(first) = rows.first() {
        let n = first.x.len() + first.y.len();
        let mut header: Vec<String> = (1..=first.x.len()).map(|i| format!("x{i}")).collect();
        header.extend((1..=first.y.len()).map(|i| format!("y{i}")));
        for i in 0..n {
            for j in i..n {
                header.push(format!("g{}{}", i + 1, j + 1));
            }
        }
        header.push("lambda".into());
        w.write_record(&header).map_err(csv_err)?;
    }
    for r in rows {
        let rec: Vec<String> = r
            .x
            .iter()
            .chain(&r.y)
            .chain(&r.g)
            .chain(std::iter::once(&r.lambda))
            .map(|v| format!("{v:e}"))
            .collect();
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}
