use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fermi::{pullback_metric_closed_form, pullback_metric_direct, FermiChart, MetricSample};
use crate::quadrature::pairwise_sum;
use crate::{Error, Result};

/// Keeps the corners of the square cross-section strictly inside the chart.
const CORNER_MARGIN: f64 = 1e-9;

/// Metric in chart coordinates, preferring the closed form.
pub fn metric_at(chart: &FermiChart, x: &[f64], y: &[f64]) -> Result<MetricSample> {
    match pullback_metric_closed_form(chart, x, y) {
        Err(Error::UnsupportedBase(_)) | Err(Error::VanishingCurvature { .. }) => {
            pullback_metric_direct(chart, x, y)
        }
        other => other,
    }
}

/// Uniform nodes `lo + i h`, `i < n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub h: f64,
    pub n: usize,
    pub periodic: bool,
}

impl Axis {
    pub fn coord(&self, i: usize) -> f64 {
        self.lo + self.h * i as f64
    }

    pub fn face(&self, i: usize) -> f64 {
        self.lo + self.h * (i as f64 + 0.5)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Base window; the whole parameter domain when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Vec<(f64, f64)>>,
    /// Nodes per base direction.
    pub nx: usize,
    /// Nodes per normal direction; must be even so that no node sits at `y = 0`.
    pub ny: usize,
    /// Half-width of the square cross-section; `eps / sqrt(k)` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
}

/// Structured grid on `window x [-w, w]^k` in Fermi coordinates.
#[derive(Debug, Clone)]
pub struct TubeGrid {
    chart: FermiChart,
    axes: Vec<Axis>,
    strides: Vec<usize>,
    len: usize,
    metrics: Vec<MetricSample>,
    boundary: Vec<bool>,
}

impl TubeGrid {
    pub fn new(chart: &FermiChart, spec: &GridSpec) -> Result<Self> {
        let chart = match &spec.window {
            Some(w) => FermiChart::new(chart.base().restrict(w)?, chart.eps())?,
            None => chart.clone(),
        };
        let (m, k) = (chart.base_dim(), chart.codim());
        if spec.nx < 3 || spec.ny < 2 || !spec.ny.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "grid needs nx >= 3 and an even ny >= 2 (got {}, {})",
                spec.nx, spec.ny
            )));
        }
        let w = spec
            .half_width
            .unwrap_or(chart.eps() / (k as f64).sqrt() * (1.0 - CORNER_MARGIN));
        if !(w > 0.0 && w * (k as f64).sqrt() < chart.eps()) {
            return Err(Error::InvalidInput(format!(
                "cross-section half-width {w} leaves the tube of radius {}",
                chart.eps()
            )));
        }
        let mut axes = Vec::with_capacity(m + k);
        for ((a, b), per) in chart.domain().into_iter().zip(chart.periodic()) {
            let h = if per {
                (b - a) / spec.nx as f64
            } else {
                (b - a) / (spec.nx - 1) as f64
            };
            axes.push(Axis {
                lo: a,
                h,
                n: spec.nx,
                periodic: per,
            });
        }
        for _ in 0..k {
            axes.push(Axis {
                lo: -w,
                h: 2.0 * w / (spec.ny - 1) as f64,
                n: spec.ny,
                periodic: false,
            });
        }
        let mut strides = vec![1; axes.len()];
        for a in (0..axes.len() - 1).rev() {
            strides[a] = strides[a + 1] * axes[a + 1].n;
        }
        let len = strides[0] * axes[0].n;
        let mut grid = Self {
            chart,
            axes,
            strides,
            len,
            metrics: Vec::new(),
            boundary: Vec::new(),
        };
        grid.boundary = (0..len)
            .map(|n| {
                grid.multi_index(n)
                    .iter()
                    .zip(&grid.axes)
                    .any(|(&i, ax)| !ax.periodic && (i == 0 || i + 1 == ax.n))
            })
            .collect();
        grid.metrics = (0..len)
            .into_par_iter()
            .map(|n| {
                let (x, y) = grid.coords(n);
                metric_at(&grid.chart, &x, &y)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(grid)
    }

    pub fn chart(&self) -> &FermiChart {
        &self.chart
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn base_dim(&self) -> usize {
        self.chart.base_dim()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn multi_index(&self, n: usize) -> Vec<usize> {
        self.strides
            .iter()
            .zip(&self.axes)
            .map(|(&s, ax)| (n / s) % ax.n)
            .collect()
    }

    /// Linear index of a (possibly out-of-range) multi-index, wrapping periodic axes.
    pub fn index(&self, idx: &[i64]) -> Option<usize> {
        let mut n = 0;
        for ((&i, ax), &s) in idx.iter().zip(&self.axes).zip(&self.strides) {
            let len = ax.n as i64;
            let i = if ax.periodic {
                i.rem_euclid(len)
            } else if (0..len).contains(&i) {
                i
            } else {
                return None;
            };
            n += i as usize * s;
        }
        Some(n)
    }

    /// Neighbor of `n` shifted by `offset` along `axis`.
    pub fn neighbor(&self, n: usize, axis: usize, offset: i64) -> Option<usize> {
        let mut idx: Vec<i64> = self.multi_index(n).iter().map(|&i| i as i64).collect();
        idx[axis] += offset;
        self.index(&idx)
    }

    /// Chart coordinates of the point at fractional multi-index `idx`.
    pub fn point(&self, idx: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self.base_dim();
        let z: Vec<f64> = idx
            .iter()
            .zip(&self.axes)
            .map(|(&i, ax)| ax.lo + ax.h * i)
            .collect();
        (z[..m].to_vec(), z[m..].to_vec())
    }

    /// Chart coordinates `(x, y)` of node `n`.
    pub fn coords(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        let idx: Vec<f64> = self.multi_index(n).iter().map(|&i| i as f64).collect();
        self.point(&idx)
    }

    pub fn is_boundary(&self, n: usize) -> bool {
        self.boundary[n]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn metric(&self, n: usize) -> &MetricSample {
        &self.metrics[n]
    }

    pub fn sqrt_det(&self, n: usize) -> f64 {
        self.metrics[n].sqrt_det()
    }

    /// Coordinate volume of one grid cell.
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.h).product()
    }

    /// Lumped mass `sqrt(det g) dV` at node `n` (trapezoid weights on
    /// non-periodic ends).
    pub fn mass(&self, n: usize) -> f64 {
        let mut w = self.cell_volume() * self.sqrt_det(n);
        for (&i, ax) in self.multi_index(n).iter().zip(&self.axes) {
            if !ax.periodic && (i == 0 || i + 1 == ax.n) {
                w *= 0.5;
            }
        }
        w
    }

    /// Largest spacing over all axes.
    pub fn max_spacing(&self) -> f64 {
        self.axes.iter().map(|a| a.h).fold(0.0, f64::max)
    }

    pub fn field_from(&self, kind: FieldKind, f: impl Fn(&[f64], &[f64]) -> f64 + Sync) -> GridField {
        let values = (0..self.len)
            .into_par_iter()
            .map(|n| {
                let (x, y) = self.coords(n);
                f(&x, &y)
            })
            .collect();
        GridField { values, kind }
    }

    /// `sum_n mass(n) v(n)` in node order.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        let terms: Vec<f64> = values.iter().enumerate().map(|(n, v)| self.mass(n) * v).collect();
        pairwise_sum(&terms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    Solution,
    TestFunction,
    Residual,
    Derived,
}

/// One value per grid node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub values: Vec<f64>,
    pub kind: FieldKind,
}

impl GridField {
    pub fn new(values: Vec<f64>, kind: FieldKind) -> Self {
        Self { values, kind }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `int |v| sqrt(det g)` over the grid.
    pub fn l1_norm(&self, grid: &TubeGrid) -> f64 {
        let abs: Vec<f64> = self.values.iter().map(|v| v.abs()).collect();
        grid.integrate(&abs)
    }
}
