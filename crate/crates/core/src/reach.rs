//! Sample-based estimates of the normal injectivity radius.

use nalgebra::{DMatrix, DVector, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{frenet_frame, fundamental_forms, plane_curvature, Base, Manifold};
use crate::{Error, Result};

/// Radii are capped at this value.
pub const REACH_CAP: f64 = 1.0;

/// Witness pairs must meet within this distance.
pub const COLLISION_TOL: f64 = 1e-9;

/// Samples closer than this multiple of the fold radius (along the base) are
/// only tested through the local criterion.
pub const NEIGHBOR_FACTOR: f64 = 4.0;

/// Largest `eps <= 1` for which the normal map has no focal point over `x`:
/// `min{1, 1/|kappa|}` for curves and `min{1, 1/max|k_i|}` for surfaces.
pub fn local_fold_radius(base: &Base, x: &[f64]) -> Result<f64> {
    let k = match base {
        Base::Plane(c) => plane_curvature(c, x[0]).abs(),
        Base::Space(c) => match frenet_frame(c, x[0]) {
            Ok(f) => f.kappa,
            Err(Error::VanishingCurvature { .. }) => 0.0,
            Err(e) => return Err(e),
        },
        Base::Surface(s) => {
            let (k1, k2) = fundamental_forms(s, x[0], x[1])?.principal_curvatures();
            k1.abs().max(k2.abs())
        }
    };
    Ok(if k * REACH_CAP > 1.0 { 1.0 / k } else { REACH_CAP })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReachMethod {
    LocalFold,
    PairwiseDistance,
}

/// Two normal vectors whose exponentials meet: `p + v = p' + v' = meet`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub component: usize,
    pub p: Vec<f64>,
    pub v: Vec<f64>,
    pub other_component: usize,
    pub p_other: Vec<f64>,
    pub v_other: Vec<f64>,
    pub meet: Vec<f64>,
    /// Half the distance between the two base points.
    pub radius: f64,
    /// Largest `|<v, d_a phi>| / |v|` over both ends; zero at an exact critical pair.
    pub normality: f64,
}

impl Witness {
    pub fn collision_gap(&self) -> f64 {
        let a: f64 = self
            .p_point()
            .iter()
            .zip(&self.v)
            .zip(&self.meet)
            .map(|((p, v), m)| (p + v - m).powi(2))
            .sum();
        let b: f64 = self
            .p_other_point()
            .iter()
            .zip(&self.v_other)
            .zip(&self.meet)
            .map(|((p, v), m)| (p + v - m).powi(2))
            .sum();
        a.sqrt().max(b.sqrt())
    }

    fn p_point(&self) -> Vec<f64> {
        self.meet.iter().zip(&self.v).map(|(m, v)| m - v).collect()
    }

    fn p_other_point(&self) -> Vec<f64> {
        self.meet.iter().zip(&self.v_other).map(|(m, v)| m - v).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachEstimate {
    pub component: usize,
    pub p: Vec<f64>,
    pub rho: f64,
    pub fold: f64,
    pub method: ReachMethod,
    pub witnesses: Vec<Witness>,
}

/// Which part of each component to sample and how finely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachSampling {
    /// Intervals per base direction; doubling it nests the sample set.
    pub samples: usize,
    /// Parameter window applied to every component, or the full domain.
    pub window: Option<Vec<(f64, f64)>>,
    /// Largest admissible distance between adjacent samples.
    pub resolution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachReport {
    pub estimates: Vec<ReachEstimate>,
    pub spacing: f64,
    pub resolution: f64,
    pub samples: usize,
}

impl ReachReport {
    pub fn min(&self) -> &ReachEstimate {
        self.estimates
            .iter()
            .min_by(|a, b| a.rho.total_cmp(&b.rho))
            .expect("reports are never empty")
    }

    /// Estimate at the sample closest to `x` on `component`.
    pub fn nearest(&self, component: usize, x: &[f64]) -> Option<&ReachEstimate> {
        self.estimates
            .iter()
            .filter(|e| e.component == component)
            .min_by(|a, b| dist2(&a.p, x).total_cmp(&dist2(&b.p, x)))
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum()
}

struct Sample {
    component: usize,
    x: Vec<f64>,
    point: Vector3<f64>,
    fold: f64,
    /// Cumulative arc length along a curve; unused for surfaces.
    arc: f64,
    metric: [[f64; 2]; 2],
}

struct ComponentInfo {
    base: Base,
    /// The unwindowed component, used when refining witnesses.
    full: Base,
    periodic: Vec<bool>,
    period: Vec<f64>,
    arc_period: Option<f64>,
}

fn axis(a: f64, b: f64, n: usize, periodic: bool) -> Vec<f64> {
    if periodic {
        (0..n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
    } else {
        (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
    }
}

fn sample_component(
    idx: usize,
    base: &Base,
    full: &Base,
    n: usize,
) -> Result<(Vec<Sample>, ComponentInfo, f64)> {
    let dom = base.domain();
    let per = base.periodic();
    let axes: Vec<Vec<f64>> = dom
        .iter()
        .zip(&per)
        .map(|(&(a, b), &p)| axis(a, b, n, p))
        .collect();
    let params: Vec<Vec<f64>> = match axes.as_slice() {
        [u] => u.iter().map(|&x| vec![x]).collect(),
        [u, v] => u
            .iter()
            .flat_map(|&a| v.iter().map(move |&b| vec![a, b]))
            .collect(),
        _ => unreachable!("base dimension is 1 or 2"),
    };
    let mut samples = params
        .into_par_iter()
        .map(|x| {
            let fold = local_fold_radius(base, &x)?;
            let metric = match base {
                Base::Surface(s) => {
                    let f = fundamental_forms(s, x[0], x[1])?.first;
                    [[f[(0, 0)], f[(0, 1)]], [f[(1, 0)], f[(1, 1)]]]
                }
                _ => [[0.0; 2]; 2],
            };
            Ok(Sample {
                component: idx,
                point: base.point(&x),
                x,
                fold,
                arc: 0.0,
                metric,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut spacing: f64 = 0.0;
    let mut arc_period = None;
    if base.base_dim() == 1 {
        let mut acc = 0.0;
        for i in 1..samples.len() {
            let step = (samples[i].point - samples[i - 1].point).norm();
            spacing = spacing.max(step);
            acc += step;
            samples[i].arc = acc;
        }
        if per[0] {
            let close = (samples[0].point - samples[samples.len() - 1].point).norm();
            spacing = spacing.max(close);
            arc_period = Some(acc + close);
        }
    } else {
        let (nu, nv) = (axes[0].len(), axes[1].len());
        let at = |i: usize, j: usize| &samples[i * nv + j].point;
        for i in 0..nu {
            for j in 0..nv {
                if i + 1 < nu || per[0] {
                    spacing = spacing.max((at(i, j) - at((i + 1) % nu, j)).norm());
                }
                if j + 1 < nv || per[1] {
                    spacing = spacing.max((at(i, j) - at(i, (j + 1) % nv)).norm());
                }
            }
        }
    }
    let info = ComponentInfo {
        base: base.clone(),
        full: full.clone(),
        period: dom.iter().map(|&(a, b)| b - a).collect(),
        periodic: per,
        arc_period,
    };
    Ok((samples, info, spacing))
}

/// Base distance between two samples of the same component: arc length for
/// curves, the first fundamental form at `p` for surfaces.
fn base_distance(info: &ComponentInfo, p: &Sample, q: &Sample) -> f64 {
    if p.x.len() == 1 {
        let d = (p.arc - q.arc).abs();
        return match info.arc_period {
            Some(l) => d.min(l - d),
            None => d,
        };
    }
    let mut delta = [0.0; 2];
    for a in 0..2 {
        let mut d = q.x[a] - p.x[a];
        if info.periodic[a] {
            let l = info.period[a];
            d -= l * (d / l).round();
        }
        delta[a] = d;
    }
    let m = &p.metric;
    (m[0][0] * delta[0] * delta[0] + 2.0 * m[0][1] * delta[0] * delta[1] + m[1][1] * delta[1] * delta[1])
        .max(0.0)
        .sqrt()
}

/// Point, first and second parameter derivatives of a base, embedded in R^3.
fn base_jet(base: &Base, x: &[f64]) -> (Vector3<f64>, Vec<Vector3<f64>>, Vec<Vec<Vector3<f64>>>) {
    let lift2 = |v: nalgebra::Vector2<f64>| Vector3::new(v.x, v.y, 0.0);
    match base {
        Base::Plane(c) => (
            lift2(c.position(x[0])),
            vec![lift2(c.derivative(x[0], 1))],
            vec![vec![lift2(c.derivative(x[0], 2))]],
        ),
        Base::Space(c) => (
            c.position(x[0]),
            vec![c.derivative(x[0], 1)],
            vec![vec![c.derivative(x[0], 2)]],
        ),
        Base::Surface(s) => {
            let (u, v) = (x[0], x[1]);
            (
                s.position(u, v),
                vec![s.partial(u, v, 0), s.partial(u, v, 1)],
                vec![
                    vec![s.second_partial(u, v, 0, 0), s.second_partial(u, v, 0, 1)],
                    vec![s.second_partial(u, v, 1, 0), s.second_partial(u, v, 1, 1)],
                ],
            )
        }
    }
}

fn clamp_to(info: &ComponentInfo, x: &mut [f64]) {
    let periodic = info.full.periodic();
    for (a, (lo, hi)) in info.full.domain().into_iter().enumerate() {
        if !periodic[a] {
            x[a] = x[a].clamp(lo, hi);
        }
    }
}

/// Foot of the perpendicular from `P(x)` onto the other component near `x'`,
/// by damped Newton on `|P(x) - Q(x')|^2 / 2` over `x'` with `x` held fixed.
fn refine_pair(a: &ComponentInfo, xa: &[f64], b: &ComponentInfo, xb: &[f64]) -> (Vec<f64>, Vec<f64>) {
    const MAX_STEP: f64 = 0.25;
    let mb = xb.len();
    let p = a.full.point(xa);
    let objective = |y: &[f64]| (p - b.full.point(y)).norm_squared() * 0.5;
    let mut y = xb.to_vec();
    let mut f = objective(&y);
    for _ in 0..60 {
        let (q, dq, ddq) = base_jet(&b.full, &y);
        let d = p - q;
        let grad = DVector::from_fn(mb, |i, _| -d.dot(&dq[i]));
        let hess = DMatrix::from_fn(mb, mb, |i, j| dq[i].dot(&dq[j]) - d.dot(&ddq[i][j]));
        if grad.amax() <= 1e-15 * (1.0 + d.norm()) {
            break;
        }
        let scale = hess.diagonal().amax().max(1e-12);
        let mut mu = 0.0;
        let mut improved = false;
        for _ in 0..30 {
            let shifted = &hess + DMatrix::identity(mb, mb) * (mu * scale);
            if let Some(ch) = shifted.cholesky() {
                let mut step = ch.solve(&grad);
                let len = step.amax();
                if len > MAX_STEP {
                    step *= MAX_STEP / len;
                }
                let mut ny = y.clone();
                for i in 0..mb {
                    ny[i] -= step[i];
                }
                clamp_to(b, &mut ny);
                let nf = objective(&ny);
                if nf <= f {
                    improved = step.amax() > 1e-15 * (1.0 + y[0].abs());
                    y = ny;
                    f = nf;
                    break;
                }
            }
            mu = if mu == 0.0 { 1e-8 } else { mu * 10.0 };
        }
        if !improved {
            break;
        }
    }
    (xa.to_vec(), y)
}

fn make_witness(
    infos: &[ComponentInfo],
    ca: usize,
    xa: &[f64],
    cb: usize,
    xb: &[f64],
) -> Witness {
    let (x, y) = refine_pair(&infos[ca], xa, &infos[cb], xb);
    let (p, dp, _) = base_jet(&infos[ca].full, &x);
    let (q, dq, _) = base_jet(&infos[cb].full, &y);
    let meet = (p + q) * 0.5;
    let v = meet - p;
    let w = meet - q;
    let vn = v.norm().max(f64::MIN_POSITIVE);
    let normality = dp
        .iter()
        .map(|t| v.dot(t).abs() / (vn * t.norm()))
        .chain(dq.iter().map(|t| w.dot(t).abs() / (vn * t.norm())))
        .fold(0.0, f64::max);
    let dim = infos[ca].base.ambient_dim();
    let cut = |u: Vector3<f64>| u.as_slice()[..dim].to_vec();
    Witness {
        component: ca,
        p: x,
        v: cut(v),
        other_component: cb,
        p_other: y,
        v_other: cut(w),
        meet: cut(meet),
        radius: vn,
        normality,
    }
}

/// `rho(p) = min(fold(p), 1/2 min |p - p'|)` over samples `p'` that are not
/// base neighbours of `p`. Refining `samples` by doubling never increases any
/// reported radius.
pub fn pairwise_reach(manifold: &Manifold, sampling: &ReachSampling) -> Result<ReachReport> {
    if sampling.samples < 2 {
        return Err(Error::InvalidInput("reach needs at least 2 samples".into()));
    }
    let mut infos = Vec::new();
    let mut samples = Vec::new();
    let mut spacing: f64 = 0.0;
    for (idx, comp) in manifold.components.iter().enumerate() {
        let windowed = match &sampling.window {
            Some(w) => comp.restrict(w)?,
            None => comp.clone(),
        };
        let (s, info, sp) = sample_component(idx, &windowed, comp, sampling.samples)?;
        samples.extend(s);
        infos.push(info);
        spacing = spacing.max(sp);
    }
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    if spacing > sampling.resolution {
        return Err(Error::InsufficientSamples {
            spacing,
            resolution: sampling.resolution,
        });
    }

    let estimates = samples
        .par_iter()
        .map(|p| {
            let mut best = f64::INFINITY;
            let mut arg = None;
            for (j, q) in samples.iter().enumerate() {
                if q.component == p.component
                    && base_distance(&infos[p.component], p, q) < NEIGHBOR_FACTOR * p.fold
                {
                    continue;
                }
                let d = (p.point - q.point).norm();
                if d < best {
                    best = d;
                    arg = Some(j);
                }
            }
            let half = 0.5 * best;
            let (rho, method, witnesses) = match arg {
                Some(j) if half < p.fold => {
                    let q = &samples[j];
                    let w = make_witness(&infos, p.component, &p.x, q.component, &q.x);
                    (half, ReachMethod::PairwiseDistance, vec![w])
                }
                _ => (p.fold, ReachMethod::LocalFold, Vec::new()),
            };
            ReachEstimate {
                component: p.component,
                p: p.x.clone(),
                rho,
                fold: p.fold,
                method,
                witnesses,
            }
        })
        .collect();

    Ok(ReachReport {
        estimates,
        spacing,
        resolution: sampling.resolution,
        samples: sampling.samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeVerdict {
    pub exists: bool,
    pub eps: f64,
    pub min_rho: f64,
    pub at: ReachEstimate,
    pub spacing: f64,
}

/// Whether a tube of radius `eps` fits around the sampled manifold; on
/// failure `at` carries the binding sample and its witnesses.
pub fn tube_exists(manifold: &Manifold, eps: f64, sampling: &ReachSampling) -> Result<TubeVerdict> {
    let report = pairwise_reach(manifold, sampling)?;
    let at = report.min().clone();
    Ok(TubeVerdict {
        exists: at.rho >= eps,
        eps,
        min_rho: at.rho,
        at,
        spacing: report.spacing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{circle, line, ManifoldSpec};

    #[test]
    fn fold_examples() {
        assert_eq!(local_fold_radius(&Base::Plane(circle(1.0)), &[0.3]).unwrap(), 1.0);
        assert_eq!(local_fold_radius(&Base::Plane(line(0.0)), &[0.3]).unwrap(), 1.0);
        assert!((local_fold_radius(&Base::Plane(circle(0.5)), &[0.3]).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn parallel_lines() {
        let m = ManifoldSpec::ParallelLines { distance: 0.6 }.build().unwrap();
        let s = ReachSampling {
            samples: 200,
            window: Some(vec![(-5.0, 5.0)]),
            resolution: 0.1,
        };
        let r = pairwise_reach(&m, &s).unwrap();
        for e in &r.estimates {
            assert!((e.rho - 0.3).abs() < 1e-12);
            assert_eq!(e.method, ReachMethod::PairwiseDistance);
            let w = &e.witnesses[0];
            assert!(w.collision_gap() <= COLLISION_TOL);
            assert!(w.normality < 1e-9);
        }
    }

    #[test]
    fn coarse_sampling_is_rejected() {
        let m = ManifoldSpec::Line.build().unwrap();
        let s = ReachSampling {
            samples: 10,
            window: None,
            resolution: 0.5,
        };
        assert!(matches!(pairwise_reach(&m, &s), Err(Error::InsufficientSamples { .. })));
    }
}
