use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use proptest::prelude::*;
use tubewcp::fermi::*;
use tubewcp::geometry::*;

fn chart(spec: &str, eps: f64) -> FermiChart {
    let m = spec.parse::<ManifoldSpec>().unwrap().build().unwrap();
    FermiChart::new(m.single().unwrap().clone(), eps).unwrap()
}

fn rel_discrepancy(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(p, q)| (p - q).abs() / q.abs().max(1.0))
        .fold(0.0, f64::max)
}

#[test]
fn closed_form_matches_direct_on_grids() {
    for (spec, eps) in [("circle", 0.5), ("helix", 0.5), ("sphere", 0.5), ("torus", 0.3), ("arctan-spiral", 0.2)] {
        let c = chart(spec, eps);
        let grid = SampleGrid::regular(&c, 32, 8, 0.5);
        let mut worst: f64 = 0.0;
        for x in &grid.base {
            for y in &grid.normal {
                let d = pullback_metric_direct(&c, x, y).unwrap();
                let f = pullback_metric_closed_form(&c, x, y).unwrap();
                worst = worst.max(rel_discrepancy(&f.g, &d.g));
            }
        }
        assert!(worst <= 1e-6, "{spec}: {worst}");
    }
}

#[test]
fn decomposition_reassembles_metric() {
    for (spec, eps) in [("circle:radius=2", 0.5), ("helix:a=1.5,b=0.7", 0.4), ("sphere", 0.5), ("cylinder", 0.5), ("arctan-spiral", 0.3)] {
        let c = chart(spec, eps);
        let grid = SampleGrid::regular(&c, 16, 4, 0.3);
        for x in &grid.base {
            let t = rts_tensors(&c, x).unwrap();
            for y in &grid.normal {
                let d = pullback_metric_direct(&c, x, y).unwrap();
                assert!((t.assemble(y) - &d.g).amax() <= 1e-12, "{spec}");
            }
        }
    }
}

#[test]
fn map_differences_agree_with_frame_jet() {
    for (spec, eps) in [("circle", 0.5), ("helix", 0.5), ("sphere", 0.5)] {
        let c = chart(spec, eps);
        let grid = SampleGrid::regular(&c, 8, 3, 0.4);
        for x in &grid.base {
            for y in &grid.normal {
                let a = pullback_metric_direct_with(&c, x, y, MetricRoute::FrameJet).unwrap();
                let b = pullback_metric_direct_with(&c, x, y, MetricRoute::MapDifferences).unwrap();
                assert!((a.g - b.g).amax() <= 1e-8, "{spec}");
            }
        }
    }
}

#[test]
fn finite_difference_base_still_decomposes() {
    // A helix with no derivative callbacks.
    let c = SpaceCurve::new("fd-helix", (0.0, 10.0), |x| {
        let w = x / 2f64.sqrt();
        Vector3::new(w.cos(), w.sin(), w)
    });
    let ch = FermiChart::new(Base::Space(c), 0.3).unwrap();
    let t = rts_tensors(&ch, &[2.0]).unwrap();
    assert!((t.r[0][(0, 0)] + 1.0).abs() < 1e-6);
    let exact = chart("helix", 0.3);
    for y in [[0.1, -0.05], [-0.2, 0.15]] {
        let d = pullback_metric_direct(&ch, &[2.0], &y).unwrap();
        let e = pullback_metric_closed_form(&exact, &[2.0], &y).unwrap();
        assert!((t.assemble(&y) - &d.g).amax() < 1e-12);
        assert!((d.g - e.g).amax() < 1e-6);
    }
}

#[test]
fn space_curve_tensors() {
    let c = chart("helix", 0.5);
    let t = rts_tensors(&c, &[1.234]).unwrap();
    let (k, tau) = (0.5, 0.5);
    assert!((t.h[(0, 0)] - 1.0).abs() < 1e-14);
    assert!((t.r[0][(0, 0)] + 2.0 * k).abs() < 1e-14);
    assert!(t.r[1][(0, 0)].abs() < 1e-14);
    // t^1 = -tau dx dy^2, t^2 = tau dx dy^1
    assert!(t.t[0][(0, 0)].abs() < 1e-14);
    assert!((t.t[0][(0, 1)] + tau).abs() < 1e-14);
    assert!((t.t[1][(0, 0)] - tau).abs() < 1e-14);
    assert!(t.t[1][(0, 1)].abs() < 1e-14);
    assert!((t.s[0][0][(0, 0)] - (k * k + tau * tau)).abs() < 1e-14);
    assert!(t.s[0][1][(0, 0)].abs() < 1e-14);
    assert!((t.s[1][1][(0, 0)] - tau * tau).abs() < 1e-14);
}

#[test]
fn plane_curve_tensors() {
    let c = chart("circle:radius=0.5", 0.2);
    let t = rts_tensors(&c, &[0.3]).unwrap();
    assert!((t.r[0][(0, 0)] + 4.0).abs() < 1e-13);
    assert!((t.s[0][0][(0, 0)] - 4.0).abs() < 1e-13);
    assert_eq!(t.t[0][(0, 0)], 0.0);
}

#[test]
fn sphere_closed_form_factorizes() {
    let rho = 2.0;
    let c = chart("sphere:radius=2", 0.5);
    let (x, y) = ([0.4, 1.0], [0.3]);
    let m = pullback_metric_closed_form(&c, &x, &y).unwrap();
    let s = (1.0 - y[0] / rho).powi(2);
    let st = 1.0f64.sin();
    assert!((m.g[(0, 0)] - s * rho * rho * st * st).abs() < 1e-12);
    assert!((m.g[(1, 1)] - s * rho * rho).abs() < 1e-12);
    assert!((m.g[(2, 2)] - 1.0).abs() < 1e-15);
    let zero = pullback_metric_closed_form(&c, &x, &[0.0]).unwrap();
    let ff = fundamental_forms(sphere_surface(&c), x[0], x[1]).unwrap();
    assert_eq!(zero.g[(0, 0)], ff.first[(0, 0)]);
    assert_eq!(zero.g[(1, 1)], ff.first[(1, 1)]);
}

fn sphere_surface(c: &FermiChart) -> &ParamSurface {
    match c.base() {
        Base::Surface(s) => s,
        _ => unreachable!(),
    }
}

#[test]
fn lambda_is_one_on_the_base() {
    for (spec, eps) in [("circle", 0.5), ("line", 0.5), ("helix", 0.5), ("arctan-spiral", 0.3), ("sphere", 0.5), ("cylinder", 0.5), ("torus", 0.3), ("plane", 0.5)] {
        let c = chart(spec, eps);
        let zero = vec![0.0; c.codim()];
        for x in &SampleGrid::regular(&c, 40, 1, 0.5).base {
            let l = volume_distortion(&c, x, &zero).unwrap();
            assert!((l - 1.0).abs() <= 1e-12, "{spec}: {l}");
        }
    }
}

#[test]
fn k1_examples() {
    let k = estimate_k1(&chart("circle", 0.5), &SampleGrid::regular(&chart("circle", 0.5), 16, 8, 0.5)).unwrap();
    assert!((k - 1.05).abs() < 1e-12);
    let c2 = chart("circle:radius=2", 0.5);
    let k = estimate_k1(&c2, &SampleGrid::regular(&c2, 16, 8, 0.5)).unwrap();
    assert!((k - 0.525).abs() < 1e-12);
    let strip = chart("line", 0.5);
    assert_eq!(estimate_k1(&strip, &SampleGrid::regular(&strip, 16, 8, 0.5)).unwrap(), 0.0);
    let empty = SampleGrid { base: vec![vec![0.0]], normal: vec![vec![0.0]] };
    assert!(matches!(estimate_k1(&strip, &empty), Err(tubewcp::Error::EmptySample)));
}

#[test]
fn distortion_bound_and_sandwich_on_holdout() {
    for (spec, eps) in [("circle", 0.9), ("helix", 0.9), ("sphere", 0.9), ("torus", 0.45), ("arctan-spiral", 0.5)] {
        let c = chart(spec, eps);
        let k1 = estimate_k1(&c, &SampleGrid::regular(&c, 24, 8, 0.5)).unwrap();
        let hold = SampleGrid::regular(&c, 37, 13, 0.173);
        for x in &hold.base {
            for y in &hold.normal {
                let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                let l = volume_distortion(&c, x, y).unwrap();
                assert!((l - 1.0).abs() <= k1 * ny, "{spec}");
            }
        }
        let e1 = epsilon1(k1);
        let inner = c.with_eps(0.999 * e1).unwrap();
        let hold = SampleGrid::regular(&inner, 37, 13, 0.91);
        for x in &hold.base {
            for y in &hold.normal {
                let l = volume_distortion(&inner, x, y).unwrap();
                assert!((0.5..=1.5).contains(&l), "{spec}: {l}");
            }
        }
    }
}

#[test]
fn density_examples() {
    let c = chart("helix", 0.5);
    assert!((base_density_mu(&c, &[2.0]).unwrap() - 1.0).abs() < 1e-14);
    let fast = PlaneCurve::new("x2", (0.0, PI), |x| Vector2::new((2.0 * x).cos(), (2.0 * x).sin()))
        .with_derivatives(
            |x| 2.0 * Vector2::new(-(2.0 * x).sin(), (2.0 * x).cos()),
            |x| -4.0 * Vector2::new((2.0 * x).cos(), (2.0 * x).sin()),
            |x| 8.0 * Vector2::new((2.0 * x).sin(), -(2.0 * x).cos()),
        );
    let ch = FermiChart::new(Base::Plane(fast), 0.5).unwrap();
    assert!((base_density_mu(&ch, &[0.7]).unwrap() - 2.0).abs() < 1e-14);
    // lambda stays geometric under reparametrization.
    assert!((volume_distortion(&ch, &[0.7], &[0.25]).unwrap() - 0.75).abs() < 1e-12);
}

#[test]
fn gradient_transport() {
    let w = |p: &[f64]| (p[0]).sin() + p[1] * p[1] * 0.5 + p.get(2).map_or(0.0, |z| z.cos() * p[0]);
    let grad_w = |p: &[f64]| -> Vec<f64> {
        let mut g = vec![p[0].cos(), p[1]];
        if let Some(&z) = p.get(2) {
            g[0] += z.cos();
            g.push(-z.sin() * p[0]);
        }
        g
    };
    for (spec, x, y) in [
        ("circle", vec![1.0], vec![0.2]),
        ("helix", vec![2.0], vec![0.1, -0.2]),
        ("sphere", vec![0.5, 1.2], vec![-0.3]),
    ] {
        let c = chart(spec, 0.5);
        let n = c.dim();
        let m = c.base_dim();
        let h = 1e-4;
        let coord = |i: usize, s: f64| {
            let (mut xx, mut yy) = (x.clone(), y.clone());
            if i < m {
                xx[i] += s;
            } else {
                yy[i - m] += s;
            }
            w(&fermi_map(&c, &xx, &yy).unwrap())
        };
        let dw = DVector::from_fn(n, |i, _| {
            (coord(i, -2.0 * h) - coord(i, 2.0 * h) + 8.0 * (coord(i, h) - coord(i, -h))) / (12.0 * h)
        });
        let metric = pullback_metric_direct(&c, &x, &y).unwrap();
        let grad_chart = &metric.inv * dw;
        let jac = DMatrix::from_fn(n, n, |r, col| {
            let f = |s: f64| {
                let (mut xx, mut yy) = (x.clone(), y.clone());
                if col < m {
                    xx[col] += s;
                } else {
                    yy[col - m] += s;
                }
                fermi_map(&c, &xx, &yy).unwrap()[r]
            };
            (f(-2.0 * h) - f(2.0 * h) + 8.0 * (f(h) - f(-h))) / (12.0 * h)
        });
        let pushed = jac * grad_chart;
        let expect = grad_w(&fermi_map(&c, &x, &y).unwrap());
        for i in 0..n {
            assert!((pushed[i] - expect[i]).abs() < 1e-8, "{spec}");
        }
    }
}

#[test]
fn two_chart_tube_integral() {
    // Integral of a smooth ambient function over the circle tube, weighted by lambda.
    let c = chart("circle", 0.4);
    let atlas = TwoChartCircle::new(1.0);
    let rule = tubewcp::quadrature::UnitRule::gauss_legendre(16);
    let fiber = |s: f64| {
        rule.integrate(-0.4, 0.4, |y| {
            let p = fermi_map(&c, &[s], &[y]).unwrap();
            let f = (p[0] * 2.0).cos() + p[1] * p[1] * p[0];
            f * volume_distortion(&c, &[s], &[y]).unwrap()
        })
    };
    let two = atlas.integrate(fiber);
    let one = atlas.integrate_single(fiber);
    assert!((two - one).abs() <= 1e-8, "{two} {one}");
}

#[test]
fn description_round_trip() {
    let d: ChartDescription =
        serde_json::from_str(r#"{"base":{"id":"helix"},"eps":0.05,"window":[[0,16]]}"#).unwrap();
    let c = d.build().unwrap();
    assert_eq!(c.domain(), vec![(0.0, 16.0)]);
    let s = d.summary().unwrap();
    assert_eq!(s.k, 2);
    let text = serde_json::to_string(&d).unwrap();
    assert_eq!(serde_json::from_str::<ChartDescription>(&text).unwrap(), d);
}

proptest! {
    #[test]
    fn circle_lambda_is_linear(r in 0.5f64..5.0, s in 0.0f64..1.0, t in -0.99f64..0.99) {
        let spec = format!("circle:radius={r}");
        let eps = 0.45;
        let c = chart(&spec, eps);
        let x = s * 2.0 * PI * r;
        let y = t * eps;
        let l = volume_distortion(&c, &[x], &[y]).unwrap();
        prop_assert!((l - (1.0 - y / r)).abs() < 1e-12);
    }

    #[test]
    fn metric_inverse_is_consistent(x in 0.0f64..12.0, a in 0.0f64..TAU, r in 0.0f64..0.99) {
        let c = chart("helix", 0.5);
        let y = [0.5 * r * a.cos(), 0.5 * r * a.sin()];
        let m = pullback_metric_direct(&c, &[x], &y).unwrap();
        prop_assert!((&m.inv * &m.g - DMatrix::identity(3, 3)).amax() < 1e-10);
        prop_assert!((&m.g - m.g.transpose()).amax() == 0.0);
    }
}
