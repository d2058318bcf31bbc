use std::f64::consts::PI;

use proptest::prelude::*;
use tubewcp::analysis::*;
use tubewcp::fermi::FermiChart;
use tubewcp::geometry::*;
use tubewcp::Error;

fn base(spec: &str) -> Base {
    spec.parse::<ManifoldSpec>().unwrap().build().unwrap().single().unwrap().clone()
}

fn helix_chart(eps: f64) -> FermiChart {
    FermiChart::new(base("helix"), eps).unwrap()
}

fn xs() -> Vec<Vec<f64>> {
    vec![vec![1.0], vec![3.0], vec![7.5]]
}

fn radial(offset: f64, coef: f64, power: f64) -> Weight {
    WeightSpec::Radial {
        offset,
        coef,
        power,
        cap: None,
    }
    .build()
    .unwrap()
}

#[test]
fn admissibility_examples() {
    let q = FiberQuadrature::default();
    let c = helix_chart(0.1);
    let flat = weight_admissibility(&Weight::constant(1.0), 3.0, &c, &xs(), &q).unwrap();
    assert!((flat - PI * 0.01).abs() < 1e-12);

    let singular = weight_admissibility(&radial(0.0, 1.0, 0.25), 3.0, &c, &xs(), &q).unwrap();
    let exact = 2.0 * PI * 0.1f64.powf(1.25) / 1.25;
    assert!((singular - exact).abs() < 1e-10 * exact, "{singular} vs {exact}");

    assert!(matches!(
        weight_admissibility(&radial(0.0, 1.0, 2.0), 3.0, &c, &xs(), &q),
        Err(Error::NonIntegrable { .. })
    ));
    assert!(matches!(
        weight_admissibility(&Weight::constant(1.0), 2.0, &c, &xs(), &q),
        Err(Error::BadExponent { .. })
    ));
}

#[test]
fn admissibility_sees_the_worst_fiber() {
    // The weight thins out along the base, so the last sample dominates.
    let w = Weight::new("x-dependent", |x: &[f64], _: &[f64]| 1.0 / (1.0 + x[0]));
    let c = helix_chart(0.1);
    let v = weight_admissibility(&w, 3.0, &c, &xs(), &FiberQuadrature::default()).unwrap();
    assert!((v - PI * 0.01 * 8.5f64.powi(3)).abs() < 1e-9);
}

/// `max_c ||w||_6^2 / int |w'|^2` over `w = sum c_j (1 - s^2)^j` on the disk of
/// radius `eps`, by coordinate search with Simpson quadrature in `r`.
fn rayleigh_oracle(eps: f64) -> f64 {
    let n = 2000;
    let h = eps / n as f64;
    let quotient = |c: &[f64]| {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..=n {
            let r = i as f64 * h;
            let wt = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            let s2 = (r / eps).powi(2);
            let mut w = 0.0;
            let mut dw = 0.0;
            for (j, cj) in c.iter().enumerate() {
                let p = (j + 1) as i32;
                w += cj * (1.0 - s2).powi(p);
                dw += cj * p as f64 * (1.0 - s2).powi(p - 1) * (-2.0 * r / (eps * eps));
            }
            num += wt * w.abs().powi(6) * r;
            den += wt * dw * dw * r;
        }
        let k = 2.0 * PI * h / 3.0;
        (k * num).powf(1.0 / 3.0) / (k * den)
    };
    let mut c = vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let mut best = quotient(&c);
    let mut step = 0.5;
    let mut sweeps = 0;
    while step > 1e-4 && sweeps < 400 {
        sweeps += 1;
        let mut improved = false;
        for j in 1..c.len() {
            for sign in [-1.0, 1.0] {
                let mut t = c.clone();
                t[j] += sign * step;
                let q = quotient(&t);
                if q > best {
                    best = q;
                    c = t;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    best
}

#[test]
fn sobolev_constant_against_rayleigh_oracle() {
    let est = sobolev_constant_estimate(
        &Weight::constant(1.0),
        3.0,
        2,
        0.1,
        &xs(),
        &TrialFamily::default(),
        &FiberQuadrature::default(),
    )
    .unwrap();
    let oracle = rayleigh_oracle(0.1);
    assert!(est.sup_quotient <= oracle * (1.0 + 1e-6), "{} > {oracle}", est.sup_quotient);
    let ratio = est.c_s / oracle;
    assert!((0.5..=2.0).contains(&ratio), "C_S / oracle = {ratio}");
    for t in &est.trials {
        assert!(t.quotient <= est.c_s);
    }
    assert!((est.exponent - 6.0).abs() < 1e-12);
}

#[test]
fn sobolev_constant_scales_with_eps() {
    let run = |eps: f64| {
        sobolev_constant_estimate(
            &Weight::constant(1.0),
            3.0,
            2,
            eps,
            &xs(),
            &TrialFamily::default(),
            &FiberQuadrature::default(),
        )
        .unwrap()
        .c_s
    };
    // ||w||_6^2 scales like eps^{2/3}; the Dirichlet energy is scale free in 2D.
    let ratio = run(0.05) / run(0.1);
    assert!((ratio - 0.5f64.powf(2.0 / 3.0)).abs() < 1e-10, "{ratio}");
}

#[test]
fn degenerate_weight_raises_sobolev_constant() {
    let q = FiberQuadrature::default();
    let trials = TrialFamily::default();
    let flat = sobolev_constant_estimate(&Weight::constant(1.0), 3.0, 2, 0.1, &xs(), &trials, &q).unwrap();
    let thin = sobolev_constant_estimate(&radial(0.0, 1.0, 0.25), 3.0, 2, 0.1, &xs(), &trials, &q).unwrap();
    assert!(thin.c_s.is_finite());
    assert!(thin.c_s > flat.c_s);
    for (a, b) in thin.trials.iter().zip(&flat.trials) {
        assert!(a.quotient > b.quotient);
    }
}

#[test]
fn sobolev_rejects_codimension_one() {
    let r = sobolev_constant_estimate(
        &Weight::constant(1.0),
        2.0,
        1,
        0.1,
        &xs(),
        &TrialFamily::default(),
        &FiberQuadrature::default(),
    );
    assert!(matches!(r, Err(Error::ExponentOutOfRange { .. })));
}

#[test]
fn lipschitz_examples() {
    let zs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 0.3, 0.01, -0.02]).collect();
    let lin = ReactionSpec::Linear {
        coef: 0.25,
        constant: 0.0,
    }
    .build()
    .unwrap();
    assert!((lipschitz_probe(&lin, 1.0, &zs, 33) - 1.05 * 0.25).abs() < 1e-12);

    let h = |z: &[f64]| 2.0 * (z[0]).cos();
    let wave = Reaction::new("h sin u", move |z: &[f64], u| h(z) * u.sin());
    let lf = lipschitz_probe(&wave, 1.0, &zs, 65);
    assert!(lf <= 2.1 && lf > 1.5, "{lf}");

    let flat = ReactionSpec::Constant { value: 3.0 }.build().unwrap();
    assert_eq!(lipschitz_probe(&flat, 5.0, &zs, 9), 0.0);
}

#[test]
fn ball_volume_examples() {
    let line = base("line");
    assert!((geodesic_ball_volume(&line, &[0.0], 3.0).unwrap() - 6.0).abs() < 1e-12);

    let circle = base("circle");
    assert!((geodesic_ball_volume(&circle, &[1.0], PI / 2.0).unwrap() - PI).abs() < 1e-12);
    assert!((geodesic_ball_volume(&circle, &[1.0], 10.0).unwrap() - 2.0 * PI).abs() < 1e-12);

    let plane = base("plane");
    let area = geodesic_ball_volume(&plane, &[0.0, 0.0], 1.0).unwrap();
    assert!((area - PI).abs() < 0.05, "{area}");
}

#[test]
fn ball_volume_converges_under_refinement() {
    let plane = base("plane");
    for h in [0.1, 0.05] {
        let coarse = geodesic_distance_field(&plane, &[0.3, -0.2], h).unwrap();
        let fine = geodesic_distance_field(&plane, &[0.3, -0.2], h / 2.0).unwrap();
        let (a, b) = (coarse.ball_volume(1.0).unwrap(), fine.ball_volume(1.0).unwrap());
        assert!((a - b).abs() <= 4.0 * coarse.max_edge(), "{a} {b}");
    }
    let circle = base("circle");
    let coarse = geodesic_distance_field(&circle, &[0.4], 0.1).unwrap();
    let fine = geodesic_distance_field(&circle, &[0.4], 0.05).unwrap();
    for r in [1.0, 2.0, 3.0] {
        let d = (coarse.ball_volume(r).unwrap() - fine.ball_volume(r).unwrap()).abs();
        assert!(d <= 4.0 * coarse.max_edge());
    }
}

#[test]
fn ball_volume_rejects_coarse_mesh() {
    let f = geodesic_distance_field(&base("line"), &[0.0], 0.5).unwrap();
    assert!(matches!(f.ball_volume(1.0), Err(Error::MeshTooCoarse { .. })));
}

#[test]
fn sphere_cap_area() {
    // Cap of geodesic radius R on the unit sphere has area 2 pi (1 - cos R).
    let sphere = base("sphere");
    let f = geodesic_distance_field(&sphere, &[0.0, PI / 2.0], 0.03).unwrap();
    let r = 0.8;
    let area = f.ball_volume(r).unwrap();
    let exact = 2.0 * PI * (1.0 - r.cos());
    assert!((area - exact).abs() < 0.02 * exact, "{area} vs {exact}");
}

#[test]
fn growth_fit_examples() {
    let line = volume_growth_fit(&base("line"), &[0.0], &[0.5, 1.0, 2.0, 4.0], 0.1).unwrap();
    assert!((0.95..=1.05).contains(&line.gamma), "{}", line.gamma);
    assert!((line.c1 - 2.0).abs() < 1e-6);

    let plane = volume_growth_fit(&base("plane"), &[0.0, 0.0], &[1.0, 2.0, 4.0], 0.5).unwrap();
    assert!((1.9..=2.1).contains(&plane.gamma), "{}", plane.gamma);

    let circle = volume_growth_fit(&base("circle"), &[0.0], &[4.0, 8.0, 16.0], 1.0).unwrap();
    assert!(circle.gamma > 0.0 && circle.gamma_fit.abs() < 1e-9);
    assert!((circle.c1 - 2.0 * PI).abs() < 0.01);
    for fit in [&line, &plane, &circle] {
        for (r, v) in fit.radii.iter().zip(&fit.volumes) {
            assert!(*v <= fit.bound(*r));
        }
    }
}

/// Apply `L(R) <= theta L(2R) + g(R)` repeatedly from each rung up to the
/// top of the ladder, with `L <= C R^gamma` at the last step.
fn brute_force_bounds(l: &Ladder, theta: f64, gamma: f64, c: f64) -> Vec<Vec<f64>> {
    let n = l.radii.len();
    (0..n)
        .map(|j| {
            (0..n - j)
                .map(|m| {
                    let mut b = c * l.radii[j + m].powf(gamma);
                    for i in (0..m).rev() {
                        b = theta * b + l.g[j + i];
                    }
                    b
                })
                .collect()
        })
        .collect()
}

fn brute_force_hypotheses(l: &Ladder, theta: f64, gamma: f64, c: f64) -> bool {
    let n = l.radii.len();
    let mut ok = theta < 0.5f64.powf(gamma);
    for j in 0..n {
        ok &= l.l[j] >= 0.0 && l.l[j] <= c * l.radii[j].powf(gamma);
        if j + 1 < n {
            ok &= l.l[j] <= l.l[j + 1] && l.l[j] <= theta * l.l[j + 1] + l.g[j];
        }
    }
    ok && l.g[n - 1].abs() < 1e-8
}

proptest! {
    #[test]
    fn admissibility_is_monotone(lift in 0.0f64..2.0, coef in 0.1f64..3.0) {
        let c = helix_chart(0.1);
        let q = FiberQuadrature::default();
        let low = weight_admissibility(&radial(0.5, coef, 0.5), 3.0, &c, &xs(), &q).unwrap();
        let high = weight_admissibility(&radial(0.5 + lift, coef, 0.5), 3.0, &c, &xs(), &q).unwrap();
        prop_assert!(high <= low);
    }

    #[test]
    fn exponent_increases_with_t(t in 1.01f64..50.0, dt in 0.01f64..10.0) {
        let a = sobolev_exponent(t, 2).unwrap();
        let b = sobolev_exponent(t + dt, 2).unwrap();
        prop_assert!(a > 2.0 && b > a);
    }

    #[test]
    fn synthetic_ladders(
        gamma in 0.2f64..2.5,
        frac in 0.05f64..0.999,
        slack in 0.0f64..1.0,
        a in 0.0f64..5.0,
        n in 2usize..7,
        r0 in 0.5f64..4.0,
    ) {
        let theta1 = frac * 0.5f64.powf(gamma);
        let theta = theta1 + slack * (0.5f64.powf(gamma) - theta1) * 0.99;
        let radii: Vec<f64> = (0..n).map(|j| r0 * 2f64.powi(j as i32)).collect();
        // L(R) = a theta1^{log2(R_max / R)}, built rung by rung.
        let mut l = vec![a; n];
        for j in (0..n - 1).rev() {
            l[j] = theta1 * l[j + 1];
        }
        let c = l.iter().zip(&radii).map(|(v, r)| v / r.powf(gamma)).fold(1e-9, f64::max) * (1.0 + 1e-12);
        let ladder = Ladder { radii: radii.clone(), l, g: vec![0.0; n] };

        let verdict = iteration_lemma_verdict(&ladder, theta, gamma, c);
        prop_assert_eq!(verdict.is_forced_zero(), brute_force_hypotheses(&ladder, theta, gamma, c));
        let IterationVerdict::ForcedZero { chain } = verdict else {
            return Err(TestCaseError::fail("synthetic ladder must pass"));
        };
        let brute = brute_force_bounds(&ladder, theta, gamma, c);
        for link in &chain {
            let b = brute[link.rung][link.m];
            prop_assert!((link.bound - b).abs() <= 1e-12 * b.max(1.0));
            prop_assert!(link.value <= link.bound * (1.0 + 1e-12));
            prop_assert!((link.bound - link.closed_form).abs() <= 1e-9 * link.closed_form.max(1e-300));
        }
        let m = n - 1;
        prop_assert!(ladder.l[0] <= c * (2f64.powf(gamma) * theta).powi(m as i32) * radii[0].powf(gamma) * (1.0 + 1e-12));
    }

    #[test]
    fn verdict_agrees_with_brute_force(
        l in proptest::collection::vec(0.0f64..2.0, 4),
        g in proptest::collection::vec(0.0f64..0.5, 4),
        zero_tail in any::<bool>(),
        theta in 0.05f64..0.7,
        gamma in 0.3f64..2.0,
        c in 0.1f64..5.0,
    ) {
        let mut l = l;
        l.sort_by(f64::total_cmp);
        let mut g = g;
        if zero_tail {
            g[3] = 0.0;
        }
        let ladder = Ladder { radii: vec![1.0, 2.0, 4.0, 8.0], l, g };
        let verdict = iteration_lemma_verdict(&ladder, theta, gamma, c);
        prop_assert_eq!(verdict.is_forced_zero(), brute_force_hypotheses(&ladder, theta, gamma, c));
    }
}
