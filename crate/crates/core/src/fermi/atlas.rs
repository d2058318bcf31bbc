use std::f64::consts::PI;

use crate::quadrature::UnitRule;

/// The circle of radius `r` (arc-length parameter `s in [0, 2 pi r)`) covered
/// by two charts centred at `s = 0` and `s = pi r`, each of half-width
/// `3 pi r / 4`, with the partition of unity built from `(1 - t^2)^2` bumps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoChartCircle {
    radius: f64,
}

impl TwoChartCircle {
    const PANELS: usize = 8;
    const NODES: usize = 24;

    pub fn new(radius: f64) -> Self {
        Self { radius }
    }

    pub fn length(&self) -> f64 {
        2.0 * PI * self.radius
    }

    fn center(&self, alpha: usize) -> f64 {
        alpha as f64 * PI * self.radius
    }

    fn half_width(&self) -> f64 {
        0.75 * PI * self.radius
    }

    /// Parameter interval of chart `alpha` (the left end may be negative).
    pub fn chart_interval(&self, alpha: usize) -> (f64, f64) {
        let c = self.center(alpha);
        (c - self.half_width(), c + self.half_width())
    }

    fn signed_offset(&self, alpha: usize, s: f64) -> f64 {
        let l = self.length();
        let d = (s - self.center(alpha)).rem_euclid(l);
        if d > 0.5 * l {
            d - l
        } else {
            d
        }
    }

    pub fn bump(&self, alpha: usize, s: f64) -> f64 {
        let t = self.signed_offset(alpha, s) / self.half_width();
        if t.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - t * t).powi(2)
        }
    }

    /// `[rho_0(s), rho_1(s)]`, non-negative and summing to one.
    pub fn partition(&self, s: f64) -> [f64; 2] {
        let b = [self.bump(0, s), self.bump(1, s)];
        let total = b[0] + b[1];
        [b[0] / total, b[1] / total]
    }

    /// `sum_alpha int rho_alpha f` over each chart's own interval.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let rule = UnitRule::gauss_legendre(Self::NODES);
        let l = self.length();
        let mut total = 0.0;
        for alpha in 0..2 {
            let (a, b) = self.chart_interval(alpha);
            let other = self.chart_interval(1 - alpha);
            let mut cuts = vec![a, b];
            for e in [other.0, other.1] {
                for shift in [-l, 0.0, l] {
                    let p = e + shift;
                    if p > a && p < b {
                        cuts.push(p);
                    }
                }
            }
            cuts.sort_by(f64::total_cmp);
            for w in cuts.windows(2) {
                total += rule.integrate_composite(w[0], w[1], Self::PANELS, |s| {
                    let s = s.rem_euclid(l);
                    self.partition(s)[alpha] * f(s)
                });
            }
        }
        total
    }

    /// `int_0^{2 pi r} f` in the single periodic chart.
    pub fn integrate_single(&self, f: impl Fn(f64) -> f64) -> f64 {
        UnitRule::gauss_legendre(Self::NODES).integrate_composite(0.0, self.length(), 4 * Self::PANELS, f)
    }
}
