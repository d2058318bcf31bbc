use serde::{Deserialize, Serialize};

use crate::quadrature::unit_ball_volume;
use crate::{Error, Result};

/// Room reserved for the `Theta_2 / R^2` part when choosing `eps_0`.
pub const EPS0_MARGIN: f64 = 0.1;
/// Bisection stops once the bracket is this narrow.
pub const EPS0_TOL: f64 = 1e-10;

/// Inputs of the contraction constants. Absent entries raise
/// [`Error::MissingConstant`] when the bundle is computed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ThetaInputs {
    pub c_a: Option<f64>,
    pub c_s: Option<f64>,
    /// Volume of the unit `k`-ball; filled from `k` when absent.
    #[serde(default)]
    pub gamma_k: Option<f64>,
    pub t: Option<f64>,
    pub k: Option<usize>,
    pub eps: Option<f64>,
    /// Upper end of the admissible radii, used by [`epsilon0_solve`].
    #[serde(default)]
    pub eps1: Option<f64>,
    pub lambda: Option<f64>,
    pub q: Option<f64>,
    pub l_f: Option<f64>,
    pub a_sup: Option<f64>,
    pub grad_u: Option<f64>,
    pub grad_v: Option<f64>,
}

/// [`ThetaInputs`] with every entry present.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedInputs {
    pub c_a: f64,
    pub c_s: f64,
    pub gamma_k: f64,
    pub t: f64,
    pub k: usize,
    pub eps: f64,
    pub lambda: f64,
    pub q: f64,
    pub l_f: f64,
    pub a_sup: f64,
    pub grad_u: f64,
    pub grad_v: f64,
}

impl ThetaInputs {
    pub fn resolve(&self) -> Result<ResolvedInputs> {
        fn get<T: Copy>(v: Option<T>, name: &str) -> Result<T> {
            v.ok_or_else(|| Error::MissingConstant(name.into()))
        }
        let k = get(self.k, "k")?;
        let r = ResolvedInputs {
            c_a: get(self.c_a, "C_a")?,
            c_s: get(self.c_s, "C_S")?,
            gamma_k: self.gamma_k.unwrap_or_else(|| unit_ball_volume(k)),
            t: get(self.t, "t")?,
            k,
            eps: get(self.eps, "eps")?,
            lambda: get(self.lambda, "Lambda")?,
            q: get(self.q, "q")?,
            l_f: get(self.l_f, "L_f")?,
            a_sup: get(self.a_sup, "a_sup")?,
            grad_u: get(self.grad_u, "grad_u")?,
            grad_v: get(self.grad_v, "grad_v")?,
        };
        let finite = [
            r.c_a, r.c_s, r.gamma_k, r.t, r.eps, r.lambda, r.q, r.l_f, r.a_sup, r.grad_u, r.grad_v,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("contraction inputs must be finite".into()));
        }
        if !(r.t > k as f64) {
            return Err(Error::BadExponent { t: r.t, k });
        }
        if !(r.c_a > 0.0 && r.c_s >= 0.0 && r.eps > 0.0 && r.q >= 1.0) {
            return Err(Error::InvalidInput(
                "need C_a > 0, C_S >= 0, eps > 0 and q >= 1".into(),
            ));
        }
        if [r.l_f, r.a_sup, r.grad_u, r.grad_v].iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidInput("norms and L_f must be non-negative".into()));
        }
        Ok(r)
    }
}

impl ResolvedInputs {
    /// `G = ||grad u|| + ||grad v||`.
    pub fn grad_sum(&self) -> f64 {
        self.grad_u + self.grad_v
    }

    fn exponents(&self) -> (f64, f64, f64, f64) {
        let (t, k) = (self.t, self.k as f64);
        (
            (2.0 * t - 2.0 * k) / t,
            (2.0 * t - 2.0 * k) / (k * t),
            (2.0 * t - k) / t,
            (2.0 * t - k) / (k * t),
        )
    }

    /// `C_a^{-t} C_S^2 Gamma_k^{(2t-2k)/(kt)} eps^{(2t-2k)/t}`.
    fn core_a(&self) -> f64 {
        let (ea, ga, _, _) = self.exponents();
        self.c_a.powf(-self.t) * self.c_s.powi(2) * self.gamma_k.powf(ga) * self.eps.powf(ea)
    }

    /// `C_S^2 Gamma_k^{(2t-k)/(kt)} eps^{(2t-k)/t}`.
    fn core_b(&self) -> f64 {
        let (_, _, eb, gb) = self.exponents();
        self.c_s.powi(2) * self.gamma_k.powf(gb) * self.eps.powf(eb)
    }

    /// `tau = 1 / (2 |Lambda| q G^{q-1})`, undefined for `Lambda = 0`.
    pub fn tau(&self) -> Option<f64> {
        (self.lambda != 0.0)
            .then(|| 1.0 / (2.0 * self.lambda.abs() * self.q * self.grad_sum().powf(self.q - 1.0)))
    }

    /// Bound factor on `A_{2R} / L_{2R}` for general `beta`.
    pub fn audit_a(&self, beta: f64, tau: f64) -> f64 {
        tau + 3.0 * self.core_a() * (beta + 1.0).powi(2) / (16.0 * tau)
    }

    /// Bound factor on `B_{2R} / L_{2R}` for general `beta`.
    pub fn audit_b(&self, beta: f64) -> f64 {
        3.0 * self.core_b() * (beta + 1.0).powi(2) / 4.0
    }

    /// Factor multiplying `int_{Omega_2R} a [(u-v)^+]^{beta-1} |grad(u-v)|^2`
    /// in the bound on `C_{2R}`.
    pub fn audit_c(&self, beta: f64, tau_prime: f64, radius: f64) -> f64 {
        3.0 * self.core_b() * (beta + 1.0).powi(2) * self.a_sup / (4.0 * tau_prime * radius * radius)
    }
}

/// The contraction constants at `beta = 2`, `tau' = 1/4`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaBundle {
    pub theta_a: f64,
    pub theta_b: f64,
    pub theta_c: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub beta: f64,
    pub tau: Option<f64>,
    pub tau_prime: f64,
    pub inputs: ResolvedInputs,
}

impl ThetaBundle {
    /// `theta(R) = Theta_1 + Theta_2 / R^2`.
    pub fn theta(&self, radius: f64) -> f64 {
        self.theta1 + self.theta2 / (radius * radius)
    }
}

pub fn theta_constants(inputs: &ThetaInputs) -> Result<ThetaBundle> {
    bundle(inputs.resolve()?)
}

fn bundle(r: ResolvedInputs) -> Result<ThetaBundle> {
    let theta_a = 27.0 * r.core_a() / 16.0;
    let theta_b = 27.0 * r.core_b() / 4.0;
    let theta_c = 27.0 * r.core_b() * r.a_sup;
    let gradient_part = if r.lambda == 0.0 {
        0.0
    } else {
        2.0 * r.lambda.powi(2) * r.q.powi(2) * r.grad_sum().powf(2.0 * r.q - 2.0) * theta_a
    };
    let theta1 = gradient_part + r.l_f * theta_b;
    Ok(ThetaBundle {
        theta_a,
        theta_b,
        theta_c,
        theta1,
        theta2: 2.0 * theta_c,
        beta: 2.0,
        tau: r.tau(),
        tau_prime: 0.25,
        inputs: r,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Epsilon0 {
    pub epsilon0: f64,
    pub epsilon1: f64,
    pub target: f64,
    /// `Theta_1(eps_0)`.
    pub theta1: f64,
    /// `theta(R_large)` at `eps_0`.
    pub theta_at_r_large: f64,
    pub r_large: f64,
    /// Final bracket width.
    pub bracket: f64,
}

/// Largest `eps` in `(0, eps1]` with `theta1(eps) <= target`, for increasing
/// `theta1`. The bracket is halved a fixed number of times, so the result is
/// the root rounded down to a dyadic grid of `[0, eps1]`.
pub fn epsilon0_bisect(theta1: impl Fn(f64) -> f64, eps1: f64, target: f64) -> Result<(f64, f64)> {
    if !(eps1 > 0.0 && eps1.is_finite() && target > 0.0) {
        return Err(Error::InvalidInput(format!(
            "need eps1 > 0 and a positive target (got {eps1}, {target})"
        )));
    }
    if theta1(eps1) <= target {
        return Ok((eps1, 0.0));
    }
    let (mut lo, mut hi) = (0.0, eps1);
    while hi - lo > EPS0_TOL {
        let mid = 0.5 * (lo + hi);
        if theta1(mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo == 0.0 {
        return Err(Error::NoAdmissibleEps {
            eps: hi,
            theta1: theta1(hi),
            target,
        });
    }
    Ok((lo, hi - lo))
}

/// `eps_0` with every constant but `eps` held fixed:
/// `Theta_1(eps_0) <= (1 - EPS0_MARGIN) 2^{-gamma}`.
pub fn epsilon0_solve(inputs: &ThetaInputs, gamma: f64, r_large: f64) -> Result<Epsilon0> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidInput(format!("gamma = {gamma} must be positive")));
    }
    if !(r_large > 0.0) {
        return Err(Error::InvalidInput(format!("R = {r_large} must be positive")));
    }
    let eps1 = inputs
        .eps1
        .ok_or_else(|| Error::MissingConstant("eps1".into()))?;
    let mut base = inputs.clone();
    base.eps.get_or_insert(eps1);
    let r = base.resolve()?;
    let at = |eps: f64| bundle(ResolvedInputs { eps, ..r });
    let target = (1.0 - EPS0_MARGIN) * 2f64.powf(-gamma);
    let (eps0, bracket) = epsilon0_bisect(|e| at(e).map_or(f64::INFINITY, |b| b.theta1), eps1, target)?;
    let b = at(eps0)?;
    Ok(Epsilon0 {
        epsilon0: eps0,
        epsilon1: eps1,
        target,
        theta1: b.theta1,
        theta_at_r_large: b.theta(r_large),
        r_large,
        bracket,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs() -> ThetaInputs {
        ThetaInputs {
            c_a: Some(0.5),
            c_s: Some(2.0),
            gamma_k: None,
            t: Some(3.0),
            k: Some(2),
            eps: Some(0.1),
            eps1: Some(0.5),
            lambda: Some(0.1),
            q: Some(2.0),
            l_f: Some(0.25),
            a_sup: Some(1.2),
            grad_u: Some(0.3),
            grad_v: Some(0.2),
        }
    }

    #[test]
    fn missing_entry_is_named() {
        let mut i = inputs();
        i.c_s = None;
        assert_eq!(theta_constants(&i), Err(Error::MissingConstant("C_S".into())));
    }

    #[test]
    fn beta_two_matches_general_prefactors() {
        let b = theta_constants(&inputs()).unwrap();
        let r = b.inputs;
        let tau = b.tau.unwrap();
        assert!((r.audit_a(2.0, tau) - (tau + b.theta_a / tau)).abs() < 1e-12 * b.theta_a.max(1.0));
        assert!((r.audit_b(2.0) - b.theta_b).abs() < 1e-14);
        assert!((r.audit_c(2.0, 0.25, 2.0) - b.theta_c / 4.0).abs() < 1e-14);
    }

    #[test]
    fn epsilon1_returned_when_nothing_binds() {
        let (e, w) = epsilon0_bisect(|_| 0.0, 0.3, 0.45).unwrap();
        assert_eq!((e, w), (0.3, 0.0));
        assert!(matches!(
            epsilon0_bisect(|_| 1.0, 0.3, 0.45),
            Err(Error::NoAdmissibleEps { .. })
        ));
    }
}
