use serde::{Deserialize, Serialize};

/// Threshold below which the forcing term counts as vanished.
pub const G_TOL: f64 = 1e-8;

/// Samples of `L` and the forcing `g` on a dyadic ladder `R_j = R_0 2^j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ladder {
    pub radii: Vec<f64>,
    pub l: Vec<f64>,
    pub g: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    Malformed { reason: String },
    NotDyadic { rung: usize },
    Strictness { theta: f64, threshold: f64 },
    Negative { rung: usize, value: f64 },
    Decreasing { rung: usize },
    Contraction { rung: usize, lhs: f64, rhs: f64 },
    Growth { rung: usize, value: f64, bound: f64 },
    ForcingPersists { last: f64, tol: f64 },
}

/// One link of the iterate bound `L(R_j) <= theta^m L(R_{j+m}) + sum theta^i g(R_{j+i})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainLink {
    pub rung: usize,
    pub m: usize,
    pub value: f64,
    /// `theta^m C R_{j+m}^gamma + sum_{i<m} theta^i g_{j+i}`.
    pub bound: f64,
    /// `C (2^gamma theta)^m R_j^gamma`, the forcing-free form.
    pub closed_form: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum IterationVerdict {
    ForcedZero { chain: Vec<ChainLink> },
    HypothesisViolated { violations: Vec<Violation> },
}

impl IterationVerdict {
    pub fn is_forced_zero(&self) -> bool {
        matches!(self, IterationVerdict::ForcedZero { .. })
    }
}

/// Check the hypotheses of the iteration lemma on a finite ladder.
pub fn iteration_lemma_verdict(ladder: &Ladder, theta: f64, gamma: f64, c: f64) -> IterationVerdict {
    let n = ladder.radii.len();
    let mut bad = Vec::new();
    if n == 0 || ladder.l.len() != n || ladder.g.len() != n {
        bad.push(Violation::Malformed {
            reason: "radii, L and g must be non-empty and of equal length".into(),
        });
        return IterationVerdict::HypothesisViolated { violations: bad };
    }
    if !(theta > 0.0 && gamma > 0.0 && c >= 0.0) {
        bad.push(Violation::Malformed {
            reason: format!("need theta > 0, gamma > 0, C >= 0 (got {theta}, {gamma}, {c})"),
        });
        return IterationVerdict::HypothesisViolated { violations: bad };
    }
    let r = &ladder.radii;
    let l = &ladder.l;
    let g = &ladder.g;
    for j in 1..n {
        if ((r[j] - 2.0 * r[j - 1]) / r[j]).abs() > 1e-12 {
            bad.push(Violation::NotDyadic { rung: j });
        }
    }
    let threshold = 2f64.powf(-gamma);
    if !(theta < threshold) {
        bad.push(Violation::Strictness { theta, threshold });
    }
    for j in 0..n {
        if !(l[j] >= 0.0) {
            bad.push(Violation::Negative { rung: j, value: l[j] });
        }
        if j + 1 < n && !(l[j] <= l[j + 1]) {
            bad.push(Violation::Decreasing { rung: j });
        }
        if j + 1 < n {
            let rhs = theta * l[j + 1] + g[j];
            if !(l[j] <= rhs) {
                bad.push(Violation::Contraction {
                    rung: j,
                    lhs: l[j],
                    rhs,
                });
            }
        }
        let bound = c * r[j].powf(gamma);
        if !(l[j] <= bound) {
            bad.push(Violation::Growth {
                rung: j,
                value: l[j],
                bound,
            });
        }
    }
    if !(g[n - 1].abs() < G_TOL) {
        bad.push(Violation::ForcingPersists {
            last: g[n - 1],
            tol: G_TOL,
        });
    }
    if !bad.is_empty() {
        return IterationVerdict::HypothesisViolated { violations: bad };
    }

    let mut chain = Vec::new();
    for j in 0..n {
        let mut forcing = 0.0;
        for m in 0..n - j {
            let bound = theta.powi(m as i32) * c * r[j + m].powf(gamma) + forcing;
            chain.push(ChainLink {
                rung: j,
                m,
                value: l[j],
                bound,
                closed_form: c * (threshold.recip() * theta).powi(m as i32) * r[j].powf(gamma),
            });
            forcing += theta.powi(m as i32) * g[j + m];
        }
    }
    IterationVerdict::ForcedZero { chain }
}
