//! Model description for a finite-state-modulated MAP: chain intensity
//! matrix, per-state ordinate data (drift, diffusion scale, compound-Poisson
//! jumps) and optional switch jumps applied atomically at chain transitions.

use crate::error::{Error, Result};
use crate::rng;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Law of a single jump. Tail functions are evaluated analytically where a
/// closed form exists; empirical laws fall back to resampling and the ECDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JumpLaw {
    None,
    PointMass { c: f64 },
    Exponential { beta: f64, up: bool },
    TwoSidedExponential { beta_up: f64, beta_down: f64, p_up: f64 },
    Empirical { samples: Vec<f64> },
}

impl JumpLaw {
    pub fn validate(&self, at: &str) -> Result<()> {
        match self {
            JumpLaw::None | JumpLaw::PointMass { .. } => Ok(()),
            JumpLaw::Exponential { beta, .. } => {
                if *beta > 0.0 {
                    Ok(())
                } else {
                    Err(Error::MalformedJumpLaw(
                        at.into(),
                        format!("beta = {beta} must be > 0"),
                    ))
                }
            }
            JumpLaw::TwoSidedExponential {
                beta_up,
                beta_down,
                p_up,
            } => {
                if *beta_up <= 0.0 || *beta_down <= 0.0 {
                    return Err(Error::MalformedJumpLaw(
                        at.into(),
                        "beta parameters must be > 0".into(),
                    ));
                }
                if !(0.0..=1.0).contains(p_up) {
                    return Err(Error::MalformedJumpLaw(
                        at.into(),
                        format!("p_up = {p_up} outside [0, 1]"),
                    ));
                }
                Ok(())
            }
            JumpLaw::Empirical { samples } => {
                if samples.is_empty() {
                    Err(Error::MalformedJumpLaw(at.into(), "empty sample list".into()))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, JumpLaw::None)
    }

    /// Draw one jump. Empirical laws resample with replacement.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        use rand::Rng;
        match self {
            JumpLaw::None => 0.0,
            JumpLaw::PointMass { c } => *c,
            JumpLaw::Exponential { beta, up } => {
                let e = rng::exponential(rng, *beta);
                if *up {
                    e
                } else {
                    -e
                }
            }
            JumpLaw::TwoSidedExponential {
                beta_up,
                beta_down,
                p_up,
            } => {
                if rng.gen::<f64>() < *p_up {
                    rng::exponential(rng, *beta_up)
                } else {
                    -rng::exponential(rng, *beta_down)
                }
            }
            JumpLaw::Empirical { samples } => {
                let i = rng.gen_range(0..samples.len());
                samples[i]
            }
        }
    }

    /// Upper tail P(J > y). Closed form where available, ECDF otherwise.
    pub fn tail(&self, y: f64) -> f64 {
        match self {
            JumpLaw::None => 0.0,
            JumpLaw::PointMass { c } => {
                if *c > y {
                    1.0
                } else {
                    0.0
                }
            }
            JumpLaw::Exponential { beta, up } => {
                if *up {
                    if y <= 0.0 {
                        1.0
                    } else {
                        (-beta * y).exp()
                    }
                } else if y < 0.0 {
                    1.0 - (beta * y).exp()
                } else {
                    0.0
                }
            }
            JumpLaw::TwoSidedExponential {
                beta_up,
                beta_down,
                p_up,
            } => {
                if y >= 0.0 {
                    p_up * (-beta_up * y).exp()
                } else {
                    p_up + (1.0 - p_up) * (1.0 - (beta_down * y).exp())
                }
            }
            JumpLaw::Empirical { samples } => {
                let n = samples.len() as f64;
                samples.iter().filter(|s| **s > y).count() as f64 / n
            }
        }
    }

    /// Mean jump size (used by the analytic long-run drift formula).
    pub fn mean(&self) -> f64 {
        match self {
            JumpLaw::None => 0.0,
            JumpLaw::PointMass { c } => *c,
            JumpLaw::Exponential { beta, up } => {
                let m = 1.0 / beta;
                if *up {
                    m
                } else {
                    -m
                }
            }
            JumpLaw::TwoSidedExponential {
                beta_up,
                beta_down,
                p_up,
            } => p_up / beta_up - (1.0 - p_up) / beta_down,
            JumpLaw::Empirical { samples } => {
                samples.iter().sum::<f64>() / samples.len() as f64
            }
        }
    }

    /// Characteristic function E[exp(i lambda J)].
    pub fn characteristic(&self, lambda: f64) -> Complex64 {
        let i = Complex64::i();
        match self {
            JumpLaw::None => Complex64::new(1.0, 0.0),
            JumpLaw::PointMass { c } => (i * lambda * *c).exp(),
            JumpLaw::Exponential { beta, up } => {
                let b = Complex64::new(*beta, 0.0);
                if *up {
                    b / (b - i * lambda)
                } else {
                    b / (b + i * lambda)
                }
            }
            JumpLaw::TwoSidedExponential {
                beta_up,
                beta_down,
                p_up,
            } => {
                let bu = Complex64::new(*beta_up, 0.0);
                let bd = Complex64::new(*beta_down, 0.0);
                *p_up * bu / (bu - i * lambda) + (1.0 - *p_up) * bd / (bd + i * lambda)
            }
            JumpLaw::Empirical { samples } => {
                let n = samples.len() as f64;
                samples
                    .iter()
                    .map(|s| (i * lambda * *s).exp())
                    .sum::<Complex64>()
                    / n
            }
        }
    }

    /// The law of -J.
    pub fn negate(&self) -> JumpLaw {
        match self {
            JumpLaw::None => JumpLaw::None,
            JumpLaw::PointMass { c } => JumpLaw::PointMass { c: -c },
            JumpLaw::Exponential { beta, up } => JumpLaw::Exponential {
                beta: *beta,
                up: !up,
            },
            JumpLaw::TwoSidedExponential {
                beta_up,
                beta_down,
                p_up,
            } => JumpLaw::TwoSidedExponential {
                beta_up: *beta_down,
                beta_down: *beta_up,
                p_up: 1.0 - p_up,
            },
            JumpLaw::Empirical { samples } => JumpLaw::Empirical {
                samples: samples.iter().map(|s| -s).collect(),
            },
        }
    }
}

/// Ordinate jump component of one state: a compound-Poisson clock and the
/// law of each jump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpComponent {
    pub rate: f64,
    pub law: JumpLaw,
}

impl JumpComponent {
    pub fn none() -> Self {
        JumpComponent {
            rate: 0.0,
            law: JumpLaw::None,
        }
    }
}

/// Full parametric description of a finite-state-modulated MAP.
///
/// Units: `q[j][k]` and rates are 1/time, `drift` is space/time, `sigma` is
/// space/sqrt(time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub n_states: usize,
    /// Intensity matrix of the modulating chain, row-major.
    pub q: Vec<Vec<f64>>,
    pub drift: Vec<f64>,
    pub sigma: Vec<f64>,
    pub jumps: Vec<JumpComponent>,
    /// Optional switch-jump laws, `switch_jumps[j][k]` applied when the
    /// chain moves j -> k. `None` means no switch jumps at all.
    pub switch_jumps: Option<Vec<Vec<JumpLaw>>>,
    pub kill_rate: f64,
}

impl MapSpec {
    /// A one-state (Levy) spec.
    pub fn levy(drift: f64, sigma: f64, jumps: JumpComponent) -> Self {
        MapSpec {
            n_states: 1,
            q: vec![vec![0.0]],
            drift: vec![drift],
            sigma: vec![sigma],
            jumps: vec![jumps],
            switch_jumps: None,
            kill_rate: 0.0,
        }
    }

    /// Standard Brownian ordinate with drift, one state.
    pub fn brownian(drift: f64, sigma: f64) -> Self {
        Self::levy(drift, sigma, JumpComponent::none())
    }

    pub fn switch_law(&self, from: usize, to: usize) -> &JumpLaw {
        match &self.switch_jumps {
            Some(m) => &m[from][to],
            None => &JumpLaw::None,
        }
    }

    /// Total intensity of leaving state `j`.
    pub fn exit_rate(&self, j: usize) -> f64 {
        -self.q[j][j]
    }

    /// Analytic long-run ordinate drift under the stationary chain law:
    /// sum_j pi_j (a_j + rate_j E[J_j]) + sum_{j != k} pi_j q_jk E[Xi_jk].
    pub fn analytic_drift(&self, pi: &[f64]) -> f64 {
        let mut total = 0.0;
        for (j, pj) in pi.iter().enumerate() {
            total += pj * (self.drift[j] + self.jumps[j].rate * self.jumps[j].law.mean());
            for k in 0..self.n_states {
                if j != k {
                    total += pj * self.q[j][k] * self.switch_law(j, k).mean();
                }
            }
        }
        total
    }

    /// True when no state has a Gaussian component (pure event-driven
    /// dynamics, simulated without a mesh).
    pub fn is_diffusion_free(&self) -> bool {
        self.sigma.iter().all(|s| *s == 0.0)
    }
}

/// Check all structural invariants; returns the spec on success so calls can
/// be chained. Errors name the offending index.
pub fn validate_spec(spec: MapSpec) -> Result<MapSpec> {
    let n = spec.n_states;
    if n == 0 {
        return Err(Error::DimensionMismatch("n_states must be positive".into()));
    }
    if spec.q.len() != n
        || spec.q.iter().any(|row| row.len() != n)
        || spec.drift.len() != n
        || spec.sigma.len() != n
        || spec.jumps.len() != n
    {
        return Err(Error::DimensionMismatch(format!(
            "field lengths inconsistent with n_states = {n}"
        )));
    }
    for (j, row) in spec.q.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            if j != k && v < 0.0 {
                return Err(Error::NegativeOffDiagonal(j, k));
            }
        }
        let sum: f64 = row.iter().sum();
        if sum.abs() > 1e-9 {
            return Err(Error::RowSum(j, sum));
        }
    }
    for j in 0..n {
        if spec.sigma[j] < 0.0 {
            return Err(Error::NegativeRate(j, spec.sigma[j]));
        }
        if spec.jumps[j].rate < 0.0 {
            return Err(Error::NegativeRate(j, spec.jumps[j].rate));
        }
        spec.jumps[j].law.validate(&format!("state {j}"))?;
    }
    if let Some(m) = &spec.switch_jumps {
        if m.len() != n || m.iter().any(|row| row.len() != n) {
            return Err(Error::DimensionMismatch(
                "switch_jumps must be n_states x n_states".into(),
            ));
        }
        for (j, row) in m.iter().enumerate() {
            for (k, law) in row.iter().enumerate() {
                law.validate(&format!("switch ({j}, {k})"))?;
            }
        }
    }
    if spec.kill_rate < 0.0 {
        return Err(Error::NegativeRate(0, spec.kill_rate));
    }
    Ok(spec)
}

/// Stationary distribution of an irreducible intensity matrix: solves
/// pi Q = 0 with the mass constraint replacing the last (redundant) column.
pub fn stationary_pi(q: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = q.len();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    // columns of A are Q^T rows, i.e. A pi^T = 0; replace last row by ones
    let mut a = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            a[(k, j)] = q[j][k];
        }
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = nalgebra::DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let lu = a.lu();
    let pi = lu.solve(&b).ok_or(Error::ReducibleChain)?;
    let pi: Vec<f64> = pi.iter().copied().collect();
    if pi.iter().any(|p| *p <= 1e-12 || p.is_nan()) {
        return Err(Error::ReducibleChain);
    }
    // residual check of pi Q = 0
    for k in 0..n {
        let r: f64 = pi.iter().zip(q).map(|(p, row)| p * row[k]).sum();
        if r.abs() > 1e-8 {
            return Err(Error::ReducibleChain);
        }
    }
    Ok(pi)
}

/// Characteristic matrix exponent
/// F(lambda) = diag(-psi_j(lambda)) + (q_jk J_jk(lambda)), where psi_j is
/// the characteristic exponent of the state-j ordinate and J_jk the
/// characteristic function of the switch jump. Killing subtracts the kill
/// rate on the diagonal, so F(0) = Q exactly for unkilled specs.
pub fn matrix_exponent(spec: &MapSpec, lambda: f64) -> Result<DMatrix<Complex64>> {
    let n = spec.n_states;
    let i = Complex64::i();
    let mut f = DMatrix::<Complex64>::zeros(n, n);
    for j in 0..n {
        if let JumpLaw::Empirical { .. } = spec.jumps[j].law {
            // empirical laws do fall back to the sample characteristic
            // function; nothing to reject here
        }
        // psi_j(lambda) = i a lambda - sigma^2 lambda^2 / 2
        //               + rate (J(lambda) - 1)
        let mut psi = i * spec.drift[j] * lambda
            - Complex64::new(0.5 * spec.sigma[j].powi(2) * lambda * lambda, 0.0);
        if spec.jumps[j].rate > 0.0 {
            psi += spec.jumps[j].rate * (spec.jumps[j].law.characteristic(lambda) - 1.0);
        }
        f[(j, j)] = psi - Complex64::new(spec.kill_rate, 0.0);
        for k in 0..n {
            let qjk = Complex64::new(spec.q[j][k], 0.0);
            if j == k {
                f[(j, j)] += qjk;
            } else {
                f[(j, k)] = qjk * spec.switch_law(j, k).characteristic(lambda);
            }
        }
    }
    Ok(f)
}
