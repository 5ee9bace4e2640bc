//! Dual MAP construction under weak reversibility, and the residual check of
//! the defining identity.
//!
//! For a finite-state MAP with self-dual modulator and symmetric switch
//! jumps, the dual of (xi, Theta) is (-xi, Theta) with time-reversed chain:
//! Q~ = diag(pi)^-1 Q^T diag(pi), negated drifts and sign-flipped jump laws.
//! At the level of characteristic matrix exponents this reads
//! F~(lambda) = diag(pi)^-1 F(lambda)^T diag(pi).

use crate::error::{Error, Result};
use crate::linalg::expm;
use crate::spec::{matrix_exponent, MapSpec};
use num_complex::Complex64;

/// Build the dual spec for (xi, Theta) from the invariant law `pi` of the
/// modulator. Requires symmetric switch jumps (Xi_jk equal in law to Xi_kj);
/// an asymmetric matrix would need an explicitly supplied partner law.
pub fn build_dual(spec: &MapSpec, pi: &[f64]) -> Result<MapSpec> {
    let n = spec.n_states;
    if pi.len() != n {
        return Err(Error::DimensionMismatch(
            "pi length differs from n_states".into(),
        ));
    }
    // pi must actually be invariant for Q
    for k in 0..n {
        let r: f64 = pi.iter().zip(&spec.q).map(|(p, row)| p * row[k]).sum();
        if r.abs() > 1e-8 {
            return Err(Error::NotInvariant(r.abs()));
        }
    }
    if let Some(m) = &spec.switch_jumps {
        #[allow(clippy::needless_range_loop)]
        for j in 0..n {
            for k in (j + 1)..n {
                if m[j][k] != m[k][j] {
                    return Err(Error::AsymmetricSwitchJumps(j, k));
                }
            }
        }
    }
    let mut q = vec![vec![0.0; n]; n];
    for j in 0..n {
        for k in 0..n {
            q[j][k] = pi[k] * spec.q[k][j] / pi[j];
        }
    }
    // enforce exact zero row sums against rounding
    for (j, row) in q.iter_mut().enumerate() {
        let off: f64 = row
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != j)
            .map(|(_, v)| *v)
            .sum();
        row[j] = -off;
    }
    let switch_jumps = spec.switch_jumps.as_ref().map(|m| {
        let mut flipped = vec![vec![crate::spec::JumpLaw::None; n]; n];
        for j in 0..n {
            for k in 0..n {
                // reversed transition k -> j carries the jump of j -> k,
                // negated; symmetry makes this the (j, k) entry negated
                flipped[j][k] = m[k][j].negate();
            }
        }
        flipped
    });
    crate::spec::validate_spec(MapSpec {
        n_states: n,
        q,
        drift: spec.drift.iter().map(|a| -a).collect(),
        sigma: spec.sigma.clone(),
        jumps: spec
            .jumps
            .iter()
            .map(|c| crate::spec::JumpComponent {
                rate: c.rate,
                law: c.law.negate(),
            })
            .collect(),
        switch_jumps,
        kill_rate: spec.kill_rate,
    })
}

/// Max over the (lambda, t) grid of
/// || exp(F^(lambda) t) - diag(pi)^-1 exp(F(-lambda) t)^T diag(pi) ||_inf.
///
/// The sign flip on the transposed side accounts for the dual carrying the
/// negated ordinate: the partner identity F~(lambda) = D^-1 F(lambda)^T D
/// becomes F^(lambda) = D^-1 F(-lambda)^T D after negation.
pub fn weak_reversibility_check(
    spec: &MapSpec,
    dual_spec: &MapSpec,
    pi: &[f64],
    lambda_grid: &[f64],
    t_grid: &[f64],
) -> Result<f64> {
    let n = spec.n_states;
    let mut worst = 0.0_f64;
    for &lambda in lambda_grid {
        let f = matrix_exponent(spec, -lambda)?;
        let fd = matrix_exponent(dual_spec, lambda)?;
        for &t in t_grid {
            let tc = Complex64::new(t, 0.0);
            let e = expm(&f.map(|x| x * tc));
            let ed = expm(&fd.map(|x| x * tc));
            for j in 0..n {
                for k in 0..n {
                    let conj = e[(k, j)] * (pi[k] / pi[j]);
                    worst = worst.max((ed[(j, k)] - conj).norm());
                }
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::{stationary_pi, validate_spec, JumpComponent, JumpLaw, MapSpec};
    use approx::assert_relative_eq;

    fn wr_spec() -> MapSpec {
        validate_spec(MapSpec {
            n_states: 2,
            q: vec![vec![-1.0, 1.0], vec![2.0, -2.0]],
            drift: vec![0.5, -1.0],
            sigma: vec![1.0, 1.0],
            jumps: vec![
                JumpComponent {
                    rate: 0.5,
                    law: JumpLaw::Exponential { beta: 2.0, up: true },
                },
                JumpComponent::none(),
            ],
            switch_jumps: None,
            kill_rate: 0.0,
        })
        .unwrap()
    }

    #[test]
    fn one_state_dual_negates_drift() {
        let spec = MapSpec::brownian(0.7, 1.0);
        let dual = build_dual(&spec, &[1.0]).unwrap();
        assert_relative_eq!(dual.drift[0], -0.7);
        assert_eq!(dual.q, spec.q);
    }

    #[test]
    fn dual_is_an_involution() {
        let spec = wr_spec();
        let pi = stationary_pi(&spec.q).unwrap();
        let dd = build_dual(&build_dual(&spec, &pi).unwrap(), &pi).unwrap();
        assert_eq!(dd.drift, spec.drift);
        assert_eq!(dd.sigma, spec.sigma);
        assert_eq!(dd.jumps, spec.jumps);
        for j in 0..2 {
            for k in 0..2 {
                assert_relative_eq!(dd.q[j][k], spec.q[j][k], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn two_state_chain_reversal_is_identity_here() {
        // Q~ = diag(pi)^-1 Q^T diag(pi) with pi = (2/3, 1/3) reproduces Q
        let spec = wr_spec();
        let pi = stationary_pi(&spec.q).unwrap();
        let dual = build_dual(&spec, &pi).unwrap();
        assert_relative_eq!(dual.q[0][1], 1.0, epsilon = 1e-12);
        assert_relative_eq!(dual.q[1][0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn wrong_pi_is_rejected() {
        let spec = wr_spec();
        assert!(matches!(
            build_dual(&spec, &[0.5, 0.5]),
            Err(crate::Error::NotInvariant(_))
        ));
    }

    #[test]
    fn asymmetric_switch_jumps_are_rejected() {
        let mut spec = wr_spec();
        let mut m = vec![vec![JumpLaw::None; 2]; 2];
        m[0][1] = JumpLaw::PointMass { c: 1.0 };
        m[1][0] = JumpLaw::PointMass { c: 2.0 };
        spec.switch_jumps = Some(m);
        let pi = stationary_pi(&spec.q).unwrap();
        assert!(matches!(
            build_dual(&spec, &pi),
            Err(crate::Error::AsymmetricSwitchJumps(0, 1))
        ));
    }

    #[test]
    fn self_dual_residual_is_tiny() {
        let spec = wr_spec();
        let pi = stationary_pi(&spec.q).unwrap();
        let dual = build_dual(&spec, &pi).unwrap();
        let res = weak_reversibility_check(
            &spec,
            &dual,
            &pi,
            &[0.0, 0.5, 1.0, 2.0],
            &[0.1, 1.0, 3.0],
        )
        .unwrap();
        assert!(res < 1e-10, "residual {res}");
    }

    #[test]
    fn one_state_residual_is_zero() {
        let spec = MapSpec::brownian(0.3, 1.0);
        let dual = build_dual(&spec, &[1.0]).unwrap();
        let res =
            weak_reversibility_check(&spec, &dual, &[1.0], &[0.0, 1.0, 2.0], &[0.5, 1.0]).unwrap();
        assert!(res < 1e-12);
    }

    #[test]
    fn perturbed_q_is_flagged() {
        let spec = wr_spec();
        let pi = stationary_pi(&spec.q).unwrap();
        let mut bad = build_dual(&spec, &pi).unwrap();
        bad.q[0][1] += 0.1;
        bad.q[0][0] -= 0.1;
        let res = weak_reversibility_check(
            &spec,
            &bad,
            &pi,
            &[0.0, 0.5, 1.0, 2.0],
            &[0.1, 1.0, 3.0],
        )
        .unwrap();
        assert!(res > 1e-3, "residual {res} should flag the perturbation");
    }
}
