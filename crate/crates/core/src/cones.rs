//! Planar Brownian motion conditioned to stay in a wedge, and the
//! gamma-ratio exponent evaluators of the rotationally invariant stable
//! ordinate.
//!
//! The wedge of half-angle span theta0 carries the Dirichlet eigenpair
//! lambda_1 = (pi/theta0)^2, m_1(phi) = sin(pi phi / theta0) and the
//! harmonic function M(x) = ||x||^p m_1(arg x) with
//! p = sqrt(lambda_1 + (d/2 - 1)^2) - (d/2 - 1). Conditioning to stay in
//! the wedge is the Doob transform by M.
//!
//! Convention: the Brownian motion here has generator Delta (quadratic
//! variation 2t per coordinate), so the transformed drift is
//! 2 grad log M and the radial ordinate seen through the inverse transform
//! with index 2 is Brownian with drift d + 2p - 2 and variance 2. The unit
//! drift in the half-plane case (p = 1, d = 2) matches the exponent
//! psi(u) = u^2 + (d - 2) u of the free ordinate.

use crate::error::{Error, Result};
use crate::gamma::ln_gamma;
use crate::rng::normal;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Wedge model: span, dimension, eigenvalue and exponent.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ConeModel {
    pub theta0: f64,
    pub d: usize,
    pub lambda1: f64,
    pub p: f64,
}

impl ConeModel {
    pub fn new(theta0: f64) -> Result<Self> {
        if !(0.0..2.0 * PI).contains(&theta0) || theta0 <= 0.0 {
            return Err(Error::Config(format!(
                "wedge span {theta0} outside (0, 2 pi)"
            )));
        }
        let (lambda1, _) = eigen_first(theta0);
        Ok(ConeModel {
            theta0,
            d: 2,
            lambda1,
            p: cone_exponent(lambda1, 2),
        })
    }

    /// First eigenfunction, positive inside (0, theta0), zero on the edges.
    pub fn m1(&self, phi: f64) -> f64 {
        (PI * phi / self.theta0).sin()
    }

    /// Logarithmic derivative m1'/m1.
    pub fn m1_log_derivative(&self, phi: f64) -> f64 {
        let k = PI / self.theta0;
        k / (k * phi).tan()
    }

    /// Distance from an interior point to the nearest wedge edge. Each edge
    /// is a ray from the apex; beyond a quarter turn the closest edge point
    /// is the apex itself.
    pub fn boundary_distance(&self, x: (f64, f64)) -> f64 {
        let r = (x.0 * x.0 + x.1 * x.1).sqrt();
        let phi = wedge_angle(x);
        let ray = |u: f64| if u <= PI / 2.0 { u.sin() } else { 1.0 };
        r * ray(phi).min(ray(self.theta0 - phi))
    }

    pub fn contains(&self, x: (f64, f64)) -> bool {
        let phi = wedge_angle(x);
        phi > 0.0 && phi < self.theta0
    }
}

/// Angle of a point measured from the lower wedge edge, in [0, 2 pi).
pub fn wedge_angle(x: (f64, f64)) -> f64 {
    let phi = x.1.atan2(x.0);
    if phi < 0.0 {
        phi + 2.0 * PI
    } else {
        phi
    }
}

/// First Dirichlet eigenpair of the arc (0, theta0): closed form
/// lambda_1 = (pi/theta0)^2 with eigenfunction sin(pi phi/theta0).
pub fn eigen_first(theta0: f64) -> (f64, impl Fn(f64) -> f64) {
    let lambda1 = (PI / theta0).powi(2);
    (lambda1, move |phi: f64| (PI * phi / theta0).sin())
}

/// Independent numeric route to lambda_1: shooting with RK4 on
/// m'' = -lambda m, m(0) = 0, m'(0) = 1, bisecting on the sign of
/// m(theta0).
pub fn eigen_first_numeric(theta0: f64) -> f64 {
    let shoot = |lambda: f64| -> f64 {
        let n = 4000usize;
        let h = theta0 / n as f64;
        let mut m = 0.0_f64;
        let mut v = 1.0_f64;
        for _ in 0..n {
            // RK4 on (m, v)' = (v, -lambda m)
            let k1 = (v, -lambda * m);
            let k2 = (v + 0.5 * h * k1.1, -lambda * (m + 0.5 * h * k1.0));
            let k3 = (v + 0.5 * h * k2.1, -lambda * (m + 0.5 * h * k2.0));
            let k4 = (v + h * k3.1, -lambda * (m + h * k3.0));
            m += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            v += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        }
        m
    };
    // the ground eigenvalue is the first zero of lambda -> m(theta0)
    let guess = (PI / theta0).powi(2);
    let mut lo = 0.5 * guess;
    let mut hi = 1.5 * guess;
    // m(theta0; lo) > 0 (eigenvalue too small), m(theta0; hi) < 0
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if shoot(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Exponent p = sqrt(lambda_1 + (d/2 - 1)^2) - (d/2 - 1), exposed for any
/// dimension.
pub fn cone_exponent(lambda1: f64, d: usize) -> f64 {
    let nu = d as f64 / 2.0 - 1.0;
    (lambda1 + nu * nu).sqrt() - nu
}

/// M(x) = ||x||^p m_1(arg x); zero outside the wedge, with the flag telling
/// callers the point was out of domain.
pub fn harmonic_m(model: &ConeModel, x: (f64, f64)) -> (f64, bool) {
    let r = (x.0 * x.0 + x.1 * x.1).sqrt();
    let phi = wedge_angle(x);
    if phi <= 0.0 || phi >= model.theta0 || r == 0.0 {
        return (0.0, false);
    }
    (r.powf(model.p) * model.m1(phi), true)
}

/// grad log M at an interior point: p x/||x||^2 radially plus the
/// m_1'/m_1 term along the angular unit vector.
pub fn grad_log_m(model: &ConeModel, x: (f64, f64)) -> (f64, f64) {
    let r2 = x.0 * x.0 + x.1 * x.1;
    let r = r2.sqrt();
    let phi = wedge_angle(x);
    let radial = model.p / r2;
    let angular = model.m1_log_derivative(phi) / r;
    // e_r = x / r, e_phi = (-sin phi, cos phi)
    (
        radial * x.0 + angular * (-phi.sin()),
        radial * x.1 + angular * phi.cos(),
    )
}

/// Keep one-step exit probability at the 1e-6 level: step variance 2 dt per
/// coordinate, so dt <= dist^2 / 50 puts the boundary five sigmas away.
const BOUNDARY_DT_FACTOR: f64 = 50.0;

/// Stop rule for the conditioned walk.
#[derive(Debug, Clone, Copy)]
pub enum StopRule {
    Radius(f64),
    Horizon(f64),
}

/// One Euler–Maruyama trajectory of the wedge-conditioned Brownian motion
/// (generator Delta, drift 2 grad log M), with boundary-adaptive steps.
/// Returns the recorded (t, x, y) triples; every recorded point is strictly
/// inside the wedge.
pub fn simulate_conditioned_bm(
    model: &ConeModel,
    x0: (f64, f64),
    dt0: f64,
    stop: StopRule,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(f64, f64, f64)>> {
    if !model.contains(x0) {
        return Err(Error::Config("start point outside the wedge".into()));
    }
    let mut t = 0.0;
    let mut x = x0;
    let mut out = vec![(0.0, x0.0, x0.1)];
    loop {
        match stop {
            StopRule::Radius(r) => {
                if (x.0 * x.0 + x.1 * x.1).sqrt() >= r {
                    return Ok(out);
                }
            }
            StopRule::Horizon(h) => {
                if t >= h {
                    return Ok(out);
                }
            }
        }
        if x.0 * x.0 + x.1 * x.1 < 1e-18 {
            return Err(Error::StepUnderflow(x));
        }
        let dist = model.boundary_distance(x);
        // floor the adaptive step: at the floor the inward transform drift
        // dominates the remaining gap, so edge-grazing paths re-enter in
        // one step instead of stalling; the residual exits those floored
        // steps could produce are resampled below
        let dt = (dt0.min(dist * dist / BOUNDARY_DT_FACTOR)).max(1e-12);
        let drift = grad_log_m(model, x);
        let sd = (2.0 * dt).sqrt();
        let mut proposal = (
            x.0 + 2.0 * drift.0 * dt + sd * normal(rng),
            x.1 + 2.0 * drift.1 * dt + sd * normal(rng),
        );
        let mut guard = 0;
        while !model.contains(proposal) {
            proposal = (
                x.0 + 2.0 * drift.0 * dt + sd * normal(rng),
                x.1 + 2.0 * drift.1 * dt + sd * normal(rng),
            );
            guard += 1;
            if guard > 10_000 {
                return Err(Error::StepUnderflow(x));
            }
        }
        x = proposal;
        t += dt;
        out.push((t, x.0, x.1));
    }
}

/// Exit angle at the first exit of the unit disc for a conditioned path
/// started on the bisector at the given radius.
pub fn conditioned_exit_angle(
    model: &ConeModel,
    start_radius: f64,
    dt0: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let phi = model.theta0 / 2.0;
    let x0 = (start_radius * phi.cos(), start_radius * phi.sin());
    let path = simulate_conditioned_bm(model, x0, dt0, StopRule::Radius(1.0), rng)?;
    let (_, x, y) = *path.last().unwrap();
    Ok(wedge_angle((x, y)))
}

/// Exit-angle ensembles per start radius for the apex study.
pub fn apex_exit_law(
    model: &ConeModel,
    start_radii: &[f64],
    n: usize,
    dt0: f64,
    stream: crate::rng::RngStream,
) -> Result<Vec<Vec<f64>>> {
    use rayon::prelude::*;
    let mut out = Vec::with_capacity(start_radii.len());
    for (k, r0) in start_radii.iter().enumerate() {
        let angles: Result<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream.offset(((k as u64) << 40) + i as u64).rng();
                conditioned_exit_angle(model, *r0, dt0, &mut rng)
            })
            .collect();
        out.push(angles?);
    }
    Ok(out)
}

/// Monte-Carlo check that M is a martingale for the free Brownian motion
/// stopped at the wedge exit: returns (estimate, standard error, M(x0)).
/// Exits between grid points are caught by the exact line-crossing
/// probability of the bridge against each edge; a crossing stops the path
/// on the boundary where M = 0.
pub fn m_martingale_check(
    model: &ConeModel,
    x0: (f64, f64),
    t_end: f64,
    dt: f64,
    n: usize,
    stream: crate::rng::RngStream,
) -> (f64, f64, f64) {
    use rayon::prelude::*;
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream.offset(i as u64).rng();
            let mut x = x0;
            let mut t = 0.0;
            while t < t_end {
                let step = dt.min(t_end - t);
                let sd = (2.0 * step).sqrt();
                let proposal = (x.0 + sd * normal(&mut rng), x.1 + sd * normal(&mut rng));
                if !model.contains(proposal) {
                    return 0.0; // stopped at the boundary, M = 0
                }
                // bridge crossing against each edge line
                let phi0 = wedge_angle(x);
                let phi1 = wedge_angle(proposal);
                let r0 = (x.0 * x.0 + x.1 * x.1).sqrt();
                let r1 = (proposal.0 * proposal.0 + proposal.1 * proposal.1).sqrt();
                let sigma2 = 2.0 * step;
                for edge in [0.0, model.theta0] {
                    let d0 = r0 * (phi0 - edge).sin().abs();
                    let d1 = r1 * (phi1 - edge).sin().abs();
                    let p = (-d0 * d1 / sigma2).exp();
                    if p > 0.0 && rng.gen::<f64>() < p {
                        return 0.0;
                    }
                }
                x = proposal;
                t += step;
            }
            harmonic_m(model, x).0
        })
        .collect();
    let (mean, se) = crate::stats::mean_se(&values);
    (mean, se, harmonic_m(model, x0).0)
}

/// Five-point discrete Laplacian of M relative to M at an interior point.
pub fn discrete_harmonicity(model: &ConeModel, x: (f64, f64), h: f64) -> f64 {
    let m = |p: (f64, f64)| harmonic_m(model, p).0;
    let lap = m((x.0 + h, x.1)) + m((x.0 - h, x.1)) + m((x.0, x.1 + h)) + m((x.0, x.1 - h))
        - 4.0 * m(x);
    (lap / (h * h)).abs() / m(x)
}

// ---------------------------------------------------------------------------
// Stable exponent evaluators
// ---------------------------------------------------------------------------

/// Gamma-ratio evaluators of the rotationally invariant alpha-stable
/// ordinate in dimension d.
#[derive(Debug, Clone, Copy)]
pub struct StableExponents {
    pub alpha: f64,
    pub d: usize,
}

impl StableExponents {
    pub fn new(alpha: f64, d: usize) -> Result<Self> {
        if !(0.0 < alpha && alpha < 2.0) {
            return Err(Error::Config(format!("alpha = {alpha} outside (0, 2)")));
        }
        if d < 2 {
            return Err(Error::UnsupportedDimension(d));
        }
        Ok(StableExponents { alpha, d })
    }

    /// Characteristic exponent
    /// Psi(theta) = Gamma((-i theta + alpha)/2) / Gamma(-i theta / 2)
    ///            * Gamma((i theta + d)/2) / Gamma((i theta + d - alpha)/2),
    /// evaluated as a single exponentiated log-gamma combination.
    pub fn psi(&self, theta: f64) -> Complex64 {
        if theta == 0.0 {
            return Complex64::new(0.0, 0.0); // 1/Gamma(0) vanishes
        }
        let i = Complex64::i();
        let it = i * theta;
        let d = self.d as f64;
        let log = ln_gamma((-it + self.alpha) / 2.0) - ln_gamma(-it / 2.0)
            + ln_gamma((it + d) / 2.0)
            - ln_gamma((it + d - self.alpha) / 2.0);
        log.exp()
    }

    /// Ascending Laplace factor kappa(lambda) = Gamma((lambda + alpha)/2) /
    /// Gamma(lambda/2) on lambda > -alpha.
    pub fn kappa(&self, lambda: f64) -> Result<f64> {
        if lambda <= -self.alpha {
            return Err(Error::GammaPole(lambda));
        }
        if lambda == 0.0 {
            return Ok(0.0); // the 1/Gamma(0) factor vanishes
        }
        Ok(
            (ln_gamma(Complex64::new((lambda + self.alpha) / 2.0, 0.0))
                - ln_gamma(Complex64::new(lambda / 2.0, 0.0)))
            .exp()
            .re,
        )
    }

    /// Complex continuation of kappa, used by the factorization check.
    pub fn kappa_c(&self, z: Complex64) -> Complex64 {
        (ln_gamma((z + self.alpha) / 2.0) - ln_gamma(z / 2.0)).exp()
    }

    /// Descending factor kappa_hat(lambda) = Gamma((lambda + d)/2) /
    /// Gamma((lambda + d - alpha)/2) on lambda >= 0.
    pub fn kappa_hat(&self, lambda: f64) -> Result<f64> {
        if lambda < 0.0 {
            return Err(Error::GammaPole(lambda));
        }
        Ok(self.kappa_hat_c(Complex64::new(lambda, 0.0)).re)
    }

    pub fn kappa_hat_c(&self, z: Complex64) -> Complex64 {
        let d = self.d as f64;
        (ln_gamma((z + d) / 2.0) - ln_gamma((z + d - self.alpha) / 2.0)).exp()
    }

    /// |Psi(theta) - kappa(-i theta) kappa_hat(i theta)|: the two routes
    /// differ only in the arrangement of the same log-gamma evaluations, so
    /// the residual measures floating-point consistency of the identity.
    pub fn factorization_residual(&self, theta: f64) -> f64 {
        if theta == 0.0 {
            return 0.0;
        }
        let i = Complex64::i();
        let product = self.kappa_c(-i * theta) * self.kappa_hat_c(i * theta);
        (self.psi(theta) - product).norm()
    }
}
