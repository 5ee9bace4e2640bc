//! The Lamperti–Kiu transform and its inverse.
//!
//! A MAP (xi, Theta) maps to the self-similar process X_t = e^{xi_{phi(t)}}
//! Theta_{phi(t)}, where phi inverts the additive clock
//! A(s) = int_0^s exp(alpha xi_u) du. Radii are carried as exact
//! exponentials of the MAP samples; the ssMp grid holds the images of every
//! MAP sample time plus a uniform grid in X-time with the same mesh, so the
//! inverse transform recovers the original samples rather than an
//! interpolation of them.

use crate::error::{Error, Result};
use crate::simulate::MapPath;
use std::io::Write;

/// Discretized ssMp path. For finite-state modulators `theta` stores state
/// indices; embedding them into the sphere is a presentation detail with no
/// effect on radial statistics.
#[derive(Debug, Clone)]
pub struct SsmpPath {
    pub alpha: f64,
    pub times: Vec<f64>,
    pub r: Vec<f64>,
    pub theta: Vec<u32>,
    pub lifetime: Option<f64>,
    /// Whether this path was constructed to start at (near) the origin.
    pub from_origin: bool,
}

impl SsmpPath {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,r,theta")?;
        for i in 0..self.len() {
            writeln!(w, "{},{},{}", self.times[i], self.r[i], self.theta[i])?;
        }
        Ok(())
    }
}

/// Additive clock A(t_i) = int_0^{t_i} exp(alpha xi_u) du along the path
/// grid, by trapezoidal quadrature. Event times are path samples already, so
/// jumps contribute zero width and the integrand stays piecewise smooth.
pub fn additive_clock(path: &MapPath, alpha: f64) -> Vec<f64> {
    assert!(alpha > 0.0, "alpha must be positive");
    let mut clock = Vec::with_capacity(path.len());
    let mut acc = 0.0;
    let mut prev_t = path.times[0];
    let mut prev_f = (alpha * path.xi[0]).exp();
    clock.push(0.0);
    for i in 1..path.len() {
        let t = path.times[i];
        let f = (alpha * path.xi[i]).exp();
        acc += 0.5 * (prev_f + f) * (t - prev_t);
        clock.push(acc);
        prev_t = t;
        prev_f = f;
    }
    clock
}

/// Forward transform. The output grid is the union of a uniform grid with
/// the same mesh as the input and the exact images A(t_i) of the MAP
/// samples; at image points the radius is exactly exp(xi_i).
pub fn lamperti_kiu(path: &MapPath, alpha: f64) -> Result<SsmpPath> {
    let clock = additive_clock(path, alpha);
    let total = *clock.last().unwrap();
    let mesh = path.mesh;
    let mut times = Vec::new();
    let mut r = Vec::new();
    let mut theta = Vec::new();

    let mut grid = mesh;
    let mut i = 0usize; // index into MAP samples
    // interleave uniform X-grid points with images of MAP samples
    loop {
        let img = if i < path.len() { clock[i] } else { f64::INFINITY };
        let g = if grid < total { grid } else { f64::INFINITY };
        if img.is_infinite() && g.is_infinite() {
            break;
        }
        if img <= g {
            times.push(img);
            r.push(path.xi[i].exp());
            theta.push(path.theta[i]);
            if (img - g).abs() < 1e-15 && g.is_finite() {
                grid += mesh;
            }
            i += 1;
        } else {
            // interpolate the radius at clock value g; the interpolant is
            // chosen so the inverse-clock quadrature telescopes exactly
            // across the inserted point (it matches log-linear interpolation
            // to second order in the step increment)
            let k = match clock.binary_search_by(|c| c.partial_cmp(&g).unwrap()) {
                Ok(k) => k,
                Err(k) => k,
            };
            let (c0, c1) = (clock[k - 1], clock[k]);
            let w = if c1 > c0 { (g - c0) / (c1 - c0) } else { 0.0 };
            let u = (alpha * path.xi[k - 1]).exp();
            let v = (alpha * path.xi[k]).exp();
            let c = u + w * (v - u);
            let m = ((u + v) * c - u * v).sqrt();
            times.push(g);
            r.push((m.ln() / alpha).exp());
            theta.push(path.theta[k - 1]);
            grid += mesh;
        }
    }
    let lifetime = path.lifetime.map(|_| total);
    Ok(SsmpPath {
        alpha,
        times,
        r,
        theta,
        lifetime,
        from_origin: false,
    })
}

/// Inverse transform: recovers the MAP path with xi_i = log r_i and MAP
/// times from the inverse clock zeta_p = int ||X_s||^{-alpha} ds.
///
/// The per-step quadrature is the reciprocal of the forward trapezoid,
/// delta_t = 2 delta_tau / (r_0^alpha + r_1^alpha): the same order of
/// accuracy, and exactly inverse to [`additive_clock`] on shared sample
/// pairs, so round trips do not accumulate the cosh-type bias a plain
/// trapezoid of r^{-alpha} would produce on rough paths.
pub fn inverse_lamperti(ss: &SsmpPath, alpha: f64) -> Result<MapPath> {
    let mut times = Vec::with_capacity(ss.len());
    let mut xi = Vec::with_capacity(ss.len());
    let mut acc = 0.0;
    let mut prev_t = ss.times[0];
    let mut prev_f = match ss.r[0] {
        r if r > 0.0 => r.powf(alpha),
        _ => return Err(Error::ZeroRadius(0)),
    };
    times.push(0.0);
    xi.push(ss.r[0].ln());
    for i in 1..ss.len() {
        if ss.r[i] <= 0.0 {
            return Err(Error::ZeroRadius(i));
        }
        let f = ss.r[i].powf(alpha);
        acc += 2.0 * (ss.times[i] - prev_t) / (prev_f + f);
        times.push(acc);
        xi.push(ss.r[i].ln());
        prev_t = ss.times[i];
        prev_f = f;
    }
    let lifetime = ss.lifetime.map(|_| acc);
    Ok(MapPath {
        mesh: ss
            .times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
            .max(1e-12),
        times,
        xi,
        theta: ss.theta.clone(),
        events: Vec::new(),
        lifetime,
    })
}

/// The scaling map (c X_{c^{-alpha} t}): radii scale by c, times and
/// lifetime by c^alpha, angles are untouched.
pub fn scale_path(ss: &SsmpPath, c: f64) -> SsmpPath {
    assert!(c > 0.0, "scaling constant must be positive");
    let ca = c.powf(ss.alpha);
    SsmpPath {
        alpha: ss.alpha,
        times: ss.times.iter().map(|t| t * ca).collect(),
        r: ss.r.iter().map(|r| r * c).collect(),
        theta: ss.theta.clone(),
        lifetime: ss.lifetime.map(|z| z * ca),
        from_origin: ss.from_origin,
    }
}

/// Max absolute ordinate error of the round trip inverse(forward(path)),
/// measured at the original sample times. Jump instants carry two samples
/// at the same time (left and right values); those ambiguous instants are
/// skipped, the jump neighborhood being covered by the adjacent mesh points.
pub fn round_trip_error(path: &MapPath, alpha: f64) -> Result<f64> {
    let ss = lamperti_kiu(path, alpha)?;
    let back = inverse_lamperti(&ss, alpha)?;
    let mut worst = 0.0_f64;
    for i in 0..path.len() {
        let dup_left = i > 0 && path.times[i - 1] == path.times[i];
        let dup_right = i + 1 < path.len() && path.times[i + 1] == path.times[i];
        if dup_left || dup_right {
            continue;
        }
        let err = (back.xi_at(path.times[i]) - path.xi[i]).abs();
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_fork;
    use crate::simulate::simulate_map;
    use crate::spec::{validate_spec, JumpComponent, JumpLaw, MapSpec};

    fn constant_path(xi0: f64, t_max: f64, mesh: f64) -> MapPath {
        let n = (t_max / mesh).round() as usize;
        MapPath {
            mesh,
            times: (0..=n).map(|i| i as f64 * mesh).collect(),
            xi: vec![xi0; n + 1],
            theta: vec![0; n + 1],
            events: Vec::new(),
            lifetime: None,
        }
    }

    fn linear_path(slope: f64, t_max: f64, mesh: f64) -> MapPath {
        let n = (t_max / mesh).round() as usize;
        let times: Vec<f64> = (0..=n).map(|i| i as f64 * mesh).collect();
        let xi = times.iter().map(|t| slope * t).collect();
        MapPath {
            mesh,
            times,
            xi,
            theta: vec![0; n + 1],
            events: Vec::new(),
            lifetime: None,
        }
    }

    #[test]
    fn clock_is_identity_for_zero_ordinate() {
        let p = constant_path(0.0, 1.0, 1e-3);
        let clock = additive_clock(&p, 1.0);
        for (c, t) in clock.iter().zip(&p.times) {
            assert!((c - t).abs() < 1e-12);
        }
    }

    #[test]
    fn clock_matches_exponential_integral() {
        // xi_u = u, alpha = 1: A(t) = e^t - 1
        let p = linear_path(1.0, 1.0, 1e-3);
        let clock = additive_clock(&p, 1.0);
        for (c, t) in clock.iter().zip(&p.times) {
            assert!((c - (t.exp() - 1.0)).abs() < 1e-6, "A({t}) = {c}");
        }
    }

    #[test]
    fn clock_is_strictly_increasing() {
        let spec = MapSpec::brownian(0.0, 1.0);
        let p = simulate_map(&spec, 0.0, 0, 1.0, 1e-3, rng_fork(21, 0)).unwrap();
        let clock = additive_clock(&p, 1.0);
        for w in clock.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn unit_radius_for_zero_ordinate() {
        let p = constant_path(0.0, 1.0, 1e-2);
        let ss = lamperti_kiu(&p, 1.0).unwrap();
        assert!(ss.r.iter().all(|r| (r - 1.0).abs() < 1e-14));
    }

    #[test]
    fn unit_drift_gives_linear_radius() {
        // xi_u = u, alpha = 1: phi(t) = log(1 + t), radius 1 + t
        let p = linear_path(1.0, 1.0, 1e-3);
        let ss = lamperti_kiu(&p, 1.0).unwrap();
        for (t, r) in ss.times.iter().zip(&ss.r) {
            assert!((r - (1.0 + t)).abs() < 1e-4, "r({t}) = {r}");
        }
    }

    #[test]
    fn inverse_recovers_unit_drift() {
        let p = linear_path(1.0, 1.0, 1e-3);
        let ss = lamperti_kiu(&p, 1.0).unwrap();
        let back = inverse_lamperti(&ss, 1.0).unwrap();
        for (i, t) in back.times.iter().enumerate() {
            assert!((back.xi[i] - t).abs() < 1e-4);
        }
    }

    #[test]
    fn constant_unit_radius_maps_to_zero_ordinate() {
        let ss = SsmpPath {
            alpha: 1.0,
            times: (0..=100).map(|i| i as f64 * 0.01).collect(),
            r: vec![1.0; 101],
            theta: vec![0; 101],
            lifetime: None,
            from_origin: false,
        };
        let back = inverse_lamperti(&ss, 1.0).unwrap();
        assert!(back.xi.iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn round_trip_on_random_paths_is_tight() {
        let spec = validate_spec(MapSpec {
            n_states: 2,
            q: vec![vec![-1.0, 1.0], vec![2.0, -2.0]],
            drift: vec![0.3, -0.5],
            sigma: vec![1.0, 0.7],
            jumps: vec![
                JumpComponent {
                    rate: 1.0,
                    law: JumpLaw::TwoSidedExponential {
                        beta_up: 2.0,
                        beta_down: 1.0,
                        p_up: 0.5,
                    },
                },
                JumpComponent::none(),
            ],
            switch_jumps: None,
            kill_rate: 0.0,
        })
        .unwrap();
        let mesh = 1e-3;
        for i in 0..10 {
            let p = simulate_map(&spec, 0.2, 0, 1.0, mesh, rng_fork(22, i)).unwrap();
            let err = round_trip_error(&p, 1.0).unwrap();
            assert!(err < 10.0 * mesh, "round trip error {err} at replica {i}");
        }
    }

    #[test]
    fn clock_inverse_composition_is_identity_within_a_step() {
        let spec = MapSpec::brownian(0.2, 1.0);
        let p = simulate_map(&spec, 0.0, 0, 1.0, 1e-3, rng_fork(23, 0)).unwrap();
        let ss = lamperti_kiu(&p, 1.0).unwrap();
        let back = inverse_lamperti(&ss, 1.0).unwrap();
        // A(phi(t)) = t: the recovered MAP time of the k-th image sample
        // matches the original within one mesh step
        let clock = additive_clock(&p, 1.0);
        let mut k = 0;
        for (i, &c) in clock.iter().enumerate() {
            while k < ss.len() && ss.times[k] < c - 1e-12 {
                k += 1;
            }
            if k < ss.len() && (ss.times[k] - c).abs() < 1e-12 {
                assert!((back.times[k] - p.times[i]).abs() < p.mesh);
            }
        }
    }

    #[test]
    fn scaling_by_one_is_identity() {
        let p = linear_path(0.5, 1.0, 1e-2);
        let ss = lamperti_kiu(&p, 1.0).unwrap();
        let scaled = scale_path(&ss, 1.0);
        assert_eq!(ss.times, scaled.times);
        assert_eq!(ss.r, scaled.r);
    }

    #[test]
    fn scaling_doubles_radius_and_time() {
        let p = linear_path(0.5, 1.0, 1e-2);
        let mut ss = lamperti_kiu(&p, 1.0).unwrap();
        ss.lifetime = Some(*ss.times.last().unwrap());
        let scaled = scale_path(&ss, 2.0);
        for i in 0..ss.len() {
            assert!((scaled.r[i] - 2.0 * ss.r[i]).abs() < 1e-14);
            assert!((scaled.times[i] - 2.0 * ss.times[i]).abs() < 1e-14);
        }
        assert!((scaled.lifetime.unwrap() - 2.0 * ss.lifetime.unwrap()).abs() < 1e-14);
    }

    #[test]
    fn scaling_composes_multiplicatively() {
        let p = linear_path(-0.3, 1.0, 1e-2);
        let ss = lamperti_kiu(&p, 2.0).unwrap();
        let a = scale_path(&scale_path(&ss, 1.7), 0.4);
        let b = scale_path(&ss, 1.7 * 0.4);
        for i in 0..ss.len() {
            assert!((a.r[i] - b.r[i]).abs() < 1e-12);
            assert!((a.times[i] - b.times[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_radius_is_rejected() {
        let ss = SsmpPath {
            alpha: 1.0,
            times: vec![0.0, 0.1, 0.2],
            r: vec![1.0, 0.0, 1.0],
            theta: vec![0, 0, 0],
            lifetime: None,
            from_origin: false,
        };
        assert!(matches!(
            inverse_lamperti(&ss, 1.0),
            Err(crate::Error::ZeroRadius(1))
        ));
    }
}
