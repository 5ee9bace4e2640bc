//! Path simulation for finite-state MAPs.
//!
//! Chain switches, ordinate jumps and killing are sampled at exact
//! exponential event times; between events the ordinate is Brownian with
//! per-state drift and scale, advanced by exact Gaussian increments on the
//! recording mesh (no Euler bias). Fluctuation routines that do not need a
//! mesh work segment-by-segment with exact endpoint draws plus
//! bridge-sampled extrema, which keeps them free of discretization error.

use crate::error::Result;
use crate::rng::{exponential, normal, RngStream};
use crate::spec::MapSpec;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Default recording mesh (time units).
pub const DEFAULT_MESH: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    ChainSwitch,
    OrdinateJump,
    Kill,
}

/// A path event with the surrounding ordinate/state values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathEvent {
    pub t: f64,
    pub kind: EventKind,
    pub xi_pre: f64,
    pub xi_post: f64,
    pub state_pre: u32,
    pub state_post: u32,
}

/// Discretized sample path of (xi, Theta). Samples sit on the uniform mesh
/// plus exact event times, strictly time-ordered.
#[derive(Debug, Clone)]
pub struct MapPath {
    pub mesh: f64,
    pub times: Vec<f64>,
    pub xi: Vec<f64>,
    pub theta: Vec<u32>,
    pub events: Vec<PathEvent>,
    /// Killing time when the path died before the horizon.
    pub lifetime: Option<f64>,
}

impl MapPath {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Ordinate value at time `t` by piecewise-linear interpolation.
    pub fn xi_at(&self, t: f64) -> f64 {
        match self
            .times
            .binary_search_by(|x| x.partial_cmp(&t).unwrap())
        {
            Ok(i) => self.xi[i],
            Err(0) => self.xi[0],
            Err(i) if i >= self.len() => *self.xi.last().unwrap(),
            Err(i) => {
                let (t0, t1) = (self.times[i - 1], self.times[i]);
                let w = (t - t0) / (t1 - t0);
                self.xi[i - 1] * (1.0 - w) + self.xi[i] * w
            }
        }
    }

    /// CSV export with header `t,xi,theta`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,xi,theta")?;
        for i in 0..self.len() {
            writeln!(w, "{},{},{}", self.times[i], self.xi[i], self.theta[i])?;
        }
        Ok(())
    }
}

/// Raw event drawn from the competing exponential clocks of one state.
#[derive(Debug, Clone, Copy)]
pub enum RawEvent {
    Switch { to: usize, jump: f64 },
    OrdinateJump { size: f64 },
    Kill,
}

/// Time to the next event in the current state, plus the event itself.
/// Infinite wait means no clock is armed.
pub fn draw_event(spec: &MapSpec, state: usize, rng: &mut ChaCha8Rng) -> (f64, Option<RawEvent>) {
    let switch_rate = spec.exit_rate(state);
    let jump_rate = spec.jumps[state].rate;
    let total = switch_rate + jump_rate + spec.kill_rate;
    if total <= 0.0 {
        return (f64::INFINITY, None);
    }
    let wait = exponential(rng, total);
    let u: f64 = rng.gen::<f64>() * total;
    let ev = if u < switch_rate {
        // pick the target state proportionally to q[state][k]
        let mut pick = rng.gen::<f64>() * switch_rate;
        let mut to = state;
        for k in 0..spec.n_states {
            if k == state {
                continue;
            }
            pick -= spec.q[state][k];
            if pick <= 0.0 {
                to = k;
                break;
            }
        }
        if to == state {
            // numerical leftover; take the last admissible target
            to = (0..spec.n_states).rev().find(|k| *k != state).unwrap();
        }
        let jump = spec.switch_law(state, to).sample(rng);
        RawEvent::Switch { to, jump }
    } else if u < switch_rate + jump_rate {
        RawEvent::OrdinateJump {
            size: spec.jumps[state].law.sample(rng),
        }
    } else {
        RawEvent::Kill
    };
    (wait, Some(ev))
}

/// Exact Gaussian endpoint increment over a segment of length `dur`.
#[inline]
pub fn segment_increment(a: f64, sigma: f64, dur: f64, rng: &mut ChaCha8Rng) -> f64 {
    if sigma == 0.0 {
        a * dur
    } else {
        a * dur + sigma * dur.sqrt() * normal(rng)
    }
}

/// Sample the maximum of a Brownian segment given its endpoints, using the
/// Brownian-bridge maximum: exact in law, independent of drift.
#[inline]
pub fn bridge_max(x0: f64, x1: f64, sigma2_dur: f64, rng: &mut ChaCha8Rng) -> f64 {
    if sigma2_dur <= 0.0 {
        return x0.max(x1);
    }
    let u: f64 = rng.gen::<f64>();
    let d = x1 - x0;
    0.5 * (x0 + x1 + (d * d - 2.0 * sigma2_dur * (1.0 - u).ln()).sqrt())
}

/// Bridge minimum, by symmetry.
#[inline]
pub fn bridge_min(x0: f64, x1: f64, sigma2_dur: f64, rng: &mut ChaCha8Rng) -> f64 {
    if sigma2_dur <= 0.0 {
        return x0.min(x1);
    }
    let u: f64 = rng.gen::<f64>();
    let d = x1 - x0;
    0.5 * (x0 + x1 - (d * d - 2.0 * sigma2_dur * (1.0 - u).ln()).sqrt())
}

/// Probability that a Brownian segment with both endpoints below `level`
/// peeked above it.
#[inline]
pub fn bridge_crossing_prob(x0: f64, x1: f64, sigma2_dur: f64, level: f64) -> f64 {
    if sigma2_dur <= 0.0 || x0 > level || x1 > level {
        return if x0 > level || x1 > level { 1.0 } else { 0.0 };
    }
    (-2.0 * (level - x0) * (level - x1) / sigma2_dur).exp()
}

/// Simulate (xi, Theta) to the horizon on the given mesh.
///
/// The path records every mesh point and every event time; killed paths
/// carry their lifetime and stop there.
pub fn simulate_map(
    spec: &MapSpec,
    x0: f64,
    theta0: usize,
    horizon: f64,
    mesh: f64,
    stream: RngStream,
) -> Result<MapPath> {
    assert!(horizon > 0.0 && mesh > 0.0, "horizon and mesh must be positive");
    let mut rng = stream.rng();
    let mut t = 0.0;
    let mut xi = x0;
    let mut state = theta0;
    let mut path = MapPath {
        mesh,
        times: vec![0.0],
        xi: vec![x0],
        theta: vec![theta0 as u32],
        events: Vec::new(),
        lifetime: None,
    };
    'outer: loop {
        let (wait, event) = draw_event(spec, state, &mut rng);
        let seg_end = (t + wait).min(horizon);
        // advance on the mesh with exact Gaussian increments
        let mut next_grid = (t / mesh).floor() * mesh + mesh;
        while next_grid < seg_end - 1e-15 {
            let dur = next_grid - t;
            xi += segment_increment(spec.drift[state], spec.sigma[state], dur, &mut rng);
            t = next_grid;
            path.times.push(t);
            path.xi.push(xi);
            path.theta.push(state as u32);
            next_grid += mesh;
        }
        let dur = seg_end - t;
        if dur > 0.0 {
            xi += segment_increment(spec.drift[state], spec.sigma[state], dur, &mut rng);
            t = seg_end;
            path.times.push(t);
            path.xi.push(xi);
            path.theta.push(state as u32);
        }
        if t >= horizon - 1e-15 {
            break 'outer;
        }
        // the event fires at t
        match event.expect("finite wait implies an event") {
            RawEvent::Switch { to, jump } => {
                let pre = xi;
                xi += jump;
                path.events.push(PathEvent {
                    t,
                    kind: EventKind::ChainSwitch,
                    xi_pre: pre,
                    xi_post: xi,
                    state_pre: state as u32,
                    state_post: to as u32,
                });
                state = to;
                path.times.push(t);
                path.xi.push(xi);
                path.theta.push(state as u32);
            }
            RawEvent::OrdinateJump { size } => {
                let pre = xi;
                xi += size;
                path.events.push(PathEvent {
                    t,
                    kind: EventKind::OrdinateJump,
                    xi_pre: pre,
                    xi_post: xi,
                    state_pre: state as u32,
                    state_post: state as u32,
                });
                path.times.push(t);
                path.xi.push(xi);
                path.theta.push(state as u32);
            }
            RawEvent::Kill => {
                path.events.push(PathEvent {
                    t,
                    kind: EventKind::Kill,
                    xi_pre: xi,
                    xi_post: xi,
                    state_pre: state as u32,
                    state_post: state as u32,
                });
                path.lifetime = Some(t);
                break 'outer;
            }
        }
    }
    Ok(path)
}

/// Exact (segment-level) sample of (xi_T, Theta_T); `None` when killed
/// before `horizon`. No mesh, no discretization error.
pub fn endpoint_at(
    spec: &MapSpec,
    x0: f64,
    theta0: usize,
    horizon: f64,
    rng: &mut ChaCha8Rng,
) -> Option<(f64, usize)> {
    let mut t = 0.0;
    let mut xi = x0;
    let mut state = theta0;
    loop {
        let (wait, event) = draw_event(spec, state, rng);
        let dur = wait.min(horizon - t);
        xi += segment_increment(spec.drift[state], spec.sigma[state], dur, rng);
        t += dur;
        if t >= horizon {
            return Some((xi, state));
        }
        match event.unwrap() {
            RawEvent::Switch { to, jump } => {
                xi += jump;
                state = to;
            }
            RawEvent::OrdinateJump { size } => xi += size,
            RawEvent::Kill => return None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_fork;
    use crate::spec::{stationary_pi, validate_spec, JumpComponent, JumpLaw, MapSpec};
    use crate::stats::{ks_distance, mean_se, EmpiricalDist};

    fn two_state_drifts(a0: f64, a1: f64, rate: f64) -> MapSpec {
        validate_spec(MapSpec {
            n_states: 2,
            q: vec![vec![-rate, rate], vec![rate, -rate]],
            drift: vec![a0, a1],
            sigma: vec![0.0, 0.0],
            jumps: vec![JumpComponent::none(), JumpComponent::none()],
            switch_jumps: None,
            kill_rate: 0.0,
        })
        .unwrap()
    }

    #[test]
    fn zero_spec_is_constant() {
        let spec = MapSpec::brownian(0.0, 0.0);
        let p = simulate_map(&spec, 2.5, 0, 1.0, 0.01, rng_fork(1, 0)).unwrap();
        assert!(p.xi.iter().all(|x| *x == 2.5));
        assert!(p.theta.iter().all(|s| *s == 0));
        assert!(p.events.is_empty());
        assert!(p.lifetime.is_none());
    }

    #[test]
    fn pure_drift_is_exact() {
        let spec = MapSpec::brownian(1.0, 0.0);
        let p = simulate_map(&spec, 0.5, 0, 2.0, 1e-3, rng_fork(1, 1)).unwrap();
        let end = *p.xi.last().unwrap();
        assert!((end - 2.5).abs() < 1e-12, "xi_T = {end}");
    }

    #[test]
    fn translation_invariance_is_exact_for_fixed_stream() {
        let spec = validate_spec(MapSpec {
            n_states: 2,
            q: vec![vec![-1.0, 1.0], vec![2.0, -2.0]],
            drift: vec![0.3, -0.7],
            sigma: vec![1.0, 0.5],
            jumps: vec![
                JumpComponent {
                    rate: 0.8,
                    law: JumpLaw::TwoSidedExponential {
                        beta_up: 1.0,
                        beta_down: 2.0,
                        p_up: 0.4,
                    },
                },
                JumpComponent::none(),
            ],
            switch_jumps: None,
            kill_rate: 0.0,
        })
        .unwrap();
        let c = 3.25;
        let p0 = simulate_map(&spec, 0.0, 0, 2.0, 1e-2, rng_fork(9, 17)).unwrap();
        let p1 = simulate_map(&spec, c, 0, 2.0, 1e-2, rng_fork(9, 17)).unwrap();
        assert_eq!(p0.times, p1.times);
        assert_eq!(p0.theta, p1.theta);
        for (a, b) in p0.xi.iter().zip(&p1.xi) {
            assert!((b - a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_two_state_drifts_cancel() {
        let spec = two_state_drifts(1.0, -1.0, 1.0);
        let n = 100_000;
        let mut rng = rng_fork(4, 2).rng();
        let xs: Vec<f64> = (0..n)
            .map(|_| endpoint_at(&spec, 0.0, 0, 5.0, &mut rng).unwrap().0)
            .collect();
        let (mean, se) = mean_se(&xs);
        // started in state 0 the first sojourn biases upward by O(1/rate);
        // compare against the exact two-state mean instead of zero:
        // E[xi_T] = (a0 - a1)/(2 r) (1 - e^{-2 r T}) starting in state 0
        let expect = (1.0 - (-2.0_f64 * 5.0).exp()) / 2.0;
        assert!(
            (mean - expect).abs() < 3.0 * se,
            "mean {mean}, expect {expect}, se {se}"
        );
    }

    #[test]
    fn killed_paths_stop_and_carry_lifetime() {
        let mut spec = MapSpec::brownian(0.0, 1.0);
        spec.kill_rate = 2.0;
        let n = 2000;
        let mut lifetimes = Vec::new();
        for i in 0..n {
            let p = simulate_map(&spec, 0.0, 0, 10.0, 1e-2, rng_fork(5, i)).unwrap();
            if let Some(z) = p.lifetime {
                assert!((p.times.last().unwrap() - z).abs() < 1e-12);
                lifetimes.push(z);
            }
        }
        // kill clock is Exp(2) truncated at the horizon
        let frac = lifetimes.len() as f64 / n as f64;
        assert!(frac > 0.99, "killed fraction {frac}");
        let (mean, se) = mean_se(&lifetimes);
        assert!((mean - 0.5).abs() < 4.0 * se, "mean lifetime {mean}");
    }

    #[test]
    fn markov_property_at_grid_times() {
        // law of (xi_{s+t} - xi_s, Theta_{s+t}) given Theta_s = v matches a
        // fresh start from (0, v)
        let spec = validate_spec(MapSpec {
            n_states: 2,
            q: vec![vec![-1.0, 1.0], vec![2.0, -2.0]],
            drift: vec![0.5, -0.5],
            sigma: vec![1.0, 0.3],
            jumps: vec![
                JumpComponent {
                    rate: 0.5,
                    law: JumpLaw::Exponential { beta: 1.0, up: true },
                },
                JumpComponent::none(),
            ],
            switch_jumps: None,
            kill_rate: 0.0,
        })
        .unwrap();
        let (s, t) = (0.7, 0.9);
        let n = 100_000;
        let mut rng = rng_fork(6, 0).rng();
        let mut conditioned = Vec::new();
        while conditioned.len() < n {
            if let Some((x_s, th_s)) = endpoint_at(&spec, 0.0, 0, s, &mut rng) {
                if th_s == 1 {
                    let (x_st, _) = endpoint_at(&spec, x_s, th_s, t, &mut rng).unwrap();
                    conditioned.push(x_st - x_s);
                }
            }
        }
        let mut rng2 = rng_fork(6, 1).rng();
        let fresh: Vec<f64> = (0..n)
            .map(|_| endpoint_at(&spec, 0.0, 1, t, &mut rng2).unwrap().0)
            .collect();
        let a = EmpiricalDist::new(conditioned.into_iter().map(|x| vec![x]).collect()).unwrap();
        let b = EmpiricalDist::new(fresh.into_iter().map(|x| vec![x]).collect()).unwrap();
        let d = ks_distance(&a, &b, 0).unwrap();
        let p = crate::stats::ks_p_value(d, n as f64, n as f64);
        assert!(p > 0.01, "KS = {d}, p = {p}");
    }

    #[test]
    fn semigroup_identity_against_matrix_exponential() {
        // |(e^{F(lambda) t})_{jk} - MC| < 3 SE at lambda = 1, t = 1
        let spec = validate_spec(MapSpec {
            n_states: 2,
            q: vec![vec![-1.0, 1.0], vec![2.0, -2.0]],
            drift: vec![0.4, -0.2],
            sigma: vec![0.8, 0.5],
            jumps: vec![
                JumpComponent {
                    rate: 0.6,
                    law: JumpLaw::Exponential { beta: 2.0, up: true },
                },
                JumpComponent::none(),
            ],
            switch_jumps: None,
            kill_rate: 0.0,
        })
        .unwrap();
        let lambda = 1.0;
        let t = 1.0;
        let f = crate::spec::matrix_exponent(&spec, lambda).unwrap();
        let eft = crate::linalg::expm(&f);
        let n = 1_000_000usize;
        let mut rng = rng_fork(7, 0).rng();
        let j = 0usize;
        let mut sums = [num_complex::Complex64::new(0.0, 0.0); 2];
        for _ in 0..n {
            if let Some((x, k)) = endpoint_at(&spec, 0.0, j, t, &mut rng) {
                sums[k] += num_complex::Complex64::new(0.0, lambda * x).exp();
            }
        }
        for k in 0..2 {
            let re = sums[k].re / n as f64;
            let im = sums[k].im / n as f64;
            // each term is a bounded complex unit; SE per component < 1/sqrt(n)
            let se = 1.0 / (n as f64).sqrt();
            assert!(
                (re - eft[(j, k)].re).abs() < 3.0 * se,
                "re mismatch at k={k}: {re} vs {}",
                eft[(j, k)].re
            );
            assert!(
                (im - eft[(j, k)].im).abs() < 3.0 * se,
                "im mismatch at k={k}: {im} vs {}",
                eft[(j, k)].im
            );
        }
        let _ = stationary_pi(&spec.q).unwrap();
    }

    #[test]
    fn mesh_and_segment_routes_agree_in_law() {
        let spec = validate_spec(MapSpec {
            n_states: 2,
            q: vec![vec![-2.0, 2.0], vec![1.0, -1.0]],
            drift: vec![0.2, -0.4],
            sigma: vec![1.0, 0.6],
            jumps: vec![JumpComponent::none(), JumpComponent::none()],
            switch_jumps: None,
            kill_rate: 0.0,
        })
        .unwrap();
        let n = 30_000;
        let t = 1.0;
        let meshy: Vec<f64> = (0..n)
            .map(|i| {
                *simulate_map(&spec, 0.0, 0, t, 1e-2, rng_fork(8, i as u64))
                    .unwrap()
                    .xi
                    .last()
                    .unwrap()
            })
            .collect();
        let mut rng = rng_fork(8, 1 << 32).rng();
        let seg: Vec<f64> = (0..n)
            .map(|_| endpoint_at(&spec, 0.0, 0, t, &mut rng).unwrap().0)
            .collect();
        let a = EmpiricalDist::new(meshy.into_iter().map(|x| vec![x]).collect()).unwrap();
        let b = EmpiricalDist::new(seg.into_iter().map(|x| vec![x]).collect()).unwrap();
        let d = ks_distance(&a, &b, 0).unwrap();
        let p = crate::stats::ks_p_value(d, n as f64, n as f64);
        assert!(p > 0.01, "KS = {d}, p = {p}");
    }

    #[test]
    fn events_are_strictly_ordered_and_on_path() {
        let spec = validate_spec(MapSpec {
            n_states: 2,
            q: vec![vec![-3.0, 3.0], vec![3.0, -3.0]],
            drift: vec![0.0, 0.0],
            sigma: vec![0.5, 0.5],
            jumps: vec![
                JumpComponent {
                    rate: 2.0,
                    law: JumpLaw::PointMass { c: 0.1 },
                },
                JumpComponent::none(),
            ],
            switch_jumps: Some(vec![
                vec![JumpLaw::None, JumpLaw::PointMass { c: -0.05 }],
                vec![JumpLaw::PointMass { c: -0.05 }, JumpLaw::None],
            ]),
            kill_rate: 0.0,
        })
        .unwrap();
        let p = simulate_map(&spec, 0.0, 0, 5.0, 1e-2, rng_fork(2, 3)).unwrap();
        for w in p.events.windows(2) {
            assert!(w[0].t < w[1].t);
        }
        for w in p.times.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert!(!p.events.is_empty());
    }
}
