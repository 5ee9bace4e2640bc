//! Conditioning the dual MAP to stay negative and building entrance paths
//! at the origin by time reversal.
//!
//! The pipeline realizes the candidate entrance law: draw a start from the
//! stationary undershoot law, run the dual conditioned to stay negative
//! until it is far below the stop barrier, map through the Lamperti--Kiu
//! transform, and reverse the ssMp path in time. The reversed path starts
//! at radius <= e^{-K_stop} and dies at the undershoot radius e^{y}; its
//! exit data across the unit sphere is completed by one draw from the jump
//! kernel conditioned to cross, which is exactly the conditional law the
//! stationary quadruple assigns to the post-exit pair given the pre-exit
//! pair.

use crate::dual::build_dual;
use crate::error::{Error, Result};
use crate::lamperti::{lamperti_kiu, SsmpPath};
use crate::rng::{normal, RngStream};
use crate::simulate::{
    bridge_crossing_prob, bridge_max, draw_event, segment_increment, EventKind, MapPath,
    PathEvent, RawEvent,
};
use crate::spec::{JumpLaw, MapSpec};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Grid estimate of the probability that the dual never goes above zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HplusEstimate {
    /// Nonpositive ordinate grid, increasing toward zero.
    pub y_grid: Vec<f64>,
    /// values[state][i] = estimated probability from (y_grid[i], state).
    pub values: Vec<Vec<f64>>,
    /// Same estimate at twice the horizon, to expose horizon bias.
    pub values_double_horizon: Vec<Vec<f64>>,
    pub horizon: f64,
    pub method: String,
}

impl HplusEstimate {
    /// Largest discrepancy between the two horizons.
    pub fn horizon_bias(&self) -> f64 {
        let mut worst = 0.0_f64;
        for (a, b) in self.values.iter().zip(&self.values_double_horizon) {
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y).abs());
            }
        }
        worst
    }
}

/// Probability that one dual replica from (y, theta) stays at or below zero
/// through the horizon; segment-exact via bridge maxima.
fn survives_below_zero(
    dual: &MapSpec,
    y: f64,
    theta: usize,
    horizon: f64,
    rng: &mut ChaCha8Rng,
) -> bool {
    if y >= 0.0 {
        return false;
    }
    let mut t = 0.0;
    let mut xi = y;
    let mut state = theta;
    loop {
        let (wait, event) = draw_event(dual, state, rng);
        let dur = wait.min(horizon - t);
        let (a, s) = (dual.drift[state], dual.sigma[state]);
        let x_new = xi + segment_increment(a, s, dur, rng);
        if bridge_max(xi, x_new, s * s * dur, rng) > 0.0 {
            return false;
        }
        xi = x_new;
        t += dur;
        if t >= horizon {
            return true;
        }
        match event.unwrap() {
            RawEvent::Switch { to, jump } => {
                xi += jump;
                state = to;
            }
            RawEvent::OrdinateJump { size } => xi += size,
            RawEvent::Kill => return true,
        }
        if xi > 0.0 {
            return false;
        }
    }
}

/// Horizon Monte-Carlo estimate of the stay-negative probability on a grid
/// of starting points. Refuses specs whose ordinate does not drift down,
/// where the probability is identically zero.
pub fn estimate_hplus(
    dual: &MapSpec,
    y_grid: &[f64],
    states: &[usize],
    horizon: f64,
    n: usize,
    stream: RngStream,
) -> Result<HplusEstimate> {
    if y_grid.iter().any(|y| *y > 0.0) {
        return Err(Error::DimensionMismatch("y grid must be nonpositive".into()));
    }
    let est = crate::fluctuation::drift_rate(dual, 200.0, 500.max(n / 50), stream.offset(1 << 40))?;
    if est.mean + 3.0 * est.se >= 0.0 {
        return Err(Error::NonNegativeDrift(est.mean));
    }
    let run = |hor: f64, salt: u64| -> Vec<Vec<f64>> {
        states
            .iter()
            .enumerate()
            .map(|(si, &st)| {
                y_grid
                    .iter()
                    .enumerate()
                    .map(|(yi, &y)| {
                        let base = salt
                            .wrapping_add((si as u64) << 32)
                            .wrapping_add((yi as u64) << 24);
                        let hits: usize = (0..n)
                            .into_par_iter()
                            .map(|i| {
                                let mut rng = stream.offset(base + i as u64).rng();
                                usize::from(survives_below_zero(dual, y, st, hor, &mut rng))
                            })
                            .sum();
                        hits as f64 / n as f64
                    })
                    .collect()
            })
            .collect()
    };
    let values = run(horizon, 0);
    let values_double_horizon = run(2.0 * horizon, 1 << 41);
    Ok(HplusEstimate {
        y_grid: y_grid.to_vec(),
        values,
        values_double_horizon,
        horizon,
        method: "horizon-MC".into(),
    })
}

/// Sampling scheme for the conditioned dual.
#[derive(Debug, Clone, Copy)]
pub enum Scheme {
    /// Resample whole paths until one stays negative through `t_check` and
    /// ends below the stop barrier.
    Rejection { t_check: f64 },
    /// Exact transform for the one-state Brownian-with-negative-drift dual:
    /// diffusion with drift b(y) = m + sigma^2 H'(y)/H(y),
    /// H(y) = 1 - exp(-(2|m|/sigma^2) |y|).
    HTransformLevy,
}

/// Event-driven rejection attempt for diffusion-free duals: negativity is
/// checked exactly on the linear segments, and only breakpoints are stored.
/// Rejected attempts therefore cost a few events, not a mesh walk.
fn rejection_attempt_linear(
    dual: &MapSpec,
    y0: f64,
    theta0: usize,
    t_check: f64,
    mesh: f64,
    rng: &mut ChaCha8Rng,
) -> Option<MapPath> {
    let mut t = 0.0;
    let mut xi = y0;
    let mut state = theta0;
    let mut path = MapPath {
        mesh,
        times: vec![0.0],
        xi: vec![y0],
        theta: vec![theta0 as u32],
        events: Vec::new(),
        lifetime: None,
    };
    loop {
        let (wait, event) = draw_event(dual, state, rng);
        let seg_end = (t + wait).min(t_check);
        let a = dual.drift[state];
        if a > 0.0 && xi + a * (seg_end - t) >= 0.0 {
            return None;
        }
        xi += a * (seg_end - t);
        t = seg_end;
        path.times.push(t);
        path.xi.push(xi);
        path.theta.push(state as u32);
        if t >= t_check {
            return Some(path);
        }
        match event.unwrap() {
            RawEvent::Switch { to, jump } => {
                let pre = xi;
                xi += jump;
                if xi >= 0.0 {
                    return None;
                }
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
                if xi >= 0.0 {
                    return None;
                }
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
            RawEvent::Kill => return None,
        }
    }
}

/// Insert mesh multiples into a piecewise-linear breakpoint path so it
/// honors the usual sample-grid contract.
fn densify_linear(path: &MapPath) -> MapPath {
    let mesh = path.mesh;
    let mut out = MapPath {
        mesh,
        times: vec![path.times[0]],
        xi: vec![path.xi[0]],
        theta: vec![path.theta[0]],
        events: path.events.clone(),
        lifetime: path.lifetime,
    };
    for i in 1..path.len() {
        let (t0, t1) = (path.times[i - 1], path.times[i]);
        let (x0, x1) = (path.xi[i - 1], path.xi[i]);
        if t1 > t0 {
            let mut g = (t0 / mesh).floor() * mesh + mesh;
            while g < t1 - 1e-15 {
                let w = (g - t0) / (t1 - t0);
                out.times.push(g);
                out.xi.push(x0 * (1.0 - w) + x1 * w);
                out.theta.push(path.theta[i - 1]);
                g += mesh;
            }
        }
        out.times.push(t1);
        out.xi.push(x1);
        out.theta.push(path.theta[i]);
    }
    out
}

/// One rejection attempt; `None` when the path touched zero. The result is
/// recorded on the mesh plus event times, like any simulated path, and the
/// bridge crossing test keeps the conditioning exact between grid points.
fn rejection_attempt(
    dual: &MapSpec,
    y0: f64,
    theta0: usize,
    t_check: f64,
    mesh: f64,
    rng: &mut ChaCha8Rng,
) -> Option<MapPath> {
    let mut t = 0.0;
    let mut xi = y0;
    let mut state = theta0;
    let mut path = MapPath {
        mesh,
        times: vec![0.0],
        xi: vec![y0],
        theta: vec![theta0 as u32],
        events: Vec::new(),
        lifetime: None,
    };
    loop {
        let (wait, event) = draw_event(dual, state, rng);
        let seg_end = (t + wait).min(t_check);
        let (a, s) = (dual.drift[state], dual.sigma[state]);
        if s == 0.0 {
            if a > 0.0 && xi + a * (seg_end - t) >= 0.0 {
                return None;
            }
            // record the grid points inside the segment
            let mut g = (t / mesh).floor() * mesh + mesh;
            while g < seg_end - 1e-15 {
                path.times.push(g);
                path.xi.push(xi + a * (g - t));
                path.theta.push(state as u32);
                g += mesh;
            }
            xi += a * (seg_end - t);
            t = seg_end;
            path.times.push(t);
            path.xi.push(xi);
            path.theta.push(state as u32);
        } else {
            let mut g = (t / mesh).floor() * mesh + mesh;
            loop {
                let step_end = g.min(seg_end);
                let dur = step_end - t;
                if dur <= 1e-15 {
                    if step_end >= seg_end {
                        break;
                    }
                    g += mesh;
                    continue;
                }
                let x_new = xi + segment_increment(a, s, dur, rng);
                if x_new >= 0.0 {
                    return None;
                }
                // exact intra-step conditioning
                let p = bridge_crossing_prob(xi, x_new, s * s * dur, 0.0);
                if p > 0.0 && rng.gen::<f64>() < p {
                    return None;
                }
                xi = x_new;
                t = step_end;
                path.times.push(t);
                path.xi.push(xi);
                path.theta.push(state as u32);
                if step_end >= seg_end {
                    break;
                }
                g += mesh;
            }
        }
        if t >= t_check {
            return Some(path);
        }
        match event.unwrap() {
            RawEvent::Switch { to, jump } => {
                let pre = xi;
                xi += jump;
                if xi >= 0.0 {
                    return None;
                }
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
                if xi >= 0.0 {
                    return None;
                }
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
            RawEvent::Kill => return None,
        }
    }
}

/// Exact conditioned diffusion for the one-state Brownian dual, stepped on
/// the mesh with boundary-adaptive substeps so the record never reaches
/// zero.
fn h_transform_levy_path(
    dual: &MapSpec,
    y0: f64,
    t_end: f64,
    mesh: f64,
    rng: &mut ChaCha8Rng,
) -> Result<MapPath> {
    if dual.n_states != 1
        || dual.sigma[0] <= 0.0
        || dual.drift[0] >= 0.0
        || dual.jumps[0].rate > 0.0
    {
        return Err(Error::DimensionMismatch(
            "exact transform needs a one-state Brownian dual with negative drift".into(),
        ));
    }
    let m = dual.drift[0];
    let sigma = dual.sigma[0];
    let c = 2.0 * m.abs() / (sigma * sigma);
    let b = |y: f64| {
        let e = (c * y).exp();
        m + sigma * sigma * (-c) * e / (1.0 - e)
    };
    let mut path = MapPath {
        mesh,
        times: vec![0.0],
        xi: vec![y0],
        theta: vec![0],
        events: Vec::new(),
        lifetime: None,
    };
    let mut t = 0.0;
    let mut xi = y0;
    while t < t_end - 1e-12 {
        let grid_target = t + mesh;
        // substep adaptively toward the next grid point
        let mut s = t;
        while s < grid_target - 1e-15 {
            let drift = b(xi);
            let dt_boundary = (xi / (6.0 * sigma)).powi(2);
            let dt_drift = (0.25 * xi.abs() / drift.abs().max(1e-12)).min(mesh);
            let dt = (grid_target - s).min(dt_boundary.max(1e-12)).min(dt_drift.max(1e-12));
            if dt < 1e-14 {
                return Err(Error::StepUnderflow((s, xi)));
            }
            let mut proposal = xi + drift * dt + sigma * dt.sqrt() * normal(rng);
            let mut guard = 0;
            while proposal >= 0.0 {
                proposal = xi + drift * dt + sigma * dt.sqrt() * normal(rng);
                guard += 1;
                if guard > 1000 {
                    return Err(Error::StepUnderflow((s, xi)));
                }
            }
            xi = proposal;
            s += dt;
        }
        t = grid_target;
        path.times.push(t);
        path.xi.push(xi);
        path.theta.push(0);
    }
    Ok(path)
}

/// A conditioned dual path from (y0, theta0), guaranteed strictly negative
/// on its record. Rejection runs to `t_check` and additionally requires the
/// end below `end_below`, which both certifies the stay-negative event out
/// to the horizon and provides the truncation point for the entrance
/// pipeline.
pub fn sample_conditioned_negative(
    dual: &MapSpec,
    y0: f64,
    theta0: usize,
    scheme: Scheme,
    mesh: f64,
    end_below: f64,
    stream: RngStream,
) -> Result<MapPath> {
    if y0 >= 0.0 {
        return Err(Error::DimensionMismatch("start must be negative".into()));
    }
    let mut rng = stream.rng();
    match scheme {
        Scheme::Rejection { t_check } => {
            let linear = dual.is_diffusion_free();
            let mut attempts = 0usize;
            loop {
                attempts += 1;
                let attempt = if linear {
                    rejection_attempt_linear(dual, y0, theta0, t_check, mesh, &mut rng)
                } else {
                    rejection_attempt(dual, y0, theta0, t_check, mesh, &mut rng)
                };
                if let Some(path) = attempt {
                    if *path.xi.last().unwrap() < end_below {
                        return Ok(if linear { densify_linear(&path) } else { path });
                    }
                }
                if attempts >= 200_000 {
                    return Err(Error::RejectionTooSlow(1.0 / attempts as f64));
                }
            }
        }
        Scheme::HTransformLevy => {
            let t_end = {
                // long enough to fall below the barrier with margin
                let need = (end_below - y0).abs() / dual.drift[0].abs();
                2.0 * need + 20.0
            };
            let mut tries = 0;
            loop {
                let path = h_transform_levy_path(dual, y0, t_end, mesh, &mut rng)?;
                if *path.xi.last().unwrap() < end_below {
                    return Ok(path);
                }
                tries += 1;
                if tries > 100 {
                    return Err(Error::RejectionTooSlow(0.0));
                }
            }
        }
    }
}

/// An entrance path at the origin plus its exit bookkeeping.
#[derive(Debug, Clone)]
pub struct EntranceSample {
    /// Reversed ssMp path: starts at radius <= e^{-k_stop}, ends at e^{y}.
    pub path: SsmpPath,
    pub source_y: f64,
    pub source_state: u32,
    pub k_stop: f64,
    /// Clock mass of the discarded deep tail, bounded per sample.
    pub truncated_clock_mass: f64,
    /// (pre state, pre log-radius, post state, post log-radius) at the exit
    /// of the unit ball.
    pub exit: [f64; 4],
}

/// Pipeline factory for entrance samples.
#[derive(Debug, Clone)]
pub struct EntranceBuilder {
    pub spec: MapSpec,
    pub dual: MapSpec,
    pub alpha: f64,
    pub k_stop: f64,
    pub mesh: f64,
    pub t_check: f64,
    /// Realization of the creeping atom: a draw at y = 0 starts the dual at
    /// -eps_atom, standing in for the limit from below.
    pub eps_atom: f64,
}

impl EntranceBuilder {
    pub fn new(spec: &MapSpec, pi: &[f64], alpha: f64) -> Result<Self> {
        let dual = build_dual(spec, pi)?;
        let drift = dual.analytic_drift(pi);
        if drift >= 0.0 {
            return Err(Error::NonNegativeDrift(drift));
        }
        Ok(EntranceBuilder {
            spec: spec.clone(),
            dual,
            alpha,
            k_stop: 12.0,
            mesh: crate::simulate::DEFAULT_MESH,
            t_check: 50.0 / drift.abs(),
            eps_atom: 1e-2,
        })
    }

    /// Build one entrance sample from a stationary-undershoot draw (y <= 0,
    /// state).
    pub fn sample(&self, y: f64, theta: usize, stream: RngStream) -> Result<EntranceSample> {
        let is_atom = y == 0.0;
        let y0 = if y <= -self.eps_atom { y } else { -self.eps_atom };
        let linear = self.dual.is_diffusion_free();
        let mut rng = stream.rng();
        let mut attempts = 0usize;
        let full = loop {
            attempts += 1;
            let attempt = if linear {
                rejection_attempt_linear(&self.dual, y0, theta, self.t_check, self.mesh, &mut rng)
            } else {
                rejection_attempt(&self.dual, y0, theta, self.t_check, self.mesh, &mut rng)
            };
            if let Some(path) = attempt {
                if *path.xi.last().unwrap() < -self.k_stop {
                    break path;
                }
            }
            if attempts >= 200_000 {
                return Err(Error::RejectionTooSlow(1.0 / attempts as f64));
            }
        };
        // truncate at the first point below the stop barrier before any
        // densification, so the deep tail is never meshed
        let cut = full
            .xi
            .iter()
            .position(|x| *x < -self.k_stop)
            .expect("end condition guarantees a crossing");
        let truncated = {
            let raw = MapPath {
                mesh: full.mesh,
                times: full.times[..=cut].to_vec(),
                xi: full.xi[..=cut].to_vec(),
                theta: full.theta[..=cut].to_vec(),
                events: full
                    .events
                    .iter()
                    .filter(|e| e.t <= full.times[cut])
                    .cloned()
                    .collect(),
                lifetime: None,
            };
            if linear {
                densify_linear(&raw)
            } else {
                raw
            }
        };
        // clock mass beyond the truncation: measured tail plus a drift bound
        let tail_mass = {
            let mut acc = 0.0;
            for i in cut..full.len() - 1 {
                let f0 = (self.alpha * full.xi[i]).exp();
                let f1 = (self.alpha * full.xi[i + 1]).exp();
                acc += 0.5 * (f0 + f1) * (full.times[i + 1] - full.times[i]);
            }
            let end = (self.alpha * full.xi.last().unwrap()).exp();
            acc + end / (self.alpha * self.dual.analytic_drift_abs())
        };
        let forward = lamperti_kiu(&truncated, self.alpha)?;
        let total = *forward.times.last().unwrap();
        let n = forward.len();
        let mut times = Vec::with_capacity(n);
        let mut r = Vec::with_capacity(n);
        let mut th = Vec::with_capacity(n);
        for i in (0..n).rev() {
            times.push(total - forward.times[i]);
            r.push(forward.r[i]);
            th.push(forward.theta[i]);
        }
        let path = SsmpPath {
            alpha: self.alpha,
            times,
            r,
            theta: th,
            lifetime: Some(total),
            from_origin: true,
        };
        // completion of the exit across the unit sphere
        let mut rng = stream.offset(1 << 48).rng();
        let (post_state, post_logr) = if is_atom {
            (theta as u32, 0.0)
        } else {
            let (phi, jump) = conditional_crossing_jump(&self.spec, theta, -y, &mut rng)?;
            (phi as u32, y + jump)
        };
        Ok(EntranceSample {
            path,
            source_y: y,
            source_state: theta as u32,
            k_stop: self.k_stop,
            truncated_clock_mass: tail_mass,
            exit: [theta as f64, y, post_state as f64, post_logr],
        })
    }
}

impl MapSpec {
    fn analytic_drift_abs(&self) -> f64 {
        let pi = crate::spec::stationary_pi(&self.q).unwrap_or_else(|_| {
            vec![1.0 / self.n_states as f64; self.n_states]
        });
        self.analytic_drift(&pi).abs().max(1e-6)
    }
}

/// Draw (target state, jump size) from the jump kernel of `spec` at `state`,
/// conditioned on the jump exceeding `gap` > 0.
fn conditional_crossing_jump(
    spec: &MapSpec,
    state: usize,
    gap: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(usize, f64)> {
    // crossing intensities per component
    let mut weights: Vec<(usize, f64, &JumpLaw)> = Vec::new();
    let own = &spec.jumps[state];
    if own.rate > 0.0 {
        weights.push((state, own.rate * own.law.tail(gap), &own.law));
    }
    for k in 0..spec.n_states {
        if k != state && spec.q[state][k] > 0.0 {
            let law = spec.switch_law(state, k);
            let w = spec.q[state][k] * law.tail(gap);
            if w > 0.0 {
                weights.push((k, w, law));
            }
        }
    }
    let total: f64 = weights.iter().map(|w| w.1).sum();
    if total <= 0.0 {
        return Err(Error::MalformedJumpLaw(
            format!("state {state}"),
            format!("no jump component can cross a gap of {gap}"),
        ));
    }
    let mut pick = rng.gen::<f64>() * total;
    for (target, w, law) in &weights {
        pick -= w;
        if pick <= 0.0 {
            let size = sample_above(law, gap, rng)?;
            return Ok((*target, size));
        }
    }
    unreachable!()
}

/// Sample a jump law conditioned to exceed `gap`.
fn sample_above(law: &JumpLaw, gap: f64, rng: &mut ChaCha8Rng) -> Result<f64> {
    match law {
        JumpLaw::Exponential { beta, up: true } => {
            // memorylessness
            Ok(gap + crate::rng::exponential(rng, *beta))
        }
        JumpLaw::TwoSidedExponential { beta_up, .. } if gap >= 0.0 => {
            Ok(gap + crate::rng::exponential(rng, *beta_up))
        }
        JumpLaw::PointMass { c } if *c > gap => Ok(*c),
        JumpLaw::Empirical { samples } => {
            let eligible: Vec<f64> = samples.iter().copied().filter(|s| *s > gap).collect();
            if eligible.is_empty() {
                return Err(Error::MalformedJumpLaw(
                    "empirical".into(),
                    "no sample exceeds the gap".into(),
                ));
            }
            Ok(eligible[rng.gen_range(0..eligible.len())])
        }
        other => {
            // generic rejection with a cap
            for _ in 0..1_000_000 {
                let s = other.sample(rng);
                if s > gap {
                    return Ok(s);
                }
            }
            Err(Error::MalformedJumpLaw(
                format!("{other:?}"),
                format!("rejection failed to clear gap {gap}"),
            ))
        }
    }
}

/// Values at the first exit of the radius-r ball along a path: (pre angle,
/// pre log-radius, post angle, post log-radius).
pub fn exit_quadruple(ss: &SsmpPath, radius: f64) -> Result<[f64; 4]> {
    let idx = ss
        .r
        .iter()
        .position(|ri| *ri > radius)
        .ok_or(Error::NeverExits(radius))?;
    let pre = idx.saturating_sub(1);
    Ok([
        ss.theta[pre] as f64,
        ss.r[pre].ln(),
        ss.theta[idx] as f64,
        ss.r[idx].ln(),
    ])
}

/// Per-radius diagnostics of the convergence toward the entrance law.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub z_radii: Vec<f64>,
    /// Max marginal KS distance between the exit quadruple under each start
    /// and the entrance ensemble.
    pub ks_to_entrance: Vec<f64>,
    pub deltas: Vec<f64>,
    /// E[tau_delta wedge 1] per delta, from the smallest start radius.
    pub mean_exit_times: Vec<f64>,
    /// Log-log slope of the mean exit time against delta.
    pub slope: f64,
}

/// Exit quadruple of the unit ball under a start at radius `z` on state
/// `theta0`, simulated exactly at the MAP level.
pub fn exit_quadruple_from(
    spec: &MapSpec,
    z: f64,
    theta0: usize,
    n: usize,
    stream: RngStream,
    cfg: &crate::fluctuation::PassageConfig,
) -> Result<crate::stats::EmpiricalDist> {
    let level = -z.ln();
    let ens = crate::fluctuation::multilevel_ensembles(spec, theta0, &[level], n, stream, cfg)?
        .into_iter()
        .next()
        .unwrap();
    Ok(ens)
}

/// Time of first exit from the delta-ball, capped at 1, in ssMp time.
/// Exact for diffusion-free specs; Brownian segments accumulate the clock
/// on the mesh.
pub fn exit_time_capped(
    spec: &MapSpec,
    alpha: f64,
    z: f64,
    theta0: usize,
    delta: f64,
    mesh: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let mut t_clock = 0.0; // ssMp time = additive clock
    let mut xi = z.ln(); // absolute log-radius
    let mut state = theta0;
    let target = delta.ln();
    loop {
        let (wait, event) = draw_event(spec, state, rng);
        let (a, s) = (spec.drift[state], spec.sigma[state]);
        if s == 0.0 {
            // exact clock over a linear segment
            let dur = if a > 0.0 && xi + a * wait > target {
                (target - xi) / a
            } else {
                wait
            };
            let add = if a == 0.0 {
                (alpha * xi).exp() * dur
            } else {
                ((alpha * (xi + a * dur)).exp() - (alpha * xi).exp()) / (alpha * a)
            };
            if t_clock + add >= 1.0 {
                return 1.0;
            }
            t_clock += add;
            xi += a * dur;
            if xi >= target {
                return t_clock.min(1.0);
            }
        } else {
            let mut seg = 0.0;
            while seg < wait {
                let dur = mesh.min(wait - seg);
                let x_new = xi + segment_increment(a, s, dur, rng);
                t_clock += 0.5 * ((alpha * xi).exp() + (alpha * x_new).exp()) * dur;
                xi = x_new;
                seg += dur;
                if xi > target {
                    return t_clock.min(1.0);
                }
                if t_clock >= 1.0 {
                    return 1.0;
                }
            }
        }
        match event.unwrap() {
            RawEvent::Switch { to, jump } => {
                xi += jump;
                state = to;
            }
            RawEvent::OrdinateJump { size } => xi += size,
            RawEvent::Kill => return 1.0,
        }
        if xi > target {
            return t_clock.min(1.0);
        }
    }
}

/// Compare exit quadruples under small starts against an entrance ensemble
/// and measure the small-ball exit-time scaling.
pub fn convergence_diagnostic(
    spec: &MapSpec,
    alpha: f64,
    z_radii: &[f64],
    deltas: &[f64],
    n: usize,
    stream: RngStream,
    entrance: &crate::stats::EmpiricalDist,
) -> Result<ConvergenceReport> {
    let cfg = crate::fluctuation::PassageConfig::default();
    let mut ks_to_entrance = Vec::with_capacity(z_radii.len());
    for (k, z) in z_radii.iter().enumerate() {
        let ens = exit_quadruple_from(spec, *z, 0, n, stream.offset((k as u64) << 33), &cfg)?;
        ks_to_entrance.push(crate::stats::max_marginal_ks(&ens, entrance)?);
    }
    let z_small = z_radii.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut mean_exit_times = Vec::with_capacity(deltas.len());
    for (k, delta) in deltas.iter().enumerate() {
        let total: f64 = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream.offset((1 << 50) + ((k as u64) << 33) + i as u64).rng();
                exit_time_capped(spec, alpha, z_small, 0, *delta, cfg.mesh, &mut rng)
            })
            .sum();
        mean_exit_times.push(total / n as f64);
    }
    // least-squares slope in log-log coordinates
    let xs: Vec<f64> = deltas.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = mean_exit_times.iter().map(|m| m.ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let slope = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    Ok(ConvergenceReport {
        z_radii: z_radii.to_vec(),
        ks_to_entrance,
        deltas: deltas.to_vec(),
        mean_exit_times,
        slope,
    })
}
