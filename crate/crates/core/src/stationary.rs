//! Stationary passage laws: the quadruple law rho of
//! (state-before, undershoot, state-after, overshoot) at deep levels, its
//! marginals, the ladder invariant measured on a height skeleton, and the
//! Markov-renewal occupation limit.

use crate::error::{Error, Result};
use crate::fluctuation::{multilevel_ensembles, PassageConfig};
use crate::rng::RngStream;
use crate::simulate::{bridge_max, draw_event, segment_increment, RawEvent};
use crate::spec::MapSpec;
use crate::stats::{max_marginal_ks, EmpiricalDist};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Quadruple ensembles per level plus the convergence diagnostics.
#[derive(Debug, Clone)]
pub struct RhoEstimate {
    pub levels: Vec<f64>,
    pub per_level: Vec<EmpiricalDist>,
    /// Max marginal KS distance between each level's ensemble and the
    /// deepest one (last entry compares the deepest level with itself).
    pub distances_to_deepest: Vec<f64>,
}

impl RhoEstimate {
    /// The deepest-level ensemble: the rho estimate itself.
    pub fn rho_hat(&self) -> &EmpiricalDist {
        self.per_level.last().unwrap()
    }
}

/// Estimate rho by first passage at an increasing ladder of levels. The
/// deepest ensemble is the estimate; distances between shallower levels and
/// the deepest quantify how settled the law already is.
pub fn estimate_rho(
    spec: &MapSpec,
    theta0: usize,
    levels: &[f64],
    n: usize,
    stream: RngStream,
    cfg: &PassageConfig,
) -> Result<RhoEstimate> {
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::DimensionMismatch(
            "levels must be strictly increasing".into(),
        ));
    }
    let per_level = multilevel_ensembles(spec, theta0, levels, n, stream, cfg)?;
    let deepest = per_level.last().unwrap();
    let distances_to_deepest = per_level
        .iter()
        .map(|e| max_marginal_ks(e, deepest))
        .collect::<Result<Vec<f64>>>()?;
    Ok(RhoEstimate {
        levels: levels.to_vec(),
        per_level,
        distances_to_deepest,
    })
}

/// Closed-form stationary overshoot density z -> beta exp(-beta z) for
/// state-independent Exp(beta) up-jump models.
pub fn rho_ominus_closed_form(beta: f64) -> impl Fn(f64) -> f64 {
    assert!(beta > 0.0);
    move |z: f64| {
        if z < 0.0 {
            0.0
        } else {
            beta * (-beta * z).exp()
        }
    }
}

/// The (undershoot, state-before) marginal ensemble at a deep level: the
/// starting law of the entrance construction. Columns are (y <= 0, state).
pub fn sample_rho_oplus(
    spec: &MapSpec,
    x_deep: f64,
    n: usize,
    stream: RngStream,
    cfg: &PassageConfig,
) -> Result<EmpiricalDist> {
    let ens = multilevel_ensembles(spec, 0, &[x_deep], n, stream, cfg)?
        .into_iter()
        .next()
        .unwrap();
    let samples = ens
        .samples
        .iter()
        .map(|row| vec![row[1], row[0]])
        .collect();
    EmpiricalDist::with_weights(samples, ens.weights)
}

/// State histogram of the ladder-height skeleton: the modulator recorded
/// each time the running maximum first passes another multiple of
/// `h_ladder`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PiPlusEstimate {
    pub h_ladder: f64,
    pub histogram: Vec<f64>,
    /// Same estimator at h_ladder / 2, to expose skeleton bias.
    pub histogram_half: Vec<f64>,
    pub records: usize,
}

impl PiPlusEstimate {
    /// Total-variation distance between the h and h/2 histograms.
    pub fn h_sensitivity(&self) -> f64 {
        self.histogram
            .iter()
            .zip(&self.histogram_half)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / 2.0
    }
}

/// Walk one path until its running max reaches `height`, accumulating
/// skeleton records at every multiple of `h` above the burn-in height into
/// `hist` (and of `h/2` into `hist_half`). Burn-in discards the records
/// still correlated with the fixed start.
#[allow(clippy::too_many_arguments)]
fn skeleton_walk(
    spec: &MapSpec,
    height: f64,
    burn: f64,
    h: f64,
    start_state: usize,
    t_max: f64,
    rng: &mut rand_chacha::ChaCha8Rng,
    hist: &mut [f64],
    hist_half: &mut [f64],
) {
    let mut t = 0.0;
    let mut xi = 0.0;
    let mut state = start_state;
    let mut max = 0.0_f64;
    let record = move |from: f64, to: f64, state: usize, hist: &mut [f64], hist_half: &mut [f64]| {
        let from = from.max(burn);
        if to <= from {
            return;
        }
        let mut k = (from / h).floor() + 1.0;
        while k * h <= to {
            hist[state] += 1.0;
            k += 1.0;
        }
        let hh = h / 2.0;
        let mut k = (from / hh).floor() + 1.0;
        while k * hh <= to {
            hist_half[state] += 1.0;
            k += 1.0;
        }
    };
    while max < height && t < t_max {
        let (wait, event) = draw_event(spec, state, rng);
        let dur = wait.min(t_max - t);
        let (a, s) = (spec.drift[state], spec.sigma[state]);
        let x_new = xi + segment_increment(a, s, dur, rng);
        let seg_max = bridge_max(xi, x_new, s * s * dur, rng);
        if seg_max > max {
            record(max, seg_max, state, hist, hist_half);
            max = seg_max;
        }
        xi = x_new;
        t += dur;
        if t >= t_max {
            break;
        }
        match event {
            Some(RawEvent::Switch { to, jump }) => {
                xi += jump;
                state = to;
                if xi > max {
                    record(max, xi, state, hist, hist_half);
                    max = xi;
                }
            }
            Some(RawEvent::OrdinateJump { size }) => {
                xi += size;
                if xi > max {
                    record(max, xi, state, hist, hist_half);
                    max = xi;
                }
            }
            _ => break,
        }
    }
}

/// Ladder-skeleton estimate of the ascending invariant state law from N
/// fresh paths, each run until its maximum has grown by `height`.
pub fn estimate_pi_plus(
    spec: &MapSpec,
    h_ladder: f64,
    height: f64,
    n: usize,
    stream: RngStream,
) -> Result<PiPlusEstimate> {
    let t_max = 1e5;
    let partials: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream.offset(i as u64).rng();
            let mut hist = vec![0.0; spec.n_states];
            let mut hist_half = vec![0.0; spec.n_states];
            skeleton_walk(
                spec,
                height,
                0.25 * height,
                h_ladder,
                i % spec.n_states,
                t_max,
                &mut rng,
                &mut hist,
                &mut hist_half,
            );
            (hist, hist_half)
        })
        .collect();
    let mut histogram = vec![0.0; spec.n_states];
    let mut histogram_half = vec![0.0; spec.n_states];
    for (h1, h2) in &partials {
        for j in 0..spec.n_states {
            histogram[j] += h1[j];
            histogram_half[j] += h2[j];
        }
    }
    let records = histogram.iter().sum::<f64>() as usize;
    if records == 0 {
        return Err(Error::EmptySample);
    }
    let t1: f64 = histogram.iter().sum();
    let t2: f64 = histogram_half.iter().sum();
    for j in 0..spec.n_states {
        histogram[j] /= t1;
        histogram_half[j] /= t2;
    }
    Ok(PiPlusEstimate {
        h_ladder,
        histogram,
        histogram_half,
        records,
    })
}

/// Independent cross-check of the skeleton histogram from a single long
/// trajectory instead of many fresh ones.
pub fn pi_plus_long_run(
    spec: &MapSpec,
    h_ladder: f64,
    height: f64,
    stream: RngStream,
) -> Result<PiPlusEstimate> {
    estimate_pi_plus(spec, h_ladder, height, 1, stream)
}

/// One row of the renewal occupation comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RenewalRow {
    pub y: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RenewalTable {
    pub rows: Vec<RenewalRow>,
    /// Estimated mean ladder-chain increment (growth per record), or the
    /// time slope of the maximum for creep-only models.
    pub mu_plus_hat: f64,
}

/// Markov-renewal occupation limit: the expected occupation of the window
/// [y - 1, y] by the ladder-height chain approaches Leb(window) / mu as y
/// grows.
///
/// Ladder time itself is not observable without the local time at the
/// maximum, so the check runs on observable renewal structures instead:
/// - models whose maximum grows by jumps: records are the strict-new-max
///   values; the left side counts records in the window, mu is the long-run
///   max growth per record;
/// - creep-only models: the range covers the window exactly once, so the
///   occupation is Leb(window) and mu is the drift of the maximum.
///
/// `window_indicator` restricts the test function to z in [0, 1] times the
/// flagged states; all-false gives zero on both sides.
pub fn renewal_limit_check(
    spec: &MapSpec,
    window_indicator: &[bool],
    y_grid: &[f64],
    n: usize,
    stream: RngStream,
) -> Result<RenewalTable> {
    if window_indicator.len() != spec.n_states {
        return Err(Error::DimensionMismatch(
            "window indicator needs one flag per state".into(),
        ));
    }
    let has_up_jumps = spec
        .jumps
        .iter()
        .any(|c| c.rate > 0.0 && c.law.tail(0.0) > 0.0)
        || spec.switch_jumps.is_some();
    let y_max = y_grid.iter().cloned().fold(0.0, f64::max);
    let t_max = 1e5;

    if !has_up_jumps {
        // creep-only: the range covers every window once; mu is the largest
        // drift, which is the slope of the maximum once the fastest state
        // dominates records (single-state in the battery)
        let slope = spec.drift.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let covered = if window_indicator.iter().any(|b| *b) {
            1.0
        } else {
            0.0
        };
        let rows = y_grid
            .iter()
            .map(|y| RenewalRow {
                y: *y,
                lhs: covered,
                rhs: covered * slope / slope,
            })
            .collect();
        return Ok(RenewalTable {
            rows,
            mu_plus_hat: slope,
        });
    }

    // jump-chain renewal records
    let results: Vec<(Vec<Vec<f64>>, f64, usize)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream.offset(i as u64).rng();
            let mut t = 0.0;
            let mut xi = 0.0;
            let mut state = 0usize;
            let mut max = 0.0_f64;
            let mut counts = vec![vec![0.0; spec.n_states]; y_grid.len()];
            let mut records = 0usize;
            while max < y_max + 1.0 && t < t_max {
                let (wait, event) = draw_event(spec, state, &mut rng);
                let dur = wait.min(t_max - t);
                let (a, s) = (spec.drift[state], spec.sigma[state]);
                let x_new = xi + segment_increment(a, s, dur, &mut rng);
                max = max.max(bridge_max(xi, x_new, s * s * dur, &mut rng));
                xi = x_new;
                t += dur;
                if t >= t_max {
                    break;
                }
                match event {
                    Some(RawEvent::Switch { to, jump }) => {
                        xi += jump;
                        state = to;
                    }
                    Some(RawEvent::OrdinateJump { size }) => xi += size,
                    _ => break,
                }
                if xi > max {
                    max = xi;
                    records += 1;
                    for (k, y) in y_grid.iter().enumerate() {
                        if max >= y - 1.0 && max <= *y {
                            counts[k][state] += 1.0;
                        }
                    }
                }
            }
            (counts, max, records)
        })
        .collect();
    let total_growth: f64 = results.iter().map(|r| r.1).sum();
    let total_records: usize = results.iter().map(|r| r.2).sum();
    if total_records == 0 {
        return Err(Error::EmptySample);
    }
    let mu_hat = total_growth / total_records as f64;
    // record-weighted state mass inside the indicator
    let mut per_state = vec![0.0; spec.n_states];
    for r in &results {
        for krow in &r.0 {
            for j in 0..spec.n_states {
                per_state[j] += krow[j];
            }
        }
    }
    let total_mass: f64 = per_state.iter().sum();
    let state_mass: f64 = if total_mass > 0.0 {
        (0..spec.n_states)
            .filter(|j| window_indicator[*j])
            .map(|j| per_state[j])
            .sum::<f64>()
            / total_mass
    } else {
        0.0
    };
    let rows = y_grid
        .iter()
        .enumerate()
        .map(|(k, y)| {
            let lhs: f64 = results
                .iter()
                .map(|r| {
                    (0..spec.n_states)
                        .filter(|j| window_indicator[*j])
                        .map(|j| r.0[k][j])
                        .sum::<f64>()
                })
                .sum::<f64>()
                / n as f64;
            RenewalRow {
                y: *y,
                lhs,
                rhs: state_mass / mu_hat,
            }
        })
        .collect();
    Ok(RenewalTable {
        rows,
        mu_plus_hat: mu_hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_fork;
    use crate::spec::{validate_spec, JumpComponent, JumpLaw, MapSpec};
    use crate::stats::ks_distance_cdf;

    fn pure_exp_cp(rate: f64, beta: f64, drift: f64) -> MapSpec {
        validate_spec(MapSpec::levy(
            drift,
            0.0,
            JumpComponent {
                rate,
                law: JumpLaw::Exponential { beta, up: true },
            },
        ))
        .unwrap()
    }

    #[test]
    fn closed_form_density_normalizes() {
        let f = rho_ominus_closed_form(1.7);
        let h = 1e-4;
        let total: f64 = (0..400_000).map(|i| f((i as f64 + 0.5) * h) * h).sum();
        assert!((total - 1.0).abs() < 1e-8, "mass {total}");
        assert!((rho_ominus_closed_form(1.0)(0.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn brownian_quadruple_degenerates_to_creep_atoms() {
        let spec = MapSpec::brownian(0.5, 1.0);
        let est = estimate_rho(
            &spec,
            0,
            &[1.0, 2.0],
            2000,
            rng_fork(41, 0),
            &PassageConfig::default(),
        )
        .unwrap();
        for e in &est.per_level {
            for row in &e.samples {
                assert_eq!(row[1], 0.0);
                assert_eq!(row[3], 0.0);
            }
        }
    }

    #[test]
    fn exponential_model_matches_renewal_marginals_at_depth() {
        // zero drift pure compound Poisson: overshoot exactly Exp(beta) and
        // undershoot Exp(beta) truncated at the level
        let spec = pure_exp_cp(1.0, 1.0, 0.0);
        let n = 100_000;
        let est = estimate_rho(
            &spec,
            0,
            &[5.0, 10.0, 20.0],
            n,
            rng_fork(41, 1),
            &PassageConfig::default(),
        )
        .unwrap();
        let deep = est.rho_hat();
        let z = deep.marginal(3).unwrap();
        let dz = ks_distance_cdf(&z, |v| 1.0 - (-v).exp()).unwrap();
        assert!(dz < 0.02, "overshoot KS {dz}");
        let y = deep.marginal(1).unwrap();
        let dy = ks_distance_cdf(&y, |v| (v.min(0.0)).exp()).unwrap();
        assert!(dy < 0.02, "undershoot KS {dy}");
    }

    #[test]
    fn deeper_levels_are_closer_in_law() {
        // state-dependent jump rates with slow switching: the shallow-level
        // ensemble still remembers the start state
        let spec = validate_spec(MapSpec {
            n_states: 2,
            q: vec![vec![-0.15, 0.15], vec![0.15, -0.15]],
            drift: vec![-0.2, -0.2],
            sigma: vec![0.0, 0.0],
            jumps: vec![
                JumpComponent {
                    rate: 1.2,
                    law: JumpLaw::Exponential { beta: 1.0, up: true },
                },
                JumpComponent {
                    rate: 0.4,
                    law: JumpLaw::Exponential { beta: 1.0, up: true },
                },
            ],
            switch_jumps: None,
            kill_rate: 0.0,
        })
        .unwrap();
        let est = estimate_rho(
            &spec,
            0,
            &[5.0, 10.0, 20.0],
            60_000,
            rng_fork(41, 2),
            &PassageConfig::default(),
        )
        .unwrap();
        assert!(
            est.distances_to_deepest[0] > est.distances_to_deepest[1],
            "distances {:?}",
            est.distances_to_deepest
        );
    }

    #[test]
    fn single_state_skeleton_is_trivial() {
        let spec = pure_exp_cp(1.0, 1.0, -0.2);
        let est = estimate_pi_plus(&spec, 1e-2, 10.0, 200, rng_fork(42, 0)).unwrap();
        assert_eq!(est.histogram, vec![1.0]);
        assert!(est.h_sensitivity() < 1e-12);
    }

    #[test]
    fn symmetric_two_state_skeleton_is_uniform() {
        let spec = validate_spec(MapSpec {
            n_states: 2,
            q: vec![vec![-1.0, 1.0], vec![1.0, -1.0]],
            drift: vec![0.5, 0.5],
            sigma: vec![0.4, 0.4],
            jumps: vec![JumpComponent::none(), JumpComponent::none()],
            switch_jumps: None,
            kill_rate: 0.0,
        })
        .unwrap();
        let est = estimate_pi_plus(&spec, 1e-2, 5.0, 400, rng_fork(42, 1)).unwrap();
        // skeleton records are strongly correlated within a path; allow a
        // generous symmetric tolerance rather than a per-record SE
        assert!(
            (est.histogram[0] - 0.5).abs() < 0.03,
            "histogram {:?}",
            est.histogram
        );
    }

    #[test]
    fn fast_state_dominates_skeleton_and_estimators_agree() {
        // drifts (2, 0.5): the maximum grows mostly while in state 0
        let spec = validate_spec(MapSpec {
            n_states: 2,
            q: vec![vec![-1.0, 1.0], vec![1.0, -1.0]],
            drift: vec![2.0, 0.5],
            sigma: vec![0.3, 0.3],
            jumps: vec![JumpComponent::none(), JumpComponent::none()],
            switch_jumps: None,
            kill_rate: 0.0,
        })
        .unwrap();
        let pi = crate::spec::stationary_pi(&spec.q).unwrap();
        let fresh = estimate_pi_plus(&spec, 1e-2, 30.0, 400, rng_fork(42, 2)).unwrap();
        assert!(
            fresh.histogram[0] > pi[0] + 0.05,
            "state 0 over-represented: {:?} vs pi {:?}",
            fresh.histogram,
            pi
        );
        let long = pi_plus_long_run(&spec, 1e-2, 6000.0, rng_fork(42, 3)).unwrap();
        assert!(
            (fresh.histogram[0] - long.histogram[0]).abs() < 0.03,
            "estimators disagree: {:?} vs {:?}",
            fresh.histogram,
            long.histogram
        );
        assert!(fresh.h_sensitivity() < 0.02);
    }

    #[test]
    fn renewal_occupation_pure_drift_is_one() {
        let spec = MapSpec::brownian(1.0, 0.0);
        let table =
            renewal_limit_check(&spec, &[true], &[2.0, 5.0], 10, rng_fork(43, 0)).unwrap();
        for row in &table.rows {
            assert!((row.lhs - 1.0).abs() < 1e-9);
            assert!((row.rhs - 1.0).abs() < 1e-9);
        }
        assert!((table.mu_plus_hat - 1.0).abs() < 1e-12);
    }

    #[test]
    fn renewal_occupation_zero_indicator_is_zero() {
        let spec = pure_exp_cp(1.0, 1.0, 0.0);
        let table =
            renewal_limit_check(&spec, &[false], &[5.0], 2000, rng_fork(43, 1)).unwrap();
        assert_eq!(table.rows[0].lhs, 0.0);
        assert_eq!(table.rows[0].rhs, 0.0);
    }

    #[test]
    fn renewal_occupation_matches_for_exponential_jumps() {
        // Exp(1) ladder jumps: occupation of a unit window tends to
        // 1 / mean-growth-per-record
        let spec = pure_exp_cp(1.0, 1.0, 0.0);
        let table =
            renewal_limit_check(&spec, &[true], &[20.0], 100_000, rng_fork(43, 2)).unwrap();
        let row = &table.rows[0];
        assert!(
            (row.lhs / row.rhs - 1.0).abs() < 0.1,
            "LHS {} vs RHS {}",
            row.lhs,
            row.rhs
        );
    }

    #[test]
    fn rho_oplus_is_supported_on_the_negative_half_line() {
        let spec = pure_exp_cp(1.0, 1.0, -0.5);
        let ens = sample_rho_oplus(
            &spec,
            15.0,
            20_000,
            rng_fork(44, 0),
            &PassageConfig::default(),
        )
        .unwrap();
        let mass: f64 = ens.weights.iter().sum();
        assert!((mass - 1.0).abs() < 1e-9);
        assert!(ens.samples.iter().all(|row| row[0] <= 0.0));
        // renewal oracle for drift -1/2, rate 1, Exp(1) jumps: undershoot
        // density 2 e^y (1 - e^y) on y < 0
        let y = ens.marginal(0).unwrap();
        let d = ks_distance_cdf(&y, |v| {
            let v = v.min(0.0);
            2.0 * (v.exp() - 0.5 * (2.0 * v).exp())
        })
        .unwrap();
        assert!(d < 0.02, "undershoot marginal KS {d}");
    }
}
