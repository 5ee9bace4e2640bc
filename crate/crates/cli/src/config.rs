//! Experiment configuration: a flat TOML file with documented keys, mapped
//! onto the library's model types. Every default is resolved at load time
//! so the manifest echoes a fully self-describing configuration.

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use ssmp::spec::{validate_spec, JumpComponent, JumpLaw, MapSpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Simulate,
    Passage,
    Rho,
    Entrance,
    Cone,
    Check,
}

/// Jump law description; `kind` selects the variant.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LawConfig {
    None,
    PointMass { c: f64 },
    Exponential { beta: f64, up: bool },
    TwoSidedExponential { beta_up: f64, beta_down: f64, p_up: f64 },
    Empirical { samples: Vec<f64> },
}

impl From<&LawConfig> for JumpLaw {
    fn from(l: &LawConfig) -> JumpLaw {
        match l {
            LawConfig::None => JumpLaw::None,
            LawConfig::PointMass { c } => JumpLaw::PointMass { c: *c },
            LawConfig::Exponential { beta, up } => JumpLaw::Exponential {
                beta: *beta,
                up: *up,
            },
            LawConfig::TwoSidedExponential {
                beta_up,
                beta_down,
                p_up,
            } => JumpLaw::TwoSidedExponential {
                beta_up: *beta_up,
                beta_down: *beta_down,
                p_up: *p_up,
            },
            LawConfig::Empirical { samples } => JumpLaw::Empirical {
                samples: samples.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JumpEntry {
    pub state: usize,
    pub rate: f64,
    pub law: LawConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SwitchJumpEntry {
    pub from: usize,
    pub to: usize,
    pub law: LawConfig,
}

/// The model block. Keys: states, q, drift, sigma, jump, switch_jump,
/// kill_rate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapConfig {
    pub states: usize,
    pub q: Vec<Vec<f64>>,
    pub drift: Vec<f64>,
    pub sigma: Vec<f64>,
    #[serde(default)]
    pub jump: Vec<JumpEntry>,
    #[serde(default)]
    pub switch_jump: Vec<SwitchJumpEntry>,
    #[serde(default)]
    pub kill_rate: f64,
}

impl MapConfig {
    pub fn to_spec(&self) -> anyhow::Result<MapSpec> {
        let n = self.states;
        let mut jumps = vec![JumpComponent::none(); n];
        for j in &self.jump {
            if j.state >= n {
                bail!("jump entry references state {} of {n}", j.state);
            }
            jumps[j.state] = JumpComponent {
                rate: j.rate,
                law: (&j.law).into(),
            };
        }
        let switch_jumps = if self.switch_jump.is_empty() {
            None
        } else {
            let mut m = vec![vec![JumpLaw::None; n]; n];
            for s in &self.switch_jump {
                if s.from >= n || s.to >= n {
                    bail!("switch jump entry ({}, {}) out of range", s.from, s.to);
                }
                m[s.from][s.to] = (&s.law).into();
            }
            Some(m)
        };
        let spec = MapSpec {
            n_states: n,
            q: self.q.clone(),
            drift: self.drift.clone(),
            sigma: self.sigma.clone(),
            jumps,
            switch_jumps,
            kill_rate: self.kill_rate,
        };
        validate_spec(spec).map_err(|e| anyhow::anyhow!("{e}"))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConeConfig {
    pub theta0: f64,
}

fn default_seed() -> u64 {
    ssmp::battery::DEFAULT_SEED
}
fn default_n() -> usize {
    10_000
}
fn default_mesh() -> f64 {
    ssmp::simulate::DEFAULT_MESH
}
fn default_alpha() -> f64 {
    1.0
}
fn default_horizon() -> f64 {
    1.0
}
fn default_levels() -> Vec<f64> {
    vec![5.0, 10.0, 20.0]
}
fn default_radii() -> Vec<f64> {
    vec![0.1, 0.01, 0.001]
}
fn default_out() -> String {
    "out".into()
}
fn default_x0() -> f64 {
    0.0
}
fn default_k_stop() -> f64 {
    12.0
}

/// A full experiment description. Defaults are serialized back into the
/// manifest so runs are self-describing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: Kind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_mesh")]
    pub mesh: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_x0")]
    pub x0: f64,
    #[serde(default)]
    pub theta0_state: usize,
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    #[serde(default = "default_radii")]
    pub radii: Vec<f64>,
    #[serde(default = "default_k_stop")]
    pub k_stop: f64,
    #[serde(default = "default_out")]
    pub out: String,
    #[serde(default)]
    pub map: Option<MapConfig>,
    #[serde(default)]
    pub cone: Option<ConeConfig>,
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate_numbers()?;
        Ok(cfg)
    }

    fn validate_numbers(&self) -> anyhow::Result<()> {
        if self.n == 0 {
            bail!("n must be positive");
        }
        if self.mesh <= 0.0 {
            bail!("mesh must be positive");
        }
        if self.alpha <= 0.0 {
            bail!("alpha must be positive");
        }
        if self.horizon <= 0.0 {
            bail!("horizon must be positive");
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            bail!("levels must be strictly increasing");
        }
        if self.radii.windows(2).any(|w| w[0] <= w[1]) {
            bail!("radii must be strictly decreasing");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_config_with_defaults_resolved() {
        let text = r#"
kind = "rho"
levels = [2.0, 4.0]

[map]
states = 2
q = [[-1.0, 1.0], [2.0, -2.0]]
drift = [0.5, -1.0]
sigma = [1.0, 1.0]

[[map.jump]]
state = 0
rate = 0.5
law = { kind = "exponential", beta = 2.0, up = true }

[[map.switch_jump]]
from = 0
to = 1
law = { kind = "point_mass", c = 0.1 }
"#;
        let cfg: ExperimentConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.seed, ssmp::battery::DEFAULT_SEED);
        assert_eq!(cfg.n, 10_000);
        let spec = cfg.map.as_ref().unwrap().to_spec().unwrap();
        assert_eq!(spec.n_states, 2);
        assert_eq!(spec.jumps[0].rate, 0.5);
        assert!(spec.switch_jumps.is_some());
    }

    #[test]
    fn malformed_q_is_reported_by_index() {
        let text = r#"
kind = "simulate"

[map]
states = 2
q = [[-1.0, -1.0], [2.0, -2.0]]
drift = [0.0, 0.0]
sigma = [1.0, 1.0]
"#;
        let cfg: ExperimentConfig = toml::from_str(text).unwrap();
        let err = cfg.map.as_ref().unwrap().to_spec().unwrap_err();
        assert!(
            err.to_string().contains("negative off-diagonal"),
            "unexpected error: {err}"
        );
    }

    #[test]
    fn out_of_range_jump_state_is_rejected() {
        let text = r#"
kind = "simulate"

[map]
states = 1
q = [[0.0]]
drift = [0.0]
sigma = [1.0]

[[map.jump]]
state = 3
rate = 1.0
law = { kind = "exponential", beta = 1.0, up = true }
"#;
        let cfg: ExperimentConfig = toml::from_str(text).unwrap();
        assert!(cfg.map.as_ref().unwrap().to_spec().is_err());
    }
}
