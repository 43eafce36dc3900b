//! Experiment configuration: one TOML file per experiment, merged over the
//! embedded market defaults.

use std::path::{Path, PathBuf};

use gemon_core::learning::Binning;
use gemon_core::params::{defaults_table, deserialize_at, merge_tables};
use gemon_core::sim::{Condition, PolicyKind, SimConfig, DEFAULT_SEEDS};
use gemon_core::statics::{Anchor, CutoffAxis, Plane, SweepParam};
use gemon_core::welfare::{Benefit, WelfareParams};
use gemon_core::{ConfigError, MarketParams, PopulationSpec, QueryDraw, UserState, UserType, ValidationError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub market: MarketParams,
    pub population: PopulationSpec,
    #[serde(default)]
    pub solve: SolveSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub ablation: AblationSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub cutoff: CutoffSection,
    #[serde(default)]
    pub learning: LearningSection,
    #[serde(default)]
    pub welfare: WelfareSection,
}

fn default_seeds() -> Vec<u64> {
    DEFAULT_SEEDS.to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TypePoint {
    pub gamma: f64,
    pub theta: f64,
}

impl Default for TypePoint {
    fn default() -> Self {
        Self { gamma: 0.5, theta: 0.5 }
    }
}

impl From<TypePoint> for UserType {
    fn from(t: TypePoint) -> Self {
        UserType {
            gamma: t.gamma,
            theta: t.theta,
        }
    }
}

fn default_types() -> Vec<TypePoint> {
    vec![TypePoint::default()]
}

fn default_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    #[serde(default = "default_types")]
    pub types: Vec<TypePoint>,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

impl Default for SolveSection {
    fn default() -> Self {
        Self {
            types: default_types(),
            tol: default_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub n_users: u32,
    pub horizon: u32,
    pub n_bins: u32,
    /// Policy run by `simulate`.
    pub policy: String,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            n_users: 300,
            horizon: 20,
            n_bins: 5,
            policy: PolicyKind::OptimalDp.name().into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    pub conditions: Vec<String>,
}

impl Default for AblationSection {
    fn default() -> Self {
        Self {
            conditions: Condition::ALL.iter().map(|c| c.name().to_string()).collect(),
        }
    }
}

/// A decision point `(gamma, theta, s, c, r, psi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnchorSection {
    pub gamma: f64,
    pub theta: f64,
    pub s: u32,
    pub c: u32,
    pub r: f64,
    pub psi: f64,
}

impl Default for AnchorSection {
    fn default() -> Self {
        let a = Anchor::default();
        Self {
            gamma: a.user.gamma,
            theta: a.user.theta,
            s: a.state.s,
            c: a.state.c,
            r: a.query.r,
            psi: a.query.psi,
        }
    }
}

impl From<AnchorSection> for Anchor {
    fn from(a: AnchorSection) -> Self {
        Anchor {
            user: UserType {
                gamma: a.gamma,
                theta: a.theta,
            },
            state: UserState::pre(a.s, a.c),
            query: QueryDraw { r: a.r, psi: a.psi },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub param: Option<String>,
    pub grid: Option<Vec<f64>>,
    pub anchor: AnchorSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CutoffSection {
    pub axes: Vec<String>,
    pub anchor: AnchorSection,
    pub prescan: usize,
    pub tol: f64,
    /// Optional 2-D action map.
    pub plane: Option<String>,
    pub resolution: usize,
}

impl Default for CutoffSection {
    fn default() -> Self {
        Self {
            axes: vec!["gamma".into(), "psi".into(), "r".into()],
            anchor: AnchorSection::default(),
            prescan: 21,
            tol: 1e-3,
            plane: None,
            resolution: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinCounts {
    pub gamma: usize,
    pub theta: usize,
    pub r: usize,
    pub psi: usize,
}

impl Default for BinCounts {
    fn default() -> Self {
        Self {
            gamma: 2,
            theta: 1,
            r: 2,
            psi: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningSection {
    pub n_records: Vec<usize>,
    pub eta: f64,
    pub seed: u64,
    pub bins: BinCounts,
    /// Also write the generated logs (large for big `n_records`).
    pub write_logs: bool,
}

impl Default for LearningSection {
    fn default() -> Self {
        Self {
            n_records: vec![1_000, 10_000, 100_000],
            eta: 0.5,
            seed: 42,
            bins: BinCounts::default(),
            write_logs: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WelfareSection {
    pub benefit: Benefit,
    pub w_sub: Option<f64>,
    pub u_max: Option<f64>,
    pub delta_sub_max: Option<f64>,
    pub types: Vec<TypePoint>,
}

impl Default for WelfareSection {
    fn default() -> Self {
        let p = WelfareParams::default();
        Self {
            benefit: p.benefit,
            w_sub: p.w_sub,
            u_max: p.u_max,
            delta_sub_max: p.delta_sub_max,
            types: default_types(),
        }
    }
}

impl WelfareSection {
    pub fn params(&self) -> WelfareParams {
        WelfareParams {
            benefit: self.benefit.clone(),
            w_sub: self.w_sub,
            u_max: self.u_max,
            delta_sub_max: self.delta_sub_max,
        }
    }
}

fn invalid(path: &str, e: ValidationError) -> ConfigError {
    ConfigError::Invalid {
        path: path.to_string(),
        source: e,
    }
}

fn check_types(types: &[TypePoint], field: &str) -> Result<(), ValidationError> {
    if types.is_empty() {
        return Err(ValidationError::new(field, "needs at least one type"));
    }
    for t in types {
        if !((0.0..=1.0).contains(&t.gamma) && (0.0..=1.0).contains(&t.theta)) {
            return Err(ValidationError::new(field, "gamma and theta must lie in [0, 1]"));
        }
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, source: &str) -> Result<Self, ConfigError> {
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse {
            path: source.to_string(),
            message: e.to_string(),
        })?;
        let mut merged = defaults_table();
        merge_tables(&mut merged, user);
        let cfg: ExperimentConfig = deserialize_at(toml::Value::Table(merged), source)?;
        cfg.validate().map_err(|e| invalid(source, e))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    /// Checks that do not depend on the command.
    pub fn validate(&self) -> Result<(), ValidationError> {
        self.market.validate()?;
        self.population.validate()?;
        if self.seeds.is_empty() {
            return Err(ValidationError::new("seeds", "must be non-empty"));
        }
        check_types(&self.solve.types, "solve.types")?;
        check_types(&self.welfare.types, "welfare.types")?;
        if !(self.solve.tol > 0.0) {
            return Err(ValidationError::new("solve.tol", "must be > 0"));
        }
        self.sim_config().validate()?;
        self.policy()?;
        self.conditions()?;
        for axis in &self.cutoff.axes {
            axis.parse::<CutoffAxis>()
                .map_err(|_| ValidationError::new("cutoff.axes", format!("unknown axis `{axis}`")))?;
        }
        if let Some(plane) = &self.cutoff.plane {
            plane.parse::<Plane>().map_err(|e| ValidationError::new("cutoff.plane", e.rule))?;
        }
        if let Some(p) = &self.sweep.param {
            p.parse::<SweepParam>()
                .map_err(|_| ValidationError::new("sweep.param", format!("unknown parameter `{p}`")))?;
        }
        self.welfare.params().resolve(&self.market)?;
        if self.learning.n_records.is_empty() || self.learning.n_records.contains(&0) {
            return Err(ValidationError::new("learning.n_records", "needs positive record counts"));
        }
        Ok(())
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            n_users: self.simulation.n_users,
            horizon: self.simulation.horizon,
            seeds: self.seeds.clone(),
            n_bins: self.simulation.n_bins,
            market: self.market.clone(),
            population: self.population.clone(),
        }
    }

    pub fn policy(&self) -> Result<PolicyKind, ValidationError> {
        self.simulation
            .policy
            .parse()
            .map_err(|_| ValidationError::new("simulation.policy", format!("unknown policy `{}`", self.simulation.policy)))
    }

    pub fn conditions(&self) -> Result<Vec<Condition>, ValidationError> {
        if self.ablation.conditions.is_empty() {
            return Err(ValidationError::new("ablation.conditions", "must be non-empty"));
        }
        self.ablation
            .conditions
            .iter()
            .map(|c| {
                c.parse()
                    .map_err(|_| ValidationError::new("ablation.conditions", format!("unknown condition `{c}`")))
            })
            .collect()
    }

    pub fn binning(&self) -> Binning {
        let b = self.learning.bins;
        Binning {
            gamma: b.gamma,
            theta: b.theta,
            r: b.r,
            psi: b.psi,
            grid: self.market.grid,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_every_default() {
        let cfg = ExperimentConfig::from_toml_str("[market]\nbeta = 0.95\n", "min.toml").unwrap();
        assert_eq!(cfg.seeds, DEFAULT_SEEDS);
        assert_eq!(cfg.market, MarketParams::with_beta(0.95));
        assert_eq!(cfg.simulation.n_users, 300);
        assert_eq!(cfg.ablation.conditions.len(), 8);
        assert_eq!(cfg.learning.n_records, [1_000, 10_000, 100_000]);
    }

    #[test]
    fn missing_beta_named() {
        let err = ExperimentConfig::from_toml_str("seeds = [1]\n", "x.toml").unwrap_err();
        assert!(err.to_string().contains("market.beta"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ExperimentConfig::from_toml_str("[market]\nbeta = 0.9\n[simulation]\nusers = 3\n", "x.toml").unwrap_err();
        assert!(err.to_string().contains("simulation"), "{err}");
        let err = ExperimentConfig::from_toml_str("[market]\nbeta = 0.9\nbogus = 1\n", "x.toml").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn bad_names_rejected() {
        let err = ExperimentConfig::from_toml_str("[market]\nbeta = 0.9\n[simulation]\npolicy = \"maybe\"\n", "x.toml")
            .unwrap_err();
        assert!(err.to_string().contains("simulation.policy"), "{err}");
        let err = ExperimentConfig::from_toml_str("[market]\nbeta = 0.9\n[sweep]\nparam = \"zeta\"\n", "x.toml")
            .unwrap_err();
        assert!(err.to_string().contains("sweep.param"), "{err}");
    }

    #[test]
    fn welfare_section_parses_benefit() {
        let cfg = ExperimentConfig::from_toml_str(
            "[market]\nbeta = 0.9\n[welfare]\nw_sub = 0.5\nbenefit = { kind = \"constant\", ad = 0.1, free = 0.2 }\n",
            "x.toml",
        )
        .unwrap();
        assert_eq!(cfg.welfare.w_sub, Some(0.5));
        assert_eq!(cfg.welfare.benefit, Benefit::Constant { ad: 0.1, free: 0.2 });
    }
}
