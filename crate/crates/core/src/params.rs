//! Market primitives and the structured-text config schema.
//!
//! All defaults live in `config/defaults.toml`, which is embedded into the
//! binary and deep-merged underneath every user config before
//! deserialization. Only `market.beta` has no default.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, ValidationError};
use crate::population::PopulationSpec;

/// The documented default calibration.
pub const DEFAULTS_TOML: &str = include_str!("../config/defaults.toml");

/// Which flow-payoff accounting to use.
///
/// `MainText` charges the free-tier inference cost on every query for both
/// actions and adds ad revenue on engagement. `AppendixSim` pays nothing when
/// the user does not engage, charges the inference cost on an engaged
/// ad-free response and books ad revenue (with no serving cost) on an
/// engaged with-ad response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayoffConvention {
    MainText,
    AppendixSim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityCoeffs {
    pub w_psi: f64,
    pub w_r_free: f64,
    pub u0_ad: f64,
    pub ur_ad: f64,
    pub w_gamma: f64,
    pub uc_ad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RevenueCoeffs {
    pub b0: f64,
    pub b_r: f64,
    pub b_c: f64,
    pub b_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetentionCoeffs {
    pub rho_min: f64,
    pub alpha_s: f64,
    pub alpha_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConversionCoeffs {
    pub tau0: f64,
    pub tau_p: f64,
    pub tau_theta: f64,
    pub tau_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCaps {
    pub s_max: u32,
    pub c_max: u32,
}

impl GridCaps {
    pub fn n_cells(&self) -> usize {
        (self.s_max as usize + 1) * (self.c_max as usize + 1)
    }

    /// Row-major index with `s` as the slow axis.
    #[inline]
    pub fn index(&self, s: u32, c: u32) -> usize {
        s as usize * (self.c_max as usize + 1) + c as usize
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (u32, u32) {
        let w = self.c_max as usize + 1;
        ((idx / w) as u32, (idx % w) as u32)
    }

    pub fn contains(&self, s: u32, c: u32) -> bool {
        s <= self.s_max && c <= self.c_max
    }
}

/// All scalar primitives of the market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    pub beta: f64,
    pub price: f64,
    pub kappa_free: f64,
    pub kappa_paid: f64,
    pub omega: f64,
    pub utility: UtilityCoeffs,
    pub revenue: RevenueCoeffs,
    pub retention: RetentionCoeffs,
    pub conversion: ConversionCoeffs,
    pub grid: GridCaps,
    pub psi_cut: f64,
    pub n_q: usize,
    pub query_panel_seed: u64,
    pub payoff_convention: PayoffConvention,
    pub r_max_bound: f64,
}

/// The `[market]` + `[population]` pair that every experiment shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub market: MarketParams,
    pub population: PopulationSpec,
}

impl MarketParams {
    /// Default calibration at the given discount factor.
    pub fn with_beta(beta: f64) -> Self {
        let mut cfg = defaults_table();
        let market = cfg
            .get_mut("market")
            .and_then(|m| m.as_table_mut())
            .expect("defaults carry a [market] table");
        market.insert("beta".into(), toml::Value::Float(beta));
        let model: ModelConfig = toml::Value::Table(cfg)
            .try_into()
            .expect("embedded defaults deserialize");
        model.market
    }

    /// Default calibration with beta = 0.95.
    pub fn baseline() -> Self {
        Self::with_beta(0.95)
    }

    /// Per-period subscription margin `p - kappa_paid`.
    pub fn subscription_margin(&self) -> f64 {
        self.price - self.kappa_paid
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let finite = [
            ("market.beta", self.beta),
            ("market.price", self.price),
            ("market.kappa_free", self.kappa_free),
            ("market.kappa_paid", self.kappa_paid),
            ("market.omega", self.omega),
            ("market.psi_cut", self.psi_cut),
            ("market.r_max_bound", self.r_max_bound),
            ("market.utility.w_psi", self.utility.w_psi),
            ("market.utility.w_r_free", self.utility.w_r_free),
            ("market.utility.u0_ad", self.utility.u0_ad),
            ("market.utility.ur_ad", self.utility.ur_ad),
            ("market.utility.w_gamma", self.utility.w_gamma),
            ("market.utility.uc_ad", self.utility.uc_ad),
            ("market.revenue.b0", self.revenue.b0),
            ("market.revenue.b_r", self.revenue.b_r),
            ("market.revenue.b_c", self.revenue.b_c),
            ("market.revenue.b_s", self.revenue.b_s),
            ("market.retention.rho_min", self.retention.rho_min),
            ("market.retention.alpha_s", self.retention.alpha_s),
            ("market.retention.alpha_c", self.retention.alpha_c),
            ("market.conversion.tau0", self.conversion.tau0),
            ("market.conversion.tau_p", self.conversion.tau_p),
            ("market.conversion.tau_theta", self.conversion.tau_theta),
            ("market.conversion.tau_c", self.conversion.tau_c),
        ];
        for (field, v) in finite {
            if !v.is_finite() {
                return Err(ValidationError::new(field, "must be finite"));
            }
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(ValidationError::new("market.beta", "must lie in (0, 1)"));
        }
        if self.kappa_free < 0.0 {
            return Err(ValidationError::new("market.kappa_free", "must be >= 0"));
        }
        if self.kappa_paid < self.kappa_free {
            return Err(ValidationError::new(
                "market.kappa_paid",
                "must be >= market.kappa_free",
            ));
        }
        if self.omega < 0.0 {
            return Err(ValidationError::new("market.omega", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.psi_cut) {
            return Err(ValidationError::new("market.psi_cut", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.retention.rho_min) {
            return Err(ValidationError::new(
                "market.retention.rho_min",
                "must lie in [0, 1]",
            ));
        }
        if self.retention.alpha_s < 0.0 {
            return Err(ValidationError::new("market.retention.alpha_s", "must be >= 0"));
        }
        if self.retention.alpha_c < 0.0 {
            return Err(ValidationError::new("market.retention.alpha_c", "must be >= 0"));
        }
        if self.grid.s_max < 1 {
            return Err(ValidationError::new("market.grid.s_max", "must be >= 1"));
        }
        if self.grid.c_max < 1 {
            return Err(ValidationError::new("market.grid.c_max", "must be >= 1"));
        }
        if self.n_q < 1 {
            return Err(ValidationError::new("market.n_q", "must be >= 1"));
        }
        if self.r_max_bound <= 0.0 {
            return Err(ValidationError::new("market.r_max_bound", "must be > 0"));
        }
        if self.subscription_margin().abs() > self.r_max_bound {
            return Err(ValidationError::new(
                "market.price",
                "|price - kappa_paid| must not exceed market.r_max_bound",
            ));
        }
        Ok(())
    }
}

/// The embedded defaults as a TOML table.
pub fn defaults_table() -> toml::Table {
    DEFAULTS_TOML
        .parse::<toml::Table>()
        .expect("embedded defaults parse")
}

/// Deep-merge `overlay` onto `base`; nested tables merge key by key, any
/// other value in `overlay` replaces the one in `base`.
pub fn merge_tables(base: &mut toml::Table, overlay: toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_tables(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

/// Deserialize with a dotted path in the error (`market.beta`, ...).
pub fn deserialize_at<T: DeserializeOwned>(
    value: toml::Value,
    source: &str,
) -> Result<T, ConfigError> {
    serde_path_to_error::deserialize(value).map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner();
        let message = inner.to_string();
        let field = match missing_field_name(&message) {
            Some(name) if path == "." || path.is_empty() => name.to_string(),
            Some(name) => format!("{path}.{name}"),
            None => path,
        };
        ConfigError::Invalid {
            path: source.to_string(),
            source: ValidationError::new(field, message.trim().to_string()),
        }
    })
}

fn missing_field_name(message: &str) -> Option<&str> {
    let rest = message.split("missing field `").nth(1)?;
    rest.split('`').next()
}

impl ModelConfig {
    /// Parse a `[market]`/`[population]` document, apply defaults, validate.
    pub fn from_toml_str(text: &str, source: &str) -> Result<Self, ConfigError> {
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse {
            path: source.to_string(),
            message: e.to_string(),
        })?;
        let mut merged = defaults_table();
        merge_tables(&mut merged, user);
        let cfg: ModelConfig = deserialize_at(toml::Value::Table(merged), source)?;
        cfg.validate().map_err(|e| ConfigError::Invalid {
            path: source.to_string(),
            source: e,
        })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        self.market.validate()?;
        self.population.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_is_valid() {
        let p = MarketParams::baseline();
        p.validate().unwrap();
        assert_eq!(p.grid.s_max, 20);
        assert_eq!(p.payoff_convention, PayoffConvention::AppendixSim);
    }

    #[test]
    fn missing_beta_names_the_field() {
        let err = ModelConfig::from_toml_str("[market]\nprice = 4.0\n", "x.toml").unwrap_err();
        match err {
            ConfigError::Invalid { source, .. } => assert_eq!(source.field, "market.beta"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn beta_one_rejected() {
        let err = ModelConfig::from_toml_str("[market]\nbeta = 1.0\n", "x.toml").unwrap_err();
        match err {
            ConfigError::Invalid { source, .. } => {
                assert_eq!(source.field, "market.beta");
                assert!(source.rule.contains("(0, 1)"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_key_rejected() {
        let err =
            ModelConfig::from_toml_str("[market]\nbeta = 0.9\nbogus = 1\n", "x.toml").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn kappa_order_enforced() {
        let mut p = MarketParams::baseline();
        p.kappa_paid = 0.1;
        assert_eq!(p.validate().unwrap_err().field, "market.kappa_paid");
    }

    #[test]
    fn margin_checked_against_bound() {
        let mut p = MarketParams::baseline();
        p.r_max_bound = 0.25;
        assert_eq!(p.validate().unwrap_err().field, "market.price");
    }

    #[test]
    fn overrides_merge_over_defaults() {
        let cfg = ModelConfig::from_toml_str(
            "[market]\nbeta = 0.9\n[market.utility]\nw_psi = 3.0\n[population]\ngamma = { kind = \"beta\", a = 5.0, b = 2.0 }\n",
            "x.toml",
        )
        .unwrap();
        assert_eq!(cfg.market.utility.w_psi, 3.0);
        assert_eq!(cfg.market.utility.uc_ad, 0.25);
        assert_eq!(cfg.market.beta, 0.9);
    }
}
