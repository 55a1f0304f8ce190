use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jacobian::JacobianRequest;
use crate::model::{Quantity, MU0};
use crate::par::Execution;

/// Rule choosing the truncation index from a sweep. Serialized as its
/// display form: `corner`, `discrepancy`, `quasi-optimality`, `fixed:7`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ParamMethod {
    Fixed(usize),
    Discrepancy,
    Corner,
    QuasiOptimality,
}

impl std::fmt::Display for ParamMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamMethod::Fixed(ell) => write!(f, "fixed:{ell}"),
            ParamMethod::Discrepancy => f.write_str("discrepancy"),
            ParamMethod::Corner => f.write_str("corner"),
            ParamMethod::QuasiOptimality => f.write_str("quasi-optimality"),
        }
    }
}

impl From<ParamMethod> for String {
    fn from(m: ParamMethod) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for ParamMethod {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl std::str::FromStr for ParamMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let bad = || Error::invalid("inversion.param_method", format!("unknown method `{s}`"));
        if let Some(rest) = s.strip_prefix("fixed") {
            let ell = rest.trim_start_matches([':', '=', ' ']);
            return ell.parse().map(ParamMethod::Fixed).map_err(|_| bad());
        }
        match s.as_str() {
            "discrepancy" | "discrep" => Ok(ParamMethod::Discrepancy),
            "corner" | "l-curve" | "lcurve" => Ok(ParamMethod::Corner),
            "quasi-optimality" | "quasiopt" | "quasi" => Ok(ParamMethod::QuasiOptimality),
            _ => Err(bad()),
        }
    }
}

/// Minimum-gradient-support stabilizer settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MgsOptions {
    pub tau: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InversionOptions {
    pub unknown: Quantity,
    /// The quantity held fixed, per layer. Defaults to `MU0` when inverting
    /// for conductivity and to 0 S/m when inverting for permeability.
    pub fixed_profile: Option<Vec<f64>>,
    /// Starting profile; defaults to a constant 0.1 S/m or `MU0`.
    pub x_init: Option<Vec<f64>>,
    pub tau_stop: f64,
    pub k_max: usize,
    pub alpha_min: f64,
    pub damped: bool,
    pub positivity: bool,
    pub reg_order: usize,
    pub param_method: ParamMethod,
    /// Relative noise level added to synthetic data.
    pub noise_delta: f64,
    /// Noise standard deviation per stacked entry, for the discrepancy principle.
    pub noise_std: Option<f64>,
    pub tau_discr: f64,
    pub mgs: Option<MgsOptions>,
    pub jacobian: JacobianRequest,
    /// Subset of data rows to fit, in canonical order.
    pub yrows: Option<Vec<usize>>,
    pub execution: Execution,
}

impl Default for InversionOptions {
    fn default() -> Self {
        Self {
            unknown: Quantity::Sigma,
            fixed_profile: None,
            x_init: None,
            tau_stop: 1e-3,
            k_max: 50,
            alpha_min: 2f64.powi(-30),
            damped: true,
            positivity: true,
            reg_order: 2,
            param_method: ParamMethod::Corner,
            noise_delta: 0.0,
            noise_std: None,
            tau_discr: 1.0,
            mgs: None,
            jacobian: JacobianRequest::default(),
            yrows: None,
            execution: Execution::default(),
        }
    }
}

impl InversionOptions {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("inversion.{name}"), format!("must lie in (0, 1), got {v}")))
            }
        };
        open_unit("tau_stop", self.tau_stop)?;
        open_unit("alpha_min", self.alpha_min)?;
        if self.k_max == 0 {
            return Err(Error::invalid("inversion.k_max", "must be >= 1"));
        }
        if !(self.tau_discr.is_finite() && self.tau_discr >= 1.0) {
            return Err(Error::invalid("inversion.tau_discr", format!("must be >= 1, got {}", self.tau_discr)));
        }
        if !(self.noise_delta.is_finite() && self.noise_delta >= 0.0) {
            return Err(Error::invalid("inversion.noise_delta", format!("must be >= 0, got {}", self.noise_delta)));
        }
        if let Some(ds) = self.noise_std {
            if !(ds.is_finite() && ds >= 0.0) {
                return Err(Error::invalid("inversion.noise_std", format!("must be >= 0, got {ds}")));
            }
        }
        if self.reg_order > 2 {
            return Err(Error::invalid("inversion.reg_order", format!("must be 0, 1 or 2, got {}", self.reg_order)));
        }
        if let ParamMethod::Fixed(0) = self.param_method {
            return Err(Error::invalid("inversion.param_method", "fixed truncation index must be >= 1"));
        }
        if let Some(m) = self.mgs {
            if !(m.tau.is_finite() && m.tau > 0.0) {
                return Err(Error::invalid("inversion.mgs.tau", format!("must be > 0, got {}", m.tau)));
            }
            if !(m.lambda.is_finite() && m.lambda > 0.0) {
                return Err(Error::invalid("inversion.mgs.lambda", format!("must be > 0, got {}", m.lambda)));
            }
        }
        self.jacobian.validate()
    }

    /// Default starting value for the unknown.
    pub fn default_init(&self) -> f64 {
        match self.unknown {
            Quantity::Sigma => 0.1,
            Quantity::Mu => MU0,
        }
    }

    /// Default value of the quantity held fixed.
    pub fn default_fixed(&self) -> f64 {
        match self.unknown {
            Quantity::Sigma => MU0,
            Quantity::Mu => 0.0,
        }
    }

    /// Starting profile for `n` layers.
    pub fn init_profile(&self, n: usize) -> Result<Vec<f64>> {
        profile_or(&self.x_init, n, self.default_init(), "inversion.x_init")
    }

    /// Profile of the quantity held fixed, for `n` layers.
    pub fn fixed(&self, n: usize) -> Result<Vec<f64>> {
        profile_or(&self.fixed_profile, n, self.default_fixed(), "inversion.fixed_profile")
    }
}

fn profile_or(given: &Option<Vec<f64>>, n: usize, fill: f64, field: &str) -> Result<Vec<f64>> {
    match given {
        None => Ok(vec![fill; n]),
        Some(v) if v.len() == 1 => Ok(vec![v[0]; n]),
        Some(v) if v.len() == n => Ok(v.clone()),
        Some(v) => Err(Error::invalid(field, format!("has {} entries, expected 1 or {n}", v.len()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let o = InversionOptions::default();
        o.validate().unwrap();
        assert_eq!(o.alpha_min, 1.0 / 1073741824.0);
        assert_eq!(o.init_profile(3).unwrap(), vec![0.1; 3]);
    }

    #[test]
    fn bad_values_name_their_field() {
        let cases: Vec<(InversionOptions, &str)> = vec![
            (InversionOptions { tau_stop: 1.5, ..Default::default() }, "inversion.tau_stop"),
            (InversionOptions { k_max: 0, ..Default::default() }, "inversion.k_max"),
            (InversionOptions { tau_discr: 0.5, ..Default::default() }, "inversion.tau_discr"),
            (InversionOptions { reg_order: 3, ..Default::default() }, "inversion.reg_order"),
            (
                InversionOptions {
                    mgs: Some(MgsOptions { tau: 0.0, lambda: 1.0 }),
                    ..Default::default()
                },
                "inversion.mgs.tau",
            ),
        ];
        for (o, field) in cases {
            assert_eq!(o.validate().unwrap_err().field(), Some(field));
        }
    }

    #[test]
    fn param_method_parsing() {
        assert_eq!("corner".parse::<ParamMethod>().unwrap(), ParamMethod::Corner);
        assert_eq!("fixed:7".parse::<ParamMethod>().unwrap(), ParamMethod::Fixed(7));
        assert_eq!("Quasi-Optimality".parse::<ParamMethod>().unwrap(), ParamMethod::QuasiOptimality);
        assert!("nope".parse::<ParamMethod>().is_err());
        let json = serde_json::to_string(&ParamMethod::Fixed(3)).unwrap();
        assert_eq!(json, "\"fixed:3\"");
        assert_eq!(serde_json::from_str::<ParamMethod>(&json).unwrap(), ParamMethod::Fixed(3));
        assert!(serde_json::from_str::<ParamMethod>("\"fixed:x\"").is_err());
    }
}
