//! Reduction settings read from JSON, with per-benchmark defaults.
//!
//! Every field is optional; missing ones fall back to the defaults of the
//! system family (random or heat benchmark) and flags on the command line
//! override both.

use std::fmt;
use std::str::FromStr;

use lqo_core::gradients::SolverBackend;
use lqo_core::lowrank::{pick_alpha, LaguerreConfig, DEFAULT_TERMS};
use lqo_core::optimizer::OptimizerConfig;
use lqo_core::LqoSystem;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::expr::Expr;

/// Reduction methods offered by the driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Krylov,
    RationalKrylov,
    Pod,
    Bt,
    Srcg,
    Prcg,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Krylov,
        Method::RationalKrylov,
        Method::Pod,
        Method::Bt,
        Method::Srcg,
        Method::Prcg,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Krylov => "krylov",
            Method::RationalKrylov => "rational-krylov",
            Method::Pod => "pod",
            Method::Bt => "bt",
            Method::Srcg => "srcg",
            Method::Prcg => "prcg",
        }
    }

    pub fn is_optimizer(&self) -> bool {
        matches!(self, Method::Srcg | Method::Prcg)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Method::ALL.iter().map(|m| m.as_str()).collect();
                format!("unknown method `{s}` (expected one of {})", names.join(", "))
            })
    }
}

/// Which family a system belongs to; selects the defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Synthetic,
    Heat,
    Other,
}

impl Family {
    pub fn from_kind(kind: &str) -> Family {
        match kind {
            "synthetic" => Family::Synthetic,
            "heat" => Family::Heat,
            _ => Family::Other,
        }
    }
}

/// An input signal on a uniform grid `t_k = k·t_end/steps`, `k = 0..=steps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSettings {
    pub input: String,
    pub t_end: f64,
    pub steps: usize,
}

impl SignalSettings {
    pub fn new(input: &str, t_end: f64, steps: usize) -> Self {
        SignalSettings {
            input: input.to_string(),
            t_end,
            steps,
        }
    }

    pub fn validate(&self) -> CliResult<Expr> {
        let expr = Expr::parse(&self.input).map_err(|e| CliError::input(format!("input `{}`: {e}", self.input)))?;
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(CliError::input(format!("t_end must be positive, got {}", self.t_end)));
        }
        if self.steps < 2 {
            return Err(CliError::input(format!("need at least 2 steps, got {}", self.steps)));
        }
        Ok(expr)
    }

    /// Snapshot protocol: 100 samples on `[0, 3]`.
    pub fn pod_default(family: Family) -> Self {
        match family {
            Family::Heat => SignalSettings::new("100*sin(2*t)", 3.0, 99),
            _ => SignalSettings::new("exp(sin(2*t))", 3.0, 99),
        }
    }

    /// Output comparison: the snapshot signal over `[0, 10]` with 1000 steps.
    pub fn simulation_default(family: Family) -> Self {
        SignalSettings {
            t_end: 10.0,
            steps: 1000,
            ..SignalSettings::pod_default(family)
        }
    }
}

/// Optimizer fields that may be given individually.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_max: Option<usize>,
}

impl OptimizerSettings {
    pub fn apply(&self, base: OptimizerConfig) -> OptimizerConfig {
        OptimizerConfig {
            omega: self.omega.unwrap_or(base.omega),
            gamma: self.gamma.unwrap_or(base.gamma),
            c1: self.c1.unwrap_or(base.c1),
            c2: self.c2.unwrap_or(base.c2),
            epsilon: self.epsilon.unwrap_or(base.epsilon),
            k_max: self.k_max.unwrap_or(base.k_max),
            m_max: self.m_max.unwrap_or(base.m_max),
        }
    }

    /// Fields set in `other` win.
    pub fn merged(&self, other: &OptimizerSettings) -> OptimizerSettings {
        OptimizerSettings {
            omega: other.omega.or(self.omega),
            gamma: other.gamma.or(self.gamma),
            c1: other.c1.or(self.c1),
            c2: other.c2.or(self.c2),
            epsilon: other.epsilon.or(self.epsilon),
            k_max: other.k_max.or(self.k_max),
            m_max: other.m_max.or(self.m_max),
        }
    }
}

/// How the Sylvester equations inside the optimizer are solved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendSettings {
    Exact,
    /// Laguerre expansion; `alpha` defaults to [`pick_alpha`], `terms` to [`DEFAULT_TERMS`].
    Laguerre {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        terms: Option<usize>,
    },
}

impl BackendSettings {
    pub fn resolve(&self, sys: &LqoSystem) -> CliResult<SolverBackend> {
        match *self {
            BackendSettings::Exact => Ok(SolverBackend::Exact),
            BackendSettings::Laguerre { alpha, terms } => {
                let alpha = match alpha {
                    Some(a) => a,
                    None => pick_alpha(sys.a()).map_err(|e| CliError::from_core("laguerre alpha", e))?,
                };
                let cfg = LaguerreConfig::new(alpha, terms.unwrap_or(DEFAULT_TERMS))
                    .map_err(|e| CliError::input(e.to_string()))?;
                Ok(SolverBackend::Laguerre(cfg))
            }
        }
    }
}

/// Contents of a configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionConfig {
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<BackendSettings>,
    /// Basis the optimizers start from (`krylov` or `rational-krylov`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<Method>,
    /// Rational Krylov shifts; the first `r` are used for order `r`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shifts: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pod: Option<SignalSettings>,
}

impl ReductionConfig {
    /// `other` on top of `self`.
    pub fn merged(&self, other: &ReductionConfig) -> ReductionConfig {
        ReductionConfig {
            optimizer: self.optimizer.merged(&other.optimizer),
            backend: other.backend.or(self.backend),
            init: other.init.or(self.init),
            shifts: other.shifts.clone().or_else(|| self.shifts.clone()),
            pod: other.pod.clone().or_else(|| self.pod.clone()),
        }
    }

    pub fn resolve(&self, family: Family) -> CliResult<Resolved> {
        let base = match family {
            Family::Synthetic => OptimizerConfig::synthetic(),
            Family::Heat => OptimizerConfig::heat(),
            Family::Other => OptimizerConfig::default(),
        };
        let optimizer = self.optimizer.apply(base);
        optimizer.validate().map_err(|e| CliError::input(e.to_string()))?;
        let init = self.init.unwrap_or(match family {
            Family::Heat => Method::RationalKrylov,
            _ => Method::Krylov,
        });
        if !matches!(init, Method::Krylov | Method::RationalKrylov) {
            return Err(CliError::input(format!("init must be krylov or rational-krylov, got {init}")));
        }
        if let Some(shifts) = &self.shifts {
            if shifts.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                return Err(CliError::input("shifts must be positive and finite"));
            }
        }
        if let Some(BackendSettings::Laguerre { alpha, terms }) = self.backend {
            LaguerreConfig::new(alpha.unwrap_or(1.0), terms.unwrap_or(DEFAULT_TERMS))
                .map_err(|e| CliError::input(e.to_string()))?;
        }
        let pod = self.pod.clone().unwrap_or_else(|| SignalSettings::pod_default(family));
        pod.validate()?;
        Ok(Resolved {
            optimizer,
            backend: self.backend.unwrap_or(BackendSettings::Exact),
            init,
            shifts: self.shifts.clone(),
            pod,
        })
    }
}

/// Settings with every default filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub optimizer: OptimizerConfig,
    pub backend: BackendSettings,
    pub init: Method,
    pub shifts: Option<Vec<f64>>,
    pub pod: SignalSettings,
}

impl Resolved {
    /// Shifts for order `r`: the configured list or `4, 8, …, 4r`.
    pub fn shifts_for(&self, r: usize) -> CliResult<Vec<f64>> {
        match &self.shifts {
            Some(s) if s.len() >= r => Ok(s[..r].to_vec()),
            Some(s) => Err(CliError::input(format!("{} shifts configured, order {r} needs {r}", s.len()))),
            None => Ok((1..=r).map(|i| 4.0 * i as f64).collect()),
        }
    }
}
