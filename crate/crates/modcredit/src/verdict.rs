//! Modularity verdicts as stable JSON.

use std::fmt;
use std::str::FromStr;

use modcredit_core::analysis::{
    build_acml, check_dynamic_modularity, Acml, AlgorithmClass, AnalysisError, CreditKind, Horizon, ParameterSharing,
    TraceSkeleton,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClassError {
    #[error("unknown algorithm class {0:?}")]
    Unknown(String),
    #[error("unknown parameter sharing {0:?} (expected monolithic, factorized or tabular)")]
    Sharing(String),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

pub fn parse_sharing(name: &str) -> Result<ParameterSharing, ClassError> {
    match name {
        "monolithic" => Ok(ParameterSharing::Monolithic),
        "factorized" => Ok(ParameterSharing::FactorizedPerDecision),
        "tabular" => Ok(ParameterSharing::Tabular),
        _ => Err(ClassError::Sharing(name.to_string())),
    }
}

/// Either a named algorithm (`cvs`, `ppo`, `ppof`, `q-learning`, `sarsa`,
/// `dqn`) or a credit kind (`policy-gradient`, `td0`, `td0-off-policy`,
/// `td<n>`, `td-mc`, `td-lambda`) whose sharing defaults to monolithic.
/// An explicit `sharing` overrides either.
pub fn parse_class(name: &str, sharing: Option<ParameterSharing>) -> Result<AlgorithmClass, ClassError> {
    let preset = match name {
        "cvs" => Some(AlgorithmClass::cvs()),
        "ppo" => Some(AlgorithmClass::ppo()),
        "ppof" => Some(AlgorithmClass::ppof()),
        "q-learning" => Some(AlgorithmClass::tabular_q_learning()),
        "sarsa" => Some(AlgorithmClass::tabular_sarsa()),
        "dqn" => Some(AlgorithmClass::dqn()),
        _ => None,
    };
    let (kind, default_sharing) = match preset {
        Some(c) => (c.kind(), c.sharing()),
        None => {
            let kind = match name {
                "policy-gradient" => CreditKind::PolicyGradient,
                "td0" => CreditKind::Td0 { on_policy: true },
                "td0-off-policy" => CreditKind::Td0 { on_policy: false },
                "td-mc" | "td-lambda" => CreditKind::TdN(Horizon::MonteCarlo),
                _ => match name.strip_prefix("td").and_then(|n| n.parse().ok()) {
                    Some(n) => CreditKind::TdN(Horizon::Steps(n)),
                    None => return Err(ClassError::Unknown(name.to_string())),
                },
            };
            (kind, ParameterSharing::Monolithic)
        }
    };
    Ok(AlgorithmClass::new(kind, sharing.unwrap_or(default_sharing))?)
}

/// Shape of the decision sequence being analysed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TracePattern {
    /// Every step reaches a new state.
    Acyclic,
    /// Step `t` returns to the state it started from, so two steps share
    /// a successor state.
    CycleAt(usize),
}

impl FromStr for TracePattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "acyclic" {
            return Ok(TracePattern::Acyclic);
        }
        s.strip_prefix("cycle-at:")
            .and_then(|t| t.parse().ok())
            .map(TracePattern::CycleAt)
            .ok_or_else(|| format!("unknown trace pattern {s:?} (expected acyclic or cycle-at:<t>)"))
    }
}

impl fmt::Display for TracePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TracePattern::Acyclic => f.write_str("acyclic"),
            TracePattern::CycleAt(t) => write!(f, "cycle-at:{t}"),
        }
    }
}

impl TracePattern {
    pub fn skeleton(self, steps: usize, decisions: usize) -> Result<TraceSkeleton, AnalysisError> {
        match self {
            TracePattern::Acyclic => TraceSkeleton::acyclic(steps, decisions),
            TracePattern::CycleAt(t) => TraceSkeleton::with_collision_at(steps, decisions, t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictJson {
    pub algorithm: String,
    #[serde(rename = "T")]
    pub steps: usize,
    #[serde(rename = "N")]
    pub decisions: usize,
    pub trace: String,
    pub criterion: bool,
    #[serde(rename = "static")]
    pub static_modularity: bool,
    pub dynamic: bool,
    pub cyclic: bool,
    pub witness: Option<Vec<String>>,
}

pub struct Analysis {
    pub verdict: VerdictJson,
    pub acml: Acml,
}

pub fn analyze(algo: &AlgorithmClass, steps: usize, decisions: usize, pattern: TracePattern) -> Result<Analysis, AnalysisError> {
    let skeleton = pattern.skeleton(steps, decisions)?;
    let v = check_dynamic_modularity(algo, &skeleton);
    Ok(Analysis {
        verdict: VerdictJson {
            algorithm: algo.to_string(),
            steps,
            decisions,
            trace: pattern.to_string(),
            criterion: v.criterion_satisfied,
            static_modularity: v.static_modularity,
            dynamic: v.dynamic_modularity,
            cyclic: v.cyclic_trace,
            witness: v.witness,
        },
        acml: build_acml(algo, &skeleton),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classes_parse() {
        assert_eq!(parse_class("cvs", None), Ok(AlgorithmClass::cvs()));
        assert_eq!(
            parse_class("td0", Some(ParameterSharing::FactorizedPerDecision)),
            Ok(AlgorithmClass::cvs())
        );
        assert_eq!(parse_class("td0", None).unwrap().sharing(), ParameterSharing::Monolithic);
        assert_eq!(parse_class("td3", None).unwrap().kind(), CreditKind::TdN(Horizon::Steps(3)));
        assert!(matches!(parse_class("td1", None), Err(ClassError::Analysis(_))));
        assert!(matches!(parse_class("tdx", None), Err(ClassError::Unknown(_))));
        assert!(parse_sharing("shared").is_err());
    }

    #[test]
    fn patterns_parse() {
        assert_eq!("acyclic".parse(), Ok(TracePattern::Acyclic));
        assert_eq!("cycle-at:2".parse(), Ok(TracePattern::CycleAt(2)));
        assert!("cycle-at:x".parse::<TracePattern>().is_err());
        assert!("loop".parse::<TracePattern>().is_err());
    }

    #[test]
    fn json_field_names() {
        let a = analyze(&AlgorithmClass::ppo(), 3, 4, TracePattern::Acyclic).unwrap();
        let v: serde_json::Value = serde_json::to_value(&a.verdict).unwrap();
        for key in ["algorithm", "T", "N", "trace", "criterion", "static", "dynamic", "cyclic", "witness"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["criterion"], false);
        assert!(v["witness"].as_array().unwrap().len() >= 3);
    }

    #[test]
    fn cycle_position_is_validated() {
        assert!(analyze(&AlgorithmClass::cvs(), 3, 4, TracePattern::CycleAt(0)).is_err());
        assert!(analyze(&AlgorithmClass::cvs(), 3, 4, TracePattern::CycleAt(3)).is_err());
    }
}
