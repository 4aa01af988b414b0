//! Scenario files: kinds, parameters, caps.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::CliError;

pub const MAX_QUBITS: usize = 22;
pub const MAX_SAMPLES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    QmipRun,
    Theorem4Sweep,
    LhiCheck,
    LhiPlusSweep,
    FinalZkSession,
    RewindCheck,
    CryptoSuite,
}

impl Kind {
    pub const ALL: [Kind; 7] = [
        Kind::QmipRun,
        Kind::Theorem4Sweep,
        Kind::LhiCheck,
        Kind::LhiPlusSweep,
        Kind::FinalZkSession,
        Kind::RewindCheck,
        Kind::CryptoSuite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::QmipRun => "qmip-run",
            Kind::Theorem4Sweep => "theorem4-sweep",
            Kind::LhiCheck => "lhi-check",
            Kind::LhiPlusSweep => "lhi-plus-sweep",
            Kind::FinalZkSession => "final-zk-session",
            Kind::RewindCheck => "rewind-check",
            Kind::CryptoSuite => "crypto-suite",
        }
    }

    pub fn parse(s: &str) -> Result<Kind, CliError> {
        Kind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| CliError::UnknownKind(s.to_string()))
    }

    /// Meaning-specific default for `samples`.
    pub fn default_samples(self) -> usize {
        match self {
            Kind::QmipRun => 10_000,
            Kind::Theorem4Sweep => 200,
            Kind::LhiCheck => 10,
            Kind::LhiPlusSweep => 100,
            Kind::FinalZkSession => 24,
            Kind::RewindCheck => 4,
            Kind::CryptoSuite => 10_000,
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[derive(Default)]
pub struct Params {
    /// Number of provers `p` in the toy protocols.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provers: Option<usize>,
    /// Completeness defect of the toy (`1 − ε` honest acceptance).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// Main repetition count; its meaning depends on the kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// Perturbation strengths for the extraction sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    /// Cut-and-choose rounds of the coloring proof.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: Kind,
    pub seed: u64,
    #[serde(default)]
    pub params: Params,
}

/// Command-line overrides applied on top of a scenario file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub samples: Option<usize>,
}

impl Scenario {
    pub fn new(kind: Kind, seed: u64) -> Self {
        Scenario { kind, seed, params: Params::default() }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn with_overrides(mut self, o: Overrides) -> Self {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(n) = o.samples {
            self.params.samples = Some(n);
        }
        self
    }

    pub fn provers(&self) -> usize {
        self.params.provers.unwrap_or(1)
    }

    pub fn eps(&self) -> f64 {
        self.params.eps.unwrap_or(0.0)
    }

    pub fn samples(&self) -> usize {
        self.params.samples.unwrap_or_else(|| self.kind.default_samples())
    }

    pub fn tolerance(&self) -> f64 {
        self.params.tolerance.unwrap_or(1e-9)
    }

    pub fn deltas(&self) -> Vec<f64> {
        self.params.deltas.clone().unwrap_or_else(|| vec![0.3, 0.1, 0.03, 0.01])
    }

    pub fn rounds(&self) -> usize {
        self.params.rounds.unwrap_or(50)
    }

    /// Largest dense register the scenario simulates.
    pub fn required_qubits(&self) -> usize {
        let p = self.provers();
        match self.kind {
            // V (2 qubits) plus an EPR pair per prover.
            Kind::QmipRun => 2 + 2 * p,
            // Same, plus G_0..G_p.
            Kind::Theorem4Sweep => 3 + 3 * p,
            // T = 8 toy: V, M, eight clock qubits, Me, P.
            Kind::LhiCheck => 13,
            // T = 5 toy with G_0, G_1 of four qubits each.
            Kind::LhiPlusSweep => 17,
            // Three Steane blocks simulated jointly.
            Kind::FinalZkSession => 21,
            // I, C', V, M, A, C, D.
            Kind::RewindCheck => 7,
            Kind::CryptoSuite => 0,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if matches!(self.kind, Kind::LhiCheck | Kind::LhiPlusSweep | Kind::FinalZkSession | Kind::RewindCheck | Kind::CryptoSuite)
            && self.params.provers.is_some_and(|p| p != 1)
        {
            return Err(CliError::Invalid(format!("{} runs a fixed single-prover toy", self.kind)));
        }
        if self.provers() == 0 {
            return Err(CliError::Invalid("provers must be at least 1".into()));
        }
        let q = self.required_qubits();
        if q > MAX_QUBITS {
            return Err(CliError::Cap(format!("{q} qubits requested, cap is {MAX_QUBITS}")));
        }
        let n = self.samples();
        if n == 0 || n > MAX_SAMPLES {
            return Err(CliError::Cap(format!("{n} samples requested, allowed 1..={MAX_SAMPLES}")));
        }
        if !(0.0..=1.0).contains(&self.eps()) {
            return Err(CliError::Invalid(format!("eps {} outside [0, 1]", self.eps())));
        }
        let tol = self.tolerance();
        if !(tol > 0.0 && tol < 1.0) {
            return Err(CliError::Invalid(format!("tolerance {tol} outside (0, 1)")));
        }
        if self.deltas().iter().any(|d| !(*d > 0.0 && *d <= 1.0)) || self.deltas().len() < 2 {
            return Err(CliError::Invalid("deltas need at least two values in (0, 1]".into()));
        }
        if self.rounds() == 0 || self.rounds() > 1000 {
            return Err(CliError::Invalid(format!("{} rounds, allowed 1..=1000", self.rounds())));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use qmzk_core::lhi::plus::lhi_plus_toy_instance;
    use qmzk_core::lhi::{build_lhi, lhi_toy};
    use qmzk_core::zk::rewind::CoinProver;
    use qmzk_core::zk::{add_ghz, to_two_turn, toy_three_turn};

    fn with_provers(kind: Kind, p: usize) -> Scenario {
        let mut s = Scenario::new(kind, 0);
        s.params.provers = Some(p);
        s
    }

    #[test]
    fn qubit_estimates_match_built_layouts() {
        for p in 1..=3 {
            let p3 = toy_three_turn(p, 0.0).unwrap();
            assert_eq!(with_provers(Kind::QmipRun, p).required_qubits(), p3.layout.num_qubits());
            let ghz = add_ghz(&to_two_turn(&p3).unwrap()).unwrap();
            assert_eq!(with_provers(Kind::Theorem4Sweep, p).required_qubits(), ghz.layout.num_qubits());
        }
        let inst = build_lhi(&lhi_toy(0.0).unwrap()).unwrap();
        assert_eq!(Scenario::new(Kind::LhiCheck, 0).required_qubits(), inst.num_qubits());
        let (_, _, plus) = lhi_plus_toy_instance(0.0).unwrap();
        assert_eq!(Scenario::new(Kind::LhiPlusSweep, 0).required_qubits(), plus.layout.num_qubits());
        assert_eq!(Scenario::new(Kind::RewindCheck, 0).required_qubits(), CoinProver::toy().registers(1, 0).total());
    }

    #[test]
    fn kinds_roundtrip_through_names() {
        for k in Kind::ALL {
            assert_eq!(Kind::parse(k.name()).unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
        }
        assert!(matches!(Kind::parse("qmip"), Err(CliError::UnknownKind(_))));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(Scenario::from_json(r#"{"kind":"qmip-run","seed":1}"#).is_ok());
        for bad in [
            r#"{"kind":"qmip-run","seed":1,"extra":0}"#,
            r#"{"kind":"qmip-run","seed":1,"params":{"qubits":3}}"#,
            r#"{"kind":"nope","seed":1}"#,
            r#"{"kind":"qmip-run"}"#,
        ] {
            assert!(matches!(Scenario::from_json(bad), Err(CliError::Parse(_))), "{bad}");
        }
    }

    #[test]
    fn caps_and_ranges() {
        assert!(matches!(with_provers(Kind::Theorem4Sweep, 9).validate(), Err(CliError::Cap(_))));
        assert!(with_provers(Kind::Theorem4Sweep, 6).validate().is_ok());
        assert!(matches!(with_provers(Kind::Theorem4Sweep, 7).validate(), Err(CliError::Cap(_))));
        let mut s = Scenario::new(Kind::CryptoSuite, 0);
        s.params.samples = Some(MAX_SAMPLES + 1);
        assert!(matches!(s.validate(), Err(CliError::Cap(_))));
        s.params.samples = Some(MAX_SAMPLES);
        assert!(s.validate().is_ok());
        s.params.eps = Some(1.5);
        assert!(matches!(s.validate(), Err(CliError::Invalid(_))));
        assert!(matches!(with_provers(Kind::LhiCheck, 2).validate(), Err(CliError::Invalid(_))));
        let mut s = Scenario::new(Kind::LhiCheck, 0);
        s.params.deltas = Some(vec![0.1]);
        assert!(matches!(s.validate(), Err(CliError::Invalid(_))));
    }

    #[test]
    fn overrides_replace_seed_and_samples() {
        let s = Scenario::new(Kind::QmipRun, 1).with_overrides(Overrides { seed: Some(9), samples: Some(50) });
        assert_eq!((s.seed, s.samples()), (9, 50));
        let t = Scenario::new(Kind::QmipRun, 1).with_overrides(Overrides::default());
        assert_eq!((t.seed, t.samples()), (1, Kind::QmipRun.default_samples()));
    }
}
