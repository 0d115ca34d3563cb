use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::layers::{ActivationKind, ResidualOption};
use crate::{Error, Result};

/// Which shortcut pairs are wired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ResidualMode {
    Off,
    /// Only the `n` outermost shortcuts; the input-level shortcut counts first.
    Outermost(usize),
    Full,
}

impl ResidualMode {
    /// Number of active shortcuts out of `available`.
    pub fn active_count(self, available: usize) -> usize {
        match self {
            ResidualMode::Off => 0,
            ResidualMode::Outermost(n) => n.min(available),
            ResidualMode::Full => available,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "off" | "none" | "regular" => Ok(ResidualMode::Off),
            "on" | "full" | "residual" => Ok(ResidualMode::Full),
            other => other.parse().map(ResidualMode::Outermost).map_err(|_| {
                Error::InvalidArgument(format!(
                    "residual must be on, off or a count, got {other:?}"
                ))
            }),
        }
    }
}

impl fmt::Display for ResidualMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResidualMode::Off => f.write_str("off"),
            ResidualMode::Outermost(n) => write!(f, "{n}"),
            ResidualMode::Full => f.write_str("full"),
        }
    }
}

impl Serialize for ResidualMode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ResidualMode::Outermost(n) => s.serialize_u64(*n as u64),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for ResidualMode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(usize),
            Name(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(n) => Ok(ResidualMode::Outermost(n)),
            Raw::Name(s) => ResidualMode::parse(&s).map_err(serde::de::Error::custom),
        }
    }
}

/// Layout of the target head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputOption {
    /// `k` target outputs on top of the decoder.
    Opt1,
    /// `k` targets followed by an `m`-wide reconstruction of the input.
    Opt2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DropoutPlacement {
    /// Only after the innermost (code) layer.
    #[default]
    CodeLayer,
    /// After every encode and decode hidden layer.
    AllHidden,
}

/// Declarative description of a residual or regular autoencoder network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Number of input features `m`.
    #[serde(default)]
    pub nfea: usize,
    /// Encode widths from the outermost to the code layer.
    pub nnode: Vec<usize>,
    /// Number of head outputs: regression targets, or classes for
    /// classification.
    #[serde(default)]
    pub k: usize,
    /// One activation for every hidden dense layer, or a single entry used
    /// everywhere. Hidden layers are ordered encode (outermost first), decode
    /// (innermost first), then the final input-width decode layer.
    #[serde(default = "default_acts")]
    pub acts: Vec<ActivationKind>,
    #[serde(default = "default_output_activation")]
    pub output_activation: ActivationKind,
    #[serde(default = "default_dropout_rate")]
    pub dropout_rate: f64,
    #[serde(default)]
    pub dropout_placement: DropoutPlacement,
    #[serde(default = "default_residual")]
    pub residual: ResidualMode,
    #[serde(default = "default_residual_option")]
    pub residual_option: ResidualOption,
    #[serde(default = "default_output_option")]
    pub output_option: OutputOption,
    #[serde(default = "default_use_batchnorm")]
    pub use_batchnorm: bool,
}

fn default_acts() -> Vec<ActivationKind> {
    vec![ActivationKind::Relu]
}

fn default_output_activation() -> ActivationKind {
    ActivationKind::Linear
}

fn default_dropout_rate() -> f64 {
    0.1
}

fn default_residual() -> ResidualMode {
    ResidualMode::Full
}

fn default_residual_option() -> ResidualOption {
    ResidualOption::ActivationBatchNorm
}

fn default_output_option() -> OutputOption {
    OutputOption::Opt1
}

fn default_use_batchnorm() -> bool {
    true
}

impl NetworkSpec {
    /// A full-residual spec with default activations and post-ops.
    pub fn new(nfea: usize, nnode: Vec<usize>, k: usize) -> Self {
        NetworkSpec {
            nfea,
            nnode,
            k,
            acts: default_acts(),
            output_activation: default_output_activation(),
            dropout_rate: default_dropout_rate(),
            dropout_placement: DropoutPlacement::default(),
            residual: default_residual(),
            residual_option: default_residual_option(),
            output_option: default_output_option(),
            use_batchnorm: default_use_batchnorm(),
        }
    }

    pub fn with_io(mut self, nfea: usize, k: usize) -> Self {
        self.nfea = nfea;
        self.k = k;
        self
    }

    /// Number of hidden dense layers (encode + decode + input-width decode).
    pub fn hidden_layer_count(&self) -> usize {
        2 * self.nnode.len()
    }

    /// Shortcut pairs the topology offers: one per pre-code encode layer
    /// plus the input-level pair.
    pub fn available_shortcuts(&self) -> usize {
        self.nnode.len()
    }

    pub fn head_width(&self) -> usize {
        match self.output_option {
            OutputOption::Opt1 => self.k,
            OutputOption::Opt2 => self.k + self.nfea,
        }
    }

    /// Activation of hidden dense layer `i` (see [`NetworkSpec::acts`]).
    pub fn activation(&self, i: usize) -> ActivationKind {
        if self.acts.len() == 1 {
            self.acts[0]
        } else {
            self.acts[i]
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.nfea == 0 {
            return bad("nfea must be at least 1".into());
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.nnode.is_empty() {
            return bad("nnode must not be empty".into());
        }
        if let Some(i) = self.nnode.iter().position(|&w| w == 0) {
            return bad(format!("nnode[{i}] is zero"));
        }
        if self.acts.len() != 1 && self.acts.len() != self.hidden_layer_count() {
            return bad(format!(
                "acts needs 1 or {} entries, got {}",
                self.hidden_layer_count(),
                self.acts.len()
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            ));
        }
        if let ResidualMode::Outermost(n) = self.residual {
            if n > self.available_shortcuts() {
                return bad(format!(
                    "residual count {n} exceeds the {} available shortcut pairs",
                    self.available_shortcuts()
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn residual_mode_json_forms() {
        let modes: Vec<ResidualMode> = serde_json::from_str(r#"["off", "on", "full", 2]"#).unwrap();
        assert_eq!(
            modes,
            vec![
                ResidualMode::Off,
                ResidualMode::Full,
                ResidualMode::Full,
                ResidualMode::Outermost(2)
            ]
        );
        assert_eq!(
            serde_json::to_string(&ResidualMode::Outermost(3)).unwrap(),
            "3"
        );
        assert_eq!(
            serde_json::to_string(&ResidualMode::Off).unwrap(),
            "\"off\""
        );
        assert!(ResidualMode::parse("sometimes").is_err());
    }

    #[test]
    fn spec_defaults_fill_in() {
        let spec: NetworkSpec = serde_json::from_str(r#"{"nnode": [32, 16, 8, 4]}"#).unwrap();
        assert_eq!(spec.residual, ResidualMode::Full);
        assert_eq!(spec.residual_option, ResidualOption::ActivationBatchNorm);
        assert_eq!(spec.output_activation, ActivationKind::Linear);
        assert_eq!(spec.dropout_rate, 0.1);
        assert!(spec.validate().is_err(), "nfea and k still unset");
        assert!(spec.with_io(8, 1).validate().is_ok());
    }

    #[test]
    fn validation_catches_bad_specs() {
        let ok = NetworkSpec::new(3, vec![4, 2], 1);
        assert!(ok.validate().is_ok());
        let mut s = ok.clone();
        s.nnode = vec![];
        assert!(s.validate().is_err());
        let mut s = ok.clone();
        s.nnode = vec![4, 0];
        assert!(s.validate().is_err());
        let mut s = ok.clone();
        s.k = 0;
        assert!(s.validate().is_err());
        let mut s = ok.clone();
        s.acts = vec![ActivationKind::Relu; 3];
        assert!(s.validate().is_err());
        s.acts = vec![ActivationKind::Relu; 4];
        assert!(s.validate().is_ok());
        let mut s = ok.clone();
        s.residual = ResidualMode::Outermost(3);
        assert!(s.validate().is_err());
        s.residual = ResidualMode::Outermost(2);
        assert!(s.validate().is_ok());
    }
}
