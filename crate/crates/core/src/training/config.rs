use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoders::{EncoderSpec, Paradigm, ProjectionHeadSpec, ProjectionKind};
use crate::error::{Error, Result};
use crate::nn::OptimizerKind;
use crate::objectives::{NceScope, ObjectiveConfig};

/// Largest training set accepted with `nce_scope = full_set`.
pub const FULL_SET_CAP: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderPreset {
    Dcgan,
    /// Small three-layer encoder sized to the data; for smoke runs.
    Compact,
}

/// Either a named preset (input channels taken from the data) or an explicit spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EncoderChoice {
    Preset(EncoderPreset),
    Spec(EncoderSpec),
}

impl Default for EncoderChoice {
    fn default() -> Self {
        EncoderChoice::Preset(EncoderPreset::Dcgan)
    }
}

impl EncoderChoice {
    /// The concrete spec for images of shape `(C, H, W)`.
    pub fn resolve(&self, input: (usize, usize, usize)) -> Result<EncoderSpec> {
        let spec = match self {
            EncoderChoice::Preset(EncoderPreset::Dcgan) => EncoderSpec::dcgan(input.0),
            EncoderChoice::Preset(EncoderPreset::Compact) => EncoderSpec::compact(input.0, input.1),
            EncoderChoice::Spec(s) => s.clone(),
        };
        if spec.input_shape != [input.0, input.1, input.2] {
            return Err(Error::config("encoder", format!("encoder expects input {:?}, data is {:?}", spec.input_shape, [input.0, input.1, input.2])));
        }
        spec.validate_executable()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub paradigm: Paradigm,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub fold: usize,
    pub encoder: EncoderChoice,
    /// Required for PXL; ignored otherwise.
    pub objective: Option<ObjectiveConfig>,
    /// Keep the epoch with the best validation accuracy instead of the last.
    #[serde(default)]
    pub select_best_val: bool,
}

impl TrainConfig {
    fn base(paradigm: Paradigm, batch_size: usize, learning_rate: f64, optimizer: OptimizerKind) -> Self {
        TrainConfig {
            paradigm,
            epochs: 200,
            batch_size,
            learning_rate,
            optimizer,
            seed: 0,
            fold: 0,
            encoder: EncoderChoice::default(),
            objective: (paradigm == Paradigm::Pxl).then(ObjectiveConfig::default),
            select_best_val: false,
        }
    }

    /// Volumetric single-view defaults: batch 4, lr 1e-3, Adam, 200 epochs.
    pub fn mri_upsl() -> Self {
        Self::base(Paradigm::Upsl, 4, 1e-3, OptimizerKind::Adam)
    }

    /// Volumetric merged-view defaults: batch 32, lr 1e-3, Adam.
    pub fn mri_mpsl() -> Self {
        Self::base(Paradigm::Mpsl, 32, 1e-3, OptimizerKind::Adam)
    }

    /// Volumetric contrastive defaults: identity head, batch 4, lr 1e-4, λ 0.75, Adam.
    pub fn mri_pxl() -> Self {
        let mut c = Self::base(Paradigm::Pxl, 4, 1e-4, OptimizerKind::Adam);
        c.objective = Some(ObjectiveConfig { lambda: 0.75, ..ObjectiveConfig::default() });
        c
    }

    /// Natural-image defaults: batch 64, lr 4e-4, RAdam, 200 epochs.
    pub fn natural_image(paradigm: Paradigm) -> Self {
        Self::base(paradigm, 64, 4e-4, OptimizerKind::Radam)
    }

    /// Reduced-epoch variant of a preset.
    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }

    pub fn projection(&self, width: usize) -> ProjectionHeadSpec {
        self.objective
            .as_ref()
            .map(|o| ProjectionHeadSpec { kind: o.projection_head.kind, width })
            .unwrap_or(ProjectionHeadSpec { kind: ProjectionKind::Identity, width })
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("training.epochs", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("training.batch_size", "must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("training.learning_rate", format!("must be positive, got {}", self.learning_rate)));
        }
        match (self.paradigm, &self.objective) {
            (Paradigm::Pxl, None) => return Err(Error::config("objective", "required for pxl training")),
            (Paradigm::Pxl, Some(o)) => {
                o.validate()?;
                if self.batch_size < 2 && o.nce_scope == NceScope::Minibatch {
                    return Err(Error::config("training.batch_size", "contrastive training needs at least 2 pairs per batch"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        config_hash(self)
    }
}

/// SHA-256 of a value's canonical JSON (object keys sorted).
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("config serializes");
    crate::datasets::cache::hex(&Sha256::digest(canonical_json(&v).as_bytes()))
}

/// Compact JSON with object keys in sorted order.
pub fn canonical_json(v: &serde_json::Value) -> String {
    use serde_json::Value;
    match v {
        Value::Object(map) => {
            let mut keys: Vec<_> = map.keys().collect();
            keys.sort();
            let body: Vec<String> = keys.iter().map(|k| format!("{}:{}", Value::String((*k).clone()), canonical_json(&map[*k]))).collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => format!("[{}]", items.iter().map(canonical_json).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let u = TrainConfig::mri_upsl();
        assert_eq!((u.batch_size, u.learning_rate, u.epochs), (4, 1e-3, 200));
        let m = TrainConfig::mri_mpsl();
        assert_eq!((m.batch_size, m.learning_rate), (32, 1e-3));
        let p = TrainConfig::mri_pxl();
        let o = p.objective.unwrap();
        assert_eq!((p.batch_size, p.learning_rate, o.lambda, p.optimizer), (4, 1e-4, 0.75, OptimizerKind::Adam));
        assert_eq!(o.projection_head.kind, ProjectionKind::Identity);
        let n = TrainConfig::natural_image(Paradigm::Upsl);
        assert_eq!((n.batch_size, n.learning_rate, n.optimizer, n.epochs), (64, 4e-4, OptimizerKind::Radam, 200));
    }

    #[test]
    fn validation_and_hash() {
        let mut c = TrainConfig::natural_image(Paradigm::Pxl);
        c.validate().unwrap();
        c.objective.as_mut().unwrap().lambda = 1.5;
        assert!(matches!(c.validate(), Err(Error::Config { field, .. }) if field == "objective.lambda"));
        let a = TrainConfig::mri_upsl();
        let json = serde_json::to_string(&a).unwrap();
        let b: TrainConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), TrainConfig::mri_mpsl().hash());
    }

    #[test]
    fn canonical_json_sorts_keys() {
        let v: serde_json::Value = serde_json::from_str(r#"{"b": 1, "a": {"d": [1, 2], "c": "x"}}"#).unwrap();
        assert_eq!(canonical_json(&v), r#"{"a":{"c":"x","d":[1,2]},"b":1}"#);
    }

    #[test]
    fn encoder_choice_resolves_against_data() {
        let spec = EncoderChoice::default().resolve((3, 32, 32)).unwrap();
        assert_eq!(spec.input_shape, vec![3, 32, 32]);
        assert!(EncoderChoice::default().resolve((1, 28, 28)).is_err());
        let compact = EncoderChoice::Preset(EncoderPreset::Compact).resolve((1, 12, 12)).unwrap();
        assert_eq!(compact.propagate().unwrap().last().unwrap().flat_len(), 16);
        assert!(EncoderChoice::Preset(EncoderPreset::Compact).resolve((1, 10, 12)).is_err());
    }
}
