use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ModelError;
use crate::store::{AUDIO_DIM, MAX_FRAMES, TEXT_DIM, VIDEO_DIM};
use crate::{ModalityKind, ModalitySet};

/// Fusion wiring.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelMode {
    /// One encoder straight into the head.
    Unimodal(ModalityKind),
    /// Concatenated encoder outputs, no attention.
    ConcatLF,
    /// Attention over encoder outputs, one key row per modality.
    CmaLF,
    /// Attention over projected raw embeddings, concatenated with every
    /// encoder output.
    MMHSD,
    /// Attention over projected raw embeddings as the only feature.
    CmaS,
}

impl ModelMode {
    pub fn uses_attention(self) -> bool {
        matches!(self, ModelMode::CmaLF | ModelMode::MMHSD | ModelMode::CmaS)
    }

    /// Attention over raw embeddings rather than encoder outputs.
    pub fn raw_attention(self) -> bool {
        matches!(self, ModelMode::MMHSD | ModelMode::CmaS)
    }

    /// Short label used in tables.
    pub fn label(self) -> String {
        match self {
            ModelMode::Unimodal(m) => m.code().to_string(),
            ModelMode::ConcatLF => "w/o CMA".into(),
            ModelMode::CmaLF => "CMA-LF".into(),
            ModelMode::MMHSD => "MM-HSD".into(),
            ModelMode::CmaS => "CMA-S".into(),
        }
    }
}

impl fmt::Display for ModelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelMode::Unimodal(m) => write!(f, "unimodal-{m}"),
            ModelMode::ConcatLF => f.write_str("concat-lf"),
            ModelMode::CmaLF => f.write_str("cma-lf"),
            ModelMode::MMHSD => f.write_str("mm-hsd"),
            ModelMode::CmaS => f.write_str("cma-s"),
        }
    }
}

impl FromStr for ModelMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "concat-lf" | "concat" | "w/o-cma" => Ok(ModelMode::ConcatLF),
            "cma-lf" => Ok(ModelMode::CmaLF),
            "mm-hsd" | "mmhsd" => Ok(ModelMode::MMHSD),
            "cma-s" => Ok(ModelMode::CmaS),
            _ => match lower.strip_prefix("unimodal-") {
                Some(code) => code
                    .to_ascii_uppercase()
                    .parse()
                    .map(ModelMode::Unimodal)
                    .map_err(|_| format!("unknown modality in mode {s:?}")),
                None => Err(format!(
                    "unknown mode {s:?}; expected unimodal-<T|O|A|V>, concat-lf, cma-lf, mm-hsd or cma-s"
                )),
            },
        }
    }
}

impl Serialize for ModelMode {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ModelMode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One query modality attending over a set of key/value modalities. Keys are
/// stacked in canonical `T, O, A, V` order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionConfig {
    pub query: ModalityKind,
    pub keys: ModalitySet,
}

impl AttentionConfig {
    pub fn new(query: ModalityKind, keys: ModalitySet) -> Self {
        Self { query, keys }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.keys.is_empty() {
            return Err(ModelError::InvalidConfig("attention keys are empty".into()));
        }
        if self.keys.contains(self.query) {
            return Err(ModelError::InvalidConfig(format!(
                "query {} also appears in keys {}",
                self.query, self.keys
            )));
        }
        Ok(())
    }

    pub fn modalities(&self) -> ModalitySet {
        self.keys.with(self.query)
    }
}

impl fmt::Display for AttentionConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q={} K={}", self.query, self.keys)
    }
}

/// Layer widths. Input widths and frame count are configurable so tiny
/// models can be gradient-checked.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelDims {
    pub text_dim: usize,
    pub audio_dim: usize,
    pub video_dim: usize,
    pub frames: usize,
    /// Hidden widths of the transcript/OCR/audio FC stacks; a final layer
    /// to `feature_dim` follows.
    pub hidden: Vec<usize>,
    /// Output width of every encoder.
    pub feature_dim: usize,
    pub lstm_hidden: usize,
    pub d_model: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self::full()
    }
}

impl ModelDims {
    /// Widths sized to the published parameter budgets.
    pub fn full() -> Self {
        Self {
            text_dim: TEXT_DIM,
            audio_dim: AUDIO_DIM,
            video_dim: VIDEO_DIM,
            frames: MAX_FRAMES,
            hidden: vec![128, 64],
            feature_dim: 32,
            lstm_hidden: 300,
            d_model: 512,
        }
    }

    /// Narrow layers over the same input shapes, for quick runs.
    pub fn compact() -> Self {
        Self {
            hidden: vec![32, 16],
            feature_dim: 16,
            lstm_hidden: 8,
            d_model: 32,
            ..Self::full()
        }
    }

    pub fn input_dim(&self, kind: ModalityKind) -> usize {
        match kind {
            ModalityKind::Transcript | ModalityKind::Ocr => self.text_dim,
            ModalityKind::Audio => self.audio_dim,
            ModalityKind::Video => self.video_dim,
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        let named = [
            ("text_dim", self.text_dim),
            ("audio_dim", self.audio_dim),
            ("video_dim", self.video_dim),
            ("frames", self.frames),
            ("feature_dim", self.feature_dim),
            ("lstm_hidden", self.lstm_hidden),
            ("d_model", self.d_model),
        ];
        if let Some((name, _)) = named.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::InvalidConfig(format!("dims.{name} must be positive")));
        }
        if self.hidden.contains(&0) {
            return Err(ModelError::InvalidConfig("dims.hidden widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub mode: ModelMode,
    pub active: ModalitySet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention: Option<AttentionConfig>,
    #[serde(default)]
    pub dims: ModelDims,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    /// Restricts the attention key stack without removing encoders from the
    /// late-fusion concatenation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cma_key_subset: Option<ModalitySet>,
}

fn default_dropout() -> f64 {
    0.3
}

impl ModelConfig {
    pub fn unimodal(kind: ModalityKind) -> Self {
        Self {
            mode: ModelMode::Unimodal(kind),
            active: ModalitySet::single(kind),
            attention: None,
            dims: ModelDims::default(),
            dropout: default_dropout(),
            cma_key_subset: None,
        }
    }

    pub fn concat(active: ModalitySet) -> Self {
        Self {
            mode: ModelMode::ConcatLF,
            active,
            ..Self::unimodal(ModalityKind::Transcript)
        }
    }

    /// An attention model over exactly the query and key modalities.
    pub fn attention(mode: ModelMode, attention: AttentionConfig) -> Self {
        Self {
            mode,
            active: attention.modalities(),
            attention: Some(attention),
            ..Self::unimodal(ModalityKind::Transcript)
        }
    }

    pub fn with_dims(mut self, dims: ModelDims) -> Self {
        self.dims = dims;
        self
    }

    pub fn with_dropout(mut self, dropout: f64) -> Self {
        self.dropout = dropout;
        self
    }

    pub fn with_key_subset(mut self, subset: ModalitySet) -> Self {
        self.cma_key_subset = Some(subset);
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.dims.validate()?;
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::InvalidConfig(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.active.is_empty() {
            return Err(ModelError::InvalidConfig("no active modalities".into()));
        }
        match self.mode {
            ModelMode::Unimodal(m) if self.active != ModalitySet::single(m) => {
                return Err(ModelError::InvalidConfig(format!(
                    "unimodal {m} requires active = {m}, got {}",
                    self.active
                )))
            }
            _ => {}
        }
        match (self.mode.uses_attention(), &self.attention) {
            (true, None) => {
                return Err(ModelError::InvalidConfig(format!("{} requires an attention config", self.mode)))
            }
            (false, Some(_)) => {
                return Err(ModelError::InvalidConfig(format!("{} takes no attention config", self.mode)))
            }
            (false, None) if self.cma_key_subset.is_some() => {
                return Err(ModelError::InvalidConfig(format!("{} takes no key subset", self.mode)))
            }
            _ => {}
        }
        if let Some(att) = &self.attention {
            att.validate()?;
            if !att.modalities().is_subset_of(self.active) {
                return Err(ModelError::InvalidConfig(format!(
                    "attention modalities {} not within active {}",
                    att.modalities(),
                    self.active
                )));
            }
            if let Some(subset) = self.cma_key_subset {
                if subset.is_empty() || !subset.is_subset_of(att.keys) {
                    return Err(ModelError::InvalidConfig(format!(
                        "key subset {subset} must be a nonempty subset of keys {}",
                        att.keys
                    )));
                }
            }
        }
        Ok(())
    }

    /// Keys actually stacked into the attention block.
    pub fn effective_keys(&self) -> Option<ModalitySet> {
        self.attention
            .map(|a| self.cma_key_subset.unwrap_or(a.keys))
    }

    /// Modalities that get an encoder.
    pub fn encoded(&self) -> ModalitySet {
        match self.mode {
            ModelMode::Unimodal(m) => ModalitySet::single(m),
            ModelMode::ConcatLF | ModelMode::MMHSD => self.active,
            ModelMode::CmaLF => self.effective_keys().unwrap().with(self.attention.unwrap().query),
            ModelMode::CmaS => ModalitySet::EMPTY,
        }
    }

    /// Every modality the forward pass reads.
    pub fn required(&self) -> ModalitySet {
        let mut set = self.encoded();
        if self.mode.raw_attention() {
            for m in self.effective_keys().unwrap().iter() {
                set = set.with(m);
            }
            set = set.with(self.attention.unwrap().query);
        }
        set
    }

    /// Width of the classification head input.
    pub fn head_input(&self) -> usize {
        let f = self.dims.feature_dim;
        match self.mode {
            ModelMode::Unimodal(_) => f,
            ModelMode::ConcatLF => f * self.active.len(),
            ModelMode::CmaLF => f,
            ModelMode::MMHSD => f * self.active.len() + self.dims.d_model,
            ModelMode::CmaS => self.dims.d_model,
        }
    }

    /// Table label such as `MM-HSD Q=O K=TAV`.
    pub fn label(&self) -> String {
        match &self.attention {
            Some(a) => format!("{} Q={} K={}", self.mode.label(), a.query, self.effective_keys().unwrap()),
            None if self.mode == ModelMode::ConcatLF => format!("{} {}", self.mode.label(), self.active),
            None => self.mode.label(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ModalityKind::*;

    fn keys(s: &str) -> ModalitySet {
        s.parse().unwrap()
    }

    #[test]
    fn mode_round_trip() {
        for mode in [
            ModelMode::Unimodal(Video),
            ModelMode::ConcatLF,
            ModelMode::CmaLF,
            ModelMode::MMHSD,
            ModelMode::CmaS,
        ] {
            assert_eq!(mode.to_string().parse::<ModelMode>().unwrap(), mode);
            let json = serde_json::to_string(&mode).unwrap();
            assert_eq!(serde_json::from_str::<ModelMode>(&json).unwrap(), mode);
        }
        assert!("unimodal-X".parse::<ModelMode>().is_err());
        assert!("fusion".parse::<ModelMode>().is_err());
    }

    #[test]
    fn validation_rules() {
        let att = AttentionConfig::new(Ocr, keys("TAV"));
        assert!(ModelConfig::attention(ModelMode::MMHSD, att).validate().is_ok());
        let bad = AttentionConfig::new(Ocr, keys("OA"));
        assert!(ModelConfig::attention(ModelMode::CmaS, bad).validate().is_err());
        let mut no_att = ModelConfig::attention(ModelMode::CmaLF, att);
        no_att.attention = None;
        assert!(no_att.validate().is_err());
        let mut extra = ModelConfig::concat(ModalitySet::FULL);
        extra.attention = Some(att);
        assert!(extra.validate().is_err());
        let mut narrow = ModelConfig::attention(ModelMode::MMHSD, att);
        narrow.active = keys("TA");
        assert!(narrow.validate().is_err());
        let subset = ModelConfig::attention(ModelMode::MMHSD, att).with_key_subset(keys("AV"));
        assert!(subset.validate().is_ok());
        let outside = ModelConfig::attention(ModelMode::MMHSD, att).with_key_subset(keys("OV"));
        assert!(outside.validate().is_err());
        let mut uni = ModelConfig::unimodal(Audio);
        uni.active = keys("TA");
        assert!(uni.validate().is_err());
        assert!(ModelConfig::unimodal(Audio).with_dropout(1.0).validate().is_err());
    }

    #[test]
    fn wiring_sets() {
        let att = AttentionConfig::new(Ocr, keys("TAV"));
        let mm = ModelConfig::attention(ModelMode::MMHSD, att).with_key_subset(keys("A"));
        assert_eq!(mm.encoded(), ModalitySet::FULL);
        assert_eq!(mm.head_input(), 4 * 32 + 512);
        let lf = ModelConfig::attention(ModelMode::CmaLF, att).with_key_subset(keys("A"));
        assert_eq!(lf.encoded(), keys("OA"));
        let s = ModelConfig::attention(ModelMode::CmaS, att);
        assert_eq!(s.encoded(), ModalitySet::EMPTY);
        assert_eq!(s.required(), ModalitySet::FULL);
        assert_eq!(s.label(), "CMA-S Q=O K=TAV");
    }

    #[test]
    fn config_json() {
        let json = r#"{"mode": "cma-s", "active": "TOAV", "attention": {"query": "O", "keys": "TAV"},
                       "dims": {"d_model": 64}}"#;
        let cfg: ModelConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.dims.d_model, 64);
        assert_eq!(cfg.dims.lstm_hidden, 300);
        assert_eq!(cfg.dropout, 0.3);
        cfg.validate().unwrap();
        assert!(serde_json::from_str::<ModelConfig>(r#"{"mode": "cma-s", "active": "T", "bogus": 1}"#).is_err());
    }
}
