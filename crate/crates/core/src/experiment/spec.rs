use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::models::{ModelConfig, ModelDims, ModelMode};
use crate::train::{HyperGrid, HyperParams};
use crate::{ModalityKind, ModalitySet};

/// A spec problem tied to the field that caused it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecError {
    pub field: String,
    pub message: String,
}

impl SpecError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for SpecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.field.is_empty() {
            f.write_str(&self.message)
        } else {
            write!(f, "{}: {}", self.field, self.message)
        }
    }
}

impl std::error::Error for SpecError {}

/// Deserializes JSON and reports the dotted path of the first bad field.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T, SpecError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let message = e.inner().to_string();
        let mut field = if path == "." { String::new() } else { path };
        // serde reports missing and unknown fields against the parent.
        for prefix in ["missing field `", "unknown field `", "duplicate field `"] {
            if let Some(rest) = message.strip_prefix(prefix) {
                let name = rest.split('`').next().unwrap_or_default();
                if !field.is_empty() && !field.ends_with(name) {
                    field.push('.');
                    field.push_str(name);
                } else if field.is_empty() {
                    field = name.to_string();
                }
            }
        }
        SpecError { field, message }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Single,
    UnimodalSuite,
    ModalityDecrease,
    QkSweep,
    CmaKeyAblation,
    StopwordAblation,
    Efficiency,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().expect("string"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DimsPreset {
    Full,
    Compact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DimsSpec {
    Preset(DimsPreset),
    Custom(ModelDims),
}

impl DimsSpec {
    pub fn resolve(&self) -> ModelDims {
        match self {
            DimsSpec::Preset(DimsPreset::Full) => ModelDims::full(),
            DimsSpec::Preset(DimsPreset::Compact) => ModelDims::compact(),
            DimsSpec::Custom(d) => d.clone(),
        }
    }
}

/// One row of the modality-decrease family. A single-modality row has no
/// keys or query and runs the unimodal baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsetSpec {
    pub modalities: ModalitySet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keys: Option<ModalitySet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<ModalityKind>,
}

/// Subset, key and query assignments of the published modality table.
pub const DEFAULT_DECREASE_ROWS: [(&str, &str, char); 11] = [
    ("TO", "T", 'O'),
    ("TA", "T", 'A'),
    ("TV", "T", 'V'),
    ("OA", "A", 'O'),
    ("OV", "V", 'O'),
    ("AV", "A", 'V'),
    ("TOA", "TO", 'A'),
    ("TOV", "TV", 'O'),
    ("TAV", "TV", 'A'),
    ("OAV", "OA", 'V'),
    ("TOAV", "TAV", 'O'),
];

pub fn default_decrease_rows() -> Vec<SubsetSpec> {
    DEFAULT_DECREASE_ROWS
        .iter()
        .map(|&(m, k, q)| SubsetSpec {
            modalities: m.parse().expect("valid set"),
            keys: Some(k.parse().expect("valid set")),
            query: Some(ModalityKind::from_code(q).expect("valid code")),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_name")]
    pub name: String,
    pub family: Family,
    pub manifest: PathBuf,
    /// Second dataset for the stopword ablation, built from stopword-filtered text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alt_manifest: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub models: Vec<ModelConfig>,
    /// Overrides the dims of every model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<DimsSpec>,
    #[serde(default)]
    pub hyper: HyperParams,
    /// When set, each model is first tuned on this grid with the first seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<HyperGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub execution: Execution,
    #[serde(default = "default_true")]
    pub checkpoints: bool,
    /// Attention mode for qk-sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ModelMode>,
    /// Modality pool for qk-sweep and unimodal-suite.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modalities: Option<ModalitySet>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subsets: Vec<SubsetSpec>,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_true() -> bool {
    true
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<Self, SpecError> {
        let spec: Self = parse_json(text)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Reads a spec file and resolves its relative paths against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self, SpecError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SpecError::new("", format!("cannot read {}: {e}", path.display())))?;
        let mut spec = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        spec.resolve_paths(base);
        Ok(spec)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.manifest);
        if let Some(p) = self.alt_manifest.as_mut() {
            join(p);
        }
        if let Some(p) = self.output.as_mut() {
            join(p);
        }
    }

    /// Seeds to run; the query/key sweep defaults to a single seed.
    pub fn seeds(&self) -> Vec<u64> {
        match &self.seeds {
            Some(s) => s.clone(),
            None if self.family == Family::QkSweep => vec![0],
            None => (0..5).collect(),
        }
    }

    pub fn dims(&self) -> Option<ModelDims> {
        self.dims.as_ref().map(DimsSpec::resolve)
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
            return Err(SpecError::new("name", "use letters, digits, '-', '_' or '.'"));
        }
        self.hyper
            .validate()
            .map_err(|e| SpecError::new("hyper", e.to_string()))?;
        if let Some(grid) = &self.grid {
            if grid.points().is_empty() {
                return Err(SpecError::new("grid", "grid has no points"));
            }
        }
        if let Some(seeds) = &self.seeds {
            if seeds.is_empty() {
                return Err(SpecError::new("seeds", "need at least one seed"));
            }
            let mut sorted = seeds.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != seeds.len() {
                return Err(SpecError::new("seeds", "seeds must be distinct"));
            }
        }
        for (i, m) in self.models.iter().enumerate() {
            m.validate()
                .map_err(|e| SpecError::new(format!("models[{i}]"), e.to_string()))?;
        }
        if let Some(dims) = self.dims() {
            let probe = ModelConfig::unimodal(ModalityKind::Transcript).with_dims(dims);
            probe.validate().map_err(|e| SpecError::new("dims", e.to_string()))?;
        }
        if self.modalities.is_some_and(|m| m.is_empty()) {
            return Err(SpecError::new("modalities", "must not be empty"));
        }
        match self.family {
            Family::Single if self.models.is_empty() => {
                Err(SpecError::new("models", "family single needs at least one model"))
            }
            Family::QkSweep => match self.mode {
                None => Err(SpecError::new("mode", "family qk-sweep needs mode cma-lf or cma-s")),
                Some(ModelMode::CmaLF | ModelMode::CmaS) => match self.modalities {
                    Some(m) if m.len() < 2 => Err(SpecError::new("modalities", "need at least two modalities")),
                    _ => Ok(()),
                },
                Some(other) => Err(SpecError::new("mode", format!("qk-sweep runs cma-lf or cma-s, not {other}"))),
            },
            Family::StopwordAblation if self.alt_manifest.is_none() => Err(SpecError::new(
                "alt_manifest",
                "family stopword-ablation needs the stopword-filtered manifest",
            )),
            Family::StopwordAblation if self.models.len() > 1 => {
                Err(SpecError::new("models", "stopword-ablation takes at most one model"))
            }
            Family::ModalityDecrease => {
                for (i, row) in self.subsets.iter().enumerate() {
                    check_subset(row).map_err(|(f, msg)| SpecError::new(format!("subsets[{i}].{f}"), msg))?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn check_subset(row: &SubsetSpec) -> Result<(), (&'static str, String)> {
    if row.modalities.is_empty() {
        return Err(("modalities", "must not be empty".into()));
    }
    match (row.keys, row.query) {
        (None, None) if row.modalities.len() == 1 => Ok(()),
        (Some(keys), Some(query)) => {
            if keys.is_empty() || keys.contains(query) {
                return Err(("keys", format!("keys {keys} must be nonempty and exclude the query {query}")));
            }
            if keys.with(query) != row.modalities {
                return Err((
                    "keys",
                    format!("keys {keys} plus query {query} must equal modalities {}", row.modalities),
                ));
            }
            Ok(())
        }
        (None, _) => Err(("keys", "required for multimodal rows".into())),
        (Some(_), None) => Err(("query", "required for multimodal rows".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn err(text: &str) -> SpecError {
        ExperimentSpec::parse(text).unwrap_err()
    }

    #[test]
    fn minimal_single_spec() {
        let spec = ExperimentSpec::parse(
            r#"{"family": "single", "manifest": "m.json",
                "models": [{"mode": "unimodal-T", "active": "T"}], "dims": "compact"}"#,
        )
        .unwrap();
        assert_eq!(spec.seeds(), vec![0, 1, 2, 3, 4]);
        assert_eq!(spec.dims(), Some(ModelDims::compact()));
        assert!(spec.checkpoints);
    }

    #[test]
    fn errors_name_the_field() {
        assert_eq!(err(r#"{"manifest": "m.json"}"#).field, "family");
        assert_eq!(err(r#"{"family": "single", "manifest": "m", "bogus": 1}"#).field, "bogus");
        assert_eq!(
            err(r#"{"family": "qk-sweep", "manifest": "m", "hyper": {"lr": "fast"}}"#).field,
            "hyper.lr"
        );
        assert_eq!(err(r#"{"family": "qk-sweep", "manifest": "m"}"#).field, "mode");
        assert_eq!(err(r#"{"family": "single", "manifest": "m"}"#).field, "models");
        assert_eq!(
            err(r#"{"family": "single", "manifest": "m", "models": [{"mode": "cma-s", "active": "TO"}]}"#).field,
            "models[0]"
        );
        assert_eq!(err(r#"{"family": "stopword-ablation", "manifest": "m"}"#).field, "alt_manifest");
        assert_eq!(err(r#"{"family": "efficiency", "manifest": "m", "seeds": []}"#).field, "seeds");
        assert_eq!(err(r#"{"family": "efficiency", "manifest": "m", "seeds": [1], "seeds": [2]}"#).field, "seeds");
        assert_eq!(
            err(r#"{"family": "efficiency", "manifest": "m", "hyper": {"lr": -1.0}}"#).field,
            "hyper"
        );
        let e = err(r#"{"family": "modality-decrease", "manifest": "m",
                        "subsets": [{"modalities": "TO", "keys": "TA", "query": "O"}]}"#);
        assert_eq!(e.field, "subsets[0].keys");
    }

    #[test]
    fn single_modality_subset_needs_no_keys() {
        let spec = ExperimentSpec::parse(
            r#"{"family": "modality-decrease", "manifest": "m", "subsets": [{"modalities": "T"}]}"#,
        );
        assert!(spec.is_ok());
    }

    #[test]
    fn default_rows_are_consistent() {
        let rows = default_decrease_rows();
        assert_eq!(rows.len(), 11);
        for row in &rows {
            check_subset(row).unwrap();
        }
    }

    #[test]
    fn qk_sweep_defaults_to_one_seed() {
        let spec = ExperimentSpec::parse(r#"{"family": "qk-sweep", "manifest": "m", "mode": "cma-s"}"#).unwrap();
        assert_eq!(spec.seeds(), vec![0]);
    }

    #[test]
    fn relative_paths_follow_the_spec_file() {
        let mut spec =
            ExperimentSpec::parse(r#"{"family": "efficiency", "manifest": "d/m.json", "output": "/abs"}"#).unwrap();
        spec.resolve_paths(Path::new("/specs"));
        assert_eq!(spec.manifest, PathBuf::from("/specs/d/m.json"));
        assert_eq!(spec.output, Some(PathBuf::from("/abs")));
    }
}
