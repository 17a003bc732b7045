//! Model enumerations behind each experiment family.

use crate::models::{AttentionConfig, ModelConfig, ModelMode};
use crate::{ModalityKind, ModalitySet};

/// One query/key assignment within a modality subset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QkAssignment {
    pub modalities: ModalitySet,
    pub keys: ModalitySet,
    pub query: ModalityKind,
}

/// Every subset of size two or more, and within it every choice of query
/// with the remaining modalities as keys. Subsets come by size, then in
/// canonical order; queries in canonical order.
pub fn qk_assignments(pool: ModalitySet) -> Vec<QkAssignment> {
    (2..=pool.len())
        .flat_map(|size| pool.subsets_of_size(size))
        .flat_map(|modalities| {
            modalities.iter().map(move |query| QkAssignment {
                modalities,
                keys: modalities.without(query),
                query,
            })
        })
        .collect()
}

/// Key subsets for the attention ablation with O as the query, paired with
/// their row labels. The last row is the full model.
pub fn key_ablation_rows() -> Vec<(&'static str, ModalitySet)> {
    [
        ("A", "A"),
        ("V", "V"),
        ("T", "T"),
        ("A+V", "AV"),
        ("A+T", "AT"),
        ("V+T", "VT"),
        ("MM-HSD (A+V+T)", "AVT"),
    ]
    .into_iter()
    .map(|(label, keys)| (label, keys.parse().expect("valid set")))
    .collect()
}

/// MM-HSD with O as the query over T, A and V.
pub fn reference_mm_hsd() -> ModelConfig {
    let keys = "TAV".parse().expect("valid set");
    ModelConfig::attention(ModelMode::MMHSD, AttentionConfig::new(ModalityKind::Ocr, keys))
}

/// Models of the efficiency table, in its row order.
pub fn efficiency_models() -> Vec<ModelConfig> {
    use ModalityKind::*;
    let att = AttentionConfig::new(Ocr, "TAV".parse().expect("valid set"));
    vec![
        ModelConfig::unimodal(Audio),
        ModelConfig::unimodal(Transcript),
        ModelConfig::unimodal(Ocr),
        ModelConfig::unimodal(Video),
        ModelConfig::attention(ModelMode::CmaS, att),
        ModelConfig::attention(ModelMode::MMHSD, att),
        ModelConfig::concat(ModalitySet::FULL),
        ModelConfig::attention(ModelMode::CmaLF, att),
    ]
}
