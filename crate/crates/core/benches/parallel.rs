use criterion::{criterion_group, criterion_main, Criterion};

use cmafuse_core::exec::Execution;
use cmafuse_core::experiment::{gen_synthetic, SynthSpec};
use cmafuse_core::models::{AttentionConfig, ModelConfig, ModelDims, ModelMode};
use cmafuse_core::store::{split_dataset, DatasetManifest, SampleRecord};
use cmafuse_core::train::{run_cv, HyperParams};
use cmafuse_core::ModalityKind;

fn bench_cv(c: &mut Criterion) {
    let spec = SynthSpec {
        n_samples: 200,
        ..Default::default()
    };
    let data = gen_synthetic(&spec).unwrap();
    let records = data
        .samples()
        .iter()
        .map(|s| SampleRecord {
            id: s.id.clone(),
            label: s.label,
            embeddings: Default::default(),
            has_onscreen_text: s.has_onscreen_text,
        })
        .collect();
    let plan = split_dataset(&DatasetManifest::new("bench", records), 0).unwrap();
    let att = AttentionConfig::new(ModalityKind::Ocr, "TA".parse().unwrap());
    let config = ModelConfig::attention(ModelMode::CmaS, att).with_dims(ModelDims::compact());
    let hp = HyperParams {
        max_epochs: 2,
        ..Default::default()
    };

    let mut group = c.benchmark_group("run_cv_2_seeds_x_5_folds");
    group.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_function(name, |b| {
            b.iter(|| run_cv(&data, &plan, &config, &hp, &[0, 1], exec, None).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_cv);
criterion_main!(benches);
