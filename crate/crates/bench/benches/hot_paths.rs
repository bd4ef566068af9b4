use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use perspect_core::{
    build_prompt, compute_distribution, label_tree_for, rank_clusters, wasserstein_1d,
    wilcoxon_signed_rank, Annotator, ApproxTokenCounter, Backend, BackendError, ContinuationQuery,
    ContinuationResult, Instance, ItemScore, LabelSchema, LabelValue, OutputShape, PackingConfig,
    PromptTemplate, Rating, TokenCount, TreeMode, WilcoxonMode,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn dist(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
    let total: f64 = v.iter().sum();
    for x in &mut v {
        *x /= total;
    }
    v
}

fn bench_wasserstein(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..256)
        .map(|_| (dist(&mut rng, 11), dist(&mut rng, 11)))
        .collect();
    c.bench_function("wasserstein_1d 11-bin x256", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for (p, q) in &pairs {
                acc += wasserstein_1d(black_box(p), black_box(q)).unwrap();
            }
            acc
        })
    });
}

fn bench_wilcoxon(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a: Vec<f64> = (0..25).map(|_| rng.random::<f64>()).collect();
    let b25: Vec<f64> = a.iter().map(|x| x + rng.random_range(-0.4..0.6)).collect();
    c.bench_function("wilcoxon exact n=25", |b| {
        b.iter(|| wilcoxon_signed_rank(black_box(&a), black_box(&b25), WilcoxonMode::Exact))
    });

    let big_a: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
    let big_b: Vec<f64> = big_a
        .iter()
        .map(|x| x + rng.random_range(-0.4..0.6))
        .collect();
    c.bench_function("wilcoxon approx n=500", |b| {
        b.iter(|| {
            wilcoxon_signed_rank(
                black_box(&big_a),
                black_box(&big_b),
                WilcoxonMode::NormalApprox,
            )
        })
    });
}

fn bench_prompt_packing(c: &mut Criterion) {
    let schema = LabelSchema::Likert {
        min_label: 1,
        max_label: 6,
    };
    let template = PromptTemplate::new(
        "Rate the sarcasm of the response.",
        vec!["context".into(), "response".into()],
        OutputShape::Bare,
    );
    let annotator = Annotator {
        annotator_id: "a1".into(),
        demographics: [("Country".to_string(), "UK".to_string())]
            .into_iter()
            .collect(),
    };
    let filler = "and then the conversation kept going for a while longer ".repeat(4);
    let history: Vec<(Rating, Instance)> = (0..300)
        .map(|i| {
            let id = format!("e{i:03}");
            (
                Rating {
                    annotator_id: "a1".into(),
                    instance_id: id.clone(),
                    label: Some(LabelValue::Scalar(1 + (i % 6) as i64)),
                    explanation: None,
                },
                Instance {
                    instance_id: id,
                    payload: [
                        ("context".to_string(), filler.clone()),
                        ("response".to_string(), format!("reply number {i}")),
                    ]
                    .into_iter()
                    .collect(),
                    language_tag: None,
                },
            )
        })
        .collect();
    let examples: Vec<(&Rating, &Instance)> = history.iter().map(|(r, i)| (r, i)).collect();
    let target = Instance {
        instance_id: "target".into(),
        payload: [
            ("context".to_string(), filler.clone()),
            ("response".to_string(), "the target reply".to_string()),
        ]
        .into_iter()
        .collect(),
        language_tag: None,
    };
    let config = PackingConfig {
        budget_tokens: 3000,
        generation_headroom: 64,
        max_examples: None,
    };
    c.bench_function("build_prompt 300-example history, 3000-token budget", |b| {
        b.iter(|| {
            build_prompt(
                black_box(&template),
                &schema,
                &annotator,
                &examples,
                &target,
                &config,
                7,
                &ApproxTokenCounter,
            )
        })
    });
}

/// Constant-probability backend so the bench isolates tree traversal.
struct FlatBackend;

impl Backend for FlatBackend {
    fn query(&self, q: &ContinuationQuery) -> Result<ContinuationResult, BackendError> {
        let p = 1.0 / (q.candidates.len() + 1) as f64;
        Ok(ContinuationResult {
            probabilities: vec![p; q.candidates.len()],
            other_mass: p,
        })
    }

    fn count_tokens(&self, text: &str) -> TokenCount {
        TokenCount {
            count: text.len().div_ceil(4),
            approximate: true,
        }
    }
}

fn bench_tree_walk(c: &mut Criterion) {
    let schema = LabelSchema::MultiBinary {
        label_names: vec![
            "entailment".into(),
            "neutral".into(),
            "contradiction".into(),
        ],
        at_least_one_positive: true,
    };
    let shape = OutputShape::Json {
        label_field: "nli_label".into(),
        label_kind: perspect_core::LabelFieldKind::Text,
        explanation_field: None,
    };
    let tree = label_tree_for(&schema, &shape, TreeMode::Exact).unwrap();
    let prompt = "premise and hypothesis go here\n<start_of_turn>model\n{\"nli_label\": \"";
    c.bench_function("compute_distribution label-set exact tree", |b| {
        b.iter(|| compute_distribution(black_box(&tree), black_box(prompt), &FlatBackend))
    });
}

fn bench_ranking(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base: Vec<f64> = (0..300).map(|_| rng.random::<f64>()).collect();
    let systems: Vec<(String, Vec<ItemScore>)> = (0..4)
        .map(|s| {
            let scores = base
                .iter()
                .enumerate()
                .map(|(i, x)| ItemScore {
                    instance_id: format!("i{i:03}"),
                    annotator_id: None,
                    score: x + s as f64 * 0.05 + rng.random_range(-0.02..0.02),
                })
                .collect();
            (format!("system_{s}"), scores)
        })
        .collect();
    c.bench_function("rank_clusters 4 systems x300 items", |b| {
        b.iter(|| rank_clusters(black_box(&systems), 0.05, WilcoxonMode::Auto))
    });
}

criterion_group!(
    benches,
    bench_wasserstein,
    bench_wilcoxon,
    bench_prompt_packing,
    bench_tree_walk,
    bench_ranking
);
criterion_main!(benches);
