//! Pipeline acceptance checks, one printed pass/fail line per criterion.
//!
//! Each criterion is an independent oracle or property run at a fixed seed;
//! a failing assert marks only its own line as failed. The official-data
//! criterion is skipped with a notice unless `LEWIDI_DATA_DIR` points at the
//! four competition datasets in this crate's JSON layout.

use perspect_core::{
    aggregate_all, baseline_perspectivist, baseline_soft, build_prompt, compute_distribution,
    dataset_stats, decide_all, decide_median, export_grouped, export_per_annotator, fnv1a_64,
    gold_soft_labels, label_tree_for, load_dataset, make_population, manhattan, mean_ci,
    oracle_backend, rank_clusters, run_inference, sample_dataset_splits, score_perspectivist,
    score_soft, wasserstein_1d, wilcoxon_signed_rank, Annotator, ApproxTokenCounter, Backend,
    BackendError, BaselineKind, ContinuationQuery, ContinuationResult, Dataset, DecisionRule,
    Error, InferenceOptions, Instance, ItemScore, LabelDistribution, LabelFieldKind, LabelSchema,
    LabelTree, LabelValue, OutputShape, PackingConfig, PromptTemplate, Rating, SetErrorMode,
    SoftMetric, SplitId, Strategy, TokenCount, TreeMode, WilcoxonMode,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

enum Verdict {
    Pass(String),
    Skip(String),
}

type Criterion = fn() -> Verdict;

fn main() {
    let criteria: &[(&str, Criterion)] = &[
        ("metric oracle equivalence", metric_oracle_equivalence),
        ("decision optimality", decision_optimality),
        (
            "probability engine vs path enumeration",
            probability_engine_paths,
        ),
        ("wilcoxon exact and approximate", wilcoxon_correctness),
        ("ranking tie shape (1,1,2)", ranking_shape),
        ("end-to-end oracle run", end_to_end_oracle_run),
        ("prompt budget property", budget_property),
        ("official data replication", official_data_replication),
        ("fine-tuning export counts", sft_export_counts),
    ];

    // Keep failure output to our own lines.
    std::panic::set_hook(Box::new(|_| {}));

    let mut failed = 0;
    for (name, run) in criteria {
        let started = Instant::now();
        match std::panic::catch_unwind(*run) {
            Ok(Verdict::Pass(detail)) => {
                println!(
                    "[PASS] {name}: {detail} ({:.2}s)",
                    started.elapsed().as_secs_f64()
                );
            }
            Ok(Verdict::Skip(notice)) => {
                println!("[SKIP] {name}: {notice}");
            }
            Err(payload) => {
                failed += 1;
                let msg = payload
                    .downcast_ref::<String>()
                    .map(String::as_str)
                    .or_else(|| payload.downcast_ref::<&str>().copied())
                    .unwrap_or("panic");
                println!("[FAIL] {name}: {msg}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}

fn random_distribution(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len)
        .map(|_| {
            if rng.random::<f64>() < 0.25 {
                0.0
            } else {
                rng.random::<f64>()
            }
        })
        .collect();
    let total: f64 = v.iter().sum();
    if total == 0.0 {
        v[rng.random_range(0..len)] = 1.0;
    } else {
        for x in &mut v {
            *x /= total;
        }
    }
    v
}

/// Minimal-cost transport on a unit-spaced line by the monotone coupling:
/// repeatedly move mass from the leftmost surplus bin to the leftmost
/// deficit bin, which is optimal for convex per-unit cost.
fn transport_cost(p: &[f64], q: &[f64]) -> f64 {
    let mut surplus: Vec<f64> = p.iter().zip(q).map(|(a, b)| a - b).collect();
    let mut cost = 0.0;
    loop {
        let from = surplus.iter().position(|&s| s > 1e-15);
        let to = surplus.iter().position(|&s| s < -1e-15);
        let (Some(i), Some(j)) = (from, to) else {
            return cost;
        };
        let moved = surplus[i].min(-surplus[j]);
        cost += moved * (i as f64 - j as f64).abs();
        surplus[i] -= moved;
        surplus[j] += moved;
    }
}

fn metric_oracle_equivalence() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC1);
    let mut max_w = 0.0f64;
    let mut max_m = 0.0f64;
    for _ in 0..1000 {
        let len = rng.random_range(1..=6);
        let p = random_distribution(&mut rng, len);
        let q = random_distribution(&mut rng, len);

        let w = wasserstein_1d(&p, &q).unwrap();
        max_w = max_w.max((w - transport_cost(&p, &q)).abs());

        let m = manhattan(&p, &q).unwrap();
        let direct: f64 = (0..len).map(|i| (p[i] - q[i]).abs()).sum();
        max_m = max_m.max((m - direct).abs());
    }
    assert!(
        max_w < 1e-9,
        "wasserstein deviates from transport oracle by {max_w:e}"
    );
    assert!(
        max_m < 1e-9,
        "manhattan deviates from direct sum by {max_m:e}"
    );
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "metric comparison took {elapsed:.1}s");
    Verdict::Pass(format!(
        "1000 fuzzed pairs; max wasserstein dev {max_w:.1e}, max manhattan dev {max_m:.1e}"
    ))
}

fn decision_optimality() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC2);
    for case in 0..1000 {
        let min_label = rng.random_range(-6..=3);
        let len = rng.random_range(2..=9);
        let schema = LabelSchema::Likert {
            min_label,
            max_label: min_label + len as i64 - 1,
        };
        let probs = random_distribution(&mut rng, len);
        let dist = LabelDistribution::new(schema.clone(), probs.clone()).unwrap();
        let picked = decide_median(&dist).unwrap();
        let LabelValue::Scalar(value) = picked else {
            panic!("median returned a label set");
        };
        let picked_idx = (value - min_label) as usize;

        let cost = |j: usize| -> f64 {
            probs
                .iter()
                .enumerate()
                .map(|(i, p)| p * (j as f64 - i as f64).abs())
                .sum()
        };
        let best = (0..len).map(cost).fold(f64::INFINITY, f64::min);
        assert!(
            cost(picked_idx) <= best + 1e-12,
            "case {case}: median label {value} costs {} vs optimum {best}",
            cost(picked_idx)
        );
    }
    Verdict::Pass("1000 fuzzed Likert distributions, zero argmin violations".into())
}

/// Deterministic stand-in for a scoring service: each (prefix, candidate)
/// hashes to a fixed conditional probability, small enough that any
/// candidate set stays a valid sub-distribution.
struct HashBackend;

impl Backend for HashBackend {
    fn query(&self, q: &ContinuationQuery) -> Result<ContinuationResult, BackendError> {
        let probabilities: Vec<f64> = q
            .candidates
            .iter()
            .map(|c| {
                let u = (fnv1a_64(&[q.prefix.as_str(), c]) >> 11) as f64 / (1u64 << 53) as f64;
                (0.02 + 0.96 * u) / 32.0
            })
            .collect();
        let other_mass = (1.0 - probabilities.iter().sum::<f64>()).max(0.0);
        Ok(ContinuationResult {
            probabilities,
            other_mass,
        })
    }

    fn count_tokens(&self, text: &str) -> TokenCount {
        TokenCount {
            count: text.len().div_ceil(4),
            approximate: true,
        }
    }
}

/// Probability of one candidate as a continuation of `prefix`.
fn single(backend: &dyn Backend, prefix: &str, candidate: &str) -> f64 {
    backend
        .query(&ContinuationQuery {
            prefix: prefix.to_string(),
            candidates: vec![candidate.to_string()],
        })
        .unwrap()
        .probabilities[0]
}

/// Independent oracle: enumerate every leaf path from the tree listing,
/// multiply its conditionals one candidate at a time, renormalize.
fn enumerate_paths(tree: &LabelTree, prompt: &str, backend: &dyn Backend) -> Vec<f64> {
    let mut mass = vec![0.0; tree.schema.label_count()];
    for (path, label_idx) in tree.leaves() {
        let mut prefix = prompt.to_string();
        let mut product = 1.0;
        for candidate in path {
            product *= single(backend, &prefix, &candidate);
            prefix.push_str(&candidate);
        }
        mass[label_idx] += product;
    }
    let total: f64 = mass.iter().sum();
    mass.iter().map(|m| m / total).collect()
}

fn probability_engine_paths() -> Verdict {
    let cases: Vec<(&str, LabelSchema, OutputShape, TreeMode)> = vec![
        (
            "binary 1-pass",
            LabelSchema::Binary,
            OutputShape::Bare,
            TreeMode::Minimal,
        ),
        (
            "likert-6 1-pass",
            LabelSchema::Likert {
                min_label: 1,
                max_label: 6,
            },
            OutputShape::Bare,
            TreeMode::Minimal,
        ),
        (
            "signed likert 3-pass",
            LabelSchema::Likert {
                min_label: -5,
                max_label: 5,
            },
            OutputShape::Json {
                label_field: "paraphrase_rating".into(),
                label_kind: LabelFieldKind::Number,
                explanation_field: Some("explanation".into()),
            },
            TreeMode::Exact,
        ),
        (
            "label sets minimal",
            LabelSchema::MultiBinary {
                label_names: vec![
                    "entailment".into(),
                    "neutral".into(),
                    "contradiction".into(),
                ],
                at_least_one_positive: true,
            },
            OutputShape::Json {
                label_field: "nli_label".into(),
                label_kind: LabelFieldKind::Text,
                explanation_field: None,
            },
            TreeMode::Minimal,
        ),
        (
            "label sets exact",
            LabelSchema::MultiBinary {
                label_names: vec![
                    "entailment".into(),
                    "neutral".into(),
                    "contradiction".into(),
                ],
                at_least_one_positive: true,
            },
            OutputShape::Json {
                label_field: "nli_label".into(),
                label_kind: LabelFieldKind::Text,
                explanation_field: None,
            },
            TreeMode::Exact,
        ),
    ];

    let backend = HashBackend;
    let mut max_dev = 0.0f64;
    let mut max_sum_dev = 0.0f64;
    for (name, schema, shape, mode) in &cases {
        let tree = label_tree_for(schema, shape, *mode).unwrap();
        for i in 0..25 {
            let prompt = format!("prompt {name} variant {i}\n<start_of_turn>");
            let engine = compute_distribution(&tree, &prompt, &backend).unwrap();
            let oracle = enumerate_paths(&tree, &prompt, &backend);
            let sum: f64 = engine.probs.iter().sum();
            max_sum_dev = max_sum_dev.max((sum - 1.0).abs());
            for (e, o) in engine.probs.iter().zip(&oracle) {
                max_dev = max_dev.max((e - o).abs());
            }
        }
    }
    assert!(
        max_dev < 1e-9,
        "engine deviates from path enumeration by {max_dev:e}"
    );
    assert!(
        max_sum_dev < 1e-9,
        "distribution sums off by {max_sum_dev:e}"
    );
    Verdict::Pass(format!(
        "5 tree shapes x 25 prompts; max deviation {max_dev:.1e}, sums within {max_sum_dev:.1e}"
    ))
}

/// Average ranks of |diffs| (ties averaged), in halves so sums stay exact.
fn half_ranks(diffs: &[f64]) -> Vec<f64> {
    let n = diffs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diffs[i].abs().partial_cmp(&diffs[j].abs()).unwrap());
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && diffs[order[end]].abs() == diffs[order[start]].abs() {
            end += 1;
        }
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Brute-force two-sided signed-rank p: every one of the 2^n sign
/// assignments, compared on rank sums (exact in f64: multiples of 0.5).
fn sign_enumeration_p(a: &[f64], b: &[f64]) -> f64 {
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        return 1.0;
    }
    let n = diffs.len();
    let ranks = half_ranks(&diffs);
    let observed: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let mut le = 0u64;
    let mut ge = 0u64;
    for signs in 0u32..(1u32 << n) {
        let w: f64 = (0..n)
            .filter(|i| signs >> i & 1 == 1)
            .map(|i| ranks[i])
            .sum();
        if w <= observed {
            le += 1;
        }
        if w >= observed {
            ge += 1;
        }
    }
    (2.0 * le.min(ge) as f64 / (1u64 << n) as f64).min(1.0)
}

fn wilcoxon_correctness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC4);
    let mut max_exact_dev = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..=12);
        // Half-integer grid values produce zeros and tied magnitudes.
        let a: Vec<f64> = (0..n)
            .map(|_| rng.random_range(-6..=6) as f64 / 2.0)
            .collect();
        let b: Vec<f64> = (0..n)
            .map(|_| rng.random_range(-6..=6) as f64 / 2.0)
            .collect();
        let p = wilcoxon_signed_rank(&a, &b, WilcoxonMode::Exact).unwrap();
        let oracle = sign_enumeration_p(&a, &b);
        max_exact_dev = max_exact_dev.max((p - oracle).abs());
    }
    assert!(
        max_exact_dev < 1e-9,
        "exact p deviates from enumeration by {max_exact_dev:e}"
    );

    let mut max_approx_dev = 0.0f64;
    for _ in 0..60 {
        let shift = rng.random_range(-0.5..0.5);
        let a: Vec<f64> = (0..25).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = a
            .iter()
            .map(|x| x + shift + rng.random_range(-0.8..0.8))
            .collect();
        let exact = wilcoxon_signed_rank(&a, &b, WilcoxonMode::Exact).unwrap();
        let approx = wilcoxon_signed_rank(&a, &b, WilcoxonMode::NormalApprox).unwrap();
        max_approx_dev = max_approx_dev.max((exact - approx).abs());
    }
    assert!(
        max_approx_dev <= 0.005,
        "normal approximation off by {max_approx_dev:.4} at n=25"
    );
    Verdict::Pass(format!(
        "200 exact cases within {max_exact_dev:.1e}; approximation within {max_approx_dev:.4} at n=25"
    ))
}

fn ranking_shape() -> Verdict {
    let items = |f: &dyn Fn(usize) -> f64| -> Vec<ItemScore> {
        (0..30)
            .map(|i| ItemScore {
                instance_id: format!("i{i:02}"),
                annotator_id: None,
                score: f(i),
            })
            .collect()
    };
    let base = |i: usize| (i * 37 % 97) as f64 / 97.0;
    let systems = vec![
        ("tied_a".to_string(), items(&base)),
        // Symmetric hair-width perturbation: statistically indistinguishable.
        (
            "tied_b".to_string(),
            items(&|i| base(i) + if i % 2 == 0 { 1e-9 } else { -1e-9 }),
        ),
        ("worse".to_string(), items(&|i| base(i) + 0.3)),
    ];
    let board = rank_clusters(&systems, 0.05, WilcoxonMode::Exact).unwrap();
    let ranks: Vec<(String, usize)> = board
        .entries
        .iter()
        .map(|e| (e.name.clone(), e.rank))
        .collect();
    assert_eq!(board.rank_of("tied_a"), Some(1), "{ranks:?}");
    assert_eq!(board.rank_of("tied_b"), Some(1), "{ranks:?}");
    assert_eq!(board.rank_of("worse"), Some(2), "{ranks:?}");
    Verdict::Pass("tied pair shares rank 1, clearly-worse system ranks 2".into())
}

fn par_like_template() -> PromptTemplate {
    let mut t = PromptTemplate::new(
        "Answer as the annotator would.",
        vec!["difficulty".into()],
        OutputShape::Json {
            label_field: "paraphrase_rating".into(),
            label_kind: LabelFieldKind::Number,
            explanation_field: None,
        },
    );
    t.include_annotator_id = true;
    t
}

struct OracleRun {
    perspectivist_mean: f64,
    soft_manhattan_mean: f64,
    soft_wasserstein_mean: f64,
    dataset: Dataset,
}

fn run_oracle_pipeline(noise: f64, seed: u64, out_dir: &std::path::Path) -> OracleRun {
    let schema = LabelSchema::Likert {
        min_label: -5,
        max_label: 5,
    };
    let pop = make_population(&schema, 4, 0.8, noise, seed).unwrap();
    let (dataset, _truth) =
        sample_dataset_splits(&pop, &[(SplitId::Train, 50), (SplitId::Dev, 50)], 4, seed).unwrap();
    let template = par_like_template();
    let backend = oracle_backend(&pop, &template, TreeMode::Exact).unwrap();
    let options = InferenceOptions {
        seed,
        ..InferenceOptions::default()
    };
    let outcome = run_inference(
        &dataset,
        SplitId::Dev,
        &template,
        &backend,
        &options,
        out_dir,
    )
    .unwrap();
    assert!(
        outcome.failures.is_empty(),
        "oracle inference failed: {:?}",
        outcome.failures
    );
    assert_eq!(
        backend.fallback_count(),
        0,
        "oracle backend fell back to uniform"
    );

    let decisions = decide_all(&outcome.records, &schema, DecisionRule::SchemaDefault).unwrap();
    let gold = &dataset.split(SplitId::Dev).unwrap().ratings;
    let p_scores =
        score_perspectivist(&decisions, gold, &schema, SetErrorMode::PerLabelAverage).unwrap();

    let soft = aggregate_all(&outcome.records, &schema, Strategy::Mean).unwrap();
    let gold_soft = gold_soft_labels(&dataset, SplitId::Dev).unwrap();
    let manhattan_scores = score_soft(&soft, &gold_soft, SoftMetric::Manhattan).unwrap();
    let wasserstein_scores = score_soft(&soft, &gold_soft, SoftMetric::Wasserstein).unwrap();

    OracleRun {
        perspectivist_mean: mean_ci(&p_scores).unwrap().0,
        soft_manhattan_mean: mean_ci(&manhattan_scores).unwrap().0,
        soft_wasserstein_mean: mean_ci(&wasserstein_scores).unwrap().0,
        dataset,
    }
}

fn baseline_means(dataset: &Dataset, kind: BaselineKind) -> (f64, f64, f64) {
    let schema = &dataset.schema;
    let preds = baseline_perspectivist(dataset, SplitId::Dev, kind).unwrap();
    let gold = &dataset.split(SplitId::Dev).unwrap().ratings;
    let p =
        mean_ci(&score_perspectivist(&preds, gold, schema, SetErrorMode::PerLabelAverage).unwrap())
            .unwrap()
            .0;
    let soft = baseline_soft(dataset, SplitId::Dev, kind).unwrap();
    let gold_soft = gold_soft_labels(dataset, SplitId::Dev).unwrap();
    let m = mean_ci(&score_soft(&soft, &gold_soft, SoftMetric::Manhattan).unwrap())
        .unwrap()
        .0;
    let w = mean_ci(&score_soft(&soft, &gold_soft, SoftMetric::Wasserstein).unwrap())
        .unwrap()
        .0;
    (p, m, w)
}

fn end_to_end_oracle_run() -> Verdict {
    let started = Instant::now();
    let tmp = tempfile::tempdir().unwrap();

    // Noisy population: the pipeline must beat both baselines on every metric.
    let noisy = run_oracle_pipeline(0.35, 29, &tmp.path().join("noisy"));
    for (name, kind) in [
        ("most_frequent", BaselineKind::MostFrequent),
        ("random", BaselineKind::Random { seed: 7 }),
    ] {
        let (bp, bm, bw) = baseline_means(&noisy.dataset, kind);
        assert!(
            noisy.perspectivist_mean < bp,
            "{name} perspectivist: pipeline {:.4} vs baseline {bp:.4}",
            noisy.perspectivist_mean
        );
        assert!(
            noisy.soft_manhattan_mean < bm,
            "{name} manhattan: pipeline {:.4} vs baseline {bm:.4}",
            noisy.soft_manhattan_mean
        );
        assert!(
            noisy.soft_wasserstein_mean < bw,
            "{name} wasserstein: pipeline {:.4} vs baseline {bw:.4}",
            noisy.soft_wasserstein_mean
        );
    }

    // Deterministic raters leave nothing to miss.
    let exact = run_oracle_pipeline(0.0, 31, &tmp.path().join("exact"));
    assert_eq!(
        exact.perspectivist_mean, 0.0,
        "deterministic perspectivist error"
    );
    assert_eq!(
        exact.soft_manhattan_mean, 0.0,
        "deterministic soft manhattan"
    );

    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 120.0, "end-to-end run took {elapsed:.1}s");
    Verdict::Pass(format!(
        "beats both baselines on all metrics (noisy); exact zeros (deterministic); {elapsed:.1}s"
    ))
}

fn budget_property() -> Verdict {
    let schema = LabelSchema::Likert {
        min_label: 1,
        max_label: 6,
    };
    let template = PromptTemplate::new(
        "Rate the sarcasm of the response.",
        vec!["t".into()],
        OutputShape::Bare,
    );
    let annotator = Annotator {
        annotator_id: "a1".into(),
        demographics: [("Age".to_string(), "31".to_string())]
            .into_iter()
            .collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC7);

    let instance = |id: String, len: usize| Instance {
        instance_id: id.clone(),
        payload: [("t".to_string(), {
            let mut text = id;
            while text.len() < len {
                text.push('x');
            }
            text
        })]
        .into_iter()
        .collect(),
        language_tag: None,
    };

    let mut monotone_checked = 0usize;
    for case in 0..10_000 {
        let budget = rng.random_range(40..1200);
        let headroom = rng.random_range(0..24);
        let n_hist = rng.random_range(0..50);
        let history: Vec<(Rating, Instance)> = (0..n_hist)
            .map(|i| {
                let id = format!("e{i:03}");
                let rating = Rating {
                    annotator_id: "a1".into(),
                    instance_id: id.clone(),
                    label: Some(LabelValue::Scalar(1 + (i % 6) as i64)),
                    explanation: None,
                };
                (rating, instance(id, rng.random_range(6..240)))
            })
            .collect();
        let examples: Vec<(&Rating, &Instance)> = history.iter().map(|(r, i)| (r, i)).collect();
        let target = instance("target".into(), rng.random_range(6..240));

        let build = |budget_tokens: usize| {
            build_prompt(
                &template,
                &schema,
                &annotator,
                &examples,
                &target,
                &PackingConfig {
                    budget_tokens,
                    generation_headroom: headroom,
                    max_examples: None,
                },
                case as u64,
                &ApproxTokenCounter,
            )
        };

        let first = build(budget);
        let wider_budget = budget + rng.random_range(0..400);
        match &first {
            Ok(p) => {
                assert!(
                    p.token_count <= budget,
                    "case {case}: {} tokens over budget {budget}",
                    p.token_count
                );
                let wider = build(wider_budget).unwrap();
                assert!(wider.token_count <= wider_budget);
                assert!(
                    wider.example_count >= p.example_count,
                    "case {case}: examples fell from {} to {} when budget grew {budget} -> {wider_budget}",
                    p.example_count,
                    wider.example_count
                );
                monotone_checked += 1;
            }
            Err(Error::BudgetTooSmall { .. }) => {}
            Err(other) => panic!("case {case}: unexpected error {other}"),
        }
    }
    Verdict::Pass(format!(
        "10000 fuzzed cases within budget; growth monotone on {monotone_checked} buildable cases"
    ))
}

/// Table of published per-split statistics: (dataset, split, ratings,
/// instances, annotators, mean/min/max ratings per annotator where given).
type StatsRow = (
    &'static str,
    SplitId,
    usize,
    usize,
    usize,
    Option<(f64, usize, usize)>,
);

const PUBLISHED_STATS: &[StatsRow] = &[
    (
        "mp",
        SplitId::Train,
        60_471,
        12_017,
        506,
        Some((119.5, 10, 147)),
    ),
    (
        "csc",
        SplitId::Train,
        25_574,
        5_628,
        872,
        Some((29.4, 21, 38)),
    ),
    (
        "par",
        SplitId::Train,
        1_600,
        400,
        4,
        Some((400.0, 400, 400)),
    ),
    (
        "ven",
        SplitId::Train,
        1_505,
        388,
        4,
        Some((360.8, 348, 373)),
    ),
    ("mp", SplitId::Dev, 15_178, 3_005, 506, None),
    ("csc", SplitId::Dev, 3_186, 704, 850, None),
    ("par", SplitId::Dev, 200, 50, 4, None),
    ("ven", SplitId::Dev, 187, 50, 4, None),
    ("mp", SplitId::Test, 18_693, 3_756, 506, None),
    ("csc", SplitId::Test, 3_224, 704, 860, None),
    ("par", SplitId::Test, 200, 50, 4, None),
    ("ven", SplitId::Test, 199, 50, 4, None),
];

/// Published test-split baseline scores: (dataset, perspectivist
/// most-frequent, perspectivist random, soft most-frequent, soft random).
const PUBLISHED_BASELINES: &[(&str, f64, f64, f64, f64)] = &[
    ("mp", 0.316, 0.499, 0.518, 0.687),
    ("csc", 0.239, 0.352, 1.17, 1.54),
    ("par", 0.362, 0.367, 3.23, 3.35),
    ("ven", 0.345, 0.497, 0.595, 0.676),
];

fn official_data_replication() -> Verdict {
    let Ok(root) = std::env::var("LEWIDI_DATA_DIR") else {
        return Verdict::Skip(
            "LEWIDI_DATA_DIR not set; place the four competition datasets \
             (mp, csc, par, ven) in this crate's JSON layout to enable"
                .into(),
        );
    };
    let root = std::path::PathBuf::from(root);

    let mut datasets = std::collections::HashMap::new();
    for name in ["mp", "csc", "par", "ven"] {
        datasets.insert(name, load_dataset(&root.join(name)).unwrap());
    }

    for (name, split, ratings, instances, annotators, extent) in PUBLISHED_STATS {
        let stats = dataset_stats(&datasets[name], *split).unwrap();
        assert_eq!(stats.n_ratings, *ratings, "{name} {split:?} ratings");
        assert_eq!(stats.n_instances, *instances, "{name} {split:?} instances");
        assert_eq!(
            stats.n_annotators, *annotators,
            "{name} {split:?} annotators"
        );
        if let Some((mean, min, max)) = extent {
            let rounded = (stats.mean_ratings_per_annotator * 10.0).round() / 10.0;
            assert_eq!(rounded, *mean, "{name} {split:?} mean ratings/annotator");
            assert_eq!(stats.min_ratings_per_annotator, *min, "{name} min");
            assert_eq!(stats.max_ratings_per_annotator, *max, "{name} max");
        }
    }

    for (name, p_mf, p_rand, s_mf, s_rand) in PUBLISHED_BASELINES {
        let dataset = &datasets[name];
        let schema = &dataset.schema;
        let gold = &dataset.split(SplitId::Test).unwrap().ratings;
        let gold_soft = gold_soft_labels(dataset, SplitId::Test).unwrap();
        let metric = SoftMetric::default_for(schema);

        let mf =
            baseline_perspectivist(dataset, SplitId::Test, BaselineKind::MostFrequent).unwrap();
        let mf_p = mean_ci(
            &score_perspectivist(&mf, gold, schema, SetErrorMode::PerLabelAverage).unwrap(),
        )
        .unwrap()
        .0;
        assert!(
            (mf_p - p_mf).abs() <= 0.01,
            "{name} most-frequent perspectivist {mf_p:.3} vs {p_mf}"
        );

        let mf_soft = baseline_soft(dataset, SplitId::Test, BaselineKind::MostFrequent).unwrap();
        let mf_s = mean_ci(&score_soft(&mf_soft, &gold_soft, metric).unwrap())
            .unwrap()
            .0;
        assert!(
            (mf_s - s_mf).abs() <= 0.01,
            "{name} most-frequent soft {mf_s:.3} vs {s_mf}"
        );

        // Random baseline: expectation over 10 seeds.
        let mut p_sum = 0.0;
        let mut s_sum = 0.0;
        for seed in 0..10 {
            let r = baseline_perspectivist(dataset, SplitId::Test, BaselineKind::Random { seed })
                .unwrap();
            p_sum += mean_ci(
                &score_perspectivist(&r, gold, schema, SetErrorMode::PerLabelAverage).unwrap(),
            )
            .unwrap()
            .0;
            let rs = baseline_soft(dataset, SplitId::Test, BaselineKind::Random { seed }).unwrap();
            s_sum += mean_ci(&score_soft(&rs, &gold_soft, metric).unwrap())
                .unwrap()
                .0;
        }
        let (rand_p, rand_s) = (p_sum / 10.0, s_sum / 10.0);
        assert!(
            (rand_p - p_rand).abs() <= 0.01,
            "{name} random perspectivist {rand_p:.3} vs {p_rand}"
        );
        assert!(
            (rand_s - s_rand).abs() <= 0.01,
            "{name} random soft {rand_s:.3} vs {s_rand}"
        );
    }

    Verdict::Pass("published split statistics exact; baseline scores within ±0.01".into())
}

fn sft_export_counts() -> Verdict {
    // A population shaped like the paraphrase data: 4 raters, 400 train
    // ratings each. Grouping by 20 must give ceil(400/20) = 20 per rater.
    let schema = LabelSchema::Likert {
        min_label: -5,
        max_label: 5,
    };
    let pop = make_population(&schema, 4, 0.6, 0.2, 41).unwrap();
    let (dataset, _) = sample_dataset_splits(&pop, &[(SplitId::Train, 400)], 4, 41).unwrap();
    let template = par_like_template();

    let grouped = export_grouped(&dataset, &template, 20, 41).unwrap();
    assert_eq!(grouped.sequences.len(), 80, "4 raters x ceil(400/20)");
    assert!(grouped.warnings.is_empty());

    let per_annotator =
        export_per_annotator(&dataset, &template, 1 << 20, 41, &ApproxTokenCounter).unwrap();
    assert_eq!(per_annotator.sequences.len(), 4, "one sequence per rater");

    let mut scanned = 0usize;
    for seq in grouped.sequences.iter().chain(&per_annotator.sequences) {
        assert!(
            seq.trainable_spans_follow(&template.turn_open),
            "trainable span not anchored to the turn-open marker"
        );
        scanned += 1;
    }

    // The published per-annotator count needs the real irony data.
    let mp_note = match std::env::var("LEWIDI_DATA_DIR") {
        Ok(root) => {
            let mp = load_dataset(&std::path::Path::new(&root).join("mp")).unwrap();
            let mp_template = PromptTemplate::new(
                "Decide whether the reply is ironic.",
                vec!["post".into(), "reply".into()],
                OutputShape::Bare,
            );
            let export =
                export_per_annotator(&mp, &mp_template, 1024, 41, &ApproxTokenCounter).unwrap();
            assert_eq!(
                export.sequences.len(),
                506,
                "one sequence per irony annotator"
            );
            "mp -> 506 sequences".to_string()
        }
        Err(_) => "mp count unchecked (LEWIDI_DATA_DIR not set)".to_string(),
    };

    Verdict::Pass(format!(
        "grouped 4x20 -> 80, per-annotator -> 4, {scanned} sequences mask-anchored; {mp_note}"
    ))
}
