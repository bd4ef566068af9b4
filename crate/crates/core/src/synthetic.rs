//! Synthetic rater populations with known response distributions, used to
//! validate decisions, aggregation, metrics, and the full pipeline against
//! sealed ground truth.
//!
//! Each instance carries a scalar difficulty in [-1, 1]. A rater maps
//! difficulty plus their own bias onto the label axis and answers from a
//! discretized logistic centered there, sharpened or flattened by a noise
//! temperature. Zero noise makes the rater deterministic.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use indexmap::IndexMap;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, ContinuationQuery, ContinuationResult};
use crate::dataset::{Annotator, Dataset, Instance, Rating, Split, SplitId};
use crate::error::{BackendError, Error, Result};
use crate::hash::derive_seed;
use crate::labeltree::{
    label_tree_for, BranchOutcome, LabelDistribution, LabelTree, TreeMode, TreeNode,
};
use crate::prompt::{ApproxTokenCounter, TokenCount, TokenCounter};
use crate::schema::LabelSchema;
use crate::template::PromptTemplate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRater {
    pub rater_id: String,
    /// Shift added to instance difficulty before mapping onto the labels.
    pub bias: f64,
    /// Logistic temperature; 0 collapses responses to a point mass.
    pub noise: f64,
}

fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

impl SyntheticRater {
    /// The rater's true distribution over `schema.valid_labels()` for an
    /// instance of the given difficulty.
    pub fn response_distribution(&self, schema: &LabelSchema, difficulty: f64) -> Vec<f64> {
        let count = schema.label_count();
        let span = (count - 1) as f64;
        let target = ((difficulty + self.bias).clamp(-1.0, 1.0) + 1.0) / 2.0 * span;
        if self.noise == 0.0 {
            let mut probs = vec![0.0; count];
            probs[target.round() as usize] = 1.0;
            return probs;
        }
        let log_w: Vec<f64> = (0..count)
            .map(|j| -2.0 * ln_cosh((j as f64 - target) / (2.0 * self.noise)))
            .collect();
        let peak = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut w: Vec<f64> = log_w.iter().map(|lw| (lw - peak).exp()).collect();
        let total: f64 = w.iter().sum();
        for v in &mut w {
            *v /= total;
        }
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterPopulation {
    pub schema: LabelSchema,
    pub raters: Vec<SyntheticRater>,
    pub seed: u64,
}

impl RaterPopulation {
    pub fn rater(&self, rater_id: &str) -> Option<&SyntheticRater> {
        self.raters.iter().find(|r| r.rater_id == rater_id)
    }
}

/// A population of `n_raters` with biases evenly spread across
/// `[-bias_spread, +bias_spread]` and a shared noise temperature.
pub fn make_population(
    schema: &LabelSchema,
    n_raters: usize,
    bias_spread: f64,
    noise: f64,
    seed: u64,
) -> Result<RaterPopulation> {
    if n_raters == 0 {
        return Err(Error::Config("population needs at least one rater".into()));
    }
    if !noise.is_finite() || noise < 0.0 {
        return Err(Error::Config(format!(
            "noise must be finite and >= 0, got {noise}"
        )));
    }
    if !bias_spread.is_finite() || bias_spread < 0.0 {
        return Err(Error::Config(format!(
            "bias_spread must be finite and >= 0, got {bias_spread}"
        )));
    }
    let raters = (0..n_raters)
        .map(|i| {
            let bias = if n_raters == 1 {
                0.0
            } else {
                -bias_spread + 2.0 * bias_spread * i as f64 / (n_raters - 1) as f64
            };
            SyntheticRater {
                rater_id: format!("r{i:03}"),
                bias,
                noise,
            }
        })
        .collect();
    Ok(RaterPopulation {
        schema: schema.clone(),
        raters,
        seed,
    })
}

/// True per-instance facts sealed away from the sampled dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleInstance {
    pub difficulty: f64,
    pub rater_ids: Vec<String>,
    /// Mean of the assigned raters' response distributions, over
    /// `schema.valid_labels()`.
    pub distribution: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleTruth {
    pub schema: LabelSchema,
    pub instances: IndexMap<String, OracleInstance>,
}

impl OracleTruth {
    /// The instance's true soft label on the evaluation axis: the label
    /// distribution itself, or per-label positive rates for label sets.
    pub fn soft_label(&self, instance_id: &str) -> Result<Vec<f64>> {
        let inst = self
            .instances
            .get(instance_id)
            .ok_or_else(|| Error::Validation(format!("oracle has no instance {instance_id}")))?;
        if self.schema.is_multi_binary() {
            LabelDistribution::new(self.schema.clone(), inst.distribution.clone())?.marginals()
        } else {
            Ok(inst.distribution.clone())
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::parse(path, "serialize", e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<OracleTruth> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, "json", e.to_string()))
    }
}

fn sample_index(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut cdf = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cdf += p;
        if u < cdf {
            return i;
        }
    }
    probs.len() - 1
}

/// Sample a dataset with the given per-split instance counts. Instances get
/// difficulties drawn uniformly from [-1, 1]; raters are assigned round-robin,
/// `ratings_per_instance` per instance; labels are drawn from each rater's
/// response distribution. Everything is a pure function of the seed.
pub fn sample_dataset_splits(
    pop: &RaterPopulation,
    counts: &[(SplitId, usize)],
    ratings_per_instance: usize,
    seed: u64,
) -> Result<(Dataset, OracleTruth)> {
    if counts.is_empty() {
        return Err(Error::Config("no splits requested".into()));
    }
    if ratings_per_instance == 0 || ratings_per_instance > pop.raters.len() {
        return Err(Error::Config(format!(
            "ratings_per_instance must be in 1..={}, got {ratings_per_instance}",
            pop.raters.len()
        )));
    }
    let labels = pop.schema.valid_labels();
    let mut dataset = Dataset::new("synthetic", pop.schema.clone())?;
    let mut oracle = OracleTruth {
        schema: pop.schema.clone(),
        instances: IndexMap::new(),
    };
    for &(split_id, n_instances) in counts {
        let mut split = Split::default();
        for rater in &pop.raters {
            split.annotators.insert(
                rater.rater_id.clone(),
                Annotator {
                    annotator_id: rater.rater_id.clone(),
                    demographics: IndexMap::from([(
                        "bias".to_string(),
                        format!("{:+.2}", rater.bias),
                    )]),
                },
            );
        }
        let mut diff_rng =
            ChaCha8Rng::seed_from_u64(derive_seed(seed, &[split_id.as_str(), "difficulty"]));
        for i in 0..n_instances {
            let instance_id = format!("{}-{i:04}", split_id.as_str());
            // render then re-parse so the sealed value matches the payload text
            let difficulty_text = format!("{:.4}", diff_rng.random_range(-1.0..=1.0));
            let difficulty: f64 = difficulty_text.parse().expect("fixed-point float");
            split.instances.insert(
                instance_id.clone(),
                Instance {
                    instance_id: instance_id.clone(),
                    payload: IndexMap::from([("difficulty".to_string(), difficulty_text)]),
                    language_tag: None,
                },
            );
            let start = i % pop.raters.len();
            let mut assigned = Vec::with_capacity(ratings_per_instance);
            let mut mean = vec![0.0; labels.len()];
            for k in 0..ratings_per_instance {
                let rater = &pop.raters[(start + k) % pop.raters.len()];
                let dist = rater.response_distribution(&pop.schema, difficulty);
                for (m, p) in mean.iter_mut().zip(&dist) {
                    *m += p;
                }
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                    seed,
                    &[split_id.as_str(), &instance_id, &rater.rater_id],
                ));
                split.ratings.push(Rating {
                    annotator_id: rater.rater_id.clone(),
                    instance_id: instance_id.clone(),
                    label: Some(labels[sample_index(&dist, &mut rng)].clone()),
                    explanation: None,
                });
                assigned.push(rater.rater_id.clone());
            }
            for m in &mut mean {
                *m /= ratings_per_instance as f64;
            }
            oracle.instances.insert(
                instance_id,
                OracleInstance {
                    difficulty,
                    rater_ids: assigned,
                    distribution: mean,
                },
            );
        }
        dataset.insert_split(split_id, split)?;
    }
    Ok((dataset, oracle))
}

/// Single train split, see [`sample_dataset_splits`].
pub fn sample_dataset(
    pop: &RaterPopulation,
    n_instances: usize,
    ratings_per_instance: usize,
    seed: u64,
) -> Result<(Dataset, OracleTruth)> {
    sample_dataset_splits(
        pop,
        &[(SplitId::Train, n_instances)],
        ratings_per_instance,
        seed,
    )
}

/// A backend that answers label-tree queries from the population's true
/// response distributions. It reads the rater id and the target difficulty
/// straight out of the prompt text, locates the tree node the query prefix
/// ends in, and returns the node's true branch conditionals.
///
/// The simulated rater emits exactly the continuations the tree can score,
/// with the orderings of a label set equally likely, so walking the tree
/// recovers the response distribution restricted to the tree's coverage.
/// Prompts it cannot parse get a uniform answer and bump `fallback_count`.
pub struct OracleBackend {
    raters: IndexMap<String, SyntheticRater>,
    schema: LabelSchema,
    tree: LabelTree,
    /// (expected prefix suffix, branch path from the root), longest match wins.
    suffixes: Vec<(String, Vec<usize>)>,
    /// 1 / number of tree leaves per label index, pre-divided so summing
    /// leaf weights over orderings reproduces each label's probability.
    leaf_shares: Vec<f64>,
    fallbacks: AtomicUsize,
}

fn collect_suffixes(
    node: &TreeNode,
    suffix: &str,
    path: &mut Vec<usize>,
    out: &mut Vec<(String, Vec<usize>)>,
) {
    out.push((suffix.to_string(), path.clone()));
    for (i, branch) in node.branches.iter().enumerate() {
        if let BranchOutcome::Subtree(sub) = &branch.outcome {
            path.push(i);
            collect_suffixes(sub, &format!("{suffix}{}", branch.candidate), path, out);
            path.pop();
        }
    }
}

pub fn oracle_backend(
    pop: &RaterPopulation,
    template: &PromptTemplate,
    mode: TreeMode,
) -> Result<OracleBackend> {
    let tree = label_tree_for(&pop.schema, &template.output, mode)?;
    let root_suffix = format!("{}{}", template.turn_open, template.output_prefix());
    let mut suffixes = Vec::new();
    collect_suffixes(&tree.root, &root_suffix, &mut Vec::new(), &mut suffixes);
    // longest first so the deepest matching node wins
    suffixes.sort_by_key(|s| std::cmp::Reverse(s.0.len()));
    let mut leaf_counts = vec![0usize; pop.schema.label_count()];
    for (_, idx) in tree.leaves() {
        leaf_counts[idx] += 1;
    }
    let leaf_shares = leaf_counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { 1.0 / c as f64 })
        .collect();
    Ok(OracleBackend {
        raters: pop
            .raters
            .iter()
            .map(|r| (r.rater_id.clone(), r.clone()))
            .collect(),
        schema: pop.schema.clone(),
        tree,
        suffixes,
        leaf_shares,
        fallbacks: AtomicUsize::new(0),
    })
}

impl OracleBackend {
    pub fn fallback_count(&self) -> usize {
        self.fallbacks.load(Ordering::Relaxed)
    }

    fn outcome_mass(&self, outcome: &BranchOutcome, dist: &[f64]) -> f64 {
        match outcome {
            BranchOutcome::Leaf(idx) => dist[*idx] * self.leaf_shares[*idx],
            BranchOutcome::Invalid => 0.0,
            BranchOutcome::Subtree(node) => self.node_mass(node, dist),
        }
    }

    fn node_mass(&self, node: &TreeNode, dist: &[f64]) -> f64 {
        node.branches
            .iter()
            .map(|b| self.outcome_mass(&b.outcome, dist))
            .sum()
    }

    fn node_at(&self, path: &[usize]) -> &TreeNode {
        let mut node = &self.tree.root;
        for &i in path {
            let BranchOutcome::Subtree(sub) = &node.branches[i].outcome else {
                unreachable!("suffix paths only traverse subtrees");
            };
            node = sub;
        }
        node
    }

    /// (rater distribution, node) for a query, or None when the prompt or
    /// prefix cannot be interpreted.
    fn resolve(&self, prefix: &str) -> Option<(Vec<f64>, &TreeNode)> {
        let rater_id = field_after(prefix, "annotator_id: ", &[';', '\n'], false)?;
        let rater = self.raters.get(rater_id)?;
        let difficulty: f64 = field_after(prefix, "\"difficulty\": \"", &['"'], true)?
            .parse()
            .ok()?;
        let (_, path) = self
            .suffixes
            .iter()
            .find(|(suffix, _)| prefix.ends_with(suffix))?;
        let dist = rater.response_distribution(&self.schema, difficulty);
        Some((dist, self.node_at(path)))
    }

    fn uniform_fallback(&self, candidates: usize) -> ContinuationResult {
        self.fallbacks.fetch_add(1, Ordering::Relaxed);
        ContinuationResult {
            probabilities: vec![1.0 / candidates as f64; candidates],
            other_mass: 0.0,
        }
    }
}

/// The text between a marker and the next terminator; `last` picks the final
/// occurrence of the marker instead of the first.
fn field_after<'a>(
    text: &'a str,
    marker: &str,
    terminators: &[char],
    last: bool,
) -> Option<&'a str> {
    let at = if last {
        text.rfind(marker)
    } else {
        text.find(marker)
    }?;
    let rest = &text[at + marker.len()..];
    let end = rest
        .find(|c| terminators.contains(&c))
        .unwrap_or(rest.len());
    let value = rest[..end].trim();
    (!value.is_empty()).then_some(value)
}

impl Backend for OracleBackend {
    fn query(
        &self,
        q: &ContinuationQuery,
    ) -> std::result::Result<ContinuationResult, BackendError> {
        q.validate()?;
        let Some((dist, node)) = self.resolve(&q.prefix) else {
            return Ok(self.uniform_fallback(q.candidates.len()));
        };
        let total = self.node_mass(node, &dist);
        if total <= 0.0 {
            return Ok(self.uniform_fallback(q.candidates.len()));
        }
        let probabilities: Vec<f64> = q
            .candidates
            .iter()
            .map(|c| {
                node.branches
                    .iter()
                    .find(|b| &b.candidate == c)
                    .map(|b| self.outcome_mass(&b.outcome, &dist) / total)
                    .unwrap_or(0.0)
            })
            .collect();
        let other_mass = (1.0 - probabilities.iter().sum::<f64>()).max(0.0);
        Ok(ContinuationResult {
            probabilities,
            other_mass,
        })
    }

    fn count_tokens(&self, text: &str) -> TokenCount {
        ApproxTokenCounter.count(text)
    }
}
