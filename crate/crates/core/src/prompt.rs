//! Token counting and budgeted prompt assembly.
//!
//! Packing is greedy over a seeded shuffle of the rater's history: examples
//! are appended until the next one would push the full prompt past
//! `budget - generation_headroom`, recounting the assembled text each step so
//! the budget holds for any counter, not just additive ones.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Annotator, Instance, Rating};
use crate::error::{Error, Result};
use crate::schema::LabelSchema;
use crate::template::PromptTemplate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCount {
    pub count: usize,
    /// True when the count came from a byte-length heuristic rather than the
    /// backend's tokenizer.
    pub approximate: bool,
}

pub trait TokenCounter: Send + Sync {
    fn count(&self, text: &str) -> TokenCount;
}

/// Fallback counter: ⌈bytes / 4⌉.
#[derive(Debug, Clone, Copy, Default)]
pub struct ApproxTokenCounter;

impl TokenCounter for ApproxTokenCounter {
    fn count(&self, text: &str) -> TokenCount {
        TokenCount {
            count: text.len().div_ceil(4),
            approximate: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PackingConfig {
    pub budget_tokens: usize,
    /// Tokens reserved at the end of the budget for the forced continuations.
    pub generation_headroom: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_examples: Option<usize>,
}

impl Default for PackingConfig {
    fn default() -> Self {
        PackingConfig {
            budget_tokens: 3000,
            generation_headroom: 64,
            max_examples: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub token_count: usize,
    pub token_count_approximate: bool,
    pub example_count: usize,
    pub annotator_id: String,
    pub target_instance_id: String,
    pub seed: u64,
}

/// Assemble a prompt for one (annotator, target) pair from the annotator's
/// labeled history. `examples` pairs each rating with its instance; entries
/// rating the target instance are skipped.
#[allow(clippy::too_many_arguments)]
pub fn build_prompt(
    template: &PromptTemplate,
    schema: &LabelSchema,
    annotator: &Annotator,
    examples: &[(&Rating, &Instance)],
    target: &Instance,
    config: &PackingConfig,
    seed: u64,
    counter: &dyn TokenCounter,
) -> Result<RenderedPrompt> {
    for (rating, instance) in examples {
        if rating.annotator_id != annotator.annotator_id {
            return Err(Error::Validation(format!(
                "example rating by {} offered for a prompt of annotator {}",
                rating.annotator_id, annotator.annotator_id
            )));
        }
        if rating.instance_id != instance.instance_id {
            return Err(Error::Validation(format!(
                "example rating of {} paired with instance {}",
                rating.instance_id, instance.instance_id
            )));
        }
    }

    let header = template.render_header(annotator);
    let target_block = template.render_target(target)?;
    let limit = config
        .budget_tokens
        .saturating_sub(config.generation_headroom);

    let assemble = |rendered: &[String]| {
        let mut segments = Vec::with_capacity(rendered.len() + 2);
        segments.push(header.as_str());
        segments.extend(rendered.iter().map(String::as_str));
        segments.push(target_block.as_str());
        segments.join("\n")
    };

    let base = assemble(&[]);
    let base_count = counter.count(&base);
    if base_count.count > limit {
        return Err(Error::BudgetTooSmall {
            needed: base_count.count + config.generation_headroom,
            headroom: config.generation_headroom,
            budget: config.budget_tokens,
        });
    }

    let mut order: Vec<usize> = (0..examples.len())
        .filter(|&i| examples[i].0.instance_id != target.instance_id)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut rendered: Vec<String> = Vec::new();
    let mut text = base;
    let mut count = base_count;
    for i in order {
        if let Some(max) = config.max_examples {
            if rendered.len() >= max {
                break;
            }
        }
        let (rating, instance) = examples[i];
        rendered.push(template.render_example(schema, rating, instance)?);
        let candidate = assemble(&rendered);
        let candidate_count = counter.count(&candidate);
        if candidate_count.count > limit {
            rendered.pop();
            break;
        }
        text = candidate;
        count = candidate_count;
    }

    Ok(RenderedPrompt {
        text,
        token_count: count.count,
        token_count_approximate: count.approximate,
        example_count: rendered.len(),
        annotator_id: annotator.annotator_id.clone(),
        target_instance_id: target.instance_id.clone(),
        seed,
    })
}
