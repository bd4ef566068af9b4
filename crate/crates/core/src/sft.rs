//! Loss-masked training sequence export.
//!
//! Training sequences reuse the prompt layout: a header, then labeled
//! examples wrapped in turn markers. Only the output spans (and their
//! closing marker) are marked trainable; an external trainer applies loss
//! to those segments and masks the rest.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Instance, Rating, SplitId};
use crate::error::{Error, Result};
use crate::hash::derive_seed;
use crate::prompt::TokenCounter;
use crate::template::PromptTemplate;

/// One span of a training sequence, flagged trainable or masked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedSegment {
    pub text: String,
    pub train: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceMeta {
    pub dataset: String,
    pub annotator_id: String,
    pub group_index: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedSequence {
    pub segments: Vec<MaskedSegment>,
    pub meta: SequenceMeta,
}

impl MaskedSequence {
    /// Full sequence text, exactly as a trainer would see it.
    pub fn text(&self) -> String {
        self.segments.iter().map(|s| s.text.as_str()).collect()
    }

    /// Number of trainable spans, which equals the number of examples.
    pub fn example_count(&self) -> usize {
        self.segments.iter().filter(|s| s.train).count()
    }

    /// True when every trainable segment begins right after `turn_open`.
    pub fn trainable_spans_follow(&self, turn_open: &str) -> bool {
        let mut before = String::new();
        for seg in &self.segments {
            if seg.train && !before.ends_with(turn_open) {
                return false;
            }
            before.push_str(&seg.text);
        }
        true
    }
}

/// Hyperparameter metadata recorded next to every exported file. This
/// crate never trains; the descriptor just tells the trainer what the
/// sequences were built for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingDescriptor {
    pub max_length: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub gradient_accumulation: usize,
}

impl Default for TrainingDescriptor {
    fn default() -> Self {
        TrainingDescriptor {
            max_length: 1024,
            learning_rate: 1e-6,
            batch_size: 1,
            gradient_accumulation: 4,
        }
    }
}

/// Export result: the sequences plus any per-annotator skip warnings.
#[derive(Debug, Clone)]
pub struct SftExport {
    pub sequences: Vec<MaskedSequence>,
    pub warnings: Vec<String>,
}

fn assemble_sequence(
    template: &PromptTemplate,
    dataset: &Dataset,
    annotator_id: &str,
    examples: &[(&Rating, &Instance)],
    group_index: usize,
    seed: u64,
) -> Result<MaskedSequence> {
    let annotator = dataset.annotator(annotator_id)?;
    let mut segments = Vec::with_capacity(1 + examples.len() * 2);
    let mut masked = template.render_header(annotator);
    for (rating, instance) in examples {
        masked.push('\n');
        masked.push_str(&template.render_input(instance)?);
        masked.push('\n');
        masked.push_str(&template.turn_open);
        segments.push(MaskedSegment {
            text: std::mem::take(&mut masked),
            train: false,
        });
        let mut output = template.render_output(&dataset.schema, rating)?;
        output.push_str(&template.turn_close);
        segments.push(MaskedSegment {
            text: output,
            train: true,
        });
    }
    Ok(MaskedSequence {
        segments,
        meta: SequenceMeta {
            dataset: dataset.name.clone(),
            annotator_id: annotator_id.to_string(),
            group_index,
            seed,
        },
    })
}

fn shuffled_history<'a>(
    dataset: &'a Dataset,
    annotator_id: &str,
    seed: u64,
) -> Result<(Vec<(&'a Rating, &'a Instance)>, u64)> {
    let train = dataset.split(SplitId::Train)?;
    let history = dataset.rater_history(annotator_id, None)?;
    let mut pairs: Vec<(&Rating, &Instance)> = history
        .into_iter()
        .map(|r| {
            let instance = train.instances.get(&r.instance_id).ok_or_else(|| {
                Error::Validation(format!(
                    "rating references unknown instance {}",
                    r.instance_id
                ))
            })?;
            Ok((r, instance))
        })
        .collect::<Result<_>>()?;
    let item_seed = derive_seed(seed, &[&dataset.name, annotator_id]);
    pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(item_seed));
    Ok((pairs, item_seed))
}

/// Annotators of the train split, in split order.
fn train_annotators(dataset: &Dataset) -> Result<Vec<String>> {
    let train = dataset.split(SplitId::Train)?;
    if train.ratings.is_empty() {
        return Err(Error::Validation(format!(
            "dataset {} has no train ratings to export",
            dataset.name
        )));
    }
    Ok(train.annotators.keys().cloned().collect())
}

/// One sequence per annotator holding their whole shuffled history,
/// truncated to `max_len_tokens` by dropping trailing examples.
pub fn export_per_annotator(
    dataset: &Dataset,
    template: &PromptTemplate,
    max_len_tokens: usize,
    seed: u64,
    counter: &dyn TokenCounter,
) -> Result<SftExport> {
    let mut sequences = Vec::new();
    let mut warnings = Vec::new();
    for annotator_id in train_annotators(dataset)? {
        let (pairs, item_seed) = shuffled_history(dataset, &annotator_id, seed)?;
        if pairs.is_empty() {
            warnings.push(format!(
                "annotator {annotator_id} has no labeled ratings; skipped"
            ));
            continue;
        }
        let mut keep = pairs.len();
        let seq = loop {
            if keep == 0 {
                break None;
            }
            let seq = assemble_sequence(
                template,
                dataset,
                &annotator_id,
                &pairs[..keep],
                0,
                item_seed,
            )?;
            if counter.count(&seq.text()).count <= max_len_tokens {
                break Some(seq);
            }
            keep -= 1;
        };
        match seq {
            Some(seq) => sequences.push(seq),
            None => warnings.push(format!(
                "annotator {annotator_id}: header plus one example exceeds {max_len_tokens} tokens; skipped"
            )),
        }
    }
    Ok(SftExport {
        sequences,
        warnings,
    })
}

/// Each annotator's shuffled history chunked into groups of `group_size`,
/// one sequence per group. The last group may be short.
pub fn export_grouped(
    dataset: &Dataset,
    template: &PromptTemplate,
    group_size: usize,
    seed: u64,
) -> Result<SftExport> {
    if group_size == 0 {
        return Err(Error::Config("group_size must be at least 1".into()));
    }
    let mut sequences = Vec::new();
    let mut warnings = Vec::new();
    for annotator_id in train_annotators(dataset)? {
        let (pairs, item_seed) = shuffled_history(dataset, &annotator_id, seed)?;
        if pairs.is_empty() {
            warnings.push(format!(
                "annotator {annotator_id} has no labeled ratings; skipped"
            ));
            continue;
        }
        for (group_index, chunk) in pairs.chunks(group_size).enumerate() {
            sequences.push(assemble_sequence(
                template,
                dataset,
                &annotator_id,
                chunk,
                group_index,
                item_seed,
            )?);
        }
    }
    Ok(SftExport {
        sequences,
        warnings,
    })
}

/// Path of the descriptor written next to an exported sequence file.
pub fn descriptor_path(path: &Path) -> PathBuf {
    path.with_extension("descriptor.json")
}

/// Write sequences as JSONL plus the hyperparameter descriptor.
pub fn emit(
    sequences: &[MaskedSequence],
    path: &Path,
    descriptor: &TrainingDescriptor,
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for seq in sequences {
        serde_json::to_writer(&mut out, seq)
            .map_err(|e| Error::parse(path, "serialize", e.to_string()))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    let desc_path = descriptor_path(path);
    let text = serde_json::to_string_pretty(descriptor)
        .map_err(|e| Error::parse(&desc_path, "serialize", e.to_string()))?;
    fs::write(&desc_path, text).map_err(|e| Error::io(&desc_path, e))?;
    Ok(())
}

/// Read back a file written by [`emit`].
pub fn load_sequences(path: &Path) -> Result<Vec<MaskedSequence>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut sequences = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let seq: MaskedSequence = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, format!("line {}", lineno + 1), e.to_string()))?;
        sequences.push(seq);
    }
    Ok(sequences)
}
