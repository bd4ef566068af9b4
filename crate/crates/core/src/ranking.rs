//! Significance-clustered leaderboards: systems sorted by mean loss and
//! compared sequentially to the current cluster leader with the signed-rank
//! test; a significant difference opens the next rank.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{mean_ci, ItemScore};
use crate::wilcoxon::{wilcoxon_signed_rank, WilcoxonMode};

pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub name: String,
    pub mean: f64,
    pub ci_halfwidth: f64,
    pub rank: usize,
    /// p-value against the cluster leader (1.0 for leaders themselves).
    pub p_vs_leader: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedLeaderboard {
    pub alpha: f64,
    pub entries: Vec<LeaderboardEntry>,
}

impl RankedLeaderboard {
    pub fn rank_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.rank)
    }
}

/// Rank systems by paired item scores. Scores must align item-for-item
/// across systems (same items, same order).
pub fn rank_clusters(
    systems: &[(String, Vec<ItemScore>)],
    alpha: f64,
    mode: WilcoxonMode,
) -> Result<RankedLeaderboard> {
    if systems.is_empty() {
        return Err(Error::Validation("no systems to rank".into()));
    }
    let reference = &systems[0].1;
    for (name, scores) in systems {
        if scores.len() != reference.len() {
            return Err(Error::DimensionMismatch(format!(
                "system {name} scored {} items, expected {}",
                scores.len(),
                reference.len()
            )));
        }
        for (a, b) in scores.iter().zip(reference) {
            if a.instance_id != b.instance_id || a.annotator_id != b.annotator_id {
                return Err(Error::Validation(format!(
                    "system {name} is not item-paired with {}: {:?} vs {:?}",
                    systems[0].0,
                    (&a.instance_id, &a.annotator_id),
                    (&b.instance_id, &b.annotator_id),
                )));
            }
        }
    }

    let mut summaries: Vec<(String, Vec<f64>, f64, f64)> = systems
        .iter()
        .map(|(name, scores)| {
            let values: Vec<f64> = scores.iter().map(|s| s.score).collect();
            let (mean, hw) = mean_ci(scores)?;
            Ok((name.clone(), values, mean, hw))
        })
        .collect::<Result<_>>()?;
    summaries.sort_by(|a, b| a.2.partial_cmp(&b.2).unwrap().then_with(|| a.0.cmp(&b.0)));

    let mut entries: Vec<LeaderboardEntry> = Vec::with_capacity(summaries.len());
    let mut rank = 1;
    let mut leader_values: Vec<f64> = summaries[0].1.clone();
    for (i, (name, values, mean, hw)) in summaries.into_iter().enumerate() {
        let p = if i == 0 {
            1.0
        } else {
            wilcoxon_signed_rank(&values, &leader_values, mode)?
        };
        if i > 0 && p < alpha {
            rank += 1;
            leader_values = values.clone();
        }
        entries.push(LeaderboardEntry {
            name,
            mean,
            ci_halfwidth: hw,
            rank,
            p_vs_leader: p,
        });
    }
    Ok(RankedLeaderboard { alpha, entries })
}

/// Mean rank per system across several leaderboards (systems missing from a
/// board are skipped for that board). Sorted ascending by average rank, then
/// name.
pub fn average_ranks(boards: &[(String, RankedLeaderboard)]) -> Vec<(String, f64)> {
    let mut totals: IndexMap<String, (usize, usize)> = IndexMap::new();
    for (_, board) in boards {
        for entry in &board.entries {
            let t = totals.entry(entry.name.clone()).or_insert((0, 0));
            t.0 += entry.rank;
            t.1 += 1;
        }
    }
    let mut out: Vec<(String, f64)> = totals
        .into_iter()
        .map(|(name, (sum, count))| (name, sum as f64 / count as f64))
        .collect();
    out.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    out
}

/// Aligned text table: rank, name, mean ± halfwidth, p against leader.
pub fn render_leaderboard(board: &RankedLeaderboard) -> String {
    let mut rows: Vec<[String; 4]> = vec![[
        "rank".into(),
        "system".into(),
        "score".into(),
        "p_vs_leader".into(),
    ]];
    for e in &board.entries {
        rows.push([
            e.rank.to_string(),
            e.name.clone(),
            format!("{:.4} ±{:.4}", e.mean, e.ci_halfwidth),
            format!("{:.4}", e.p_vs_leader),
        ]);
    }
    let mut widths = [0usize; 4];
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .zip(widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}
