use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_err, read_jsonl, write_json, PipelineError, PromptRecord, StageTimings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub id: String,
    pub chunk_count: usize,
    pub alpha_c: f64,
    pub context_tokens: usize,
    pub selected_tokens: usize,
    /// Some selected chunk contains a gold answer.
    pub hit: bool,
    /// A gold answer occurs in the context but only across a chunk seam.
    pub boundary_split: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub documents: usize,
    pub hits: usize,
    /// `hits / documents`, or 0 with no documents.
    pub recall: f64,
    pub boundary_splits: usize,
    pub mean_alpha_c: f64,
    /// Mean of `selected_tokens / context_tokens`.
    pub mean_kept_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub summary: EvalSummary,
    /// Documents without gold answers, left out of every aggregate.
    pub excluded: Vec<String>,
    pub rows: Vec<EvalRow>,
    #[serde(default)]
    pub stage_seconds: StageTimings,
}

fn row(p: &PromptRecord) -> EvalRow {
    let answers: Vec<String> = p.answers.iter().map(|a| a.to_lowercase()).filter(|a| !a.is_empty()).collect();
    let chunk_texts: Vec<String> = p.chunks.iter().map(|c| c.text.to_lowercase()).collect();
    let in_chunk = |i: usize| answers.iter().any(|a| chunk_texts[i].contains(a.as_str()));
    let hit = p.selected.iter().any(|&i| i < chunk_texts.len() && in_chunk(i));
    let boundary_split = !hit && {
        let context = chunk_texts.concat();
        answers.iter().any(|a| context.contains(a.as_str()) && !chunk_texts.iter().any(|c| c.contains(a.as_str())))
    };
    EvalRow {
        id: p.id.clone(),
        chunk_count: p.chunks.len(),
        alpha_c: p.alpha_c,
        context_tokens: p.context_tokens,
        selected_tokens: p.selected_tokens,
        hit,
        boundary_split,
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 { 0.0 } else { sum / n as f64 }
}

/// Aggregates computed from per-document rows.
pub fn summarize(rows: &[EvalRow]) -> EvalSummary {
    let hits = rows.iter().filter(|r| r.hit).count();
    EvalSummary {
        documents: rows.len(),
        hits,
        recall: if rows.is_empty() { 0.0 } else { hits as f64 / rows.len() as f64 },
        boundary_splits: rows.iter().filter(|r| r.boundary_split).count(),
        mean_alpha_c: mean(rows.iter().map(|r| r.alpha_c)),
        mean_kept_fraction: mean(
            rows.iter()
                .map(|r| if r.context_tokens == 0 { 1.0 } else { r.selected_tokens as f64 / r.context_tokens as f64 }),
        ),
    }
}

/// Gold-chunk recall over prompts that carry answers. Matching is a
/// case-insensitive substring test against each chunk on its own.
pub fn evaluate(prompts: &[PromptRecord]) -> EvalReport {
    let (with, without): (Vec<&PromptRecord>, Vec<&PromptRecord>) =
        prompts.iter().partition(|p| p.answers.iter().any(|a| !a.is_empty()));
    let rows: Vec<EvalRow> = with.into_iter().map(row).collect();
    EvalReport {
        summary: summarize(&rows),
        excluded: without.into_iter().map(|p| p.id.clone()).collect(),
        rows,
        stage_seconds: StageTimings::default(),
    }
}

impl EvalReport {
    /// Aligned plain-text table followed by the aggregates.
    pub fn to_text(&self) -> String {
        let header = ["id", "chunks", "alpha_c", "selected", "hit", "split"];
        let cells: Vec<[String; 6]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.id.clone(),
                    r.chunk_count.to_string(),
                    format!("{:.3}", r.alpha_c),
                    r.selected_tokens.to_string(),
                    if r.hit { "yes" } else { "no" }.into(),
                    if r.boundary_split { "yes" } else { "no" }.into(),
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for c in &cells {
            for (w, cell) in widths.iter_mut().zip(c) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut out = String::new();
        let mut line = |cols: &[&str]| {
            let parts: Vec<String> = cols
                .iter()
                .zip(widths)
                .enumerate()
                .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            writeln!(out, "{}", parts.join("  ").trim_end()).unwrap();
        };
        line(&header);
        for c in &cells {
            line(&c.each_ref().map(String::as_str));
        }
        let s = &self.summary;
        writeln!(
            out,
            "\nrecall {:.3} ({}/{})  boundary splits {}  excluded {}",
            s.recall,
            s.hits,
            s.documents,
            s.boundary_splits,
            self.excluded.len()
        )
        .unwrap();
        writeln!(out, "mean alpha_c {:.3}  mean kept fraction {:.3}", s.mean_alpha_c, s.mean_kept_fraction).unwrap();
        for (stage, secs) in &self.stage_seconds.0 {
            writeln!(out, "stage {stage} {secs:.3}s").unwrap();
        }
        out
    }
}

/// Evaluates a prompts file and writes the JSON report to `output`, plus the
/// text table to `text_output` when given.
pub fn cmd_eval(input: &Path, output: &Path, text_output: Option<&Path>) -> Result<EvalReport, PipelineError> {
    let prompts: Vec<PromptRecord> = read_jsonl(input)?;
    let mut report = evaluate(&prompts);
    report.stage_seconds = StageTimings::load_for(input);
    write_json(output, &report)?;
    if let Some(t) = text_output {
        fs::write(t, report.to_text()).map_err(io_err(t))?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{ChunkerKind, SelectorKind};
    use crate::segment::Chunk;

    fn prompt(id: &str, texts: &[&str], selected: &[usize], answers: &[&str]) -> PromptRecord {
        let mut pos = 0;
        let chunks = texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let c = Chunk {
                    sentence_range: (i, i),
                    byte_start: pos,
                    byte_end: pos + t.len(),
                    token_len: t.split_whitespace().count(),
                    text: t.to_string(),
                };
                pos += t.len();
                c
            })
            .collect::<Vec<_>>();
        let context_tokens = chunks.iter().map(|c| c.token_len).sum();
        PromptRecord {
            id: id.into(),
            chunker: ChunkerKind::Dynamic,
            selector: SelectorKind::Classifier,
            alpha_c: 2.0,
            context_tokens,
            selected_tokens: selected.iter().map(|&i| chunks[i].token_len).sum(),
            prompt_tokens: 0,
            selected: selected.to_vec(),
            dropped: vec![],
            scores: vec![],
            answers: answers.iter().map(|s| s.to_string()).collect(),
            chunks,
            prompt: String::new(),
        }
    }

    #[test]
    fn hit_split_and_exclusion() {
        let prompts = [
            prompt("hit", &["The code is ", "Blue Fox 42. ", "Other."], &[1], &["blue fox 42"]),
            prompt("miss", &["The code is ", "Blue Fox 42. ", "Other."], &[2], &["blue fox 42"]),
            prompt("split", &["The code is Blue ", "Fox 42. Other."], &[0, 1], &["blue fox"]),
            prompt("none", &["Text."], &[0], &[]),
        ];
        let r = evaluate(&prompts);
        let flags: Vec<(bool, bool)> = r.rows.iter().map(|x| (x.hit, x.boundary_split)).collect();
        assert_eq!(flags, [(true, false), (false, false), (false, true)]);
        assert_eq!(r.excluded, ["none"]);
        assert_eq!(r.summary.documents, 3);
        assert_eq!(r.summary.hits, 1);
        assert!((r.summary.recall - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.summary.boundary_splits, 1);
    }

    #[test]
    fn summary_recomputes_from_rows() {
        let prompts = [
            prompt("a", &["x y ", "gold here"], &[1], &["GOLD"]),
            prompt("b", &["x y z ", "w"], &[0], &["gold"]),
        ];
        let r = evaluate(&prompts);
        assert_eq!(summarize(&r.rows), r.summary);
        let json = serde_json::to_string(&r).unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(summarize(&back.rows), back.summary);
        assert!((r.summary.mean_kept_fraction - (2.0 / 4.0 + 3.0 / 4.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn text_table_is_aligned() {
        let r = evaluate(&[
            prompt("short", &["gold"], &[0], &["gold"]),
            prompt("a-much-longer-id", &["x"], &[0], &["gold"]),
        ]);
        let text = r.to_text();
        let lines: Vec<&str> = text.lines().take(3).collect();
        assert!(lines.iter().all(|l| l.len() == lines[0].len()), "{text}");
        assert!(lines[1].starts_with("short "));
        assert!(text.contains("recall 0.500 (1/2)"));
    }
}
