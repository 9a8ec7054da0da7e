//! Trajectory trace ingestion and annotated emission.
//!
//! Traces are JSONL: one record per question, UTF-8, LF line endings. Each
//! response carries explicit steps (with lengths and, for scoring, recorded
//! probabilities) or raw `text` that the loader segments with the configured
//! policy. Per step, `p_without` must be present exactly when `p_full` is;
//! `p_full` is the response-level full-trajectory probability, repeated on
//! each step for streamability.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{InMemoryOracle, ResponseProbabilities};
use crate::pipeline::GroupScores;
use crate::trajectory::{
    detect_keywords, segment_steps, Group, Question, Response, SegmentationPolicy, Step,
};

/// One step as stored in a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceStep {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    pub length: u64,
    pub token_count: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub has_keyword: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_full: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_without: Option<f64>,
}

/// One response as stored in a trace file: explicit steps, or raw text for
/// the loader to segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceResponse {
    pub predicted_answer: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub steps: Vec<TraceStep>,
}

/// One question's record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub question_id: String,
    pub gold_answer: String,
    pub responses: Vec<TraceResponse>,
}

/// Loader options resolved from the run configuration.
#[derive(Debug, Clone)]
pub struct TraceOptions {
    pub keywords: Vec<String>,
    pub segmentation: SegmentationPolicy,
}

/// A parsed record: the group plus its recorded probabilities (when every
/// step carried them).
#[derive(Debug, Clone)]
pub struct LoadedRecord {
    pub record: TraceRecord,
    pub group: Group,
    pub probabilities: Option<Vec<ResponseProbabilities>>,
}

impl LoadedRecord {
    pub fn oracle(&self) -> Option<InMemoryOracle> {
        self.probabilities.as_ref().map(|probs| {
            InMemoryOracle::single_group(self.group.question.id.clone(), probs.clone())
        })
    }
}

/// Parses one JSONL line into a loaded record.
pub fn parse_record(line: &str, options: &TraceOptions) -> Result<LoadedRecord> {
    let record: TraceRecord = serde_json::from_str(line)
        .map_err(|e| Error::InvalidData(format!("malformed record: {e}")))?;
    let loaded = build_group(record, options)?;
    Ok(loaded)
}

fn build_group(record: TraceRecord, options: &TraceOptions) -> Result<LoadedRecord> {
    if record.responses.is_empty() {
        return Err(Error::EmptyGroup("trace record has no responses"));
    }
    let question = Question::new(record.question_id.clone(), "", record.gold_answer.clone())?;
    let mut responses = Vec::with_capacity(record.responses.len());
    let mut probs: Vec<ResponseProbabilities> = Vec::with_capacity(record.responses.len());
    let mut all_probs_present = true;
    let mut expanded = record.clone();
    for (i, response) in record.responses.iter().enumerate() {
        let steps = if response.steps.is_empty() {
            let text = response.text.as_deref().ok_or_else(|| {
                Error::InvalidData(format!("response {i} has neither steps nor text"))
            })?;
            let spans = segment_steps(text, options.segmentation)?;
            let steps: Vec<TraceStep> = spans
                .into_iter()
                .map(|span| {
                    let words = span.split_whitespace().count().max(1) as u64;
                    TraceStep {
                        has_keyword: Some(detect_keywords(&span, &options.keywords)),
                        text: Some(span),
                        length: words,
                        token_count: words,
                        p_full: None,
                        p_without: None,
                    }
                })
                .collect();
            expanded.responses[i].steps = steps.clone();
            steps
        } else {
            response.steps.clone()
        };

        let mut parsed_steps = Vec::with_capacity(steps.len());
        let mut p_full: Option<f64> = None;
        let mut p_without = Vec::with_capacity(steps.len());
        let mut step_probs_present = true;
        for (j, step) in steps.iter().enumerate() {
            match (step.p_full, step.p_without) {
                (Some(full), Some(without)) => {
                    for &p in &[full, without] {
                        if !(0.0..=1.0).contains(&p) {
                            return Err(Error::InvalidData(format!(
                                "response {i} step {j}: probability {p} outside [0, 1]"
                            )));
                        }
                    }
                    p_full.get_or_insert(full);
                    p_without.push(without);
                }
                (None, None) => step_probs_present = false,
                _ => {
                    return Err(Error::InvalidData(format!(
                        "response {i} step {j}: p_full and p_without must be present together"
                    )));
                }
            }
            let has_keyword = match (step.has_keyword, &step.text) {
                (Some(flag), _) => flag,
                (None, Some(text)) => detect_keywords(text, &options.keywords),
                (None, None) => false,
            };
            let mut parsed = Step::new(j, step.length, step.token_count, has_keyword)?;
            if let Some(text) = &step.text {
                parsed = parsed.with_text(text.clone());
            }
            parsed_steps.push(parsed);
        }
        if step_probs_present {
            if let Some(full) = p_full {
                probs.push(ResponseProbabilities::new(full, p_without)?);
            } else {
                all_probs_present = false;
            }
        } else {
            all_probs_present = false;
        }
        responses.push(Response::with_answer_check(
            parsed_steps,
            response.predicted_answer.clone(),
            &record.gold_answer,
        )?);
    }
    let group = Group::new(question, responses)?;
    Ok(LoadedRecord {
        record: expanded,
        group,
        probabilities: all_probs_present.then_some(probs),
    })
}

/// Annotated output: the input record plus everything the pipeline derived.
#[derive(Debug, Clone, Serialize)]
pub struct AnnotatedRecord<'a> {
    pub question_id: &'a str,
    pub gold_answer: &'a str,
    pub seed: u64,
    pub config_hash: &'a str,
    pub difficulty: f64,
    pub responses: Vec<AnnotatedResponse<'a>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnnotatedResponse<'a> {
    pub predicted_answer: &'a str,
    pub is_correct: bool,
    pub steps: Vec<AnnotatedStep>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnnotatedStep {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    pub length: u64,
    pub token_count: u64,
    pub has_keyword: bool,
    pub p_full: f64,
    pub p_without: f64,
    pub d: f64,
    pub d_tilde: f64,
    pub d_prime: f64,
    pub reward: f64,
    pub reward_normalized: f64,
    pub advantage: f64,
    pub effective: bool,
}

/// Assembles the annotated form of one scored record.
pub fn annotate<'a>(
    loaded: &'a LoadedRecord,
    probs: &[ResponseProbabilities],
    scores: &GroupScores,
    seed: u64,
    config_hash: &'a str,
) -> AnnotatedRecord<'a> {
    let responses = loaded
        .group
        .responses
        .iter()
        .enumerate()
        .map(|(i, response)| AnnotatedResponse {
            predicted_answer: &response.predicted_answer,
            is_correct: response.is_correct,
            steps: response
                .steps
                .iter()
                .enumerate()
                .map(|(j, step)| AnnotatedStep {
                    text: step.text.clone(),
                    length: step.length,
                    token_count: step.token_count,
                    has_keyword: step.has_keyword,
                    p_full: probs[i].p_full,
                    p_without: probs[i].p_without[j],
                    d: scores.raw_importance[i][j],
                    d_tilde: scores.importance_with_bonus[i][j],
                    d_prime: scores.normalized_importance[i][j],
                    reward: scores.table.rewards[i][j],
                    reward_normalized: scores.table.normalized[i][j],
                    advantage: scores.table.advantages[i][j],
                    effective: scores.effective[i][j],
                })
                .collect(),
        })
        .collect();
    AnnotatedRecord {
        question_id: &loaded.group.question.id,
        gold_answer: &loaded.group.question.gold_answer,
        seed,
        config_hash,
        difficulty: scores.difficulty,
        responses,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::default_keywords;

    fn options() -> TraceOptions {
        TraceOptions {
            keywords: default_keywords(),
            segmentation: SegmentationPolicy::BlankLine,
        }
    }

    #[test]
    fn parses_explicit_steps_with_probabilities() {
        let line = r#"{"question_id":"q1","gold_answer":"42","responses":[
            {"predicted_answer":"42","steps":[
                {"length":10,"token_count":10,"p_full":0.8,"p_without":0.5},
                {"length":5,"token_count":5,"has_keyword":true,"p_full":0.8,"p_without":0.8}
            ]}
        ]}"#
        .replace('\n', " ");
        let loaded = parse_record(&line, &options()).unwrap();
        assert_eq!(loaded.group.size(), 1);
        assert!(loaded.group.responses[0].is_correct);
        let probs = loaded.probabilities.as_ref().unwrap();
        assert_eq!(probs[0].p_full, 0.8);
        assert_eq!(probs[0].p_without, vec![0.5, 0.8]);
        assert!(loaded.group.responses[0].steps[1].has_keyword);
    }

    #[test]
    fn segments_text_only_responses() {
        let line = r#"{"question_id":"q2","gold_answer":"9","responses":[
            {"predicted_answer":"8","text":"First try squares.\n\nBut wait, check parity."}
        ]}"#
        .replace('\n', " ");
        let loaded = parse_record(&line, &options()).unwrap();
        let response = &loaded.group.responses[0];
        assert_eq!(response.step_count(), 2);
        assert!(!response.is_correct);
        assert_eq!(response.steps[0].length, 3);
        assert!(!response.steps[0].has_keyword);
        assert!(response.steps[1].has_keyword);
        assert!(loaded.probabilities.is_none());
        // The expanded record now carries the derived steps.
        assert_eq!(loaded.record.responses[0].steps.len(), 2);
    }

    #[test]
    fn rejects_half_present_probabilities() {
        let line = r#"{"question_id":"q","gold_answer":"1","responses":[{"predicted_answer":"1","steps":[{"length":3,"token_count":3,"p_full":0.5}]}]}"#;
        let err = parse_record(line, &options()).unwrap_err();
        assert!(matches!(err, Error::InvalidData(_)));
    }

    #[test]
    fn rejects_unknown_fields_and_bad_json() {
        let bad = r#"{"question_id":"q","gold_answer":"1","responses":[],"extra":1}"#;
        assert!(parse_record(bad, &options()).is_err());
        assert!(parse_record("{truncated", &options()).is_err());
    }

    #[test]
    fn correctness_uses_canonical_answer_match() {
        let line = r#"{"question_id":"q","gold_answer":"Two Words","responses":[{"predicted_answer":"  two   WORDS ","steps":[{"length":1,"token_count":1}]}]}"#;
        let loaded = parse_record(line, &options()).unwrap();
        assert!(loaded.group.responses[0].is_correct);
    }
}
