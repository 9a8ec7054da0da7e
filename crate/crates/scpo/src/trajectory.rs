//! Trajectory data model: questions, steps, responses, and rollout groups,
//! plus step segmentation, keyword detection, group difficulty, and the
//! warm-up shortest-correct selection rule.
//!
//! Step lengths are counts in the unit declared by the run configuration
//! (tokens when a tokenizer-produced count is supplied, whitespace-delimited
//! words otherwise); `token_count` equals `length` when the unit is tokens.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A question paired with its canonical gold answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub gold_answer: String,
}

impl Question {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        gold_answer: impl Into<String>,
    ) -> Result<Self> {
        let q = Self {
            id: id.into(),
            text: text.into(),
            gold_answer: gold_answer.into(),
        };
        if q.id.is_empty() {
            return Err(Error::InvalidData("question id is empty".into()));
        }
        if q.gold_answer.is_empty() {
            return Err(Error::InvalidData("gold answer is empty".into()));
        }
        Ok(q)
    }
}

/// One reasoning step of a response.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    /// 0-based position within the response.
    pub index: usize,
    /// Step text; absent for synthetic runs.
    pub text: Option<String>,
    /// Step length in the configured unit, >= 1.
    pub length: u64,
    /// Token count used for advantage broadcast, >= 1.
    pub token_count: u64,
    /// Whether the step contains a reasoning-transition keyword.
    pub has_keyword: bool,
}

impl Step {
    pub fn new(index: usize, length: u64, token_count: u64, has_keyword: bool) -> Result<Self> {
        if length == 0 {
            return Err(Error::InvalidData(format!("step {index} has length 0")));
        }
        if token_count == 0 {
            return Err(Error::InvalidTokenCount { step: index });
        }
        Ok(Self {
            index,
            text: None,
            length,
            token_count,
            has_keyword,
        })
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.text = Some(text.into());
        self
    }
}

/// One sampled response: an ordered reasoning trajectory plus its answer.
#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub steps: Vec<Step>,
    pub predicted_answer: String,
    pub is_correct: bool,
}

impl Response {
    pub fn new(steps: Vec<Step>, predicted_answer: impl Into<String>, is_correct: bool) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::InvalidData("response has no steps".into()));
        }
        for (j, step) in steps.iter().enumerate() {
            if step.index != j {
                return Err(Error::InvalidData(format!(
                    "step index {} at position {j}",
                    step.index
                )));
            }
        }
        Ok(Self {
            steps,
            predicted_answer: predicted_answer.into(),
            is_correct,
        })
    }

    /// Builds a response whose correctness flag comes from canonical answer
    /// comparison against the gold answer.
    pub fn with_answer_check(
        steps: Vec<Step>,
        predicted_answer: impl Into<String>,
        gold_answer: &str,
    ) -> Result<Self> {
        let predicted = predicted_answer.into();
        let is_correct = answers_match(&predicted, gold_answer);
        Self::new(steps, predicted, is_correct)
    }

    /// Number of steps, k_i.
    pub fn step_count(&self) -> usize {
        self.steps.len()
    }

    /// Total length across steps, in the configured unit.
    pub fn total_length(&self) -> u64 {
        self.steps.iter().map(|s| s.length).sum()
    }

    pub fn step_lengths(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.length as f64).collect()
    }

    pub fn token_counts(&self) -> Vec<u64> {
        self.steps.iter().map(|s| s.token_count).collect()
    }

    pub fn keyword_flags(&self) -> Vec<bool> {
        self.steps.iter().map(|s| s.has_keyword).collect()
    }
}

/// The G responses sampled for one question — the scope over which every
/// group-relative statistic is computed.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub question: Question,
    pub responses: Vec<Response>,
}

impl Group {
    pub fn new(question: Question, responses: Vec<Response>) -> Result<Self> {
        if responses.is_empty() {
            return Err(Error::EmptyGroup("group has no responses"));
        }
        Ok(Self {
            question,
            responses,
        })
    }

    /// Group size G.
    pub fn size(&self) -> usize {
        self.responses.len()
    }

    pub fn correct_count(&self) -> usize {
        self.responses.iter().filter(|r| r.is_correct).count()
    }

    /// Problem difficulty rho = 1 - N_c / N, in [0, 1].
    pub fn difficulty(&self) -> f64 {
        1.0 - self.correct_count() as f64 / self.size() as f64
    }

    pub fn correctness_flags(&self) -> Vec<bool> {
        self.responses.iter().map(|r| r.is_correct).collect()
    }
}

/// Free-function form of `Group::difficulty` for empty-input checking.
pub fn difficulty(responses: &[Response]) -> Result<f64> {
    if responses.is_empty() {
        return Err(Error::EmptyGroup("difficulty of zero responses"));
    }
    let correct = responses.iter().filter(|r| r.is_correct).count();
    Ok(1.0 - correct as f64 / responses.len() as f64)
}

/// How raw response text is cut into reasoning steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentationPolicy {
    /// Split on blank lines, collapsing runs of consecutive delimiters.
    #[default]
    BlankLine,
    /// Split after sentence terminators (. ! ?) followed by whitespace.
    Sentence,
    /// Split on lines consisting solely of `---`.
    ExplicitMarker,
}

/// Cuts `text` into trimmed, non-empty step spans.
///
/// Text with no delimiter yields a single step containing the whole text.
pub fn segment_steps(text: &str, policy: SegmentationPolicy) -> Result<Vec<String>> {
    if text.trim().is_empty() {
        return Err(Error::EmptyInput);
    }
    let spans = match policy {
        SegmentationPolicy::BlankLine => split_on_blank_lines(text),
        SegmentationPolicy::Sentence => split_sentences(text),
        SegmentationPolicy::ExplicitMarker => split_on_marker(text, "---"),
    };
    debug_assert!(spans.iter().all(|s| !s.trim().is_empty()));
    Ok(spans)
}

fn split_on_blank_lines(text: &str) -> Vec<String> {
    let mut spans = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            flush_span(&mut spans, &mut current);
        } else {
            current.push(line);
        }
    }
    flush_span(&mut spans, &mut current);
    spans
}

fn split_on_marker(text: &str, marker: &str) -> Vec<String> {
    let mut spans = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim() == marker {
            flush_span(&mut spans, &mut current);
        } else {
            current.push(line);
        }
    }
    flush_span(&mut spans, &mut current);
    spans
}

fn flush_span(spans: &mut Vec<String>, current: &mut Vec<&str>) {
    if !current.is_empty() {
        let joined = current.join("\n");
        let trimmed = joined.trim();
        if !trimmed.is_empty() {
            spans.push(trimmed.to_string());
        }
        current.clear();
    }
}

fn split_sentences(text: &str) -> Vec<String> {
    let mut spans = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let at_end = chars.peek().is_none();
            let before_space = chars.peek().is_some_and(|&(_, next)| next.is_whitespace());
            if at_end || before_space {
                let span = text[start..i + c.len_utf8()].trim();
                if !span.is_empty() {
                    spans.push(span.to_string());
                }
                start = i + c.len_utf8();
            }
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        spans.push(tail.to_string());
    }
    if spans.is_empty() {
        spans.push(text.trim().to_string());
    }
    spans
}

/// True iff any keyword occurs in `step_text`, case-insensitively, bounded
/// by non-alphanumeric characters (or the text edges) on both sides.
pub fn detect_keywords(step_text: &str, keywords: &[String]) -> bool {
    if step_text.is_empty() {
        return false;
    }
    let text = step_text.to_lowercase();
    keywords.iter().any(|keyword| {
        let needle = keyword.trim().to_lowercase();
        if needle.is_empty() {
            return false;
        }
        text.match_indices(&needle).any(|(at, hit)| {
            let before_ok = text[..at]
                .chars()
                .next_back()
                .is_none_or(|c| !c.is_alphanumeric());
            let after_ok = text[at + hit.len()..]
                .chars()
                .next()
                .is_none_or(|c| !c.is_alphanumeric());
            before_ok && after_ok
        })
    })
}

/// Default reasoning-transition keywords; override via configuration.
pub fn default_keywords() -> Vec<String> {
    [
        "but",
        "however",
        "wait",
        "alternatively",
        "on second thought",
        "let me verify",
        "check",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

/// Picks the correct response with minimal total length not exceeding
/// `max_length`; ties break toward the lowest index. Returns `None` when no
/// correct response qualifies, which drops the question from the warm-up set.
pub fn select_shortest_correct(responses: &[Response], max_length: u64) -> Option<&Response> {
    responses
        .iter()
        .filter(|r| r.is_correct && r.total_length() <= max_length)
        .min_by_key(|r| r.total_length())
}

/// Canonical answer form: lowercase with whitespace runs collapsed.
pub fn canonicalize_answer(answer: &str) -> String {
    answer
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Exact match on canonical answer forms.
pub fn answers_match(predicted: &str, gold: &str) -> bool {
    canonicalize_answer(predicted) == canonicalize_answer(gold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn step(index: usize, length: u64) -> Step {
        Step::new(index, length, length, false).unwrap()
    }

    fn response(lengths: &[u64], is_correct: bool) -> Response {
        let steps = lengths
            .iter()
            .enumerate()
            .map(|(j, &l)| step(j, l))
            .collect();
        Response::new(steps, if is_correct { "1" } else { "0" }, is_correct).unwrap()
    }

    fn group(flags: &[bool]) -> Group {
        let q = Question::new("q", "", "1").unwrap();
        let responses = flags.iter().map(|&c| response(&[5], c)).collect();
        Group::new(q, responses).unwrap()
    }

    #[test]
    fn segment_blank_line_single_delimiter() {
        let spans = segment_steps("A.\n\nB.", SegmentationPolicy::BlankLine).unwrap();
        assert_eq!(spans, vec!["A.", "B."]);
    }

    #[test]
    fn segment_no_delimiter_is_one_step() {
        let spans = segment_steps("A.", SegmentationPolicy::BlankLine).unwrap();
        assert_eq!(spans, vec!["A."]);
    }

    #[test]
    fn segment_collapses_delimiter_runs() {
        let spans = segment_steps("x\n\n\n\ny", SegmentationPolicy::BlankLine).unwrap();
        assert_eq!(spans, vec!["x", "y"]);
    }

    #[test]
    fn segment_empty_input_errors() {
        assert!(matches!(
            segment_steps("", SegmentationPolicy::BlankLine),
            Err(Error::EmptyInput)
        ));
        assert!(matches!(
            segment_steps("  \n \n ", SegmentationPolicy::BlankLine),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn segment_sentence_policy() {
        let spans = segment_steps(
            "First we expand. Then 3.14 appears! Done?",
            SegmentationPolicy::Sentence,
        )
        .unwrap();
        assert_eq!(
            spans,
            vec!["First we expand.", "Then 3.14 appears!", "Done?"]
        );
    }

    #[test]
    fn segment_explicit_marker_policy() {
        let spans = segment_steps("a\n---\nb\n---\n---\nc", SegmentationPolicy::ExplicitMarker)
            .unwrap();
        assert_eq!(spans, vec!["a", "b", "c"]);
    }

    /// Reference splitter: an independent regex-free pass that splits on
    /// maximal runs of newlines interleaved with blank whitespace.
    fn reference_blank_line_split(text: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut buf = String::new();
        let mut blank_run = false;
        for line in text.split('\n') {
            if line.trim().is_empty() {
                blank_run = true;
                continue;
            }
            if blank_run && !buf.is_empty() {
                out.push(buf.trim().to_string());
                buf.clear();
            }
            blank_run = false;
            if !buf.is_empty() {
                buf.push('\n');
            }
            buf.push_str(line);
        }
        if !buf.trim().is_empty() {
            out.push(buf.trim().to_string());
        }
        out
    }

    #[test]
    fn segment_matches_reference_splitter_on_corpus() {
        let corpus = [
            "x\n\n\n\ny",
            "a\nb\n\nc",
            "one block only",
            "lead\n\nmid\n \t \ntail\n\n",
            "\n\nstart after delimiters",
            "inner  spaces\n\n  padded span  \n\nlast",
        ];
        for text in corpus {
            let got = segment_steps(text, SegmentationPolicy::BlankLine).unwrap();
            assert_eq!(got, reference_blank_line_split(text), "corpus text {text:?}");
        }
    }

    #[test]
    fn resegmentation_is_idempotent() {
        let texts = ["A.\n\nB.", "x\n\n\n\ny", "a\nb\n\nc\n\nd"];
        for text in texts {
            let first = segment_steps(text, SegmentationPolicy::BlankLine).unwrap();
            let rejoined = first.join("\n\n");
            let second = segment_steps(&rejoined, SegmentationPolicy::BlankLine).unwrap();
            assert_eq!(first, second);
        }
    }

    #[test]
    fn keywords_literal_match() {
        let kws = vec!["but".to_string(), "however".to_string()];
        assert!(detect_keywords("But wait, check the sign.", &kws));
        assert!(!detect_keywords("The subset has 3 elements.", &kws));
    }

    #[test]
    fn keywords_case_insensitive_at_word_boundary() {
        let kws = vec!["however".to_string()];
        assert!(detect_keywords("However,", &kws));
        assert!(!detect_keywords("howevers", &kws));
        assert!(detect_keywords("and HOWEVER!", &kws));
    }

    #[test]
    fn keywords_empty_text_is_false() {
        assert!(!detect_keywords("", &["but".to_string()]));
    }

    /// Word-boundary regex oracle, hand-compiled: a keyword matches iff it
    /// appears delimited by non-alphanumerics. Cross-checks `detect_keywords`
    /// on a 50-sentence fixture.
    #[test]
    fn keywords_agree_with_boundary_oracle_on_fixture() {
        let kws = default_keywords();
        let mut fixture = Vec::new();
        let stems = [
            "However, the sum is even",
            "the subset has 3 elements",
            "but wait",
            "rebutting the claim", // "but" embedded in a word: no match
            "ON SECOND THOUGHT we retry",
            "check: 4 > 3",
            "checksum mismatch", // "check" embedded: no match
            "alternatively!",
            "waiting room", // "wait" embedded: no match
            "let me verify the base case",
        ];
        for i in 0..50 {
            fixture.push(format!("{} #{i}", stems[i % stems.len()]));
        }
        let oracle = |text: &str, kw: &str| -> bool {
            let text = text.to_lowercase();
            let kw = kw.to_lowercase();
            let bytes: Vec<char> = text.chars().collect();
            let needle: Vec<char> = kw.chars().collect();
            (0..bytes.len().saturating_sub(needle.len() - 1)).any(|i| {
                bytes[i..i + needle.len()] == needle[..]
                    && (i == 0 || !bytes[i - 1].is_alphanumeric())
                    && (i + needle.len() == bytes.len()
                        || !bytes[i + needle.len()].is_alphanumeric())
            })
        };
        for text in &fixture {
            let expected = kws.iter().any(|kw| oracle(text, kw));
            assert_eq!(detect_keywords(text, &kws), expected, "fixture text {text:?}");
        }
    }

    #[test]
    fn difficulty_all_correct_is_zero() {
        assert_eq!(group(&[true; 8]).difficulty(), 0.0);
    }

    #[test]
    fn difficulty_none_correct_is_one() {
        assert_eq!(group(&[false; 8]).difficulty(), 1.0);
    }

    #[test]
    fn difficulty_six_of_eight() {
        // Direct evaluation: 1 - 6/8.
        let flags = [true, true, true, true, true, true, false, false];
        assert!((group(&flags).difficulty() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn difficulty_empty_group_errors() {
        assert!(matches!(difficulty(&[]), Err(Error::EmptyGroup(_))));
    }

    #[test]
    fn difficulty_is_permutation_invariant_and_flip_adds_one_over_g() {
        let mut rng = crate::seeding::stream_rng(11, "difficulty-prop", &[]);
        for _ in 0..200 {
            let g = rng.random_range(1..=12usize);
            let mut flags: Vec<bool> = (0..g).map(|_| rng.random::<f64>() < 0.6).collect();
            let rho = difficulty(&flags.iter().map(|&c| response(&[3], c)).collect::<Vec<_>>())
                .unwrap();
            // Permute.
            flags.reverse();
            let rho_perm =
                difficulty(&flags.iter().map(|&c| response(&[3], c)).collect::<Vec<_>>()).unwrap();
            assert_eq!(rho, rho_perm);
            // Flip one correct -> incorrect raises rho by exactly 1/G.
            if let Some(pos) = flags.iter().position(|&c| c) {
                flags[pos] = false;
                let rho_flip =
                    difficulty(&flags.iter().map(|&c| response(&[3], c)).collect::<Vec<_>>())
                        .unwrap();
                // Exact up to one rounding of the 1/G increment.
                assert!((rho_flip - (rho_perm + 1.0 / g as f64)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn shortest_correct_under_cap() {
        let responses = vec![
            response(&[600, 600], true),
            response(&[800], true),
            response(&[5000], true),
        ];
        let picked = select_shortest_correct(&responses, 4096).unwrap();
        assert_eq!(picked.total_length(), 800);
    }

    #[test]
    fn shortest_correct_none_when_no_correct() {
        let responses = vec![response(&[10], false), response(&[20], false)];
        assert!(select_shortest_correct(&responses, 4096).is_none());
    }

    #[test]
    fn shortest_correct_tie_breaks_to_earlier_index() {
        let responses = vec![
            response(&[900], false),
            response(&[800], true),
            response(&[800], true),
        ];
        let picked = select_shortest_correct(&responses, 4096).unwrap();
        assert!(std::ptr::eq(picked, &responses[1]));
    }

    #[test]
    fn shortest_correct_matches_exhaustive_scan() {
        let mut rng = crate::seeding::stream_rng(7, "select-prop", &[]);
        for _ in 0..300 {
            let g = rng.random_range(1..=10usize);
            let responses: Vec<Response> = (0..g)
                .map(|_| {
                    let k = rng.random_range(1..=4usize);
                    let lengths: Vec<u64> =
                        (0..k).map(|_| rng.random_range(1..=2000u64)).collect();
                    response(&lengths, rng.random::<f64>() < 0.5)
                })
                .collect();
            let cap = rng.random_range(1..=4000u64);
            let picked = select_shortest_correct(&responses, cap);
            // Exhaustive scan oracle.
            let mut best: Option<usize> = None;
            for (i, r) in responses.iter().enumerate() {
                if r.is_correct && r.total_length() <= cap {
                    let better = match best {
                        None => true,
                        Some(b) => r.total_length() < responses[b].total_length(),
                    };
                    if better {
                        best = Some(i);
                    }
                }
            }
            match (picked, best) {
                (None, None) => {}
                (Some(p), Some(b)) => {
                    assert!(std::ptr::eq(p, &responses[b]));
                    assert!(p.is_correct && p.total_length() <= cap);
                }
                other => panic!("selection mismatch: {other:?}"),
            }
        }
    }

    #[test]
    fn answer_canonicalization() {
        assert!(answers_match("  42 ", "42"));
        assert!(answers_match("Two  Words", "two words"));
        assert!(!answers_match("42", "43"));
    }

    #[test]
    fn constructors_enforce_invariants() {
        assert!(Question::new("", "t", "a").is_err());
        assert!(Question::new("q", "t", "").is_err());
        assert!(Step::new(0, 0, 1, false).is_err());
        assert!(matches!(
            Step::new(0, 1, 0, false),
            Err(Error::InvalidTokenCount { step: 0 })
        ));
        assert!(Response::new(vec![], "a", true).is_err());
        let q = Question::new("q", "", "1").unwrap();
        assert!(matches!(Group::new(q, vec![]), Err(Error::EmptyGroup(_))));
    }
}
