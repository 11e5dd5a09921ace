use super::{EngineOutput, FinalAssessment, VerdictError};
use serde_json::{Map, Value};

/// Why an output was rejected as malformed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseError {
    Empty,
    NotJson(String),
    NotAnObject,
    /// A JSON object or verdict key appears alongside other text.
    MixedContent,
    WrongKeys(Vec<String>),
    AssessmentNotString,
    ScoreNotInteger,
    Invalid(VerdictError),
    /// A verdict arrived before the question floor was reached.
    Premature { asked: u32, min: u32 },
    /// A question arrived after the questioning was complete.
    QuestionAfterConclusion,
}

impl std::fmt::Display for ParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParseError::Empty => write!(f, "empty output"),
            ParseError::NotJson(e) => write!(f, "invalid JSON: {e}"),
            ParseError::NotAnObject => write!(f, "JSON value is not an object"),
            ParseError::MixedContent => write!(f, "verdict JSON mixed with other text"),
            ParseError::WrongKeys(keys) => {
                write!(f, "expected exactly keys assessment and confidence_score, found [{}]", keys.join(", "))
            }
            ParseError::AssessmentNotString => write!(f, "assessment is not a string"),
            ParseError::ScoreNotInteger => write!(f, "confidence_score is not an integer"),
            ParseError::Invalid(e) => write!(f, "{e}"),
            ParseError::Premature { asked, min } => {
                write!(f, "verdict after {asked} questions; at least {min} are required")
            }
            ParseError::QuestionAfterConclusion => {
                write!(f, "question issued after the questioning was complete")
            }
        }
    }
}

/// Outcome of classifying one raw provider message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classification {
    pub output: EngineOutput,
    /// The message was wrapped in a markdown code fence.
    pub fenced: bool,
}

/// Classifies provider output as a question, a verdict, or malformed.
pub fn classify_output(raw: &str) -> EngineOutput {
    classify(raw).output
}

pub fn classify(raw: &str) -> Classification {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return malformed(raw, ParseError::Empty, false);
    }
    let (body, fenced) = match strip_fence(trimmed) {
        Some(inner) => (inner.trim(), true),
        None => (trimmed, false),
    };

    match serde_json::from_str::<Value>(body) {
        Ok(Value::Object(map)) => {
            return match verdict_from_object(map) {
                Ok(verdict) => Classification { output: EngineOutput::Verdict(verdict), fenced },
                Err(err) => malformed(raw, err, fenced),
            }
        }
        Ok(_) => return malformed(raw, ParseError::NotAnObject, fenced),
        Err(_) if contains_json_object(body) => return malformed(raw, ParseError::MixedContent, fenced),
        Err(err) if body.starts_with('{') => {
            return malformed(raw, ParseError::NotJson(err.to_string()), fenced)
        }
        Err(_) => {}
    }

    if fenced || contains_json_object(trimmed) || mentions_verdict_key(trimmed) {
        let err = if contains_json_object(trimmed) || mentions_verdict_key(trimmed) {
            ParseError::MixedContent
        } else {
            ParseError::NotJson("fenced block is not JSON".into())
        };
        return malformed(raw, err, fenced);
    }
    Classification { output: EngineOutput::Question(trimmed.to_string()), fenced: false }
}

fn malformed(raw: &str, error: ParseError, fenced: bool) -> Classification {
    Classification { output: EngineOutput::Malformed { raw: raw.to_string(), error }, fenced }
}

/// Strips one surrounding ``` or ~~~ fence with an optional info string.
fn strip_fence(text: &str) -> Option<&str> {
    let marker = ["```", "~~~"].into_iter().find(|m| text.starts_with(m))?;
    if text.len() < 2 * marker.len() || !text.ends_with(marker) {
        return None;
    }
    let inner = &text[marker.len()..text.len() - marker.len()];
    let info_len = inner.find(|c: char| !c.is_ascii_alphanumeric() && c != '_' && c != '-').unwrap_or(inner.len());
    let inner = &inner[info_len..];
    if inner.contains(marker) {
        return None;
    }
    Some(inner)
}

fn verdict_from_object(map: Map<String, Value>) -> Result<FinalAssessment, ParseError> {
    let mut keys: Vec<String> = map.keys().cloned().collect();
    keys.sort();
    if keys != ["assessment", "confidence_score"] {
        return Err(ParseError::WrongKeys(keys));
    }
    let assessment = map["assessment"].as_str().ok_or(ParseError::AssessmentNotString)?;
    let score = match &map["confidence_score"] {
        Value::Number(n) if n.is_i64() || n.is_u64() => n.as_i64().unwrap_or(i64::MAX),
        _ => return Err(ParseError::ScoreNotInteger),
    };
    FinalAssessment::from_parts(assessment.to_string(), score).map_err(ParseError::Invalid)
}

/// True when some `{` in `text` opens a complete JSON object.
pub(crate) fn contains_json_object(text: &str) -> bool {
    text.match_indices('{').any(|(i, _)| {
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        matches!(stream.next(), Some(Ok(Value::Object(_))))
    })
}

fn mentions_verdict_key(text: &str) -> bool {
    text.contains("\"confidence_score\"") || text.contains("\"assessment\"")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paragraph() -> String {
        "The candidate answered every question with specific reference to the text, \
         explained the reasoning behind each interpretive choice, and extended the \
         argument with a parallel not drawn in the original work, which is strong \
         evidence of genuine authorship."
            .to_string()
    }

    fn verdict_json(score: &str) -> String {
        format!("{{\"assessment\": \"{}\", \"confidence_score\": {score}}}", paragraph())
    }

    #[test]
    fn plain_verdict() {
        match classify_output(&verdict_json("95")) {
            EngineOutput::Verdict(v) => assert_eq!(v.confidence_score(), 95),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn question_text() {
        let q = "Why did you rely on interviews rather than a survey in your analysis?";
        assert_eq!(classify_output(q), EngineOutput::Question(q.to_string()));
        assert_eq!(classify_output(&format!("  {q}\n")), EngineOutput::Question(q.to_string()));
    }

    #[test]
    fn out_of_range_score_is_malformed() {
        let raw = r#"{"assessment":"ok","confidence_score":101}"#;
        match classify_output(raw) {
            EngineOutput::Malformed { raw: kept, .. } => assert_eq!(kept, raw),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            classify_output(&verdict_json("101")),
            EngineOutput::Malformed { error: ParseError::Invalid(VerdictError::ScoreOutOfRange(101)), .. }
        ));
        assert!(matches!(
            classify_output(&verdict_json("-1")),
            EngineOutput::Malformed { error: ParseError::Invalid(VerdictError::ScoreOutOfRange(-1)), .. }
        ));
    }

    #[test]
    fn non_integer_scores_are_malformed() {
        for score in ["95.0", "\"95\"", "null", "9.5e1", "true"] {
            assert!(
                matches!(
                    classify_output(&verdict_json(score)),
                    EngineOutput::Malformed { error: ParseError::ScoreNotInteger, .. }
                ),
                "{score}"
            );
        }
    }

    #[test]
    fn fenced_verdict_parses_and_is_reported() {
        let c = classify(&format!("```json\n{}\n```", verdict_json("80")));
        assert!(c.fenced);
        assert!(matches!(c.output, EngineOutput::Verdict(_)));
    }

    #[test]
    fn mixed_question_and_json_is_malformed() {
        let raw = format!("Thank you. {}", verdict_json("80"));
        assert!(matches!(
            classify_output(&raw),
            EngineOutput::Malformed { error: ParseError::MixedContent, .. }
        ));
        let trailing = format!("{} Any questions?", verdict_json("80"));
        assert!(matches!(classify_output(&trailing), EngineOutput::Malformed { .. }));
    }

    #[test]
    fn extra_or_missing_keys() {
        let extra = format!(
            "{{\"assessment\": \"{}\", \"confidence_score\": 80, \"notes\": \"\"}}",
            paragraph()
        );
        assert!(matches!(
            classify_output(&extra),
            EngineOutput::Malformed { error: ParseError::WrongKeys(_), .. }
        ));
        assert!(matches!(
            classify_output(r#"{"confidence_score": 80}"#),
            EngineOutput::Malformed { error: ParseError::WrongKeys(_), .. }
        ));
    }

    #[test]
    fn short_assessment_is_malformed() {
        assert!(matches!(
            classify_output(r#"{"assessment": "Good.", "confidence_score": 80}"#),
            EngineOutput::Malformed { error: ParseError::Invalid(VerdictError::AssessmentTooShort(5)), .. }
        ));
    }

    #[test]
    fn braceless_verdict_is_not_a_question() {
        let raw = format!("\"assessment\": \"{}\", \"confidence_score\": 95", paragraph());
        assert!(matches!(classify_output(&raw), EngineOutput::Malformed { .. }));
    }

    #[test]
    fn braces_that_are_not_json_stay_questions() {
        let q = "How does the set {a, b} relate to your argument in the second section?";
        assert_eq!(classify_output(q), EngineOutput::Question(q.into()));
    }

    #[test]
    fn empty_output_is_malformed() {
        assert!(matches!(
            classify_output(" \n "),
            EngineOutput::Malformed { error: ParseError::Empty, .. }
        ));
    }

    #[test]
    fn fence_variants() {
        let body = verdict_json("70");
        for wrapped in [
            format!("```\n{body}\n```"),
            format!("```JSON\n{body}\n```"),
            format!("~~~json\n{body}\n~~~"),
            format!("```json {body}```"),
            format!("\n\n```json\r\n{body}\r\n```\n"),
        ] {
            assert!(matches!(classify_output(&wrapped), EngineOutput::Verdict(_)), "{wrapped:?}");
        }
        // Two fences are not a single surrounding fence.
        let doubled = format!("```json\n{body}\n```\n```json\n{body}\n```");
        assert!(matches!(classify_output(&doubled), EngineOutput::Malformed { .. }));
    }
}
