use super::{FinalAssessment, PromptBundle, PromptRole, ProviderError, ProviderPort, DOCUMENT_END, DOCUMENT_START};
use regex::Regex;
use std::collections::VecDeque;
use std::sync::{Mutex, OnceLock};

pub const MOCK_MODEL: &str = "mock-examiner-1";

/// Sentences with at least this many words are quoted by the mock examiner.
pub const SIGNIFICANT_SENTENCE_WORDS: usize = 12;
/// Answers with at least this many words count as developed.
pub const DEVELOPED_ANSWER_WORDS: usize = 30;

const FALLBACK_BUDGET: usize = 5;
const MAX_QUOTE_WORDS: usize = 60;

/// Deterministic examiner used in tests, simulations and offline runs.
///
/// Question k quotes the k-th significant sentence of the submission
/// (wrapping around). Once the number of candidate answers reaches the
/// maximum budget stated in the system prompt it returns a verdict scored
/// `min(100, 40 + 10 * developed answers)`.
#[derive(Debug, Clone, Default)]
pub struct MockProvider;

impl MockProvider {
    pub fn new() -> Self {
        Self
    }
}

fn budget_from_prompt(system_prompt: &str) -> usize {
    static TOTAL: OnceLock<Regex> = OnceLock::new();
    let re = TOTAL.get_or_init(|| Regex::new(r"Ask a\s+total of (\d+)(?:-(\d+))? questions").unwrap());
    re.captures(system_prompt)
        .and_then(|c| c.get(2).or(c.get(1)))
        .and_then(|m| m.as_str().parse().ok())
        .unwrap_or(FALLBACK_BUDGET)
}

fn submission_text(bundle: &PromptBundle) -> &str {
    let Some(doc) = bundle.conversation.iter().find(|m| m.role == PromptRole::Submission) else {
        return "";
    };
    let content = doc.content.as_str();
    let open = format!("\n{DOCUMENT_START}\n");
    let start = content.find(&open).map(|i| i + open.len()).unwrap_or(0);
    let end = content.rfind(&format!("\n{DOCUMENT_END}")).filter(|&e| e >= start).unwrap_or(content.len());
    content[start..end].trim()
}

/// Splits text into whitespace-collapsed sentences ending at `.`, `!` or `?`.
pub fn sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for word in text.split_whitespace() {
        current.push(word);
        let end = word.trim_end_matches(['"', '\'', ')', ']', '\u{201d}', '\u{2019}']);
        if end.ends_with(['.', '!', '?']) {
            out.push(current.join(" "));
            current.clear();
        }
    }
    if !current.is_empty() {
        out.push(current.join(" "));
    }
    out
}

fn significant_sentences(text: &str) -> Vec<String> {
    let all = sentences(text);
    let long: Vec<String> = all
        .iter()
        .filter(|s| s.split_whitespace().count() >= SIGNIFICANT_SENTENCE_WORDS)
        .cloned()
        .collect();
    if long.is_empty() {
        all
    } else {
        long
    }
}

fn quote(sentence: &str) -> String {
    let words: Vec<&str> = sentence.split_whitespace().collect();
    let mut quoted = words[..words.len().min(MAX_QUOTE_WORDS)].join(" ");
    if words.len() > MAX_QUOTE_WORDS {
        quoted.push_str(" ...");
    }
    quoted.replace('{', "(").replace('}', ")")
}

pub(crate) fn mock_question(text: &str, index: usize) -> String {
    let candidates = significant_sentences(text);
    let sentence = if candidates.is_empty() {
        "your opening statement".to_string()
    } else {
        quote(&candidates[index % candidates.len()])
    };
    format!(
        "In your work you wrote: \"{sentence}\" Why did you take this position, and how does it \
         support the overall argument of the piece?"
    )
}

pub(crate) fn mock_verdict(answers: &[&str]) -> FinalAssessment {
    let developed = answers
        .iter()
        .filter(|a| a.split_whitespace().count() >= DEVELOPED_ANSWER_WORDS)
        .count();
    let score = (40 + 10 * developed).min(100) as u8;
    let brief = answers.len() - developed;
    let assessment = format!(
        "The candidate answered {} questions about the submitted work. {developed} of the answers \
         were developed at length ({DEVELOPED_ANSWER_WORDS} words or more) and engaged with the \
         passages quoted from the text, while {brief} were brief. This assessment was produced by \
         the deterministic mock examiner: the confidence score is derived mechanically from the \
         number of developed answers and expresses no judgement about the quality of the work.",
        answers.len()
    );
    FinalAssessment::new(assessment, score).expect("mock verdict is valid")
}

impl ProviderPort for MockProvider {
    fn provider_id(&self) -> &str {
        "mock"
    }

    fn model(&self) -> &str {
        MOCK_MODEL
    }

    fn complete(&self, bundle: &PromptBundle) -> Result<String, ProviderError> {
        let budget = budget_from_prompt(&bundle.system_prompt);
        let answers: Vec<&str> = bundle
            .conversation
            .iter()
            .filter(|m| m.role == PromptRole::Candidate)
            .map(|m| m.content.as_str())
            .collect();
        if answers.len() >= budget {
            return Ok(mock_verdict(&answers).to_json());
        }
        let asked = bundle.count(PromptRole::Examiner);
        Ok(mock_question(submission_text(bundle), asked))
    }
}

/// Replays a fixed list of responses, recording every request.
#[derive(Debug)]
pub struct ScriptedProvider {
    id: String,
    responses: Mutex<VecDeque<Result<String, ProviderError>>>,
    requests: Mutex<Vec<PromptBundle>>,
}

impl ScriptedProvider {
    pub fn new<I>(responses: I) -> Self
    where
        I: IntoIterator<Item = Result<String, ProviderError>>,
    {
        Self {
            id: "scripted".to_string(),
            responses: Mutex::new(responses.into_iter().collect()),
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn from_texts<I, S>(texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(texts.into_iter().map(|t| Ok(t.into())))
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn calls(&self) -> usize {
        self.requests.lock().unwrap().len()
    }

    pub fn requests(&self) -> Vec<PromptBundle> {
        self.requests.lock().unwrap().clone()
    }

    pub fn push(&self, response: Result<String, ProviderError>) {
        self.responses.lock().unwrap().push_back(response);
    }
}

impl ProviderPort for ScriptedProvider {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn model(&self) -> &str {
        "scripted"
    }

    fn complete(&self, bundle: &PromptBundle) -> Result<String, ProviderError> {
        self.requests.lock().unwrap().push(bundle.clone());
        self.responses
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| Err(ProviderError::Transport("script exhausted".into())))
    }
}
