use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use viva_core::guard::PLAIN_TEXT;
use viva_core::transcript::Role;
use viva_core::{ExamConfig, ExamServices, Examination, SessionId, SessionState, TranscriptStore, Turn};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum AnswerStyle {
    /// Developed answers of well over thirty words.
    Honest,
    /// One-line answers.
    Terse,
}

const TOPICS: [&str; 6] = [
    "the dating of the earliest manuscript witnesses",
    "the economic pressures on smallholders in the region",
    "the reliability of the later commentaries",
    "the choice between archival and survey evidence",
    "the influence of the neighbouring legal traditions",
    "the limits of the statistical model used in the third section",
];

/// A generated essay that differs per session.
pub fn essay(index: usize) -> String {
    let topic = TOPICS[index % TOPICS.len()];
    format!(
        "Essay {index}. This essay examines {topic} and argues that the conventional account needs revision. \
The first section reviews the sources that earlier scholars relied upon and explains why several of them \
cannot bear the weight placed on them. The second section sets out an alternative reading that draws on \
evidence gathered specifically for essay {index}. The final section weighs the objections to this reading \
and concludes that it explains the record better than its rivals do."
    )
}

pub fn answer(style: AnswerStyle, index: usize, turn: u32) -> String {
    match style {
        AnswerStyle::Honest => format!(
            "In essay {index} I took that position because the evidence I gathered pointed consistently in one \
direction, and when I compared it with the older account the discrepancies were too large to ignore. \
For question {turn} the key point is that I tested the alternative explanations before settling on mine."
        ),
        AnswerStyle::Terse => format!("It seemed right for essay {index}."),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionRow {
    pub session_id: SessionId,
    pub state: SessionState,
    pub questions: u32,
    pub confidence: Option<u8>,
    /// Protocol invariants the session broke.
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct SimulationReport {
    pub rows: Vec<SessionRow>,
}

impl SimulationReport {
    pub fn all_completed(&self) -> bool {
        self.rows.iter().all(|r| r.state == SessionState::Completed && r.violations.is_empty())
    }
}

impl fmt::Display for SimulationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<16} {:<18} {:>9} {:>10}", "session", "state", "questions", "confidence")?;
        for row in &self.rows {
            let confidence = row.confidence.map_or("-".to_string(), |c| c.to_string());
            writeln!(f, "{:<16} {:<18} {:>9} {:>10}", row.session_id.as_str(), row.state.to_string(), row.questions, confidence)?;
            for violation in &row.violations {
                writeln!(f, "  violation: {violation}")?;
            }
        }
        let completed = self.rows.iter().filter(|r| r.state == SessionState::Completed).count();
        write!(f, "{completed}/{} sessions completed", self.rows.len())
    }
}

fn simulate_one(services: &ExamServices, config: &ExamConfig, index: usize, style: AnswerStyle) -> SessionRow {
    let session_id = SessionId::new(format!("sim-{index:05}")).expect("valid id");
    let mut violations = Vec::new();
    let mut confidence = None;
    let outcome = (|| -> Result<Examination, viva_core::ExamError> {
        let mut exam = Examination::create(services, session_id.clone(), config.clone())?;
        exam.submit(essay(index).as_bytes(), PLAIN_TEXT)?;
        loop {
            match exam.advance()? {
                Turn::Question(_) => {
                    let turn = exam.session().questions_asked;
                    exam.answer(&answer(style, index, turn))?;
                }
                Turn::Verdict(verdict) => {
                    confidence = Some(verdict.confidence_score());
                    return Ok(exam);
                }
                Turn::Aborted(_) => return Ok(exam),
            }
        }
    })();
    let (state, questions) = match outcome {
        Ok(exam) => {
            let entries = exam.log().entries();
            let asked = entries.iter().filter(|e| e.role == Role::Examiner).count() as u32;
            let verdicts: Vec<_> = entries.iter().enumerate().filter(|(_, e)| e.role == Role::Verdict).collect();
            if !(config.min_questions..=config.max_questions).contains(&asked) {
                violations.push(format!("{asked} questions asked"));
            }
            if verdicts.len() != 1 || verdicts[0].0 + 1 != entries.len() {
                violations.push("verdict is not the single final entry".to_string());
            }
            if !exam.log().verify().is_valid() {
                violations.push("hash chain does not verify".to_string());
            }
            (exam.state(), asked)
        }
        Err(err) => {
            violations.push(err.to_string());
            (SessionState::Aborted, 0)
        }
    };
    SessionRow { session_id, state, questions, confidence, violations }
}

/// Runs `sessions` mock examinations on `threads` worker threads.
pub fn simulate(sessions: usize, style: AnswerStyle, threads: usize) -> SimulationReport {
    let services = ExamServices::new(Arc::new(TranscriptStore::in_memory()));
    let config = ExamConfig::default();
    let next = AtomicUsize::new(0);
    let rows = Mutex::new(Vec::with_capacity(sessions));
    std::thread::scope(|scope| {
        for _ in 0..threads.clamp(1, sessions.max(1)) {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                if index >= sessions {
                    break;
                }
                let row = simulate_one(&services, &config, index, style);
                rows.lock().unwrap().push(row);
            });
        }
    });
    let mut rows = rows.into_inner().unwrap();
    rows.sort_by(|a, b| a.session_id.as_str().cmp(b.session_id.as_str()));
    SimulationReport { rows }
}
