use crate::error::{read_file, timestamp, CliError};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use viva_core::clock::{Clock, SteppingClock};
use viva_core::engine::{LiveConfig, LiveProvider};
use viva_core::guard::{RuleSet, PLAIN_TEXT};
use viva_core::transcript::TranscriptDocument;
use viva_core::{ExamConfig, ExamServices, Examination, SessionId, SessionState, TranscriptStore, Turn};
use viva_server::ServiceConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ProviderChoice {
    Mock,
    Live,
}

impl ProviderChoice {
    pub fn id(self) -> &'static str {
        match self {
            ProviderChoice::Mock => "mock",
            ProviderChoice::Live => "live",
        }
    }
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunArgs {
    /// Plain-text submission to examine.
    pub submission: PathBuf,
    #[arg(long, value_enum, default_value = "mock")]
    pub provider: ProviderChoice,
    /// Fewest questions before a verdict is accepted.
    #[arg(long)]
    pub min: Option<u32>,
    /// Most questions the examiner may ask.
    #[arg(long)]
    pub max: Option<u32>,
    /// Academic level the questions are pitched at.
    #[arg(long)]
    pub context: Option<String>,
    #[arg(long)]
    pub answer_timeout_secs: Option<u64>,
    #[arg(long)]
    pub session_id: Option<String>,
    /// Start of a stepping clock, for reproducible transcripts.
    #[arg(long)]
    pub clock_start: Option<String>,
    /// Service configuration file (rules, limits, live provider, clock).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Transcript destination; defaults to `<submission>.transcript.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    pub fn new(submission: impl Into<PathBuf>) -> Self {
        Self {
            submission: submission.into(),
            provider: ProviderChoice::Mock,
            min: None,
            max: None,
            context: None,
            answer_timeout_secs: None,
            session_id: None,
            clock_start: None,
            config: None,
            out: None,
        }
    }

    pub fn exam_config(&self) -> ExamConfig {
        let mut config = ExamConfig { provider_id: self.provider.id().to_string(), ..ExamConfig::default() };
        if let Some(min) = self.min {
            config.min_questions = min;
        }
        if let Some(max) = self.max {
            config.max_questions = max;
        }
        if let Some(context) = &self.context {
            config.academic_context = context.clone();
        }
        if let Some(secs) = self.answer_timeout_secs {
            config.answer_timeout_secs = secs;
        }
        config
    }

    pub fn transcript_path(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| transcript_path_for(&self.submission))
    }
}

pub fn transcript_path_for(submission: &Path) -> PathBuf {
    let mut name = submission.file_name().unwrap_or_default().to_os_string();
    name.push(".transcript.json");
    submission.with_file_name(name)
}

pub fn load_service_config(path: Option<&Path>) -> Result<ServiceConfig, CliError> {
    let config = match path {
        Some(path) => ServiceConfig::load(path).map_err(|e| CliError::Config(e.to_string()))?,
        None => ServiceConfig::default(),
    };
    config.apply_env().map_err(|e| CliError::Config(e.to_string()))
}

fn services(config: &ServiceConfig, provider: ProviderChoice) -> Result<ExamServices, CliError> {
    let mut services = ExamServices::new(Arc::new(TranscriptStore::in_memory()));
    services.max_submission_bytes = config.max_submission_bytes;
    if let Some(path) = &config.rules_path {
        services = services.with_rules(RuleSet::load(path).map_err(|e| CliError::Config(e.to_string()))?);
    }
    if provider == ProviderChoice::Live {
        let live = match &config.live {
            Some(live) => live.clone().with_env_key(),
            None => LiveConfig::from_env().map_err(|e| CliError::Config(e.to_string()))?,
        };
        services.register(Arc::new(LiveProvider::new(live)));
    }
    Ok(services)
}

#[derive(Debug)]
pub struct RunOutcome {
    pub session_id: SessionId,
    pub state: SessionState,
    pub questions_asked: u32,
    pub transcript_path: PathBuf,
}

/// Reads one answer: lines up to the next blank line, skipping leading blank
/// lines. `None` at end of input.
fn read_answer(input: &mut dyn BufRead) -> Result<Option<String>, CliError> {
    let mut lines = Vec::new();
    loop {
        let mut line = String::new();
        if input.read_line(&mut line).map_err(CliError::Terminal)? == 0 {
            break;
        }
        let line = line.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            if lines.is_empty() {
                continue;
            }
            break;
        }
        lines.push(line.to_string());
    }
    Ok((!lines.is_empty()).then(|| lines.join("\n")))
}

/// Conducts a full examination on `input`/`output`, then writes the transcript.
pub fn run(args: &RunArgs, input: &mut dyn BufRead, output: &mut dyn Write) -> Result<RunOutcome, CliError> {
    let service_config = load_service_config(args.config.as_deref())?;
    let bytes = read_file(&args.submission)?;
    let services = services(&service_config, args.provider)?;
    let session_id = match &args.session_id {
        Some(id) => SessionId::new(id.clone())?,
        None => SessionId::random(),
    };
    let start = match &args.clock_start {
        Some(value) => Some(timestamp(value)?),
        None => service_config.deterministic_start().map_err(|e| CliError::Config(e.to_string()))?,
    };
    let config = args.exam_config();
    let max = config.max_questions;
    let mut exam = match start {
        Some(start) => {
            let clock: Arc<dyn Clock> = Arc::new(SteppingClock::new(start));
            Examination::create_with_clock(&services, session_id.clone(), config, clock)?
        }
        None => Examination::create(&services, session_id.clone(), config)?,
    };

    let transcript_path = args.transcript_path();
    let result = conduct(&mut exam, &bytes, max, input, output);
    let doc = TranscriptDocument::from_store(&services.store, &session_id).map_err(viva_core::ExamError::from)?;
    if !doc.entries.is_empty() {
        std::fs::write(&transcript_path, doc.to_json())
            .map_err(|source| CliError::Write { path: transcript_path.clone(), source })?;
    }
    result?;
    let say = |output: &mut dyn Write, text: String| writeln!(output, "{text}").map_err(CliError::Terminal);
    match exam.state() {
        SessionState::Completed => say(output, "The examination is complete. Thank you.".into())?,
        state => say(output, format!("The examination ended in state {state}."))?,
    }
    say(output, format!("Transcript written to {}", transcript_path.display()))?;
    Ok(RunOutcome {
        session_id,
        state: exam.state(),
        questions_asked: exam.session().questions_asked,
        transcript_path,
    })
}

fn conduct(
    exam: &mut Examination,
    bytes: &[u8],
    max: u32,
    input: &mut dyn BufRead,
    output: &mut dyn Write,
) -> Result<(), CliError> {
    let submission = exam.submit(bytes, PLAIN_TEXT)?;
    writeln!(output, "Submission received ({} words).", submission.word_count).map_err(CliError::Terminal)?;
    loop {
        match exam.advance()? {
            Turn::Question(question) => {
                let n = exam.session().questions_asked;
                writeln!(output, "\nQuestion {n} of at most {max}:\n{question}\n").map_err(CliError::Terminal)?;
                writeln!(output, "(finish your answer with an empty line)").map_err(CliError::Terminal)?;
                output.flush().map_err(CliError::Terminal)?;
                match read_answer(input)? {
                    Some(answer) => exam.answer(&answer)?,
                    None => {
                        exam.abort("candidate input closed")?;
                        return Ok(());
                    }
                }
            }
            Turn::Verdict(_) | Turn::Aborted(_) => return Ok(()),
        }
    }
}
