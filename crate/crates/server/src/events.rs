use axum::response::sse::Event;
use futures::stream::{self, Stream};
use serde_json::json;
use std::collections::VecDeque;
use std::convert::Infallible;
use std::sync::Arc;
use viva_core::transcript::{Role, SessionLog, Subscription, SystemNotice, TranscriptEntry};

pub const ENTRY_EVENT: &str = "entry";
pub const FLAG_EVENT: &str = "flag";
pub const SEALED_EVENT: &str = "sealed";

struct Cursor {
    log: Arc<SessionLog>,
    subscription: Subscription,
    pending: VecDeque<Event>,
    done: bool,
}

fn is_submission_entry(entry: &TranscriptEntry) -> bool {
    entry.role == Role::System
        && matches!(SystemNotice::parse(&entry.content), Some(SystemNotice::SubmissionAccepted { .. }))
}

impl Cursor {
    fn enqueue(&mut self, entry: TranscriptEntry) {
        if is_submission_entry(&entry) {
            if let Some(stored) = self.log.header() {
                for flag in &stored.submission.sanitized.flags {
                    self.pending.push_back(Event::default().event(FLAG_EVENT).json_data(flag).expect("flag serializes"));
                }
            }
        }
        self.pending.push_back(
            Event::default()
                .id(entry.seq.to_string())
                .event(ENTRY_EVENT)
                .json_data(&entry)
                .expect("entry serializes"),
        );
    }
}

/// Transcript entries from `from_seq` as server-sent events.
///
/// Each entry carries its seq as the event id. Injection flags are sent just
/// before the submission entry, and a final `sealed` event ends the stream.
pub fn event_stream(log: Arc<SessionLog>, from_seq: u64) -> impl Stream<Item = Result<Event, Infallible>> {
    let subscription = log.subscribe(from_seq);
    let cursor = Cursor { log, subscription, pending: VecDeque::new(), done: false };
    stream::unfold(cursor, |mut cursor| async move {
        loop {
            if let Some(event) = cursor.pending.pop_front() {
                return Some((Ok(event), cursor));
            }
            if cursor.done {
                return None;
            }
            match cursor.subscription.next().await {
                Some(entry) => cursor.enqueue(entry),
                None => {
                    let data = json!({ "session_id": cursor.log.session_id(), "entries": cursor.log.len() });
                    cursor.pending.push_back(Event::default().event(SEALED_EVENT).data(data.to_string()));
                    cursor.done = true;
                }
            }
        }
    })
}
