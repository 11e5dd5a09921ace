use proptest::prelude::*;
use std::sync::Arc;
use viva_core::clock::{parse_timestamp, SteppingClock};
use viva_core::exam::{ExamServices, Examination, Turn};
use viva_core::session::SessionId;
use viva_core::transcript::{
    verify_chain_parts, verify_document, ChainBreak, ChainStatus, Role, StoreError, StoredHeader,
    TranscriptDocument, TranscriptEntry, TranscriptStore,
};
use viva_core::ExamConfig;

const ESSAY: &str = "Debt release in the sabbatical year shaped how creditors behaved toward the poor. \
    The legal device that circumvented the release shows how economic pressure reshaped religious law.";

fn id(s: &str) -> SessionId {
    SessionId::new(s).unwrap()
}

fn completed(name: &str) -> (StoredHeader, Vec<TranscriptEntry>) {
    let services = ExamServices::new(Arc::new(TranscriptStore::in_memory()))
        .with_clock(Arc::new(SteppingClock::new(parse_timestamp("2025-06-01T08:00:00.000000Z").unwrap())));
    let mut exam = Examination::create(&services, id(name), ExamConfig::default()).unwrap();
    exam.submit(ESSAY.as_bytes(), "text/plain").unwrap();
    let mut turn = exam.advance().unwrap();
    while let Turn::Question(_) = turn {
        exam.answer("Because the text says so, and here is why in some detail.").unwrap();
        turn = exam.advance().unwrap();
    }
    let log = exam.log();
    ((*log.header().unwrap()).clone(), log.entries())
}

fn status(header: &StoredHeader, entries: &[TranscriptEntry]) -> ChainStatus {
    verify_chain_parts(&header.header.session_id, Some(header), entries).status
}

#[test]
fn completed_session_chain_is_valid() {
    let (header, entries) = completed("ok");
    assert_eq!(status(&header, &entries), ChainStatus::Valid);
    assert_eq!(entries[0].prev_hash, "0".repeat(64));
    for pair in entries.windows(2) {
        assert_eq!(pair[1].prev_hash, pair[0].entry_hash);
    }
}

/// Every single-byte change to any stored entry line is caught, either by
/// strict parsing or by chain verification.
#[test]
fn every_single_byte_mutation_is_detected() {
    let (header, entries) = completed("mut");
    let lines: Vec<Vec<u8>> = entries.iter().map(|e| serde_json::to_vec(e).unwrap()).collect();
    let mut checked = 0;
    for (i, line) in lines.iter().enumerate() {
        for pos in 0..line.len() {
            for replacement in [line[pos] ^ 0x01, line[pos] ^ 0x20, b'0', b' '] {
                if replacement == line[pos] {
                    continue;
                }
                let mut mutated = line.clone();
                mutated[pos] = replacement;
                checked += 1;
                let Ok(entry) = serde_json::from_slice::<TranscriptEntry>(&mutated) else { continue };
                let mut tampered = entries.clone();
                tampered[i] = entry;
                assert_ne!(
                    status(&header, &tampered),
                    ChainStatus::Valid,
                    "undetected mutation of entry {i} at byte {pos}: {}",
                    String::from_utf8_lossy(&mutated)
                );
            }
        }
    }
    assert!(checked > 10_000);
}

#[test]
fn structural_tampering_is_located() {
    let (header, entries) = completed("tamper");

    let mut deleted = entries.clone();
    deleted.remove(3);
    assert_eq!(status(&header, &deleted), ChainStatus::Broken { seq: 3, reason: ChainBreak::SeqGap { found: 4 } });

    let mut swapped = entries.clone();
    swapped.swap(2, 3);
    assert!(matches!(status(&header, &swapped), ChainStatus::Broken { seq: 2, .. }));

    let mut edited = entries.clone();
    edited[4].content.push('!');
    assert!(matches!(
        status(&header, &edited),
        ChainStatus::Broken { seq: 4, reason: ChainBreak::HashMismatch { .. } }
    ));

    let mut rehashed = entries.clone();
    rehashed[4].content.push('!');
    rehashed[4].entry_hash = rehashed[4].recompute_hash();
    assert!(matches!(
        status(&header, &rehashed),
        ChainStatus::Broken { seq: 5, reason: ChainBreak::PrevHashMismatch { .. } }
    ));

    let mut foreign = entries.clone();
    let other = id("elsewhere");
    foreign[2] = TranscriptEntry::new(other, 2, foreign[2].timestamp, foreign[2].role, foreign[2].content.clone(), foreign[1].entry_hash.clone());
    assert!(matches!(status(&header, &foreign), ChainStatus::Broken { seq: 2, reason: ChainBreak::ForeignSession { .. } }));
}

#[test]
fn header_and_submission_are_bound_to_the_chain() {
    let (header, entries) = completed("bound");

    let mut config_edit = header.clone();
    config_edit.header.config.max_questions = 9;
    assert!(matches!(status(&config_edit, &entries), ChainStatus::Broken { seq: 0, reason: ChainBreak::HeaderMismatch { .. } }));

    let mut raw_edit = header.clone();
    raw_edit.submission.raw.push(' ');
    assert!(matches!(
        status(&raw_edit, &entries),
        ChainStatus::Broken { seq: 0, reason: ChainBreak::SubmissionDigestMismatch { .. } }
    ));

    let missing = verify_chain_parts(&header.header.session_id, None, &entries);
    assert_eq!(missing.status, ChainStatus::Broken { seq: 0, reason: ChainBreak::MissingHeader });
}

#[test]
fn exported_verdict_must_match_the_chain() {
    let (header, entries) = completed("export");
    let mut doc = TranscriptDocument::assemble(header.header.session_id.clone(), Some(&header), entries);
    assert!(verify_document(&doc).is_valid());
    doc.verdict = None;
    assert!(matches!(verify_document(&doc).status, ChainStatus::Broken { reason: ChainBreak::VerdictMismatch, .. }));
}

#[test]
fn chain_alone_cannot_detect_tail_truncation() {
    let (header, mut entries) = completed("trunc");
    entries.pop();
    assert_eq!(status(&header, &entries), ChainStatus::Valid);
    let doc = TranscriptDocument::assemble(header.header.session_id.clone(), Some(&header), entries);
    assert!(doc.verdict.is_none());
}

#[test]
fn sealed_logs_reject_appends() {
    let store = TranscriptStore::in_memory();
    let sid = id("sealed");
    store.create(&sid).unwrap();
    let at = parse_timestamp("2025-01-01T00:00:00.000000Z").unwrap();
    store.append(&sid, Role::Note, "n", at).unwrap();
    store.seal(&sid).unwrap();
    assert!(matches!(store.append(&sid, Role::Note, "x", at), Err(StoreError::SessionSealed(_))));
    assert!(matches!(store.create(&sid), Err(StoreError::SessionExists(_))));
    assert!(matches!(store.get(&id("missing")), Err(StoreError::UnknownSession(_))));
}

#[test]
fn durable_store_detects_on_disk_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let sid = id("disk");
    {
        let services = ExamServices::new(Arc::new(TranscriptStore::open(dir.path()).unwrap()));
        let mut exam = Examination::create(&services, sid.clone(), ExamConfig::default()).unwrap();
        exam.submit(ESSAY.as_bytes(), "text/plain").unwrap();
        exam.advance().unwrap();
    }
    let path = viva_core::transcript::entries_path(dir.path(), &sid);
    let original = std::fs::read_to_string(&path).unwrap();
    assert!(TranscriptStore::open(dir.path()).unwrap().verify_chain(&sid).unwrap().is_valid());

    let tampered = original.replacen("In your work", "In your word", 1);
    assert_ne!(tampered, original);
    std::fs::write(&path, tampered).unwrap();
    let report = TranscriptStore::open(dir.path()).unwrap().verify_chain(&sid).unwrap();
    assert_eq!(report.broken_seq(), Some(1));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_subscribers_see_each_entry_once_in_order() {
    let store = Arc::new(TranscriptStore::in_memory());
    let sid = id("live");
    let log = store.create(&sid).unwrap();
    let mut readers = Vec::new();
    for from in [0u64, 0, 0, 10] {
        let mut sub = log.subscribe(from);
        readers.push(tokio::spawn(async move {
            let mut seen = Vec::new();
            while let Some(entry) = sub.next().await {
                seen.push(entry.seq);
            }
            seen
        }));
    }
    let writer = {
        let store = Arc::clone(&store);
        let sid = sid.clone();
        tokio::task::spawn_blocking(move || {
            let at = parse_timestamp("2025-01-01T00:00:00.000000Z").unwrap();
            for i in 0..200 {
                store.append(&sid, Role::Note, &format!("note {i}"), at).unwrap();
                if i % 17 == 0 {
                    std::thread::yield_now();
                }
            }
            store.seal(&sid).unwrap();
        })
    };
    writer.await.unwrap();
    let expected_all: Vec<u64> = (0..200).collect();
    for (i, reader) in readers.into_iter().enumerate() {
        let seen = tokio::time::timeout(std::time::Duration::from_secs(10), reader).await.unwrap().unwrap();
        if i < 3 {
            assert_eq!(seen, expected_all);
        } else {
            assert_eq!(seen, (10..200).collect::<Vec<_>>());
        }
    }
}

#[tokio::test]
async fn subscription_resumes_from_last_seen() {
    let store = TranscriptStore::in_memory();
    let sid = id("resume");
    let log = store.create(&sid).unwrap();
    let at = parse_timestamp("2025-01-01T00:00:00.000000Z").unwrap();
    for i in 0..5 {
        store.append(&sid, Role::Note, &i.to_string(), at).unwrap();
    }
    let mut first = log.subscribe(0);
    let a = first.next().await.unwrap();
    let b = first.next().await.unwrap();
    drop(first);
    let mut resumed = log.subscribe(b.seq + 1);
    store.seal(&sid).unwrap();
    let mut rest = vec![a.seq, b.seq];
    while let Some(e) = resumed.next().await {
        rest.push(e.seq);
    }
    assert_eq!(rest, vec![0, 1, 2, 3, 4]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn appended_chains_always_verify(contents in prop::collection::vec(("\\PC{0,40}", 0u8..4), 0..30)) {
        let store = TranscriptStore::in_memory();
        let sid = id("prop");
        store.create(&sid).unwrap();
        let at = parse_timestamp("2025-01-01T00:00:00.000000Z").unwrap();
        for (content, role) in &contents {
            let role = [Role::Examiner, Role::Candidate, Role::Note, Role::System][*role as usize];
            store.append(&sid, role, content, at).unwrap();
        }
        let entries = store.entries(&sid).unwrap();
        prop_assert_eq!(entries.len(), contents.len());
        prop_assert!(verify_chain_parts(&sid, None, &entries).is_valid());
    }
}
