use super::{InjectionFlag, Severity, Span};
use unicode_normalization::{is_nfc_quick, IsNormalized, UnicodeNormalization};

const INVISIBLE_RULE: &str = "invisible-chars";
const CONTROL_RULE: &str = "control-chars";

/// Zero-width and bidirectional-override codepoints stripped from submissions.
pub fn is_invisible(c: char) -> bool {
    matches!(c as u32, 0x200B..=0x200F | 0x202A..=0x202E | 0x2060..=0x2064 | 0xFEFF)
}

fn is_stray_control(c: char) -> bool {
    c != '\n' && c != '\t' && (c.is_ascii_control() || matches!(c as u32, 0x80..=0x9F))
}

fn codepoint_name(c: char) -> &'static str {
    match c as u32 {
        0x200B => "ZERO WIDTH SPACE",
        0x200C => "ZERO WIDTH NON-JOINER",
        0x200D => "ZERO WIDTH JOINER",
        0x200E => "LEFT-TO-RIGHT MARK",
        0x200F => "RIGHT-TO-LEFT MARK",
        0x202A => "LEFT-TO-RIGHT EMBEDDING",
        0x202B => "RIGHT-TO-LEFT EMBEDDING",
        0x202C => "POP DIRECTIONAL FORMATTING",
        0x202D => "LEFT-TO-RIGHT OVERRIDE",
        0x202E => "RIGHT-TO-LEFT OVERRIDE",
        0x2060 => "WORD JOINER",
        0x2061 => "FUNCTION APPLICATION",
        0x2062 => "INVISIBLE TIMES",
        0x2063 => "INVISIBLE SEPARATOR",
        0x2064 => "INVISIBLE PLUS",
        0xFEFF => "ZERO WIDTH NO-BREAK SPACE",
        _ => "CONTROL CHARACTER",
    }
}

struct Removal {
    at: usize,
    ch: char,
}

/// Strips control characters (keeping newline and tab) and folds CR/CRLF to LF.
///
/// Applied to every piece of text entering a transcript.
pub fn strip_controls(input: &str) -> String {
    let mut out = String::with_capacity(input.len());
    let mut chars = input.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\r' => {
                if chars.peek() == Some(&'\n') {
                    chars.next();
                }
                out.push('\n');
            }
            c if is_stray_control(c) => {}
            c => out.push(c),
        }
    }
    out
}

/// Removes invisible and control codepoints, folds line endings, applies NFC.
///
/// Each removed codepoint yields one flag with an empty span anchored where
/// it was removed.
pub fn normalize_text(input: &str) -> (String, Vec<InjectionFlag>) {
    let mut stripped = String::with_capacity(input.len());
    let mut removals = Vec::new();
    let mut chars = input.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\r' => {
                if chars.peek() == Some(&'\n') {
                    chars.next();
                }
                stripped.push('\n');
            }
            c if is_invisible(c) || is_stray_control(c) => {
                removals.push(Removal { at: stripped.len(), ch: c });
            }
            c => stripped.push(c),
        }
    }

    let (text, positions) = compose(stripped, &removals);
    let flags = removals
        .iter()
        .zip(positions)
        .map(|(removal, at)| {
            let (rule_id, severity) = if is_invisible(removal.ch) {
                (INVISIBLE_RULE, Severity::High)
            } else {
                (CONTROL_RULE, Severity::Low)
            };
            InjectionFlag {
                rule_id: rule_id.to_string(),
                severity,
                span: Span::new(at, at),
                excerpt: String::new(),
                description: format!(
                    "removed U+{:04X} {}",
                    removal.ch as u32,
                    codepoint_name(removal.ch)
                ),
            }
        })
        .collect();
    (text, flags)
}

/// Applies NFC and maps removal offsets into the composed text.
fn compose(stripped: String, removals: &[Removal]) -> (String, Vec<usize>) {
    if is_nfc_quick(stripped.chars()) == IsNormalized::Yes {
        let positions = removals.iter().map(|r| r.at).collect();
        return (stripped, positions);
    }
    let composed: String = stripped.nfc().collect();

    // Composing segment by segment gives exact offsets unless a composition
    // straddles a removal point.
    let mut cuts: Vec<usize> = removals.iter().map(|r| r.at).collect();
    cuts.dedup();
    let mut rebuilt = String::with_capacity(composed.len());
    let mut offsets = Vec::with_capacity(cuts.len());
    let mut last = 0;
    for &cut in &cuts {
        rebuilt.extend(stripped[last..cut].nfc());
        offsets.push(rebuilt.len());
        last = cut;
    }
    rebuilt.extend(stripped[last..].nfc());

    let positions = if rebuilt == composed {
        removals
            .iter()
            .map(|r| offsets[cuts.binary_search(&r.at).expect("cut recorded")])
            .collect()
    } else {
        removals
            .iter()
            .map(|r| {
                let mut at = stripped[..r.at].nfc().map(char::len_utf8).sum::<usize>();
                at = at.min(composed.len());
                while !composed.is_char_boundary(at) {
                    at -= 1;
                }
                at
            })
            .collect()
    };
    (composed, positions)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn each_blocklisted_codepoint_is_removed() {
        for cp in (0x200B..=0x200F).chain(0x202A..=0x202E).chain(0x2060..=0x2064).chain([0xFEFF]) {
            let c = char::from_u32(cp).unwrap();
            let (text, flags) = normalize_text(&format!("a{c}b"));
            assert_eq!(text, "ab", "U+{cp:04X}");
            assert_eq!(flags.len(), 1);
            assert_eq!(flags[0].span, Span::new(1, 1));
        }
    }

    #[test]
    fn neighbouring_codepoints_survive() {
        let text = "\u{200A}\u{2010}\u{2065}\u{00A0}";
        assert_eq!(normalize_text(text), (text.to_string(), vec![]));
    }

    #[test]
    fn lone_cr_becomes_lf() {
        assert_eq!(normalize_text("a\rb\r\n\rc").0, "a\nb\n\nc");
    }

    #[test]
    fn control_characters_are_low_severity() {
        let (text, flags) = normalize_text("bell\u{7}\ttab");
        assert_eq!(text, "bell\ttab");
        assert_eq!(flags[0].rule_id, CONTROL_RULE);
        assert_eq!(flags[0].severity, Severity::Low);
    }

    #[test]
    fn composition_across_a_removed_codepoint() {
        // e + ZWSP + combining acute composes once the ZWSP is gone.
        let (text, flags) = normalize_text("caf\u{65}\u{200B}\u{301}!");
        assert_eq!(text, "caf\u{e9}!");
        assert_eq!(flags.len(), 1);
        assert!(text.is_char_boundary(flags[0].span.start));
        assert!(flags[0].span.start <= text.len());
    }

    #[test]
    fn offsets_track_composition_before_removal() {
        let (text, flags) = normalize_text("e\u{301}e\u{301}\u{200B}x");
        assert_eq!(text, "\u{e9}\u{e9}x");
        assert_eq!(flags[0].span.start, 4);
    }

    #[test]
    fn strip_controls_keeps_invisible_but_drops_controls() {
        assert_eq!(strip_controls("a\r\nb\u{0}c\u{200B}"), "a\nbc\u{200B}");
    }
}
