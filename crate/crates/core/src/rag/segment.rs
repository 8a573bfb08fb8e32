/// Splits a bug report into sentences in document order.
///
/// Lines (and numbered list items) are split first, with any leading `1.` or
/// `2)` marker removed. Within a line, `.`, `!` and `?` end a sentence when
/// followed by whitespace or the end of the line, unless they sit inside
/// parentheses. A fragment that opens with `(` is attached to the sentence
/// before it.
pub fn segment_report(report_text: &str) -> Vec<String> {
    let mut sentences: Vec<String> = Vec::new();
    for line in report_text.lines() {
        let line = strip_list_marker(line.trim());
        if line.is_empty() {
            continue;
        }
        for fragment in split_line(line) {
            match sentences.last_mut() {
                Some(prev) if fragment.starts_with('(') => {
                    prev.push(' ');
                    prev.push_str(&fragment);
                }
                _ => sentences.push(fragment),
            }
        }
    }
    sentences
}

fn strip_list_marker(line: &str) -> &str {
    let digits = line.len() - line.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits == 0 {
        return line;
    }
    let rest = &line[digits..];
    match rest.strip_prefix(['.', ')']) {
        Some(after) if after.is_empty() || after.starts_with(char::is_whitespace) => after.trim_start(),
        _ => line,
    }
}

fn split_line(line: &str) -> Vec<String> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut current = String::new();
    let mut depth = 0usize;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        current.push(c);
        match c {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            '.' | '!' | '?' if depth == 0 => {
                // Absorb runs like "?!" or "..." and a closing quote.
                while i + 1 < chars.len() && matches!(chars[i + 1], '.' | '!' | '?' | '"' | '\'' | '\u{201d}') {
                    i += 1;
                    current.push(chars[i]);
                }
                if i + 1 == chars.len() || chars[i + 1].is_whitespace() {
                    push_trimmed(&mut out, &mut current);
                }
            }
            _ => {}
        }
        i += 1;
    }
    push_trimmed(&mut out, &mut current);
    out
}

fn push_trimmed(out: &mut Vec<String>, current: &mut String) {
    let trimmed = current.trim();
    if !trimmed.is_empty() {
        out.push(trimmed.to_string());
    }
    current.clear();
}
