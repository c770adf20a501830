//! Recovery of a policy function from free-form generator output.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no policy function found in generator output")]
pub struct ExtractionFailure;

fn indent_of(line: &str) -> usize {
    line.chars()
        .take_while(|c| *c == ' ' || *c == '\t')
        .map(|c| if c == '\t' { 4 } else { 1 })
        .sum()
}

/// Name of the function defined on `line`, if it is a `def` line.
fn def_name(line: &str) -> Option<&str> {
    let rest = line.trim_start().strip_prefix("def")?;
    if !rest.starts_with([' ', '\t']) {
        return None;
    }
    let rest = rest.trim_start();
    let end = rest.find(|c: char| !(c.is_alphanumeric() || c == '_'))?;
    rest[end..].trim_start().starts_with('(').then_some(&rest[..end])
}

/// Lines with markdown fence markers removed; fences never belong to code.
fn strip_fences(text: &str) -> Vec<&str> {
    text.lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect()
}

/// Text after the colon closing a single-line header.
fn inline_body(def_line: &str) -> Option<&str> {
    let open = def_line.find('(')?;
    let mut depth = 0usize;
    for (i, c) in def_line[open..].char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    let rest = &def_line[open + i + 1..];
                    return rest.find(':').map(|k| &rest[k + 1..]);
                }
            }
            _ => {}
        }
    }
    None
}

/// True when the body holds nothing but (at most) a docstring.
fn docstring_only(body: &[&str]) -> bool {
    let text = body.iter().map(|l| l.trim()).collect::<Vec<_>>().join("\n");
    let text = text.trim();
    for q in ["\"\"\"", "'''"] {
        if let Some(rest) = text.strip_prefix(q) {
            return rest.find(q).is_some_and(|end| rest[end + 3..].trim().is_empty());
        }
    }
    text.is_empty()
}

/// Captures the function starting at `lines[start]` up to its dedent point,
/// renamed to `policy` and shifted to column zero.
fn capture(lines: &[&str], start: usize) -> Option<String> {
    let def_line = lines[start];
    let base = indent_of(def_line);
    let header_done = def_line.trim_end().ends_with(':');
    let one_liner = inline_body(def_line).is_some_and(|after| {
        let after = after.trim();
        !after.is_empty() && !after.starts_with('#')
    });

    let mut body: Vec<&str> = Vec::new();
    let mut k = start + 1;
    // Continuation lines of a multi-line signature.
    let mut header: Vec<&str> = vec![def_line];
    if !header_done && !one_liner {
        while k < lines.len() && !lines[k - 1].trim_end().ends_with(':') {
            header.push(lines[k]);
            k += 1;
        }
    }
    while k < lines.len() {
        let line = lines[k];
        if !line.trim().is_empty() && indent_of(line) <= base {
            break;
        }
        body.push(line);
        k += 1;
    }
    while body.last().is_some_and(|l| l.trim().is_empty()) {
        body.pop();
    }
    if !one_liner && docstring_only(&body) {
        return None;
    }

    let name = def_name(def_line)?;
    let mut out = String::new();
    for (i, h) in header.iter().enumerate() {
        let h = h.get(base.min(h.len())..).unwrap_or(h);
        if i == 0 {
            out.push_str(&h.replacen(name, "policy", 1));
        } else {
            out.push_str(h);
        }
        out.push('\n');
    }
    for line in body {
        let cut = base.min(indent_of(line)).min(line.len());
        out.push_str(line.get(cut..).unwrap_or(line));
        out.push('\n');
    }
    Some(out)
}

/// Finds the first definition of `preferred` (e.g. `policy_v2`); failing that,
/// the first `policy`-prefixed function. Returns its text renamed to `policy`.
pub fn extract_named(text: &str, preferred: &str) -> Result<String, ExtractionFailure> {
    let lines = strip_fences(text);
    let defs: Vec<(usize, &str)> = lines
        .iter()
        .enumerate()
        .filter_map(|(i, l)| def_name(l).map(|n| (i, n)))
        .collect();
    let ordered = defs
        .iter()
        .filter(|(_, n)| *n == preferred)
        .chain(defs.iter().filter(|(_, n)| *n != preferred && n.starts_with("policy")));
    for (i, _) in ordered {
        if let Some(src) = capture(&lines, *i) {
            return Ok(src);
        }
    }
    Err(ExtractionFailure)
}

pub fn extract_policy(text: &str) -> Result<String, ExtractionFailure> {
    extract_named(text, &super::prompt::target_name())
}

/// For completion-style replies that continue the prompt: if the reply holds
/// no function, it is treated as the body following `header`.
pub fn extract_with_header(reply: &str, header: &str) -> Result<String, ExtractionFailure> {
    extract_policy(reply).or_else(|_| extract_policy(&format!("{header}{reply}")))
}
