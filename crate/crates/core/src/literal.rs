//! Lexical helpers for subject-language (Python) literal text.
//!
//! Test payloads in function-call style are Python expression source: an
//! argument list such as `[1, 2], 3` and a result literal such as `[2, 2, 3]`.
//! The loaders need to pull these out of `assert` statements and doctests, and
//! the sandbox needs to compare a program's `repr()` output against benchmark
//! text written by hand. Nothing here evaluates Python; it only scans tokens.

/// Byte length of the string literal starting at `start`, including any
/// prefix letters and the closing quote. `None` if `start` does not begin a
/// string literal or the literal is unterminated.
pub fn string_literal_len(src: &str, start: usize) -> Option<usize> {
    let bytes = src.as_bytes();
    let mut i = start;
    while i < bytes.len() && i - start < 2 && bytes[i].is_ascii_alphabetic() {
        if !matches!(bytes[i].to_ascii_lowercase(), b'r' | b'b' | b'u' | b'f') {
            return None;
        }
        i += 1;
    }
    if i >= bytes.len() || !(bytes[i] == b'\'' || bytes[i] == b'"') {
        return None;
    }
    // A prefix must not be the tail of a longer identifier.
    if start > 0 && i > start {
        let prev = bytes[start - 1];
        if prev.is_ascii_alphanumeric() || prev == b'_' {
            return None;
        }
    }
    let quote = bytes[i];
    let triple = i + 2 < bytes.len() && bytes[i + 1] == quote && bytes[i + 2] == quote;
    let mut j = if triple { i + 3 } else { i + 1 };
    while j < bytes.len() {
        let b = bytes[j];
        // Raw strings keep the backslash but it still escapes the quote.
        if b == b'\\' {
            j += 2;
            continue;
        }
        if b == quote {
            if triple {
                if j + 2 < bytes.len() && bytes[j + 1] == quote && bytes[j + 2] == quote {
                    return Some(j + 3 - start);
                }
            } else {
                return Some(j + 1 - start);
            }
        }
        if b == b'\n' && !triple {
            return None;
        }
        j += 1;
    }
    None
}

fn string_start_at(src: &str, i: usize) -> Option<usize> {
    let b = src.as_bytes()[i];
    if b == b'\'' || b == b'"' || b.is_ascii_alphabetic() {
        string_literal_len(src, i)
    } else {
        None
    }
}

/// Index of the bracket closing the one at `open`, skipping string literals.
pub fn matching_close(src: &str, open: usize) -> Option<usize> {
    let bytes = src.as_bytes();
    let mut depth = 0usize;
    let mut i = open;
    while i < bytes.len() {
        if let Some(len) = string_start_at(src, i) {
            i += len;
            continue;
        }
        match bytes[i] {
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return Some(i);
                }
            }
            b'#' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
                continue;
            }
            _ => {}
        }
        i += 1;
    }
    None
}

/// Net bracket depth of `src` (strings skipped); negative if over-closed.
pub fn bracket_balance(src: &str) -> i64 {
    let bytes = src.as_bytes();
    let mut depth = 0i64;
    let mut i = 0;
    while i < bytes.len() {
        if let Some(len) = string_start_at(src, i) {
            i += len;
            continue;
        }
        match bytes[i] {
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => depth -= 1,
            b'#' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
                continue;
            }
            _ => {}
        }
        i += 1;
    }
    depth
}

/// Split on `sep` at bracket depth zero, outside string literals.
pub fn split_top_level(src: &str, sep: &str) -> Vec<String> {
    let bytes = src.as_bytes();
    let sep_b = sep.as_bytes();
    let mut parts = Vec::new();
    let mut depth = 0i64;
    let mut last = 0;
    let mut i = 0;
    while i < bytes.len() {
        if let Some(len) = string_start_at(src, i) {
            i += len;
            continue;
        }
        match bytes[i] {
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => depth -= 1,
            _ => {}
        }
        if depth == 0 && bytes[i..].starts_with(sep_b) {
            parts.push(src[last..i].to_string());
            i += sep_b.len();
            last = i;
            continue;
        }
        i += 1;
    }
    parts.push(src[last..].to_string());
    parts
}

/// Drop a trailing `# comment` that is outside any string literal.
pub fn strip_comment(src: &str) -> &str {
    let bytes = src.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if let Some(len) = string_start_at(src, i) {
            i += len;
            continue;
        }
        if bytes[i] == b'#' {
            return src[..i].trim_end();
        }
        i += 1;
    }
    src
}

/// Canonical spelling of a Python literal so that hand-written benchmark text
/// and `repr()` output compare equal: whitespace outside strings is removed and
/// plain string literals are re-quoted the way `repr` quotes them.
pub fn canonical_literal(src: &str) -> String {
    let src = src.trim();
    let bytes = src.as_bytes();
    let mut out = String::with_capacity(src.len());
    let mut i = 0;
    while i < bytes.len() {
        if let Some(len) = string_start_at(src, i) {
            let tok = &src[i..i + len];
            out.push_str(&normalize_string_token(tok).unwrap_or_else(|| tok.to_string()));
            i += len;
            continue;
        }
        let ch = src[i..].chars().next().unwrap_or(' ');
        if !ch.is_whitespace() {
            out.push(ch);
        }
        i += ch.len_utf8();
    }
    out
}

fn normalize_string_token(tok: &str) -> Option<String> {
    let quote_pos = tok.find(['\'', '"'])?;
    let prefix = tok[..quote_pos].to_ascii_lowercase();
    if prefix.contains('f') {
        return None;
    }
    let bytes_prefix = prefix.contains('b');
    let raw = prefix.contains('r');
    let body = &tok[quote_pos..];
    let q = &body[..1];
    let triple = body.len() >= 6 && body.starts_with(&q.repeat(3));
    let inner = if triple {
        &body[3..body.len() - 3]
    } else {
        &body[1..body.len() - 1]
    };
    let value = if raw { inner.to_string() } else { unescape(inner)? };
    let mut out = String::new();
    if bytes_prefix {
        out.push('b');
    }
    out.push_str(&repr_quote(&value));
    Some(out)
}

fn unescape(inner: &str) -> Option<String> {
    let mut out = String::with_capacity(inner.len());
    let mut chars = inner.chars().peekable();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        let e = chars.next()?;
        match e {
            '\n' => {}
            '\\' => out.push('\\'),
            '\'' => out.push('\''),
            '"' => out.push('"'),
            'n' => out.push('\n'),
            't' => out.push('\t'),
            'r' => out.push('\r'),
            '0' => out.push('\0'),
            'a' => out.push('\x07'),
            'b' => out.push('\x08'),
            'f' => out.push('\x0c'),
            'v' => out.push('\x0b'),
            'x' => {
                let h: String = chars.by_ref().take(2).collect();
                out.push(char::from_u32(u32::from_str_radix(&h, 16).ok()?)?);
            }
            'u' => {
                let h: String = chars.by_ref().take(4).collect();
                out.push(char::from_u32(u32::from_str_radix(&h, 16).ok()?)?);
            }
            'U' => {
                let h: String = chars.by_ref().take(8).collect();
                out.push(char::from_u32(u32::from_str_radix(&h, 16).ok()?)?);
            }
            other => {
                out.push('\\');
                out.push(other);
            }
        }
    }
    Some(out)
}

/// Quote `value` the way Python's `repr(str)` does.
pub fn repr_quote(value: &str) -> String {
    let q = if value.contains('\'') && !value.contains('"') {
        '"'
    } else {
        '\''
    };
    let mut out = String::with_capacity(value.len() + 2);
    out.push(q);
    for c in value.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if c == q => {
                out.push('\\');
                out.push(c);
            }
            c if (c as u32) < 0x20 || c as u32 == 0x7f => {
                out.push_str(&format!("\\x{:02x}", c as u32));
            }
            c => out.push(c),
        }
    }
    out.push(q);
    out
}

/// Translate JSON literal text to the equivalent Python literal
/// (`true`/`false`/`null` outside strings become `True`/`False`/`None`).
pub fn json_to_python(src: &str) -> String {
    let bytes = src.as_bytes();
    let mut out = String::with_capacity(src.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'"' {
            if let Some(len) = string_literal_len(src, i) {
                out.push_str(&src[i..i + len]);
                i += len;
                continue;
            }
        }
        if bytes[i].is_ascii_alphabetic() {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push_str(match &src[start..i] {
                "true" => "True",
                "false" => "False",
                "null" => "None",
                w => w,
            });
            continue;
        }
        let ch = src[i..].chars().next().unwrap_or(' ');
        out.push(ch);
        i += ch.len_utf8();
    }
    out
}
