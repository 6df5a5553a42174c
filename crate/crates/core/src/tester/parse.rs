//! Parsing the model's property list.

/// Item text of a numbered or `P<n>:` list. Indented lines continue the
/// previous item; a blank line or unindented prose ends it. Duplicates
/// (ignoring case, punctuation and spacing) are dropped.
pub fn parse_property_list(text: &str) -> Vec<String> {
    let mut items: Vec<String> = Vec::new();
    let mut open = false;
    for line in text.lines() {
        if line.trim().is_empty() || line.trim_start().starts_with("```") {
            open = false;
            continue;
        }
        if let Some(item) = item_text(line.trim()) {
            if !item.is_empty() {
                items.push(item);
                open = true;
            }
            continue;
        }
        if open && line.starts_with(char::is_whitespace) {
            let last = items.last_mut().expect("open item");
            last.push(' ');
            last.push_str(line.trim());
        } else {
            open = false;
        }
    }
    dedup(items)
}

pub(crate) fn dedup(items: Vec<String>) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    items
        .into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty() && seen.insert(normalize(s)))
        .collect()
}

fn normalize(s: &str) -> String {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

fn item_text(line: &str) -> Option<String> {
    let line = line.trim_start_matches(['*', '#', '-', ' ']);
    let rest = if let Some(r) = strip_ci(line, "property") {
        r.trim_start()
    } else if let Some(r) = line.strip_prefix(['P', 'p']) {
        r
    } else {
        line
    };
    let digits = rest.chars().take_while(char::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    let after = &rest[digits..];
    let body = after.strip_prefix(['.', ')', ':'])?;
    let body = body.trim_start_matches(['*', ' ', ':']).trim_end();
    let body = body.trim_end_matches("**").trim();
    Some(body.to_string())
}

fn strip_ci<'s>(s: &'s str, prefix: &str) -> Option<&'s str> {
    (s.len() >= prefix.len() && s[..prefix.len()].eq_ignore_ascii_case(prefix)).then(|| &s[prefix.len()..])
}
