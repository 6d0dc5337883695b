//! Locates allow statements inside `userdebug_or_eng(...)` and
//! `build_test_only(...)` macro calls of TE sources, without expanding any
//! other macro.

use crate::policy::{AtomicRule, Ident, Resolver};

const DEBUG_MACROS: [&str; 2] = ["userdebug_or_eng", "build_test_only"];

/// One field of a TE statement: plain names, `-name` exclusions, `*` and a
/// leading `~` complement.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TeField {
    pub names: Vec<String>,
    pub excluded: Vec<String>,
    pub wildcard: bool,
    pub complement: bool,
}

impl TeField {
    fn matches(&self, name: &Ident, resolver: Option<&Resolver>) -> bool {
        let hit = |item: &String| {
            item == name.as_str()
                || resolver.is_some_and(|r| Ident::new(item).is_ok_and(|i| r.belongs(name, &i)))
        };
        if self.excluded.iter().any(hit) {
            return false;
        }
        let listed = self.wildcard || self.names.iter().any(hit);
        listed != self.complement
    }
}

/// An allow statement found inside a debug-only macro call.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DebugAllow {
    pub file: String,
    pub line: usize,
    pub subject: TeField,
    pub target: TeField,
    pub class: TeField,
    pub permission: TeField,
}

impl DebugAllow {
    pub fn matches(&self, a: &AtomicRule, resolver: Option<&Resolver>) -> bool {
        let target_ok = self.target.matches(&a.target, resolver)
            || (a.target == a.subject && self.target.names.iter().any(|n| n == "self"));
        self.subject.matches(&a.subject, resolver)
            && target_ok
            && self.class.matches(&a.class, None)
            && self.permission.matches(&a.permission, None)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Token {
    text: String,
    line: usize,
}

fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        let mut word = String::new();
        for c in line.chars() {
            if c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-') {
                word.push(c);
                continue;
            }
            if !word.is_empty() {
                out.push(Token { text: std::mem::take(&mut word), line: i + 1 });
            }
            if matches!(c, '(' | ')' | '{' | '}' | ';' | ':' | '~' | '*') {
                out.push(Token { text: c.to_string(), line: i + 1 });
            }
        }
        if !word.is_empty() {
            out.push(Token { text: word, line: i + 1 });
        }
    }
    out
}

fn parse_field(tokens: &[Token], pos: &mut usize) -> Option<TeField> {
    let mut field = TeField::default();
    if tokens.get(*pos)?.text == "~" {
        field.complement = true;
        *pos += 1;
    }
    let push = |field: &mut TeField, t: &str| match t {
        "*" => field.wildcard = true,
        _ => match t.strip_prefix('-') {
            Some(rest) => field.excluded.push(rest.to_string()),
            None => field.names.push(t.to_string()),
        },
    };
    let first = tokens.get(*pos)?;
    *pos += 1;
    if first.text == "{" {
        loop {
            let t = tokens.get(*pos)?;
            *pos += 1;
            if t.text == "}" {
                break;
            }
            push(&mut field, &t.text);
        }
    } else {
        push(&mut field, &first.text);
    }
    Some(field)
}

fn parse_allow(file: &str, tokens: &[Token]) -> Option<DebugAllow> {
    let mut pos = 1;
    let subject = parse_field(tokens, &mut pos)?;
    let target = parse_field(tokens, &mut pos)?;
    if tokens.get(pos)?.text != ":" {
        return None;
    }
    pos += 1;
    let class = parse_field(tokens, &mut pos)?;
    let permission = parse_field(tokens, &mut pos)?;
    (pos == tokens.len()).then(|| DebugAllow {
        file: file.to_string(),
        line: tokens[0].line,
        subject,
        target,
        class,
        permission,
    })
}

/// Allow statements inside debug-only macro calls of one TE source.
pub fn scan_debug_allows(file: &str, text: &str) -> Vec<DebugAllow> {
    let tokens = tokenize(text);
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let opens = DEBUG_MACROS.contains(&tokens[i].text.as_str()) && tokens.get(i + 1).is_some_and(|t| t.text == "(");
        if !opens {
            i += 1;
            continue;
        }
        let mut depth = 1;
        let mut j = i + 2;
        let mut statement: Vec<Token> = Vec::new();
        while j < tokens.len() && depth > 0 {
            let t = &tokens[j];
            match t.text.as_str() {
                "(" => depth += 1,
                ")" => depth -= 1,
                _ => {}
            }
            if depth > 0 {
                if t.text == ";" {
                    if statement.first().is_some_and(|s| s.text == "allow") {
                        out.extend(parse_allow(file, &statement));
                    }
                    statement.clear();
                } else if t.text != "(" && t.text != ")" {
                    statement.push(t.clone());
                }
            }
            j += 1;
        }
        i = j;
    }
    out
}
