//! Reader and writer for flat rule text as emitted by policy decompilers
//! (`allow s t:c { p ... };`), plus the declaration statements that
//! accompany it in policy.conf-style dumps.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::ParseOptions;
use crate::error::{Error, Result};
use crate::policy::{
    is_ident_char, Ident, Interner, Op, Origin, PolicyDb, PolicyRule, Resolver, SetExpr, TypeTransition,
};

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Word(String),
    Str(String),
    LBrace,
    RBrace,
    Colon,
    Semi,
    Comma,
    Minus,
    Tilde,
    Star,
    Other(char),
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("");
        let chars: Vec<char> = content.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let col = i + 1;
            let single = |tok| Token { tok, line, col };
            match c {
                c if c.is_whitespace() => i += 1,
                '{' => {
                    out.push(single(Tok::LBrace));
                    i += 1
                }
                '}' => {
                    out.push(single(Tok::RBrace));
                    i += 1
                }
                ':' => {
                    out.push(single(Tok::Colon));
                    i += 1
                }
                ';' => {
                    out.push(single(Tok::Semi));
                    i += 1
                }
                ',' => {
                    out.push(single(Tok::Comma));
                    i += 1
                }
                '~' => {
                    out.push(single(Tok::Tilde));
                    i += 1
                }
                '*' => {
                    out.push(single(Tok::Star));
                    i += 1
                }
                '"' => {
                    let start = i + 1;
                    let mut j = start;
                    while j < chars.len() && chars[j] != '"' {
                        j += 1;
                    }
                    out.push(single(Tok::Str(chars[start..j].iter().collect())));
                    i = j + 1;
                }
                '-' if chars.get(i + 1).is_some_and(|n| is_ident_char(*n) && *n != '-') => {
                    out.push(single(Tok::Minus));
                    i += 1;
                }
                c if is_ident_char(c) => {
                    let start = i;
                    while i < chars.len() && is_ident_char(chars[i]) {
                        i += 1;
                    }
                    out.push(single(Tok::Word(chars[start..i].iter().collect())));
                }
                other => {
                    out.push(single(Tok::Other(other)));
                    i += 1;
                }
            }
        }
    }
    out
}

struct FlatReader<'a> {
    opts: &'a ParseOptions,
    toks: Vec<Token>,
    pos: usize,
    db: PolicyDb,
    interner: Interner,
}

/// Parses flat rule text into a policy fragment without checking declarations.
pub fn parse_flat_fragment(text: &str, opts: &ParseOptions) -> Result<PolicyDb> {
    let mut reader = FlatReader {
        opts,
        toks: tokenize(text),
        pos: 0,
        db: PolicyDb::new(),
        interner: Interner::new(),
    };
    while reader.pos < reader.toks.len() {
        reader.statement()?;
    }
    Ok(reader.db)
}

impl<'a> FlatReader<'a> {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn last_pos(&self) -> (usize, usize) {
        self.toks
            .get(self.pos.min(self.toks.len().saturating_sub(1)))
            .map(|t| (t.line, t.col))
            .unwrap_or((1, 1))
    }

    fn error(&self, msg: impl Into<String>) -> Error {
        let (line, col) = self.last_pos();
        Error::syntax(line, col, msg)
    }

    fn next(&mut self) -> Result<Token> {
        let tok = self.toks.get(self.pos).cloned().ok_or_else(|| self.error("unexpected end of input"))?;
        self.pos += 1;
        Ok(tok)
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        let tok = self.next()?;
        if tok.tok == want {
            Ok(())
        } else {
            self.pos -= 1;
            Err(self.error(format!("expected {what}")))
        }
    }

    fn eat(&mut self, want: &Tok) -> bool {
        if self.peek().is_some_and(|t| &t.tok == want) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn word(&mut self) -> Result<Ident> {
        let tok = self.next()?;
        match tok.tok {
            Tok::Word(w) => self
                .interner
                .intern(&w)
                .map_err(|_| Error::syntax(tok.line, tok.col, format!("invalid identifier {w:?}"))),
            _ => {
                self.pos -= 1;
                Err(self.error("expected a name"))
            }
        }
    }

    fn skip_statement(&mut self) {
        while let Some(t) = self.toks.get(self.pos) {
            self.pos += 1;
            if t.tok == Tok::Semi {
                break;
            }
        }
        self.db.skipped += 1;
    }

    fn statement(&mut self) -> Result<()> {
        let start = self.next()?;
        let line = start.line;
        let Tok::Word(keyword) = start.tok else {
            self.pos -= 1;
            return Err(self.error("expected a statement keyword"));
        };
        match keyword.as_str() {
            "allow" | "neverallow" => {
                let op = if keyword == "allow" { Op::Allow } else { Op::Neverallow };
                self.av_rule(op, line)
            }
            "type" => {
                let name = self.word()?;
                self.db.declare_type(name.clone());
                if self.peek().is_some_and(|t| t.tok == Tok::Word("alias".into())) {
                    self.pos += 1;
                    self.name_list()?;
                }
                while self.eat(&Tok::Comma) {
                    let attr = self.word()?;
                    self.db.add_membership(attr, SetExpr::Name(name.clone()));
                }
                self.expect(Tok::Semi, "`;`")
            }
            "attribute" => {
                let name = self.word()?;
                self.db.declare_attribute(name);
                self.expect(Tok::Semi, "`;`")
            }
            "typeattribute" => {
                let name = self.word()?;
                loop {
                    let attr = self.word()?;
                    self.db.add_membership(attr, SetExpr::Name(name.clone()));
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
                self.expect(Tok::Semi, "`;`")
            }
            "type_transition" | "typetransition" => {
                let source = self.word()?;
                let exec_type = self.word()?;
                self.expect(Tok::Colon, "`:`")?;
                let class = self.word()?;
                let result = self.word()?;
                if matches!(self.peek().map(|t| &t.tok), Some(Tok::Str(_))) {
                    self.pos += 1;
                }
                self.expect(Tok::Semi, "`;`")?;
                self.db.transitions.push(TypeTransition {
                    source,
                    exec_type,
                    class,
                    result,
                    origin: Origin::new(&self.opts.source, line),
                });
                Ok(())
            }
            "class" | "common" => {
                // `class c`, `class c { perms }`, `class c inherits x { perms }`, `common x { perms }`
                let class = self.word()?;
                if self.peek().is_some_and(|t| t.tok == Tok::Word("inherits".into())) {
                    self.pos += 1;
                    let common = self.word()?;
                    let inherited = self.db.classes.get(&common).cloned().unwrap_or_default();
                    self.db.declare_class_perms(class.clone(), inherited);
                }
                if self.eat(&Tok::LBrace) {
                    let mut perms = Vec::new();
                    while !self.eat(&Tok::RBrace) {
                        perms.push(self.word()?);
                    }
                    self.db.declare_class_perms(class, perms);
                } else {
                    self.db.classes.entry(class).or_default();
                }
                self.eat(&Tok::Semi);
                Ok(())
            }
            _ => {
                self.skip_statement();
                Ok(())
            }
        }
    }

    fn name_list(&mut self) -> Result<Vec<Ident>> {
        if self.eat(&Tok::LBrace) {
            let mut out = Vec::new();
            while !self.eat(&Tok::RBrace) {
                out.push(self.word()?);
            }
            Ok(out)
        } else {
            Ok(vec![self.word()?])
        }
    }

    /// `*`, `~set`, `name`, or `{ a b -c }`.
    fn set(&mut self) -> Result<SetExpr> {
        if self.eat(&Tok::Star) {
            return Ok(SetExpr::All);
        }
        if self.eat(&Tok::Tilde) {
            return Ok(SetExpr::not(self.set()?));
        }
        if !self.eat(&Tok::LBrace) {
            return Ok(SetExpr::Name(self.word()?));
        }
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        loop {
            if self.eat(&Tok::RBrace) {
                break;
            }
            if self.eat(&Tok::Minus) {
                neg.push(SetExpr::Name(self.word()?));
            } else if self.eat(&Tok::Star) {
                pos.push(SetExpr::All);
            } else {
                pos.push(SetExpr::Name(self.word()?));
            }
        }
        let positive = SetExpr::or(pos);
        if neg.is_empty() {
            Ok(positive)
        } else {
            Ok(SetExpr::And(vec![positive, SetExpr::not(SetExpr::or(neg))]))
        }
    }

    fn class_universe(&self, class: &Ident) -> BTreeSet<Ident> {
        self.db
            .classes
            .get(class)
            .filter(|p| !p.is_empty())
            .or_else(|| self.opts.class_perms.perms(class))
            .cloned()
            .unwrap_or_default()
    }

    fn av_rule(&mut self, op: Op, line: usize) -> Result<()> {
        let subject = self.set()?;
        let target = self.set()?;
        self.expect(Tok::Colon, "`:` before the class")?;
        let classes = self.name_list()?;
        if classes.is_empty() {
            return Err(self.error("empty class set"));
        }
        enum Perms {
            Star,
            Listed(Vec<Ident>),
            Complement(Vec<Ident>),
        }
        let perms = if self.eat(&Tok::Star) {
            Perms::Star
        } else if self.eat(&Tok::Tilde) {
            Perms::Complement(self.name_list()?)
        } else {
            Perms::Listed(self.perm_list()?)
        };
        self.expect(Tok::Semi, "`;`")?;
        let origin = Origin::new(&self.opts.source, line);
        for class in classes {
            let set: BTreeSet<Ident> = match &perms {
                Perms::Star => self.class_universe(&class),
                Perms::Listed(p) => p.iter().cloned().collect(),
                Perms::Complement(p) => {
                    let excluded: BTreeSet<_> = p.iter().cloned().collect();
                    self.class_universe(&class).difference(&excluded).cloned().collect()
                }
            };
            let rule = PolicyRule::new(op, subject.clone(), target.clone(), class.clone(), set, origin.clone())
                .ok_or_else(|| Error::syntax(line, 1, format!("empty permission set for class {class}")))?;
            self.db.rules.push(rule);
        }
        Ok(())
    }

    /// Either `{ p ... }` or one or more bare permission names up to `;`.
    fn perm_list(&mut self) -> Result<Vec<Ident>> {
        if self.eat(&Tok::LBrace) {
            let mut out = Vec::new();
            while !self.eat(&Tok::RBrace) {
                out.push(self.word()?);
            }
            return Ok(out);
        }
        let mut out = Vec::new();
        while matches!(self.peek().map(|t| &t.tok), Some(Tok::Word(_))) {
            out.push(self.word()?);
        }
        if out.is_empty() {
            return Err(self.error("expected permissions"));
        }
        Ok(out)
    }
}

/// Canonical flat rendering of a policy. Attribute memberships are written
/// as their resolved members and complex rule operands as resolved type
/// sets, so re-parsing yields the same atomic expansion.
pub fn write_flat(db: &PolicyDb) -> Result<String> {
    let resolver = Resolver::new(db)?;
    let mut out = String::new();
    for attr in &db.attributes {
        writeln!(out, "attribute {attr};").unwrap();
    }
    for ty in &db.types {
        writeln!(out, "type {ty};").unwrap();
    }
    for attr in &db.attributes {
        if let Some(bits) = resolver.members(attr) {
            for i in bits.ones() {
                writeln!(out, "typeattribute {} {attr};", resolver.type_at(i)).unwrap();
            }
        }
    }
    let render = |expr: &SetExpr| -> Result<String> {
        Ok(match expr {
            SetExpr::Name(n) => n.to_string(),
            other => {
                let names = resolver.resolve(other)?;
                let body: Vec<&str> = names.iter().map(Ident::as_str).collect();
                format!("{{ {} }}", body.join(" "))
            }
        })
    };
    for rule in &db.rules {
        let subject = render(&rule.subject)?;
        let target = match rule.target.split_self() {
            (false, Some(rest)) => render(&rest)?,
            (true, None) => "self".to_string(),
            (true, Some(rest)) => {
                let names = resolver.resolve(&rest)?;
                let mut body = vec!["self"];
                body.extend(names.iter().map(Ident::as_str));
                format!("{{ {} }}", body.join(" "))
            }
            (false, None) => unreachable!(),
        };
        let perms: Vec<&str> = rule.permissions.iter().map(Ident::as_str).collect();
        writeln!(
            out,
            "{} {} {}:{} {{ {} }};",
            rule.op,
            subject,
            target,
            rule.class,
            perms.join(" ")
        )
        .unwrap();
    }
    for tr in &db.transitions {
        writeln!(out, "type_transition {} {}:{} {};", tr.source, tr.exec_type, tr.class, tr.result).unwrap();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &str) -> Ident {
        Ident::new(s).unwrap()
    }

    fn parse(text: &str) -> Result<PolicyDb> {
        parse_flat_fragment(text, &ParseOptions::default())
    }

    #[test]
    fn bare_permission_list() {
        let db = parse("allow untrusted_app app_data_file: file getattr open read ioctl lock map;").unwrap();
        assert_eq!(db.rules.len(), 1);
        assert_eq!(db.rules[0].permissions.len(), 6);
        assert_eq!(db.rules[0].subject, SetExpr::Name(id("untrusted_app")));
    }

    #[test]
    fn single_permission() {
        let db = parse("allow init kernel:security load_policy;").unwrap();
        assert_eq!(db.rules[0].class, id("security"));
        assert_eq!(db.rules[0].permissions, [id("load_policy")].into_iter().collect());
    }

    #[test]
    fn empty_permission_set_is_an_error() {
        assert!(matches!(parse("allow a b:c {};"), Err(Error::Syntax { line: 1, .. })));
    }

    #[test]
    fn malformed_statement_reports_line() {
        assert!(matches!(
            parse("allow a b:c read;\nallow a b c read;"),
            Err(Error::Syntax { line: 2, .. })
        ));
    }

    #[test]
    fn sets_exclusions_and_star() {
        let db = parse(
            "neverallow { halserverdomain -hal_audio_server} audio_device:chr_file *;\n\
             allow su *:{ file dir } ~{ read };",
        )
        .unwrap();
        let r = &db.rules[0];
        assert_eq!(r.op, Op::Neverallow);
        assert_eq!(
            r.subject,
            SetExpr::And(vec![
                SetExpr::Name(id("halserverdomain")),
                SetExpr::not(SetExpr::Name(id("hal_audio_server"))),
            ])
        );
        let chr = ParseOptions::default().class_perms.perms(&id("chr_file")).unwrap().clone();
        assert_eq!(r.permissions, chr);
        assert_eq!(db.rules.len(), 3);
        assert_eq!(db.rules[1].target, SetExpr::All);
        assert!(!db.rules[1].permissions.contains(&id("read")));
        assert_eq!(db.rules[2].class, id("dir"));
    }

    #[test]
    fn declarations_and_transitions() {
        let db = parse(
            "attribute domain;\n\
             type untrusted_app, domain, appdomain;\n\
             typeattribute hal_ir_default hal_audio;\n\
             type_transition init mediadrmserver_exec:process mediadrmserver;\n\
             role r types { a b };",
        )
        .unwrap();
        assert!(db.is_type(&id("untrusted_app")));
        assert!(db.is_attribute(&id("appdomain")));
        assert!(db.is_attribute(&id("hal_audio")));
        assert_eq!(db.transitions[0].exec_type, id("mediadrmserver_exec"));
        assert_eq!(db.skipped, 1);
    }

    #[test]
    fn comments_are_ignored() {
        let db = parse("# header\nallow a b:file read; # trailing\n").unwrap();
        assert_eq!(db.rules.len(), 1);
    }
}
