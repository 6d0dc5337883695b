//! Minimal s-expression reader for CIL.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Sexp {
    Atom {
        text: String,
        quoted: bool,
        line: usize,
        col: usize,
    },
    List {
        items: Vec<Sexp>,
        line: usize,
        col: usize,
    },
}

impl Sexp {
    pub fn pos(&self) -> (usize, usize) {
        match self {
            Sexp::Atom { line, col, .. } | Sexp::List { line, col, .. } => (*line, *col),
        }
    }

    pub fn line(&self) -> usize {
        self.pos().0
    }

    pub fn atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom { text, quoted: false, .. } => Some(text),
            _ => None,
        }
    }

    pub fn list(&self) -> Option<&[Sexp]> {
        match self {
            Sexp::List { items, .. } => Some(items),
            _ => None,
        }
    }

    /// Keyword of a list form, e.g. `allow` for `(allow ...)`.
    pub fn head(&self) -> Option<&str> {
        self.list().and_then(|items| items.first()).and_then(Sexp::atom)
    }
}

/// Reads every top-level form. `;` starts a comment running to end of line.
pub fn read_all(text: &str) -> Result<Vec<Sexp>> {
    let mut stack: Vec<(Vec<Sexp>, usize, usize)> = Vec::new();
    let mut top = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut col) = (1usize, 0usize);

    let push = |stack: &mut Vec<(Vec<Sexp>, usize, usize)>, top: &mut Vec<Sexp>, s: Sexp| match stack.last_mut() {
        Some((items, _, _)) => items.push(s),
        None => top.push(s),
    };

    while let Some(c) = chars.next() {
        col += 1;
        match c {
            '\n' => {
                line += 1;
                col = 0;
            }
            c if c.is_whitespace() => {}
            ';' => {
                while let Some(&n) = chars.peek() {
                    if n == '\n' {
                        break;
                    }
                    chars.next();
                }
            }
            '(' => stack.push((Vec::new(), line, col)),
            ')' => {
                let (items, l, c0) = stack
                    .pop()
                    .ok_or_else(|| Error::syntax(line, col, "unexpected `)`"))?;
                push(&mut stack, &mut top, Sexp::List { items, line: l, col: c0 });
            }
            '"' => {
                let (l, c0) = (line, col);
                let mut text = String::new();
                loop {
                    match chars.next() {
                        Some('"') => {
                            col += 1;
                            break;
                        }
                        Some('\n') => return Err(Error::syntax(l, c0, "unterminated string")),
                        Some(ch) => {
                            col += 1;
                            text.push(ch);
                        }
                        None => return Err(Error::syntax(l, c0, "unterminated string")),
                    }
                }
                push(&mut stack, &mut top, Sexp::Atom { text, quoted: true, line: l, col: c0 });
            }
            _ => {
                let (l, c0) = (line, col);
                let mut text = String::from(c);
                while let Some(&n) = chars.peek() {
                    if n.is_whitespace() || matches!(n, '(' | ')' | ';' | '"') {
                        break;
                    }
                    text.push(n);
                    chars.next();
                    col += 1;
                }
                push(&mut stack, &mut top, Sexp::Atom { text, quoted: false, line: l, col: c0 });
            }
        }
    }
    if let Some((_, l, c0)) = stack.pop() {
        return Err(Error::syntax(l, c0, "unclosed `(`"));
    }
    Ok(top)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_nested_lists_with_positions() {
        let forms = read_all("; header\n(allow a b (file (read open)))\n(type t)").unwrap();
        assert_eq!(forms.len(), 2);
        assert_eq!(forms[0].head(), Some("allow"));
        assert_eq!(forms[0].pos(), (2, 1));
        assert_eq!(forms[1].line(), 3);
        let items = forms[0].list().unwrap();
        assert_eq!(items[3].list().unwrap()[1].list().unwrap().len(), 2);
    }

    #[test]
    fn reports_unbalanced_parens() {
        match read_all("(type t)\n  (allow a b (file (read))") {
            Err(Error::Syntax { line, col, .. }) => assert_eq!((line, col), (2, 3)),
            other => panic!("{other:?}"),
        }
        match read_all("(type t))") {
            Err(Error::Syntax { line, col, .. }) => assert_eq!((line, col), (1, 9)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn quoted_atoms() {
        let forms = read_all(r#"(typetransition a b file "name with space" c)"#).unwrap();
        let items = forms[0].list().unwrap();
        assert!(matches!(&items[4], Sexp::Atom { text, quoted: true, .. } if text == "name with space"));
        assert_eq!(items[4].atom(), None);
    }
}
