//! CoNLL-U reader for dependency-parsed comment sentences.
//!
//! Documents are delimited by `# unit = <name>` and `# polarity = <allow|neverallow>`
//! sentence comments; a value stays in effect until the next comment of the
//! same key.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{Ident, Op};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepToken {
    /// 1-based position in the sentence.
    pub index: usize,
    pub form: String,
    pub lemma: String,
    pub upos: String,
    /// Index of the governor, 0 for the root.
    pub head: usize,
    pub deprel: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepSentence {
    pub unit: Option<Ident>,
    pub polarity: Option<Op>,
    pub text: Option<String>,
    pub tokens: Vec<DepToken>,
}

impl DepSentence {
    /// Token at 1-based `index`.
    pub fn token(&self, index: usize) -> Option<&DepToken> {
        index.checked_sub(1).and_then(|i| self.tokens.get(i))
    }

    /// Checks that indices are 1..=n in order, heads are in range, exactly
    /// one token is the root and every token reaches it.
    pub fn validate(&self) -> Result<()> {
        let n = self.tokens.len();
        for (i, t) in self.tokens.iter().enumerate() {
            if t.index != i + 1 {
                return Err(Error::MalformedTree(format!("token {} out of sequence", t.index)));
            }
            if t.head > n {
                return Err(Error::MalformedTree(format!("token {} has head {} beyond {n}", t.index, t.head)));
            }
        }
        let roots = self.tokens.iter().filter(|t| t.head == 0).count();
        if roots != 1 {
            return Err(Error::MalformedTree(format!("{roots} root tokens")));
        }
        for t in &self.tokens {
            let mut cur = t.head;
            let mut steps = 0;
            while cur != 0 {
                steps += 1;
                if steps > n {
                    return Err(Error::MalformedTree(format!("cycle through token {}", t.index)));
                }
                cur = self.tokens[cur - 1].head;
            }
        }
        Ok(())
    }
}

fn parse_token(line: &str, line_no: usize) -> Result<Option<DepToken>> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 10 {
        return Err(Error::syntax(line_no, 1, format!("expected 10 columns, found {}", cols.len())));
    }
    // Multiword ranges (`3-4`) and empty nodes (`5.1`) carry no tree edges.
    if cols[0].contains(['-', '.']) {
        return Ok(None);
    }
    let number = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::syntax(line_no, 1, format!("bad {what} {s:?}")))
    };
    Ok(Some(DepToken {
        index: number(cols[0], "token id")?,
        form: cols[1].to_string(),
        lemma: if cols[2] == "_" { cols[1].to_lowercase() } else { cols[2].to_string() },
        upos: cols[3].to_string(),
        head: number(cols[6], "head")?,
        deprel: cols[7].to_string(),
    }))
}

pub fn parse_conllu(text: &str) -> Result<Vec<DepSentence>> {
    let mut out = Vec::new();
    let mut unit: Option<Ident> = None;
    let mut polarity: Option<Op> = None;
    let mut current = DepSentence::default();
    let mut open = false;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            if open {
                out.push(std::mem::take(&mut current));
                open = false;
            }
            continue;
        }
        if !open {
            current = DepSentence {
                unit: unit.clone(),
                polarity,
                ..Default::default()
            };
            open = true;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                let value = value.trim();
                match key.trim() {
                    "unit" => {
                        unit = Some(Ident::new(value)?);
                        current.unit = unit.clone();
                    }
                    "polarity" => {
                        polarity = Some(value.parse::<Op>().map_err(|e| Error::syntax(i + 1, 1, e))?);
                        current.polarity = polarity;
                    }
                    "text" => current.text = Some(value.to_string()),
                    _ => {}
                }
            }
            continue;
        }
        if let Some(token) = parse_token(line, i + 1)? {
            current.tokens.push(token);
        }
    }
    if open {
        out.push(current);
    }
    out.retain(|s| !s.tokens.is_empty());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOLDEN: &str = "# unit = app\n# polarity = allow\n\
        # text = allow apps to send dump information to dumpstate\n\
        1\tallow\tallow\tVERB\t_\t_\t0\troot\t_\t_\n\
        2\tapps\tapp\tNOUN\t_\t_\t1\tobj\t_\t_\n\
        3\tto\tto\tPART\t_\t_\t4\tmark\t_\t_\n\
        4\tsend\tsend\tVERB\t_\t_\t1\txcomp\t_\t_\n\
        5\tdump\tdump\tNOUN\t_\t_\t6\tcompound\t_\t_\n\
        6\tinformation\tinformation\tNOUN\t_\t_\t4\tobj\t_\t_\n\
        7\tto\tto\tADP\t_\t_\t8\tcase\t_\t_\n\
        8\tdumpstate\tdumpstate\tNOUN\t_\t_\t4\tobl\t_\t_\n\n";

    #[test]
    fn reads_golden_block() {
        let s = parse_conllu(GOLDEN).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].unit.as_ref().unwrap().as_str(), "app");
        assert_eq!(s[0].polarity, Some(Op::Allow));
        assert_eq!(s[0].tokens.len(), 8);
        assert_eq!(s[0].token(6).unwrap().deprel, "obj");
        s[0].validate().unwrap();
    }

    #[test]
    fn headers_carry_forward() {
        let text = format!("{GOLDEN}1\tread\tread\tVERB\t_\t_\t0\troot\t_\t_\n\n# polarity = neverallow\n1\tx\tx\tNOUN\t_\t_\t0\troot\t_\t_\n");
        let s = parse_conllu(&text).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s[1].unit.as_ref().unwrap().as_str(), "app");
        assert_eq!(s[1].polarity, Some(Op::Allow));
        assert_eq!(s[2].polarity, Some(Op::Neverallow));
    }

    #[test]
    fn multiword_and_empty_nodes_skipped() {
        let s = parse_conllu(
            "1-2\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n1\tdo\tdo\tAUX\t_\t_\t2\taux\t_\t_\n2\tgo\tgo\tVERB\t_\t_\t0\troot\t_\t_\n2.1\tx\tx\tX\t_\t_\t_\t_\t_\t_\n",
        )
        .unwrap();
        assert_eq!(s[0].tokens.len(), 2);
        s[0].validate().unwrap();
    }

    #[test]
    fn malformed_trees_rejected() {
        let two_roots = parse_conllu("1\ta\ta\tX\t_\t_\t0\troot\t_\t_\n2\tb\tb\tX\t_\t_\t0\troot\t_\t_\n").unwrap();
        assert!(matches!(two_roots[0].validate(), Err(Error::MalformedTree(_))));
        let cycle = parse_conllu(
            "1\ta\ta\tX\t_\t_\t0\troot\t_\t_\n2\tb\tb\tX\t_\t_\t3\tdep\t_\t_\n3\tc\tc\tX\t_\t_\t2\tdep\t_\t_\n",
        )
        .unwrap();
        assert!(matches!(cycle[0].validate(), Err(Error::MalformedTree(_))));
        let out_of_range = parse_conllu("1\ta\ta\tX\t_\t_\t5\troot\t_\t_\n").unwrap();
        assert!(out_of_range[0].validate().is_err());
    }

    #[test]
    fn bad_columns_are_syntax_errors() {
        assert!(matches!(parse_conllu("1\ta\ta\n"), Err(Error::Syntax { line: 1, .. })));
        assert!(parse_conllu("x\ta\ta\tX\t_\t_\t0\troot\t_\t_\n").is_err());
    }

    #[test]
    fn empty_input() {
        assert!(parse_conllu("").unwrap().is_empty());
    }
}
