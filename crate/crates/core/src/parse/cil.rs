//! CIL policy reader.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use super::sexpr::{read_all, Sexp};
use super::ParseOptions;
use crate::error::{Error, Result};
use crate::policy::{Ident, Interner, Op, Origin, PolicyDb, PolicyRule, SetExpr, TypeTransition};

/// Parses CIL text into a policy fragment without checking declarations.
pub fn parse_cil_fragment(text: &str, opts: &ParseOptions) -> Result<PolicyDb> {
    let forms = read_all(text)?;
    let mut reader = CilReader {
        opts,
        db: PolicyDb::new(),
        interner: Interner::new(),
        scopes: Vec::new(),
        classpermissions: BTreeMap::new(),
    };
    reader.read_forms(&forms)?;
    Ok(reader.db)
}

struct Scope {
    prefix: String,
    locals: HashSet<String>,
}

struct CilReader<'a> {
    opts: &'a ParseOptions,
    db: PolicyDb,
    interner: Interner,
    scopes: Vec<Scope>,
    classpermissions: BTreeMap<Ident, (Ident, BTreeSet<Ident>)>,
}

fn err(sexp: &Sexp, msg: impl Into<String>) -> Error {
    let (line, col) = sexp.pos();
    Error::syntax(line, col, msg)
}

const DECLARING_FORMS: &[&str] = &["type", "typeattribute", "block", "typealias", "classpermission"];

impl<'a> CilReader<'a> {
    fn origin(&self, form: &Sexp) -> Origin {
        Origin::new(&self.opts.source, form.line())
    }

    fn ident(&mut self, sexp: &Sexp, text: &str) -> Result<Ident> {
        self.interner
            .intern(text)
            .map_err(|_| err(sexp, format!("invalid identifier {text:?}")))
    }

    /// Qualifies a name declared inside an enclosing block.
    fn qualified(&mut self, sexp: &Sexp) -> Result<Ident> {
        let text = sexp.atom().ok_or_else(|| err(sexp, "expected a name"))?;
        if let Some(global) = text.strip_prefix('.') {
            return self.ident(sexp, global);
        }
        let resolved = self
            .scopes
            .iter()
            .rev()
            .find(|s| s.locals.contains(text))
            .map(|s| format!("{}.{}", s.prefix, text));
        match resolved {
            Some(full) => self.ident(sexp, &full),
            None => self.ident(sexp, text),
        }
    }

    fn declared_name(&mut self, sexp: &Sexp) -> Result<Ident> {
        let text = sexp.atom().ok_or_else(|| err(sexp, "expected a name"))?;
        match self.scopes.last() {
            Some(scope) => {
                let full = format!("{}.{}", scope.prefix, text);
                self.ident(sexp, &full)
            }
            None => self.ident(sexp, text),
        }
    }

    fn read_forms(&mut self, forms: &[Sexp]) -> Result<()> {
        for form in forms {
            self.read_form(form)?;
        }
        Ok(())
    }

    fn read_form(&mut self, form: &Sexp) -> Result<()> {
        let Some(items) = form.list() else {
            return Err(err(form, "expected a parenthesized statement"));
        };
        let Some(head) = form.head() else {
            self.db.skipped += 1;
            return Ok(());
        };
        let args = &items[1..];
        match head {
            "type" => {
                let name = self.declared_name(arg(form, args, 0)?)?;
                self.db.declare_type(name);
            }
            "typeattribute" => {
                let name = self.declared_name(arg(form, args, 0)?)?;
                self.db.declare_attribute(name);
            }
            "typeattributeset" => {
                let target = arg(form, args, 0)?;
                if target.atom() == Some("cil_gen_require") {
                    self.db.skipped += 1;
                    return Ok(());
                }
                let attr = self.qualified(target)?;
                let expr = self.expr(arg(form, args, 1)?)?;
                self.db.add_membership(attr, expr);
            }
            "allow" | "neverallow" => {
                let op = if head == "allow" { Op::Allow } else { Op::Neverallow };
                let subject = self.expr(arg(form, args, 0)?)?;
                let target = self.expr(arg(form, args, 1)?)?;
                let (class, perms) = self.class_perms(arg(form, args, 2)?)?;
                let origin = self.origin(form);
                let rule = PolicyRule::new(op, subject, target, class, perms, origin)
                    .ok_or_else(|| err(form, "empty permission list"))?;
                self.db.rules.push(rule);
            }
            "typetransition" => {
                // (typetransition source exec class [ "name" ] result)
                if !(args.len() == 4 || args.len() == 5) {
                    return Err(err(form, "typetransition takes 4 or 5 arguments"));
                }
                let source = self.qualified(&args[0])?;
                let exec_type = self.qualified(&args[1])?;
                let class = self.qualified(&args[2])?;
                let result = self.qualified(&args[args.len() - 1])?;
                let origin = self.origin(form);
                self.db.transitions.push(TypeTransition {
                    source,
                    exec_type,
                    class,
                    result,
                    origin,
                });
            }
            "class" | "common" => {
                let name = self.declared_name(arg(form, args, 0)?)?;
                let perms = self.atom_list(arg(form, args, 1)?)?;
                self.db.declare_class_perms(name, perms);
            }
            "classcommon" => {
                let class = self.qualified(arg(form, args, 0)?)?;
                let common = self.qualified(arg(form, args, 1)?)?;
                let inherited = self.db.classes.get(&common).cloned().unwrap_or_default();
                self.db.declare_class_perms(class, inherited);
            }
            "classpermission" => {
                self.declared_name(arg(form, args, 0)?)?;
            }
            "classpermissionset" => {
                let name = self.qualified(arg(form, args, 0)?)?;
                let cp = self.class_perms(arg(form, args, 1)?)?;
                self.classpermissions.insert(name, cp);
            }
            "block" => {
                let name = arg(form, args, 0)?
                    .atom()
                    .ok_or_else(|| err(form, "block name expected"))?
                    .to_string();
                let prefix = match self.scopes.last() {
                    Some(s) => format!("{}.{}", s.prefix, name),
                    None => name,
                };
                let locals = args[1..]
                    .iter()
                    .filter(|f| f.head().is_some_and(|h| DECLARING_FORMS.contains(&h)))
                    .filter_map(|f| f.list().and_then(|i| i.get(1)).and_then(Sexp::atom))
                    .map(str::to_string)
                    .collect();
                self.scopes.push(Scope { prefix, locals });
                let res = self.read_forms(&args[1..]);
                self.scopes.pop();
                res?;
            }
            _ => self.db.skipped += 1,
        }
        Ok(())
    }

    /// Type set expression: a name, a list of names (union) or an operator
    /// form `(and ..)`, `(or ..)`, `(not ..)`, `(xor a b)`, `(all)`.
    fn expr(&mut self, sexp: &Sexp) -> Result<SetExpr> {
        if sexp.atom().is_some() {
            return Ok(SetExpr::Name(self.qualified(sexp)?));
        }
        let items = sexp.list().ok_or_else(|| err(sexp, "expected a type expression"))?;
        match sexp.head() {
            Some("all") if items.len() == 1 => Ok(SetExpr::All),
            Some("and") => Ok(SetExpr::And(self.operands(&items[1..])?)),
            Some("or") => Ok(SetExpr::Or(self.operands(&items[1..])?)),
            Some("not") => {
                let ops = self.operands(&items[1..])?;
                if ops.is_empty() {
                    return Err(err(sexp, "`not` needs an operand"));
                }
                Ok(SetExpr::not(SetExpr::or(ops)))
            }
            Some("xor") => {
                let ops = self.operands(&items[1..])?;
                let [a, b]: [SetExpr; 2] = ops
                    .try_into()
                    .map_err(|_| err(sexp, "`xor` takes exactly two operands"))?;
                Ok(SetExpr::Or(vec![
                    SetExpr::And(vec![a.clone(), SetExpr::not(b.clone())]),
                    SetExpr::And(vec![SetExpr::not(a), b]),
                ]))
            }
            _ => Ok(SetExpr::or(self.operands(items)?)),
        }
    }

    /// Operands of a set operator. A bare `not` atom negates the operand that
    /// follows it, as in `(and (appdomain) not (shell))`.
    fn operands(&mut self, items: &[Sexp]) -> Result<Vec<SetExpr>> {
        let mut out = Vec::with_capacity(items.len());
        let mut iter = items.iter();
        while let Some(item) = iter.next() {
            if item.atom() == Some("not") {
                let next = iter.next().ok_or_else(|| err(item, "`not` needs an operand"))?;
                out.push(SetExpr::not(self.expr(next)?));
            } else {
                out.push(self.expr(item)?);
            }
        }
        Ok(out)
    }

    fn atom_list(&mut self, sexp: &Sexp) -> Result<Vec<Ident>> {
        let items = sexp.list().ok_or_else(|| err(sexp, "expected a list"))?;
        items.iter().map(|s| {
            let text = s.atom().ok_or_else(|| err(s, "expected a name"))?;
            self.ident(s, text)
        }).collect()
    }

    /// `(class (perm ...))` or the name of a `classpermissionset`.
    fn class_perms(&mut self, sexp: &Sexp) -> Result<(Ident, BTreeSet<Ident>)> {
        if sexp.atom().is_some() {
            let name = self.qualified(sexp)?;
            return self
                .classpermissions
                .get(&name)
                .cloned()
                .ok_or_else(|| err(sexp, format!("unknown classpermission `{name}`")));
        }
        let items = sexp.list().ok_or_else(|| err(sexp, "expected (class (perms))"))?;
        if items.len() != 2 {
            return Err(err(sexp, "expected (class (perms))"));
        }
        let class_text = items[0].atom().ok_or_else(|| err(&items[0], "expected a class name"))?;
        let class = self.ident(&items[0], class_text)?;
        let perms = self.perm_expr(&class, &items[1])?;
        if perms.is_empty() {
            return Err(err(sexp, "empty permission list"));
        }
        Ok((class, perms))
    }

    fn class_universe(&self, class: &Ident) -> BTreeSet<Ident> {
        self.db
            .classes
            .get(class)
            .or_else(|| self.opts.class_perms.perms(class))
            .cloned()
            .unwrap_or_default()
    }

    fn perm_expr(&mut self, class: &Ident, sexp: &Sexp) -> Result<BTreeSet<Ident>> {
        if let Some(text) = sexp.atom() {
            if text == "all" {
                return Ok(self.class_universe(class));
            }
            return Ok(BTreeSet::from([self.ident(sexp, text)?]));
        }
        let items = sexp.list().ok_or_else(|| err(sexp, "expected permissions"))?;
        match sexp.head() {
            Some("all") if items.len() == 1 => Ok(self.class_universe(class)),
            Some("not") => {
                let mut excluded = BTreeSet::new();
                for item in &items[1..] {
                    excluded.extend(self.perm_expr(class, item)?);
                }
                Ok(self.class_universe(class).difference(&excluded).cloned().collect())
            }
            Some("and") => {
                let mut acc: Option<BTreeSet<Ident>> = None;
                for item in &items[1..] {
                    let next = self.perm_expr(class, item)?;
                    acc = Some(match acc {
                        None => next,
                        Some(prev) => prev.intersection(&next).cloned().collect(),
                    });
                }
                Ok(acc.unwrap_or_default())
            }
            _ => {
                let start = usize::from(sexp.head() == Some("or"));
                let mut acc = BTreeSet::new();
                for item in &items[start..] {
                    acc.extend(self.perm_expr(class, item)?);
                }
                Ok(acc)
            }
        }
    }
}

fn arg<'s>(form: &Sexp, args: &'s [Sexp], i: usize) -> Result<&'s Sexp> {
    args.get(i)
        .ok_or_else(|| err(form, format!("missing argument {}", i + 1)))
}
