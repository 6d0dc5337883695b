//! Random small policies and a brute-force expansion oracle that never
//! touches the library resolver.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::fmt::Write;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(rel: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[derive(Clone, Debug)]
pub enum Expr {
    Name(String),
    And(Vec<Expr>),
    Or(Vec<Expr>),
    Not(Vec<Expr>),
}

impl Expr {
    fn cil(&self) -> String {
        let list = |items: &[Expr]| items.iter().map(Expr::cil).collect::<Vec<_>>().join(" ");
        match self {
            Expr::Name(n) => format!("({n})"),
            Expr::And(items) => format!("(and {})", list(items)),
            Expr::Or(items) => format!("(or {})", list(items)),
            Expr::Not(items) => format!("(not {})", list(items)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Rule {
    pub neverallow: bool,
    pub subject: String,
    pub target: String,
    pub class: &'static str,
    pub perms: Vec<&'static str>,
}

#[derive(Clone, Debug)]
pub struct RandomPolicy {
    pub types: Vec<String>,
    pub attrs: Vec<(String, Expr)>,
    pub rules: Vec<Rule>,
}

pub type Tuple = (String, String, String, String, bool);

const CLASSES: [(&str, [&str; 4]); 2] = [
    ("file", ["read", "write", "open", "getattr"]),
    ("dir", ["search", "read", "write", "add_name"]),
];

fn random_expr(rng: &mut ChaCha8Rng, names: &[String], depth: usize) -> Expr {
    if depth == 0 || rng.gen_bool(0.4) {
        return Expr::Name(names.choose(rng).unwrap().clone());
    }
    let n = rng.gen_range(1..=3);
    let items = (0..n).map(|_| random_expr(rng, names, depth - 1)).collect();
    match rng.gen_range(0..3) {
        0 => Expr::And(items),
        1 => Expr::Or(items),
        _ => Expr::Not(items),
    }
}

impl RandomPolicy {
    /// Up to 8 types and 3 attributes. Each attribute only refers to types
    /// and earlier attributes.
    pub fn generate(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let types: Vec<String> = (0..rng.gen_range(1..=8)).map(|i| format!("t{i}")).collect();
        let mut names = types.clone();
        let mut attrs = Vec::new();
        for j in 0..rng.gen_range(0..=3) {
            let name = format!("a{j}");
            let expr = random_expr(&mut rng, &names, 2);
            names.push(name.clone());
            attrs.push((name, expr));
        }
        let mut rules = Vec::new();
        for _ in 0..rng.gen_range(1..=6) {
            let (class, all) = CLASSES[rng.gen_range(0..CLASSES.len())];
            let mut perms: Vec<&str> = all.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
            if perms.is_empty() {
                perms.push(all[0]);
            }
            let target = if rng.gen_bool(0.15) {
                "self".to_string()
            } else {
                names.choose(&mut rng).unwrap().clone()
            };
            rules.push(Rule {
                neverallow: rng.gen_bool(0.4),
                subject: names.choose(&mut rng).unwrap().clone(),
                target,
                class,
                perms,
            });
        }
        RandomPolicy { types, attrs, rules }
    }

    pub fn to_cil(&self) -> String {
        let mut out = String::new();
        for t in &self.types {
            let _ = writeln!(out, "(type {t})");
        }
        for (name, expr) in &self.attrs {
            let _ = writeln!(out, "(typeattribute {name})");
            let _ = writeln!(out, "(typeattributeset {name} {})", expr.cil());
        }
        for r in &self.rules {
            let op = if r.neverallow { "neverallow" } else { "allow" };
            let _ = writeln!(
                out,
                "({op} {} {} ({} ({})))",
                r.subject,
                r.target,
                r.class,
                r.perms.join(" ")
            );
        }
        out
    }

    fn member(&self, ty: &str, name: &str) -> bool {
        if self.types.iter().any(|t| t == name) {
            return ty == name;
        }
        let (_, expr) = self.attrs.iter().find(|(n, _)| n == name).expect("declared name");
        self.eval(ty, expr)
    }

    fn eval(&self, ty: &str, expr: &Expr) -> bool {
        match expr {
            Expr::Name(n) => self.member(ty, n),
            Expr::And(items) => items.iter().all(|e| self.eval(ty, e)),
            Expr::Or(items) => items.iter().any(|e| self.eval(ty, e)),
            Expr::Not(items) => !items.iter().any(|e| self.eval(ty, e)),
        }
    }

    /// Every (subject, target, class, permission, is_neverallow) the rules
    /// denote, by testing each pair of concrete types directly.
    pub fn brute_force(&self) -> BTreeSet<Tuple> {
        let mut out = BTreeSet::new();
        for r in &self.rules {
            for s in &self.types {
                if !self.member(s, &r.subject) {
                    continue;
                }
                for t in &self.types {
                    let hit = if r.target == "self" { s == t } else { self.member(t, &r.target) };
                    if hit {
                        for p in &r.perms {
                            out.insert((s.clone(), t.clone(), r.class.to_string(), p.to_string(), r.neverallow));
                        }
                    }
                }
            }
        }
        out
    }
}
