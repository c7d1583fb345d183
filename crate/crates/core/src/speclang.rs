//! Textual formula syntax ("ETL-text v1") and the target manifest.
//!
//! ```text
//! formula := or
//! or      := and { "|" and }
//! and     := until { "&" until }
//! until   := unary [ "U" until ]
//! unary   := "!" unary | "F" unary | "G" unary | atom
//! atom    := "(" formula ")" | "true" | pred
//! pred    := "dist" "(" "z" "," IDENT ")" CMP NUMBER
//! CMP     := "<=" | "<" | ">" | ">="
//! ```
//!
//! `<` and `<=` produce reach predicates, `>` and `>=` avoid predicates.
//! The lexer also accepts `¬ ∧ ∨ ◊ □ ≤ ≥` as aliases.
//!
//! A manifest is a JSON file binding identifiers to embedding files:
//!
//! ```json
//! {"targets": {"g1": {"file": "g1.json", "metric": "l2", "threshold": 0.5}}}
//! ```
//!
//! Relative file paths are resolved against the manifest's directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::embedding::Embedding;
use crate::error::{Error, Position, Result};
use crate::logic::{Formula, Predicate, Sense, TargetRef};
use crate::metrics::MetricRegistry;

/// Parenthesis and operator nesting beyond this is rejected.
pub const MAX_NESTING: usize = 256;

#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub target: Arc<TargetRef>,
    pub file: Option<PathBuf>,
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct Manifest {
    entries: BTreeMap<String, ManifestEntry>,
}

impl Manifest {
    pub fn new() -> Self {
        Manifest::default()
    }

    /// Builds an in-memory manifest from already-resolved targets.
    pub fn from_targets(targets: impl IntoIterator<Item = Arc<TargetRef>>) -> Result<Self> {
        let mut m = Manifest::new();
        for t in targets {
            m.insert(t, None, None)?;
        }
        Ok(m)
    }

    pub fn insert(
        &mut self,
        target: Arc<TargetRef>,
        file: Option<PathBuf>,
        threshold: Option<f64>,
    ) -> Result<()> {
        if !is_identifier(&target.name) {
            return Err(Error::schema(
                "manifest",
                format!("`{}` is not a valid identifier", target.name),
            ));
        }
        target.metric.check_compatible(&target.embedding)?;
        self.entries.insert(
            target.name.clone(),
            ManifestEntry {
                target,
                file,
                threshold,
            },
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ManifestEntry> {
        self.entries.get(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &ManifestEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    targets: BTreeMap<String, ManifestFileEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFileEntry {
    file: PathBuf,
    metric: String,
    #[serde(default)]
    threshold: Option<f64>,
    #[serde(default)]
    role: Option<String>,
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    load_manifest_with(path, MetricRegistry::builtin())
}

pub fn load_manifest_with(path: impl AsRef<Path>, metrics: &MetricRegistry) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ManifestFile = serde_json::from_str(&text)
        .map_err(|e| Error::schema(path.display().to_string(), e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut manifest = Manifest::new();
    for (name, entry) in file.targets {
        let metric = metrics.get(&entry.metric)?;
        let emb_path = base.join(&entry.file);
        let emb_text = std::fs::read_to_string(&emb_path).map_err(|e| Error::io(&emb_path, e))?;
        let embedding: Embedding = serde_json::from_str(&emb_text)
            .map_err(|e| Error::schema(emb_path.display().to_string(), e))?;
        if let Some(t) = entry.threshold {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::NegativeThreshold(t));
            }
        }
        let target = TargetRef::with_role(
            name,
            embedding,
            metric,
            entry.role.unwrap_or_default(),
        )?;
        manifest.insert(target, Some(emb_path), entry.threshold)?;
    }
    Ok(manifest)
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Formula text plus the manifest its identifiers resolve against.
#[derive(Debug, Clone)]
pub struct SpecSource<'a> {
    pub text: &'a str,
    pub manifest: &'a Manifest,
}

impl<'a> SpecSource<'a> {
    pub fn new(text: &'a str, manifest: &'a Manifest) -> Self {
        SpecSource { text, manifest }
    }
}

pub fn parse(src: &SpecSource<'_>) -> Result<Formula> {
    parse_formula(src.text, src.manifest)
}

pub fn parse_formula(text: &str, manifest: &Manifest) -> Result<Formula> {
    let tokens = lex(text)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        depth: 0,
        manifest,
    };
    let f = p.formula()?;
    match p.peek() {
        Tok::Eof => Ok(f),
        _ => Err(p.error("unexpected input after formula", &["end of input", "&", "|", "U"])),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LParen,
    RParen,
    Comma,
    Not,
    And,
    Or,
    Eventually,
    Always,
    Cmp(Cmp),
    Number(String),
    Word(String),
    Eof,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Cmp {
    Le,
    Lt,
    Gt,
    Ge,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Not => "`!`".into(),
            Tok::And => "`&`".into(),
            Tok::Or => "`|`".into(),
            Tok::Eventually => "`F`".into(),
            Tok::Always => "`G`".into(),
            Tok::Cmp(_) => "comparison".into(),
            Tok::Number(n) => format!("number `{n}`"),
            Tok::Word(w) => format!("`{w}`"),
            Tok::Eof => "end of input".into(),
        }
    }
}

struct Spanned {
    tok: Tok,
    pos: Position,
}

fn lex(text: &str) -> Result<Vec<Spanned>> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    let (mut line, mut col) = (1usize, 1usize);
    let advance = |c: char, line: &mut usize, col: &mut usize| {
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while let Some(&(start, c)) = chars.peek() {
        let pos = Position { line, col };
        if c.is_whitespace() {
            chars.next();
            advance(c, &mut line, &mut col);
            continue;
        }
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            '!' | '¬' => Some(Tok::Not),
            '&' | '∧' => Some(Tok::And),
            '|' | '∨' => Some(Tok::Or),
            '◊' | '◇' => Some(Tok::Eventually),
            '□' => Some(Tok::Always),
            '≤' => Some(Tok::Cmp(Cmp::Le)),
            '≥' => Some(Tok::Cmp(Cmp::Ge)),
            _ => None,
        };
        if let Some(tok) = single {
            chars.next();
            advance(c, &mut line, &mut col);
            out.push(Spanned { tok, pos });
            continue;
        }
        if c == '<' || c == '>' {
            chars.next();
            col += 1;
            let eq = matches!(chars.peek(), Some((_, '=')));
            if eq {
                chars.next();
                col += 1;
            }
            let cmp = match (c, eq) {
                ('<', true) => Cmp::Le,
                ('<', false) => Cmp::Lt,
                ('>', true) => Cmp::Ge,
                _ => Cmp::Gt,
            };
            out.push(Spanned {
                tok: Tok::Cmp(cmp),
                pos,
            });
            continue;
        }
        if c.is_ascii_digit() || c == '.' || c == '-' || c == '+' {
            let mut end = start;
            let mut prev = '\0';
            while let Some(&(i, d)) = chars.peek() {
                let sign_ok = (d == '-' || d == '+') && (i == start || prev == 'e' || prev == 'E');
                if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || sign_ok {
                    chars.next();
                    col += 1;
                    end = i + d.len_utf8();
                    prev = d;
                } else {
                    break;
                }
            }
            let lit = &text[start..end];
            if lit.parse::<f64>().is_err() {
                return Err(Error::Lex {
                    pos,
                    message: format!("malformed number `{lit}`"),
                });
            }
            out.push(Spanned {
                tok: Tok::Number(lit.to_string()),
                pos,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut end = start;
            while let Some(&(i, d)) = chars.peek() {
                if d.is_ascii_alphanumeric() || d == '_' {
                    chars.next();
                    col += 1;
                    end = i + 1;
                } else {
                    break;
                }
            }
            let word = &text[start..end];
            let tok = match word {
                "F" => Tok::Eventually,
                "G" => Tok::Always,
                _ => Tok::Word(word.to_string()),
            };
            out.push(Spanned { tok, pos });
            continue;
        }
        return Err(Error::Lex {
            pos,
            message: format!("unexpected character `{}`", c.escape_debug()),
        });
    }
    out.push(Spanned {
        tok: Tok::Eof,
        pos: Position { line, col },
    });
    Ok(out)
}

struct Parser<'m> {
    tokens: Vec<Spanned>,
    pos: usize,
    depth: usize,
    manifest: &'m Manifest,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn here(&self) -> Position {
        self.tokens[self.pos].pos
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.pos].tok.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, message: &str, expected: &[&str]) -> Error {
        let found = self.peek().describe();
        let expected: Vec<String> = expected.iter().map(|s| s.to_string()).collect();
        let message = if expected.is_empty() {
            format!("{message}, found {found}")
        } else {
            format!("{message}, found {found}; expected {}", expected.join(" or "))
        };
        Error::Parse {
            pos: self.here(),
            message,
            expected,
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error("unexpected token", &[what]))
        }
    }

    fn expect_word(&mut self, word: &str) -> Result<()> {
        match self.peek() {
            Tok::Word(w) if w == word => {
                self.bump();
                Ok(())
            }
            _ => Err(self.error("unexpected token", &[&format!("`{word}`")])),
        }
    }

    fn enter(&mut self) -> Result<()> {
        self.depth += 1;
        if self.depth > MAX_NESTING {
            return Err(self.error(&format!("nesting deeper than {MAX_NESTING}"), &[]));
        }
        Ok(())
    }

    fn formula(&mut self) -> Result<Formula> {
        self.enter()?;
        let mut f = self.and()?;
        while *self.peek() == Tok::Or {
            self.bump();
            f = Formula::or(f, self.and()?);
        }
        self.depth -= 1;
        Ok(f)
    }

    fn and(&mut self) -> Result<Formula> {
        let mut f = self.until()?;
        while *self.peek() == Tok::And {
            self.bump();
            f = Formula::and(f, self.until()?);
        }
        Ok(f)
    }

    fn until(&mut self) -> Result<Formula> {
        self.enter()?;
        let lhs = self.unary()?;
        let f = if matches!(self.peek(), Tok::Word(w) if w == "U") {
            self.bump();
            Formula::until(lhs, self.until()?)
        } else {
            lhs
        };
        self.depth -= 1;
        Ok(f)
    }

    fn unary(&mut self) -> Result<Formula> {
        self.enter()?;
        let f = match self.peek() {
            Tok::Not => {
                self.bump();
                Formula::not(self.unary()?)
            }
            Tok::Eventually => {
                self.bump();
                Formula::eventually(self.unary()?)
            }
            Tok::Always => {
                self.bump();
                Formula::always(self.unary()?)
            }
            _ => self.atom()?,
        };
        self.depth -= 1;
        Ok(f)
    }

    fn atom(&mut self) -> Result<Formula> {
        match self.peek().clone() {
            Tok::LParen => {
                self.bump();
                let f = self.formula()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(f)
            }
            Tok::Word(w) if w == "true" => {
                self.bump();
                Ok(Formula::True)
            }
            Tok::Word(w) if w == "dist" => self.pred(),
            _ => Err(self.error(
                "expected a formula",
                &["`(`", "`true`", "`dist`", "`!`", "`F`", "`G`"],
            )),
        }
    }

    fn pred(&mut self) -> Result<Formula> {
        self.expect_word("dist")?;
        self.expect(Tok::LParen, "`(`")?;
        self.expect_word("z")?;
        self.expect(Tok::Comma, "`,`")?;
        let name_pos = self.here();
        let name = match self.peek().clone() {
            Tok::Word(w) => {
                self.bump();
                w
            }
            // `F` and `G` lex as operators but are legal target names here.
            Tok::Eventually => {
                self.bump();
                "F".to_string()
            }
            Tok::Always => {
                self.bump();
                "G".to_string()
            }
            _ => return Err(self.error("unexpected token", &["identifier"])),
        };
        self.expect(Tok::RParen, "`)`")?;
        let sense = match self.peek() {
            Tok::Cmp(Cmp::Le | Cmp::Lt) => Sense::Reach,
            Tok::Cmp(Cmp::Gt | Cmp::Ge) => Sense::Avoid,
            _ => return Err(self.error("unexpected token", &["`<=`", "`<`", "`>`", "`>=`"])),
        };
        self.bump();
        let num_pos = self.here();
        let threshold = match self.peek().clone() {
            Tok::Number(n) => {
                self.bump();
                n.parse::<f64>().map_err(|_| Error::Lex {
                    pos: num_pos,
                    message: format!("malformed number `{n}`"),
                })?
            }
            _ => return Err(self.error("unexpected token", &["number"])),
        };
        if !(threshold.is_finite() && threshold >= 0.0) {
            return Err(Error::Parse {
                pos: num_pos,
                message: format!("threshold must be finite and nonnegative, got {threshold}"),
                expected: vec!["nonnegative number".into()],
            });
        }
        let entry = self
            .manifest
            .get(&name)
            .ok_or(Error::UnresolvedIdentifier {
                pos: name_pos,
                name: name.clone(),
            })?;
        entry.target.metric.check_compatible(&entry.target.embedding)?;
        Ok(Formula::Pred(Predicate::new(
            entry.target.clone(),
            threshold,
            sense,
        )?))
    }
}

/// Canonical, fully parenthesized text that parses back to the same tree.
pub fn pretty(f: &Formula) -> String {
    let mut out = String::new();
    write_formula(f, &mut out);
    out
}

fn write_formula(f: &Formula, out: &mut String) {
    match f {
        Formula::True => out.push_str("true"),
        Formula::Pred(p) => {
            let cmp = match p.sense {
                Sense::Reach => "<=",
                Sense::Avoid => ">",
            };
            // `{}` on f64 prints the shortest string that round-trips exactly.
            let _ = write!(out, "(dist(z, {}) {cmp} {})", p.target.name, p.threshold);
        }
        Formula::Not(g) => write_unary("!", g, out),
        Formula::Eventually(g) => write_unary("F", g, out),
        Formula::Always(g) => write_unary("G", g, out),
        Formula::And(a, b) => write_binary("&", a, b, out),
        Formula::Or(a, b) => write_binary("|", a, b, out),
        Formula::Until(a, b) => write_binary("U", a, b, out),
    }
}

fn write_unary(op: &str, g: &Formula, out: &mut String) {
    out.push_str(op);
    out.push_str(" (");
    write_formula(g, out);
    out.push(')');
}

fn write_binary(op: &str, a: &Formula, b: &Formula, out: &mut String) {
    out.push('(');
    write_formula(a, out);
    out.push(' ');
    out.push_str(op);
    out.push(' ');
    write_formula(b, out);
    out.push(')');
}
