//! The `.gsn` text format.
//!
//! ```text
//! case "natural-language" {
//!   goal G2 "The system handles a variety of tasks robustly"
//!   goal G2.1 "Manual attacks are mitigated" scope: [jailbreak] supports G2
//!   strategy S2 "Focus on common adversarial prompt patterns" supports G2.2
//!   solution Sn1 "Perplexity filter evaluation" valid supports G2.2.1
//!   justification J2.2.1 "Naive best-estimate prior" of G2.2.1
//!   defeater CG2.2.1 "Patch errors" challenges S2.2.1A state: mitigated mitigated_by S2.2.1B
//! }
//! ```
//!
//! Children name their parents (`supports`), context nodes name the nodes
//! they qualify (`of`), defeaters name what they challenge and what mitigates
//! them. Every reference clause takes a comma-separated id list. Clauses may
//! appear in any order, each at most once. `#` starts a comment.
//!
//! Keywords are contextual, so any identifier is a valid node id.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{
    has_errors, is_id_char, is_id_token, validate, ArgumentGraph, AttackClass, DefeaterState, Diagnostic, Edge,
    EdgeKind, GraphError, Node, NodeId, NodeKind,
};

/// 1-based position and length, all counted in characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SourceSpan {
    pub line: usize,
    pub column: usize,
    pub length: usize,
}

impl SourceSpan {
    /// True when the single-line span overlaps `other`.
    pub fn overlaps(&self, other: &SourceSpan) -> bool {
        self.line == other.line && self.column < other.column + other.length && other.column < self.column + self.length
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    pub span: SourceSpan,
    pub message: String,
    pub expected: Vec<String>,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.span, self.message)?;
        if !self.expected.is_empty() {
            write!(f, " (expected {})", self.expected.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    Ident(String),
    Str(String),
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Colon,
    Eof,
}

impl TokenKind {
    fn describe(&self) -> String {
        match self {
            TokenKind::Ident(s) => format!("`{s}`"),
            TokenKind::Str(_) => "string".into(),
            TokenKind::LBrace => "'{'".into(),
            TokenKind::RBrace => "'}'".into(),
            TokenKind::LBracket => "'['".into(),
            TokenKind::RBracket => "']'".into(),
            TokenKind::Comma => "','".into(),
            TokenKind::Colon => "':'".into(),
            TokenKind::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: SourceSpan,
}

/// Splits `text` into tokens. Unlexable input is reported and skipped; the
/// token list always ends with `Eof`.
pub fn tokenize(text: &str) -> (Vec<Token>, Vec<ParseError>) {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut errors = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    while i < chars.len() {
        let c = chars[i];
        let start = SourceSpan { line, column: col, length: 1 };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                i += 1;
                col += 1;
            }
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                    col += 1;
                }
            }
            '{' | '}' | '[' | ']' | ',' | ':' => {
                let kind = match c {
                    '{' => TokenKind::LBrace,
                    '}' => TokenKind::RBrace,
                    '[' => TokenKind::LBracket,
                    ']' => TokenKind::RBracket,
                    ',' => TokenKind::Comma,
                    _ => TokenKind::Colon,
                };
                tokens.push(Token { kind, span: start });
                i += 1;
                col += 1;
            }
            '"' => {
                let mut value = String::new();
                let mut length = 1;
                let mut j = i + 1;
                let (mut cur_line, mut cur_col) = (line, col + 1);
                let mut closed = false;
                while j < chars.len() {
                    let d = chars[j];
                    if d == '"' {
                        closed = true;
                        j += 1;
                        cur_col += 1;
                        length += 1;
                        break;
                    }
                    if d == '\\' {
                        let escaped = chars.get(j + 1).copied();
                        let decoded = match escaped {
                            Some('n') => Some('\n'),
                            Some('r') => Some('\r'),
                            Some('t') => Some('\t'),
                            Some('"') => Some('"'),
                            Some('\\') => Some('\\'),
                            _ => None,
                        };
                        match decoded {
                            Some(ch) => value.push(ch),
                            None => errors.push(ParseError {
                                span: SourceSpan { line: cur_line, column: cur_col, length: 2 },
                                message: "unknown escape sequence".into(),
                                expected: vec!["\\n".into(), "\\r".into(), "\\t".into(), "\\\"".into(), "\\\\".into()],
                            }),
                        }
                        let consumed = if escaped.is_some() { 2 } else { 1 };
                        j += consumed;
                        cur_col += consumed;
                        length += consumed;
                        continue;
                    }
                    value.push(d);
                    j += 1;
                    length += 1;
                    if d == '\n' {
                        cur_line += 1;
                        cur_col = 1;
                    } else {
                        cur_col += 1;
                    }
                }
                let span = SourceSpan {
                    line,
                    column: col,
                    length: if cur_line == line { length } else { 1 },
                };
                if closed {
                    tokens.push(Token { kind: TokenKind::Str(value), span });
                } else {
                    errors.push(ParseError {
                        span,
                        message: "unterminated string".into(),
                        expected: vec!["'\"'".into()],
                    });
                }
                i = j;
                line = cur_line;
                col = cur_col;
            }
            c if is_id_char(c) => {
                let mut j = i;
                while j < chars.len() && is_id_char(chars[j]) {
                    j += 1;
                }
                let word: String = chars[i..j].iter().collect();
                let length = j - i;
                tokens.push(Token {
                    kind: TokenKind::Ident(word),
                    span: SourceSpan { length, ..start },
                });
                col += length;
                i = j;
            }
            _ => {
                let mut j = i;
                while j < chars.len() && !starts_token(chars[j]) {
                    j += 1;
                }
                let length = j - i;
                let bad: String = chars[i..j].iter().collect();
                errors.push(ParseError {
                    span: SourceSpan { length, ..start },
                    message: format!("unexpected character sequence `{bad}`"),
                    expected: Vec::new(),
                });
                col += length;
                i = j;
            }
        }
    }
    tokens.push(Token {
        kind: TokenKind::Eof,
        span: SourceSpan { line, column: col, length: 1 },
    });
    (tokens, errors)
}

fn starts_token(c: char) -> bool {
    c.is_whitespace() || is_id_char(c) || matches!(c, '{' | '}' | '[' | ']' | ',' | ':' | '"' | '#')
}

const DECL_KEYWORDS: [&str; 7] = ["goal", "strategy", "solution", "context", "assumption", "justification", "defeater"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Clause {
    Undeveloped,
    Scope,
    Supports,
    Valid,
    Of,
    Challenges,
    State,
    MitigatedBy,
}

impl Clause {
    fn from_word(word: &str) -> Option<Clause> {
        Some(match word {
            "undeveloped" => Clause::Undeveloped,
            "scope" => Clause::Scope,
            "supports" => Clause::Supports,
            "valid" | "invalid" => Clause::Valid,
            "of" => Clause::Of,
            "challenges" => Clause::Challenges,
            "state" => Clause::State,
            "mitigated_by" => Clause::MitigatedBy,
            _ => return None,
        })
    }

    fn allowed(kind: NodeKind) -> &'static [Clause] {
        match kind {
            NodeKind::Goal => &[Clause::Undeveloped, Clause::Scope, Clause::Supports],
            NodeKind::Strategy => &[Clause::Undeveloped, Clause::Supports],
            NodeKind::Solution => &[Clause::Valid, Clause::Supports],
            NodeKind::Context | NodeKind::Assumption | NodeKind::Justification => &[Clause::Of],
            NodeKind::Defeater => &[Clause::Challenges, Clause::State, Clause::MitigatedBy],
        }
    }

    fn keywords(kind: NodeKind) -> Vec<String> {
        let mut out = Vec::new();
        for clause in Clause::allowed(kind) {
            let words: &[&str] = match clause {
                Clause::Undeveloped => &["undeveloped"],
                Clause::Scope => &["scope"],
                Clause::Supports => &["supports"],
                Clause::Valid => &["valid", "invalid"],
                Clause::Of => &["of"],
                Clause::Challenges => &["challenges"],
                Clause::State => &["state"],
                Clause::MitigatedBy => &["mitigated_by"],
            };
            out.extend(words.iter().map(|w| format!("`{w}`")));
        }
        out
    }
}

#[derive(Debug)]
struct Reference {
    role: Clause,
    target: String,
    span: SourceSpan,
}

#[derive(Debug)]
struct Decl {
    node: Node,
    id_span: SourceSpan,
    refs: Vec<Reference>,
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    errors: Vec<ParseError>,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Token {
        let tok = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    fn error_here(&mut self, message: impl Into<String>, expected: Vec<String>) {
        let span = self.peek().span;
        self.errors.push(ParseError {
            span,
            message: message.into(),
            expected,
        });
    }

    fn unexpected(&mut self, expected: &[&str]) {
        let found = self.peek().kind.describe();
        self.error_here(format!("unexpected {found}"), expected.iter().map(|s| s.to_string()).collect());
    }

    fn at_word(&self, word: &str) -> bool {
        matches!(&self.peek().kind, TokenKind::Ident(w) if w == word)
    }

    fn at_decl_start(&self) -> bool {
        matches!(&self.peek().kind, TokenKind::Ident(w) if DECL_KEYWORDS.contains(&w.as_str()))
    }

    fn expect(&mut self, kind: TokenKind, name: &str) -> Option<Token> {
        if self.peek().kind == kind {
            Some(self.bump())
        } else {
            self.unexpected(&[name]);
            None
        }
    }

    fn expect_ident(&mut self, what: &str) -> Option<(String, SourceSpan)> {
        match &self.peek().kind {
            TokenKind::Ident(w) => {
                let w = w.clone();
                let span = self.bump().span;
                Some((w, span))
            }
            _ => {
                self.unexpected(&[what]);
                None
            }
        }
    }

    fn expect_string(&mut self) -> Option<String> {
        match &self.peek().kind {
            TokenKind::Str(s) => {
                let s = s.clone();
                self.bump();
                Some(s)
            }
            _ => {
                self.unexpected(&["string"]);
                None
            }
        }
    }

    /// Skips to the next declaration keyword, `}` or end of input.
    fn recover(&mut self) {
        while !self.at_decl_start() && !matches!(self.peek().kind, TokenKind::RBrace | TokenKind::Eof) {
            self.bump();
        }
    }

    fn parse_file(&mut self) -> Option<(String, Vec<Decl>)> {
        if !self.at_word("case") {
            self.unexpected(&["`case`"]);
            return None;
        }
        self.bump();
        let name = self.expect_string();
        self.expect(TokenKind::LBrace, "'{'")?;
        let mut decls = Vec::new();
        loop {
            match &self.peek().kind {
                TokenKind::RBrace => {
                    self.bump();
                    break;
                }
                TokenKind::Eof => {
                    self.unexpected(&["declaration", "'}'"]);
                    break;
                }
                _ if self.at_decl_start() => match self.parse_decl() {
                    Some(decl) => decls.push(decl),
                    None => self.recover(),
                },
                _ => {
                    self.unexpected(&["declaration", "'}'"]);
                    self.bump();
                    self.recover();
                }
            }
        }
        if self.peek().kind != TokenKind::Eof {
            self.unexpected(&["end of input"]);
        }
        Some((name.unwrap_or_default(), decls))
    }

    fn parse_decl(&mut self) -> Option<Decl> {
        let (word, _) = self.expect_ident("declaration")?;
        let kind: NodeKind = word.parse().expect("caller checked the keyword");
        let (id, id_span) = match &self.peek().kind {
            TokenKind::Ident(w) if is_id_token(w) => {
                let w = w.clone();
                (w, self.bump().span)
            }
            TokenKind::Ident(w) => {
                let msg = format!("`{w}` is not a valid node id");
                self.error_here(msg, vec!["identifier".into()]);
                return None;
            }
            _ => {
                self.unexpected(&["identifier"]);
                return None;
            }
        };
        let statement = self.expect_string()?;
        let mut node = match kind {
            NodeKind::Goal => Node::goal(id, statement),
            NodeKind::Strategy => Node::strategy(id, statement),
            NodeKind::Solution => Node::solution(id, statement, true),
            NodeKind::Context => Node::context(id, statement),
            NodeKind::Assumption => Node::assumption(id, statement),
            NodeKind::Justification => Node::justification(id, statement),
            NodeKind::Defeater => Node::defeater(id, statement, DefeaterState::Open),
        };
        let mut refs = Vec::new();
        let mut seen = BTreeSet::new();

        loop {
            let word = match &self.peek().kind {
                TokenKind::Ident(w) => w.clone(),
                TokenKind::RBrace | TokenKind::Eof => break,
                _ => {
                    self.unexpected_clause(kind);
                    return None;
                }
            };
            if DECL_KEYWORDS.contains(&word.as_str()) {
                break;
            }
            let Some(clause) = Clause::from_word(&word) else {
                self.unexpected_clause(kind);
                return None;
            };
            if !Clause::allowed(kind).contains(&clause) {
                self.error_here(format!("`{word}` is not allowed on a {kind}"), Clause::keywords(kind));
                return None;
            }
            if !seen.insert(clause) {
                self.error_here(format!("duplicate `{word}` clause"), Vec::new());
                return None;
            }
            self.bump();
            match clause {
                Clause::Undeveloped => node.undeveloped = true,
                Clause::Valid => node.evidence_valid = Some(word == "valid"),
                Clause::Scope => {
                    self.expect(TokenKind::Colon, "':'")?;
                    node.scope = self.parse_scope()?;
                }
                Clause::State => {
                    self.expect(TokenKind::Colon, "':'")?;
                    let (token, span) = self.expect_ident("defeater state")?;
                    match token.parse::<DefeaterState>() {
                        Ok(state) => node.defeater_state = Some(state),
                        Err(e) => {
                            self.errors.push(ParseError {
                                span,
                                message: e.to_string(),
                                expected: DefeaterState::ALL.iter().map(|s| s.to_string()).collect(),
                            });
                            return None;
                        }
                    }
                }
                Clause::Supports | Clause::Of | Clause::Challenges | Clause::MitigatedBy => loop {
                    let (target, span) = self.expect_ident("identifier")?;
                    refs.push(Reference { role: clause, target, span });
                    if self.peek().kind == TokenKind::Comma {
                        self.bump();
                    } else {
                        break;
                    }
                },
            }
        }
        Some(Decl { node, id_span, refs })
    }

    fn unexpected_clause(&mut self, kind: NodeKind) {
        let mut expected = Clause::keywords(kind);
        expected.push("declaration".into());
        expected.push("'}'".into());
        let found = self.peek().kind.describe();
        self.error_here(format!("unexpected {found}"), expected);
    }

    fn parse_scope(&mut self) -> Option<BTreeSet<AttackClass>> {
        self.expect(TokenKind::LBracket, "'['")?;
        let mut scope = BTreeSet::new();
        if self.peek().kind == TokenKind::RBracket {
            self.bump();
            return Some(scope);
        }
        loop {
            let (token, span) = self.expect_ident("attack class")?;
            match token.parse::<AttackClass>() {
                Ok(class) => {
                    scope.insert(class);
                }
                Err(e) => {
                    self.errors.push(ParseError {
                        span,
                        message: e.to_string(),
                        expected: AttackClass::ALL.iter().map(|c| c.to_string()).collect(),
                    });
                    return None;
                }
            }
            match self.peek().kind {
                TokenKind::Comma => {
                    self.bump();
                }
                TokenKind::RBracket => {
                    self.bump();
                    return Some(scope);
                }
                _ => {
                    self.unexpected(&["','", "']'"]);
                    return None;
                }
            }
        }
    }
}

/// Parses one case. On failure every collected error is returned, ordered by
/// position.
pub fn parse(text: &str) -> Result<ArgumentGraph, Vec<ParseError>> {
    let (tokens, lex_errors) = tokenize(text);
    let mut parser = Parser {
        tokens,
        pos: 0,
        errors: lex_errors,
    };
    let parsed = parser.parse_file();
    let mut errors = parser.errors;

    let graph = parsed.map(|(name, decls)| build(name, decls, &mut errors));
    match graph {
        Some(graph) if errors.is_empty() => Ok(graph),
        _ => {
            errors.sort_by_key(|e| e.span);
            Err(errors)
        }
    }
}

fn build(name: String, decls: Vec<Decl>, errors: &mut Vec<ParseError>) -> ArgumentGraph {
    let mut graph = ArgumentGraph::new(name);
    let mut accepted = Vec::new();
    for decl in decls {
        match graph.add_node(decl.node.clone()) {
            Ok(_) => accepted.push(decl),
            Err(e) => errors.push(ParseError {
                span: decl.id_span,
                message: e.to_string(),
                expected: Vec::new(),
            }),
        }
    }
    for decl in &accepted {
        let own = decl.node.id.as_str();
        for r in &decl.refs {
            let edge = match r.role {
                Clause::Supports => Edge::new(r.target.as_str(), EdgeKind::SupportedBy, own),
                Clause::Of => Edge::new(r.target.as_str(), EdgeKind::InContextOf, own),
                Clause::Challenges => Edge::new(r.target.as_str(), EdgeKind::ChallengedBy, own),
                Clause::MitigatedBy => Edge::new(own, EdgeKind::MitigatedBy, r.target.as_str()),
                _ => unreachable!("only reference clauses carry targets"),
            };
            if let Err(e) = graph.add_edge(edge) {
                let message = match e {
                    GraphError::UnknownEndpoint(id) => format!("unknown node `{id}`"),
                    other => other.to_string(),
                };
                errors.push(ParseError {
                    span: r.span,
                    message,
                    expected: Vec::new(),
                });
            }
        }
    }
    graph
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PrintError {
    #[error("graph has {} error diagnostic(s); first: {}", .0.len(), .0.first().map(|d| d.to_string()).unwrap_or_default())]
    InvalidGraph(Vec<Diagnostic>),
}

/// Canonical text form: declarations in id order, reference lists in id
/// order, one declaration per line.
pub fn print(graph: &ArgumentGraph) -> Result<String, PrintError> {
    let diagnostics = validate(graph);
    if has_errors(&diagnostics) {
        return Err(PrintError::InvalidGraph(diagnostics.into_iter().filter(|d| d.severity == crate::model::Severity::Error).collect()));
    }

    let mut refs: BTreeMap<&NodeId, BTreeMap<&'static str, BTreeSet<&NodeId>>> = BTreeMap::new();
    for e in graph.edges() {
        let (owner, word, target) = match e.kind {
            EdgeKind::SupportedBy => (&e.to, "supports", &e.from),
            EdgeKind::InContextOf => (&e.to, "of", &e.from),
            EdgeKind::ChallengedBy => (&e.to, "challenges", &e.from),
            EdgeKind::MitigatedBy => (&e.from, "mitigated_by", &e.to),
        };
        refs.entry(owner).or_default().entry(word).or_default().insert(target);
    }

    let mut out = String::new();
    writeln!(out, "case {} {{", quote(graph.name())).unwrap();
    for node in graph.nodes() {
        write!(out, "  {} {} {}", node.kind, node.id, quote(&node.statement)).unwrap();
        let list = |word: &str| -> Option<String> {
            let ids = refs.get(&node.id)?.get(word)?;
            Some(ids.iter().map(|i| i.as_str()).collect::<Vec<_>>().join(", "))
        };
        match node.kind {
            NodeKind::Goal | NodeKind::Strategy | NodeKind::Solution => {
                if node.undeveloped {
                    out.push_str(" undeveloped");
                }
                if let Some(valid) = node.evidence_valid {
                    out.push_str(if valid { " valid" } else { " invalid" });
                }
                if !node.scope.is_empty() {
                    let classes: Vec<_> = node.scope.iter().map(|c| c.as_str()).collect();
                    write!(out, " scope: [{}]", classes.join(", ")).unwrap();
                }
                if let Some(parents) = list("supports") {
                    write!(out, " supports {parents}").unwrap();
                }
            }
            NodeKind::Context | NodeKind::Assumption | NodeKind::Justification => {
                if let Some(owners) = list("of") {
                    write!(out, " of {owners}").unwrap();
                }
            }
            NodeKind::Defeater => {
                if let Some(targets) = list("challenges") {
                    write!(out, " challenges {targets}").unwrap();
                }
                let state = node.defeater_state.unwrap_or(DefeaterState::Open);
                write!(out, " state: {state}").unwrap();
                if let Some(goals) = list("mitigated_by") {
                    write!(out, " mitigated_by {goals}").unwrap();
                }
            }
        }
        out.push('\n');
    }
    out.push_str("}\n");
    Ok(out)
}

fn quote(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('"');
    for c in text.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}
