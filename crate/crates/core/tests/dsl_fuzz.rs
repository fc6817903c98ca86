//! Corrupt one token at a time and check that some diagnostic points at it.

mod common;

use llm_assurance::corpus::CASES;
use llm_assurance::dsl::{tokenize, SourceSpan, TokenKind};
use llm_assurance::{parse, print};

const DECL: &[&str] = &["goal", "strategy", "solution", "context", "assumption", "justification", "defeater"];
const REFS: &[&str] = &["supports", "of", "challenges", "mitigated_by"];

/// A replacement that cannot be valid at the token's position.
fn replacement(tokens: &[TokenKind], i: usize, in_brackets: bool, in_refs: bool) -> &'static str {
    let prev = i.checked_sub(1).map(|p| &tokens[p]);
    let prev2 = i.checked_sub(2).map(|p| &tokens[p]);
    match &tokens[i] {
        TokenKind::Ident(_) if in_brackets => "telepathy",
        TokenKind::Ident(_) if matches!((prev2, prev), (Some(TokenKind::Ident(s)), Some(TokenKind::Colon)) if s == "state") => {
            "closed"
        }
        TokenKind::Ident(_) if matches!(prev, Some(TokenKind::Ident(s)) if DECL.contains(&s.as_str())) => "\"oops\"",
        TokenKind::Ident(_) if in_refs => "Nope.1",
        TokenKind::Str(_) => "xyz",
        _ => "\"oops\"",
    }
}

fn splice(text: &str, span: &SourceSpan, with: &str) -> String {
    let mut line = 1;
    let mut column = 1;
    let mut out = String::with_capacity(text.len() + with.len());
    let mut skip = 0;
    for c in text.chars() {
        if line == span.line && column == span.column {
            out.push_str(with);
            skip = span.length;
        }
        if skip > 0 {
            skip -= 1;
        } else {
            out.push(c);
        }
        if c == '\n' {
            line += 1;
            column = 1;
        } else {
            column += 1;
        }
    }
    out
}

fn fuzz(text: &str) -> usize {
    let (tokens, lex_errors) = tokenize(text);
    assert!(lex_errors.is_empty());
    let kinds: Vec<TokenKind> = tokens.iter().map(|t| t.kind.clone()).collect();
    let mut in_brackets = false;
    let mut in_refs = false;
    let mut checked = 0;
    for (i, token) in tokens.iter().enumerate() {
        match &token.kind {
            TokenKind::LBracket => in_brackets = true,
            TokenKind::RBracket => in_brackets = false,
            TokenKind::Ident(s) if REFS.contains(&s.as_str()) => {
                in_refs = true;
                // The keyword itself is corrupted below, not treated as a reference.
            }
            TokenKind::Ident(_) | TokenKind::Comma if in_refs => {}
            _ => in_refs = false,
        }
        if token.kind == TokenKind::Eof {
            break;
        }
        let is_ref_keyword = matches!(&token.kind, TokenKind::Ident(s) if REFS.contains(&s.as_str()));
        let with = replacement(&kinds, i, in_brackets && token.kind != TokenKind::LBracket, in_refs && !is_ref_keyword);
        let corrupted = splice(text, &token.span, with);
        let target = SourceSpan {
            line: token.span.line,
            column: token.span.column,
            length: with.chars().count(),
        };
        let errors = match parse(&corrupted) {
            Ok(_) => panic!("corrupting {:?} at {} with {with} still parses:\n{corrupted}", token.kind, token.span),
            Err(errors) => errors,
        };
        assert!(
            errors.iter().any(|e| e.span.overlaps(&target)),
            "no error at {target} after replacing {:?} with {with}: {errors:?}\n{corrupted}",
            token.kind
        );
        checked += 1;
    }
    checked
}

#[test]
fn bundled_cases() {
    for (name, text) in CASES {
        let canonical = print(&parse(text).unwrap()).unwrap();
        assert!(fuzz(&canonical) > 50, "{name}");
    }
}

#[test]
fn random_graphs() {
    let mut total = 0;
    for seed in 0..150 {
        let g = common::random_graph(seed);
        total += fuzz(&print(&g).unwrap());
    }
    assert!(total > 1000);
}
