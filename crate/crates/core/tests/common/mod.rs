//! Shared generators and oracles for the integration tests.
//!
//! The oracles are written against the graph's public surface only and do
//! not call into the evaluation or coverage modules.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use llm_assurance::coverage::{GuardrailRecord, Layer, Registry};
use llm_assurance::model::{edge_allowed, DefeaterState};
use llm_assurance::{ArgumentGraph, AttackClass, Change, ChangeSet, Edge, EdgeKind, Node, NodeId, NodeKind, Status};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: &[&str] = &[
    "guardrail", "filter", "prompt", "model", "output", "robust", "jailbreak", "layer", "the", "is", "every",
    "\"quoted\"", "back\\slash", "tab\there", "line\nbreak", "ünïcode", "→", "#hash", "{brace}", "[list]",
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn statement(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(0..6);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn prefix(kind: NodeKind) -> &'static str {
    match kind {
        NodeKind::Goal => "G",
        NodeKind::Strategy => "S",
        NodeKind::Solution => "Sn",
        NodeKind::Context => "C",
        NodeKind::Assumption => "A",
        NodeKind::Justification => "J",
        NodeKind::Defeater => "D",
    }
}

fn random_node(rng: &mut ChaCha8Rng, index: usize) -> Node {
    let kinds = [
        (NodeKind::Goal, 5),
        (NodeKind::Strategy, 3),
        (NodeKind::Solution, 3),
        (NodeKind::Context, 1),
        (NodeKind::Assumption, 1),
        (NodeKind::Justification, 1),
        (NodeKind::Defeater, 3),
    ];
    let kind = kinds.choose_weighted(rng, |(_, w)| *w).unwrap().0;
    let sep = [".", "_", "-"].choose(rng).unwrap();
    let id = format!("{}{}{sep}{}", prefix(kind), index / 3 + 1, index % 3 + 1);
    let text = statement(rng);
    match kind {
        NodeKind::Goal => {
            let scope: Vec<AttackClass> = AttackClass::ALL.iter().copied().filter(|_| rng.random_bool(0.25)).collect();
            let g = Node::goal(id.as_str(), text).with_scope(scope);
            if rng.random_bool(0.2) {
                g.mark_undeveloped()
            } else {
                g
            }
        }
        NodeKind::Strategy => {
            let s = Node::strategy(id.as_str(), text);
            if rng.random_bool(0.1) {
                s.mark_undeveloped()
            } else {
                s
            }
        }
        NodeKind::Solution => Node::solution(id.as_str(), text, rng.random_bool(0.8)),
        NodeKind::Context => Node::context(id.as_str(), text),
        NodeKind::Assumption => Node::assumption(id.as_str(), text),
        NodeKind::Justification => Node::justification(id.as_str(), text),
        NodeKind::Defeater => {
            let state = *[DefeaterState::Open, DefeaterState::Mitigated, DefeaterState::Retired].choose(rng).unwrap();
            Node::defeater(id.as_str(), text, state)
        }
    }
}

/// A random well-typed graph. Edges only run from lower to higher insertion
/// index, so every graph is acyclic by construction.
pub fn random_graph(seed: u64) -> ArgumentGraph {
    let mut rng = rng(seed);
    let mut g = ArgumentGraph::new(format!("random-{seed}"));
    let n = rng.random_range(0..=24);
    let mut ids: Vec<NodeId> = Vec::with_capacity(n);
    for i in 0..n {
        let node = random_node(&mut rng, i);
        ids.push(g.add_node(node).expect("generated nodes are well formed"));
    }
    let density = rng.random_range(0.05..0.35);
    for i in 0..n {
        for j in (i + 1)..n {
            if !rng.random_bool(density) {
                continue;
            }
            let from = g.node(ids[i].as_str()).unwrap().kind;
            let to = g.node(ids[j].as_str()).unwrap().kind;
            let kinds: Vec<EdgeKind> = EdgeKind::ALL.iter().copied().filter(|k| edge_allowed(*k, from, to)).collect();
            if let Some(kind) = kinds.choose(&mut rng) {
                g.add_edge(Edge::new(ids[i].as_str(), *kind, ids[j].as_str()))
                    .expect("forward edges are acyclic and typed");
            }
        }
    }
    g
}

/// A random change set that applies cleanly to `graph`.
pub fn random_changes(graph: &ArgumentGraph, seed: u64) -> ChangeSet {
    let mut rng = rng(seed ^ 0x5eed);
    let mut scratch = graph.clone();
    let mut changes = ChangeSet::new();
    let steps = rng.random_range(1..=6);
    let mut fresh = 0;
    for _ in 0..steps * 4 {
        if changes.len() >= steps {
            break;
        }
        let ids: Vec<NodeId> = scratch.node_ids().cloned().collect();
        let edges: Vec<Edge> = scratch.edges().cloned().collect();
        let candidate = match rng.random_range(0..8) {
            0 if !ids.is_empty() => {
                // New open defeater against an existing non-defeater node.
                let target = ids.choose(&mut rng).unwrap().clone();
                if scratch.node(target.as_str()).unwrap().kind == NodeKind::Defeater {
                    continue;
                }
                fresh += 1;
                let id = format!("X{fresh}.new");
                let batch = vec![
                    Change::AddNode(Node::defeater(id.as_str(), "fresh challenge", DefeaterState::Open)),
                    Change::AddEdge(Edge::new(target.as_str(), EdgeKind::ChallengedBy, id.as_str())),
                ];
                let mut trial = scratch.clone();
                if batch.iter().all(|c| trial.apply_change(c).is_ok()) {
                    scratch = trial;
                    changes.extend(ChangeSet::from(batch));
                }
                continue;
            }
            1 if !edges.is_empty() => Change::RemoveEdge(edges.choose(&mut rng).unwrap().clone()),
            2 | 3 if !ids.is_empty() => {
                let id = ids.choose(&mut rng).unwrap().clone();
                match scratch.node(id.as_str()).unwrap().kind {
                    NodeKind::Defeater => Change::SetDefeaterState {
                        id,
                        state: *DefeaterState::ALL.choose(&mut rng).unwrap(),
                    },
                    NodeKind::Solution => Change::SetEvidenceValid {
                        id,
                        valid: rng.random_bool(0.5),
                    },
                    NodeKind::Goal | NodeKind::Strategy => Change::SetUndeveloped {
                        id,
                        undeveloped: rng.random_bool(0.5),
                    },
                    _ => Change::SetStatement {
                        id,
                        statement: statement(&mut rng),
                    },
                }
            }
            4 if ids.len() >= 2 => {
                let a = ids.choose(&mut rng).unwrap();
                let b = ids.choose(&mut rng).unwrap();
                let from = scratch.node(a.as_str()).unwrap().kind;
                let to = scratch.node(b.as_str()).unwrap().kind;
                let kinds: Vec<EdgeKind> = EdgeKind::ALL.iter().copied().filter(|k| edge_allowed(*k, from, to)).collect();
                match kinds.choose(&mut rng) {
                    Some(kind) => Change::AddEdge(Edge::new(a.as_str(), *kind, b.as_str())),
                    None => continue,
                }
            }
            5 if !ids.is_empty() => {
                // Remove a detached node.
                let id = ids.choose(&mut rng).unwrap();
                if edges.iter().any(|e| e.touches(id)) {
                    continue;
                }
                Change::RemoveNode(id.clone())
            }
            6 if !ids.is_empty() => {
                let id = ids.choose(&mut rng).unwrap().clone();
                if scratch.node(id.as_str()).unwrap().kind != NodeKind::Goal {
                    continue;
                }
                let scope = AttackClass::ALL.iter().copied().filter(|_| rng.random_bool(0.3)).collect();
                Change::SetScope { id, scope }
            }
            _ => {
                fresh += 1;
                Change::AddNode(Node::goal(format!("Y{fresh}.new").as_str(), "fresh goal"))
            }
        };
        if scratch.apply_change(&candidate).is_ok() {
            changes.push(candidate);
        }
    }
    changes
}

/// A random registry over the solutions of `graph`.
pub fn random_registry(graph: &ArgumentGraph, seed: u64) -> Registry {
    let mut rng = rng(seed ^ 0x7e9);
    let solutions: Vec<NodeId> = graph.nodes().filter(|n| n.kind == NodeKind::Solution).map(|n| n.id.clone()).collect();
    let mut registry = Registry::new();
    for i in 0..rng.random_range(0..6) {
        let coverage: Vec<AttackClass> = AttackClass::ALL.iter().copied().filter(|_| rng.random_bool(0.3)).collect();
        let layer = *Layer::ALL[..5].choose(&mut rng).unwrap();
        let mut record = GuardrailRecord::new(format!("gr-{i}"), format!("guardrail {i}"), layer, coverage.clone());
        record.active = !coverage.is_empty() && rng.random_bool(0.8);
        registry.register(record).unwrap();
        for s in &solutions {
            if rng.random_bool(0.4) {
                registry.link_evidence(graph, s.as_str(), &format!("gr-{i}")).unwrap();
            }
        }
    }
    registry
}

/// Kahn's algorithm over every edge; `true` when all nodes get ordered.
pub fn is_acyclic(graph: &ArgumentGraph) -> bool {
    let mut indegree: BTreeMap<&NodeId, usize> = graph.node_ids().map(|id| (id, 0)).collect();
    for e in graph.edges() {
        *indegree.get_mut(&e.to).unwrap() += 1;
    }
    let mut queue: Vec<&NodeId> = indegree.iter().filter(|(_, d)| **d == 0).map(|(id, _)| *id).collect();
    let mut seen = 0;
    while let Some(id) = queue.pop() {
        seen += 1;
        for e in graph.edges().filter(|e| &e.from == id) {
            let d = indegree.get_mut(&e.to).unwrap();
            *d -= 1;
            if *d == 0 {
                queue.push(&e.to);
            }
        }
    }
    seen == graph.node_count()
}

fn targets<'a>(graph: &'a ArgumentGraph, id: &'a str, kind: EdgeKind) -> impl Iterator<Item = &'a NodeId> + 'a {
    graph.edges().filter(move |e| e.from.as_str() == id && e.kind == kind).map(|e| &e.to)
}

/// Reference evaluator: the status rules as a memoised recursion.
pub struct OracleEval<'g> {
    graph: &'g ArgumentGraph,
    memo: BTreeMap<String, Status>,
}

impl<'g> OracleEval<'g> {
    pub fn new(graph: &'g ArgumentGraph) -> Self {
        OracleEval { graph, memo: BTreeMap::new() }
    }

    pub fn active(&mut self, defeater: &str) -> bool {
        let node = self.graph.node(defeater).unwrap();
        match node.defeater_state.unwrap() {
            DefeaterState::Open => true,
            DefeaterState::Retired => false,
            DefeaterState::Mitigated => {
                let mitigations: Vec<String> = targets(self.graph, defeater, EdgeKind::MitigatedBy).map(|m| m.to_string()).collect();
                mitigations.is_empty() || mitigations.iter().any(|m| self.status(m) != Status::Supported)
            }
        }
    }

    pub fn status(&mut self, id: &str) -> Status {
        if let Some(s) = self.memo.get(id) {
            return *s;
        }
        let graph = self.graph;
        let node = graph.node(id).unwrap();
        let mut worst = Status::Supported;
        if node.kind == NodeKind::Defeater {
            if self.active(id) {
                worst = Status::Defeated;
            }
        } else {
            let challengers: Vec<String> = targets(graph, id, EdgeKind::ChallengedBy).map(|d| d.to_string()).collect();
            for d in challengers {
                if self.active(&d) {
                    let hit = if matches!(node.kind, NodeKind::Goal | NodeKind::Solution) {
                        Status::Defeated
                    } else {
                        Status::Undercut
                    };
                    worst = worst.max(hit);
                }
            }
            if node.evidence_valid == Some(false) {
                worst = worst.max(Status::Undercut);
            }
            if matches!(node.kind, NodeKind::Goal | NodeKind::Strategy) {
                let contexts: Vec<String> = targets(graph, id, EdgeKind::InContextOf).map(|c| c.to_string()).collect();
                for c in contexts {
                    if self.status(&c) >= Status::Undercut {
                        worst = worst.max(Status::Undercut);
                    }
                }
                let children: Vec<String> = targets(graph, id, EdgeKind::SupportedBy).map(|c| c.to_string()).collect();
                if children.is_empty() {
                    worst = worst.max(Status::Undeveloped);
                }
                for c in children {
                    worst = worst.max(match self.status(&c) {
                        Status::Supported => Status::Supported,
                        Status::Undeveloped => Status::Undeveloped,
                        Status::Undercut | Status::Defeated => Status::Undercut,
                    });
                }
            }
        }
        self.memo.insert(id.to_string(), worst);
        worst
    }
}

/// Reference coverage gaps: `(goal, class)` pairs.
pub fn oracle_gaps(registry: &Registry, graph: &ArgumentGraph) -> BTreeSet<(String, AttackClass)> {
    let mut out = BTreeSet::new();
    for goal in graph.nodes().filter(|n| n.kind == NodeKind::Goal && !n.scope.is_empty()) {
        let mut stack = vec![goal.id.to_string()];
        let mut seen = BTreeSet::new();
        let mut solutions = BTreeSet::new();
        while let Some(id) = stack.pop() {
            for child in targets(graph, &id, EdgeKind::SupportedBy) {
                if seen.insert(child.to_string()) {
                    if graph.node(child.as_str()).unwrap().kind == NodeKind::Solution {
                        solutions.insert(child.to_string());
                    }
                    stack.push(child.to_string());
                }
            }
        }
        let mut covered = BTreeSet::new();
        for record in registry.iter().filter(|r| r.active) {
            if record
                .linked_solutions
                .iter()
                .any(|l| l.case == graph.name() && solutions.contains(l.node.as_str()))
            {
                covered.extend(record.coverage.iter().copied());
            }
        }
        for class in &goal.scope {
            if !covered.contains(class) {
                out.insert((goal.id.to_string(), *class));
            }
        }
    }
    out
}

/// Minimal checker for the DOT language (graph, node, edge and attribute
/// statements, quoted and bare identifiers). Returns the number of node and
/// edge statements.
pub fn check_dot(text: &str) -> Result<(usize, usize), String> {
    #[derive(Debug, Clone, PartialEq)]
    enum Tok {
        Id(String),
        Punct(char),
        Arrow,
    }
    let mut toks = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '"' {
            let mut s = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err("unterminated string".into()),
                    Some('"') => break,
                    Some('\\') => {
                        let next = *chars.get(i + 1).ok_or("dangling escape")?;
                        s.push('\\');
                        s.push(next);
                        i += 2;
                    }
                    Some('\n') => return Err("raw newline in string".into()),
                    Some(ch) => {
                        s.push(*ch);
                        i += 1;
                    }
                }
            }
            i += 1;
            toks.push(Tok::Id(s));
        } else if c == '-' && chars.get(i + 1) == Some(&'>') {
            toks.push(Tok::Arrow);
            i += 2;
        } else if "{}[];,=".contains(c) {
            toks.push(Tok::Punct(c));
            i += 1;
        } else if c.is_alphanumeric() || c == '_' || c == '.' || c == '#' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            let numeral = word.chars().all(|ch| ch.is_ascii_digit() || ch == '.');
            let ident = word.chars().next().is_some_and(|ch| ch.is_alphabetic() || ch == '_') && !word.contains('.');
            if !numeral && !ident {
                return Err(format!("bad identifier `{word}`"));
            }
            toks.push(Tok::Id(word));
        } else {
            return Err(format!("unexpected character `{c}`"));
        }
    }

    let mut p = 0;
    let expect = |p: &mut usize, t: Tok| -> Result<(), String> {
        if toks.get(*p) == Some(&t) {
            *p += 1;
            Ok(())
        } else {
            Err(format!("expected {t:?} at token {}, found {:?}", *p, toks.get(*p)))
        }
    };
    let id = |p: &mut usize| -> Result<String, String> {
        match toks.get(*p) {
            Some(Tok::Id(s)) => {
                *p += 1;
                Ok(s.clone())
            }
            other => Err(format!("expected identifier at token {}, found {other:?}", *p)),
        }
    };
    let attr_list = |p: &mut usize| -> Result<(), String> {
        while toks.get(*p) == Some(&Tok::Punct('[')) {
            *p += 1;
            while toks.get(*p) != Some(&Tok::Punct(']')) {
                id(p)?;
                expect(p, Tok::Punct('='))?;
                id(p)?;
                if matches!(toks.get(*p), Some(Tok::Punct(',')) | Some(Tok::Punct(';'))) {
                    *p += 1;
                }
            }
            *p += 1;
        }
        Ok(())
    };

    match id(&mut p)?.as_str() {
        "digraph" => {}
        other => return Err(format!("expected digraph, found {other}")),
    }
    if matches!(toks.get(p), Some(Tok::Id(_))) {
        p += 1;
    }
    expect(&mut p, Tok::Punct('{'))?;
    let (mut nodes, mut edges) = (0, 0);
    let mut declared = BTreeSet::new();
    while toks.get(p) != Some(&Tok::Punct('}')) {
        let first = id(&mut p)?;
        if matches!(first.as_str(), "graph" | "node" | "edge") && toks.get(p) == Some(&Tok::Punct('[')) {
            attr_list(&mut p)?;
        } else if toks.get(p) == Some(&Tok::Arrow) {
            let mut last = first;
            while toks.get(p) == Some(&Tok::Arrow) {
                p += 1;
                let next = id(&mut p)?;
                if !declared.contains(&last) || !declared.contains(&next) {
                    return Err(format!("edge {last} -> {next} before its nodes"));
                }
                last = next;
                edges += 1;
            }
            attr_list(&mut p)?;
        } else if toks.get(p) == Some(&Tok::Punct('=')) {
            p += 1;
            id(&mut p)?;
        } else {
            attr_list(&mut p)?;
            declared.insert(first);
            nodes += 1;
        }
        if toks.get(p) == Some(&Tok::Punct(';')) {
            p += 1;
        }
    }
    p += 1;
    if p != toks.len() {
        return Err("trailing tokens after the graph".into());
    }
    Ok((nodes, edges))
}

/// Compare `actual` against `tests/golden/<name>`; `UPDATE_GOLDEN=1` rewrites it.
pub fn golden(name: &str, actual: &str) -> Result<(), String> {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).map_err(|e| e.to_string())?;
        std::fs::write(&path, actual).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        return Ok(());
    }
    let line = expected.lines().zip(actual.lines()).position(|(a, b)| a != b).unwrap_or(expected.lines().count().min(actual.lines().count()));
    Err(format!(
        "{name} differs from golden at line {}:\n  expected: {:?}\n  actual:   {:?}",
        line + 1,
        expected.lines().nth(line),
        actual.lines().nth(line)
    ))
}

/// The chat-assistant loop: compliance reports before and after mitigation.
pub struct MetaLoop {
    pub ledger: llm_assurance::Ledger,
    pub before: llm_assurance::report::ComplianceReport,
    pub after: llm_assurance::report::ComplianceReport,
}

pub fn meta_loop() -> MetaLoop {
    use llm_assurance::incident::trigger_defeaters;
    use llm_assurance::report::compliance_report;
    use llm_assurance::sim::run_simulation;
    use llm_assurance::{corpus, evaluate, Classification, Ledger};

    let graph = corpus::chat_assistant();
    let registry = corpus::chat_assistant_registry();
    let mut ledger = Ledger::new();
    run_simulation(&corpus::chat_assistant_sim()).unwrap().ingest(&mut ledger).unwrap();
    let graph = graph.apply(&trigger_defeaters(&ledger, &graph)).unwrap();
    let before = compliance_report(&graph, &evaluate(&graph).unwrap(), &registry, &ledger).unwrap();

    let mut changes = ChangeSet::new();
    for node in graph.nodes().filter(|n| n.kind == NodeKind::Defeater) {
        let goal = format!("M-{}", node.id);
        let evidence = format!("Ev-{}", node.id);
        changes.push(Change::AddNode(Node::goal(goal.as_str(), "The exploited gap is closed")));
        changes.push(Change::AddNode(Node::solution(evidence.as_str(), "Regression test replaying the incident", true)));
        changes.push(Change::AddEdge(Edge::new(goal.as_str(), EdgeKind::SupportedBy, evidence.as_str())));
        changes.push(Change::AddEdge(Edge::new(node.id.as_str(), EdgeKind::MitigatedBy, goal.as_str())));
        changes.push(Change::SetDefeaterState { id: node.id.clone(), state: DefeaterState::Mitigated });
    }
    let graph = graph.apply(&changes).unwrap();
    let serious: Vec<u64> =
        ledger.incidents().iter().filter(|r| r.classification() == Classification::SeriousIncident).map(|r| r.id).collect();
    for id in serious {
        ledger.record_report_filed(id, "2026-03-09T12:00:00Z").unwrap();
    }
    let after = compliance_report(&graph, &evaluate(&graph).unwrap(), &registry, &ledger).unwrap();
    MetaLoop { ledger, before, after }
}
