//! Tab-separated edge-list reader.
//!
//! One edge per line: `source<TAB>relation<TAB>target`. Entity indices are
//! assigned in sorted name order so the result does not depend on row order.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Edge, EntityId, HinGraph, PerRelation, RelationKind};
use crate::error::{Error, Result};

/// Maps relation tokens found in files onto relation kinds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeSchema {
    pub tokens: BTreeMap<String, RelationKind>,
}

impl Default for EdgeSchema {
    fn default() -> Self {
        let tokens = RelationKind::ALL
            .into_iter()
            .map(|r| (r.token().to_string(), r))
            .collect();
        EdgeSchema { tokens }
    }
}

impl EdgeSchema {
    /// Registers an additional token as an alias for `relation`.
    pub fn with_alias(mut self, token: impl Into<String>, relation: RelationKind) -> Self {
        self.tokens.insert(token.into(), relation);
        self
    }

    pub fn resolve(&self, token: &str) -> Option<RelationKind> {
        self.tokens.get(token).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    pub schema: EdgeSchema,
    /// When a pair is both a WTF recommendation and a Follow, keep only the
    /// WTF observation for that pair.
    pub wtf_supersedes_follow: bool,
    /// Fixed entity list, in index order. Without it, entities are the
    /// endpoints seen in the file, sorted by name.
    #[serde(default)]
    pub registry: Option<Vec<String>>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            schema: EdgeSchema::default(),
            wtf_supersedes_follow: true,
            registry: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub entities: usize,
    pub edges: PerRelation<usize>,
    pub rows: usize,
    pub duplicate_rows: usize,
    pub rejected_self_loops: usize,
    pub follow_superseded_by_wtf: usize,
}

pub fn ingest_edges(path: impl AsRef<Path>, options: &IngestOptions) -> Result<(HinGraph, IngestSummary)> {
    let file = File::open(path.as_ref())?;
    parse_edges(BufReader::new(file), options)
}

pub fn parse_edges<R: BufRead>(reader: R, options: &IngestOptions) -> Result<(HinGraph, IngestSummary)> {
    let mut summary = IngestSummary::default();
    let mut rows: Vec<(String, RelationKind, String)> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected `source<TAB>relation<TAB>target`, got {} field(s)", fields.len()),
            });
        }
        let relation = options
            .schema
            .resolve(fields[1])
            .ok_or_else(|| Error::UnknownRelation(fields[1].to_string()))?;
        summary.rows += 1;
        if fields[0] == fields[2] {
            summary.rejected_self_loops += 1;
            continue;
        }
        rows.push((fields[0].to_string(), relation, fields[2].to_string()));
    }

    let names: Vec<String> = match &options.registry {
        Some(names) => names.clone(),
        None => rows
            .iter()
            .flat_map(|(s, _, t)| [s.as_str(), t.as_str()])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(str::to_string)
            .collect(),
    };
    let index: BTreeMap<&str, EntityId> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), EntityId::from(i)))
        .collect();
    let lookup = |name: &str| index.get(name).copied().ok_or_else(|| Error::UnknownEntity(name.to_string()));

    let mut unique: HashSet<Edge> = HashSet::with_capacity(rows.len());
    for (s, r, t) in &rows {
        let edge = Edge::new(lookup(s)?, *r, lookup(t)?);
        if !unique.insert(edge) {
            summary.duplicate_rows += 1;
        }
    }
    if options.wtf_supersedes_follow {
        let before = unique.len();
        let wtf_pairs: HashSet<(EntityId, EntityId)> = unique
            .iter()
            .filter(|e| e.relation == RelationKind::Wtf)
            .map(|e| (e.source, e.target))
            .collect();
        unique.retain(|e| !(e.relation == RelationKind::Follow && wtf_pairs.contains(&(e.source, e.target))));
        summary.follow_superseded_by_wtf = before - unique.len();
    }

    let graph = HinGraph::new(names, unique)?;
    summary.entities = graph.entity_count();
    summary.edges = PerRelation::from_fn(|r| graph.edge_count(r));
    Ok((graph, summary))
}

/// Writes every edge as `source<TAB>relation<TAB>target`, Follow first.
pub fn write_edges<W: Write>(graph: &HinGraph, mut writer: W) -> Result<()> {
    for e in graph.all_edges() {
        writeln!(
            writer,
            "{}\t{}\t{}",
            graph.name(e.source),
            e.relation.token(),
            graph.name(e.target)
        )?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<(HinGraph, IngestSummary)> {
        parse_edges(text.as_bytes(), &IngestOptions::default())
    }

    #[test]
    fn duplicates_collapse() {
        let (g, s) = parse("a\tFollow\tb\na\tFollow\tb\nb\tWTF\tc\n").unwrap();
        assert_eq!(g.entity_count(), 3);
        assert_eq!(g.edge_count(RelationKind::Follow), 1);
        assert_eq!(g.edge_count(RelationKind::Wtf), 1);
        let a = g.entity("a").unwrap();
        let b = g.entity("b").unwrap();
        let c = g.entity("c").unwrap();
        assert!(g.contains(&Edge::new(a, RelationKind::Follow, b)));
        assert!(g.contains(&Edge::new(b, RelationKind::Wtf, c)));
        assert_eq!(s.duplicate_rows, 1);
    }

    #[test]
    fn empty_input() {
        let (g, s) = parse("").unwrap();
        assert_eq!(g.entity_count(), 0);
        assert_eq!(g.total_edges(), 0);
        assert_eq!(s.rows, 0);
    }

    #[test]
    fn self_loop_rejected_and_counted() {
        let (g, s) = parse("a\tFollow\ta\n").unwrap();
        assert_eq!(g.total_edges(), 0);
        assert_eq!(s.rejected_self_loops, 1);
    }

    #[test]
    fn malformed_row_reports_line() {
        match parse("a\tFollow\tb\nbroken row\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_relation_is_schema_error() {
        assert!(matches!(parse("a\tLikes\tb\n"), Err(Error::UnknownRelation(t)) if t == "Likes"));
    }

    #[test]
    fn aliases_extend_schema() {
        let opts = IngestOptions {
            schema: EdgeSchema::default().with_alias("friend", RelationKind::Follow),
            ..Default::default()
        };
        let (g, _) = parse_edges("a\tfriend\tb\n".as_bytes(), &opts).unwrap();
        assert_eq!(g.edge_count(RelationKind::Follow), 1);
    }

    #[test]
    fn row_order_is_irrelevant() {
        let (g1, _) = parse("z\tFollow\ty\ny\tWTF\tx\nx\tFollow\tz\n").unwrap();
        let (g2, _) = parse("x\tFollow\tz\nz\tFollow\ty\ny\tWTF\tx\n").unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn wtf_observation_supersedes_follow() {
        let (g, s) = parse("a\tFollow\tb\na\tWTF\tb\n").unwrap();
        assert_eq!(g.edge_count(RelationKind::Follow), 0);
        assert_eq!(g.edge_count(RelationKind::Wtf), 1);
        assert_eq!(s.follow_superseded_by_wtf, 1);

        let keep = IngestOptions {
            wtf_supersedes_follow: false,
            ..Default::default()
        };
        let (g, _) = parse_edges("a\tFollow\tb\na\tWTF\tb\n".as_bytes(), &keep).unwrap();
        assert_eq!(g.edge_count(RelationKind::Follow), 1);
    }

    #[test]
    fn registry_keeps_isolated_entities_and_round_trips() {
        let names: Vec<String> = ["z", "a", "lonely"].iter().map(|s| s.to_string()).collect();
        let g = HinGraph::new(names.clone(), [Edge::new(EntityId(0), RelationKind::Wtf, EntityId(1))]).unwrap();
        let mut buf = Vec::new();
        write_edges(&g, &mut buf).unwrap();
        let opts = IngestOptions {
            registry: Some(names),
            ..Default::default()
        };
        let (back, _) = parse_edges(buf.as_slice(), &opts).unwrap();
        assert_eq!(back, g);
        assert!(matches!(
            parse_edges("q\tFollow\ta\n".as_bytes(), &opts),
            Err(Error::UnknownEntity(n)) if n == "q"
        ));
    }
}
