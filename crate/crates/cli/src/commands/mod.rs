//! One function per subcommand, plus the loaders they share.
//!
//! Stages read their inputs from the output directory by default, so
//! `synth`, `train`, `probe`, ... chain without extra configuration.

mod analysis;
mod data;
mod learn;
mod report;
mod scale;

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use latentprobe::graph::{parse_edges, HinGraph, IngestOptions};
use latentprobe::probe::AttributeTable;
use latentprobe::recommend::TopicTable;
use latentprobe::transe::{load_embedding, EmbeddingModel};

use crate::error::{CliError, CliResult};
use crate::run::Run;

pub use analysis::{erase, probe, recommend};
pub use data::{ingest, synth};
pub use learn::{eval, robustness, sweep, train};
pub use report::report;
pub use scale::scale;

pub const EDGES: &str = "edges.tsv";
pub const ENTITIES: &str = "entities.txt";
pub const ATTRIBUTES: &str = "attributes.csv";
pub const TOPICS: &str = "topics.csv";
pub const EMBEDDING: &str = "embedding.emb";
pub const PROTECTED: &str = "protected.emb";
pub const TEST_EDGES: &str = "test_edges.tsv";

pub fn read_names(run: &Run, path: &Path) -> CliResult<Vec<String>> {
    let reader = BufReader::new(run.open(path)?);
    let mut names = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| run.fail(e))?;
        let name = line.trim();
        if !name.is_empty() {
            names.push(name.to_string());
        }
    }
    Ok(names)
}

pub fn write_names(run: &Run, file: &str, names: &[String]) -> CliResult<()> {
    let mut w = run.create(file)?;
    for n in names {
        writeln!(w, "{n}").map_err(|e| run.fail(e))?;
    }
    w.flush().map_err(|e| run.fail(e))
}

/// Paths of the graph inputs, validated up front.
pub struct GraphInputs {
    edges: std::path::PathBuf,
    entities: Option<std::path::PathBuf>,
}

pub fn graph_inputs(run: &Run) -> CliResult<GraphInputs> {
    let t = &run.config.train;
    Ok(GraphInputs {
        edges: run.input(t.edges.as_ref(), EDGES, "edge list")?,
        entities: run.optional_input(t.entities.as_ref(), ENTITIES, "entity registry")?,
    })
}

/// The stored graph, entity order fixed by the registry when there is one.
pub fn load_graph(run: &Run, inputs: &GraphInputs) -> CliResult<HinGraph> {
    let registry = inputs.entities.as_deref().map(|p| read_names(run, p)).transpose()?;
    let options = IngestOptions {
        wtf_supersedes_follow: false,
        registry,
        ..Default::default()
    };
    let reader = BufReader::new(run.open(&inputs.edges)?);
    Ok(parse_edges(reader, &options).map_err(|e| run.fail(e))?.0)
}

pub fn load_model(run: &Run, path: &Path, graph: Option<&HinGraph>) -> CliResult<EmbeddingModel> {
    let model = load_embedding(path).map_err(|e| run.fail(e))?;
    if let Some(g) = graph {
        if model.entity_count() != g.entity_count() {
            return Err(run.fail(latentprobe::Error::InvalidArgument(format!(
                "{} has {} rows but the graph has {} entities",
                path.display(),
                model.entity_count(),
                g.entity_count()
            ))));
        }
    }
    Ok(model)
}

pub fn load_attributes(run: &Run, path: &Path, names: &[String]) -> CliResult<AttributeTable> {
    let (table, unknown) = AttributeTable::read_csv(run.open(path)?, names).map_err(|e| run.fail(e))?;
    if unknown > 0 {
        log::warn!("{unknown} attribute rows name entities outside the graph and were ignored");
    }
    Ok(table)
}

/// The named attribute, or the only column when none is named.
pub fn pick_attribute(run: &Run, table: &AttributeTable, named: Option<&String>, what: &str) -> CliResult<String> {
    if let Some(n) = named {
        return Ok(n.clone());
    }
    let all: Vec<&str> = table.names().collect();
    match all.as_slice() {
        [only] => Ok(only.to_string()),
        _ => Err(run.fail(latentprobe::Error::InvalidArgument(format!(
            "set `{what}`: the attribute file has columns {all:?}"
        )))),
    }
}

/// `entity_id,topic0,topic1,...`; entities without a row have no topics.
pub fn write_topics(run: &Run, file: &str, topics: &TopicTable, names: &[String]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(run.create(file)?);
    let header: Vec<String> = std::iter::once("entity_id".to_string())
        .chain((0..topics.n_topics()).map(|k| format!("topic{k}")))
        .collect();
    w.write_record(&header).map_err(|e| run.fail(e))?;
    for (i, name) in names.iter().enumerate() {
        if let Some(row) = topics.get(latentprobe::graph::EntityId(i as u32)) {
            let rec = std::iter::once(name.clone()).chain(row.iter().map(|p| format!("{p:.17e}")));
            w.write_record(rec).map_err(|e| run.fail(e))?;
        }
    }
    w.flush().map_err(|e| run.fail(e))
}

pub fn read_topics(run: &Run, path: &Path, graph: &HinGraph) -> CliResult<TopicTable> {
    let mut rdr = csv::Reader::from_reader(run.open(path)?);
    let n_topics = rdr.headers().map_err(|e| run.fail(e))?.len().saturating_sub(1);
    let mut rows = vec![None; graph.entity_count()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| run.fail(e))?;
        let id = graph.entity(&rec[0]).map_err(|e| run.fail(e))?;
        let weights = rec
            .iter()
            .skip(1)
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| run.fail(e))?;
        rows[id.index()] = Some(weights);
    }
    TopicTable::new(n_topics, rows).map_err(|e| run.fail(e))
}

pub fn validation(e: latentprobe::Error) -> CliError {
    CliError::Validation(e.to_string())
}
