//! `ingest` and `synth`: the two ways a graph enters the output directory.

use latentprobe::bench::generate_world;
use latentprobe::graph::{ingest_edges, write_edges, EdgeSchema, IngestOptions, RelationKind};
use serde_json::json;

use super::{read_names, validation, write_names, write_topics, ATTRIBUTES, EDGES, ENTITIES, TOPICS};
use crate::error::{CliError, CliResult};
use crate::run::Run;

pub fn ingest(run: &Run) -> CliResult<()> {
    let block = &run.config.ingest;
    let input = block
        .input
        .as_ref()
        .ok_or_else(|| CliError::Validation("set `ingest.input` to the edge-list file".into()))?;
    let input = run.input(Some(input), "", "edge list")?;
    let registry = block
        .registry
        .as_ref()
        .map(|p| run.input(Some(p), "", "entity registry"))
        .transpose()?;
    let mut schema = EdgeSchema::default();
    for (token, target) in &block.aliases {
        let relation = RelationKind::from_token(target).ok_or_else(|| {
            CliError::Validation(format!("alias `{token}` maps to unknown relation `{target}`"))
        })?;
        schema = schema.with_alias(token.clone(), relation);
    }

    run.stage("parse");
    let options = IngestOptions {
        schema,
        wtf_supersedes_follow: block.wtf_supersedes_follow,
        registry: registry.map(|p| read_names(run, &p)).transpose()?,
    };
    let (graph, summary) = ingest_edges(&input, &options).map_err(|e| run.fail(e))?;

    run.stage("write");
    write_edges(&graph, run.create(EDGES)?).map_err(|e| run.fail(e))?;
    write_names(run, ENTITIES, graph.names())?;
    run.write_json("ingest_summary.json", &summary)?;
    log::info!(
        "{} entities, {} Follow and {} WTF edges",
        summary.entities,
        summary.edges.follow,
        summary.edges.wtf
    );
    Ok(())
}

pub fn synth(run: &Run) -> CliResult<()> {
    let mut spec = run.config.synth.clone();
    spec.seed = run.seed;
    spec.validate().map_err(validation)?;

    run.stage("generate");
    let world = generate_world(&spec).map_err(|e| run.fail(e))?;

    run.stage("write");
    let names = world.graph.names().to_vec();
    write_edges(&world.graph, run.create(EDGES)?).map_err(|e| run.fail(e))?;
    write_names(run, ENTITIES, &names)?;
    world
        .attributes
        .write_csv(run.create(ATTRIBUTES)?, &names)
        .map_err(|e| run.fail(e))?;
    run.save_embedding("truth.emb", &world.truth)?;
    if let Some(topics) = &world.topics {
        write_topics(run, TOPICS, topics, &names)?;
    }
    let volunteers: Vec<&str> = world.volunteers.iter().map(|&v| world.graph.name(v)).collect();
    run.write_json(
        "world.json",
        &json!({
            "spec": spec,
            "entities": world.graph.entity_count(),
            "edges": {
                "Follow": world.graph.edge_count(RelationKind::Follow),
                "WTF": world.graph.edge_count(RelationKind::Wtf),
            },
            "follow_bias": world.follow_bias,
            "planted_directions": world.directions,
            "volunteers": volunteers,
        }),
    )?;
    log::info!(
        "world with {} entities, {} Follow and {} WTF edges",
        world.graph.entity_count(),
        world.graph.edge_count(RelationKind::Follow),
        world.graph.edge_count(RelationKind::Wtf)
    );
    Ok(())
}
