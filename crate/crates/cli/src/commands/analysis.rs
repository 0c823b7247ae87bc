//! `probe`, `erase` and `recommend`: attribute directions, their removal
//! and what removal does to recommendations.

use std::collections::BTreeMap;

use latentprobe::erase::{erase_attribute, protect_model};
use latentprobe::graph::EntityId;
use latentprobe::probe::{probe_attribute, CcaOptions, ProbeReport};
use latentprobe::recommend::{policy_impact, write_slates_csv, ImpactOptions};
use latentprobe::rng;
use latentprobe::transe::EmbeddingModel;
use serde::Serialize;

use super::{
    graph_inputs, load_attributes, load_graph, load_model, pick_attribute, read_names, read_topics, ATTRIBUTES,
    EMBEDDING, ENTITIES, PROTECTED, TOPICS,
};
use crate::error::{CliError, CliResult};
use crate::run::{seeds, Run};

/// File-name-safe form of an attribute name.
fn slug(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

/// Stores a direction as a one-row embedding file.
fn save_direction(run: &Run, file: &str, direction: &[f64]) -> CliResult<()> {
    let model = EmbeddingModel::new(direction.len(), direction.to_vec(), BTreeMap::new()).map_err(|e| run.fail(e))?;
    run.save_embedding(file, &model)
}

#[derive(Serialize)]
struct ProbeFile {
    n_perm: usize,
    attributes: Vec<ProbeReport>,
}

pub fn probe(run: &Run) -> CliResult<()> {
    let block = &run.config.probe;
    let names_path = run.input(run.config.train.entities.as_ref(), ENTITIES, "entity registry")?;
    let emb_path = run.input(block.embedding.as_ref(), EMBEDDING, "embedding")?;
    let attr_path = run.input(block.attributes_file.as_ref(), ATTRIBUTES, "attribute")?;
    if block.n_perm == 0 {
        return Err(CliError::Validation("probe.n_perm must be at least 1".into()));
    }

    run.stage("load");
    let names = read_names(run, &names_path)?;
    let model = load_model(run, &emb_path, None)?;
    let table = load_attributes(run, &attr_path, &names)?;
    let attrs: Vec<String> = if block.attributes.is_empty() {
        table.names().map(str::to_string).collect()
    } else {
        block.attributes.clone()
    };
    let options = CcaOptions {
        ridge: block.ridge,
        standardize: block.standardize,
        orientation: None,
    };

    let phi = model.entity_matrix();
    let mut reports = Vec::new();
    let mut projections = Vec::new();
    for (i, attr) in attrs.iter().enumerate() {
        run.stage(&format!("probe {attr}"));
        let seed = rng::derive(run.derive(seeds::PROBE), i as u64);
        let res = probe_attribute(&phi, attr, &table, &options, block.n_perm, seed).map_err(|e| run.fail(e))?;
        let file = format!("directions/{}.emb", slug(attr));
        save_direction(run, &file, &res.direction)?;
        let w = project_all(&model, &res.direction);
        projections.push(w);
        log::info!("{attr}: rho {:.4}, p {:.4}", res.correlation, res.p_value.unwrap_or(f64::NAN));
        reports.push(res.report(Some(file)));
    }

    run.stage("write");
    let mut w = csv::Writer::from_writer(run.create("projections.csv")?);
    w.write_record(std::iter::once("entity_id").chain(attrs.iter().map(String::as_str)))
        .map_err(|e| run.fail(e))?;
    for (i, name) in names.iter().enumerate() {
        let rec = std::iter::once(name.clone()).chain(projections.iter().map(|p| p[i].to_string()));
        w.write_record(rec).map_err(|e| run.fail(e))?;
    }
    w.flush().map_err(|e| run.fail(e))?;
    run.write_json(
        "probe_report.json",
        &ProbeFile {
            n_perm: block.n_perm,
            attributes: reports,
        },
    )
}

/// `Phi w` for every entity, including those without attribute values.
fn project_all(model: &EmbeddingModel, w: &[f64]) -> Vec<f64> {
    (0..model.entity_count())
        .map(|i| model.row(EntityId(i as u32)).iter().zip(w).map(|(x, y)| x * y).sum())
        .collect()
}

pub fn erase(run: &Run) -> CliResult<()> {
    let block = &run.config.erase;
    let names_path = run.input(run.config.train.entities.as_ref(), ENTITIES, "entity registry")?;
    let emb_path = run.input(block.embedding.as_ref(), EMBEDDING, "embedding")?;
    let attr_path = run.input(block.attributes_file.as_ref(), ATTRIBUTES, "attribute")?;
    let mut options = block.options.clone();
    options.seed = run.derive(seeds::ERASE);
    if !(options.significance > 0.0 && options.significance < 1.0) || options.n_perm == 0 || options.max_iter == 0 {
        return Err(CliError::Validation(
            "erase needs significance in (0, 1), n_perm >= 1 and max_iter >= 1".into(),
        ));
    }

    run.stage("load");
    let names = read_names(run, &names_path)?;
    let model = load_model(run, &emb_path, None)?;
    let table = load_attributes(run, &attr_path, &names)?;
    let attr = pick_attribute(run, &table, block.attribute.as_ref(), "erase.attribute")?;

    run.stage("erase");
    let res = erase_attribute(&model.entity_matrix(), &attr, &table, &options).map_err(|e| run.fail(e))?;
    let protected = protect_model(&model, &res.removed_directions, options.project_relations).map_err(|e| run.fail(e))?;

    run.stage("write");
    run.save_embedding(PROTECTED, &protected)?;
    let mut files = Vec::new();
    for (i, dir) in res.removed_directions.iter().enumerate() {
        let file = format!("directions/erased_{}_{}.emb", slug(&attr), i + 1);
        save_direction(run, &file, dir)?;
        files.push(file);
    }
    log::info!("{attr}: removed {} direction(s), stopped by {:?}", files.len(), res.stop_reason);
    run.write_json("erase_report.json", &res.summary(options.significance, files))
}

pub fn recommend(run: &Run) -> CliResult<()> {
    let block = &run.config.recommend;
    let inputs = graph_inputs(run)?;
    let control_path = run.input(block.control.as_ref(), EMBEDDING, "control embedding")?;
    let treatment_path = run.input(block.treatment.as_ref(), PROTECTED, "treatment embedding")?;
    let attr_path = run.input(block.attributes_file.as_ref(), ATTRIBUTES, "attribute")?;
    let topics_path = run.optional_input(block.topics_file.as_ref(), TOPICS, "topic")?;
    if block.k == 0 || block.bootstrap == 0 || block.n_users == Some(0) {
        return Err(CliError::Validation("recommend needs k, bootstrap and n_users of at least 1".into()));
    }

    run.stage("load");
    let graph = load_graph(run, &inputs)?;
    let control = load_model(run, &control_path, Some(&graph))?;
    let treatment = load_model(run, &treatment_path, Some(&graph))?;
    let table = load_attributes(run, &attr_path, graph.names())?;
    let topics = topics_path.map(|p| read_topics(run, &p, &graph)).transpose()?;
    let attr = pick_attribute(run, &table, block.diversity_attribute.as_ref(), "recommend.diversity_attribute")?;

    let users = block.n_users.map(|n| {
        // A seeded permutation of entity indices; no sampling state needed.
        let s = run.derive(seeds::USERS);
        let mut ids: Vec<EntityId> = (0..graph.entity_count() as u32).map(EntityId).collect();
        ids.sort_by_key(|id| rng::derive(s, id.0 as u64));
        ids.truncate(n);
        ids.sort();
        ids
    });
    let options = ImpactOptions {
        k: block.k,
        diversity_attribute: attr,
        interest_attribute: block.interest_attribute.clone(),
        bootstrap: block.bootstrap,
        seed: run.derive(seeds::IMPACT),
        users,
        topic_aggregation: block.topic_aggregation,
    };

    run.stage("impact");
    let (report, slates_c, slates_t) =
        policy_impact(&control, &treatment, &graph, &table, topics.as_ref(), &options).map_err(|e| run.fail(e))?;

    run.stage("write");
    write_slates_csv(&slates_c, graph.names(), run.create("slates_control.csv")?).map_err(|e| run.fail(e))?;
    write_slates_csv(&slates_t, graph.names(), run.create("slates_treatment.csv")?).map_err(|e| run.fail(e))?;
    log::info!(
        "diversity Cohen's d {:.3} [{:.3}, {:.3}] over {} users",
        report.cohens_d,
        report.ci_95.0,
        report.ci_95.1,
        report.n_users
    );
    run.write_json("impact_report.json", &report)
}
