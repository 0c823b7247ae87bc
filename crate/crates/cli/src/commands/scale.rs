//! `scale`: ideal-point positions from a user-to-MP follow matrix,
//! calibrated onto a reference party scale.

use std::collections::BTreeMap;

use latentprobe::bench::generate_bipartite_world;
use latentprobe::scaling::{
    calibrate_affine, fit_homophily, read_party_assignment, read_reference, write_positions, BipartiteGraph,
};
use latentprobe::stats;
use serde_json::json;

use super::validation;
use crate::error::{CliError, CliResult};
use crate::run::Run;

pub fn scale(run: &Run) -> CliResult<()> {
    let block = &run.config.scale;
    block.model.validate().map_err(validation)?;
    let synthetic = block.synthetic.as_ref().filter(|_| block.follows.is_none());
    let (follows_path, parties_path) = if synthetic.is_some() {
        (None, None)
    } else {
        let follows = block
            .follows
            .as_ref()
            .ok_or_else(|| CliError::Validation("set `scale.follows` or a `scale.synthetic` world".into()))?;
        let parties = block
            .parties
            .as_ref()
            .ok_or_else(|| CliError::Validation("set `scale.parties` to the MP party file".into()))?;
        (
            Some(run.input(Some(follows), "", "follow list")?),
            Some(run.input(Some(parties), "", "party assignment")?),
        )
    };
    let reference_path = block
        .reference
        .as_ref()
        .map(|p| run.input(Some(p), "", "party reference"))
        .transpose()?;
    if reference_path.is_none() && block.anchors.is_empty() {
        return Err(CliError::Validation(
            "set `scale.reference` or inline `scale.anchors` party positions".into(),
        ));
    }

    run.stage("load");
    let mut truth_users: Option<Vec<f64>> = None;
    let (graph, party_of_all): (BipartiteGraph, Vec<Option<String>>) = match synthetic {
        Some(spec) => {
            run.stage("generate");
            let mut spec = spec.clone();
            spec.seed = run.seed;
            let world = generate_bipartite_world(&spec).map_err(|e| run.fail(e))?;
            world.graph.write_csv(run.create("bipartite_follows.csv")?).map_err(|e| run.fail(e))?;
            let mut w = csv::Writer::from_writer(run.create("bipartite_parties.csv")?);
            w.write_record(["mp_id", "party"]).map_err(|e| run.fail(e))?;
            for (mp, party) in world.graph.mps().iter().zip(&world.party_of) {
                w.write_record([mp, party]).map_err(|e| run.fail(e))?;
            }
            w.flush().map_err(|e| run.fail(e))?;
            if world.truth.d_pol == 1 {
                truth_users = Some(world.truth.positions_users.clone());
            }
            let parties = world.party_of.iter().cloned().map(Some).collect();
            (world.graph, parties)
        }
        None => {
            let graph = BipartiteGraph::read_csv(run.open(follows_path.as_ref().unwrap())?).map_err(|e| run.fail(e))?;
            let parties = read_party_assignment(run.open(parties_path.as_ref().unwrap())?, graph.mps())
                .map_err(|e| run.fail(e))?;
            (graph, parties)
        }
    };
    let reference: BTreeMap<String, Vec<f64>> = match &reference_path {
        Some(p) => read_reference(run.open(p)?).map_err(|e| run.fail(e))?,
        None => block.anchors.clone(),
    };

    run.stage("filter");
    let (filtered, keep_users, keep_mps) = graph.filtered(block.model.min_follows);
    log::info!(
        "kept {} of {} users and {} of {} MPs",
        keep_users.len(),
        graph.n_users(),
        keep_mps.len(),
        graph.n_mps()
    );

    run.stage("fit");
    let model = fit_homophily(&filtered, &block.model).map_err(|e| run.fail(e))?;

    run.stage("calibrate");
    let party_of: Vec<Option<String>> = keep_mps.iter().map(|&j| party_of_all[j].clone()).collect();
    let calibration = calibrate_affine(&model, &party_of, &reference).map_err(|e| run.fail(e))?;
    let (users, mps) = calibration.apply_model(&model);

    run.stage("write");
    let d = model.d_pol;
    write_positions(filtered.users(), &users, d, run.create("positions_users.csv")?).map_err(|e| run.fail(e))?;
    write_positions(filtered.mps(), &mps, d, run.create("positions_mps.csv")?).map_err(|e| run.fail(e))?;
    run.write_json("homophily.json", &json!({ "model": model, "calibration": calibration }))?;
    let spearman = truth_users.and_then(|t| {
        let t: Vec<f64> = keep_users.iter().map(|&i| t[i]).collect();
        stats::spearman(&users, &t)
    });
    run.write_json(
        "scale_report.json",
        &json!({
            "users": filtered.n_users(),
            "mps": filtered.n_mps(),
            "dropped_users": graph.n_users() - filtered.n_users(),
            "dropped_mps": graph.n_mps() - filtered.n_mps(),
            "d_pol": d,
            "gamma": model.gamma,
            "log_likelihood": model.log_likelihood,
            "iterations": model.iterations,
            "converged": model.converged,
            "anchor_rmse": calibration.rmse,
            "spearman_vs_truth": spearman,
        }),
    )?;
    if !model.converged {
        log::warn!("optimizer stopped after {} iterations without converging", model.iterations);
    }
    Ok(())
}
