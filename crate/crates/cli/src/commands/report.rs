//! `report`: summary CSV tables rebuilt from the JSON reports already in
//! the output directory. Nothing is recomputed.

use serde_json::Value;

use crate::error::{CliError, CliResult};
use crate::run::Run;

type Table = (Vec<&'static str>, Vec<Vec<String>>);
type Builder = fn(&Value) -> Table;

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn eval_table(v: &Value) -> Table {
    let rows = v["reports"]
        .as_array()
        .into_iter()
        .flatten()
        .map(|r| vec![cell(&r["metric"]), cell(&r["value"]), cell(&r["n_cases"]), cell(&r["skipped"])])
        .collect();
    (vec!["metric", "value", "n_cases", "skipped"], rows)
}

fn probe_table(v: &Value) -> Table {
    let rows = v["attributes"]
        .as_array()
        .into_iter()
        .flatten()
        .map(|r| {
            vec![
                cell(&r["attribute"]),
                cell(&r["rho"]),
                cell(&r["p_value"]),
                cell(&r["n_used"]),
                cell(&r["null_quantiles"]["q99"]),
            ]
        })
        .collect();
    (vec!["attribute", "rho", "p_value", "n_used", "null_q99"], rows)
}

fn erase_table(v: &Value) -> Table {
    let rows = v["per_iteration"]
        .as_array()
        .into_iter()
        .flatten()
        .enumerate()
        .map(|(i, r)| {
            vec![
                cell(&v["attribute"]),
                (i + 1).to_string(),
                cell(&r["rho"]),
                cell(&r["p_value"]),
                cell(&r["null_q99"]),
                (i < v["removed"].as_u64().unwrap_or(0) as usize).to_string(),
            ]
        })
        .collect();
    (vec!["attribute", "iteration", "rho", "p_value", "null_q99", "removed"], rows)
}

fn impact_table(v: &Value) -> Table {
    let mut rows = vec![vec![
        "diversity_cohens_d".into(),
        cell(&v["cohens_d"]),
        cell(&v["ci_95"][0]),
        cell(&v["ci_95"][1]),
    ]];
    for key in ["topic_cosine", "relevance_d"] {
        if !v[key].is_null() {
            let e = &v[key];
            rows.push(vec![key.into(), cell(&e["point"]), cell(&e["ci_95"][0]), cell(&e["ci_95"][1])]);
        }
    }
    (vec!["metric", "value", "ci_low", "ci_high"], rows)
}

fn sweep_table(v: &Value) -> Table {
    let rows = v["rows"]
        .as_array()
        .into_iter()
        .flatten()
        .map(|r| vec![cell(&r["alpha"]), cell(&r["mean_auc"]), cell(&r["std_auc"])])
        .collect();
    (vec!["alpha", "mean_auc", "std_auc"], rows)
}

fn robustness_table(v: &Value) -> Table {
    let rows = v["rows"]
        .as_array()
        .into_iter()
        .flatten()
        .map(|r| {
            ["kind", "magnitude", "comparison", "r2", "cosine_mean", "cosine_q025", "cosine_q975"]
                .iter()
                .map(|k| cell(&r[*k]))
                .collect()
        })
        .collect();
    (
        vec!["kind", "magnitude", "comparison", "r2", "cosine_mean", "cosine_q025", "cosine_q975"],
        rows,
    )
}

fn scale_table(v: &Value) -> Table {
    let keys = [
        "users",
        "mps",
        "gamma",
        "log_likelihood",
        "iterations",
        "converged",
        "anchor_rmse",
        "spearman_vs_truth",
    ];
    (vec!["field", "value"], keys.iter().map(|k| vec![k.to_string(), cell(&v[*k])]).collect())
}

/// Source report, summary table name and its builder.
const SOURCES: [(&str, &str, Builder); 7] = [
    ("eval_report.json", "summary_eval.csv", eval_table),
    ("probe_report.json", "summary_probe.csv", probe_table),
    ("erase_report.json", "summary_erase.csv", erase_table),
    ("impact_report.json", "summary_impact.csv", impact_table),
    ("sweep.json", "summary_sweep.csv", sweep_table),
    ("robustness.json", "summary_robustness.csv", robustness_table),
    ("scale_report.json", "summary_scale.csv", scale_table),
];

pub fn report(run: &Run) -> CliResult<()> {
    let present: Vec<_> = SOURCES.iter().filter(|(src, _, _)| run.path(src).is_file()).collect();
    if present.is_empty() {
        return Err(CliError::Validation(format!(
            "no reports found in {}; run some analysis subcommands first",
            run.out.display()
        )));
    }
    for (src, _, _) in &present {
        run.input(None, src, "report")?;
    }

    for (src, dst, build) in present {
        run.stage(&format!("summarize {src}"));
        let text = std::fs::read_to_string(run.path(src)).map_err(|e| run.fail(e))?;
        let value: Value = serde_json::from_str(&text).map_err(|e| run.fail(e))?;
        let (header, rows) = build(&value);
        let mut w = csv::Writer::from_writer(run.create(dst)?);
        let mut full_header = header.clone();
        full_header.push("source_config_hash");
        w.write_record(&full_header).map_err(|e| run.fail(e))?;
        let source_hash = cell(&value["config_hash"]);
        for mut row in rows {
            row.push(source_hash.clone());
            w.write_record(&row).map_err(|e| run.fail(e))?;
        }
        w.flush().map_err(|e| run.fail(e))?;
        log::info!("{dst} from {src}");
    }
    Ok(())
}
