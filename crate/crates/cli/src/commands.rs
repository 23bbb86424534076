use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use serde_json::{json, Value};

use saam::adapt::{sample_and_pair, train_adapter, AdapterConfig};
use saam::baselines::KnnConfig;
use saam::embed::write_embeddings;
use saam::eval::report::to_json_string;
use saam::eval::{
    ablation_suite, all_as_anchors, fit_pipeline, run_experiment, write_pr_csv, PipelineConfig,
    SplitSpec,
};
use saam::ingest::{
    group_histories, parse_chat_log, word_count_histogram, write_histories_tsv, MIN_WORDS_EXCLUSIVE,
};
use saam::linalg::rows_to_matrix;
use saam::model::write_model;
use saam::saam::{finite_diff_gradcheck, SaamConfig};
use saam::synth::random_bank;
use saam::topics::{
    cluster_embeddings, ctfidf_keywords, keyword_filter, match_stats, parse_keyword_list,
    shipped_list, write_match_stats_csv, KMeansConfig, KeywordCategory, KeywordFilterSpec,
};

use crate::args::*;
use crate::data::{load_records, open, read_histories, vectors_for};
use crate::plan::{write_output, write_sidecar, CommandPlan};

pub fn run(command: &Command) -> Result<()> {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::Embed(a) => embed(a),
        Command::Discover(a) => discover(a),
        Command::Filter(a) => filter(a),
        Command::Adapt(a) => adapt(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a, false),
        Command::Ablate(a) => eval(a, true),
        Command::Gradcheck(a) => gradcheck(a),
    }
}

fn plan<F: serde::Serialize>(
    name: &'static str,
    flags: &F,
    config: &ConfigArg,
) -> Result<CommandPlan> {
    Ok(CommandPlan::new(name, flags)?.input(config.config.as_deref()))
}

fn ingest(a: &IngestArgs) -> Result<()> {
    let plan = plan("ingest", a, &a.config)?
        .input(Some(&a.input))
        .output(Some(&a.out));
    let (messages, rejected) = parse_chat_log(open(&a.input)?)?;
    for r in &rejected {
        warn!("{}:{}: skipped ({})", a.input.display(), r.line, r.reason);
    }
    let groups = group_histories(&messages)?;
    let count =
        |f: &dyn Fn(&saam::ingest::GroupSummary) -> bool| groups.iter().filter(|g| f(g)).count();
    let histories: Vec<_> = groups
        .iter()
        .filter(|g| g.is_clean() && g.history.word_count > MIN_WORDS_EXCLUSIVE)
        .map(|g| g.history.clone())
        .collect();
    let mut buf = Vec::new();
    write_histories_tsv(&mut buf, &histories)?;
    write_output(&a.out, &buf)?;

    let histogram: serde_json::Map<String, Value> =
        word_count_histogram(histories.iter().map(|h| h.word_count))?
            .into_iter()
            .map(|(bucket, share)| (bucket.to_string(), json!(share)))
            .collect();
    let summary = json!({
        "messages": messages.len(),
        "rejected_lines": rejected.len(),
        "groups": groups.len(),
        "spam_groups": count(&|g| g.flags.is_spam()),
        "sanitized_groups": count(&|g| g.sanitized),
        "short_groups": count(&|g| g.is_clean() && g.history.word_count <= MIN_WORDS_EXCLUSIVE),
        "retained": histories.len(),
        "word_count_histogram": histogram,
    });
    write_sidecar(&a.out, &plan, Some(summary))?;
    info!("{} of {} histories retained", histories.len(), groups.len());
    Ok(())
}

fn embed(a: &EmbedArgs) -> Result<()> {
    let plan = plan("embed", a, &a.config)?
        .input(Some(&a.input))
        .output(Some(&a.out));
    let texts: Vec<(String, String)> = if a.input.extension().is_some_and(|e| e == "jsonl") {
        saam::eval::parse_labeled_jsonl(open(&a.input)?)?
            .into_iter()
            .map(|t| (t.id, t.text))
            .collect()
    } else {
        read_histories(&a.input)?
            .into_iter()
            .map(|h| (h.id(), h.text))
            .collect()
    };
    let vectors = vectors_for(
        &texts,
        &VectorArgs {
            embeddings: None,
            provider: a.provider.clone(),
        },
    )?;
    let mut buf = Vec::new();
    write_embeddings(&mut buf, &vectors)?;
    write_output(&a.out, &buf)?;
    write_sidecar(
        &a.out,
        &plan,
        Some(json!({ "count": vectors.len(), "dim": a.provider.dim })),
    )?;
    Ok(())
}

fn discover(a: &DiscoverArgs) -> Result<()> {
    let plan = plan("discover", a, &a.config)?
        .input(Some(&a.input))
        .input(a.vectors.embeddings.as_deref())
        .output(Some(&a.out));
    let histories = read_histories(&a.input)?;
    let texts: Vec<(String, String)> = histories.iter().map(|h| (h.id(), h.text.clone())).collect();
    let vectors = vectors_for(&texts, &a.vectors)?;
    let rows: Vec<&[f64]> = vectors.iter().map(|v| v.values.as_slice()).collect();
    let data = rows_to_matrix(&rows)?;
    let km = cluster_embeddings(
        data.view(),
        &KMeansConfig {
            max_iter: a.max_iter,
            ..KMeansConfig::new(a.topics, a.seed)
        },
    )?;
    let docs: Vec<&str> = histories.iter().map(|h| h.text.as_str()).collect();
    let keywords = ctfidf_keywords(&km.assignment, &docs, a.topics, a.top)?;
    let topics: Vec<Value> = keywords
        .iter()
        .enumerate()
        .map(|(t, terms)| {
            json!({
                "topic": t,
                "size": km.assignment.iter().filter(|&&x| x == t).count(),
                "terms": terms.iter().map(|(w, s)| json!({"term": w, "score": s})).collect::<Vec<_>>(),
            })
        })
        .collect();
    let doc = json!({
        "plan": plan.to_value(),
        "objective": km.objective_trace.last(),
        "topics": topics,
    });
    write_output(&a.out, to_json_string(&doc)?.as_bytes())?;
    Ok(())
}

fn load_word_vectors(path: &Path) -> Result<std::collections::HashMap<String, Vec<f64>>> {
    Ok(saam::embed::load_embeddings(path)
        .with_context(|| format!("reading {}", path.display()))?
        .into_iter()
        .map(|v| (v.id, v.values))
        .collect())
}

fn filter(a: &FilterArgs) -> Result<()> {
    let plan = plan("filter", a, &a.config)?
        .input(Some(&a.input))
        .input(a.keywords.as_deref())
        .input(a.word_vectors.as_deref())
        .output(Some(&a.out))
        .output(a.stats.as_deref());
    let keywords = match &a.keywords {
        Some(path) => parse_keyword_list(
            &std::fs::read_to_string(path)
                .with_context(|| format!("cannot open {}", path.display()))?,
        ),
        None => shipped_list(
            a.list
                .as_deref()
                .unwrap_or("community-builder")
                .parse::<KeywordCategory>()?,
        ),
    };
    let histories = read_histories(&a.input)?;
    let texts: Vec<&str> = histories.iter().map(|h| h.text.as_str()).collect();
    let word_vectors = a
        .word_vectors
        .as_deref()
        .map(load_word_vectors)
        .transpose()?;
    let spec = KeywordFilterSpec {
        mode: a.mode.into(),
        ..KeywordFilterSpec::soft(keywords.clone(), a.tau)
    };
    let result = keyword_filter(&texts, &spec, word_vectors.as_ref())?;
    let kept: Vec<_> = result
        .matched
        .iter()
        .map(|&i| histories[i].clone())
        .collect();
    let mut buf = Vec::new();
    write_histories_tsv(&mut buf, &kept)?;
    write_output(&a.out, &buf)?;
    let summary = json!({
        "keywords": keywords.len(),
        "histories": result.total,
        "matched": result.matched.len(),
        "matched_fraction": result.matched_fraction,
    });
    write_sidecar(&a.out, &plan, Some(summary))?;
    if let Some(stats) = &a.stats {
        let rows = match_stats(&texts, &keywords, a.tau, word_vectors.as_ref())?;
        let mut buf = Vec::new();
        write_match_stats_csv(&mut buf, &rows)?;
        write_output(stats, &buf)?;
        write_sidecar(stats, &plan, None)?;
    }
    Ok(())
}

fn adapter_config(a: &AdapterArgs, seed: u64) -> AdapterConfig {
    AdapterConfig {
        lr: a.adapter_lr,
        epochs: a.adapter_epochs,
        seed,
        margin: a.margin,
        per_class: a.per_class,
        activation: a.activation.into(),
        ..AdapterConfig::default()
    }
}

/// Baseline kinds reuse the optimizer settings; their variant is unused.
fn saam_config(m: &ModelArgs, seed: u64) -> SaamConfig {
    let variant = m
        .variant
        .saam_variant()
        .unwrap_or(SaamConfig::default().variant);
    SaamConfig {
        variant,
        d_k: m.d_k,
        heads: m.heads,
        hidden: m.hidden,
        lr: m.lr,
        epochs: m.epochs,
        seed,
        threshold: m.threshold,
        exclude_self: m.exclude_self,
        patience: m.patience,
        ..SaamConfig::default()
    }
}

fn adapt(a: &AdaptArgs) -> Result<()> {
    let plan = plan("adapt", a, &a.config)?
        .input(a.data.input.as_deref())
        .input(a.data.vectors.embeddings.as_deref())
        .output(Some(&a.out));
    let records = load_records(&a.data, a.seed)?;
    let anchors = all_as_anchors(&records);
    let cfg = adapter_config(&a.adapter, a.seed);
    if cfg.epochs == 0 {
        bail!("--adapter-epochs 0 would write the identity map; nothing to train");
    }
    let pairs = sample_and_pair(&anchors, cfg.per_class, a.seed)?;
    let trained = train_adapter(&pairs, &anchors, &cfg)?;
    let mut buf = Vec::new();
    trained.map.write(&mut buf)?;
    write_output(&a.out, &buf)?;
    let summary = json!({
        "anchors": anchors.len(),
        "pairs": pairs.len(),
        "loss_first": trained.loss_trace.first(),
        "loss_last": trained.loss_trace.last(),
    });
    write_sidecar(&a.out, &plan, Some(summary))?;
    Ok(())
}

fn pipeline_config(
    adapter: &AdapterArgs,
    model: &ModelArgs,
    split: SplitSpec,
    seed: u64,
) -> PipelineConfig {
    PipelineConfig {
        kind: model.variant,
        split,
        adapter: adapter_config(adapter, seed),
        saam: saam_config(model, seed),
        knn: KnnConfig { k: model.k },
    }
}

fn train(a: &TrainArgs) -> Result<()> {
    let plan = plan("train", a, &a.config)?
        .input(a.data.input.as_deref())
        .input(a.data.vectors.embeddings.as_deref())
        .output(Some(&a.out));
    let records = load_records(&a.data, a.seed)?;
    let config = pipeline_config(&a.adapter, &a.model, SplitSpec::default(), a.seed);
    let fitted = fit_pipeline(&all_as_anchors(&records), &config, a.seed)?;
    let mut buf = Vec::new();
    write_model(&mut buf, &fitted.saved)?;
    write_output(&a.out, &buf)?;
    let summary = json!({
        "anchors": records.len(),
        "adapter_loss": fitted.adapter_loss.first().zip(fitted.adapter_loss.last()),
        "train_loss": fitted.train_loss.first().zip(fitted.train_loss.last()),
        "train_epochs": fitted.train_loss.len().saturating_sub(1),
    });
    write_sidecar(&a.out, &plan, Some(summary))?;
    Ok(())
}

fn pr_csv_path(base: &Path, split: usize) -> PathBuf {
    let stem = base
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    base.with_file_name(format!("{stem}-{split}.csv"))
}

fn eval(a: &EvalArgs, ablate: bool) -> Result<()> {
    let name = if ablate { "ablate" } else { "eval" };
    let mut plan = plan(name, a, &a.config)?
        .input(a.data.input.as_deref())
        .input(a.data.vectors.embeddings.as_deref())
        .output(Some(&a.report));
    if let (Some(base), false) = (&a.pr_csv, ablate) {
        for i in 0..a.splits {
            plan = plan.output(Some(&pr_csv_path(base, i)));
        }
    }
    let records = load_records(&a.data, a.seed)?;
    let split = SplitSpec {
        anchor_frac: a.anchor_frac,
        n_splits: a.splits,
        base_seed: a.seed,
        stratified: a.stratified,
    };
    let config = pipeline_config(&a.adapter, &a.model, split, a.seed);
    let text = if ablate {
        let mut report = ablation_suite(&records, &config)?;
        report.plan = Some(plan.to_value());
        for row in &report.rows {
            info!("{:<22} auroc {:.4}", row.name, row.aggregate.mean.auroc);
        }
        to_json_string(&report)?
    } else {
        let mut report = run_experiment(&records, &config)?;
        report.plan = Some(plan.to_value());
        info!(
            "auroc {:.4} +/- {:.4}, f1 {:.4}",
            report.aggregate.mean.auroc, report.aggregate.std.auroc, report.aggregate.mean.f1_bin
        );
        if let Some(base) = &a.pr_csv {
            for s in &report.splits {
                let path = pr_csv_path(base, s.index);
                let mut buf = Vec::new();
                write_pr_csv(&mut buf, &s.pr_curve)?;
                write_output(&path, &buf)?;
                write_sidecar(&path, &plan, None)?;
            }
        }
        to_json_string(&report)?
    };
    write_output(&a.report, text.as_bytes())?;
    Ok(())
}

fn gradcheck(a: &GradcheckArgs) -> Result<()> {
    let plan = plan("gradcheck", a, &a.config)?.output(a.report.as_deref());
    let variant = a.variant.saam_variant().ok_or_else(|| {
        anyhow!(
            "gradcheck applies to qkv, k-only and cossim, not {}",
            a.variant.as_str()
        )
    })?;
    let bank = random_bank(a.n, a.dim, a.seed);
    let config = SaamConfig {
        variant,
        d_k: a.d_k,
        heads: a.heads,
        hidden: a.hidden,
        seed: a.seed,
        exclude_self: a.exclude_self,
        ..SaamConfig::default()
    };
    let r = finite_diff_gradcheck(&bank, &config, a.eps)?;
    let pass = r.max_rel_error < a.tol;
    println!(
        "{} max relative error {:.3e} over {} parameters ({} frozen): {}",
        a.variant.as_str(),
        r.max_rel_error,
        r.analytic.len(),
        r.frozen.iter().filter(|&&f| f).count(),
        if pass { "ok" } else { "FAILED" }
    );
    if let Some(path) = &a.report {
        let doc = json!({
            "plan": plan.to_value(),
            "max_rel_error": r.max_rel_error,
            "worst_index": r.worst_index(),
            "tol": a.tol,
            "pass": pass,
            "analytic": r.analytic,
            "numeric": r.numeric,
        });
        write_output(path, to_json_string(&doc)?.as_bytes())?;
    }
    if !pass {
        bail!(
            "gradient check failed: {:.3e} >= {:.1e}",
            r.max_rel_error,
            a.tol
        );
    }
    Ok(())
}
