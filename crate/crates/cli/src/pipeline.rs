//! File-to-file pipeline stages. Inputs are validated before anything is
//! written.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Value};
use slb_core::corpus::{self, CorpusEntry};
use slb_core::detect::{
    change_report_path, detect_state_changes, read_change_report, write_change_report, ChangeRecord, DetectorConfig,
};
use slb_core::eval::{build_confusion, score_agreement, AgreementReport, MatchRule};
use slb_core::io::{read_json, read_jsonl, write_json};
use slb_core::labels::{label_path, load_labels, save_labels, LabelFile};
use slb_core::metrics::compute_annotation_metrics;
use slb_core::slb::{extract_negative_windows, fit_itm, generate_self_labels, pair_labels_to_changes, ItmModel};
use slb_core::synthgen::{generate_corpus, ScenarioConfig};

use crate::select::{selected, Selection};
use crate::{
    DetectArgs, EvalAgreementArgs, EvalConfusionArgs, FitItmArgs, GenArgs, MetricsArgs, NegativesArgs, Preset,
    SelflabelArgs,
};

const LABELS_SUFFIX: &str = ".labels.json";
const CHANGES_SUFFIX: &str = ".changes.jsonl";

/// Recording ids of files named `<rid><suffix>` in `dir`.
fn ids_with_suffix(dir: &Path, suffix: &str) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(rid) = name.strip_suffix(suffix) {
            if !rid.is_empty() && !rid.starts_with('.') {
                out.insert(rid.to_string(), path.clone());
            }
        }
    }
    Ok(out)
}

fn discover(dir: &Path, sel: &Option<Selection>) -> Result<BTreeMap<String, CorpusEntry>> {
    ensure!(dir.is_dir(), "corpus directory {} does not exist", dir.display());
    let mut all = corpus::discover(dir)?;
    all.retain(|rid, _| selected(sel, rid));
    Ok(all)
}

pub fn scenario(a: &GenArgs) -> Result<ScenarioConfig> {
    let mut cfg = match &a.config {
        Some(p) => read_json::<ScenarioConfig>(p)?,
        None => match a.preset {
            Preset::Default => ScenarioConfig::default(),
            Preset::Clean => ScenarioConfig::default().clean(),
            Preset::ShiftedLab => ScenarioConfig::shifted_lab(),
        },
    };
    cfg.seed = a.seed;
    if let Some(n) = a.recordings {
        cfg.n_recordings = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn gen(a: &GenArgs) -> Result<Value> {
    let cfg = scenario(a)?;
    let manifest = generate_corpus(&cfg, &a.out, a.force)?;
    Ok(json!({"recordings": manifest.recordings.len(), "files": manifest.files.len(), "out": a.out}))
}

pub fn detect(a: &DetectArgs) -> Result<Value> {
    let cfg = match &a.detector {
        Some(p) => DetectorConfig::load(p)?,
        None => DetectorConfig::default(),
    };
    cfg.validate()?;
    let entries = discover(&a.corpus, &a.recordings)?;
    let catalog = corpus::load_catalog(&a.corpus)?;
    // Parse everything first so a bad recording fails before any output.
    let changes: Vec<(String, Vec<ChangeRecord>)> = entries
        .par_iter()
        .map(|(rid, entry)| -> Result<_> {
            let rec = corpus::load_entry(rid, entry).with_context(|| format!("loading {rid}"))?.recording;
            let found = detect_state_changes(&rec, &catalog, &cfg).with_context(|| format!("detecting on {rid}"))?;
            Ok((rid.clone(), found.iter().map(|c| c.record()).collect()))
        })
        .collect::<Result<_>>()?;
    fs::create_dir_all(&a.out)?;
    let mut total = 0;
    let mut unclassified = 0;
    for (rid, ch) in &changes {
        write_change_report(&change_report_path(&a.out, rid), ch)?;
        total += ch.len();
        unclassified += ch.iter().filter(|c| c.class_id.is_none()).count();
    }
    Ok(json!({"recordings": changes.len(), "changes": total, "unclassified": unclassified}))
}

fn load_changes(dir: &Path, rid: &str) -> Result<Vec<ChangeRecord>> {
    let path = change_report_path(dir, rid);
    read_change_report(&path).with_context(|| format!("change report for {rid}"))
}

pub fn fit(a: &FitItmArgs) -> Result<Value> {
    ensure!(
        a.labels.len() == a.changes.len(),
        "--labels and --changes must be given the same number of times"
    );
    ensure!(a.d_ms > 0, "--d-ms must be positive");
    let known = match &a.corpus {
        Some(c) => Some(discover(c, &None)?),
        None => None,
    };
    let mut pairs = Vec::new();
    let mut unpaired_labels = 0;
    let mut unpaired_changes = 0;
    let mut recordings = 0;
    for (labels_dir, changes_dir) in a.labels.iter().zip(&a.changes) {
        for (rid, path) in ids_with_suffix(labels_dir, LABELS_SUFFIX)? {
            if !selected(&a.recordings, &rid) {
                continue;
            }
            if let Some(k) = &known {
                ensure!(k.contains_key(&rid), "labeled recording {rid} is not in the corpus");
            }
            let labels = load_labels(&path, a.d_ms)?;
            let changes = load_changes(changes_dir, &rid)?;
            let p = pair_labels_to_changes(&labels.labels, &changes);
            unpaired_labels += p.unpaired_labels.len();
            unpaired_changes += p.unpaired_changes.len();
            pairs.extend(p.pairs);
            recordings += 1;
        }
    }
    ensure!(recordings > 0, "no label files selected");
    let fit = fit_itm(&pairs, a.d_ms)?;
    fit.model.save(&a.out)?;
    Ok(json!({
        "recordings": recordings,
        "pairs": pairs.len(),
        "rejected": fit.rejected.len(),
        "unpaired_labels": unpaired_labels,
        "unpaired_changes": unpaired_changes,
        "classes": fit.model.classes.len(),
        "global_tau_ms": fit.model.global_tau_ms,
    }))
}

pub fn selflabel(a: &SelflabelArgs) -> Result<Value> {
    let itm = ItmModel::load(&a.itm)?;
    let entries = discover(&a.corpus, &a.recordings)?;
    let reports = ids_with_suffix(&a.changes, CHANGES_SUFFIX)?;
    let mut files = Vec::new();
    for rid in reports.keys().filter(|r| selected(&a.recordings, r)) {
        ensure!(entries.contains_key(rid), "change report for {rid} has no recording in the corpus");
        files.push(rid.clone());
    }
    let results: Vec<(String, LabelFile, usize)> = files
        .par_iter()
        .map(|rid| -> Result<_> {
            let rec = corpus::load_entry(rid, &entries[rid])?.recording;
            let s = generate_self_labels(&load_changes(&a.changes, rid)?, &itm)?;
            let file = LabelFile {
                recording_id: rid.clone(),
                duration_ms: rec.duration_ms,
                labels: s.labels,
            };
            file.validate(itm.d_ms)?;
            Ok((rid.clone(), file, s.dropped.len()))
        })
        .collect::<Result<_>>()?;
    let mut labels = 0;
    let mut dropped = 0;
    for (rid, file, d) in &results {
        save_labels(file, &label_path(&a.out, rid), itm.d_ms)?;
        labels += file.labels.len();
        dropped += d;
    }
    Ok(json!({"recordings": results.len(), "labels": labels, "dropped": dropped}))
}

pub fn negatives(a: &NegativesArgs) -> Result<Value> {
    let entries = discover(&a.corpus, &None)?;
    let mut out = Vec::new();
    for (rid, path) in ids_with_suffix(&a.labels, LABELS_SUFFIX)? {
        ensure!(entries.contains_key(&rid), "labeled recording {rid} is not in the corpus");
        let file = load_labels(&path, a.d_ms)?;
        let s = extract_negative_windows(
            &rid,
            file.duration_ms,
            &file.labels,
            a.d_ms,
            a.per_class,
            a.margin_ms,
            a.seed,
        );
        out.push((rid, s));
    }
    fs::create_dir_all(&a.out)?;
    let (mut windows, mut shortfall) = (0, 0);
    for (rid, s) in &out {
        write_json(&a.out.join(format!("{rid}.negatives.json")), s)?;
        windows += s.windows.len();
        shortfall += s.shortfall;
    }
    Ok(json!({"recordings": out.len(), "windows": windows, "shortfall": shortfall}))
}

pub fn metrics(a: &MetricsArgs) -> Result<Value> {
    let mut all = BTreeMap::new();
    for (rid, path) in ids_with_suffix(&a.labels, LABELS_SUFFIX)? {
        let file: LabelFile = read_json(&path)?;
        let changes = load_changes(&a.changes, &rid)?;
        all.insert(rid, compute_annotation_metrics(file.duration_ms, &file.labels, &changes)?);
    }
    let anomalies: usize = all.values().map(|m| m.anomalies.len()).sum();
    write_json(&a.out, &all)?;
    Ok(json!({"recordings": all.len(), "anomalies": anomalies}))
}

/// Scores every selected reference recording; a missing candidate file
/// counts as no candidate labels.
pub fn agreement(
    reference: &Path,
    candidate: &Path,
    rule: MatchRule,
    sel: &Option<Selection>,
) -> Result<AgreementReport> {
    rule.validate()?;
    let cands = ids_with_suffix(candidate, LABELS_SUFFIX)?;
    let mut reports = Vec::new();
    for (rid, path) in ids_with_suffix(reference, LABELS_SUFFIX)? {
        if !selected(sel, &rid) {
            continue;
        }
        let r: LabelFile = read_json(&path)?;
        let c = match cands.get(&rid) {
            Some(p) => read_json::<LabelFile>(p)?.labels,
            None => Vec::new(),
        };
        reports.push(score_agreement(&r.labels, &c, rule)?);
    }
    ensure!(!reports.is_empty(), "no reference label files selected");
    Ok(AgreementReport::combine(rule, &reports))
}

pub fn eval_agreement(a: &EvalAgreementArgs) -> Result<Value> {
    let rule = match a.onset_ms {
        Some(t) => MatchRule::Onset { tolerance_ms: t },
        None => MatchRule::Iou { threshold: a.iou },
    };
    let report = agreement(&a.reference, &a.candidate, rule, &a.recordings)?;
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    Ok(json!({
        "agreement": report.agreement,
        "matched": report.matched,
        "total_reference": report.total_reference,
        "total_candidate": report.total_candidate,
    }))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ClassLine {
    Bare(u32),
    Object { class_id: u32 },
}

fn read_classes(path: &Path) -> Result<Vec<u32>> {
    Ok(read_jsonl::<ClassLine>(path)?
        .into_iter()
        .map(|(_, l)| match l {
            ClassLine::Bare(c) | ClassLine::Object { class_id: c } => c,
        })
        .collect())
}

pub fn eval_confusion(a: &EvalConfusionArgs) -> Result<Value> {
    if a.classes == 0 {
        bail!("--classes must be at least 1");
    }
    let m = build_confusion(&read_classes(&a.truth)?, &read_classes(&a.pred)?, a.classes)?;
    if let Some(out) = &a.out {
        write_json(out, &m)?;
    }
    Ok(json!({"accuracy": m.accuracy, "total": m.total(), "classes": m.num_classes()}))
}

/// Labels from `dir` for one recording, if the file exists.
pub fn labels_for(dir: &Path, rid: &str) -> Result<Option<LabelFile>> {
    let path = label_path(dir, rid);
    if !path.exists() {
        return Ok(None);
    }
    let f: LabelFile = read_json(&path)?;
    Ok(Some(f))
}
