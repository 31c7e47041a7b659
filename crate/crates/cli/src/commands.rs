use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use neurocap_core::data::{
    dataset_stats, fingerprint, load_dataset, split, synth_generate, tokenize, write_dataset,
};
use neurocap_core::metrics::EmbeddingProvider;
use neurocap_core::pmi::train_lm;
use neurocap_core::report::{render_grid, render_table};
use neurocap_core::trainer::{evaluate, evaluate_candidates, train, DecodeOptions, TrainOutcome};
use neurocap_core::{
    load_model, save_model, DatasetRecord, Error, EvalReport, Mechanism, Model, NgramLM, ReportRow,
    SynthSpec, TrainConfig,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::args::{CaptionArgs, Command, DataArgs, EvalArgs, GenDataArgs, ReplayArgs, TrainArgs};
use crate::manifest::{io_error, DatasetEntry, RunManifest, SplitFingerprints};

pub fn execute(command: Command, recorded: Option<&RunManifest>) -> Result<()> {
    match command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a, recorded),
        Command::Eval(a) => eval_cmd(a, recorded),
        Command::Caption(a) => caption_cmd(a),
        Command::Compare(a) => compare_cmd(a, recorded),
        Command::Replay(a) => replay(a),
    }
}

fn replay(args: ReplayArgs) -> Result<()> {
    let manifest = RunManifest::read(&args.manifest)?;
    let mut command = manifest.command.clone();
    if let Some(out) = args.out {
        match &mut command {
            Command::GenData(a) => a.out = out,
            Command::Train(a) | Command::Compare(a) => a.out = out,
            Command::Eval(a) => a.out = Some(out),
            Command::Caption(_) | Command::Replay(_) => {}
        }
    }
    if matches!(command, Command::Replay(_)) {
        bail!(Error::Format("a manifest cannot record a replay".into()));
    }
    execute(command, Some(&manifest))
}

// ---------------------------------------------------------------- inputs

struct Inputs {
    records: Vec<DatasetRecord>,
    entries: Vec<DatasetEntry>,
    label: String,
}

fn preset_specs(name: &str, seed: u64) -> Result<Vec<SynthSpec>> {
    Ok(SynthSpec::preset(name, seed)?)
}

fn load_inputs(data: &DataArgs, seed: u64) -> Result<Inputs> {
    match (&data.preset, data.data.is_empty()) {
        (Some(_), false) => bail!(Error::Config(
            "pass either --data or --preset, not both".into()
        )),
        (None, true) => bail!(Error::Config(
            "no input data: pass --data <file>... or --preset <name>".into()
        )),
        (Some(name), true) => {
            let mut records = Vec::new();
            for spec in preset_specs(name, seed)? {
                records.extend(synth_generate(&spec)?);
            }
            let entries = vec![DatasetEntry {
                source: format!("preset:{name}"),
                records: records.len(),
                fingerprint: fingerprint(&records)?,
            }];
            Ok(Inputs {
                records,
                entries,
                label: name.clone(),
            })
        }
        (None, false) => {
            let mut records: Vec<DatasetRecord> = Vec::new();
            let mut entries = Vec::new();
            let mut labels = Vec::new();
            for path in &data.data {
                let part = load_dataset(path)?;
                if let (Some(a), Some(b)) = (records.first(), part.first()) {
                    if a.features.dim() != b.features.dim() {
                        bail!(Error::Config(format!(
                            "{}: feature width {} differs from {} in earlier files",
                            path.display(),
                            b.features.dim(),
                            a.features.dim()
                        )));
                    }
                }
                entries.push(DatasetEntry {
                    source: path.display().to_string(),
                    records: part.len(),
                    fingerprint: fingerprint(&part)?,
                });
                labels.push(
                    path.file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| "data".into()),
                );
                records.extend(part);
            }
            if records.is_empty() {
                bail!(Error::Config(
                    "the input datasets contain no records".into()
                ));
            }
            Ok(Inputs {
                records,
                entries,
                label: labels.join("+"),
            })
        }
    }
}

fn read_train_config(path: &Path) -> Result<TrainConfig> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())).into())
}

/// File (or defaults) plus command-line overrides; a replay uses the
/// recorded configuration verbatim.
fn resolve_config(args: &TrainArgs, recorded: Option<&RunManifest>) -> Result<TrainConfig> {
    if let Some(cfg) = recorded.and_then(|m| m.config.clone()) {
        cfg.validate()?;
        return Ok(cfg);
    }
    let mut cfg = match &args.config {
        Some(p) => read_train_config(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(m) = args.mechanism {
        cfg.mechanism = m;
    }
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if let Some(b) = args.beam {
        cfg.beam = b;
    }
    if let Some(e) = args.embedder {
        cfg.embedder = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn display_label(label: &str) -> String {
    let mut c = label.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn body_ids(model: &Model, records: &[DatasetRecord]) -> Vec<Vec<usize>> {
    records
        .iter()
        .flat_map(|r| r.captions.iter())
        .map(|c| tokenize(c).iter().map(|t| model.vocab.id(t)).collect())
        .collect()
}

fn provider_for(
    cfg: &TrainConfig,
    model: &Model,
    corpus: &[DatasetRecord],
) -> Result<Box<dyn EmbeddingProvider>> {
    Ok(cfg.embedder.build(
        model.vocab.len(),
        &body_ids(model, corpus),
        cfg.d_emb,
        cfg.seed,
    )?)
}

fn lm_for(cfg: &TrainConfig, model: &Model, train_set: &[DatasetRecord]) -> Result<NgramLM> {
    Ok(train_lm(
        &body_ids(model, train_set),
        model.vocab.len(),
        cfg.lm_order,
        cfg.lm_add_k,
    )?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_error(path, e))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    Ok(())
}

// -------------------------------------------------------------- gen-data

fn gen_data(args: GenDataArgs) -> Result<()> {
    let specs: Vec<SynthSpec> = match (&args.preset, &args.config) {
        (Some(name), None) => preset_specs(name, args.seed.unwrap_or(0))?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            let mut spec: SynthSpec = serde_path_to_error::deserialize(de)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            if let Some(s) = args.seed {
                spec.seed = s;
            }
            vec![spec]
        }
        _ => bail!(Error::Config(
            "gen-data needs exactly one of --preset or --config".into()
        )),
    };

    let manifest_path = manifest_beside(&args.out);
    let mut manifest = RunManifest::new(Command::GenData(args.clone()));
    manifest.seed = specs.first().map(|s| s.seed);
    manifest.artifacts = vec![args.out.clone(), manifest_path.clone()];
    manifest.write(&manifest_path)?;

    let mut parts = Vec::new();
    for spec in &specs {
        let recs = synth_generate(spec)?;
        let name = spec.unit_prefix.clone().unwrap_or_else(|| "dataset".into());
        parts.push((name, recs));
    }
    let all: Vec<DatasetRecord> = parts.iter().flat_map(|(_, r)| r.iter().cloned()).collect();
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_dataset(&all, &args.out)?;
    print!("{}", stats_table(&parts));
    println!("wrote {} records to {}", all.len(), args.out.display());
    Ok(())
}

fn manifest_beside(out: &Path) -> PathBuf {
    let mut name = out
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn stats_table(parts: &[(String, Vec<DatasetRecord>)]) -> String {
    let stats: Vec<_> = parts.iter().map(|(_, r)| dataset_stats(r)).collect();
    let mut header = vec!["Data Characteristics"];
    header.extend(parts.iter().map(|(n, _)| n.as_str()));
    let row = |name: &str, f: &dyn Fn(&neurocap_core::data::DatasetStats) -> String| {
        let mut r = vec![name.to_string()];
        r.extend(stats.iter().map(f));
        r
    };
    let rows = vec![
        row("Data Amount", &|s| s.records.to_string()),
        row("Longest Sequence Length", &|s| s.longest.to_string()),
        row("Average Sequence Length", &|s| format!("{:.2}", s.average)),
        row("Most Appeared Seq. Length", &|s| s.mode_length.to_string()),
        row("Occurrences of Most Appeared Length", &|s| {
            format!("{} times", s.mode_occurrences)
        }),
        row("Top 10 Word Occurrences", &|s| {
            let words: Vec<&str> = s
                .top_tokens
                .iter()
                .take(10)
                .map(|(w, _)| w.as_str())
                .collect();
            format!("[{}]", words.join(", "))
        }),
    ];
    render_grid(&header, &rows)
}

// ----------------------------------------------------------------- train

#[derive(Serialize, Deserialize)]
struct TrainReport {
    dataset: String,
    split: String,
    best_epoch: Option<usize>,
    #[serde(rename = "final")]
    final_: EvalReport,
    best: EvalReport,
}

struct Prepared {
    cfg: TrainConfig,
    inputs: Inputs,
    split: neurocap_core::data::Split<DatasetRecord>,
}

fn prepare(
    args: &TrainArgs,
    recorded: Option<&RunManifest>,
    command: Command,
) -> Result<(Prepared, RunManifest)> {
    let cfg = resolve_config(args, recorded)?;
    let inputs = load_inputs(&args.data, cfg.seed)?;
    if let Some(m) = recorded {
        m.check_datasets(&inputs.entries)?;
    }
    let sp = split(&inputs.records, cfg.split, cfg.seed)?;
    if sp.train.is_empty() || sp.val.is_empty() {
        bail!(Error::Config(format!(
            "split of {} records leaves train {} / val {}; use more data or larger ratios",
            inputs.records.len(),
            sp.train.len(),
            sp.val.len()
        )));
    }
    let mut manifest = RunManifest::new(command);
    manifest.config = Some(cfg.clone());
    manifest.seed = Some(cfg.seed);
    manifest.datasets = inputs.entries.clone();
    manifest.splits = Some(SplitFingerprints::of(&sp)?);
    Ok((
        Prepared {
            cfg,
            inputs,
            split: sp,
        },
        manifest,
    ))
}

impl Prepared {
    /// Held-out records for the final report: test, or validation when the
    /// test split is empty.
    fn report_set(&self) -> (&'static str, &[DatasetRecord]) {
        if self.split.test.is_empty() {
            ("val", &self.split.val)
        } else {
            ("test", &self.split.test)
        }
    }
}

fn save_outcome(dir: &Path, outcome: &TrainOutcome) -> Result<()> {
    outcome.history.write_csv(dir.join("history.csv"))?;
    save_model(&outcome.final_model, dir.join("model.final.ckpt"))?;
    save_model(&outcome.best_model, dir.join("model.best.ckpt"))?;
    Ok(())
}

fn train_cmd(args: TrainArgs, recorded: Option<&RunManifest>) -> Result<()> {
    let (prep, mut manifest) = prepare(&args, recorded, Command::Train(args.clone()))?;
    let out = &args.out;
    create_dir(out)?;
    manifest.artifacts = [
        "manifest.json",
        "history.csv",
        "model.final.ckpt",
        "model.best.ckpt",
        "lm.json",
        "report.json",
        "report.txt",
    ]
    .iter()
    .map(|n| out.join(n))
    .collect();
    manifest.write(&out.join("manifest.json"))?;

    let cfg = &prep.cfg;
    let outcome = train(cfg, &prep.split.train, &prep.split.val)?;
    save_outcome(out, &outcome)?;
    let lm = lm_for(cfg, &outcome.final_model, &prep.split.train)?;
    lm.save(out.join("lm.json"))?;

    let (split_name, held_out) = prep.report_set();
    let provider = provider_for(cfg, &outcome.final_model, &prep.split.train)?;
    let opts = DecodeOptions {
        beam: cfg.beam,
        pmi: args.pmi.then_some((&lm, cfg.pmi_lambda)),
    };
    let final_ = evaluate(&outcome.final_model, held_out, provider.as_ref(), &opts)?;
    let best = evaluate(&outcome.best_model, held_out, provider.as_ref(), &opts)?;

    let label = display_label(&prep.inputs.label);
    let report = TrainReport {
        dataset: label.clone(),
        split: split_name.into(),
        best_epoch: outcome.history.best_record().map(|r| r.epoch),
        final_,
        best,
    };
    let rows = vec![
        ReportRow::from_eval(&label, &report.final_),
        ReportRow::from_eval(&format!("{label}-Best-BLEU"), &report.best),
    ];
    let mut text = format!(
        "{} on {} split ({} records, beam {}{})\n",
        cfg.mechanism.report_label(),
        split_name,
        held_out.len(),
        cfg.beam,
        if args.pmi { ", PMI reranked" } else { "" }
    );
    text.push_str(&render_table(&rows));
    write_json(&out.join("report.json"), &report)?;
    write_text(&out.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

// --------------------------------------------------------------- compare

#[derive(Serialize, Deserialize)]
struct VariantResult {
    model: String,
    best_epoch: Option<usize>,
    best_val_bleu: Option<f64>,
    final_val_bleu: Option<f64>,
    #[serde(rename = "final")]
    final_: EvalReport,
    best: EvalReport,
    final_pmi: EvalReport,
    best_pmi: EvalReport,
}

#[derive(Serialize, Deserialize)]
struct CompareReport {
    dataset: String,
    split: String,
    records: usize,
    beam: usize,
    pmi_lambda: f64,
    variants: Vec<VariantResult>,
}

/// Beam-decodes once and scores both the top hypothesis and the PMI pick.
fn evaluate_both(
    model: &Model,
    records: &[DatasetRecord],
    provider: &dyn EmbeddingProvider,
    beam: usize,
    lm: &NgramLM,
    lambda: f64,
) -> Result<(EvalReport, EvalReport)> {
    let plain = DecodeOptions { beam, pmi: None };
    let reranked = DecodeOptions {
        beam,
        pmi: Some((lm, lambda)),
    };
    let a = evaluate(model, records, provider, &plain)?;
    let b = evaluate(model, records, provider, &reranked)?;
    Ok((a, b))
}

fn compare_cmd(args: TrainArgs, recorded: Option<&RunManifest>) -> Result<()> {
    let (prep, mut manifest) = prepare(&args, recorded, Command::Compare(args.clone()))?;
    let out = &args.out;
    create_dir(out)?;
    let mut artifacts: Vec<PathBuf> = [
        "manifest.json",
        "report.json",
        "report.txt",
        "comparison.csv",
    ]
    .iter()
    .map(|n| out.join(n))
    .collect();
    for m in Mechanism::ALL {
        for f in [
            "history.csv",
            "model.final.ckpt",
            "model.best.ckpt",
            "lm.json",
        ] {
            artifacts.push(out.join(m.name()).join(f));
        }
    }
    manifest.artifacts = artifacts;
    manifest.write(&out.join("manifest.json"))?;

    let (split_name, held_out) = prep.report_set();
    let results: Vec<VariantResult> = Mechanism::ALL
        .par_iter()
        .map(|&mechanism| -> Result<VariantResult> {
            let cfg = TrainConfig {
                mechanism,
                ..prep.cfg.clone()
            };
            let dir = out.join(mechanism.name());
            create_dir(&dir)?;
            let outcome = train(&cfg, &prep.split.train, &prep.split.val)
                .with_context(|| format!("training {}", mechanism.name()))?;
            save_outcome(&dir, &outcome)?;
            let lm = lm_for(&cfg, &outcome.final_model, &prep.split.train)?;
            lm.save(dir.join("lm.json"))?;
            let provider = provider_for(&cfg, &outcome.final_model, &prep.split.train)?;
            let (final_, final_pmi) = evaluate_both(
                &outcome.final_model,
                held_out,
                provider.as_ref(),
                cfg.beam,
                &lm,
                cfg.pmi_lambda,
            )?;
            let (best, best_pmi) = evaluate_both(
                &outcome.best_model,
                held_out,
                provider.as_ref(),
                cfg.beam,
                &lm,
                cfg.pmi_lambda,
            )?;
            let h = &outcome.history;
            Ok(VariantResult {
                model: mechanism.report_label().into(),
                best_epoch: h.best_record().map(|r| r.epoch),
                best_val_bleu: h.best_record().and_then(|r| r.bleu),
                final_val_bleu: h.final_record().and_then(|r| r.bleu),
                final_,
                best,
                final_pmi,
                best_pmi,
            })
        })
        .collect::<Result<_>>()?;

    let label = display_label(&prep.inputs.label);
    let report = CompareReport {
        dataset: label.clone(),
        split: split_name.into(),
        records: held_out.len(),
        beam: prep.cfg.beam,
        pmi_lambda: prep.cfg.pmi_lambda,
        variants: results,
    };
    let text = render_compare(&report);
    write_json(&out.join("report.json"), &report)?;
    write_text(&out.join("report.txt"), &text)?;
    write_text(&out.join("comparison.csv"), &compare_csv(&report)?)?;
    print!("{text}");
    Ok(())
}

fn render_compare(r: &CompareReport) -> String {
    let best_label = format!("{}-Best-BLEU", r.dataset);
    let table = |final_of: fn(&VariantResult) -> &EvalReport,
                 best_of: fn(&VariantResult) -> &EvalReport| {
        let mut rows: Vec<ReportRow> = r
            .variants
            .iter()
            .map(|v| ReportRow::from_eval(&r.dataset, final_of(v)))
            .collect();
        rows.extend(
            r.variants
                .iter()
                .map(|v| ReportRow::from_eval(&best_label, best_of(v))),
        );
        render_table(&rows)
    };
    let mut text = String::new();
    let _ = writeln!(
        text,
        "{} split, {} records, beam {}\n",
        r.split, r.records, r.beam
    );
    text.push_str(&table(|v| &v.final_, |v| &v.best));

    let _ = writeln!(text, "\n{best_label}");
    let fmt = |x: Option<f64>| x.map(|b| format!("{b:.4}")).unwrap_or_else(|| "-".into());
    let rows: Vec<Vec<String>> = r
        .variants
        .iter()
        .map(|v| {
            vec![
                v.model.clone(),
                v.best_epoch
                    .map(|e| e.to_string())
                    .unwrap_or_else(|| "-".into()),
                fmt(v.best_val_bleu),
                fmt(v.final_val_bleu),
                format!("{:.4}", v.best.bleu.score),
                format!("{:.4}", v.best.f1),
            ]
        })
        .collect();
    text.push_str(&render_grid(
        &[
            "Model",
            "Best epoch",
            "Best val BLEU",
            "Final val BLEU",
            "BLEU",
            "F1-Score",
        ],
        &rows,
    ));

    let _ = writeln!(text, "\nPMI reranked (lambda {})", r.pmi_lambda);
    text.push_str(&table(|v| &v.final_pmi, |v| &v.best_pmi));
    text
}

fn compare_csv(r: &CompareReport) -> Result<String> {
    let mut s = String::from("dataset,model,checkpoint,decoding,bleu,precision,recall,f1\n");
    for v in &r.variants {
        let cells = [
            ("final", "beam", &v.final_),
            ("best", "beam", &v.best),
            ("final", "pmi", &v.final_pmi),
            ("best", "pmi", &v.best_pmi),
        ];
        for (ckpt, dec, e) in cells {
            let _ = writeln!(
                s,
                "{},{},{ckpt},{dec},{},{},{},{}",
                r.dataset, v.model, e.bleu.score, e.precision, e.recall, e.f1
            );
        }
    }
    Ok(s)
}

// ------------------------------------------------------------ eval/caption

fn load_lm(explicit: Option<&Path>, checkpoint: &Path) -> Result<NgramLM> {
    let path = match explicit {
        Some(p) => p.to_path_buf(),
        None => checkpoint.with_file_name("lm.json"),
    };
    Ok(NgramLM::load(&path)?)
}

fn check_dims(model: &Model, records: &[DatasetRecord]) -> Result<()> {
    let d_s = model.params.dims.d_s;
    if let Some(r) = records.iter().find(|r| r.features.dim() != d_s) {
        bail!(Error::Shape {
            op: "checkpoint vs dataset feature width",
            left: (1, d_s),
            right: (r.features.len(), r.features.dim()),
        });
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct EvalOutput {
    dataset: String,
    report: EvalReport,
}

fn eval_cmd(args: EvalArgs, recorded: Option<&RunManifest>) -> Result<()> {
    if args.beam == 0 {
        bail!(Error::Config("--beam must be at least 1".into()));
    }
    let model = load_model(&args.checkpoint, args.mechanism)?;
    let inputs = load_inputs(&args.data, args.seed)?;
    if let Some(m) = recorded {
        m.check_datasets(&inputs.entries)?;
    }
    check_dims(&model, &inputs.records)?;
    if let Some(out) = &args.out {
        create_dir(out)?;
        let mut manifest = RunManifest::new(Command::Eval(args.clone()));
        manifest.seed = Some(args.seed);
        manifest.datasets = inputs.entries.clone();
        manifest.artifacts = ["manifest.json", "report.json", "report.txt"]
            .iter()
            .map(|n| out.join(n))
            .collect();
        manifest.write(&out.join("manifest.json"))?;
    }

    let provider = args.embedder.build(
        model.vocab.len(),
        &body_ids(&model, &inputs.records),
        args.d_emb,
        args.seed,
    )?;
    let report = if args.oracle {
        let gold: Vec<Vec<usize>> = inputs
            .records
            .iter()
            .map(|r| {
                tokenize(&r.captions[0])
                    .iter()
                    .map(|t| model.vocab.id(t))
                    .collect()
            })
            .collect();
        let mut rep = evaluate_candidates(&model.vocab, &inputs.records, &gold, provider.as_ref())?;
        rep.model = "gold".into();
        rep
    } else {
        let lm = if args.pmi {
            Some(load_lm(args.lm.as_deref(), &args.checkpoint)?)
        } else {
            None
        };
        let opts = DecodeOptions {
            beam: args.beam,
            pmi: lm.as_ref().map(|lm| (lm, args.pmi_lambda)),
        };
        evaluate(&model, &inputs.records, provider.as_ref(), &opts)?
    };

    let label = display_label(&inputs.label);
    let text = render_table(&[ReportRow::from_eval(&label, &report)]);
    if let Some(out) = &args.out {
        write_json(
            &out.join("report.json"),
            &EvalOutput {
                dataset: label.clone(),
                report: report.clone(),
            },
        )?;
        write_text(&out.join("report.txt"), &text)?;
    }
    print!("{text}");
    Ok(())
}

fn caption_cmd(args: CaptionArgs) -> Result<()> {
    if args.beam == 0 {
        bail!(Error::Config("--beam must be at least 1".into()));
    }
    let model = load_model(&args.checkpoint, None)?;
    let inputs = load_inputs(&args.data, args.seed)?;
    check_dims(&model, &inputs.records)?;
    let selected: Vec<&DatasetRecord> = if args.units.is_empty() {
        inputs.records.iter().collect()
    } else {
        args.units
            .iter()
            .map(|id| {
                inputs
                    .records
                    .iter()
                    .find(|r| &r.unit_id == id)
                    .ok_or_else(|| Error::Config(format!("unknown unit id `{id}`")))
            })
            .collect::<Result<_, _>>()?
    };
    let lm = if args.pmi {
        Some(load_lm(args.lm.as_deref(), &args.checkpoint)?)
    } else {
        None
    };
    let opts = DecodeOptions {
        beam: args.beam,
        pmi: lm.as_ref().map(|lm| (lm, args.pmi_lambda)),
    };
    let label = model.mechanism.report_label().to_uppercase();
    let mut text = String::new();
    for (i, rec) in selected.iter().enumerate() {
        let ids = model.caption(&rec.features, &opts)?;
        if i > 0 {
            text.push('\n');
        }
        let _ = writeln!(text, "unit: {}", rec.unit_id);
        for gold in &rec.captions {
            let _ = writeln!(text, "Annotation: {gold}");
        }
        let _ = writeln!(text, "{label}: {}", model.vocab.decode(&ids));
    }
    print!("{text}");
    Ok(())
}
