//! End-to-end pipeline execution driven by a run manifest.
//!
//! A manifest is itself an experiment description (`.expd` records), so two
//! finished runs can be compared with the descriptor diff: the resolved
//! manifest written into the run directory records every stage, parameter,
//! input binding, and input digest. All randomness flows from the single
//! manifest seed, and every artifact is written atomically, so a rerun with
//! the same manifest is byte-identical and an interrupted run never leaves
//! partially overwritten outputs.
//!
//! Stages run in pipeline order: design, quant, classify, mine. Each stage
//! reads its upstream artifact from the run directory unless the manifest
//! binds an explicit override, so a single stage can be re-run in isolation.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::callsig;
use crate::descriptor::{
    parse_description, serialize_description, ExperimentDescription, Record, Value,
};
use crate::design;
use crate::quant;
use crate::report;
use crate::rulemine;
use crate::tsv;

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Design,
    Quant,
    Classify,
    Mine,
}

impl Stage {
    pub const ORDER: [Stage; 4] = [Stage::Design, Stage::Quant, Stage::Classify, Stage::Mine];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Design => "design",
            Stage::Quant => "quant",
            Stage::Classify => "classify",
            Stage::Mine => "mine",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        match s {
            "design" => Some(Stage::Design),
            "quant" => Some(Stage::Quant),
            "classify" => Some(Stage::Classify),
            "mine" => Some(Stage::Mine),
            _ => None,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Tunable parameters, all recorded in the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineParams {
    pub segmentation_alpha: f64,
    pub classify_alpha: f64,
    pub min_support: usize,
    pub min_confidence: f64,
    pub max_body_len: usize,
    pub replicates: usize,
    pub array_types: usize,
    pub saturation_ceiling: f64,
    pub channel: quant::Channel,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            segmentation_alpha: 0.01,
            classify_alpha: 0.05,
            min_support: 5,
            min_confidence: 0.6,
            max_body_len: 1,
            replicates: 4,
            array_types: 2,
            saturation_ceiling: quant::DEFAULT_SATURATION_CEILING,
            channel: quant::Channel::Combined,
        }
    }
}

/// A parsed run manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub name: String,
    pub seed: u64,
    pub stages: Vec<Stage>,
    pub config_name: Option<String>,
    pub params: PipelineParams,
    /// Input bindings by role: clones, pixels, mask, pairing, categories,
    /// hierarchy, and optional stage-input overrides (spots, arraymap,
    /// calls).
    pub inputs: BTreeMap<String, PathBuf>,
}

impl RunManifest {
    pub fn new(name: impl Into<String>, seed: u64) -> RunManifest {
        RunManifest {
            name: name.into(),
            seed,
            stages: Vec::new(),
            config_name: None,
            params: PipelineParams::default(),
            inputs: BTreeMap::new(),
        }
    }

    /// Read a manifest from its record form.
    pub fn from_description(desc: &ExperimentDescription) -> Result<RunManifest, PipelineError> {
        let mut manifest = RunManifest::new(desc.name.clone(), 0);
        let bad = |msg: String| PipelineError::Manifest { message: msg };
        for record in &desc.records {
            match record.keyword.as_str() {
                "EXPERIMENT" => {}
                "SEED" => {
                    let text = record
                        .fields
                        .first()
                        .map(Value::text)
                        .unwrap_or_default();
                    manifest.seed = text
                        .parse()
                        .map_err(|_| bad(format!("bad SEED value {text:?}")))?;
                }
                "STAGE" => {
                    let text = record
                        .fields
                        .first()
                        .and_then(Value::as_str)
                        .unwrap_or_default();
                    let stage = Stage::parse(text)
                        .ok_or_else(|| bad(format!("unknown STAGE {text:?}")))?;
                    if !manifest.stages.contains(&stage) {
                        manifest.stages.push(stage);
                    }
                }
                "CONFIG" => {
                    manifest.config_name = record
                        .fields
                        .first()
                        .and_then(Value::as_str)
                        .map(str::to_string);
                }
                "PARAM" => {
                    let key = record
                        .fields
                        .first()
                        .and_then(Value::as_str)
                        .unwrap_or_default()
                        .to_string();
                    let value = record
                        .fields
                        .get(1)
                        .ok_or_else(|| bad(format!("PARAM {key} has no value")))?;
                    set_param(&mut manifest.params, &key, value)
                        .map_err(|msg| bad(format!("PARAM {key}: {msg}")))?;
                }
                "INPUT" => {
                    let role = record
                        .fields
                        .first()
                        .and_then(Value::as_str)
                        .unwrap_or_default()
                        .to_string();
                    let path = record
                        .fields
                        .get(1)
                        .map(Value::text)
                        .ok_or_else(|| bad(format!("INPUT {role} has no path")))?;
                    manifest.inputs.insert(role, PathBuf::from(path));
                }
                "DIGEST" => {} // informational, recomputed on every run
                other => return Err(bad(format!("unknown manifest keyword {other}"))),
            }
        }
        // normalize stage order to pipeline order
        manifest
            .stages
            .sort_by_key(|s| Stage::ORDER.iter().position(|o| o == s));
        Ok(manifest)
    }

    pub fn parse(text: &str) -> Result<RunManifest, PipelineError> {
        let desc = parse_description(text).map_err(|e| PipelineError::Manifest {
            message: e.to_string(),
        })?;
        RunManifest::from_description(&desc)
    }

    /// Record form, including one DIGEST record per supplied input digest.
    pub fn to_description(&self, digests: &BTreeMap<String, String>) -> ExperimentDescription {
        let mut records = Vec::new();
        let s = |v: &str| Value::from_token(v);
        records.push(Record::new("EXPERIMENT", vec![s(&self.name)]));
        records.push(Record::new("SEED", vec![s(&self.seed.to_string())]));
        for stage in &self.stages {
            records.push(Record::new("STAGE", vec![s(stage.name())]));
        }
        if let Some(config) = &self.config_name {
            records.push(Record::new("CONFIG", vec![s(config)]));
        }
        let p = &self.params;
        let params: Vec<(&str, String)> = vec![
            ("segmentation_alpha", tsv::fmt_f64(p.segmentation_alpha)),
            ("classify_alpha", tsv::fmt_f64(p.classify_alpha)),
            ("min_support", p.min_support.to_string()),
            ("min_confidence", tsv::fmt_f64(p.min_confidence)),
            ("max_body_len", p.max_body_len.to_string()),
            ("replicates", p.replicates.to_string()),
            ("array_types", p.array_types.to_string()),
            ("saturation_ceiling", tsv::fmt_f64(p.saturation_ceiling)),
            ("channel", p.channel.name().to_string()),
        ];
        for (key, value) in params {
            records.push(Record::new("PARAM", vec![s(key), s(&value)]));
        }
        for (role, path) in &self.inputs {
            records.push(Record::new(
                "INPUT",
                vec![s(role), Value::Str(path.display().to_string())],
            ));
        }
        for (role, digest) in digests {
            records.push(Record::new("DIGEST", vec![s(role), s(digest)]));
        }
        ExperimentDescription::from_records(records)
    }
}

fn set_param(params: &mut PipelineParams, key: &str, value: &Value) -> Result<(), String> {
    let as_f64 = || -> Result<f64, String> {
        match value {
            Value::Decimal(d) => Ok(*d),
            Value::Int(i) => Ok(*i as f64),
            Value::Str(s) => s.parse().map_err(|_| format!("bad number {s:?}")),
        }
    };
    let as_usize = || -> Result<usize, String> {
        match value {
            Value::Int(i) if *i >= 0 => Ok(*i as usize),
            other => Err(format!("bad count {other}")),
        }
    };
    match key {
        "segmentation_alpha" => params.segmentation_alpha = as_f64()?,
        "classify_alpha" => params.classify_alpha = as_f64()?,
        "min_support" => params.min_support = as_usize()?,
        "min_confidence" => params.min_confidence = as_f64()?,
        "max_body_len" => params.max_body_len = as_usize()?.max(1),
        "replicates" => params.replicates = as_usize()?,
        "array_types" => params.array_types = as_usize()?,
        "saturation_ceiling" => params.saturation_ceiling = as_f64()?,
        "channel" => {
            let name = value.as_str().unwrap_or_default();
            params.channel = quant::Channel::parse(name)
                .ok_or_else(|| format!("unknown channel {name:?}"))?;
        }
        other => return Err(format!("unknown parameter {other:?}")),
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum PipelineError {
    /// A required input is absent; exit code 2.
    #[error("stage {stage}: missing input: {what}")]
    MissingInput { stage: String, what: String },
    /// A stage failed internally; exit code 1.
    #[error("stage {stage}: {message}")]
    Stage { stage: String, message: String },
    #[error("manifest: {message}")]
    Manifest { message: String },
    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl PipelineError {
    /// 2 for missing inputs, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::MissingInput { .. } => 2,
            _ => 1,
        }
    }
}

/// What a finished run produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub ran_stages: Vec<Stage>,
    pub artifacts: Vec<PathBuf>,
    pub manifest_path: PathBuf,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

struct RunContext<'a> {
    manifest: &'a RunManifest,
    out_dir: &'a Path,
    digests: BTreeMap<String, String>,
    artifacts: Vec<PathBuf>,
}

impl<'a> RunContext<'a> {
    /// Read a bound input file, recording its digest.
    fn read_input(&mut self, stage: Stage, role: &str) -> Result<String, PipelineError> {
        let path = self.manifest.inputs.get(role).ok_or_else(|| {
            PipelineError::MissingInput {
                stage: stage.name().into(),
                what: format!("no {role} input bound in the manifest"),
            }
        })?;
        self.read_path(stage, role, &path.clone())
    }

    /// Read a stage input that defaults to an earlier stage's artifact.
    fn read_artifact_or_input(
        &mut self,
        stage: Stage,
        role: &str,
        artifact: &str,
    ) -> Result<String, PipelineError> {
        match self.manifest.inputs.get(role) {
            Some(path) => self.read_path(stage, role, &path.clone()),
            None => {
                let path = self.out_dir.join(artifact);
                if !path.exists() {
                    return Err(PipelineError::MissingInput {
                        stage: stage.name().into(),
                        what: format!(
                            "{} (bind an {role} input or run the producing stage first)",
                            path.display()
                        ),
                    });
                }
                self.read_path(stage, role, &path)
            }
        }
    }

    fn read_path(
        &mut self,
        stage: Stage,
        role: &str,
        path: &Path,
    ) -> Result<String, PipelineError> {
        let bytes = fs::read(path).map_err(|_| PipelineError::MissingInput {
            stage: stage.name().into(),
            what: path.display().to_string(),
        })?;
        self.digests.insert(role.to_string(), sha256_hex(&bytes));
        String::from_utf8(bytes).map_err(|_| PipelineError::Stage {
            stage: stage.name().into(),
            message: format!("{} is not UTF-8", path.display()),
        })
    }

    fn write_artifact(&mut self, name: &str, content: &str) -> Result<PathBuf, PipelineError> {
        let path = self.out_dir.join(name);
        tsv::write_atomic(&path, content).map_err(|source| PipelineError::Io {
            path: path.clone(),
            source,
        })?;
        self.artifacts.push(path.clone());
        Ok(path)
    }
}

/// Execute the manifest's stages into `out_dir`.
///
/// The resolved manifest (with input digests) is written as
/// `manifest.expd` even when the stage list is empty.
pub fn run_pipeline(manifest: &RunManifest, out_dir: &Path) -> Result<RunSummary, PipelineError> {
    fs::create_dir_all(out_dir).map_err(|source| PipelineError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut ctx = RunContext {
        manifest,
        out_dir,
        digests: BTreeMap::new(),
        artifacts: Vec::new(),
    };

    for stage in Stage::ORDER {
        if !manifest.stages.contains(&stage) {
            continue;
        }
        match stage {
            Stage::Design => run_design(&mut ctx)?,
            Stage::Quant => run_quant(&mut ctx)?,
            Stage::Classify => run_classify(&mut ctx)?,
            Stage::Mine => run_mine(&mut ctx)?,
        }
    }

    let resolved = manifest.to_description(&ctx.digests);
    let manifest_path = out_dir.join("manifest.expd");
    tsv::write_atomic(&manifest_path, &serialize_description(&resolved)).map_err(|source| {
        PipelineError::Io {
            path: manifest_path.clone(),
            source,
        }
    })?;

    Ok(RunSummary {
        ran_stages: manifest.stages.clone(),
        artifacts: ctx.artifacts,
        manifest_path,
    })
}

fn stage_err<E: fmt::Display>(stage: Stage) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError::Stage {
        stage: stage.name().into(),
        message: e.to_string(),
    }
}

fn run_design(ctx: &mut RunContext) -> Result<(), PipelineError> {
    let stage = Stage::Design;
    let clones_text = ctx.read_input(stage, "clones")?;
    let clone_ids = design::read_clone_list(&clones_text);
    let config_name =
        ctx.manifest
            .config_name
            .as_deref()
            .ok_or_else(|| PipelineError::MissingInput {
                stage: stage.name().into(),
                what: "no CONFIG record in the manifest".into(),
            })?;
    let config = design::PrintingConfiguration::parse_name(config_name).map_err(stage_err(stage))?;
    let layout = design::generate_layout(
        &clone_ids,
        &config,
        ctx.manifest.params.replicates,
        ctx.manifest.params.array_types,
        ctx.manifest.seed,
    )
    .map_err(stage_err(stage))?;
    let verification = design::verify_layout(&layout);
    if !verification.is_valid() {
        return Err(PipelineError::Stage {
            stage: stage.name().into(),
            message: format!("{} layout violations", verification.violations.len()),
        });
    }
    ctx.write_artifact("layout.tsv", &design::export_plate_maps(&layout))?;
    ctx.write_artifact("arraymap.tsv", &design::export_array_maps(&layout))?;
    Ok(())
}

fn run_quant(ctx: &mut RunContext) -> Result<(), PipelineError> {
    let stage = Stage::Quant;
    let pixels = ctx.read_input(stage, "pixels")?;
    let mask = ctx.read_input(stage, "mask")?;
    let cells = quant::read_pixel_grid(&pixels, &mask).map_err(stage_err(stage))?;
    let params = quant::QuantParams {
        alpha: ctx.manifest.params.segmentation_alpha,
        channel: ctx.manifest.params.channel,
        saturation_ceiling: ctx.manifest.params.saturation_ceiling,
    };
    // attach clone ids when both an array map and a pairing are available
    let table_and_types = match (
        ctx.manifest.inputs.contains_key("pairing"),
        ctx.out_dir.join("arraymap.tsv").exists() || ctx.manifest.inputs.contains_key("arraymap"),
    ) {
        (true, true) => {
            let map_text = ctx.read_artifact_or_input(stage, "arraymap", "arraymap.tsv")?;
            let pairing_text = ctx.read_input(stage, "pairing")?;
            let table = design::ArrayMapTable::parse(&map_text).map_err(stage_err(stage))?;
            let pairings = callsig::read_pairing_tsv(&pairing_text).map_err(stage_err(stage))?;
            let mut array_types = BTreeMap::new();
            for pairing in &pairings {
                for array in &pairing.arrays {
                    array_types.insert(array.array_id.clone(), array.array_type.clone());
                }
            }
            Some((table, array_types))
        }
        _ => None,
    };
    let quantified = quant::quantify_cells(
        &cells,
        &params,
        table_and_types.as_ref().map(|(t, m)| (t, m)),
    )
    .map_err(stage_err(stage))?;
    ctx.write_artifact("spots.tsv", &quant::write_spots_tsv(&quantified))?;
    Ok(())
}

fn run_classify(ctx: &mut RunContext) -> Result<(), PipelineError> {
    let stage = Stage::Classify;
    let spots_text = ctx.read_artifact_or_input(stage, "spots", "spots.tsv")?;
    let map_text = ctx.read_artifact_or_input(stage, "arraymap", "arraymap.tsv")?;
    let pairing_text = ctx.read_input(stage, "pairing")?;
    let spots = quant::read_spots_tsv(&spots_text).map_err(stage_err(stage))?;
    let table = design::ArrayMapTable::parse(&map_text).map_err(stage_err(stage))?;
    let pairings = callsig::read_pairing_tsv(&pairing_text).map_err(stage_err(stage))?;
    if pairings.is_empty() {
        return Err(PipelineError::Stage {
            stage: stage.name().into(),
            message: "pairing file names no comparisons".into(),
        });
    }
    let mut calls = Vec::new();
    for pairing in &pairings {
        let dataset = callsig::assemble_replicates(&spots, &table, pairing).map_err(|e| {
            // an array missing from the spot data is a missing input
            if let callsig::CallError::ArrayMissing { .. } = e {
                PipelineError::MissingInput {
                    stage: stage.name().into(),
                    what: e.to_string(),
                }
            } else {
                stage_err(stage)(e)
            }
        })?;
        calls.extend(
            callsig::classify_all(&dataset, ctx.manifest.params.classify_alpha)
                .map_err(stage_err(stage))?,
        );
    }
    ctx.write_artifact("calls.tsv", &callsig::write_calls_tsv(&calls))?;
    Ok(())
}

fn run_mine(ctx: &mut RunContext) -> Result<(), PipelineError> {
    let stage = Stage::Mine;
    let calls_text = ctx.read_artifact_or_input(stage, "calls", "calls.tsv")?;
    let categories_text = ctx.read_input(stage, "categories")?;
    let hierarchy = match ctx.manifest.inputs.contains_key("hierarchy") {
        true => {
            let text = ctx.read_input(stage, "hierarchy")?;
            rulemine::read_hierarchy_tsv(&text).map_err(stage_err(stage))?
        }
        false => Vec::new(),
    };
    let calls = callsig::read_calls_tsv(&calls_text).map_err(stage_err(stage))?;
    let categories = report::read_categories_tsv(&categories_text).map_err(stage_err(stage))?;
    let category_facts: Vec<(String, String)> = categories
        .iter()
        .flat_map(|(clone, cats)| cats.iter().map(move |c| (clone.clone(), c.clone())))
        .collect();
    let fb =
        rulemine::build_factbase(&calls, category_facts, hierarchy).map_err(stage_err(stage))?;
    let language = rulemine::HypothesisLanguage::from_factbase(&fb)
        .with_max_body_len(ctx.manifest.params.max_body_len);
    let mined = rulemine::mine_rules(
        &fb,
        ctx.manifest.params.min_support,
        ctx.manifest.params.min_confidence,
        &language,
    );
    ctx.write_artifact("facts.tsv", &rulemine::write_facts_tsv(&fb))?;
    ctx.write_artifact("rules.txt", &rulemine::write_rules_text(&mined))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips_through_records() {
        let mut manifest = RunManifest::new("PINE_RUN", 42);
        manifest.stages = vec![Stage::Design, Stage::Classify];
        manifest.config_name = Some("Stanford4x16x24".into());
        manifest.params.classify_alpha = 0.05;
        manifest.params.min_confidence = 0.6;
        manifest
            .inputs
            .insert("clones".into(), PathBuf::from("inputs/clones.txt"));
        let desc = manifest.to_description(&BTreeMap::new());
        let text = serialize_description(&desc);
        let reparsed = RunManifest::parse(&text).unwrap();
        assert_eq!(reparsed, manifest);
    }

    #[test]
    fn stage_order_is_normalized() {
        let text = "EXPERIMENT X\nSEED 1\nSTAGE mine\nSTAGE design\n";
        let manifest = RunManifest::parse(text).unwrap();
        assert_eq!(manifest.stages, vec![Stage::Design, Stage::Mine]);
    }

    #[test]
    fn unknown_keyword_is_a_manifest_error() {
        assert!(RunManifest::parse("NONSENSE 1\n").is_err());
    }

    #[test]
    fn empty_stage_list_writes_manifest_only() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = RunManifest::new("EMPTY", 7);
        let summary = run_pipeline(&manifest, dir.path()).unwrap();
        assert!(summary.ran_stages.is_empty());
        assert!(summary.artifacts.is_empty());
        assert!(summary.manifest_path.exists());
        let text = fs::read_to_string(&summary.manifest_path).unwrap();
        assert!(text.contains("SEED 7"));
    }

    #[test]
    fn missing_input_names_stage_and_path() {
        let dir = tempfile::tempdir().unwrap();
        let mut manifest = RunManifest::new("X", 1);
        manifest.stages = vec![Stage::Quant];
        manifest
            .inputs
            .insert("pixels".into(), dir.path().join("nope.tsv"));
        manifest
            .inputs
            .insert("mask".into(), dir.path().join("mask.tsv"));
        let err = run_pipeline(&manifest, dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let msg = err.to_string();
        assert!(msg.contains("quant"), "{msg}");
        assert!(msg.contains("nope.tsv"), "{msg}");
    }

    #[test]
    fn design_stage_is_deterministic() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let clones_path = dir_a.path().join("clones.txt");
        let clones: String = (1..=384).map(|i| format!("{i}\n")).collect();
        fs::write(&clones_path, &clones).unwrap();
        let mut manifest = RunManifest::new("DESIGN_ONLY", 11);
        manifest.stages = vec![Stage::Design];
        manifest.config_name = Some("Stanford4x16x24".into());
        manifest.inputs.insert("clones".into(), clones_path);
        run_pipeline(&manifest, &dir_a.path().join("run1")).unwrap();
        run_pipeline(&manifest, &dir_b.path().join("run2")).unwrap();
        for artifact in ["layout.tsv", "arraymap.tsv", "manifest.expd"] {
            let a = fs::read(dir_a.path().join("run1").join(artifact)).unwrap();
            let b = fs::read(dir_b.path().join("run2").join(artifact)).unwrap();
            assert_eq!(a, b, "{artifact} differs between identical runs");
        }
    }

    #[test]
    fn manifests_diff_through_descriptor() {
        let mut a = RunManifest::new("A", 1);
        a.params.min_confidence = 0.96;
        let mut b = a.clone();
        b.params.min_confidence = 0.84;
        let da = a.to_description(&BTreeMap::new());
        let db = b.to_description(&BTreeMap::new());
        let entries = crate::descriptor::diff_descriptions(&da, &db);
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].kind(), crate::descriptor::DiffKind::Changed);
    }
}
