//! The `espresso` command line: each subcommand is a thin wrapper over the
//! library. Exit codes: 0 success, 1 internal error, 2 missing input.

use std::collections::BTreeMap;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use espresso::callsig;
use espresso::descriptor::{self, Selector};
use espresso::design;
use espresso::pipeline::{self, RunManifest};
use espresso::quant;
use espresso::report;
use espresso::rulemine;

#[derive(Parser)]
#[command(name = "espresso", version, about = "Microarray experiment management")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Work with experiment description files
    Desc {
        #[command(subcommand)]
        command: DescCommand,
    },
    /// Generate a randomized replicated array layout
    Design(DesignArgs),
    /// Quantify spot pixel data into calibrated ratios
    Quant(QuantArgs),
    /// Classify clones as up, down, or unchanged
    Classify(ClassifyArgs),
    /// Mine relational rules from a facts file
    Mine(MineArgs),
    /// Run pipeline stages from a manifest
    Run(RunArgs),
    /// Summarize calls, categories, and mined rules
    Report(ReportArgs),
    /// Diff two description files (same as `desc diff`)
    Diff(DiffArgs),
}

#[derive(Subcommand)]
enum DescCommand {
    /// Parse a description and print its canonical form
    Parse { file: PathBuf },
    /// Print records matching a keyword and field predicates
    Query {
        file: PathBuf,
        keyword: String,
        /// Field predicate `INDEX OP LITERAL`, e.g. `0=D4I`; repeatable
        #[arg(long = "where")]
        predicates: Vec<String>,
    },
    /// Diff two descriptions record by record
    Diff(DiffArgs),
}

#[derive(Args)]
struct DiffArgs {
    before: PathBuf,
    after: PathBuf,
}

#[derive(Args)]
struct DesignArgs {
    /// Clone list, one id per line
    #[arg(long)]
    clones: PathBuf,
    /// Printing configuration name ending in QxRxC, e.g. Stanford4x16x24
    #[arg(long)]
    config: String,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    replicates: usize,
    #[arg(long = "array-types", default_value_t = 2)]
    array_types: usize,
    /// Directory for layout.tsv and arraymap.tsv
    #[arg(long = "out-dir", default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct QuantArgs {
    #[arg(long)]
    pixels: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    /// Segmentation channel: ch1, ch2, or combined
    #[arg(long, default_value = "combined")]
    channel: String,
    #[arg(long, default_value_t = quant::DEFAULT_SATURATION_CEILING)]
    ceiling: f64,
    /// Optional array map (arraymap.tsv) used to attach clone ids
    #[arg(long)]
    arraymap: Option<PathBuf>,
    /// Optional pairing file mapping array ids to array types
    #[arg(long)]
    pairing: Option<PathBuf>,
    #[arg(long, default_value = "spots.tsv")]
    out: PathBuf,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    spots: PathBuf,
    /// Array map export (arraymap.tsv) locating each clone's spots
    #[arg(long)]
    layout: PathBuf,
    #[arg(long)]
    pairing: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value = "calls.tsv")]
    out: PathBuf,
}

#[derive(Args)]
struct MineArgs {
    #[arg(long)]
    facts: PathBuf,
    #[arg(long)]
    hierarchy: Option<PathBuf>,
    #[arg(long = "min-conf", default_value_t = 0.6)]
    min_conf: f64,
    #[arg(long = "min-sup", default_value_t = 5)]
    min_sup: usize,
    #[arg(long = "max-body-len", default_value_t = 1)]
    max_body_len: usize,
    /// Output file; omit to print to stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Override the classification alpha
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "min-conf")]
    min_conf: Option<f64>,
    #[arg(long = "min-sup")]
    min_sup: Option<usize>,
    #[arg(long)]
    config: Option<String>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    calls: PathBuf,
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    categories: Option<PathBuf>,
}

/// Error carrying the process exit code.
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn internal(message: impl Into<String>) -> CliError {
        CliError {
            code: 1,
            message: message.into(),
        }
    }
}

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> CliError {
        CliError::internal(e.to_string())
    }
}

fn read_input(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError {
        code: if e.kind() == ErrorKind::NotFound { 2 } else { 1 },
        message: format!("{}: {e}", path.display()),
    })
}

fn write_output(path: &Path, content: &str) -> Result<(), CliError> {
    fs::write(path, content)
        .map_err(|e| CliError::internal(format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("espresso: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Desc { command } => match command {
            DescCommand::Parse { file } => desc_parse(&file),
            DescCommand::Query {
                file,
                keyword,
                predicates,
            } => desc_query(&file, &keyword, &predicates),
            DescCommand::Diff(args) => desc_diff(&args),
        },
        Command::Design(args) => design_cmd(&args),
        Command::Quant(args) => quant_cmd(&args),
        Command::Classify(args) => classify_cmd(&args),
        Command::Mine(args) => mine_cmd(&args),
        Command::Run(args) => run_cmd(&args),
        Command::Report(args) => report_cmd(&args),
        Command::Diff(args) => desc_diff(&args),
    }
}

fn desc_parse(file: &Path) -> Result<(), CliError> {
    let desc = descriptor::parse_description(&read_input(file)?)?;
    print!("{}", descriptor::serialize_description(&desc));
    Ok(())
}

fn desc_query(file: &Path, keyword: &str, predicates: &[String]) -> Result<(), CliError> {
    let desc = descriptor::parse_description(&read_input(file)?)?;
    let mut selector = Selector::keyword(keyword);
    for text in predicates {
        selector.predicates.push(Selector::parse_predicate(text)?);
    }
    let descs = [desc];
    for record in descriptor::query_records(&descs, &selector)? {
        println!("{record}");
    }
    Ok(())
}

fn desc_diff(args: &DiffArgs) -> Result<(), CliError> {
    let before = descriptor::parse_description(&read_input(&args.before)?)?;
    let after = descriptor::parse_description(&read_input(&args.after)?)?;
    let entries = descriptor::diff_descriptions(&before, &after);
    if entries.is_empty() {
        println!("descriptions are identical");
    }
    for entry in entries {
        println!("{entry}");
    }
    Ok(())
}

fn design_cmd(args: &DesignArgs) -> Result<(), CliError> {
    let clone_ids = design::read_clone_list(&read_input(&args.clones)?);
    let config = design::PrintingConfiguration::parse_name(&args.config)?;
    let layout = design::generate_layout(
        &clone_ids,
        &config,
        args.replicates,
        args.array_types,
        args.seed,
    )?;
    let verification = design::verify_layout(&layout);
    for violation in &verification.violations {
        eprintln!("violation: {violation}");
    }
    if !verification.is_valid() {
        return Err(CliError::internal("layout verification failed"));
    }
    fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::internal(format!("{}: {e}", args.out_dir.display())))?;
    write_output(
        &args.out_dir.join("layout.tsv"),
        &design::export_plate_maps(&layout),
    )?;
    write_output(
        &args.out_dir.join("arraymap.tsv"),
        &design::export_array_maps(&layout),
    )?;
    for ar in &verification.array_reports {
        println!(
            "type {}: {} spots, {} clones x {} replicates",
            ar.array_type,
            ar.total_spots,
            ar.replicate_counts.len(),
            layout.replicates
        );
    }
    Ok(())
}

fn quant_cmd(args: &QuantArgs) -> Result<(), CliError> {
    let channel = quant::Channel::parse(&args.channel)
        .ok_or_else(|| CliError::internal(format!("unknown channel {:?}", args.channel)))?;
    let cells = quant::read_pixel_grid(&read_input(&args.pixels)?, &read_input(&args.mask)?)?;
    let params = quant::QuantParams {
        alpha: args.alpha,
        channel,
        saturation_ceiling: args.ceiling,
    };
    let table_and_types = match (&args.arraymap, &args.pairing) {
        (Some(map_path), Some(pairing_path)) => {
            let table = design::ArrayMapTable::parse(&read_input(map_path)?)?;
            let pairings = callsig::read_pairing_tsv(&read_input(pairing_path)?)?;
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
    )?;
    write_output(&args.out, &quant::write_spots_tsv(&quantified))?;
    for array in &quantified {
        let flagged = array
            .measurements
            .iter()
            .filter(|m| !m.flags.is_clean())
            .count();
        println!(
            "array {}: {} spots, {} flagged, calibration factor {:.6}",
            array.array_id,
            array.measurements.len(),
            flagged,
            array.calibration_factor
        );
    }
    Ok(())
}

fn classify_cmd(args: &ClassifyArgs) -> Result<(), CliError> {
    let spots = quant::read_spots_tsv(&read_input(&args.spots)?)?;
    let table = design::ArrayMapTable::parse(&read_input(&args.layout)?)?;
    let pairings = callsig::read_pairing_tsv(&read_input(&args.pairing)?)?;
    let mut calls = Vec::new();
    for pairing in &pairings {
        let dataset = callsig::assemble_replicates(&spots, &table, pairing).map_err(|e| {
            let code = if matches!(e, callsig::CallError::ArrayMissing { .. }) {
                2
            } else {
                1
            };
            CliError {
                code,
                message: e.to_string(),
            }
        })?;
        calls.extend(callsig::classify_all(&dataset, args.alpha)?);
    }
    write_output(&args.out, &callsig::write_calls_tsv(&calls))?;
    println!("{} calls written to {}", calls.len(), args.out.display());
    Ok(())
}

fn mine_cmd(args: &MineArgs) -> Result<(), CliError> {
    let (level, categories) = rulemine::read_facts_tsv(&read_input(&args.facts)?)?;
    let hierarchy = match &args.hierarchy {
        Some(path) => rulemine::read_hierarchy_tsv(&read_input(path)?)?,
        None => Vec::new(),
    };
    let fb = rulemine::FactBase::from_parts(level, categories, hierarchy)?;
    let language = rulemine::HypothesisLanguage::from_factbase(&fb)
        .with_max_body_len(args.max_body_len);
    let mined = rulemine::mine_rules(&fb, args.min_sup, args.min_conf, &language);
    let text = rulemine::write_rules_text(&mined);
    match &args.out {
        Some(path) => {
            write_output(path, &text)?;
            println!("{} rules written to {}", mined.len(), path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn run_cmd(args: &RunArgs) -> Result<(), CliError> {
    let mut manifest = RunManifest::parse(&read_input(&args.manifest)?).map_err(|e| CliError {
        code: e.exit_code() as u8,
        message: e.to_string(),
    })?;
    if let Some(seed) = args.seed {
        manifest.seed = seed;
    }
    if let Some(alpha) = args.alpha {
        manifest.params.classify_alpha = alpha;
    }
    if let Some(min_conf) = args.min_conf {
        manifest.params.min_confidence = min_conf;
    }
    if let Some(min_sup) = args.min_sup {
        manifest.params.min_support = min_sup;
    }
    if let Some(config) = &args.config {
        manifest.config_name = Some(config.clone());
    }
    let summary = pipeline::run_pipeline(&manifest, &args.out_dir).map_err(|e| CliError {
        code: e.exit_code() as u8,
        message: e.to_string(),
    })?;
    for stage in &summary.ran_stages {
        println!("stage {stage}: ok");
    }
    println!("manifest: {}", summary.manifest_path.display());
    Ok(())
}

fn report_cmd(args: &ReportArgs) -> Result<(), CliError> {
    let calls = callsig::read_calls_tsv(&read_input(&args.calls)?)?;
    let rules = match &args.rules {
        Some(path) => rulemine::parse_rules_text(&read_input(path)?)?,
        None => Vec::new(),
    };
    let categories = match &args.categories {
        Some(path) => report::read_categories_tsv(&read_input(path)?)?,
        None => report::CategoryTable::new(),
    };
    print!("{}", report::report(&calls, &rules, &categories));
    Ok(())
}
