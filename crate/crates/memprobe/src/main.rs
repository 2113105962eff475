use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use memprobe::metrics::{self, RougeMode};
use memprobe::oracle;
use memprobe::report::{
    aggregate_scored, read_scored, render_csv, render_json, score_records, write_scored,
    ReportFormat,
};
use memprobe::runner::{
    read_records, run_suite, write_records, Endpoint, MockModel, ModelConfig, DEFAULT_API_KEY_ENV,
};
use memprobe::snapshot::{
    default_config, expand_snapshot, read_snapshot, write_snapshot, Category, SnapshotConfig,
    SnapshotOptions, Task,
};

#[derive(Parser)]
#[command(
    name = "memprobe",
    version,
    about = "Generate, run, score, and report memory-capability test suites for language models"
)]
struct Cli {
    /// TOML config file supplying defaults (flags take precedence)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a snapshot of generated test cases as JSONL
    Generate(GenerateArgs),
    /// Run a snapshot against a model endpoint or a built-in mock
    Run(RunArgs),
    /// Score run records against their snapshot
    Eval(EvalArgs),
    /// Aggregate scored records into a report
    Report(ReportArgs),
    /// Regenerate the default suite and check it against its oracles
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Master seed; all case randomness derives from it
    #[arg(long)]
    seed: Option<u64>,
    /// Output snapshot path
    #[arg(long, default_value = "snapshot.jsonl")]
    out: PathBuf,
    /// Approximate context size in estimator tokens
    #[arg(long)]
    context_tokens: Option<usize>,
    /// Restrict generation to one category
    #[arg(long)]
    category: Option<String>,
    /// Restrict generation to one task
    #[arg(long)]
    task: Option<String>,
    /// Replace dictionary words with random letter strings
    #[arg(long)]
    gibberish: bool,
    /// Instruction phrasing variant (1 or 2)
    #[arg(long)]
    prompt_variant: Option<u32>,
    /// Override the operation step count for step-driven tasks
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    /// Snapshot to execute
    #[arg(long)]
    snapshot: PathBuf,
    /// Chat-completions base URL (the client posts to <url>/chat/completions)
    #[arg(long, conflicts_with = "mock")]
    endpoint: Option<String>,
    /// Built-in mock model: oracle, empty, or echo
    #[arg(long)]
    mock: Option<String>,
    /// Model name sent in the request body
    #[arg(long)]
    model: Option<String>,
    /// Maximum in-flight requests
    #[arg(long)]
    parallelism: Option<usize>,
    /// Environment variable holding the bearer token
    #[arg(long)]
    api_key_env: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    top_p: Option<f64>,
    #[arg(long)]
    max_output_tokens: Option<u32>,
    #[arg(long)]
    timeout_secs: Option<u64>,
    #[arg(long)]
    max_retries: Option<u32>,
    /// Output records path
    #[arg(long, default_value = "results.jsonl")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    snapshot: PathBuf,
    #[arg(long)]
    results: PathBuf,
    /// Output scored-records path
    #[arg(long, default_value = "scores.jsonl")]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Scored records written by `eval`
    #[arg(long)]
    scores: PathBuf,
    /// Output format: json or csv
    #[arg(long, default_value = "json")]
    format: String,
    /// Output path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    generate: GenerateFileConfig,
    #[serde(default)]
    run: RunFileConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateFileConfig {
    seed: Option<u64>,
    context_tokens: Option<usize>,
    prompt_variant: Option<u32>,
    gibberish: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunFileConfig {
    endpoint: Option<String>,
    model: Option<String>,
    parallelism: Option<usize>,
    api_key_env: Option<String>,
    temperature: Option<f64>,
    top_p: Option<f64>,
    max_output_tokens: Option<u32>,
    timeout_secs: Option<u64>,
    max_retries: Option<u32>,
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
        }
    }
}

fn usage_error(message: &str) -> ! {
    eprintln!("error: {message}");
    std::process::exit(2);
}

fn main() {
    let cli = Cli::parse();
    let file_config = match load_file_config(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    };
    let outcome = match cli.command {
        Command::Generate(args) => cmd_generate(args, &file_config.generate),
        Command::Run(args) => cmd_run(args, &file_config.run),
        Command::Eval(args) => cmd_eval(args),
        Command::Report(args) => cmd_report(args),
        Command::Selftest(args) => cmd_selftest(args),
    };
    if let Err(e) = outcome {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn cmd_generate(args: GenerateArgs, defaults: &GenerateFileConfig) -> Result<()> {
    let category = args.category.as_deref().map(|name| {
        Category::parse(name).unwrap_or_else(|| usage_error(&format!("unknown category `{name}`")))
    });
    let task = args.task.as_deref().map(|name| {
        Task::parse(name).unwrap_or_else(|| usage_error(&format!("unknown task `{name}`")))
    });
    let prompt_variant = args.prompt_variant.or(defaults.prompt_variant).unwrap_or(1);
    if !(1..=2).contains(&prompt_variant) {
        usage_error("prompt variant must be 1 or 2");
    }

    let options = SnapshotOptions {
        master_seed: args.seed.or(defaults.seed).unwrap_or(0),
        context_tokens: args
            .context_tokens
            .or(defaults.context_tokens)
            .unwrap_or(4000),
        gibberish: args.gibberish || defaults.gibberish.unwrap_or(false),
        prompt_variant,
        steps_override: args.steps,
        category,
        task,
    };
    let config = SnapshotConfig::build(&options);
    if config.grids.is_empty() {
        usage_error("the category/task filters selected no tasks");
    }
    let cases = expand_snapshot(&config)?;
    write_snapshot(&cases, &args.out)?;
    println!("wrote {} cases to {}", cases.len(), args.out.display());
    Ok(())
}

fn cmd_run(args: RunArgs, defaults: &RunFileConfig) -> Result<()> {
    let cases = read_snapshot(&args.snapshot)
        .with_context(|| format!("reading snapshot {}", args.snapshot.display()))?;
    if cases.is_empty() {
        bail!("snapshot {} contains no cases", args.snapshot.display());
    }

    let endpoint = match (
        &args.mock,
        args.endpoint.as_ref().or(defaults.endpoint.as_ref()),
    ) {
        (Some(name), _) => Endpoint::Mock(
            MockModel::parse(name)
                .unwrap_or_else(|| usage_error(&format!("unknown mock `{name}`"))),
        ),
        (None, Some(url)) => Endpoint::Http(url.clone()),
        (None, None) => usage_error("either --endpoint or --mock is required"),
    };
    let model_name = args
        .model
        .or_else(|| defaults.model.clone())
        .unwrap_or_else(|| match endpoint {
            Endpoint::Mock(_) => "mock".to_string(),
            Endpoint::Http(_) => usage_error("--model is required with --endpoint"),
        });

    let mut config = ModelConfig::http_defaults(String::new(), model_name);
    config.endpoint = endpoint;
    config.api_key_env = args
        .api_key_env
        .or_else(|| defaults.api_key_env.clone())
        .unwrap_or_else(|| DEFAULT_API_KEY_ENV.to_string());
    config.temperature = args.temperature.or(defaults.temperature).unwrap_or(0.0);
    config.top_p = args.top_p.or(defaults.top_p).unwrap_or(1.0);
    config.max_output_tokens = args
        .max_output_tokens
        .or(defaults.max_output_tokens)
        .unwrap_or(4096);
    config.request_timeout =
        Duration::from_secs(args.timeout_secs.or(defaults.timeout_secs).unwrap_or(120));
    config.max_retries = args.max_retries.or(defaults.max_retries).unwrap_or(3);
    config.parallelism = args.parallelism.or(defaults.parallelism).unwrap_or(4);

    let records = run_suite(&config, &cases);
    let failures = records.iter().filter(|r| r.error.is_some()).count();
    write_records(&records, &args.out)?;
    println!(
        "wrote {} records to {} ({} failed)",
        records.len(),
        args.out.display(),
        failures
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let cases = read_snapshot(&args.snapshot)
        .with_context(|| format!("reading snapshot {}", args.snapshot.display()))?;
    let records = read_records(&args.results)
        .with_context(|| format!("reading results {}", args.results.display()))?;
    let scored = score_records(&cases, &records)?;
    write_scored(&scored, &args.out)?;
    let mean = scored.iter().map(|s| s.score).sum::<f64>() / scored.len().max(1) as f64;
    println!(
        "wrote {} scored records to {} (raw mean {:.4})",
        scored.len(),
        args.out.display(),
        mean
    );
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let format = ReportFormat::parse(&args.format)
        .unwrap_or_else(|| usage_error(&format!("unknown format `{}`", args.format)));
    let scored = read_scored(&args.scores)
        .with_context(|| format!("reading scores {}", args.scores.display()))?;
    let report = aggregate_scored(&scored)?;
    let rendered = match format {
        ReportFormat::Json => render_json(&report),
        ReportFormat::Csv => render_csv(&report),
    };
    match args.out {
        Some(path) => {
            std::fs::write(&path, rendered)?;
            println!("wrote report to {}", path.display());
        }
        None => println!("{rendered}"),
    }
    Ok(())
}

fn cmd_selftest(args: SelftestArgs) -> Result<()> {
    let mut all_ok = true;
    let mut check = |name: &str, ok: bool, detail: String| {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        all_ok &= ok;
    };

    let mut config = default_config();
    config.master_seed = args.seed;
    let cases = expand_snapshot(&config)?;

    check(
        "snapshot-cardinality",
        cases.len() == 1110,
        format!("{} cases (expected 1110)", cases.len()),
    );

    let expected_categories: &[(Category, usize)] = &[
        (Category::Search, 200),
        (Category::RecallEdit, 105),
        (Category::MatchCompare, 175),
        (Category::SpotDifferences, 260),
        (Category::SetsLists, 210),
        (Category::StatefulProcessing, 50),
        (Category::DataBlocks, 50),
        (Category::CompositeStateTracking, 60),
    ];
    let mut category_ok = true;
    let mut category_detail = String::new();
    for (category, expected) in expected_categories {
        let got = cases
            .iter()
            .filter(|c| c.task.category() == *category)
            .count();
        if got != *expected {
            category_ok = false;
            category_detail.push_str(&format!("{}={got}(want {expected}) ", category.name()));
        }
    }
    check(
        "category-counts",
        category_ok,
        if category_ok {
            "all categories match".to_string()
        } else {
            category_detail
        },
    );

    let again = expand_snapshot(&config)?;
    let identical = cases == again;
    check(
        "determinism",
        identical,
        "regeneration with the same seed is identical".to_string(),
    );

    let mut mismatches = Vec::new();
    for case in &cases {
        if let Err(e) = oracle::verify_case(case) {
            mismatches.push(e.id.clone());
        }
    }
    check(
        "oracle-equivalence",
        mismatches.is_empty(),
        if mismatches.is_empty() {
            format!("{}/{} cases re-derived", cases.len(), cases.len())
        } else {
            format!("mismatched: {}", mismatches.join(", "))
        },
    );

    let recall = metrics::rouge_l("a c", "a b c d", RougeMode::Recall).value;
    let f1 = metrics::rouge_l("a c", "a b c d", RougeMode::F1).value;
    let jac = {
        let set: std::collections::BTreeSet<String> =
            ["a", "b"].iter().map(|s| s.to_string()).collect();
        metrics::jaccard(&memprobe::snapshot::Answer::WordSet(set), "b, c").value
    };
    let metrics_ok = (recall - 1.0).abs() < 1e-9
        && (f1 - 2.0 / 3.0).abs() < 1e-9
        && (jac - 1.0 / 3.0).abs() < 1e-12;
    check(
        "metric-hand-cases",
        metrics_ok,
        format!("recall={recall:.4} f1={f1:.4} jaccard={jac:.4}"),
    );

    let records = run_suite(&ModelConfig::mock(MockModel::Oracle), &cases);
    let report = memprobe::report::aggregate(&cases, &records)?;
    check(
        "oracle-ceiling",
        report.overall.mean == 1.0,
        format!("overall mean {}", report.overall.mean),
    );

    if all_ok {
        println!("selftest passed");
        Ok(())
    } else {
        bail!("selftest failed");
    }
}
