use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use verifiable_pcf::bench::{
    parse_activity_range, parse_strategies, render, run_benchmark, BenchConfig, ReportFormat,
};
use verifiable_pcf::domain::{validate_process_model, ActivityKind, ProcessModel, Strategy};
use verifiable_pcf::engine::{
    external_var, extract_pcf, partial_pcf, Engine, GuestRegistry, DEFAULT_SIZE_LIMIT,
};
use verifiable_pcf::guests::{reference_descriptor, GuestInput};
use verifiable_pcf::proofsys::{
    GuestRole, ImageId, ProofBackend, Receipt, ReceiptVerifier, SimulatedBackend,
};
use verifiable_pcf::scenario::{run_scenario, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "vpcf",
    version,
    about = "Verifiable product carbon footprint workflows"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep strategies and process lengths; print a proving-overhead table.
    Bench {
        #[arg(long, default_value = "1..30")]
        activities: String,
        #[arg(long, default_value = "all")]
        strategies: String,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        #[arg(long, default_value_t = DEFAULT_SIZE_LIMIT)]
        size_limit: usize,
        #[arg(long, default_value = "md")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Run the two-party supplier/producer demonstration.
    Scenario {
        /// Supplier under-reports its total after proving.
        #[arg(long)]
        tamper: bool,
        /// Write the outcome as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a process definition (JSON) and print its PCF.
    Run {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SIZE_LIMIT)]
        size_limit: usize,
        /// External receipt for a verification activity: `<activity id>=<receipt.json>`.
        #[arg(long = "external")]
        externals: Vec<String>,
        /// Trusted key for a guest ref: `<guest ref>=<image id hex>`.
        #[arg(long = "trust")]
        trusted: Vec<String>,
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long)]
        variables: Option<PathBuf>,
    },
    /// Prove a single guest invocation from a JSON guest-input file.
    Prove {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify a receipt (JSON envelope) and print its journal.
    Verify {
        #[arg(long)]
        receipt: PathBuf,
        /// Expected image id; defaults to the reference guest given by --guest.
        #[arg(long)]
        image_id: Option<String>,
        /// chained | single-step | composer
        #[arg(long, default_value = "chained")]
        guest: String,
    },
    /// Print the image ids of the reference guests.
    Guests,
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn parse_role(s: &str) -> Result<GuestRole> {
    match s.to_ascii_lowercase().replace('_', "-").as_str() {
        "chained" => Ok(GuestRole::ChainedFootprint),
        "single-step" | "single" => Ok(GuestRole::SingleStepFootprint),
        "composer" | "composed" => Ok(GuestRole::Composer),
        other => bail!("unknown guest '{other}'"),
    }
}

fn split_pair(s: &str) -> Result<(&str, &str)> {
    s.split_once('=')
        .ok_or_else(|| anyhow!("expected <name>=<value>, got '{s}'"))
}

fn run_model(
    model_path: &Path,
    size_limit: usize,
    externals: &[String],
    trusted: &[String],
    events: Option<&Path>,
    variables: Option<&Path>,
) -> Result<ExitCode> {
    let text = fs::read_to_string(model_path)
        .with_context(|| format!("reading {}", model_path.display()))?;
    let model = ProcessModel::from_json(&text).context("parsing process model")?;
    let report = validate_process_model(&model);
    if !report.is_valid() {
        bail!("invalid process model: {report}");
    }

    let mut registry = GuestRegistry::new();
    for a in &model.activities {
        let role = match (a.kind, model.strategy) {
            (ActivityKind::VerifyExternal, _) => continue,
            (ActivityKind::Compose, _) => GuestRole::Composer,
            (ActivityKind::ProveFootprint, Strategy::SingleStep) => GuestRole::SingleStepFootprint,
            (ActivityKind::ProveFootprint, _) => GuestRole::ChainedFootprint,
        };
        registry.register_prover(&a.guest_ref, reference_descriptor(role));
    }
    for entry in trusted {
        let (guest_ref, hex) = split_pair(entry)?;
        registry.trust_key(
            guest_ref,
            ImageId::from_hex(hex).context("parsing image id")?,
        );
    }
    let mut initial = BTreeMap::new();
    for entry in externals {
        let (activity, path) = split_pair(entry)?;
        let receipt = Receipt::from_json(&fs::read_to_string(path)?)
            .with_context(|| format!("parsing receipt {path}"))?;
        initial.insert(external_var(activity), receipt.to_bytes());
    }

    let engine = Engine::new(Arc::new(SimulatedBackend::new()), registry);
    let instance = engine.run(model, initial, size_limit)?;
    if let Some(path) = events {
        fs::write(path, instance.event_log_jsonl())?;
    }
    if let Some(path) = variables {
        fs::write(path, instance.variables.snapshot_json())?;
    }
    match instance.fault() {
        None => {
            let pcf = extract_pcf(&instance)?;
            println!("{}", serde_json::to_string_pretty(&pcf)?);
            Ok(ExitCode::SUCCESS)
        }
        Some(fault) => {
            eprintln!(
                "instance faulted at activity {}: {}",
                instance.cursor,
                serde_json::to_string(fault)?
            );
            if let Ok(pcf) = partial_pcf(&instance) {
                println!("{}", serde_json::to_string_pretty(&pcf)?);
            }
            Ok(ExitCode::FAILURE)
        }
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Bench {
            activities,
            strategies,
            reps,
            size_limit,
            format,
            out,
            seed,
        } => {
            let format: ReportFormat = format.parse()?;
            let config = BenchConfig {
                n_values: parse_activity_range(&activities).map_err(|e| anyhow!(e))?,
                strategies: parse_strategies(&strategies).map_err(|e| anyhow!(e))?,
                repetitions: reps.max(1),
                size_limit,
                seed,
                inputs: None,
            };
            let report = run_benchmark(&config);
            write_or_print(out.as_deref(), &render(&report, format))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Scenario { tamper, out } => {
            let outcome = run_scenario(&ScenarioConfig {
                tamper,
                ..ScenarioConfig::default()
            })?;
            let json = serde_json::to_string_pretty(&outcome)?;
            write_or_print(out.as_deref(), &json)?;
            if outcome.completed {
                eprintln!(
                    "producer completed; PCF = {}",
                    outcome
                        .final_pcf
                        .as_ref()
                        .map_or("?".into(), |p| p.total.to_string())
                );
            } else {
                eprintln!(
                    "producer faulted at '{}'",
                    outcome.fault_activity.as_deref().unwrap_or("?")
                );
            }
            Ok(if outcome.succeeded() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Run {
            model,
            size_limit,
            externals,
            trusted,
            events,
            variables,
        } => run_model(
            &model,
            size_limit,
            &externals,
            &trusted,
            events.as_deref(),
            variables.as_deref(),
        ),
        Command::Prove { input, out } => {
            let text = fs::read_to_string(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let input: GuestInput = serde_json::from_str(&text).context("parsing guest input")?;
            let descriptor = reference_descriptor(input.role());
            let backend = SimulatedBackend::new();
            let receipt = backend.prove(&descriptor, &input)?;
            eprintln!("image id {}", receipt.image_id);
            write_or_print(out.as_deref(), &receipt.to_json())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            receipt,
            image_id,
            guest,
        } => {
            let receipt =
                Receipt::from_json(&fs::read_to_string(&receipt)?).context("parsing receipt")?;
            let expected = match image_id {
                Some(hex) => ImageId::from_hex(&hex).context("parsing image id")?,
                None => reference_descriptor(parse_role(&guest)?).image_id(),
            };
            match SimulatedBackend::new().verify(&expected, &receipt) {
                Ok(journal) => {
                    println!("{}", serde_json::to_string_pretty(&journal)?);
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => {
                    eprintln!("verification failed: {e}");
                    Ok(ExitCode::FAILURE)
                }
            }
        }
        Command::Guests => {
            for role in [
                GuestRole::ChainedFootprint,
                GuestRole::SingleStepFootprint,
                GuestRole::Composer,
            ] {
                let d = reference_descriptor(role);
                println!("{}\t{}\t{}", d.name, d.version, d.image_id());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
