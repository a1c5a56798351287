//! Process generator and three-strategy benchmark sweep.
//!
//! Models are generated from a seed, so receipt sizes are bit-reproducible
//! while timings vary. Each (strategy, n) cell is run `repetitions` times and
//! aggregated by median. Faulted cells (typically the variable size limit)
//! are kept as annotated rows.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ActivitySpec, LineItem, ProcessModel, Scope, Strategy};
use crate::domain::{EmissionFactor, ResourceAmount};
use crate::engine::{Engine, EngineError, EventKind, FaultKind, GuestRegistry, InstanceState};
use crate::guests::reference_descriptor;
use crate::proofsys::{GuestRole, ProofBackend, SimulatedBackend};

pub const CHAINED_GUEST: &str = "pcf-chained";
pub const SINGLE_STEP_GUEST: &str = "pcf-single-step";
pub const COMPOSER_GUEST: &str = "pcf-composer";

/// Largest generated emission factor, in mg CO2e per unit.
pub const MAX_GENERATED_FACTOR: u64 = 5_000_000;

/// Registry with the three reference guests under their standard refs.
pub fn reference_registry() -> GuestRegistry {
    let mut registry = GuestRegistry::new();
    registry.register_prover(
        CHAINED_GUEST,
        reference_descriptor(GuestRole::ChainedFootprint),
    );
    registry.register_prover(
        SINGLE_STEP_GUEST,
        reference_descriptor(GuestRole::SingleStepFootprint),
    );
    registry.register_prover(COMPOSER_GUEST, reference_descriptor(GuestRole::Composer));
    registry
}

pub fn reference_engine(backend: Arc<dyn ProofBackend>) -> Engine {
    Engine::new(backend, reference_registry())
}

pub fn activity_id(index: usize) -> String {
    format!("activity-{:03}", index + 1)
}

/// Builds a sequential model of the given strategy over `pairs`, one
/// (factor, amount) per footprinting step.
pub fn build_process(id: &str, strategy: Strategy, pairs: &[(u64, u64)]) -> ProcessModel {
    let activities = match strategy {
        Strategy::SingleStep => vec![ActivitySpec::prove_items(
            "footprint",
            pairs
                .iter()
                .enumerate()
                .map(|(i, (f, a))| LineItem {
                    id: activity_id(i),
                    factor: EmissionFactor(*f),
                    amount: ResourceAmount(*a),
                    scope: Scope::Scope1,
                })
                .collect(),
            SINGLE_STEP_GUEST,
            Scope::Scope1,
        )],
        Strategy::Chained | Strategy::Composed => {
            let mut acts: Vec<ActivitySpec> = pairs
                .iter()
                .enumerate()
                .map(|(i, (f, a))| {
                    ActivitySpec::prove(&activity_id(i), *f, *a, CHAINED_GUEST, Scope::Scope1)
                })
                .collect();
            if strategy == Strategy::Composed {
                acts.push(ActivitySpec::compose("compose", COMPOSER_GUEST));
            }
            acts
        }
    };
    ProcessModel {
        id: id.to_string(),
        strategy,
        activities,
    }
}

/// Seed-derived (factor, amount) pairs: factor pseudo-random in
/// `1..=MAX_GENERATED_FACTOR`, amount = activity index + 1.
pub fn generated_pairs(n: usize, seed: u64) -> Vec<(u64, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| (rng.gen_range(1..=MAX_GENERATED_FACTOR), i as u64 + 1))
        .collect()
}

pub fn generate_process(n: usize, strategy: Strategy, seed: u64) -> ProcessModel {
    assert!(n >= 1, "a process needs at least one activity");
    build_process(
        &format!("{strategy}-{n:03}"),
        strategy,
        &generated_pairs(n, seed),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub strategy: Strategy,
    pub n_activities: usize,
    /// Sum of proof-generation time over the process.
    pub proving_seconds: f64,
    /// Canonical size of the final receipt; for size-limit faults, the size
    /// of the receipt that was rejected.
    pub proof_size_bytes: usize,
    /// Time to verify the final receipt only; `None` if the run faulted.
    pub verification_seconds: Option<f64>,
    pub process_seconds: f64,
    pub fault: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub environment: String,
    pub backend: String,
    pub repetitions: usize,
    pub aggregation: String,
    pub size_limit: usize,
    pub seed: u64,
    pub rows: Vec<BenchmarkRow>,
}

impl BenchmarkReport {
    pub fn row(&self, strategy: Strategy, n: usize) -> Option<&BenchmarkRow> {
        self.rows
            .iter()
            .find(|r| r.strategy == strategy && r.n_activities == n)
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub n_values: Vec<usize>,
    pub strategies: Vec<Strategy>,
    pub repetitions: usize,
    pub size_limit: usize,
    pub seed: u64,
    /// Fixed (factor, amount) inputs instead of seed-derived ones. A process
    /// of length n takes the first n, cycling if the list is shorter.
    pub inputs: Option<Vec<(u64, u64)>>,
}

impl BenchConfig {
    fn process(&self, n: usize, strategy: Strategy) -> ProcessModel {
        match &self.inputs {
            Some(pairs) if !pairs.is_empty() => {
                let pairs: Vec<_> = pairs.iter().copied().cycle().take(n).collect();
                build_process(&format!("{strategy}-{n:03}"), strategy, &pairs)
            }
            _ => generate_process(n, strategy, self.seed),
        }
    }
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n_values: vec![1, 5, 8, 9, 10, 15, 16, 17, 20, 25, 30],
            strategies: Strategy::ALL.to_vec(),
            repetitions: 3,
            size_limit: crate::engine::DEFAULT_SIZE_LIMIT,
            seed: 42,
            inputs: None,
        }
    }
}

/// Verifications per timing sample; a single hash-seal check is too fast for
/// the clock to resolve.
const VERIFY_ITERATIONS: u32 = 16;

struct Sample {
    proving: f64,
    size: usize,
    verification: Option<f64>,
    process: f64,
    fault: Option<String>,
}

fn run_once(
    engine: &Engine,
    model: ProcessModel,
    size_limit: usize,
) -> Result<Sample, EngineError> {
    let started = Instant::now();
    let instance = engine.run(model, BTreeMap::new(), size_limit)?;
    let process = started.elapsed().as_secs_f64();
    let proving = instance
        .event_log
        .iter()
        .filter_map(|e| match e.event {
            EventKind::ProofGenerated {
                duration_micros, ..
            } => Some(duration_micros as f64 / 1e6),
            _ => None,
        })
        .sum();
    match &instance.state {
        InstanceState::Completed => {
            let receipt = instance
                .final_receipt()
                .expect("completed instance has a receipt");
            let last = instance.model.activities.last().expect("non-empty model");
            let key = engine
                .registry()
                .verification_key(&last.guest_ref)
                .expect("registered guest");
            let started = Instant::now();
            for _ in 0..VERIFY_ITERATIONS {
                engine
                    .backend()
                    .verify(&key, &receipt)
                    .expect("own receipt verifies");
            }
            let verification = started.elapsed().as_secs_f64() / VERIFY_ITERATIONS as f64;
            Ok(Sample {
                proving,
                size: receipt.to_bytes().len(),
                verification: Some(verification),
                process,
                fault: None,
            })
        }
        InstanceState::Faulted { fault } => {
            let size = match fault {
                FaultKind::VariableSizeLimitExceeded(e) => e.size,
                _ => instance.final_receipt().map_or(0, |r| r.to_bytes().len()),
            };
            Ok(Sample {
                proving,
                size,
                verification: None,
                process,
                fault: Some(describe_fault(fault, instance.cursor)),
            })
        }
        InstanceState::Running => unreachable!("run_to_completion returned a running instance"),
    }
}

fn describe_fault(fault: &FaultKind, cursor: usize) -> String {
    match fault {
        FaultKind::VariableSizeLimitExceeded(e) => format!(
            "size limit exceeded at activity {}: {} > {} bytes",
            cursor + 1,
            e.size,
            e.limit
        ),
        other => format!("fault at activity {}: {:?}", cursor + 1, other),
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let mid = xs.len() / 2;
    if xs.len().is_multiple_of(2) {
        (xs[mid - 1] + xs[mid]) / 2.0
    } else {
        xs[mid]
    }
}

/// Runs every (strategy, n) cell with a fresh simulated backend.
pub fn run_benchmark(config: &BenchConfig) -> BenchmarkReport {
    let engine = reference_engine(Arc::new(SimulatedBackend::new()));
    run_benchmark_with(&engine, config)
}

pub fn run_benchmark_with(engine: &Engine, config: &BenchConfig) -> BenchmarkReport {
    let repetitions = config.repetitions.max(1);
    let mut rows = Vec::new();
    for &strategy in &config.strategies {
        for &n in &config.n_values {
            let samples: Vec<Sample> = (0..repetitions)
                .map(|_| {
                    run_once(engine, config.process(n, strategy), config.size_limit)
                        .expect("generated models are valid")
                })
                .collect();
            let fault = samples.iter().find_map(|s| s.fault.clone());
            let verification = if samples.iter().all(|s| s.verification.is_some()) {
                Some(median(
                    samples.iter().filter_map(|s| s.verification).collect(),
                ))
            } else {
                None
            };
            let mut sizes: Vec<usize> = samples.iter().map(|s| s.size).collect();
            sizes.sort_unstable();
            rows.push(BenchmarkRow {
                strategy,
                n_activities: n,
                proving_seconds: median(samples.iter().map(|s| s.proving).collect()),
                proof_size_bytes: sizes[sizes.len() / 2],
                verification_seconds: verification,
                process_seconds: median(samples.iter().map(|s| s.process).collect()),
                fault,
            });
        }
    }
    BenchmarkReport {
        environment: environment_description(),
        backend: engine.backend().name().to_string(),
        repetitions,
        aggregation: "median".to_string(),
        size_limit: config.size_limit,
        seed: config.seed,
        rows,
    }
}

fn environment_description() -> String {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "{}-{}, {} hardware threads",
        std::env::consts::OS,
        std::env::consts::ARCH,
        threads
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("unsupported report format '{0}' (expected md, csv or json)")]
    UnsupportedFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(ReportError::UnsupportedFormat(s.to_string())),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Markdown => "md",
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        })
    }
}

fn strategy_label(s: Strategy) -> &'static str {
    match s {
        Strategy::SingleStep => "Single Step",
        Strategy::Composed => "Composite",
        Strategy::Chained => "Chained",
    }
}

/// Strategies present in the report, in column order.
fn report_strategies(report: &BenchmarkReport) -> Vec<Strategy> {
    Strategy::ALL
        .into_iter()
        .filter(|s| report.rows.iter().any(|r| r.strategy == *s))
        .collect()
}

fn report_ns(report: &BenchmarkReport) -> Vec<usize> {
    let mut ns: Vec<usize> = report.rows.iter().map(|r| r.n_activities).collect();
    ns.sort_unstable();
    ns.dedup();
    ns
}

/// Per-strategy column suffixes of the CSV table, after the leading `n`.
pub const CSV_COLUMNS: [&str; 5] = [
    "prove_sec",
    "size_bytes",
    "verify_sec",
    "process_sec",
    "fault",
];

pub fn render_report(report: &BenchmarkReport, format: &str) -> Result<String, ReportError> {
    Ok(render(report, format.parse()?))
}

pub fn render(report: &BenchmarkReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Markdown => render_markdown(report),
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Json => serde_json::to_string_pretty(report).expect("report serializes"),
    }
}

fn render_markdown(report: &BenchmarkReport) -> String {
    let strategies = report_strategies(report);
    let mut out = String::new();
    out.push_str("| No. of Activities |");
    for s in &strategies {
        let label = strategy_label(*s);
        out.push_str(&format!(" {label} sec | {label} size (bytes) |"));
    }
    out.push('\n');
    out.push_str("|---:|");
    for _ in &strategies {
        out.push_str("---:|---:|");
    }
    out.push('\n');
    for n in report_ns(report) {
        out.push_str(&format!("| {n} |"));
        for s in &strategies {
            match report.row(*s, n) {
                Some(row) if row.fault.is_some() => out.push_str(&format!(
                    " {:.6} | **{}** |",
                    row.proving_seconds, row.proof_size_bytes
                )),
                Some(row) => out.push_str(&format!(
                    " {:.6} | {} |",
                    row.proving_seconds, row.proof_size_bytes
                )),
                None => out.push_str(" | |"),
            }
        }
        out.push('\n');
    }
    out.push_str(&format!(
        "\nProving time in seconds (median of {} run{}), final receipt size in bytes. \
         Bold sizes exceeded the {}-byte variable limit. Backend: {}; {}.\n",
        report.repetitions,
        if report.repetitions == 1 { "" } else { "s" },
        report.size_limit,
        report.backend,
        report.environment
    ));
    out
}

fn render_csv(report: &BenchmarkReport) -> String {
    let strategies = report_strategies(report);
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["n".to_string()];
    for s in &strategies {
        header.extend(CSV_COLUMNS.iter().map(|c| format!("{}_{c}", s.as_str())));
    }
    writer.write_record(&header).expect("in-memory write");
    for n in report_ns(report) {
        let mut record = vec![n.to_string()];
        for s in &strategies {
            match report.row(*s, n) {
                Some(row) => record.extend([
                    format!("{:.6}", row.proving_seconds),
                    row.proof_size_bytes.to_string(),
                    row.verification_seconds
                        .map(|v| format!("{v:.9}"))
                        .unwrap_or_default(),
                    format!("{:.6}", row.process_seconds),
                    row.fault.clone().unwrap_or_default(),
                ]),
                None => record.extend(std::iter::repeat_n(String::new(), CSV_COLUMNS.len())),
            }
        }
        writer.write_record(&record).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("flush")).expect("csv is utf-8")
}

/// Parses `1..10`, `1..=10`, `1,5,10` or a mix like `1..5,10,20`.
pub fn parse_activity_range(spec: &str) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((lo, hi)) = part.split_once("..") {
            let hi = hi.trim_start_matches('=');
            let lo: usize = lo
                .trim()
                .parse()
                .map_err(|_| format!("bad range start in '{part}'"))?;
            let hi: usize = hi
                .trim()
                .parse()
                .map_err(|_| format!("bad range end in '{part}'"))?;
            if lo == 0 || hi < lo {
                return Err(format!("empty or zero-based range '{part}'"));
            }
            out.extend(lo..=hi);
        } else {
            let n: usize = part
                .parse()
                .map_err(|_| format!("bad activity count '{part}'"))?;
            if n == 0 {
                return Err("activity counts start at 1".into());
            }
            out.push(n);
        }
    }
    if out.is_empty() {
        return Err("no activity counts given".into());
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

pub fn parse_strategies(spec: &str) -> Result<Vec<Strategy>, String> {
    if spec.trim().eq_ignore_ascii_case("all") {
        return Ok(Strategy::ALL.to_vec());
    }
    let mut out = Vec::new();
    for part in spec.split(',').filter(|p| !p.trim().is_empty()) {
        let s: Strategy = part.parse()?;
        if !out.contains(&s) {
            out.push(s);
        }
    }
    if out.is_empty() {
        return Err("no strategies given".into());
    }
    Ok(out)
}
