//! Minimal orchestrator-worker workflow engine.
//!
//! The engine walks a sequential [`ProcessModel`], hands each activity to the
//! first [`TaskWorker`] that handles its kind, and stores the resulting
//! receipts as process variables (`receipt:<activity id>` and
//! `receipt:latest`). Receipts handed over by other parties are read from
//! `external:<activity id>`. Every variable is subject to a per-entry size
//! limit, 4 MiB by default.
//!
//! Faults halt the instance. The event log records digests and metrics only.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agency::{validate_certificate, VerifierContext};
use crate::domain::{
    validate_process_model, ActivityKind, ActivitySpec, EmissionQuantity, Pcf, PcfError,
    ProcessModel, Scope, Strategy, ValidationReport,
};
use crate::guests::{
    ChainedGuestInput, ComposerGuestInput, ComposerPrivate, GuestInput, ProcessPublic,
    SingleStepGuestInput, SingleStepItem, SingleStepPrivate,
};
use crate::proofsys::{
    Digest, GuestDescriptor, ImageId, ProofBackend, ProveError, Receipt, VerifyError,
};

/// Per-variable size limit, matching common workflow-engine message limits.
pub const DEFAULT_SIZE_LIMIT: usize = 4_194_304;

pub const LATEST_RECEIPT: &str = "receipt:latest";

pub fn receipt_var(activity_id: &str) -> String {
    format!("receipt:{activity_id}")
}

pub fn external_var(activity_id: &str) -> String {
    format!("external:{activity_id}")
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("variable '{variable}' is {size} bytes, limit is {limit}")]
pub struct SizeLimitExceeded {
    pub variable: String,
    pub size: usize,
    pub limit: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableStore {
    entries: BTreeMap<String, Vec<u8>>,
    size_limit: usize,
}

impl Default for VariableStore {
    fn default() -> Self {
        Self::new(DEFAULT_SIZE_LIMIT)
    }
}

impl VariableStore {
    pub fn new(size_limit: usize) -> Self {
        Self {
            entries: BTreeMap::new(),
            size_limit,
        }
    }

    pub fn size_limit(&self) -> usize {
        self.size_limit
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.entries.get(name).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[u8])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, name: &str, value: Vec<u8>) -> Result<(), SizeLimitExceeded> {
        self.insert_all(vec![(name.to_string(), value)])
    }

    /// Inserts every update or none of them.
    pub fn insert_all(&mut self, updates: Vec<(String, Vec<u8>)>) -> Result<(), SizeLimitExceeded> {
        if let Some((name, value)) = updates.iter().find(|(_, v)| v.len() > self.size_limit) {
            return Err(SizeLimitExceeded {
                variable: name.clone(),
                size: value.len(),
                limit: self.size_limit,
            });
        }
        self.entries.extend(updates);
        Ok(())
    }

    /// Mutable access to a stored value, bypassing the size check. Test
    /// harnesses use this to simulate a compromised transport.
    pub fn tamper(&mut self, name: &str) -> Option<&mut Vec<u8>> {
        self.entries.get_mut(name)
    }

    pub fn receipt(&self, name: &str) -> Option<Result<Receipt, crate::codec::DecodeError>> {
        self.get(name).map(Receipt::from_bytes)
    }

    /// `{size_limit, entries: [{name, size_bytes, sha256_hex, value_hex}]}`
    pub fn snapshot_json(&self) -> String {
        #[derive(Serialize)]
        struct Entry<'a> {
            name: &'a str,
            size_bytes: usize,
            sha256_hex: String,
            value_hex: String,
        }
        #[derive(Serialize)]
        struct Snapshot<'a> {
            size_limit: usize,
            entries: Vec<Entry<'a>>,
        }
        let snapshot = Snapshot {
            size_limit: self.size_limit,
            entries: self
                .iter()
                .map(|(name, value)| Entry {
                    name,
                    size_bytes: value.len(),
                    sha256_hex: hex::encode(crate::codec::sha256(value)),
                    value_hex: hex::encode(value),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&snapshot).expect("snapshot serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultKind {
    VerificationFailed { error: VerifyError },
    GuestExecutionFailed { reason: String },
    Overflow,
    VariableSizeLimitExceeded(SizeLimitExceeded),
    MissingVariable { name: String },
    MalformedVariable { name: String, reason: String },
    UnknownGuest { guest_ref: String },
}

impl From<ProveError> for FaultKind {
    fn from(e: ProveError) -> Self {
        match e {
            ProveError::Overflow => FaultKind::Overflow,
            ProveError::GuestExecutionFailed(g) => FaultKind::GuestExecutionFailed {
                reason: g.to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum InstanceState {
    Running,
    Completed,
    Faulted { fault: FaultKind },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    ActivityStarted,
    ProofGenerated {
        receipt_digest: Digest,
        size_bytes: usize,
        duration_micros: u64,
    },
    ProofVerified {
        receipt_digest: Digest,
        duration_micros: u64,
    },
    Fault {
        fault: FaultKind,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventLogEntry {
    pub seq: u64,
    pub timestamp_ms: u64,
    pub instance_id: String,
    pub activity_id: String,
    pub event: EventKind,
}

#[derive(Debug, Clone)]
pub struct ProcessInstance {
    pub instance_id: String,
    pub model: ProcessModel,
    pub cursor: usize,
    pub state: InstanceState,
    pub variables: VariableStore,
    pub event_log: Vec<EventLogEntry>,
}

impl ProcessInstance {
    pub fn is_running(&self) -> bool {
        self.state == InstanceState::Running
    }

    pub fn fault(&self) -> Option<&FaultKind> {
        match &self.state {
            InstanceState::Faulted { fault } => Some(fault),
            _ => None,
        }
    }

    pub fn final_receipt(&self) -> Option<Receipt> {
        self.variables.receipt(LATEST_RECEIPT)?.ok()
    }

    /// One JSON object per line: `{seq, timestamp_ms, instance_id, activity_id, event}`.
    pub fn event_log_jsonl(&self) -> String {
        self.event_log
            .iter()
            .map(|e| serde_json::to_string(e).expect("event serializes") + "\n")
            .collect()
    }

    fn log(&mut self, activity_id: &str, event: EventKind) {
        let timestamp_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        self.event_log.push(EventLogEntry {
            seq: self.event_log.len() as u64,
            timestamp_ms,
            instance_id: self.instance_id.clone(),
            activity_id: activity_id.to_string(),
            event,
        });
    }

    fn fault_with(&mut self, activity_id: &str, fault: FaultKind) {
        self.log(
            activity_id,
            EventKind::Fault {
                fault: fault.clone(),
            },
        );
        self.state = InstanceState::Faulted { fault };
    }
}

/// Guests a deployment can prove with, and the verification keys it trusts,
/// both addressed by `guest_ref`.
#[derive(Debug, Clone, Default)]
pub struct GuestRegistry {
    provers: HashMap<String, GuestDescriptor>,
    verification_keys: HashMap<String, ImageId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("certificate for '{guest_ref}' rejected at deployment")]
pub struct DeploymentError {
    pub guest_ref: String,
}

impl GuestRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a guest this party proves with; its own ImageId is trusted.
    pub fn register_prover(&mut self, guest_ref: &str, descriptor: GuestDescriptor) -> ImageId {
        let id = descriptor.image_id();
        self.provers.insert(guest_ref.to_string(), descriptor);
        self.verification_keys.insert(guest_ref.to_string(), id);
        id
    }

    /// Trusts another party's guest after checking its certificate once, at
    /// deployment time.
    pub fn trust_certified(
        &mut self,
        guest_ref: &str,
        ctx: &VerifierContext,
    ) -> Result<ImageId, DeploymentError> {
        if !validate_certificate(
            &ctx.certificate,
            &ctx.agency_public_key,
            &ctx.verification_key,
        ) {
            return Err(DeploymentError {
                guest_ref: guest_ref.to_string(),
            });
        }
        self.verification_keys
            .insert(guest_ref.to_string(), ctx.verification_key);
        Ok(ctx.verification_key)
    }

    /// Trusts a key without a certificate.
    pub fn trust_key(&mut self, guest_ref: &str, key: ImageId) {
        self.verification_keys.insert(guest_ref.to_string(), key);
    }

    pub fn descriptor(&self, guest_ref: &str) -> Option<&GuestDescriptor> {
        self.provers.get(guest_ref)
    }

    pub fn verification_key(&self, guest_ref: &str) -> Option<ImageId> {
        self.verification_keys.get(guest_ref).copied()
    }
}

/// What a worker sees when it picks up an activity.
pub struct WorkerContext<'a> {
    pub backend: &'a dyn ProofBackend,
    pub registry: &'a GuestRegistry,
    pub model: &'a ProcessModel,
    pub cursor: usize,
}

impl WorkerContext<'_> {
    fn key(&self, guest_ref: &str) -> Result<ImageId, FaultKind> {
        self.registry
            .verification_key(guest_ref)
            .ok_or_else(|| FaultKind::UnknownGuest {
                guest_ref: guest_ref.to_string(),
            })
    }

    fn descriptor(&self, guest_ref: &str) -> Result<&GuestDescriptor, FaultKind> {
        self.registry
            .descriptor(guest_ref)
            .ok_or_else(|| FaultKind::UnknownGuest {
                guest_ref: guest_ref.to_string(),
            })
    }

    fn preceding(&self) -> &[ActivitySpec] {
        &self.model.activities[..self.cursor]
    }
}

pub struct WorkerOutput {
    pub updates: Vec<(String, Vec<u8>)>,
    pub event: EventKind,
}

/// A stateless task worker.
pub trait TaskWorker: Send + Sync {
    fn handles(&self, kind: ActivityKind) -> bool;

    fn execute(
        &self,
        ctx: &WorkerContext<'_>,
        activity: &ActivitySpec,
        variables: &VariableStore,
    ) -> Result<WorkerOutput, FaultKind>;
}

fn read_receipt(variables: &VariableStore, name: &str) -> Result<Receipt, FaultKind> {
    match variables.receipt(name) {
        None => Err(FaultKind::MissingVariable {
            name: name.to_string(),
        }),
        Some(Err(e)) => Err(FaultKind::MalformedVariable {
            name: name.to_string(),
            reason: e.to_string(),
        }),
        Some(Ok(r)) => Ok(r),
    }
}

fn proof_output(activity: &ActivitySpec, receipt: &Receipt, started: Instant) -> WorkerOutput {
    let duration_micros = started.elapsed().as_micros() as u64;
    let bytes = receipt.to_bytes();
    WorkerOutput {
        event: EventKind::ProofGenerated {
            receipt_digest: receipt.digest(),
            size_bytes: bytes.len(),
            duration_micros,
        },
        updates: vec![
            (receipt_var(&activity.id), bytes.clone()),
            (LATEST_RECEIPT.to_string(), bytes),
        ],
    }
}

/// Proves footprinting activities with the guest matching the model's strategy.
#[derive(Debug, Default)]
pub struct ProvingWorker;

impl TaskWorker for ProvingWorker {
    fn handles(&self, kind: ActivityKind) -> bool {
        kind == ActivityKind::ProveFootprint
    }

    fn execute(
        &self,
        ctx: &WorkerContext<'_>,
        activity: &ActivitySpec,
        variables: &VariableStore,
    ) -> Result<WorkerOutput, FaultKind> {
        let descriptor = ctx.descriptor(&activity.guest_ref)?;
        let input = match ctx.model.strategy {
            Strategy::SingleStep => {
                let mut external_receipts = Vec::new();
                for prior in ctx.preceding() {
                    if prior.kind == ActivityKind::VerifyExternal {
                        external_receipts.push((
                            ctx.key(&prior.guest_ref)?,
                            read_receipt(variables, &receipt_var(&prior.id))?,
                        ));
                    }
                }
                let items = if activity.items.is_empty() {
                    activity
                        .footprint_pairs()
                        .into_iter()
                        .map(|(factor, amount)| SingleStepItem {
                            activity_id: activity.id.clone(),
                            factor,
                            amount,
                        })
                        .collect()
                } else {
                    activity
                        .items
                        .iter()
                        .map(|i| SingleStepItem {
                            activity_id: i.id.clone(),
                            factor: i.factor,
                            amount: i.amount,
                        })
                        .collect()
                };
                GuestInput::SingleStep(SingleStepGuestInput {
                    private: SingleStepPrivate {
                        items,
                        external_receipts,
                    },
                    public: ProcessPublic {
                        process_id: activity.id.clone(),
                    },
                })
            }
            Strategy::Composed | Strategy::Chained => {
                let (factor, amount) = match (activity.factor, activity.amount) {
                    (Some(f), Some(a)) => (f, a),
                    _ => {
                        return Err(FaultKind::GuestExecutionFailed {
                            reason: format!("activity '{}' lacks factor or amount", activity.id),
                        })
                    }
                };
                match ctx.cursor.checked_sub(1).map(|i| &ctx.model.activities[i]) {
                    Some(prev) if ctx.model.strategy == Strategy::Chained => {
                        GuestInput::Chained(ChainedGuestInput::linked(
                            &activity.id,
                            factor,
                            amount,
                            ctx.key(&prev.guest_ref)?,
                            read_receipt(variables, LATEST_RECEIPT)?,
                        ))
                    }
                    _ => GuestInput::Chained(ChainedGuestInput::genesis(
                        &activity.id,
                        factor,
                        amount,
                    )),
                }
            }
        };
        let started = Instant::now();
        let receipt = ctx.backend.prove(descriptor, &input)?;
        Ok(proof_output(activity, &receipt, started))
    }
}

/// Verifies a receipt handed over by another party against a trusted key.
#[derive(Debug, Default)]
pub struct VerificationWorker;

impl TaskWorker for VerificationWorker {
    fn handles(&self, kind: ActivityKind) -> bool {
        kind == ActivityKind::VerifyExternal
    }

    fn execute(
        &self,
        ctx: &WorkerContext<'_>,
        activity: &ActivitySpec,
        variables: &VariableStore,
    ) -> Result<WorkerOutput, FaultKind> {
        let key = ctx.key(&activity.guest_ref)?;
        let name = external_var(&activity.id);
        let bytes = variables
            .get(&name)
            .ok_or_else(|| FaultKind::MissingVariable { name: name.clone() })?;
        let started = Instant::now();
        let receipt = Receipt::from_bytes(bytes).map_err(|e| FaultKind::VerificationFailed {
            error: VerifyError::from(e),
        })?;
        ctx.backend
            .verify(&key, &receipt)
            .map_err(|error| FaultKind::VerificationFailed { error })?;
        let duration_micros = started.elapsed().as_micros() as u64;
        Ok(WorkerOutput {
            event: EventKind::ProofVerified {
                receipt_digest: receipt.digest(),
                duration_micros,
            },
            updates: vec![
                (receipt_var(&activity.id), bytes.to_vec()),
                (LATEST_RECEIPT.to_string(), bytes.to_vec()),
            ],
        })
    }
}

/// Composes every prior per-activity proof into one receipt.
#[derive(Debug, Default)]
pub struct CompositionWorker;

impl TaskWorker for CompositionWorker {
    fn handles(&self, kind: ActivityKind) -> bool {
        kind == ActivityKind::Compose
    }

    fn execute(
        &self,
        ctx: &WorkerContext<'_>,
        activity: &ActivitySpec,
        variables: &VariableStore,
    ) -> Result<WorkerOutput, FaultKind> {
        let descriptor = ctx.descriptor(&activity.guest_ref)?;
        let mut inner = Vec::new();
        for prior in ctx.preceding() {
            if prior.kind == ActivityKind::ProveFootprint {
                inner.push((
                    ctx.key(&prior.guest_ref)?,
                    read_receipt(variables, &receipt_var(&prior.id))?,
                ));
            }
        }
        let input = GuestInput::Composer(ComposerGuestInput {
            private: ComposerPrivate { inner },
            public: ProcessPublic {
                process_id: ctx.model.id.clone(),
            },
        });
        let started = Instant::now();
        let receipt = ctx.backend.prove(descriptor, &input)?;
        Ok(proof_output(activity, &receipt, started))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("invalid process model: {0}")]
    InvalidModel(ValidationReport),
    #[error(transparent)]
    VariableSizeLimitExceeded(#[from] SizeLimitExceeded),
    #[error("no worker handles {0:?} activities")]
    NoWorkerForKind(ActivityKind),
    #[error("instance is not running")]
    NotRunning,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("instance has not completed")]
    InstanceNotCompleted,
    #[error("receipt variable '{0}' missing or malformed")]
    MissingReceipt(String),
    #[error(transparent)]
    Pcf(#[from] PcfError),
}

/// The workflow engine. Shareable across threads; each instance is stepped
/// by one caller at a time.
#[derive(Clone)]
pub struct Engine {
    backend: Arc<dyn ProofBackend>,
    registry: GuestRegistry,
    workers: Vec<Arc<dyn TaskWorker>>,
}

impl Engine {
    pub fn new(backend: Arc<dyn ProofBackend>, registry: GuestRegistry) -> Self {
        Self {
            backend,
            registry,
            workers: vec![
                Arc::new(ProvingWorker),
                Arc::new(VerificationWorker),
                Arc::new(CompositionWorker),
            ],
        }
    }

    pub fn with_workers(mut self, workers: Vec<Arc<dyn TaskWorker>>) -> Self {
        self.workers = workers;
        self
    }

    pub fn backend(&self) -> &dyn ProofBackend {
        self.backend.as_ref()
    }

    pub fn registry(&self) -> &GuestRegistry {
        &self.registry
    }

    pub fn start_instance(
        &self,
        model: ProcessModel,
        initial_variables: BTreeMap<String, Vec<u8>>,
    ) -> Result<ProcessInstance, EngineError> {
        self.start_instance_with_limit(model, initial_variables, DEFAULT_SIZE_LIMIT)
    }

    pub fn start_instance_with_limit(
        &self,
        model: ProcessModel,
        initial_variables: BTreeMap<String, Vec<u8>>,
        size_limit: usize,
    ) -> Result<ProcessInstance, EngineError> {
        let report = validate_process_model(&model);
        if !report.is_valid() {
            return Err(EngineError::InvalidModel(report));
        }
        let mut variables = VariableStore::new(size_limit);
        variables.insert_all(initial_variables.into_iter().collect())?;
        Ok(ProcessInstance {
            instance_id: format!("{}-{}", model.id, uuid::Uuid::new_v4()),
            model,
            cursor: 0,
            state: InstanceState::Running,
            variables,
            event_log: Vec::new(),
        })
    }

    /// Executes the activity at the cursor.
    pub fn step(&self, instance: &mut ProcessInstance) -> Result<(), EngineError> {
        if !instance.is_running() {
            return Err(EngineError::NotRunning);
        }
        if instance.cursor >= instance.model.activities.len() {
            instance.state = InstanceState::Completed;
            return Ok(());
        }
        let activity = instance.model.activities[instance.cursor].clone();
        let worker = self
            .workers
            .iter()
            .find(|w| w.handles(activity.kind))
            .ok_or(EngineError::NoWorkerForKind(activity.kind))?;

        instance.log(&activity.id, EventKind::ActivityStarted);
        let ctx = WorkerContext {
            backend: self.backend.as_ref(),
            registry: &self.registry,
            model: &instance.model,
            cursor: instance.cursor,
        };
        let output = match worker.execute(&ctx, &activity, &instance.variables) {
            Ok(output) => output,
            Err(fault) => {
                instance.fault_with(&activity.id, fault);
                return Ok(());
            }
        };
        if let Err(e) = instance.variables.insert_all(output.updates) {
            instance.fault_with(&activity.id, FaultKind::VariableSizeLimitExceeded(e));
            return Ok(());
        }
        instance.log(&activity.id, output.event);
        instance.cursor += 1;
        if instance.cursor == instance.model.activities.len() {
            instance.state = InstanceState::Completed;
        }
        Ok(())
    }

    /// Steps until the instance completes or faults.
    pub fn run_to_completion(
        &self,
        mut instance: ProcessInstance,
    ) -> Result<ProcessInstance, EngineError> {
        while instance.is_running() {
            self.step(&mut instance)?;
        }
        Ok(instance)
    }

    /// Starts and runs an instance in one call.
    pub fn run(
        &self,
        model: ProcessModel,
        initial_variables: BTreeMap<String, Vec<u8>>,
        size_limit: usize,
    ) -> Result<ProcessInstance, EngineError> {
        let instance = self.start_instance_with_limit(model, initial_variables, size_limit)?;
        self.run_to_completion(instance)
    }
}

fn activity_contribution(
    instance: &ProcessInstance,
    activity: &ActivitySpec,
) -> Result<Option<(String, Scope, EmissionQuantity)>, ExtractError> {
    let name = receipt_var(&activity.id);
    let journal = || {
        instance
            .variables
            .receipt(&name)
            .and_then(Result::ok)
            .map(|r| r.journal)
            .ok_or_else(|| ExtractError::MissingReceipt(name.clone()))
    };
    Ok(match activity.kind {
        ActivityKind::ProveFootprint => Some((
            activity.id.clone(),
            activity.scope,
            journal()?.activity_emissions,
        )),
        ActivityKind::VerifyExternal => Some((
            activity.id.clone(),
            activity.scope,
            journal()?.cumulative_total,
        )),
        ActivityKind::Compose => None,
    })
}

/// Footprint of the activities completed so far; available for faulted
/// instances too.
pub fn partial_pcf(instance: &ProcessInstance) -> Result<Pcf, ExtractError> {
    let mut parts = Vec::new();
    for activity in &instance.model.activities[..instance.cursor] {
        if let Some(part) = activity_contribution(instance, activity)? {
            parts.push(part);
        }
    }
    let total =
        crate::domain::sum_emissions(parts.iter().map(|(_, _, q)| *q)).map_err(PcfError::from)?;
    Ok(Pcf::from_parts(total, parts)?)
}

/// The product carbon footprint of a completed instance: the final receipt's
/// cumulative total, broken down per activity and per scope.
pub fn extract_pcf(instance: &ProcessInstance) -> Result<Pcf, ExtractError> {
    if instance.state != InstanceState::Completed {
        return Err(ExtractError::InstanceNotCompleted);
    }
    let final_journal = instance
        .final_receipt()
        .ok_or_else(|| ExtractError::MissingReceipt(LATEST_RECEIPT.to_string()))?
        .journal;
    let parts = instance
        .model
        .activities
        .iter()
        .filter_map(|a| activity_contribution(instance, a).transpose())
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Pcf::from_parts(final_journal.cumulative_total, parts)?)
}
