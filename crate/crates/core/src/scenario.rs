//! Two-party supply-chain demonstration.
//!
//! A certification agency certifies the supplier's and the producer's
//! footprinting guests. The supplier runs a chained footprinting process and
//! hands its final receipt to the producer as Scope-3 data. The producer's
//! first activity verifies that receipt against the supplier's certified
//! key; its own chained activities then add Scope-2 and Scope-1 emissions on
//! top. Finally a customer, holding only the producer's verification key,
//! certificate and the agency public key, verifies the producer's PCF.
//!
//! With tampering enabled the supplier under-reports its total after
//! proving; the producer's validation activity must catch it.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agency::{audit_and_certify, provision, AgencyError, AgencyIdentity};
use crate::domain::{
    compute_emissions, sum_emissions, ActivitySpec, ArithmeticError, EmissionFactor,
    EmissionQuantity, Pcf, ProcessModel, ResourceAmount, Scope, Strategy,
};
use crate::engine::{
    external_var, extract_pcf, DeploymentError, Engine, EngineError, FaultKind, GuestRegistry,
    ProcessInstance, DEFAULT_SIZE_LIMIT,
};
use crate::proofsys::{
    verify_chain_final, GuestDescriptor, GuestRole, ImageId, ProofBackend, Receipt,
    SimulatedBackend,
};

pub const STANDARD_ID: &str = "GHG-Protocol-Product-Standard";
pub const SUPPLIER_GUEST: &str = "supplier-footprint";
pub const PRODUCER_GUEST: &str = "producer-footprint";
/// Producer's validation activity (first activity of its process).
pub const VALIDATION_ACTIVITY: &str = "validate-scope3";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioStep {
    pub id: String,
    pub scope: Scope,
    pub factor_mg_per_unit: u64,
    pub amount_units: u64,
}

impl ScenarioStep {
    pub fn new(id: &str, scope: Scope, factor: u64, amount: u64) -> Self {
        Self {
            id: id.to_string(),
            scope,
            factor_mg_per_unit: factor,
            amount_units: amount,
        }
    }

    fn emissions(&self) -> Result<EmissionQuantity, ArithmeticError> {
        compute_emissions(
            EmissionFactor(self.factor_mg_per_unit),
            ResourceAmount(self.amount_units),
        )
    }

    fn activity(&self, guest_ref: &str) -> ActivitySpec {
        ActivitySpec::prove(
            &self.id,
            self.factor_mg_per_unit,
            self.amount_units,
            guest_ref,
            self.scope,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub supplier_steps: Vec<ScenarioStep>,
    pub producer_steps: Vec<ScenarioStep>,
    /// Supplier lowers its reported total after proving.
    pub tamper: bool,
    /// Producer is configured with a key that is not the supplier's
    /// certified guest.
    pub untrusted_supplier_key: bool,
    pub agency_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            // aluminium supplier: extraction, smelting, transport
            supplier_steps: vec![
                ScenarioStep::new("bauxite-mining", Scope::Scope1, 1_200, 2_000),
                ScenarioStep::new("smelting", Scope::Scope2, 8_500, 900),
                ScenarioStep::new("transport", Scope::Scope1, 150, 4_000),
            ],
            // producer: electricity (Scope 2), then on-site combustion (Scope 1)
            producer_steps: vec![
                ScenarioStep::new("electricity", Scope::Scope2, 380, 12_500),
                ScenarioStep::new("combustion", Scope::Scope1, 2_020, 1_750),
            ],
            tamper: false,
            untrusted_supplier_key: false,
            agency_seed: 2024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Agency(#[from] AgencyError),
    #[error(transparent)]
    Deployment(#[from] DeploymentError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Arithmetic(#[from] ArithmeticError),
    #[error("supplier process did not complete: {0:?}")]
    SupplierFailed(Option<FaultKind>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub tampered: bool,
    pub supplier_total: EmissionQuantity,
    /// Total the supplier handed over (differs from `supplier_total` when tampered).
    pub reported_supplier_total: EmissionQuantity,
    pub producer_internal_total: EmissionQuantity,
    pub completed: bool,
    pub final_pcf: Option<Pcf>,
    pub fault: Option<FaultKind>,
    pub fault_activity: Option<String>,
    /// Customer-side verification of the producer's final receipt.
    pub customer_verified: bool,
    pub supplier_image_id: ImageId,
    pub producer_image_id: ImageId,
    #[serde(skip)]
    pub artifacts: Vec<(String, Vec<u8>)>,
}

impl ScenarioOutcome {
    /// Tampering was attempted and the producer refused the supplier data.
    pub fn tamper_detected(&self) -> bool {
        self.tampered
            && !self.completed
            && self.fault_activity.as_deref() == Some(VALIDATION_ACTIVITY)
            && matches!(self.fault, Some(FaultKind::VerificationFailed { .. }))
    }

    pub fn succeeded(&self) -> bool {
        if self.tampered {
            self.tamper_detected()
        } else {
            self.completed && self.customer_verified
        }
    }
}

pub fn run_supply_chain_scenario(tamper: bool) -> Result<ScenarioOutcome, ScenarioError> {
    run_scenario(&ScenarioConfig {
        tamper,
        ..ScenarioConfig::default()
    })
}

fn export(name: &str, instance: &ProcessInstance, artifacts: &mut Vec<(String, Vec<u8>)>) {
    artifacts.push((
        format!("{name}.variables.json"),
        instance.variables.snapshot_json().into_bytes(),
    ));
    artifacts.push((
        format!("{name}.events.jsonl"),
        instance.event_log_jsonl().into_bytes(),
    ));
    for (var, bytes) in instance.variables.iter() {
        artifacts.push((format!("{name}.{var}.bin"), bytes.to_vec()));
        if let Ok(r) = Receipt::from_bytes(bytes) {
            artifacts.push((format!("{name}.{var}.json"), r.to_json().into_bytes()));
        }
    }
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioOutcome, ScenarioError> {
    let backend: Arc<dyn ProofBackend> = Arc::new(SimulatedBackend::new());
    let mut artifacts = Vec::new();

    // setup phase
    let agency = AgencyIdentity::generate(&mut StdRng::seed_from_u64(config.agency_seed));
    let supplier_guest =
        GuestDescriptor::new("supplier-pcf-chained", "1.0.0", GuestRole::ChainedFootprint);
    let producer_guest =
        GuestDescriptor::new("producer-pcf-chained", "1.0.0", GuestRole::ChainedFootprint);
    let supplier_cert = audit_and_certify(&agency, &supplier_guest, STANDARD_ID)?;
    let producer_cert = audit_and_certify(&agency, &producer_guest, STANDARD_ID)?;
    let (supplier_prover, supplier_verifier) = provision(&agency, &supplier_cert, &supplier_guest)?;
    let (producer_prover, producer_verifier) = provision(&agency, &producer_cert, &producer_guest)?;
    for (name, cert) in [("supplier", &supplier_cert), ("producer", &producer_cert)] {
        artifacts.push((
            format!("{name}.certificate.json"),
            cert.to_json().into_bytes(),
        ));
    }

    // supplier
    let mut supplier_registry = GuestRegistry::new();
    supplier_registry.register_prover(SUPPLIER_GUEST, supplier_prover.descriptor.clone());
    let supplier_engine = Engine::new(backend.clone(), supplier_registry);
    let supplier_model = ProcessModel {
        id: "supplier-pcf".into(),
        strategy: Strategy::Chained,
        activities: config
            .supplier_steps
            .iter()
            .map(|s| s.activity(SUPPLIER_GUEST))
            .collect(),
    };
    let supplier = supplier_engine.run(supplier_model, BTreeMap::new(), DEFAULT_SIZE_LIMIT)?;
    export("supplier", &supplier, &mut artifacts);
    let supplier_receipt = match supplier.final_receipt() {
        Some(r) if supplier.fault().is_none() => r,
        _ => return Err(ScenarioError::SupplierFailed(supplier.fault().cloned())),
    };
    let supplier_total = supplier_receipt.journal.cumulative_total;

    // handoff
    let mut handed_over = supplier_receipt;
    if config.tamper {
        handed_over.journal.cumulative_total = EmissionQuantity(supplier_total.0 / 2);
    }
    let reported_supplier_total = handed_over.journal.cumulative_total;
    let handoff_bytes = handed_over.to_bytes();
    artifacts.push(("handoff.receipt.bin".into(), handoff_bytes.clone()));
    artifacts.push((
        "handoff.receipt.json".into(),
        handed_over.to_json().into_bytes(),
    ));

    // producer
    let mut producer_registry = GuestRegistry::new();
    producer_registry.register_prover(PRODUCER_GUEST, producer_prover.descriptor.clone());
    if config.untrusted_supplier_key {
        // a certified key, but for a different guest than the one the supplier ran
        producer_registry.trust_certified(SUPPLIER_GUEST, &producer_verifier)?;
    } else {
        producer_registry.trust_certified(SUPPLIER_GUEST, &supplier_verifier)?;
    }
    let producer_engine = Engine::new(backend.clone(), producer_registry);
    let mut activities = vec![ActivitySpec::verify_external(
        VALIDATION_ACTIVITY,
        SUPPLIER_GUEST,
        Scope::Scope3,
    )];
    activities.extend(
        config
            .producer_steps
            .iter()
            .map(|s| s.activity(PRODUCER_GUEST)),
    );
    let producer_model = ProcessModel {
        id: "producer-pcf".into(),
        strategy: Strategy::Chained,
        activities,
    };
    let initial = BTreeMap::from([(external_var(VALIDATION_ACTIVITY), handoff_bytes)]);
    let producer = producer_engine.run(producer_model, initial, DEFAULT_SIZE_LIMIT)?;
    export("producer", &producer, &mut artifacts);

    let producer_internal_total = sum_emissions(
        config
            .producer_steps
            .iter()
            .map(ScenarioStep::emissions)
            .collect::<Result<Vec<_>, _>>()?,
    )?;
    let completed = producer.fault().is_none();
    let final_pcf = if completed {
        extract_pcf(&producer).ok()
    } else {
        None
    };

    // customer: verification key, certificate and agency key only
    let customer_verified = completed
        && producer
            .final_receipt()
            .map(|r| {
                producer_verifier
                    .verify_receipt(backend.as_ref(), &r)
                    .is_ok()
                    && verify_chain_final(
                        backend.as_ref(),
                        &producer_verifier.verification_key,
                        &[supplier_verifier.verification_key],
                        &r,
                    )
                    .is_ok()
            })
            .unwrap_or(false);

    let fault_activity = producer
        .fault()
        .and_then(|_| producer.model.activities.get(producer.cursor))
        .map(|a| a.id.clone());
    Ok(ScenarioOutcome {
        tampered: config.tamper,
        supplier_total,
        reported_supplier_total,
        producer_internal_total,
        completed,
        final_pcf,
        fault: producer.fault().cloned(),
        fault_activity,
        customer_verified,
        supplier_image_id: supplier_verifier.verification_key,
        producer_image_id: producer_verifier.verification_key,
        artifacts,
    })
}
