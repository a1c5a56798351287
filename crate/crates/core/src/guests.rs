//! Guest programs for the three proving strategies.
//!
//! * chained: one proof per activity, each verifying its predecessor and
//!   carrying the running total forward;
//! * single-step: one proof for the whole process;
//! * composer: one final proof aggregating independent per-activity proofs.
//!
//! Guests are pure functions of their input plus an in-guest receipt
//! verifier. Receipts consumed by a guest are private inputs; only the
//! resulting [`Journal`] is public.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::Encoder;
use crate::domain::{
    aggregate, compute_emissions, sum_emissions, ArithmeticError, EmissionFactor, EmissionQuantity,
    ResourceAmount,
};
use crate::proofsys::{
    Composition, Digest, GuestDescriptor, GuestRole, ImageId, Journal, LinkRecord, Receipt,
    ReceiptVerifier, VerifyError,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GuestError {
    #[error("invalid guest input: {0}")]
    InvalidInput(String),
    #[error("guest {descriptor:?} cannot run {input:?} input")]
    RoleMismatch {
        descriptor: GuestRole,
        input: GuestRole,
    },
    #[error("previous receipt failed verification: {0}")]
    PreviousVerificationFailed(VerifyError),
    #[error("external receipt {index} failed verification: {source}")]
    ExternalVerificationFailed { index: usize, source: VerifyError },
    #[error("inner receipt {index} failed verification: {source}")]
    InnerReceiptInvalid { index: usize, source: VerifyError },
    #[error(transparent)]
    Arithmetic(#[from] ArithmeticError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainedPrivate {
    pub factor: EmissionFactor,
    pub amount: ResourceAmount,
    /// `None` is the GENESIS link.
    pub previous_receipt: Option<Receipt>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainedPublic {
    pub activity_id: String,
    pub previous_image_id: Option<ImageId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainedGuestInput {
    pub private: ChainedPrivate,
    pub public: ChainedPublic,
}

impl ChainedGuestInput {
    pub fn genesis(activity_id: &str, factor: EmissionFactor, amount: ResourceAmount) -> Self {
        Self {
            private: ChainedPrivate {
                factor,
                amount,
                previous_receipt: None,
            },
            public: ChainedPublic {
                activity_id: activity_id.to_string(),
                previous_image_id: None,
            },
        }
    }

    pub fn linked(
        activity_id: &str,
        factor: EmissionFactor,
        amount: ResourceAmount,
        previous_image_id: ImageId,
        previous_receipt: Receipt,
    ) -> Self {
        Self {
            private: ChainedPrivate {
                factor,
                amount,
                previous_receipt: Some(previous_receipt),
            },
            public: ChainedPublic {
                activity_id: activity_id.to_string(),
                previous_image_id: Some(previous_image_id),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SingleStepItem {
    pub activity_id: String,
    pub factor: EmissionFactor,
    pub amount: ResourceAmount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SingleStepPrivate {
    pub items: Vec<SingleStepItem>,
    #[serde(default)]
    pub external_receipts: Vec<(ImageId, Receipt)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessPublic {
    pub process_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SingleStepGuestInput {
    pub private: SingleStepPrivate,
    pub public: ProcessPublic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComposerPrivate {
    pub inner: Vec<(ImageId, Receipt)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComposerGuestInput {
    pub private: ComposerPrivate,
    pub public: ProcessPublic,
}

/// Input record for any guest. The JSON form is `{"guest": "...", ...}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "guest", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum GuestInput {
    Chained(ChainedGuestInput),
    SingleStep(SingleStepGuestInput),
    Composer(ComposerGuestInput),
}

impl GuestInput {
    pub fn role(&self) -> GuestRole {
        match self {
            GuestInput::Chained(_) => GuestRole::ChainedFootprint,
            GuestInput::SingleStep(_) => GuestRole::SingleStepFootprint,
            GuestInput::Composer(_) => GuestRole::Composer,
        }
    }

    /// Canonical encoding of the private part; feeds the salted commitment.
    pub fn private_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        match self {
            GuestInput::Chained(input) => {
                let p = &input.private;
                enc.u8(1).u64(p.factor.0).u64(p.amount.0);
                match &p.previous_receipt {
                    Some(r) => enc.u8(1).bytes(&r.to_bytes()),
                    None => enc.u8(0),
                };
            }
            GuestInput::SingleStep(input) => {
                let p = &input.private;
                enc.u8(2).u32(p.items.len() as u32);
                for item in &p.items {
                    enc.str(&item.activity_id)
                        .u64(item.factor.0)
                        .u64(item.amount.0);
                }
                encode_pairs(&mut enc, &p.external_receipts);
            }
            GuestInput::Composer(input) => {
                enc.u8(3);
                encode_pairs(&mut enc, &input.private.inner);
            }
        }
        enc.finish()
    }
}

fn encode_pairs(enc: &mut Encoder, pairs: &[(ImageId, Receipt)]) {
    enc.u32(pairs.len() as u32);
    for (id, r) in pairs {
        enc.digest(&id.0).bytes(&r.to_bytes());
    }
}

/// What a guest run produces before sealing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuestOutput {
    pub journal: Journal,
    pub composition: Composition,
}

/// Runs the guest named by `descriptor` on `input`.
pub fn execute(
    descriptor: &GuestDescriptor,
    input: &GuestInput,
    verifier: &dyn ReceiptVerifier,
) -> Result<GuestOutput, GuestError> {
    if descriptor.role != input.role() {
        return Err(GuestError::RoleMismatch {
            descriptor: descriptor.role,
            input: input.role(),
        });
    }
    let self_id = descriptor.image_id();
    match input {
        GuestInput::Chained(i) => chained_footprint_guest(&self_id, i, verifier),
        GuestInput::SingleStep(i) => single_step_guest(&self_id, i, verifier),
        GuestInput::Composer(i) => composer_guest(&self_id, i, verifier),
    }
}

/// Per-activity footprinting: verify the previous link, add this activity's
/// emissions to its running total.
pub fn chained_footprint_guest(
    self_id: &ImageId,
    input: &ChainedGuestInput,
    verifier: &dyn ReceiptVerifier,
) -> Result<GuestOutput, GuestError> {
    let activity_id = &input.public.activity_id;
    let (previous_total, mut links, previous_receipt_digest, previous_image_id, composition) =
        match (
            &input.private.previous_receipt,
            &input.public.previous_image_id,
        ) {
            (None, None) => (
                EmissionQuantity::ZERO,
                Vec::new(),
                Digest::GENESIS,
                ImageId::GENESIS,
                Composition::None,
            ),
            (Some(prev), Some(prev_id)) => {
                if prev_id.is_genesis() {
                    return Err(GuestError::InvalidInput(
                        "GENESIS image id paired with a previous receipt".into(),
                    ));
                }
                let journal = verifier
                    .verify(prev_id, prev)
                    .map_err(GuestError::PreviousVerificationFailed)?;
                if !journal.verification_ok {
                    return Err(GuestError::InvalidInput(
                        "previous journal does not attest a successful verification".into(),
                    ));
                }
                (
                    journal.cumulative_total,
                    journal.links.clone(),
                    prev.claim_digest(),
                    *prev_id,
                    Composition::ChainLink {
                        previous_journal_digest: journal.digest(),
                    },
                )
            }
            _ => {
                return Err(GuestError::InvalidInput(
                    "previous receipt and previous image id must both be GENESIS or both present"
                        .into(),
                ))
            }
        };

    let current = compute_emissions(input.private.factor, input.private.amount)?;
    let cumulative_total = aggregate(previous_total, current)?;
    links.push(LinkRecord {
        activity_id: activity_id.clone(),
        emissions: current,
        image_id: *self_id,
    });
    Ok(GuestOutput {
        journal: Journal {
            cumulative_total,
            activity_emissions: current,
            activity_id: activity_id.clone(),
            previous_receipt_digest,
            previous_image_id,
            verification_ok: true,
            links,
        },
        composition,
    })
}

/// Whole-process footprinting in one proof: verify every external receipt,
/// then add their totals to the sum over all internal items.
pub fn single_step_guest(
    self_id: &ImageId,
    input: &SingleStepGuestInput,
    verifier: &dyn ReceiptVerifier,
) -> Result<GuestOutput, GuestError> {
    if input.private.items.is_empty() {
        return Err(GuestError::InvalidInput(
            "single-step guest needs at least one item".into(),
        ));
    }
    let mut external = Vec::with_capacity(input.private.external_receipts.len());
    for (index, (id, receipt)) in input.private.external_receipts.iter().enumerate() {
        let journal = verifier
            .verify(id, receipt)
            .map_err(|source| GuestError::ExternalVerificationFailed { index, source })?;
        external.push(journal.cumulative_total);
    }
    let internal = sum_emissions(
        input
            .private
            .items
            .iter()
            .map(|i| compute_emissions(i.factor, i.amount))
            .collect::<Result<Vec<_>, _>>()?,
    )?;
    let cumulative_total = aggregate(sum_emissions(external)?, internal)?;
    let process_id = &input.public.process_id;
    Ok(GuestOutput {
        journal: Journal {
            cumulative_total,
            activity_emissions: internal,
            activity_id: process_id.clone(),
            previous_receipt_digest: Digest::GENESIS,
            previous_image_id: ImageId::GENESIS,
            verification_ok: true,
            links: vec![LinkRecord {
                activity_id: process_id.clone(),
                emissions: internal,
                image_id: *self_id,
            }],
        },
        composition: Composition::None,
    })
}

/// Final composition: verify each independent per-activity proof and sum
/// their activity emissions. Inner receipts are embedded verbatim.
pub fn composer_guest(
    _self_id: &ImageId,
    input: &ComposerGuestInput,
    verifier: &dyn ReceiptVerifier,
) -> Result<GuestOutput, GuestError> {
    if input.private.inner.is_empty() {
        return Err(GuestError::InvalidInput(
            "composer needs at least one inner receipt".into(),
        ));
    }
    let mut links = Vec::with_capacity(input.private.inner.len());
    for (index, (id, receipt)) in input.private.inner.iter().enumerate() {
        let journal = verifier
            .verify(id, receipt)
            .map_err(|source| GuestError::InnerReceiptInvalid { index, source })?;
        links.push(LinkRecord {
            activity_id: journal.activity_id.clone(),
            emissions: journal.activity_emissions,
            image_id: *id,
        });
    }
    let cumulative_total = sum_emissions(links.iter().map(|l| l.emissions))?;
    Ok(GuestOutput {
        journal: Journal {
            cumulative_total,
            activity_emissions: cumulative_total,
            activity_id: input.public.process_id.clone(),
            previous_receipt_digest: Digest::GENESIS,
            previous_image_id: ImageId::GENESIS,
            verification_ok: true,
            links,
        },
        composition: Composition::ComposedInner {
            inner: input.private.inner.iter().map(|(_, r)| r.clone()).collect(),
        },
    })
}

/// The descriptors of the reference guests, one per role.
pub fn reference_descriptor(role: GuestRole) -> GuestDescriptor {
    match role {
        GuestRole::ChainedFootprint => GuestDescriptor::new("pcf-chained", "1.0.0", role),
        GuestRole::SingleStepFootprint => GuestDescriptor::new("pcf-single-step", "1.0.0", role),
        GuestRole::Composer => GuestDescriptor::new("pcf-composer", "1.0.0", role),
    }
}
