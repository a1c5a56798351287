//! Receipts, guest identities and the proof-backend contract.
//!
//! A [`Receipt`] is the artifact handed between activities: the public
//! [`Journal`], a [`Seal`] binding it to the guest's [`ImageId`], a salted
//! commitment to the private inputs, and an optional composition payload.
//!
//! [`SimulatedBackend`] executes guests natively and seals their output with
//! SHA-256. It is tamper-evident (any mutation of a sealed receipt is caught)
//! but it is **not** a zero-knowledge proof system: anyone holding the guest
//! descriptor can compute a valid seal for any journal. A real zkVM adapter
//! implements [`ProofBackend`] to restore soundness; nothing else in the crate
//! depends on how a seal is produced.
//!
//! Digest algorithm: SHA-256 with a length-prefixed domain tag, over the
//! canonical little-endian encoding from [`crate::codec`].

use std::fmt;
use std::sync::Mutex;

use rand::rngs::StdRng;
use rand::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{sha256, tagged_hash, DecodeError, Decoder, Encoder};
use crate::domain::{ArithmeticError, EmissionQuantity};
use crate::guests::{self, GuestError, GuestInput};

const RECEIPT_MAGIC: &[u8; 4] = b"VPR1";

macro_rules! hex_digest {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
        pub struct $name(pub [u8; 32]);

        impl $name {
            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }

            pub fn from_hex(s: &str) -> Result<Self, hex::FromHexError> {
                let mut out = [0u8; 32];
                hex::decode_to_slice(s.trim(), &mut out)?;
                Ok(Self(out))
            }

            pub fn as_bytes(&self) -> &[u8; 32] {
                &self.0
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), &self.to_hex()[..16])
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                Self::from_hex(&s).map_err(serde::de::Error::custom)
            }
        }
    };
}

hex_digest!(
    /// 32-byte SHA-256 digest.
    Digest
);
hex_digest!(
    /// Identifier of a guest program. Doubles as proving and verification key.
    ImageId
);
hex_digest!(
    /// Validity seal over image id, journal, private-input commitment and composition.
    Seal
);

impl Digest {
    /// Marks the absence of a predecessor in a proof chain.
    pub const GENESIS: Digest = Digest([0; 32]);

    pub fn is_genesis(&self) -> bool {
        *self == Self::GENESIS
    }
}

impl ImageId {
    pub const GENESIS: ImageId = ImageId([0; 32]);

    pub fn is_genesis(&self) -> bool {
        *self == Self::GENESIS
    }
}

/// Which guest program a descriptor stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuestRole {
    ChainedFootprint,
    SingleStepFootprint,
    Composer,
}

impl GuestRole {
    fn tag(self) -> u8 {
        match self {
            GuestRole::ChainedFootprint => 1,
            GuestRole::SingleStepFootprint => 2,
            GuestRole::Composer => 3,
        }
    }
}

/// Stand-in for a compiled guest binary: everything that determines its
/// behavior, hashed into a code digest.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GuestDescriptor {
    pub name: String,
    pub version: String,
    pub role: GuestRole,
    #[serde(default)]
    pub parameter_schema: Vec<String>,
}

impl GuestDescriptor {
    pub fn new(name: &str, version: &str, role: GuestRole) -> Self {
        let parameter_schema = match role {
            GuestRole::ChainedFootprint => {
                vec!["factor:u64", "amount:u64", "previous_receipt:receipt?"]
            }
            GuestRole::SingleStepFootprint => vec!["items:[(id,u64,u64)]", "external:[receipt]"],
            GuestRole::Composer => vec!["inner:[(image_id,receipt)]"],
        };
        Self {
            name: name.to_string(),
            version: version.to_string(),
            role,
            parameter_schema: parameter_schema.into_iter().map(String::from).collect(),
        }
    }

    fn program_definition(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.str(&self.name).str(&self.version).u8(self.role.tag());
        enc.u32(self.parameter_schema.len() as u32);
        for p in &self.parameter_schema {
            enc.str(p);
        }
        enc.finish()
    }

    pub fn code_digest(&self) -> Digest {
        Digest(tagged_hash(
            b"vpcf/guest-code",
            &[&self.program_definition()],
        ))
    }

    /// Canonical serialization: name, version, code digest.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.str(&self.name)
            .str(&self.version)
            .digest(&self.code_digest().0);
        enc.finish()
    }

    pub fn image_id(&self) -> ImageId {
        image_id(self)
    }
}

pub fn image_id(descriptor: &GuestDescriptor) -> ImageId {
    ImageId(tagged_hash(
        b"vpcf/image-id",
        &[&descriptor.canonical_bytes()],
    ))
}

/// One activity's public contribution as recorded in an accumulating journal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub activity_id: String,
    pub emissions: EmissionQuantity,
    pub image_id: ImageId,
}

/// Public outputs of a guest execution. Never carries factors or amounts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Journal {
    pub cumulative_total: EmissionQuantity,
    pub activity_emissions: EmissionQuantity,
    pub activity_id: String,
    /// Claim digest of the previous link, GENESIS for the first.
    pub previous_receipt_digest: Digest,
    pub previous_image_id: ImageId,
    pub verification_ok: bool,
    /// Chained: every link so far. Composed: one record per inner proof.
    /// Single-step: exactly one record for the run.
    pub links: Vec<LinkRecord>,
}

impl Journal {
    pub fn is_genesis_linked(&self) -> bool {
        self.previous_receipt_digest.is_genesis() && self.previous_image_id.is_genesis()
    }

    pub fn encode_into(&self, enc: &mut Encoder) {
        enc.i64(self.cumulative_total.0)
            .i64(self.activity_emissions.0)
            .str(&self.activity_id)
            .digest(&self.previous_receipt_digest.0)
            .digest(&self.previous_image_id.0)
            .bool(self.verification_ok)
            .u32(self.links.len() as u32);
        for link in &self.links {
            enc.str(&link.activity_id)
                .i64(link.emissions.0)
                .digest(&link.image_id.0);
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode_into(&mut enc);
        enc.finish()
    }

    pub fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let cumulative_total = EmissionQuantity(dec.i64()?);
        let activity_emissions = EmissionQuantity(dec.i64()?);
        let activity_id = dec.str()?.to_string();
        let previous_receipt_digest = Digest(dec.digest()?);
        let previous_image_id = ImageId(dec.digest()?);
        let verification_ok = dec.bool()?;
        let n = dec.u32()? as usize;
        let mut links = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            links.push(LinkRecord {
                activity_id: dec.str()?.to_string(),
                emissions: EmissionQuantity(dec.i64()?),
                image_id: ImageId(dec.digest()?),
            });
        }
        Ok(Self {
            cumulative_total,
            activity_emissions,
            activity_id,
            previous_receipt_digest,
            previous_image_id,
            verification_ok,
            links,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(bytes);
        let journal = Self::decode_from(&mut dec)?;
        dec.finish()?;
        Ok(journal)
    }

    pub fn digest(&self) -> Digest {
        Digest(tagged_hash(b"vpcf/journal", &[&self.to_bytes()]))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Composition {
    None,
    ChainLink { previous_journal_digest: Digest },
    ComposedInner { inner: Vec<Receipt> },
}

impl Composition {
    fn encode_into(&self, enc: &mut Encoder) {
        match self {
            Composition::None => {
                enc.u8(0);
            }
            Composition::ChainLink {
                previous_journal_digest,
            } => {
                enc.u8(1).digest(&previous_journal_digest.0);
            }
            Composition::ComposedInner { inner } => {
                enc.u8(2).u32(inner.len() as u32);
                for r in inner {
                    enc.bytes(&r.to_bytes());
                }
            }
        }
    }

    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        match dec.u8()? {
            0 => Ok(Composition::None),
            1 => Ok(Composition::ChainLink {
                previous_journal_digest: Digest(dec.digest()?),
            }),
            2 => {
                let n = dec.u32()? as usize;
                let mut inner = Vec::with_capacity(n.min(1024));
                for _ in 0..n {
                    inner.push(Receipt::from_bytes(dec.bytes()?)?);
                }
                Ok(Composition::ComposedInner { inner })
            }
            tag => Err(DecodeError::InvalidTag {
                what: "composition",
                tag,
            }),
        }
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode_into(&mut enc);
        enc.finish()
    }
}

/// Proof artifact passed between activities as a process variable.
///
/// JSON form is the transport envelope
/// `{image_id_hex, journal, seal_hex, salt_commitment_hex, composition}`;
/// [`Receipt::to_bytes`] is the canonical binary form used for sealing and
/// size measurement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    #[serde(rename = "image_id_hex")]
    pub image_id: ImageId,
    pub journal: Journal,
    #[serde(rename = "seal_hex")]
    pub seal: Seal,
    #[serde(rename = "salt_commitment_hex")]
    pub salt_commitment: Digest,
    pub composition: Composition,
}

impl Receipt {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.raw(RECEIPT_MAGIC).digest(&self.image_id.0);
        enc.bytes(&self.journal.to_bytes());
        enc.digest(&self.seal.0).digest(&self.salt_commitment.0);
        self.composition.encode_into(&mut enc);
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(bytes);
        if dec.raw(4)? != RECEIPT_MAGIC {
            return Err(DecodeError::BadMagic);
        }
        let image_id = ImageId(dec.digest()?);
        let journal = Journal::from_bytes(dec.bytes()?)?;
        let seal = Seal(dec.digest()?);
        let salt_commitment = Digest(dec.digest()?);
        let composition = Composition::decode_from(&mut dec)?;
        dec.finish()?;
        Ok(Self {
            image_id,
            journal,
            seal,
            salt_commitment,
            composition,
        })
    }

    pub fn digest(&self) -> Digest {
        Digest(sha256(&self.to_bytes()))
    }

    /// Digest of what the receipt claims: the guest and its public output.
    /// Independent of the seal, so re-proving the same statement gives the
    /// same claim digest.
    pub fn claim_digest(&self) -> Digest {
        Digest(tagged_hash(
            b"vpcf/claim",
            &[&self.image_id.0, &self.journal.to_bytes()],
        ))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("receipt serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Byte range of the length-prefixed journal within [`Receipt::to_bytes`].
    pub fn journal_byte_range(&self) -> std::ops::Range<usize> {
        let start = RECEIPT_MAGIC.len() + 32 + 4;
        start..start + self.journal.to_bytes().len()
    }

    /// Byte range of the seal within [`Receipt::to_bytes`].
    pub fn seal_byte_range(&self) -> std::ops::Range<usize> {
        let start = self.journal_byte_range().end;
        start..start + 32
    }
}

/// Length of the canonical binary serialization.
pub fn receipt_size(receipt: &Receipt) -> usize {
    receipt.to_bytes().len()
}

pub fn compute_seal(
    image_id: &ImageId,
    journal: &Journal,
    salt_commitment: &Digest,
    composition: &Composition,
) -> Seal {
    Seal(tagged_hash(
        b"vpcf/seal",
        &[
            &image_id.0,
            &journal.to_bytes(),
            &salt_commitment.0,
            &composition.to_bytes(),
        ],
    ))
}

/// Salted commitment `H(salt ‖ canonical private inputs)`.
pub fn commit_private_inputs(salt: &[u8; 16], private_bytes: &[u8]) -> Digest {
    Digest(tagged_hash(b"vpcf/private-inputs", &[salt, private_bytes]))
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum VerifyError {
    #[error("image id mismatch: expected {expected}, receipt carries {actual}")]
    ImageIdMismatch { expected: ImageId, actual: ImageId },
    #[error("seal does not match receipt contents")]
    SealInvalid,
    #[error("inner receipt {index} invalid: {source}")]
    InnerReceiptInvalid {
        index: usize,
        source: Box<VerifyError>,
    },
    #[error("malformed receipt: {0}")]
    Malformed(String),
}

impl From<DecodeError> for VerifyError {
    fn from(e: DecodeError) -> Self {
        VerifyError::Malformed(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProveError {
    #[error("guest execution failed: {0}")]
    GuestExecutionFailed(GuestError),
    #[error("emission arithmetic overflow")]
    Overflow,
}

impl From<GuestError> for ProveError {
    fn from(e: GuestError) -> Self {
        match e {
            GuestError::Arithmetic(ArithmeticError::Overflow) => ProveError::Overflow,
            other => ProveError::GuestExecutionFailed(other),
        }
    }
}

/// Verification half of the backend contract. Guests that consume receipts
/// receive one of these as their in-guest verifier.
pub trait ReceiptVerifier: Send + Sync {
    /// Returns the journal iff `receipt` is a valid proof by the guest
    /// identified by `expected`.
    fn verify(&self, expected: &ImageId, receipt: &Receipt) -> Result<Journal, VerifyError>;
}

/// A proof system able to execute a guest and attest its output.
pub trait ProofBackend: ReceiptVerifier {
    fn name(&self) -> &str;

    /// Executes the guest on `input` and returns a receipt over its journal.
    /// Assumption receipts travel inside `input`'s private part.
    fn prove(
        &self,
        descriptor: &GuestDescriptor,
        input: &GuestInput,
    ) -> Result<Receipt, ProveError>;
}

/// Native execution plus hash seals. Safe for concurrent use.
#[derive(Debug)]
pub struct SimulatedBackend {
    salt_source: Mutex<StdRng>,
}

impl Default for SimulatedBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl SimulatedBackend {
    pub fn new() -> Self {
        Self {
            salt_source: Mutex::new(StdRng::from_entropy()),
        }
    }

    /// Deterministic salt sequence, for reproducible tests.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            salt_source: Mutex::new(StdRng::seed_from_u64(seed)),
        }
    }

    fn fresh_salt(&self) -> [u8; 16] {
        let mut salt = [0u8; 16];
        self.salt_source
            .lock()
            .unwrap_or_else(|poisoned| poisoned.into_inner())
            .fill_bytes(&mut salt);
        salt
    }
}

impl ReceiptVerifier for SimulatedBackend {
    fn verify(&self, expected: &ImageId, receipt: &Receipt) -> Result<Journal, VerifyError> {
        if receipt.image_id != *expected {
            return Err(VerifyError::ImageIdMismatch {
                expected: *expected,
                actual: receipt.image_id,
            });
        }
        let seal = compute_seal(
            &receipt.image_id,
            &receipt.journal,
            &receipt.salt_commitment,
            &receipt.composition,
        );
        if seal != receipt.seal {
            return Err(VerifyError::SealInvalid);
        }
        if let Composition::ComposedInner { inner } = &receipt.composition {
            for (index, r) in inner.iter().enumerate() {
                self.verify(&r.image_id, r)
                    .map_err(|e| VerifyError::InnerReceiptInvalid {
                        index,
                        source: Box::new(e),
                    })?;
            }
        }
        Ok(receipt.journal.clone())
    }
}

impl ProofBackend for SimulatedBackend {
    fn name(&self) -> &str {
        "simulated-sha256"
    }

    fn prove(
        &self,
        descriptor: &GuestDescriptor,
        input: &GuestInput,
    ) -> Result<Receipt, ProveError> {
        let output = guests::execute(descriptor, input, self)?;
        let image_id = descriptor.image_id();
        let salt_commitment = commit_private_inputs(&self.fresh_salt(), &input.private_bytes());
        let seal = compute_seal(
            &image_id,
            &output.journal,
            &salt_commitment,
            &output.composition,
        );
        Ok(Receipt {
            image_id,
            journal: output.journal,
            seal,
            salt_commitment,
            composition: output.composition,
        })
    }
}

/// Decodes canonical bytes and verifies; decode failures count as rejection.
pub fn verify_bytes(
    verifier: &dyn ReceiptVerifier,
    expected: &ImageId,
    bytes: &[u8],
) -> Result<Journal, VerifyError> {
    let receipt = Receipt::from_bytes(bytes)?;
    verifier.verify(expected, &receipt)
}

/// Why a chain of footprint receipts was rejected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("empty chain")]
    Empty,
    #[error("link {index}: {source}")]
    Receipt { index: usize, source: VerifyError },
    #[error("link {index} does not point at its predecessor")]
    BrokenLinkage { index: usize },
    #[error("link {index} carries an inconsistent running total")]
    InconsistentTotal { index: usize },
    #[error("link record {index} was produced by untrusted guest {image_id}")]
    UntrustedLink { index: usize, image_id: ImageId },
}

/// Verifies only the last receipt of a chain. The guest checked every
/// predecessor when it proved this one, so besides the seal the verifier
/// just needs the accumulated link records to name trusted guests and to add
/// up to the reported total.
pub fn verify_chain_final(
    verifier: &dyn ReceiptVerifier,
    expected: &ImageId,
    trusted_links: &[ImageId],
    receipt: &Receipt,
) -> Result<Journal, ChainError> {
    let journal = verifier
        .verify(expected, receipt)
        .map_err(|source| ChainError::Receipt { index: 0, source })?;
    for (index, link) in journal.links.iter().enumerate() {
        if link.image_id != *expected && !trusted_links.contains(&link.image_id) {
            return Err(ChainError::UntrustedLink {
                index,
                image_id: link.image_id,
            });
        }
    }
    let last = journal.links.last().ok_or(ChainError::Empty)?;
    if last.image_id != *expected || last.emissions != journal.activity_emissions {
        return Err(ChainError::InconsistentTotal { index: 0 });
    }
    let previous = &journal.links[..journal.links.len() - 1];
    match previous.last() {
        None if !journal.is_genesis_linked() => return Err(ChainError::BrokenLinkage { index: 0 }),
        Some(p) if p.image_id != journal.previous_image_id => {
            return Err(ChainError::BrokenLinkage { index: 0 })
        }
        _ => {}
    }
    let sum = previous
        .iter()
        .try_fold(journal.activity_emissions.0, |acc, l| {
            acc.checked_add(l.emissions.0)
        });
    if sum != Some(journal.cumulative_total.0) {
        return Err(ChainError::InconsistentTotal { index: 0 });
    }
    Ok(journal)
}

/// Verifies every receipt of a chain under `expected` and checks that each
/// one points at its predecessor. The first receipt must be GENESIS-linked.
pub fn verify_chain_links(
    verifier: &dyn ReceiptVerifier,
    expected: &ImageId,
    receipts: &[Receipt],
) -> Result<Journal, ChainError> {
    let mut previous: Option<(&Receipt, Journal)> = None;
    for (index, receipt) in receipts.iter().enumerate() {
        let journal = verifier
            .verify(expected, receipt)
            .map_err(|source| ChainError::Receipt { index, source })?;
        let prior_total = match &previous {
            None => {
                if !journal.is_genesis_linked() || receipt.composition != Composition::None {
                    return Err(ChainError::BrokenLinkage { index });
                }
                EmissionQuantity::ZERO
            }
            Some((prev, prev_journal)) => {
                let linked = journal.previous_receipt_digest == prev.claim_digest()
                    && journal.previous_image_id == prev.image_id
                    && receipt.composition
                        == (Composition::ChainLink {
                            previous_journal_digest: prev_journal.digest(),
                        });
                if !linked {
                    return Err(ChainError::BrokenLinkage { index });
                }
                prev_journal.cumulative_total
            }
        };
        if prior_total.0.checked_add(journal.activity_emissions.0)
            != Some(journal.cumulative_total.0)
        {
            return Err(ChainError::InconsistentTotal { index });
        }
        previous = Some((receipt, journal));
    }
    previous.map(|(_, j)| j).ok_or(ChainError::Empty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{EmissionFactor, ResourceAmount};
    use crate::guests::ChainedGuestInput;

    fn chained_descriptor() -> GuestDescriptor {
        GuestDescriptor::new("footprint", "1.0.0", GuestRole::ChainedFootprint)
    }

    fn genesis_receipt(backend: &SimulatedBackend, factor: u64, amount: u64) -> Receipt {
        let input =
            ChainedGuestInput::genesis("a1", EmissionFactor(factor), ResourceAmount(amount));
        backend
            .prove(&chained_descriptor(), &GuestInput::Chained(input))
            .unwrap()
    }

    #[test]
    fn image_id_is_deterministic() {
        let d = chained_descriptor();
        assert_eq!(image_id(&d), image_id(&d.clone()));
    }

    #[test]
    fn image_id_separates_versions() {
        let a = chained_descriptor();
        let mut b = a.clone();
        b.version = "1.0.1".into();
        assert_ne!(a.code_digest(), b.code_digest());
        assert_ne!(image_id(&a), image_id(&b));
    }

    #[test]
    fn image_id_survives_serialization_round_trip() {
        let d = chained_descriptor();
        let back: GuestDescriptor =
            serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(image_id(&d), image_id(&back));
    }

    #[test]
    fn prove_genesis_link() {
        let backend = SimulatedBackend::with_seed(1);
        let r = genesis_receipt(&backend, 2000, 3);
        assert_eq!(r.journal.cumulative_total, EmissionQuantity(6000));
        assert_eq!(r.journal.activity_emissions, EmissionQuantity(6000));
        assert!(r.journal.is_genesis_linked());
        assert_eq!(r.composition, Composition::None);
    }

    #[test]
    fn fresh_salt_per_proof() {
        let backend = SimulatedBackend::with_seed(1);
        let a = genesis_receipt(&backend, 2000, 3);
        let b = genesis_receipt(&backend, 2000, 3);
        assert_eq!(a.journal, b.journal);
        assert_ne!(a.seal, b.seal);
        assert_ne!(a.salt_commitment, b.salt_commitment);
    }

    #[test]
    fn verify_round_trip_and_wrong_id() {
        let backend = SimulatedBackend::with_seed(2);
        let r = genesis_receipt(&backend, 7, 11);
        let id = chained_descriptor().image_id();
        assert_eq!(backend.verify(&id, &r).unwrap(), r.journal);
        let other = GuestDescriptor::new("other", "1.0.0", GuestRole::ChainedFootprint).image_id();
        assert!(matches!(
            backend.verify(&other, &r),
            Err(VerifyError::ImageIdMismatch { .. })
        ));
    }

    #[test]
    fn every_single_bit_flip_in_journal_is_rejected() {
        let backend = SimulatedBackend::with_seed(3);
        let r = genesis_receipt(&backend, 2000, 3);
        let id = r.image_id;
        let bytes = r.to_bytes();
        let journal = r.journal_byte_range();
        for byte in journal {
            for bit in 0..8 {
                let mut t = bytes.clone();
                t[byte] ^= 1 << bit;
                assert!(
                    verify_bytes(&backend, &id, &t).is_err(),
                    "flip at byte {byte} bit {bit} accepted"
                );
            }
        }
    }

    #[test]
    fn tampered_journal_value_reports_seal_invalid() {
        let backend = SimulatedBackend::with_seed(4);
        let mut r = genesis_receipt(&backend, 2000, 3);
        r.journal.cumulative_total = EmissionQuantity(1);
        assert_eq!(
            backend.verify(&r.image_id.clone(), &r),
            Err(VerifyError::SealInvalid)
        );
    }

    #[test]
    fn receipt_binary_and_json_round_trip() {
        let backend = SimulatedBackend::with_seed(5);
        let r = genesis_receipt(&backend, 12, 34);
        assert_eq!(Receipt::from_bytes(&r.to_bytes()).unwrap(), r);
        let json = r.to_json();
        assert!(json.contains("image_id_hex") && json.contains("seal_hex"));
        assert_eq!(Receipt::from_json(&json).unwrap(), r);
    }

    #[test]
    fn size_independent_of_magnitudes() {
        let backend = SimulatedBackend::with_seed(6);
        let small = genesis_receipt(&backend, 1, 1);
        let large = genesis_receipt(&backend, u32::MAX as u64, u32::MAX as u64 / 2);
        assert_eq!(receipt_size(&small), receipt_size(&large));
    }

    #[test]
    fn trailing_and_bad_magic_rejected() {
        let backend = SimulatedBackend::with_seed(7);
        let mut bytes = genesis_receipt(&backend, 1, 1).to_bytes();
        bytes.push(0);
        assert_eq!(
            Receipt::from_bytes(&bytes),
            Err(DecodeError::TrailingBytes(1))
        );
        bytes.pop();
        bytes[0] = b'X';
        assert_eq!(Receipt::from_bytes(&bytes), Err(DecodeError::BadMagic));
    }

    fn linked_receipt(backend: &SimulatedBackend, prev: &Receipt, factor: u64) -> Receipt {
        let input = ChainedGuestInput::linked(
            "a2",
            EmissionFactor(factor),
            ResourceAmount(1),
            chained_descriptor().image_id(),
            prev.clone(),
        );
        backend
            .prove(&chained_descriptor(), &GuestInput::Chained(input))
            .unwrap()
    }

    #[test]
    fn claim_digest_ignores_salt() {
        let a = genesis_receipt(&SimulatedBackend::with_seed(1), 5, 5);
        let b = genesis_receipt(&SimulatedBackend::with_seed(2), 5, 5);
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.claim_digest(), b.claim_digest());
    }

    #[test]
    fn chain_checks() {
        let backend = SimulatedBackend::with_seed(9);
        let id = chained_descriptor().image_id();
        let first = genesis_receipt(&backend, 10, 3);
        let second = linked_receipt(&backend, &first, 7);
        let chain = [first.clone(), second.clone()];

        assert_eq!(
            verify_chain_links(&backend, &id, &chain)
                .unwrap()
                .cumulative_total
                .0,
            37
        );
        assert_eq!(
            verify_chain_final(&backend, &id, &[], &second)
                .unwrap()
                .cumulative_total
                .0,
            37
        );
        assert_eq!(
            verify_chain_links(&backend, &id, &[]),
            Err(ChainError::Empty)
        );
        assert_eq!(
            verify_chain_links(&backend, &id, std::slice::from_ref(&second)),
            Err(ChainError::BrokenLinkage { index: 0 })
        );
        let other_first = genesis_receipt(&backend, 11, 3);
        assert_eq!(
            verify_chain_links(&backend, &id, &[other_first, second.clone()]),
            Err(ChainError::BrokenLinkage { index: 1 })
        );
        let rogue = ImageId([7; 32]);
        assert!(matches!(
            verify_chain_final(&backend, &rogue, &[], &second),
            Err(ChainError::Receipt { .. })
        ));
    }
}
