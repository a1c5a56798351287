//! Certification agency: audits a guest descriptor, signs a certificate
//! binding its ImageId to a footprinting standard, and hands out the keys.
//!
//! Signatures are Ed25519 over the canonical encoding of
//! `image_id ‖ standard_id ‖ guest_name ‖ issued_at`. The audit itself is a
//! structural check of the descriptor.

use std::time::{SystemTime, UNIX_EPOCH};

use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{DecodeError, Decoder, Encoder};
use crate::proofsys::{GuestDescriptor, ImageId, Journal, Receipt, ReceiptVerifier, VerifyError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgencyError {
    #[error("malformed descriptor: {0}")]
    MalformedDescriptor(String),
    #[error("certificate is for {certified} but descriptor hashes to {descriptor}")]
    CertificateMismatch {
        certified: ImageId,
        descriptor: ImageId,
    },
    #[error("invalid public key: {0}")]
    InvalidKey(String),
}

/// The agency's signing identity. Only the public half leaves the agency.
#[derive(Debug, Clone)]
pub struct AgencyIdentity {
    signing_key: SigningKey,
}

/// Ed25519 verification key of an agency, distributed out of band.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgencyPublicKey(VerifyingKey);

impl AgencyPublicKey {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0.as_bytes())
    }

    pub fn from_hex(s: &str) -> Result<Self, AgencyError> {
        let mut bytes = [0u8; 32];
        hex::decode_to_slice(s.trim(), &mut bytes)
            .map_err(|e| AgencyError::InvalidKey(e.to_string()))?;
        VerifyingKey::from_bytes(&bytes)
            .map(Self)
            .map_err(|e| AgencyError::InvalidKey(e.to_string()))
    }
}

impl AgencyIdentity {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Self {
            signing_key: SigningKey::generate(rng),
        }
    }

    pub fn from_secret(secret: [u8; 32]) -> Self {
        Self {
            signing_key: SigningKey::from_bytes(&secret),
        }
    }

    pub fn public_key(&self) -> AgencyPublicKey {
        AgencyPublicKey(self.signing_key.verifying_key())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    #[serde(rename = "image_id_hex")]
    pub image_id: ImageId,
    pub standard_id: String,
    pub guest_name: String,
    /// Seconds since the Unix epoch, UTC. Informational only.
    pub issued_at: i64,
    #[serde(rename = "signature_hex", with = "hex_signature")]
    pub signature: [u8; 64],
}

mod hex_signature {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(sig: &[u8; 64], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(sig))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 64], D::Error> {
        let text = String::deserialize(d)?;
        let mut out = [0u8; 64];
        hex::decode_to_slice(text, &mut out).map_err(serde::de::Error::custom)?;
        Ok(out)
    }
}

impl Certificate {
    fn signed_bytes(
        image_id: &ImageId,
        standard_id: &str,
        guest_name: &str,
        issued_at: i64,
    ) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.digest(&image_id.0)
            .str(standard_id)
            .str(guest_name)
            .i64(issued_at);
        enc.finish()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bytes = Self::signed_bytes(
            &self.image_id,
            &self.standard_id,
            &self.guest_name,
            self.issued_at,
        );
        bytes.extend_from_slice(&self.signature);
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(bytes);
        let image_id = ImageId(dec.digest()?);
        let standard_id = dec.str()?.to_string();
        let guest_name = dec.str()?.to_string();
        let issued_at = dec.i64()?;
        let signature = dec.raw(64)?.try_into().unwrap();
        dec.finish()?;
        Ok(Self {
            image_id,
            standard_id,
            guest_name,
            issued_at,
            signature,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }
}

fn audit(descriptor: &GuestDescriptor) -> Result<(), AgencyError> {
    if descriptor.name.trim().is_empty() {
        return Err(AgencyError::MalformedDescriptor("empty guest name".into()));
    }
    if descriptor.version.trim().is_empty() {
        return Err(AgencyError::MalformedDescriptor("empty version".into()));
    }
    if descriptor
        .parameter_schema
        .iter()
        .any(|p| p.trim().is_empty())
    {
        return Err(AgencyError::MalformedDescriptor(
            "blank parameter in schema".into(),
        ));
    }
    Ok(())
}

/// Audits `descriptor` and signs a certificate for it, timestamped now.
pub fn audit_and_certify(
    agency: &AgencyIdentity,
    descriptor: &GuestDescriptor,
    standard_id: &str,
) -> Result<Certificate, AgencyError> {
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0);
    audit_and_certify_at(agency, descriptor, standard_id, now)
}

pub fn audit_and_certify_at(
    agency: &AgencyIdentity,
    descriptor: &GuestDescriptor,
    standard_id: &str,
    issued_at: i64,
) -> Result<Certificate, AgencyError> {
    audit(descriptor)?;
    if standard_id.trim().is_empty() {
        return Err(AgencyError::MalformedDescriptor("empty standard id".into()));
    }
    let image_id = descriptor.image_id();
    let msg = Certificate::signed_bytes(&image_id, standard_id, &descriptor.name, issued_at);
    Ok(Certificate {
        image_id,
        standard_id: standard_id.to_string(),
        guest_name: descriptor.name.clone(),
        issued_at,
        signature: agency.signing_key.sign(&msg).to_bytes(),
    })
}

pub fn validate_certificate(
    cert: &Certificate,
    agency_public_key: &AgencyPublicKey,
    expected_image_id: &ImageId,
) -> bool {
    if cert.image_id != *expected_image_id {
        return false;
    }
    let msg = Certificate::signed_bytes(
        &cert.image_id,
        &cert.standard_id,
        &cert.guest_name,
        cert.issued_at,
    );
    agency_public_key
        .0
        .verify_strict(&msg, &Signature::from_bytes(&cert.signature))
        .is_ok()
}

/// Keys derived from a certificate. Under the ImageId model both are the
/// same value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyPair {
    pub proving_key: ImageId,
    pub verification_key: ImageId,
}

/// What the prover receives from the agency.
#[derive(Debug, Clone)]
pub struct ProverPackage {
    pub descriptor: GuestDescriptor,
    pub proving_key: ImageId,
}

/// Everything a verifier needs: no descriptor, no private data.
#[derive(Debug, Clone)]
pub struct VerifierContext {
    pub verification_key: ImageId,
    pub certificate: Certificate,
    pub agency_public_key: AgencyPublicKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifierError {
    #[error("certificate not valid for the verification key under the trusted agency key")]
    CertificateRejected,
    #[error(transparent)]
    Receipt(#[from] VerifyError),
}

impl VerifierContext {
    /// Checks the certificate, then the receipt against the certified key.
    pub fn verify_receipt(
        &self,
        verifier: &dyn ReceiptVerifier,
        receipt: &Receipt,
    ) -> Result<Journal, VerifierError> {
        if !validate_certificate(
            &self.certificate,
            &self.agency_public_key,
            &self.verification_key,
        ) {
            return Err(VerifierError::CertificateRejected);
        }
        Ok(verifier.verify(&self.verification_key, receipt)?)
    }
}

pub fn distribute_keys(
    cert: &Certificate,
    descriptor: &GuestDescriptor,
) -> Result<KeyPair, AgencyError> {
    let id = descriptor.image_id();
    if cert.image_id != id {
        return Err(AgencyError::CertificateMismatch {
            certified: cert.image_id,
            descriptor: id,
        });
    }
    Ok(KeyPair {
        proving_key: id,
        verification_key: id,
    })
}

/// Splits a certified guest into the prover's and the verifier's artifacts.
pub fn provision(
    agency: &AgencyIdentity,
    cert: &Certificate,
    descriptor: &GuestDescriptor,
) -> Result<(ProverPackage, VerifierContext), AgencyError> {
    let keys = distribute_keys(cert, descriptor)?;
    Ok((
        ProverPackage {
            descriptor: descriptor.clone(),
            proving_key: keys.proving_key,
        },
        VerifierContext {
            verification_key: keys.verification_key,
            certificate: cert.clone(),
            agency_public_key: agency.public_key(),
        },
    ))
}
