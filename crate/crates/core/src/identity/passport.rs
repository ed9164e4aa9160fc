//! Synthetic ePassports: Data Groups 1, 11 and 15, a Document Security
//! Object over their hashes, and passive authentication against a CSCA store.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::cert::{Certificate, TrustStore};
use super::dates;
use super::hierarchy::{Authority, DocumentSigner};
use super::{FailureCode, IdentityError, ValidationReport};
use crate::codec::Encoder;
use crate::crypto::{PublicKey, SecretKey, Signature};
use crate::hash::Digest;
use crate::Timestamp;

const SOD_DOMAIN: &[u8] = b"zkpoi/sod/v1";

pub const DG1: u8 = 1;
pub const DG11: u8 = 11;
pub const DG15: u8 = 15;

/// ICAO 9303 check digit: weights 7, 3, 1 repeating; digits keep their
/// value, `A`..`Z` map to 10..35 and the filler `<` to 0.
pub fn check_digit(field: &str) -> char {
    const WEIGHTS: [u32; 3] = [7, 3, 1];
    let sum: u32 = field
        .bytes()
        .enumerate()
        .map(|(i, b)| {
            let v = match b {
                b'0'..=b'9' => (b - b'0') as u32,
                b'A'..=b'Z' => (b - b'A') as u32 + 10,
                b'a'..=b'z' => (b - b'a') as u32 + 10,
                _ => 0,
            };
            v * WEIGHTS[i % 3]
        })
        .sum();
    char::from_digit(sum % 10, 10).unwrap()
}

/// The fourteen Data Elements of Data Group 1 (the MRZ contents).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dg1 {
    pub document_type: String,
    pub issuing_state: String,
    pub name: String,
    pub document_number: String,
    pub document_number_check: char,
    pub nationality: String,
    pub date_of_birth: String,
    pub date_of_birth_check: char,
    pub sex: char,
    pub date_of_expiry: String,
    pub date_of_expiry_check: char,
    pub optional_data: String,
    pub optional_data_check: char,
    pub composite_check: char,
}

impl Dg1 {
    pub fn new(holder: &HolderFields, issuing_state: &str) -> Dg1 {
        let mut dg1 = Dg1 {
            document_type: holder.document_type.clone(),
            issuing_state: issuing_state.to_string(),
            name: holder.name.clone(),
            document_number: holder.document_number.clone(),
            document_number_check: check_digit(&holder.document_number),
            nationality: holder.nationality.clone(),
            date_of_birth: holder.date_of_birth.clone(),
            date_of_birth_check: check_digit(&holder.date_of_birth),
            sex: holder.sex,
            date_of_expiry: holder.date_of_expiry.clone(),
            date_of_expiry_check: check_digit(&holder.date_of_expiry),
            optional_data: holder.optional_data.clone(),
            optional_data_check: check_digit(&holder.optional_data),
            composite_check: '0',
        };
        dg1.composite_check = check_digit(&dg1.composite_field());
        dg1
    }

    /// Document number, DOB, expiry and optional data with their check digits.
    fn composite_field(&self) -> String {
        format!(
            "{}{}{}{}{}{}{}{}",
            self.document_number,
            self.document_number_check,
            self.date_of_birth,
            self.date_of_birth_check,
            self.date_of_expiry,
            self.date_of_expiry_check,
            self.optional_data,
            self.optional_data_check
        )
    }

    pub fn check_digits_ok(&self) -> bool {
        check_digit(&self.document_number) == self.document_number_check
            && check_digit(&self.date_of_birth) == self.date_of_birth_check
            && check_digit(&self.date_of_expiry) == self.date_of_expiry_check
            && check_digit(&self.optional_data) == self.optional_data_check
            && check_digit(&self.composite_field()) == self.composite_check
            && dates::is_valid_yymmdd(&self.date_of_birth)
            && dates::is_valid_yymmdd(&self.date_of_expiry)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        let ch = |c: char| c.to_string();
        e.str(&self.document_type)
            .str(&self.issuing_state)
            .str(&self.name)
            .str(&self.document_number)
            .str(&ch(self.document_number_check))
            .str(&self.nationality)
            .str(&self.date_of_birth)
            .str(&ch(self.date_of_birth_check))
            .str(&ch(self.sex))
            .str(&self.date_of_expiry)
            .str(&ch(self.date_of_expiry_check))
            .str(&self.optional_data)
            .str(&ch(self.optional_data_check))
            .str(&ch(self.composite_check));
        e.finish()
    }
}

/// Holder data supplied at issuance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HolderFields {
    pub document_type: String,
    pub name: String,
    pub document_number: String,
    pub nationality: String,
    /// `YYMMDD`
    pub date_of_birth: String,
    pub sex: char,
    /// `YYMMDD`
    pub date_of_expiry: String,
    pub optional_data: String,
    pub personal_number: Option<String>,
}

impl HolderFields {
    pub fn new(name: &str, document_number: &str, nationality: &str, expiry: Timestamp) -> Self {
        HolderFields {
            document_type: "P".into(),
            name: name.into(),
            document_number: document_number.into(),
            nationality: nationality.into(),
            date_of_birth: "800101".into(),
            sex: 'X',
            date_of_expiry: dates::to_yymmdd(expiry),
            optional_data: String::new(),
            personal_number: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecurityObject {
    pub dg_hashes: BTreeMap<u8, Digest>,
    pub signature: Signature,
}

impl SecurityObject {
    pub fn signed_bytes(dg_hashes: &BTreeMap<u8, Digest>) -> Vec<u8> {
        let mut e = Encoder::new();
        e.fixed(SOD_DOMAIN).u32(dg_hashes.len() as u32);
        for (group, h) in dg_hashes {
            e.u8(*group).fixed(h.as_bytes());
        }
        e.finish()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EPassport {
    pub dg1: Dg1,
    pub dg11_personal_number: Option<String>,
    pub dg15_public_key: Option<PublicKey>,
    pub sod: SecurityObject,
    pub dsc: Certificate,
    /// Active Authentication key held inside the chip.
    #[serde(skip)]
    pub(crate) aa_secret: Option<SecretKey>,
}

impl PartialEq for EPassport {
    fn eq(&self, other: &Self) -> bool {
        self.dg1 == other.dg1
            && self.dg11_personal_number == other.dg11_personal_number
            && self.dg15_public_key == other.dg15_public_key
            && self.sod == other.sod
            && self.dsc == other.dsc
    }
}

impl EPassport {
    /// Hashes of every populated data group.
    pub fn data_group_hashes(&self) -> BTreeMap<u8, Digest> {
        let mut out = BTreeMap::new();
        out.insert(DG1, Digest::framed(&[b"DG1", &self.dg1.to_bytes()]));
        if let Some(pn) = &self.dg11_personal_number {
            out.insert(DG11, Digest::framed(&[b"DG11", pn.as_bytes()]));
        }
        if let Some(pk) = &self.dg15_public_key {
            out.insert(DG15, Digest::framed(&[b"DG15", &pk.0]));
        }
        out
    }

    pub fn has_active_authentication(&self) -> bool {
        self.aa_secret.is_some() && self.dg15_public_key.is_some()
    }

    /// A copy without the chip-resident secret.
    pub fn public_copy(&self) -> EPassport {
        EPassport { aa_secret: None, ..self.clone() }
    }

    pub fn expiry(&self) -> Option<Timestamp> {
        dates::expiry_end_of_day(&self.dg1.date_of_expiry)
    }
}

pub fn issue_epassport(
    csca: &Authority,
    dsc: &DocumentSigner,
    holder: &HolderFields,
    with_aa: bool,
    seed: u64,
) -> Result<EPassport, IdentityError> {
    if dsc.cert.issuer_name != csca.name || !dsc.cert.verify_issued_by(&csca.cert.subject_public_key) {
        return Err(IdentityError::DscNotSignedByCsca);
    }
    let aa_secret = with_aa.then(|| {
        let material =
            Digest::framed(&[b"aa", &seed.to_be_bytes(), &dsc.seq.to_be_bytes(), holder.document_number.as_bytes()]);
        SecretKey::from_seed(material.as_bytes())
    });
    let mut passport = EPassport {
        dg1: Dg1::new(holder, &dsc.country),
        dg11_personal_number: holder.personal_number.clone(),
        dg15_public_key: aa_secret.as_ref().map(SecretKey::public_key),
        sod: SecurityObject { dg_hashes: BTreeMap::new(), signature: Signature([0u8; 64]) },
        dsc: dsc.cert.clone(),
        aa_secret,
    };
    let hashes = passport.data_group_hashes();
    passport.sod.signature = dsc.key.sign(&SecurityObject::signed_bytes(&hashes));
    passport.sod.dg_hashes = hashes;
    Ok(passport)
}

/// Passive authentication: data group hashes, SOD signature, DSC against a
/// trusted CSCA, then time validity.
pub fn validate_epassport(p: &EPassport, csca_store: &TrustStore, now: Timestamp) -> ValidationReport {
    let reject = |code| ValidationReport::rejected(code, now);

    if p.data_group_hashes() != p.sod.dg_hashes {
        return reject(FailureCode::HashMismatch);
    }
    if !p.dg1.check_digits_ok() {
        return reject(FailureCode::GrammarError);
    }
    let sod_bytes = SecurityObject::signed_bytes(&p.sod.dg_hashes);
    if !p.dsc.subject_public_key.verify(&sod_bytes, &p.sod.signature) {
        return reject(FailureCode::BadSignature);
    }
    let Some(csca) =
        csca_store.roots_named(&p.dsc.issuer_name).find(|root| p.dsc.verify_issued_by(&root.subject_public_key))
    else {
        return reject(FailureCode::NotTrusted);
    };
    let doc_valid = p.expiry().is_some_and(|exp| now <= exp);
    if !p.dsc.valid_at(now) || !csca.valid_at(now) || !doc_valid {
        return reject(FailureCode::Expired);
    }
    ValidationReport::accepted(now)
}
