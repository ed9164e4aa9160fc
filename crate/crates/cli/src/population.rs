//! Synthetic identity populations shared by the identity, registration and
//! pipeline scenarios.

use serde::{Deserialize, Serialize};
use zkpoi_core::identity::{
    generate_ca_hierarchy, issue_epassport, Document, DocumentSigner, Hierarchy, HolderFields, Validity, CA_NOT_AFTER,
    CA_NOT_BEFORE,
};
use zkpoi_core::Timestamp;

use crate::CliError;

const YEAR: i64 = 365 * 86_400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationConfig {
    pub countries: usize,
    pub intermediates_per_root: usize,
    pub cards: usize,
    pub passports: usize,
    /// Share of passports whose chip supports active authentication.
    pub active_auth_fraction: f64,
    /// Validation time for every document.
    pub now: Timestamp,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        PopulationConfig {
            countries: 3,
            intermediates_per_root: 1,
            cards: 20,
            passports: 10,
            active_auth_fraction: 0.5,
            now: 1_700_000_000,
        }
    }
}

impl PopulationConfig {
    pub fn check(&self, path: &str) -> Result<(), CliError> {
        if self.countries == 0 {
            return Err(CliError::invalid(&format!("{path}.countries"), "at least one country is required"));
        }
        if !(0.0..=1.0).contains(&self.active_auth_fraction) {
            return Err(CliError::invalid(&format!("{path}.active_auth_fraction"), "must lie in [0, 1]"));
        }
        if self.now < CA_NOT_BEFORE + YEAR || self.now > CA_NOT_AFTER - 6 * YEAR {
            return Err(CliError::invalid(&format!("{path}.now"), "outside the synthetic CA validity window"));
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.cards + self.passports
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocKind {
    Card,
    Passport,
}

#[derive(Debug, Clone)]
pub struct Holder {
    pub kind: DocKind,
    pub name: String,
    pub unique_id: String,
    pub country: usize,
    pub has_aa: bool,
    pub passphrase: String,
}

/// Issued documents plus the PKI that signed them.
#[derive(Debug, Clone)]
pub struct Population {
    pub hierarchy: Hierarchy,
    pub signers: Vec<DocumentSigner>,
    pub holders: Vec<Holder>,
    pub documents: Vec<Document>,
    pub now: Timestamp,
    seed: u64,
    renewals: u64,
}

fn card_validity(now: Timestamp) -> Validity {
    Validity::new(now - YEAR, now + 5 * YEAR)
}

/// Cards come first, then passports; holder `i` lives in country
/// `i % countries`. Documents are fully determined by config and seed.
pub fn generate_population(cfg: &PopulationConfig, seed: u64) -> Population {
    let mut hierarchy = generate_ca_hierarchy(cfg.countries, cfg.intermediates_per_root, seed);
    let signers: Vec<DocumentSigner> =
        hierarchy.roots.iter_mut().map(|r| r.issue_dsc(Validity::new(CA_NOT_BEFORE, CA_NOT_AFTER))).collect();
    let mut pop =
        Population { hierarchy, signers, holders: Vec::new(), documents: Vec::new(), now: cfg.now, seed, renewals: 0 };
    let aa_count = (cfg.passports as f64 * cfg.active_auth_fraction).round() as usize;
    for i in 0..cfg.size() {
        let country = i % cfg.countries;
        let kind = if i < cfg.cards { DocKind::Card } else { DocKind::Passport };
        let has_aa = match kind {
            DocKind::Card => true,
            DocKind::Passport => i - cfg.cards < aa_count,
        };
        let holder = Holder {
            kind,
            name: format!("HOLDER<<N{i:06}"),
            unique_id: format!("{}{i:09}", zkpoi_core::identity::country_code(country)),
            country,
            has_aa,
            passphrase: format!("pass-{seed}-{i}"),
        };
        let doc = pop.issue(&holder, issuer_for(&pop.hierarchy, country, 0), &format!("D{i:08}"));
        pop.holders.push(holder);
        pop.documents.push(doc);
    }
    pop
}

fn issuer_for(h: &Hierarchy, country: usize, offset: usize) -> usize {
    let per_country = h.issuers.len() / h.roots.len();
    let base = country * per_country;
    if per_country > 1 {
        base + offset % per_country
    } else {
        (base + offset) % h.issuers.len()
    }
}

impl Population {
    fn issue(&mut self, holder: &Holder, issuer: usize, document_number: &str) -> Document {
        match holder.kind {
            DocKind::Card => Document::Card(self.hierarchy.issuers[issuer].issue_identity_cert(
                &holder.name,
                &holder.unique_id,
                card_validity(self.now),
            )),
            DocKind::Passport => {
                let csca = &self.hierarchy.roots[holder.country];
                let dsc = &self.signers[holder.country];
                let mut fields = HolderFields::new(
                    &holder.name,
                    document_number,
                    &zkpoi_core::identity::country_code(holder.country),
                    self.now + 5 * YEAR,
                );
                fields.personal_number = Some(holder.unique_id.clone());
                let p = issue_epassport(csca, dsc, &fields, holder.has_aa, self.seed)
                    .expect("the signer was issued by this CSCA");
                Document::Passport(p)
            }
        }
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// A fresh document for holder `i` with the same name and unique id:
    /// a card from the next issuing authority, or a passport with a new
    /// document number.
    pub fn renew(&mut self, i: usize) -> Document {
        self.renewals += 1;
        let holder = self.holders[i].clone();
        let issuer = issuer_for(&self.hierarchy, holder.country, 1);
        self.issue(&holder, issuer, &format!("R{:08}", self.renewals))
    }
}
