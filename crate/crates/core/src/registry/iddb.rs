use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::crypto;
use crate::hash::Digest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdStatus {
    Active,
    /// Taken offline; still blocks re-registration unless policy allows it.
    Tombstoned,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdRecord {
    #[serde(with = "hex_bytes")]
    pub ciphertext: Vec<u8>,
    pub status: IdStatus,
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        hex::decode(String::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// Unique identifiers stored under a key that only the attested verifier
/// holds. Lookups go through a keyed tag, so membership cannot be tested
/// without the key; the host sees tags and ciphertexts only.
#[derive(Clone)]
pub struct EncryptedIdDb {
    db_key: [u8; 32],
    records: BTreeMap<Digest, IdRecord>,
}

impl std::fmt::Debug for EncryptedIdDb {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EncryptedIdDb").field("records", &self.records.len()).finish_non_exhaustive()
    }
}

impl EncryptedIdDb {
    pub fn new(db_key: [u8; 32]) -> Self {
        EncryptedIdDb { db_key, records: BTreeMap::new() }
    }

    fn tag(&self, unique_id: &str) -> Digest {
        crypto::keyed_tag(&self.db_key, &[b"uid-tag", unique_id.as_bytes()])
    }

    pub fn status(&self, unique_id: &str) -> Option<IdStatus> {
        self.records.get(&self.tag(unique_id)).map(|r| r.status)
    }

    pub fn insert(&mut self, unique_id: &str) {
        let tag = self.tag(unique_id);
        let mut nonce = [0u8; 12];
        nonce.copy_from_slice(&tag.0[..12]);
        let ciphertext = crypto::seal(&self.db_key, nonce, tag.as_bytes(), unique_id.as_bytes());
        self.records.insert(tag, IdRecord { ciphertext, status: IdStatus::Active });
    }

    pub fn tombstone(&mut self, unique_id: &str) {
        let tag = self.tag(unique_id);
        if let Some(r) = self.records.get_mut(&tag) {
            r.status = IdStatus::Tombstoned;
        }
    }

    pub fn remove(&mut self, unique_id: &str) {
        let tag = self.tag(unique_id);
        self.records.remove(&tag);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// What the host computer can see.
    pub fn host_view(&self) -> &BTreeMap<Digest, IdRecord> {
        &self.records
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insert_tombstone_remove() {
        let mut db = EncryptedIdDb::new([3u8; 32]);
        assert_eq!(db.status("X1"), None);
        db.insert("X1");
        assert_eq!(db.status("X1"), Some(IdStatus::Active));
        db.tombstone("X1");
        assert_eq!(db.status("X1"), Some(IdStatus::Tombstoned));
        db.remove("X1");
        assert!(db.is_empty());
    }

    #[test]
    fn other_key_cannot_test_membership() {
        let mut db = EncryptedIdDb::new([3u8; 32]);
        db.insert("X1");
        let other = EncryptedIdDb { db_key: [4u8; 32], records: db.records.clone() };
        assert_eq!(other.status("X1"), None);
    }

    #[test]
    fn host_view_hides_plaintext() {
        let mut db = EncryptedIdDb::new([5u8; 32]);
        db.insert("PLAINTEXT-ID-123");
        let dump = serde_json::to_string(db.host_view()).unwrap();
        assert!(!dump.contains("PLAINTEXT-ID-123"));
        assert!(!dump.contains(&hex::encode("PLAINTEXT-ID-123")));
    }
}
