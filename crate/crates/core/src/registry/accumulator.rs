//! A hash-tree accumulator over a sparse Merkle tree of depth 256.
//!
//! Each element is hashed to a 256-bit key that fixes its leaf position.
//! Membership proofs are authentication paths to a filled leaf;
//! non-membership proofs are paths to the empty leaf at the element's
//! position. Anyone holding the root and the public tag can check either
//! kind of proof, so no trusted manager is needed. Proofs go stale whenever
//! the root moves and must be re-fetched with [`Accumulator::witness`].

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::Digest;

const DEPTH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum AccumulatorError {
    #[error("element is already accumulated")]
    AlreadyMember,
    #[error("element is not accumulated")]
    NotMember,
}

/// Sibling hashes from the leaf upwards, with empty-subtree siblings
/// elided and marked in `present`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathProof {
    #[serde(with = "hex_bitmap")]
    present: [u8; DEPTH / 8],
    siblings: Vec<Digest>,
}

pub type Witness = PathProof;
pub type NonMembershipProof = PathProof;

mod hex_bitmap {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        let mut out = [0u8; 32];
        hex::decode_to_slice(&s, &mut out).map_err(serde::de::Error::custom)?;
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct Accumulator {
    tag: Digest,
    /// `empty[h]` is the root of an empty subtree of height `h`.
    empty: Vec<Digest>,
    /// Non-empty nodes keyed by (depth from root, key prefix of that length).
    nodes: HashMap<(u16, Digest), Digest>,
    root: Digest,
    len: usize,
    epoch: u64,
}

fn prefix(key: &Digest, bits: usize) -> Digest {
    let mut out = [0u8; 32];
    let full = bits / 8;
    out[..full].copy_from_slice(&key.0[..full]);
    if !bits.is_multiple_of(8) {
        out[full] = key.0[full] & (0xffu8 << (8 - bits % 8));
    }
    Digest(out)
}

fn flip(mut d: Digest, bit: usize) -> Digest {
    d.0[bit / 8] ^= 0x80 >> (bit % 8);
    d
}

impl Accumulator {
    pub fn generate(seed: u64) -> Accumulator {
        let tag = Digest::framed(&[b"zkpoi/accumulator/v1", &seed.to_be_bytes()]);
        Self::with_tag(tag)
    }

    pub fn with_tag(tag: Digest) -> Accumulator {
        let mut empty = Vec::with_capacity(DEPTH + 1);
        empty.push(Digest::framed(&[b"empty", tag.as_bytes()]));
        for h in 0..DEPTH {
            let e = empty[h];
            empty.push(hash_node(&tag, &e, &e));
        }
        Accumulator { tag, root: empty[DEPTH], empty, nodes: HashMap::new(), len: 0, epoch: 0 }
    }

    /// Public parameter needed, with the root, to check proofs.
    pub fn tag(&self) -> Digest {
        self.tag
    }

    pub fn root(&self) -> Digest {
        self.root
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of updates applied so far.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    fn key(&self, y: &[u8]) -> Digest {
        Digest::framed(&[b"key", self.tag.as_bytes(), y])
    }

    fn leaf(&self, key: &Digest) -> Digest {
        Digest::framed(&[b"leaf", self.tag.as_bytes(), key.as_bytes()])
    }

    fn node(&self, depth: usize, at: &Digest) -> Digest {
        self.nodes.get(&(depth as u16, *at)).copied().unwrap_or(self.empty[DEPTH - depth])
    }

    pub fn contains(&self, y: &[u8]) -> bool {
        self.nodes.contains_key(&(DEPTH as u16, self.key(y)))
    }

    fn set_leaf(&mut self, key: &Digest, filled: bool) {
        let mut cur = if filled { self.leaf(key) } else { self.empty[0] };
        for depth in (0..=DEPTH).rev() {
            let at = prefix(key, depth);
            if cur == self.empty[DEPTH - depth] {
                self.nodes.remove(&(depth as u16, at));
            } else {
                self.nodes.insert((depth as u16, at), cur);
            }
            if depth == 0 {
                break;
            }
            let sibling = self.node(depth, &flip(at, depth - 1));
            cur = if key.bit(depth - 1) {
                hash_node(&self.tag, &sibling, &cur)
            } else {
                hash_node(&self.tag, &cur, &sibling)
            };
        }
        self.root = cur;
        self.epoch += 1;
    }

    fn path(&self, key: &Digest) -> PathProof {
        let mut present = [0u8; DEPTH / 8];
        let mut siblings = Vec::new();
        for (i, depth) in (1..=DEPTH).rev().enumerate() {
            let sib = self.node(depth, &flip(prefix(key, depth), depth - 1));
            if sib != self.empty[DEPTH - depth] {
                present[i / 8] |= 0x80 >> (i % 8);
                siblings.push(sib);
            }
        }
        PathProof { present, siblings }
    }

    pub fn add(&mut self, y: &[u8]) -> Result<Witness, AccumulatorError> {
        let key = self.key(y);
        if self.contains(y) {
            return Err(AccumulatorError::AlreadyMember);
        }
        self.set_leaf(&key, true);
        self.len += 1;
        Ok(self.path(&key))
    }

    pub fn remove(&mut self, y: &[u8]) -> Result<(), AccumulatorError> {
        let key = self.key(y);
        if !self.contains(y) {
            return Err(AccumulatorError::NotMember);
        }
        self.set_leaf(&key, false);
        self.len -= 1;
        Ok(())
    }

    /// Current membership witness for `y`.
    pub fn witness(&self, y: &[u8]) -> Option<Witness> {
        self.contains(y).then(|| self.path(&self.key(y)))
    }

    pub fn non_membership(&self, y: &[u8]) -> Result<NonMembershipProof, AccumulatorError> {
        if self.contains(y) {
            return Err(AccumulatorError::AlreadyMember);
        }
        Ok(self.path(&self.key(y)))
    }

    fn fold(&self, key: &Digest, leaf: Digest, proof: &PathProof) -> Option<Digest> {
        let mut cur = leaf;
        let mut next = proof.siblings.iter();
        for (i, depth) in (1..=DEPTH).rev().enumerate() {
            let sib =
                if proof.present[i / 8] & (0x80 >> (i % 8)) != 0 { *next.next()? } else { self.empty[DEPTH - depth] };
            cur = if key.bit(depth - 1) { hash_node(&self.tag, &sib, &cur) } else { hash_node(&self.tag, &cur, &sib) };
        }
        next.next().is_none().then_some(cur)
    }

    pub fn verify(&self, y: &[u8], w: &Witness) -> bool {
        self.verify_against(&self.root, y, w)
    }

    /// Membership check against an arbitrary published root.
    pub fn verify_against(&self, root: &Digest, y: &[u8], w: &Witness) -> bool {
        let key = self.key(y);
        self.fold(&key, self.leaf(&key), w).as_ref() == Some(root)
    }

    pub fn verify_non_membership(&self, y: &[u8], proof: &NonMembershipProof) -> bool {
        let key = self.key(y);
        self.fold(&key, self.empty[0], proof) == Some(self.root)
    }
}

fn hash_node(tag: &Digest, left: &Digest, right: &Digest) -> Digest {
    Digest::framed(&[b"node", tag.as_bytes(), left.as_bytes(), right.as_bytes()])
}
