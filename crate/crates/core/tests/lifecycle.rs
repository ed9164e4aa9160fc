//! Issue documents, register their holders, and mine an epoch with the
//! registered keys.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use zkpoi_core::attestation::{mutual_attest, AttestationPolicy, AttestationSession, EnclaveIdentity};
use zkpoi_core::credential::{
    build_offline_bundle, build_registration_bundle, derive_keypair, AaMode, CredentialParams, KdfParams,
};
use zkpoi_core::identity::{
    country_code, generate_ca_hierarchy, issue_epassport, Document, HolderFields, Validity, CA_NOT_AFTER, CA_NOT_BEFORE,
};
use zkpoi_core::registry::{import_log, replay_log, EntryStatus, Registry, RegistryConfig, RegistryError};
use zkpoi_core::shardgame::{run_receipt_protocol, Behavior, Class, GameParams, GossipTopology, Miner};
use zkpoi_core::{Digest, Timestamp};

const NOW: Timestamp = 1_700_000_000;
const YEAR: i64 = 365 * 86_400;

fn params() -> CredentialParams {
    CredentialParams {
        kdf: KdfParams { iterations: 8, output_len: 32 },
        aa_less_kdf: KdfParams { iterations: 32, output_len: 32 },
        ..CredentialParams::default()
    }
}

struct Client {
    rng: ChaCha20Rng,
    policy: AttestationPolicy,
}

impl Client {
    fn session(&mut self) -> AttestationSession {
        mutual_attest(
            EnclaveIdentity::new("client", 1),
            EnclaveIdentity::new("verifier", 1),
            &self.policy,
            &mut self.rng,
        )
        .expect("pinned identities attest")
    }
}

fn mode(doc: &Document) -> AaMode {
    if doc.public_key().is_some() {
        AaMode::Full
    } else {
        AaMode::Absent
    }
}

fn documents() -> (zkpoi_core::identity::Hierarchy, Vec<Document>) {
    let mut h = generate_ca_hierarchy(3, 1, 21);
    let signers: Vec<_> = h.roots.iter_mut().map(|r| r.issue_dsc(Validity::new(CA_NOT_BEFORE, CA_NOT_AFTER))).collect();
    let mut docs = Vec::new();
    for i in 0..6 {
        let v = Validity::new(NOW - YEAR, NOW + YEAR);
        docs.push(Document::Card(h.issuers[i % 3].issue_identity_cert(&format!("CARD<<{i}"), &format!("C{i:05}"), v)));
    }
    for i in 0..6 {
        let country = i % 3;
        let mut fields =
            HolderFields::new(&format!("PASS<<{i}"), &format!("P{i:07}"), &country_code(country), NOW + YEAR);
        fields.personal_number = Some(format!("P{i:05}"));
        let p = issue_epassport(&h.roots[country], &signers[country], &fields, i % 2 == 0, 21).expect("own signer");
        docs.push(Document::Passport(p));
    }
    (h, docs)
}

#[test]
fn registered_holders_mine_an_epoch() {
    let (h, docs) = documents();
    let config = RegistryConfig { credential: params(), ..RegistryConfig::default() };
    let chain = config.blockchain_id.clone();
    let mut registry = Registry::new(config, h.store.clone(), [4u8; 32]);
    let mut client = Client {
        rng: ChaCha20Rng::seed_from_u64(2),
        policy: AttestationPolicy::pinned(EnclaveIdentity::new("client", 1), EnclaveIdentity::new("verifier", 1)),
    };

    let mut miners = Vec::new();
    for (i, doc) in docs.iter().enumerate() {
        let pass = format!("passphrase-{i}");
        let bundle = build_registration_bundle(doc, &pass, &chain, &h.store, NOW, mode(doc), &params()).unwrap();
        let mut s = client.session();
        let sealed = s.seal(&bundle.to_bytes());
        let entry = registry.register(Some(&s), &sealed, 0, NOW).unwrap().clone();

        let keys = derive_keypair(&pass, &doc.doc_hash(), params().kdf).unwrap();
        assert_eq!(keys.pk, entry.pk);
        let behavior = if i < 9 { Behavior::Honest } else { Behavior::LazyDefector };
        miners.push(Miner::new(i, entry.pseudonym.digest, keys.secret_key().clone(), behavior));
    }
    assert_eq!(registry.online_count(), docs.len());

    // A second passphrase for the same document maps to the same identity.
    let again = build_registration_bundle(&docs[0], "other", &chain, &h.store, NOW, AaMode::Full, &params()).unwrap();
    let mut s = client.session();
    let sealed = s.seal(&again.to_bytes());
    assert_eq!(registry.register(Some(&s), &sealed, 0, NOW).err(), Some(RegistryError::DuplicateIdentity));

    let game = GameParams {
        k: 2,
        n: miners.len(),
        c: 3,
        tau: 2,
        r: 1.0,
        br: 100.0,
        c_f: 2.0,
        c_v: 0.1,
        p: 1.0,
        txs_per_shard: 20,
    };
    let randomness = Digest::framed(&[b"lifecycle"]);
    let out = run_receipt_protocol(&game, &miners, &randomness, GossipTopology::Complete, 3);
    for (m, o) in miners.iter().zip(&out.miners) {
        match m.behavior {
            Behavior::Honest => {
                assert_eq!(o.class, Class::Cooperator);
                assert!(o.payoff > 0.0);
            }
            _ => assert_eq!(o.payoff, -game.p),
        }
    }

    // The last holder leaves; the exported log replays to the same state.
    let last = docs.len() - 1;
    let off = build_offline_bundle(
        &docs[last],
        &format!("passphrase-{last}"),
        &chain,
        &h.store,
        NOW,
        mode(&docs[last]),
        &params(),
    )
    .unwrap();
    let mut s = client.session();
    let sealed = s.seal(&off.to_bytes());
    assert_eq!(registry.take_offline(Some(&s), &sealed, 1, NOW).unwrap().status, EntryStatus::Offline);

    let replayed = replay_log(&import_log(&registry.export_log()).unwrap());
    assert_eq!(replayed.len(), docs.len());
    assert_eq!(replayed.values().filter(|s| **s == EntryStatus::Offline).count(), 1);
    assert_eq!(registry.online_count(), docs.len() - 1);
}
