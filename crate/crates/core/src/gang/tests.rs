use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::*;
use crate::canon::Blob;
use crate::clock::ManualClock;
use crate::enclave::{BootParams, Enclave, ProviderConfig};

fn platform() -> KeyPair {
    KeyPair::from_seed([100; 32])
}

fn provider() -> ProviderPublic {
    ProviderPublic {
        endpoint: "mock://provider".into(),
        provider_public: KeyPair::from_seed([101; 32]).public(),
        model_name: "mock-1".into(),
    }
}

fn template(task: &str, min_security_version: u64) -> GangTemplate {
    GangTemplate {
        task_description: task.into(),
        image_template_hash: Digest([5; 32]),
        model_provider: provider(),
        logging_policy: LoggingPolicy::default(),
        trade_policy: TradePolicy::default(),
        code_reference: "gangs/clean-table".into(),
        min_security_version,
    }
}

fn boot_for(t: &GangTemplate, slot_id: u64, seed: u8, security_version: u64, rng: &mut ChaCha20Rng) -> Enclave {
    Enclave::boot(
        BootParams {
            image_template_hash: t.image_template_hash,
            task_description_hash: t.task_hash(),
            slot_id,
            owner_seed: [seed; 32],
            security_version,
            provider: ProviderConfig {
                public: t.model_provider.clone(),
                credential: Blob::from("secret"),
            },
            resale_policy: t.trade_policy.resale,
        },
        rng,
        Arc::new(ManualClock::new(0, 1)),
    )
}

struct Fixture {
    reg: GangRegistry,
    key: KeyPair,
    rng: ChaCha20Rng,
    now: u64,
}

impl Fixture {
    fn new() -> Self {
        Fixture {
            reg: GangRegistry::default(),
            key: platform(),
            rng: ChaCha20Rng::seed_from_u64(1),
            now: 1_000,
        }
    }

    fn run(&mut self, events: Result<Vec<GangEvent>, GangError>) -> Result<Vec<GangEvent>, GangError> {
        let events = events?;
        for e in &events {
            self.reg.apply(e);
        }
        Ok(events)
    }

    fn create(&mut self, t: &GangTemplate) -> Digest {
        let ev = self.reg.plan_create(t.clone(), self.now);
        self.run(ev).unwrap();
        t.gang_id()
    }

    fn reserve(&mut self, gang: &Digest) -> SlotReservation {
        let nonce = Nonce(self.rng.gen());
        let ev = self.reg.plan_reserve_slot(gang, nonce, self.now);
        match self.run(ev).unwrap().remove(0) {
            GangEvent::SlotReserved { gang_id, slot_id, nonce, .. } => SlotReservation { gang_id, slot_id, nonce },
            other => panic!("{other:?}"),
        }
    }

    fn register(&mut self, gang: &Digest, report: &AttestationReport, nonce: &Nonce) -> Result<MembershipCertificate, GangError> {
        let ev = self.reg.plan_register(gang, report, nonce, self.now, &self.key);
        match self.run(ev)?.remove(0) {
            GangEvent::Certified { cert, .. } => Ok(cert),
            other => panic!("{other:?}"),
        }
    }

    fn join(&mut self, t: &GangTemplate, seed: u8, version: u64) -> (Enclave, MembershipCertificate) {
        let gang = t.gang_id();
        let r = self.reserve(&gang);
        let e = boot_for(t, r.slot_id, seed, version, &mut self.rng);
        let cert = self.register(&gang, &e.attest(r.nonce), &r.nonce).unwrap();
        (e, cert)
    }

    fn reregister(&mut self, old: &MembershipCertificate, report_of: impl FnOnce(Nonce) -> AttestationReport) -> Result<MembershipCertificate, GangError> {
        let nonce = Nonce(self.rng.gen());
        let ev = self.reg.plan_open_reregistration(old, nonce, self.now);
        self.run(ev)?;
        let report = report_of(nonce);
        let ev = self.reg.plan_reregister(old, &report, &nonce, self.now, &self.key);
        match self.run(ev)?.remove(0) {
            GangEvent::Recertified { cert, .. } => Ok(cert),
            other => panic!("{other:?}"),
        }
    }
}

#[test]
fn create_lists_gang_and_rejects_duplicates() {
    let mut f = Fixture::new();
    let t = template("clean the table", 1);
    let id = f.create(&t);
    assert_eq!(f.reg.gang(&id).unwrap().members.len(), 0);
    assert_eq!(f.reg.plan_create(t.clone(), 5), Err(GangError::DuplicateGang(id)));
    let mut blank = t.clone();
    blank.code_reference = " ".into();
    assert!(matches!(f.reg.plan_create(blank, 5), Err(GangError::IncompleteTemplate(_))));
}

#[test]
fn gang_id_matches_canonical_hash_and_tracks_task_text() {
    let t = template("clean the table", 1);
    let bytes = crate::canon::to_canonical(&t).unwrap();
    let mut h = <sha2::Sha256 as sha2::Digest>::new();
    sha2::Digest::update(&mut h, b"CM1:CERT\0");
    sha2::Digest::update(&mut h, &bytes[..]);
    let expected: [u8; 32] = sha2::Digest::finalize(h).into();
    assert_eq!(t.gang_id().0, expected);
    assert_ne!(t.gang_id(), template("clean the table!", 1).gang_id());
}

#[test]
fn honest_registration_issues_valid_certificate() {
    let mut f = Fixture::new();
    let t = template("clean the table", 1);
    let gang = f.create(&t);
    let (e, cert) = f.join(&t, 7, 1);
    assert_eq!(f.reg.gang(&gang).unwrap().members.len(), 1);
    assert_eq!(cert.agent_public, e.agent_public());
    assert!(verify_certificate(&cert, &t, &f.key.public()));
    assert!(f.reg.verify_membership(&cert, &f.key.public()));
    assert_eq!(cert.genesis_inputs(&t), e.genesis_inputs());
    let mut forged = cert.clone();
    forged.platform_signature.0[0] ^= 1;
    assert!(!f.reg.verify_membership(&forged, &f.key.public()));
    assert!(!verify_certificate(&cert, &t, &KeyPair::from_seed([1; 32]).public()));
}

#[test]
fn report_for_other_gang_is_a_measurement_mismatch() {
    let mut f = Fixture::new();
    let a = template("task A", 1);
    let b = template("task B", 1);
    f.create(&a);
    let gb = f.create(&b);
    let r = f.reserve(&gb);
    let e = boot_for(&a, r.slot_id, 7, 1, &mut f.rng);
    assert!(matches!(
        f.register(&gb, &e.attest(r.nonce), &r.nonce),
        Err(GangError::MeasurementMismatch(_))
    ));
}

#[test]
fn security_version_policy_matrix() {
    for minimum in 0..4u64 {
        for version in 0..4u64 {
            let mut f = Fixture::new();
            let t = template("task", minimum);
            let gang = f.create(&t);
            let r = f.reserve(&gang);
            let e = boot_for(&t, r.slot_id, 7, version, &mut f.rng);
            let got = f.register(&gang, &e.attest(r.nonce), &r.nonce);
            if version >= minimum {
                assert!(got.is_ok());
            } else {
                assert_eq!(got, Err(GangError::SecurityVersion { got: version, minimum }));
            }
        }
    }
}

#[test]
fn stale_nonces_are_rejected() {
    let mut f = Fixture::new();
    let t = template("task", 1);
    let gang = f.create(&t);
    let r = f.reserve(&gang);
    let e = boot_for(&t, r.slot_id, 7, 1, &mut f.rng);
    let report = e.attest(r.nonce);
    f.register(&gang, &report, &r.nonce).unwrap();
    assert_eq!(f.register(&gang, &report, &r.nonce), Err(GangError::StaleNonce));
    assert_eq!(f.register(&gang, &report, &Nonce([0; 16])), Err(GangError::StaleNonce));

    let r2 = f.reserve(&gang);
    let e2 = boot_for(&t, r2.slot_id, 8, 1, &mut f.rng);
    f.now += SESSION_TTL_MS + 1;
    assert_eq!(f.register(&gang, &e2.attest(r2.nonce), &r2.nonce), Err(GangError::StaleNonce));

    let r3 = f.reserve(&gang);
    let e3 = boot_for(&t, r3.slot_id, 9, 1, &mut f.rng);
    assert_eq!(f.register(&gang, &e3.attest(Nonce([1; 16])), &r3.nonce), Err(GangError::NonceMismatch));
}

#[test]
fn reusing_a_slot_is_rejected() {
    let mut f = Fixture::new();
    let t = template("task", 1);
    let gang = f.create(&t);
    let (first, _) = f.join(&t, 7, 1);
    let r = f.reserve(&gang);
    // A second agent booted for the already-taken slot 0.
    let e = boot_for(&t, first.measurement().slot_id, 8, 1, &mut f.rng);
    assert!(matches!(
        f.register(&gang, &e.attest(r.nonce), &r.nonce),
        Err(GangError::MeasurementMismatch(_))
    ));
}

#[test]
fn reregistration_supersedes_and_checks_owner_and_version() {
    let mut f = Fixture::new();
    let t = template("task", 1);
    f.create(&t);
    let (_, old) = f.join(&t, 7, 1);
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let patched = boot_for(&t, old.slot_id, 7, 2, &mut rng);
    let new = f.reregister(&old, |n| patched.attest(n)).unwrap();
    assert_eq!(new.security_version, 2);
    assert_eq!(
        f.reg.certificate_status(&old, &f.key.public()),
        CertStatus::Superseded { by: new.id() }
    );
    assert!(f.reg.verify_membership(&new, &f.key.public()));
    assert_eq!(f.reregister(&old, |n| patched.attest(n)), Err(GangError::NotCurrent));

    let other_owner = boot_for(&t, new.slot_id, 8, 3, &mut rng);
    assert_eq!(f.reregister(&new, |n| other_owner.attest(n)), Err(GangError::OwnerMismatch));
    let same_version = boot_for(&t, new.slot_id, 7, 2, &mut rng);
    assert_eq!(
        f.reregister(&new, |n| same_version.attest(n)),
        Err(GangError::VersionNotIncreased { old: 2, new: 2 })
    );
}

#[test]
fn bulletin_flags_exact_version() {
    let mut f = Fixture::new();
    let t = template("task", 1);
    let gang = f.create(&t);
    let (_, v1) = f.join(&t, 7, 1);
    let (_, v2) = f.join(&t, 8, 2);
    let ev = f.reg.plan_publish_vulnerability(1, "side channel in v1", f.now, &f.key);
    f.run(Ok(ev)).unwrap();
    let notice = &f.reg.bulletin()[0];
    assert!(notice.verify(&f.key.public()));
    assert_eq!(f.reg.certificate_status(&v1, &f.key.public()), CertStatus::Vulnerable { notice: 0 });
    assert!(!f.reg.verify_membership(&v1, &f.key.public()));
    assert!(f.reg.verify_membership(&v2, &f.key.public()));
    let list = f.reg.member_list(&gang, f.now, &f.key).unwrap();
    assert_eq!(list.members[0].vulnerability, Some(0));
    assert_eq!(list.members[1].vulnerability, None);
}

#[test]
fn member_list_is_signed_and_framed() {
    let mut f = Fixture::new();
    let t = template("task", 1);
    let gang = f.create(&t);
    f.join(&t, 7, 1);
    f.join(&t, 8, 1);
    let list = f.reg.member_list(&gang, 77, &f.key).unwrap();
    assert_eq!(list.version, 2);
    assert!(list.verify(&f.key.public()));
    let bytes = list.to_container().unwrap();
    assert_eq!(&bytes[..4], b"CMML");
    let back = MemberList::from_container(&bytes).unwrap();
    assert!(back.verify(&f.key.public()));
    let mut tampered = back;
    tampered.members.pop();
    assert!(!tampered.verify(&f.key.public()));
}

#[test]
fn registration_gate_matrix() {
    // task hash x image hash x nonce freshness x version floor
    let mut issued = Vec::new();
    for task_ok in [true, false] {
        for image_ok in [true, false] {
            for fresh in [true, false] {
                for version_ok in [true, false] {
                    let mut f = Fixture::new();
                    let t = template("task", 2);
                    let gang = f.create(&t);
                    let r = f.reserve(&gang);
                    let mut booted_for = t.clone();
                    if !task_ok {
                        booted_for.task_description = "other task".into();
                    }
                    if !image_ok {
                        booted_for.image_template_hash = Digest([6; 32]);
                    }
                    let e = boot_for(&booted_for, r.slot_id, 7, if version_ok { 2 } else { 1 }, &mut f.rng);
                    let nonce = if fresh {
                        r.nonce
                    } else {
                        f.now += SESSION_TTL_MS + 1;
                        r.nonce
                    };
                    if f.register(&gang, &e.attest(nonce), &nonce).is_ok() {
                        issued.push((task_ok, image_ok, fresh, version_ok));
                    }
                }
            }
        }
    }
    assert_eq!(issued, vec![(true, true, true, true)]);
}

#[test]
fn randomized_sessions_keep_registry_invariants() {
    let mut f = Fixture::new();
    let t = template("task", 1);
    let gang = f.create(&t);
    let mut certs: Vec<(u8, MembershipCertificate)> = Vec::new();
    let mut rng = ChaCha20Rng::seed_from_u64(42);
    for round in 0..60u8 {
        match rng.gen_range(0..4) {
            0 | 1 => {
                let (_, c) = f.join(&t, round, rng.gen_range(1..4));
                certs.push((round, c));
            }
            2 if !certs.is_empty() => {
                let i = rng.gen_range(0..certs.len());
                let (seed, old) = certs[i].clone();
                let mut r2 = ChaCha20Rng::seed_from_u64(round as u64);
                let patched = boot_for(&t, old.slot_id, seed, old.security_version + rng.gen_range(0..2), &mut r2);
                if let Ok(c) = f.reregister(&old, |n| patched.attest(n)) {
                    certs[i] = (seed, c);
                }
            }
            _ => {
                // abandoned reservation
                f.reserve(&gang);
            }
        }
    }
    let g = f.reg.gang(&gang).unwrap();
    for m in &g.members {
        assert!(verify_certificate(&m.cert, &t, &f.key.public()));
    }
    let mut current: Vec<u64> = g.current_members().map(|c| c.slot_id).collect();
    let n = current.len();
    current.dedup();
    assert_eq!(current.len(), n, "one current certificate per slot");
    let first_certs: Vec<u64> = {
        let mut seen = std::collections::BTreeSet::new();
        g.members.iter().filter(|m| seen.insert(m.cert.slot_id)).map(|m| m.cert.slot_id).collect()
    };
    assert!(first_certs.windows(2).all(|w| w[0] < w[1]), "slots increase in registration order");
    for slot in first_certs {
        let versions: Vec<u64> = g.members.iter().filter(|m| m.cert.slot_id == slot).map(|m| m.cert.security_version).collect();
        assert!(versions.windows(2).all(|w| w[0] < w[1]), "supersession is monotone");
    }
}
