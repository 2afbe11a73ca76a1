use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use certmem_core::canon::{Blob, Digest, PublicIdentity, Salt};
use certmem_core::ledger::{
    verify_many, DisclosurePolicy, GenesisInputs, InteractionLog, InteractionRecord, VerifyJob, FIELD_COUNT,
};
use certmem_core::Exec;

fn log(seed: u64, n: u64) -> InteractionLog {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut log = InteractionLog::new(GenesisInputs {
        gang_config_hash: Digest([seed as u8; 32]),
        agent: PublicIdentity([1; 32]),
    });
    for seq_no in 0..n {
        let mut salts = [Salt([0; 16]); FIELD_COUNT];
        for s in &mut salts {
            rng.fill_bytes(&mut s.0);
        }
        let mut prompt = vec![0u8; 512];
        rng.fill_bytes(&mut prompt);
        let mut response = vec![0u8; 1024];
        rng.fill_bytes(&mut response);
        log.append(InteractionRecord {
            seq_no,
            prompt: Blob(prompt),
            response: Blob(response),
            model_name: "mock-1".into(),
            token_in: 128,
            token_out: 256,
            timestamp: seq_no,
            field_salts: salts,
        })
        .unwrap();
    }
    log
}

fn bench(c: &mut Criterion) {
    let logs: Vec<InteractionLog> = (0..32).map(|i| log(i, 256)).collect();
    let selection: Vec<u64> = (0..256).step_by(4).collect();
    let jobs: Vec<VerifyJob> = logs
        .iter()
        .map(|l| {
            let (artifact, proof) = l.build_artifact(&selection, &DisclosurePolicy::open_all(), None).unwrap();
            VerifyJob {
                artifact,
                proof,
                expected_root: l.root(),
                genesis: *l.genesis_inputs(),
                attachment: None,
            }
        })
        .collect();

    let mut g = c.benchmark_group("verify_many");
    for exec in [Exec::Sequential, Exec::Parallel] {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| verify_many(exec, &jobs))
        });
    }
    g.finish();

    let big = log(99, 4096);
    let mut g = c.benchmark_group("audit");
    for exec in [Exec::Sequential, Exec::Parallel] {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| big.audit(exec))
        });
    }
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench
}
criterion_main!(benches);
