use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use agr_core::models::{Architecture, PolicyModel, RewardModel, Vocabulary, BOS, EOS};
use agr_core::training::{ranking_loss_grad, remax_step, PreferenceExample, RlConfig, TokenScenario};
use agr_core::{agr_reward, GroupQualityVector, PerGroup, RewardConfig};

fn models() -> (PolicyModel, RewardModel) {
    let words: Vec<String> = (0..60).map(|i| format!("w{i}")).collect();
    let vocab = Vocabulary::new(words).unwrap();
    let arch = Architecture { vocab_size: vocab.len(), embed_dim: 16, hidden_dim: 32, layers: 1, max_len: 64 };
    let policy = PolicyModel::new(vocab.clone(), arch, 1).unwrap();
    let rm = RewardModel::from_policy_backbone(&policy, 2);
    (policy, rm)
}

fn reward(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let qs: Vec<GroupQualityVector> =
        (0..1024).map(|_| GroupQualityVector::new(rng.gen(), rng.gen(), rng.gen()).unwrap()).collect();
    let cfg = RewardConfig::new(0.5).unwrap();
    c.bench_function("agr_reward x1024", |b| b.iter(|| qs.iter().map(|q| agr_reward(black_box(q), &cfg)).sum::<f64>()));
}

fn sampling(c: &mut Criterion) {
    let (policy, _) = models();
    let prompt = vec![BOS, 10, 11, 12, 13];
    let mut seed = 0;
    c.bench_function("sample 32 tokens", |b| {
        b.iter(|| {
            seed += 1;
            policy.sample_response(black_box(&prompt), 32, seed).unwrap()
        })
    });
}

fn ranking(c: &mut Criterion) {
    let (_, rm) = models();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut seq = |n: usize| -> Vec<u32> { (0..n).map(|_| rng.gen_range(4..64)).chain([EOS]).collect() };
    let pairs: Vec<PreferenceExample> =
        (0..16).map(|_| PreferenceExample::new([vec![BOS], seq(6)].concat(), seq(12), seq(12))).collect();
    c.bench_function("ranking loss grad, 16 pairs", |b| b.iter(|| ranking_loss_grad(&rm, black_box(&pairs)).unwrap()));
}

fn remax(c: &mut Criterion) {
    let (policy, rm) = models();
    let scenarios: Vec<TokenScenario> = (0..4)
        .map(|i| TokenScenario {
            id: format!("s{i}"),
            prompts: PerGroup::new(vec![BOS, 4 + i], vec![BOS, 8 + i], vec![BOS, 12 + i]),
        })
        .collect();
    let cfg = RlConfig { lambda: 0.5, max_new_tokens: 16, max_len: 64, ..Default::default() };
    c.bench_function("remax step, 4 scenarios", |b| {
        b.iter(|| remax_step(&policy, &policy, &rm, black_box(&scenarios), &cfg, 3).unwrap())
    });
}

criterion_group!(benches, reward, sampling, ranking, remax);
criterion_main!(benches);
