use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use std::sync::Arc;

use parl_core::orchestrator::{rollout_episode, FEATURE_DIM};
use parl_core::task_gen::gen_wide_search;
use parl_core::{
    critical_steps, parl_reward, rl_gradient, EnvSettings, LinearPolicy, PARLConfig, PolicyParams, RLConfig,
    RolloutBatch, SerialPolicy, SwarmPolicy, VocabConfig, Vocabulary,
};

fn bench_metrics(c: &mut Criterion) {
    let task = Arc::new(gen_wide_search(1, 64, 2).unwrap());
    let settings = Arc::new(EnvSettings::default());
    let trace = rollout_episode(&SwarmPolicy::new(16), task, 1, settings).unwrap();
    c.bench_function("critical_steps", |b| b.iter(|| critical_steps(black_box(&trace.stages))));
}

fn bench_rollout(c: &mut Criterion) {
    let settings = Arc::new(EnvSettings::default());
    let mut g = c.benchmark_group("rollout_episode");
    for n in [16u32, 64] {
        let task = Arc::new(gen_wide_search(2, n, 1).unwrap());
        g.bench_with_input(BenchmarkId::new("serial", n), &task, |b, t| {
            b.iter(|| rollout_episode(&SerialPolicy, t.clone(), 3, settings.clone()).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("swarm8", n), &task, |b, t| {
            b.iter(|| rollout_episode(&SwarmPolicy::new(8), t.clone(), 3, settings.clone()).unwrap())
        });
    }
    g.finish();
}

fn bench_gradient(c: &mut Criterion) {
    let vocab = Vocabulary::from_config(&VocabConfig::default()).unwrap();
    let params = PolicyParams::zeros(FEATURE_DIM, vocab.len());
    let policy = LinearPolicy::new(&params, &vocab).unwrap();
    let settings = Arc::new(EnvSettings::default());
    let parl = PARLConfig::default();
    let mut groups = Vec::new();
    for i in 0..8u64 {
        let task = Arc::new(gen_wide_search(i, 12, 1).unwrap());
        let traces: Vec<_> =
            (0..8).map(|s| rollout_episode(&policy, task.clone(), s, settings.clone()).unwrap()).collect();
        let rewards: Vec<f64> = traces.iter().map(|t| parl_reward(&task, t, &parl, 0).composite).collect();
        groups.push(RolloutBatch::group_from_traces(&task.task_id, &traces, &rewards, &vocab).unwrap());
    }
    let batch = RolloutBatch { groups };
    let cfg = RLConfig::default();
    c.bench_function("rl_gradient_8x8", |b| b.iter(|| rl_gradient(black_box(&params), &batch, &cfg).unwrap()));
}

criterion_group!(benches, bench_metrics, bench_rollout, bench_gradient);
criterion_main!(benches);
