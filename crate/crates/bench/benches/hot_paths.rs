//! Benchmarks for the three hot paths: policy episodes, network
//! forward/backward passes, and small exact solves.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use vtlab_core::domain::{generate_instance, RngStream, ScenarioConfig};
use vtlab_core::marl::{n_actions, state_dim, Env, Transition};
use vtlab_core::policies::PolicyKind;
use vtlab_core::qnet::{td_loss, NetworkParams};
use vtlab_core::sim::run_episode;
use vtlab_core::train::act;
use vtlab_core::{solve_exact, SolveLimits};

fn bench_episode(c: &mut Criterion) {
    let config = ScenarioConfig::new(5, 10, 100.0, 60.0);
    let instance = generate_instance(&config, 7).unwrap();
    c.bench_function("episode_nvp_5x10", |b| {
        b.iter(|| run_episode(&instance, PolicyKind::Nvp, 1.0, 7).unwrap())
    });
    c.bench_function("episode_lnvp_5x10", |b| {
        b.iter(|| run_episode(&instance, PolicyKind::Lnvp, 1.0, 7).unwrap())
    });
}

fn collect_transitions(len: usize) -> (NetworkParams, NetworkParams, Vec<Transition>) {
    let scenario = ScenarioConfig::new(3, 5, 5.0, 5.0);
    let streams = RngStream::new(5);
    let mut init_rng = streams.init();
    let mut explore = streams.exploration();
    let params = NetworkParams::standard(state_dim(3, 5), 3, n_actions(5), &mut init_rng);
    let target = params.clone();
    let mut transitions = Vec::with_capacity(len);
    let mut episode = 0u64;
    while transitions.len() < len {
        let instance = generate_instance(&scenario, episode).unwrap();
        let mut env = Env::new(&instance, scenario.zeta, 5, episode);
        let mut state = env.state();
        let mut masks = env.masks();
        while !env.is_done() && transitions.len() < len {
            let chosen = act(&params, &state, &masks, 0.5, &mut explore);
            let outcome = env.step(&chosen);
            let next_state = env.state();
            let next_masks = env.masks();
            transitions.push(Transition {
                state,
                actions: outcome.executed,
                team_reward: outcome.team_reward,
                next_state: next_state.clone(),
                next_masks: next_masks.clone(),
                done: outcome.done,
            });
            state = next_state;
            masks = next_masks;
        }
        episode += 1;
    }
    (params, target, transitions)
}

fn bench_td_loss(c: &mut Criterion) {
    let (params, target, transitions) = collect_transitions(64);
    let batch: Vec<&Transition> = transitions.iter().collect();
    c.bench_function("td_loss_batch64", |b| {
        b.iter(|| td_loss(&params, &target, &batch, 0.99))
    });
}

fn bench_exact(c: &mut Criterion) {
    let config = ScenarioConfig::new(2, 6, 20.0, 15.0);
    let instance = generate_instance(&config, 3).unwrap();
    c.bench_function("solve_exact_2x6", |b| {
        b.iter_batched(
            || instance.clone(),
            |inst| solve_exact(&inst, &SolveLimits::default()).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, bench_episode, bench_td_loss, bench_exact);
criterion_main!(benches);
