//! Sequential vs rayon dispatch of the per-agent work inside a step.
//!
//! The two modes are bit-identical in output; this measures where the
//! parallel dispatch starts paying for itself as the fleet grows. On a
//! single-core machine every rayon row is pure dispatch overhead.

use criterion::{criterion_group, criterion_main, Criterion};

use coopmatch::controllers::ControlLaw;
use coopmatch::exec::Parallelism;
use coopmatch::graph::Digraph;
use coopmatch::plant::{AgentModel, LeaderInputPolicy};
use coopmatch::sim::{run_batch, ControllerConfig, InitSpec, OutputPaths, Scenario, Simulation};
use coopmatch::synthesis::LeaderModel;

/// Every follower hears the leader; neighbors exchange along an
/// undirected chain. Leader attachment keeps the smallest eigenvalue of
/// `H` at 1 or above, so the coupling gain stays mild at any fleet size.
fn fleet_scenario(n_agents: usize, law: ControlLaw) -> Scenario {
    let mut edges = Vec::with_capacity(3 * n_agents);
    for i in 1..=n_agents {
        edges.push((0usize, i, 1.0));
    }
    for i in 1..n_agents {
        edges.push((i, i + 1, 1.0));
        edges.push((i + 1, i, 1.0));
    }
    let agents = (0..n_agents)
        .map(|i| match i % 3 {
            0 => AgentModel::damping_oscillator(),
            1 => AgentModel::fitzhugh_nagumo(1.0, 1.0, 1.0).unwrap(),
            _ => AgentModel::van_der_pol(1.0),
        })
        .collect();
    Scenario {
        name: format!("fleet_{n_agents}"),
        graph: Digraph::from_edges(n_agents + 1, &edges).unwrap(),
        leader: LeaderModel::double_integrator(5.0),
        input_policy: LeaderInputPolicy::zero(),
        agents,
        controller: ControllerConfig::new(law),
        init: InitSpec::seeded(42),
        dt: 1e-3,
        t_final: 0.25,
        output: OutputPaths::default(),
    }
}

fn bench_step_loop(c: &mut Criterion) {
    let mut group = c.benchmark_group("step_loop");
    group.sample_size(10);
    for n in [4usize, 32, 96] {
        let scn = fleet_scenario(n, ControlLaw::ReducedOrder);
        let seq = Simulation::new(&scn).unwrap().with_parallelism(Parallelism::Sequential);
        let par = Simulation::new(&scn).unwrap().with_parallelism(Parallelism::Rayon);
        // Same trajectory either way; only throughput differs.
        assert_eq!(seq.run().unwrap(), par.run().unwrap());
        group.bench_function(format!("sequential_{n}"), |b| {
            b.iter(|| seq.run().unwrap())
        });
        group.bench_function(format!("rayon_{n}"), |b| b.iter(|| par.run().unwrap()));
    }
    group.finish();
}

fn bench_seed_batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("seed_batch");
    group.sample_size(10);
    let scenarios: Vec<Scenario> = (0..8)
        .map(|seed| {
            let mut s = fleet_scenario(8, ControlLaw::Adaptive);
            s.init = InitSpec::seeded(seed);
            s
        })
        .collect();
    group.bench_function("sequential_8x", |b| {
        b.iter(|| run_batch(&scenarios, Parallelism::Sequential))
    });
    group.bench_function("rayon_8x", |b| {
        b.iter(|| run_batch(&scenarios, Parallelism::Rayon))
    });
    group.finish();
}

criterion_group!(benches, bench_step_loop, bench_seed_batch);
criterion_main!(benches);
