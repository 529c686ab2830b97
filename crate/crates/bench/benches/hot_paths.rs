use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use rulecritic::critic::StateValue;
use rulecritic::eval::{value_heatmap, EgoTemplate, GridSpec};
use rulecritic::rules::{RuleId, RuleSeries, World};
use rulecritic_bench::Fixture;

fn rules(c: &mut Criterion) {
    let fx = Fixture::new(1);
    let ctx = fx.ctx();
    let mut ep = fx.episode();
    ep.drive(&ctx, Some(&fx.critic)).unwrap();
    let world = World::new(&fx.scenario, &ep.track, &fx.rules).unwrap();
    for rule in [RuleId::G1, RuleId::I6, RuleId::I2] {
        c.bench_function(&format!("rule_series/{rule}"), |b| {
            b.iter(|| RuleSeries::compute(rule, black_box(&world)).unwrap())
        });
    }
}

fn planner(c: &mut Criterion) {
    let fx = Fixture::new(2);
    let ctx = fx.ctx();
    let ep = fx.episode();
    // The first step of a fresh episode always plans.
    c.bench_function("planner/replan_with_critic", |b| {
        b.iter(|| {
            let mut e = ep.clone();
            e.step(&ctx, Some(&fx.critic as &dyn StateValue)).unwrap()
        })
    });
}

fn critic(c: &mut Criterion) {
    let fx = Fixture::new(3);
    let ctx = fx.ctx();
    let ep = fx.episode();
    let graph = fx.critic.graph_of(&ep.view(&ctx)).unwrap();
    c.bench_function("critic/build_graph", |b| b.iter(|| fx.critic.graph_of(black_box(&ep.view(&ctx))).unwrap()));
    c.bench_function("critic/forward", |b| b.iter(|| fx.critic.net.value(black_box(&graph)).unwrap()));
    c.bench_function("critic/forward_backward", |b| {
        b.iter(|| fx.critic.net.value_gradient(black_box(&graph), 1.0).unwrap())
    });
}

fn heatmap(c: &mut Criterion) {
    let fx = Fixture::new(4);
    let template = EgoTemplate::new(25.0);
    c.bench_function("heatmap/value", |b| {
        b.iter(|| value_heatmap(&fx.critic, &fx.scenario, 50, &template, GridSpec::default()).unwrap())
    });
}

criterion_group!(
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = rules, planner, critic, heatmap
);
criterion_main!(benches);
