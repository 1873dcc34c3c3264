//! Helpers shared by the property and acceptance suites.
#![allow(dead_code)]

use flowground::planner::scripted::{Entry, ProposeResponse, RankResponse, Scenario};
use flowground::planner::Proposal;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random scripted search tree. Every node above `depth` proposes between
/// one and `max_actions` actions; every rollout is ranked.
pub struct Tree {
    pub scenario: Scenario,
    pub depth: usize,
    pub actions: usize,
    pub rollouts: usize,
}

pub fn random_tree(seed: u64, max_depth: usize, max_actions: usize, max_rollouts: usize) -> Tree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.random_range(1..=max_depth);
    let rollouts = rng.random_range(1..=max_rollouts);
    let mut scenario = Scenario {
        goal: format!("tree {seed}"),
        ..Scenario::default()
    };
    let mut level = vec![scenario.initial_observation.clone()];
    for _ in 0..depth {
        let mut next = Vec::new();
        for obs in &level {
            let n = rng.random_range(1..=max_actions);
            let proposals: Vec<Proposal> = (0..n)
                .map(|i| Proposal {
                    action: format!("a{i}"),
                    track_object: "obj".into(),
                    context: None,
                })
                .collect();
            for p in &proposals {
                for k in 0..rollouts {
                    let child = format!("{obs}|{}#{k}", p.action);
                    let success = rng.random_bool(0.6);
                    // Integer thousandths, inside the validated ranges so the
                    // caps never apply; ties are common on purpose.
                    let score = if success {
                        rng.random_range(300..=1000) as f64 / 1000.0
                    } else {
                        rng.random_range(0..=200) as f64 / 1000.0
                    };
                    scenario.rank.push(Entry::new(
                        child.clone(),
                        RankResponse {
                            score,
                            success,
                            reason: String::new(),
                        },
                    ));
                    next.push(child);
                }
            }
            scenario
                .propose
                .push(Entry::new(obs.clone(), ProposeResponse { proposals }));
        }
        level = next;
    }
    Tree {
        scenario,
        depth,
        actions: max_actions,
        rollouts,
    }
}

/// Best leaf score by walking every branch of the tree.
pub fn enumerate_best(tree: &Tree) -> f64 {
    fn walk(sc: &Scenario, obs: &str, remaining: usize, rollouts: usize) -> f64 {
        if remaining == 0 {
            return sc
                .rank
                .iter()
                .find(|e| e.observation == obs)
                .map_or(0.0, |e| e.single.response.score);
        }
        let props = &sc
            .propose
            .iter()
            .find(|e| e.observation == obs)
            .expect("inner node proposes")
            .single
            .response
            .proposals;
        let mut best = f64::NEG_INFINITY;
        for p in props {
            for k in 0..rollouts {
                best = best.max(walk(
                    sc,
                    &format!("{obs}|{}#{k}", p.action),
                    remaining - 1,
                    rollouts,
                ));
            }
        }
        best
    }
    walk(
        &tree.scenario,
        &tree.scenario.initial_observation,
        tree.depth,
        tree.rollouts,
    )
}

/// Number of candidates in the widest level of the tree.
pub fn widest_level(tree: &Tree) -> usize {
    tree.scenario
        .rank
        .iter()
        .fold(vec![0usize; tree.depth + 1], |mut acc, e| {
            acc[e.observation.matches('|').count()] += 1;
            acc
        })
        .into_iter()
        .max()
        .unwrap_or(0)
}
