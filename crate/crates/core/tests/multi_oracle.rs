mod common;

use tcsc::multi_assign::{joint_brute_force, msqm_serial, Objective, JOINT_CAP};
use tcsc::single_assign::{brute_force_optimal, BRUTE_FORCE_CAP};
use tcsc::Error;

use common::{rng, tiny};

#[test]
fn msqm_tiny_instances_meet_the_ratio() {
    let mut worst = f64::INFINITY;
    for seed in 0..150 {
        let mut r = rng(90_000 + seed);
        let n = 1 + (seed as usize % 3);
        let m = 3 + (seed as usize % 4);
        let t = tiny(&mut r, n, m, 12 / n);
        let out = msqm_serial(&t.tasks, &t.pool, t.budget, t.k, 2).unwrap();
        let (plan, opt) =
            joint_brute_force(&t.tasks, &t.pool, t.budget, t.k, Objective::Sum, JOINT_CAP).unwrap();
        assert!(plan.recomputed_spent() <= t.budget);
        assert!(plan.has_unique_claims());
        assert!(
            out.q_sum() <= opt + 1e-9,
            "seed {seed}: greedy above optimum"
        );
        if opt > 0.0 {
            worst = worst.min(out.q_sum() / opt);
        }
    }
    assert!(worst >= 0.3935, "worst ratio {worst}");
}

#[test]
fn joint_oracle_agrees_with_single_oracle_on_one_task() {
    for seed in 0..60 {
        let mut r = rng(91_000 + seed);
        let t = tiny(&mut r, 1, 8, 8);
        let (_, single) =
            brute_force_optimal(&t.tasks[0], &t.pool, t.budget, t.k, BRUTE_FORCE_CAP).unwrap();
        for obj in [Objective::Sum, Objective::Min] {
            let (_, joint) =
                joint_brute_force(&t.tasks, &t.pool, t.budget, t.k, obj, JOINT_CAP).unwrap();
            assert!(
                (joint - single).abs() < 1e-12,
                "seed {seed}: {joint} vs {single}"
            );
        }
    }
}

#[test]
fn joint_oracle_enforces_its_cap() {
    let mut r = rng(5);
    let t = tiny(&mut r, 3, 12, 12);
    let pairs = t.tasks.len()
        * t.pool
            .iter()
            .map(|w| w.slot)
            .collect::<std::collections::BTreeSet<_>>()
            .len();
    let res = joint_brute_force(&t.tasks, &t.pool, t.budget, t.k, Objective::Sum, JOINT_CAP);
    if pairs > JOINT_CAP {
        assert!(matches!(res, Err(Error::InstanceTooLarge { .. })));
    } else {
        assert!(res.is_ok());
    }
}
