use std::collections::BTreeMap;

use otb_morph::adversary::{attack_scenario, AttackSetup, AttackSpace, SessionSchedule};
use otb_morph::evaluation::{compute_eer, OperatingPointName};
use otb_morph::experiment::{calibrate, ExperimentConfig};
use otb_morph::transforms::Scenario;

fn mean_final(cfg: &ExperimentConfig, scenario: Scenario, schedule: SessionSchedule, seeds: u64) -> (f64, usize) {
    let world = cfg.build_world().unwrap();
    let (_, eer_t) = compute_eer(&calibrate(cfg, &world, scenario).unwrap()).unwrap();
    let mut thresholds = BTreeMap::new();
    thresholds.insert(OperatingPointName::Eer, eer_t);
    let first = (cfg.calibration.subjects + cfg.simulate.clients) as u64;
    let mut total = 0.0;
    let mut successes = 0;
    for k in 0..seeds {
        let setup = AttackSetup {
            params: cfg.params(scenario),
            policy: cfg.policy(k),
            schedule,
            victim: first + k,
            attacker: first + k + 1,
            thresholds: thresholds.clone(),
            matcher_threshold: eer_t,
        };
        let trace = attack_scenario(&world, &setup).unwrap();
        assert_eq!(trace.points.len(), cfg.attack.iterations + 1);
        total += trace.points.last().unwrap().best_score;
        successes += trace.success_at.contains_key(&OperatingPointName::Eer) as usize;
    }
    (total / seeds as f64, successes)
}

#[test]
fn rotation_slows_the_attack_down() {
    let mut cfg = ExperimentConfig::sample();
    cfg.attack.iterations = 40;
    let rotating = mean_final(&cfg, Scenario::OtbMorph, SessionSchedule::default(), 20);
    let frozen = mean_final(
        &cfg,
        Scenario::OtbMorph,
        SessionSchedule {
            rotation: false,
            ..SessionSchedule::default()
        },
        20,
    );
    assert!(rotating.0 > frozen.0, "rotating {rotating:?} vs frozen {frozen:?}");
    assert!(rotating.1 <= frozen.1, "rotating {rotating:?} vs frozen {frozen:?}");
}

#[test]
fn unprotected_victims_fall_in_most_seeds() {
    let mut cfg = ExperimentConfig::sample();
    cfg.attack.iterations = 40;
    let (_, successes) = mean_final(&cfg, Scenario::Unprotected, SessionSchedule::default(), 20);
    assert!(successes > 10, "{successes}/20");
}

#[test]
fn victim_initialisation_starts_closer() {
    let mut cfg = ExperimentConfig::sample();
    cfg.attack.iterations = 0;
    let other = mean_final(&cfg, Scenario::Unprotected, SessionSchedule::default(), 20).0;
    let own = mean_final(
        &cfg,
        Scenario::Unprotected,
        SessionSchedule {
            victim_init: true,
            ..SessionSchedule::default()
        },
        20,
    )
    .0;
    assert!(own < other, "victim init {own} vs other subject {other}");
}

#[test]
fn image_space_attack_runs_through_the_pipeline() {
    let mut cfg = ExperimentConfig::sample();
    cfg.attack.space = AttackSpace::Image;
    cfg.attack.step_scale = 0.02;
    cfg.attack.iterations = 3;
    for s in Scenario::ALL {
        let (score, _) = mean_final(&cfg, s, SessionSchedule::default(), 2);
        assert!(score.is_finite() && score >= 0.0);
    }
}
