use std::sync::Arc;

use mapguide::ambiguity::AmbiguityCost;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mapguide::belief::{build_policy, Execution, Guidance, Planner, PolicyConfig};
use mapguide::dialogue::{AgentKind, Templates};
use mapguide::domain::{bundled, TaskModel};
use mapguide::planning::{BaseCost, Cost, CostFn};
use mapguide::session::{AgentProfile, AgentSettings, GuidanceSpec, LogEvent};
use mapguide::simulation::{episode_seed, simulate_batch, simulate_episode, Column, UserModel};

fn column(map: &str, agent: AgentKind, guidance: GuidanceSpec) -> Column {
    let task = Arc::new(TaskModel::compile(&bundled::by_name(map).unwrap()));
    let settings = AgentSettings { guidance, ..AgentSettings::new(agent) };
    let profile = AgentProfile::new(task, settings, Arc::new(Templates::default())).unwrap();
    Column { label: format!("{map} {guidance:?}"), profile: Arc::new(profile) }
}

const PREDICTIVE: AgentKind = AgentKind::Predictive { delta: Cost::units(1) };

#[test]
fn deviations_follow_the_compliance_rate() {
    let user = UserModel { gamma: 0.9, ..UserModel::default() };
    let col = column("map-2", AgentKind::Responsive, GuidanceSpec::Planner);
    let task = col.profile.task.clone();
    let mut choices = 0usize;
    let mut refusals = 0usize;
    for i in 0..300 {
        let mut rng = ChaCha8Rng::seed_from_u64(episode_seed(11, i));
        let ep = simulate_episode(&col.profile, &user, &mut rng).unwrap();
        // Walk the accepted actions again to see where the user had a real
        // alternative to the instruction; only there can a refusal show.
        let (mut exec, _) = Execution::start(col.profile.planner.clone(), Guidance::Planner).unwrap();
        for r in &ep.log {
            if let LogEvent::Accepted { action, complied } = &r.event {
                if exec.options().len() > 1 {
                    choices += 1;
                }
                refusals += usize::from(!complied);
                exec.step(task.classify(action).unwrap()).unwrap();
            }
        }
        assert_eq!(ep.stats.recovery, ep.log.iter().filter(|r| matches!(r.event, LogEvent::Accepted { complied: false, .. })).count());
    }
    let p = 1.0 - user.gamma;
    let mean = choices as f64 * p;
    let sd = (choices as f64 * p * (1.0 - p)).sqrt();
    assert!((refusals as f64 - mean).abs() < 3.0 * sd, "{refusals} refusals over {choices} choices, expected {mean:.0}");
}

#[test]
fn policy_guidance_matches_online_planning() {
    let user = UserModel::default();
    for map in ["map-1", "map-4"] {
        for agent in [AgentKind::Responsive, PREDICTIVE] {
            let a = simulate_batch(&[column(map, agent, GuidanceSpec::Planner)], 100, &user, 5).unwrap();
            let b = simulate_batch(&[column(map, agent, GuidanceSpec::Policy { budget: 2 })], 100, &user, 5).unwrap();
            assert_eq!(a.metrics, b.metrics, "{map} {agent:?}");
        }
    }
}

#[test]
fn compliant_users_walk_the_nominal_route() {
    let user = UserModel { gamma: 1.0, hesitation: 0.0, ..UserModel::default() };
    for (name, _) in bundled::study_maps() {
        let out = simulate_batch(&[column(name, AgentKind::Responsive, GuidanceSpec::Planner)], 20, &user, 3).unwrap();
        let lengths: Vec<usize> = out.metrics[0].iter().map(|m| m.length).collect();
        assert!(lengths.windows(2).all(|w| w[0] == w[1]), "{name}: {lengths:?}");
        for (m, (s, _)) in out.metrics[0].iter().zip(&out.stats[0]) {
            assert_eq!(m.moves + m.pickups, m.length);
            assert_eq!(s.recovery, 0);
        }
    }
}

#[test]
fn counted_actions_never_exceed_the_route() {
    let user = UserModel { gamma: 0.7, ..UserModel::default() };
    let out = simulate_batch(&[column("map-3", PREDICTIVE, GuidanceSpec::Planner)], 200, &user, 8).unwrap();
    for m in &out.metrics[0] {
        assert!(m.moves + m.pickups <= m.length);
        assert!(m.elaborate <= m.length * 8);
        assert!(m.pickups >= 1);
    }
}

#[test]
fn every_episode_log_ends_at_the_goal() {
    let user = UserModel::default();
    let col = column("fig1", PREDICTIVE, GuidanceSpec::Planner);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ep = simulate_episode(&col.profile, &user, &mut rng).unwrap();
    assert!(matches!(&ep.log.last().unwrap().event, LogEvent::SessionEnd { reason } if reason == "goal"));
    assert!(ep.log.windows(2).all(|w| w[0].timestamp_ms <= w[1].timestamp_ms));
}

#[test]
fn policy_sizes_are_pinned() {
    // Node counts for budgets 0, 1, 2; a change here means expansion changed.
    let expected = [
        ("map-1", [36, 286, 1375], [38, 320, 1448]),
        ("map-2", [134, 712, 2152], [109, 570, 1637]),
        ("map-3", [40, 363, 1617], [33, 307, 1331]),
        ("map-4", [167, 1243, 4232], [102, 562, 1908]),
    ];
    for (name, responsive, predictive) in expected {
        let task = Arc::new(TaskModel::compile(&bundled::by_name(name).unwrap()));
        let costs: [(bool, Arc<dyn CostFn>, [usize; 3]); 2] = [
            (false, Arc::new(BaseCost), responsive),
            (true, Arc::new(AmbiguityCost::new(&task, Cost::units(1))), predictive),
        ];
        for (initiative, cost, want) in costs {
            let planner = Planner::new(task.clone(), cost);
            for (budget, &n) in want.iter().enumerate() {
                let policy = build_policy(&planner, "agent", PolicyConfig { budget, initiative, ..PolicyConfig::default() }).unwrap();
                assert_eq!(policy.len(), n, "{name} initiative={initiative} budget={budget}");
            }
        }
    }
}

#[test]
fn loaded_policies_must_match_their_agent() {
    use mapguide::belief::{Policy, PolicyError};
    let built = column("map-1", AgentKind::Responsive, GuidanceSpec::Policy { budget: 1 });
    let task = built.profile.task.clone();
    let text = built.profile.policy.as_ref().unwrap().to_ndjson(&task);
    let policy = Arc::new(Policy::from_ndjson(&task, &text).unwrap());
    let settings = AgentSettings { guidance: GuidanceSpec::Policy { budget: 1 }, ..AgentSettings::new(AgentKind::Responsive) };
    let templates = Arc::new(Templates::default());
    let loaded = AgentProfile::with_policy(task.clone(), settings.clone(), templates.clone(), policy.clone()).unwrap();
    assert!(Arc::ptr_eq(loaded.policy.as_ref().unwrap(), &policy));
    let loaded = Column { label: "loaded".into(), profile: Arc::new(loaded) };
    let user = UserModel::default();
    let a = simulate_batch(&[built], 50, &user, 2).unwrap();
    let b = simulate_batch(&[loaded], 50, &user, 2).unwrap();
    assert_eq!(a.metrics, b.metrics);

    for wrong in [
        AgentSettings { guidance: GuidanceSpec::Policy { budget: 2 }, ..settings.clone() },
        AgentSettings { guidance: GuidanceSpec::Policy { budget: 1 }, ..AgentSettings::new(PREDICTIVE) },
        AgentSettings::new(AgentKind::Responsive),
    ] {
        let r = AgentProfile::with_policy(task.clone(), wrong, templates.clone(), policy.clone());
        assert!(matches!(r, Err(PolicyError::Mismatch { .. })));
    }
    let other = Arc::new(TaskModel::compile(&bundled::by_name("map-2").unwrap()));
    assert!(matches!(Policy::from_ndjson(&other, &text), Err(PolicyError::Mismatch { .. })));
}
