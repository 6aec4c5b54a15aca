//! Acceptance criteria. Runs without the test harness so the batch shared by
//! several criteria is simulated once; prints one PASS or FAIL line each.

mod common;

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{move_ends, small_maps, Graph};
use mapguide::ambiguity::{similar_set, AmbiguityCost, DELTA_PRESETS};
use mapguide::dialogue::{AgentKind, InefficiencyAnalyzer, InefficiencyConfig, Templates, UtteranceKind};
use mapguide::domain::{bundled, Act, MapSpec, TaskModel};
use mapguide::planning::{search, validate, BaseCost, Cost, CostFn};
use mapguide::session::{AgentProfile, AgentSettings, LogEvent, LogRecord};
use mapguide::simulation::{count_metrics, episode_seed, simulate_batch, simulate_episode, Column, Metrics, UserModel};

const EPISODES: usize = 1000;
const GAMMA: f64 = 0.95;
const SEED: u64 = 2024;

type Outcome = Result<String, String>;

fn check(cond: bool, fail: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(fail())
    }
}

fn within(limit: Duration, took: Duration) -> Result<(), String> {
    check(took < limit, || format!("took {took:.1?}, limit {limit:?}"))
}

fn planner_oracle() -> Outcome {
    let t = Instant::now();
    let maps = small_maps(50, 100);
    for map in &maps {
        let task = TaskModel::compile(map);
        let g = Graph::new(map);
        check(map.landmarks.len() <= 8 && map.bikes.len() <= 2, || format!("{} too large", map.name))?;
        let start = task.initial_state();
        let costs: [(i64, Box<dyn CostFn>); 2] =
            [(0, Box::new(BaseCost)), (1000, Box::new(AmbiguityCost::new(&task, Cost::units(1))))];
        for (delta, cost_fn) in costs {
            let plan = search(&task.problem, &start, cost_fn.as_ref()).map_err(|e| e.to_string())?.plan();
            let want = g.optimal(delta);
            match (plan, want) {
                (Some(p), Some(w)) => {
                    check(p.cost.milli() == w, || format!("{} delta {delta}: found {} expected {w}", map.name, p.cost.milli()))?;
                    check(validate(&task.problem, &p.steps, &start, &task.problem.goal), || format!("{}: invalid plan", map.name))?;
                }
                (None, None) => {}
                (p, w) => return Err(format!("{}: solvability differs ({:?} vs {w:?})", map.name, p.map(|p| p.cost))),
            }
        }
    }
    within(Duration::from_secs(30), t.elapsed())?;
    Ok(format!("{} maps, 2 cost models, all optimal", maps.len()))
}

fn bundled_maps() -> Vec<MapSpec> {
    let mut maps = vec![bundled::fig1(), bundled::fig2(), bundled::fig3(), bundled::line()];
    maps.extend(bundled::study_maps().into_iter().map(|(_, m)| m));
    maps
}

fn cost_transform() -> Outcome {
    let mut deltas: Vec<Cost> = DELTA_PRESETS.iter().map(|&d| Cost::units(d)).collect();
    deltas.extend(["0.001", "0.5", "2.75", "10"].iter().map(|s| s.parse::<Cost>().unwrap()));
    deltas.sort();
    let mut checked = 0;
    for map in bundled_maps() {
        let task = TaskModel::compile(&map);
        let g = Graph::new(&map);
        for action in &task.problem.actions {
            let label = action.label().to_string();
            let similar = move_ends(&label).map(|(a, b)| g.similar(g.index(a), g.index(b))).unwrap_or(0);
            check(similar_set(&task, action).len() == similar, || format!("{label}: similar set size"))?;
            let base = BaseCost.cost(action);
            let mut last = base;
            for &d in &deltas {
                let c = AmbiguityCost::new(&task, d).cost(action);
                check(c - base == d.times(similar), || format!("{label} delta {d}: {c} - {base} != {d} x {similar}"))?;
                check(c >= last, || format!("{label}: not monotone in delta"))?;
                if similar == 0 {
                    check(c == base, || format!("{label}: unambiguous action changed cost"))?;
                }
                last = c;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} action and delta pairs exact"))
}

/// Per-episode facts the batch criteria look at.
struct EpisodeFacts {
    metrics: Metrics,
    pretargets: usize,
    elaborations_expected: usize,
    replans: usize,
    candidates: usize,
    ended: bool,
}

fn facts(graph: &Graph, log: &[LogRecord], replans: usize, candidates: usize) -> EpisodeFacts {
    let mut pretargets = 0;
    let mut expected = 0;
    let mut pending_ambiguous = false;
    for r in log {
        match &r.event {
            LogEvent::Utterance { utterance, .. } => match utterance.kind {
                UtteranceKind::PreTarget => pretargets += 1,
                UtteranceKind::Instruction => {
                    let label = utterance.subject.as_deref().unwrap_or("");
                    pending_ambiguous =
                        move_ends(label).is_some_and(|(a, b)| graph.similar(graph.index(a), graph.index(b)) > 0);
                }
                _ => {}
            },
            LogEvent::Timer { .. } if pending_ambiguous => expected += 1,
            LogEvent::Accepted { .. } => pending_ambiguous = false,
            _ => {}
        }
    }
    let ended = matches!(log.last().map(|r| &r.event), Some(LogEvent::SessionEnd { .. }));
    EpisodeFacts { metrics: count_metrics(log), pretargets, elaborations_expected: expected, replans, candidates, ended }
}

struct MapBatch {
    name: String,
    responsive: Vec<EpisodeFacts>,
    predictive: Vec<EpisodeFacts>,
    errors: Vec<String>,
}

fn run_batches() -> (Vec<MapBatch>, Duration) {
    let t = Instant::now();
    let user = UserModel { gamma: GAMMA, ..Default::default() };
    let templates = Arc::new(Templates::default());
    let mut out = Vec::new();
    for (name, map) in bundled::study_maps() {
        let task = Arc::new(TaskModel::compile(&map));
        let graph = Graph::new(&map);
        let mut batch = MapBatch { name: name.into(), responsive: Vec::new(), predictive: Vec::new(), errors: Vec::new() };
        for agent in [AgentKind::Responsive, AgentKind::Predictive { delta: Cost::units(1) }] {
            let profile = Arc::new(AgentProfile::new(task.clone(), AgentSettings::new(agent), templates.clone()).unwrap());
            for i in 0..EPISODES {
                let mut rng = ChaCha8Rng::seed_from_u64(episode_seed(SEED, i));
                match simulate_episode(&profile, &user, &mut rng) {
                    Ok(ep) => {
                        let s = ep.stats;
                        let f = facts(&graph, &ep.log, s.observation + s.recovery + s.policy_switch, ep.candidate_total);
                        match agent {
                            AgentKind::Responsive => batch.responsive.push(f),
                            AgentKind::Predictive { .. } => batch.predictive.push(f),
                        }
                    }
                    Err(e) => batch.errors.push(format!("{name} {} episode {i}: {e}", agent.name())),
                }
            }
        }
        out.push(batch);
    }
    (out, t.elapsed())
}

/// Two-pass mean and sample standard deviation.
fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn explicability(batches: &[MapBatch], took: Duration) -> Outcome {
    let mut detail = Vec::new();
    for b in batches {
        check(b.errors.is_empty(), || b.errors[0].clone())?;
        check(b.responsive.len() == EPISODES && b.predictive.len() == EPISODES, || format!("{}: short batch", b.name))?;
        let sims = |v: &[EpisodeFacts]| mean_sd(&v.iter().map(|f| f.metrics.similars as f64).collect::<Vec<_>>());
        let (rm, rs) = sims(&b.responsive);
        let (pm, ps) = sims(&b.predictive);
        let half = |sd: f64| 1.96 * sd / (EPISODES as f64).sqrt();
        check(pm < rm, || format!("{}: predictive {pm:.2} not below responsive {rm:.2}", b.name))?;
        check(pm + half(ps) < rm - half(rs), || {
            format!("{}: intervals overlap ({pm:.2} +- {:.2} vs {rm:.2} +- {:.2})", b.name, half(ps), half(rs))
        })?;
        detail.push(format!("{} {:.2}({:.2}) vs {:.2}({:.2})", b.name, pm, ps, rm, rs));
    }
    within(Duration::from_secs(120), took)?;
    Ok(format!("{} in {took:.1?}", detail.join(", ")))
}

fn agent_shape(batches: &[MapBatch]) -> Outcome {
    for b in batches {
        for (i, f) in b.responsive.iter().enumerate() {
            check(f.metrics.pretarget_k == 0 && f.pretargets == 0 && f.metrics.initiative == 0, || {
                format!("{} responsive episode {i}: {} pre-targets, {} offers", b.name, f.pretargets, f.metrics.initiative)
            })?;
        }
        for (i, f) in b.predictive.iter().enumerate() {
            check(f.pretargets >= 1, || format!("{} predictive episode {i}: no pre-target", b.name))?;
        }
    }
    let offers: usize = batches.iter().flat_map(|b| &b.predictive).map(|f| f.metrics.initiative).sum();
    Ok(format!("{} episodes checked, {offers} predictive initiative offers", batches.len() * 2 * EPISODES))
}

fn elaboration(batches: &[MapBatch]) -> Outcome {
    let mut total = 0;
    for b in batches {
        for (i, f) in b.responsive.iter().chain(&b.predictive).enumerate() {
            check(f.metrics.elaborate == f.elaborations_expected, || {
                format!("{} trace {i}: {} elaborations, {} expected", b.name, f.metrics.elaborate, f.elaborations_expected)
            })?;
            total += f.metrics.elaborate;
        }
    }
    Ok(format!("{total} elaborations, all accounted for"))
}

fn replanning(batches: &[MapBatch]) -> Outcome {
    let mut worst = 0.0f64;
    for b in batches {
        check(b.errors.is_empty(), || b.errors[0].clone())?;
        for (i, f) in b.responsive.iter().chain(&b.predictive).enumerate() {
            check(f.ended, || format!("{} trace {i}: no goal", b.name))?;
            check(f.replans <= f.candidates, || format!("{} trace {i}: {} replans > {}", b.name, f.replans, f.candidates))?;
            worst = worst.max(f.replans as f64 / f.candidates.max(1) as f64);
        }
    }
    Ok(format!("every episode reached the goal, at most {:.0}% of the replan bound used", worst * 100.0))
}

/// Positions and held bikes along a random walk, under the true map.
fn random_walk(task: &TaskModel, graph: &Graph, len: usize, rng: &mut ChaCha8Rng) -> (Vec<Act>, Vec<(usize, u32)>) {
    let mut at = graph.base;
    let mut held = 0u32;
    let mut trace = Vec::new();
    let mut states = vec![(at, held)];
    for _ in 0..len {
        let mut options: Vec<Act> = graph.adj[at].iter().map(|&n| Act::Move { from: at, to: n }).collect();
        for (b, &loc) in graph.bike_at.iter().enumerate() {
            if loc == at && held & (1 << b) == 0 {
                options.push(Act::Pickup { bike: task.bike(&task.map.bikes[b].id).unwrap(), at });
            }
        }
        let act = options[rng.gen_range(0..options.len())];
        match act {
            Act::Move { to, .. } => at = to,
            Act::Pickup { bike, .. } => held |= 1 << bike,
            Act::Find { .. } => unreachable!(),
        }
        trace.push(act);
        states.push((at, held));
    }
    (trace, states)
}

fn inefficiency_oracle() -> Outcome {
    let t = Instant::now();
    let maps = small_maps(20, 900);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut flagged = 0;
    for k in 0..200 {
        let map = &maps[k % maps.len()];
        let task = Arc::new(TaskModel::compile(map));
        let graph = Graph::new(map);
        let analyzer = InefficiencyAnalyzer::new(task.clone());
        let len = rng.gen_range(1..=10);
        let (trace, states) = random_walk(&task, &graph, len, &mut rng);
        let x = rng.gen_range(0..len);
        let config = InefficiencyConfig { look_back: rng.gen_range(0..=3), look_ahead: rng.gen_range(0..=3) };
        let lo = x.saturating_sub(config.look_back);
        let hi = (x + config.look_ahead).min(len);
        let mut expected = None;
        'search: for i in lo..hi {
            for j in i + 1..=hi {
                let (a, ha) = states[i];
                let (b, hb) = states[j];
                let best = graph.cheapest(a, ha, b, hb, 0).expect("the fragment itself connects its ends");
                if best < 1000 * (j - i) as i64 {
                    expected = Some((i, j, best));
                    break 'search;
                }
            }
        }
        let got = analyzer.detect(&task.initial_state(), &trace, x, config);
        let got_key = got.as_ref().map(|w| (w.start, w.end, w.replacement_cost.milli()));
        check(got_key == expected, || format!("trace {k} on {}: detector {got_key:?}, brute force {expected:?}", map.name))?;
        flagged += usize::from(expected.is_some());
    }
    within(Duration::from_secs(60), t.elapsed())?;
    Ok(format!("200 traces agree, {flagged} inefficient"))
}

fn determinism() -> Outcome {
    let map = bundled::by_name("map-3").unwrap();
    let task = Arc::new(TaskModel::compile(&map));
    let templates = Arc::new(Templates::default());
    let columns: Vec<Column> = [AgentKind::Responsive, AgentKind::Predictive { delta: Cost::units(2) }]
        .into_iter()
        .map(|a| Column {
            label: a.name(),
            profile: Arc::new(AgentProfile::new(task.clone(), AgentSettings::new(a), templates.clone()).unwrap()),
        })
        .collect();
    let user = UserModel::default();
    let report = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| simulate_batch(&columns, 200, &user, 99)).map(|o| o.report.to_csv()).map_err(|e| e.to_string())
    };
    let a = report(1)?;
    let b = report(1)?;
    let c = report(3)?;
    check(a == b && a == c, || "reports differ between runs".into())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for k in 0..2 {
        let path = dir.path().join(format!("m{k}.toml"));
        let args = ["mapguide", "genmap", "--seed", "7", "--out", path.to_str().unwrap()];
        let code = mapguide::cli::run(args, &mut Vec::new(), &mut Vec::new());
        check(code == 0, || format!("genmap exited with {code}"))?;
        files.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    check(files[0] == files[1], || "genmap output differs between runs".into())?;
    Ok(format!("{} byte report identical across runs and thread counts, genmap identical", a.len()))
}

fn main() -> ExitCode {
    let mut lines = Vec::new();
    let mut run = |name: &str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let r = f();
        lines.push((name.to_string(), r, t.elapsed()));
    };
    run("planner oracle", &mut planner_oracle);
    run("cost transform exactness", &mut cost_transform);
    let (batches, took) = run_batches();
    run("explicability effect", &mut || explicability(&batches, took));
    run("agent shape", &mut || agent_shape(&batches));
    run("elaboration accounting", &mut || elaboration(&batches));
    run("inefficiency oracle", &mut inefficiency_oracle);
    run("replanning termination and soundness", &mut || replanning(&batches));
    run("determinism", &mut determinism);
    let mut failed = 0;
    for (name, r, t) in &lines {
        match r {
            Ok(d) => println!("PASS  {name}: {d} [{t:.1?}]"),
            Err(e) => {
                failed += 1;
                println!("FAIL  {name}: {e} [{t:.1?}]");
            }
        }
    }
    println!("{} of {} criteria passed", lines.len() - failed, lines.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
