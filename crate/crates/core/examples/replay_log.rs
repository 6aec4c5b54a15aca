//! Session logs are enough to reproduce every utterance; a log edited after
//! the fact no longer replays cleanly.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mapguide::dialogue::{AgentKind, Templates};
use mapguide::domain::{bundled, TaskModel};
use mapguide::planning::Cost;
use mapguide::session::{parse_log, replay, write_log, AgentProfile, AgentSettings, LogEvent};
use mapguide::simulation::{simulate_episode, UserModel};

fn main() {
    let task = Arc::new(TaskModel::compile(&bundled::fig2()));
    let settings = AgentSettings::new(AgentKind::Predictive { delta: Cost::units(1) });
    let profile = Arc::new(AgentProfile::new(task, settings, Arc::new(Templates::default())).unwrap());
    let episode = simulate_episode(&profile, &UserModel::default(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let text = write_log(&episode.log);
    println!("{}", text.lines().take(4).collect::<Vec<_>>().join("\n"));

    let mut log = parse_log(&text).unwrap();
    let report = replay(&log, bundled::by_name).unwrap();
    println!("\n{} utterances, identical: {}", report.utterances, report.matches());

    if let Some(LogEvent::Utterance { utterance, .. }) = log.iter_mut().map(|r| &mut r.event).find(|e| matches!(e, LogEvent::Utterance { .. })) {
        utterance.text = "Head north.".into();
    }
    let report = replay(&log, bundled::by_name).unwrap();
    println!("after editing: identical {}, first difference {:?}", report.matches(), report.diffs.first());
}
