use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spatial_relay_core::apps::{
    build_app, replay_into, AppDriver, AppKind, AppSection, ArenaConfig, CameraRig, EconomyConfig, LedgerEntry,
};
use spatial_relay_core::compensation::BufferParams;
use spatial_relay_core::gesture::Recognizer;
use spatial_relay_core::protocol::{ContextPayload, Envelope, Hello, KvMap, Message, NormPoint, PeerRole, ViewerEvent};
use spatial_relay_core::relay::{ConnId, Outbound, Session};
use spatial_relay_core::Vec2;

const APP: ConnId = 1_000;
const USERS: [&str; 5] = ["u0", "u1", "u2", "u3", "u4"];

fn kv(pairs: &[(&str, &str)]) -> KvMap {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

fn section(kind: AppKind, seed: u64) -> AppSection {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    let camera = CameraRig {
        start: Vec2::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)),
        velocity_per_tick: Vec2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)),
        extent: Vec2::new(64.0, 32.0),
    };
    let mut s = AppSection { kind, ..AppSection::default() };
    s.arena = ArenaConfig {
        camera,
        enemy_speed_per_tick: rng.random_range(0.0..2.0),
        economy: EconomyConfig { journal: true, ..EconomyConfig::default() },
        ..ArenaConfig::default()
    };
    s.canvas.camera = camera;
    s
}

/// Random viewer traffic through a real session into an app. Returns the
/// driver and the session's exported log.
fn simulate(
    kind: AppKind,
    seed: u64,
    events: usize,
    check: &mut dyn FnMut(&AppDriver, &str),
) -> (AppDriver, Vec<u8>, i64) {
    let sec = section(kind, seed);
    let mut driver = AppDriver::new(build_app(&sec, BufferParams::default(), Recognizer::default()).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut session = Session::new();
    let mut now = 0_i64;
    let mut seqs = [0_u64; 5];
    let feed = |session: &mut Session, driver: &mut AppDriver, conn: ConnId, env: Envelope, now: i64| {
        for o in session.handle(conn, env, now) {
            if let Outbound::ToApp { delivery, .. } = o {
                driver.deliver(&delivery);
                driver.drain_updates();
            }
        }
    };
    feed(
        &mut session,
        &mut driver,
        APP,
        Envelope::new(1, Message::Hello(Hello { role: PeerRole::App, user: None })),
        0,
    );
    for (i, u) in USERS.iter().enumerate() {
        seqs[i] += 1;
        let hello = Hello { role: PeerRole::Viewer, user: Some(u.to_string()) };
        feed(&mut session, &mut driver, i as ConnId, Envelope::new(seqs[i], Message::Hello(hello)), 0);
    }
    let items = ["zombie", "skeleton", "slime", "potion", "torch", "unknown"];
    let mut sent = 0;
    while sent < events {
        now += rng.random_range(0..150);
        let v = rng.random_range(0..USERS.len());
        let user = USERS[v];
        seqs[v] += 1;
        let msg = if rng.random_bool(0.25) {
            let data = match (kind, rng.random_range(0..4)) {
                (AppKind::Canvas, 0) => kv(&[("command", "undo")]),
                (AppKind::Canvas, 1) => kv(&[("command", "clear")]),
                (AppKind::Canvas, _) => kv(&[("color", ["red", "blue", "green"][rng.random_range(0..3)])]),
                (_, 0) => kv(&[("message", "hello")]),
                (_, _) => kv(&[("item", items[rng.random_range(0..items.len())])]),
            };
            Message::Context(ContextPayload::new(user, data))
        } else {
            sent += 1;
            let latency = rng.random_range(0..2_500);
            let mut pt = || NormPoint::new(rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0)).unwrap();
            if kind == AppKind::Canvas {
                let pts: Vec<NormPoint> = (0..4).map(|_| pt()).collect();
                Message::MouseEvent(ViewerEvent::gesture(user, pts, vec![0, 10, 20, 30], latency, now))
            } else {
                Message::MouseEvent(ViewerEvent::click(user, pt(), latency, now))
            }
        };
        feed(&mut session, &mut driver, v as ConnId, Envelope::new(seqs[v], msg), now);
        check(&driver, user);
    }
    driver.advance_to(now);
    (driver, session.export_replay(), now)
}

fn replay(kind: AppKind, seed: u64, log: &[u8], until: i64) -> AppDriver {
    let sec = section(kind, seed);
    let (_, deliveries) = Session::from_replay(log).unwrap();
    replay_into(build_app(&sec, BufferParams::default(), Recognizer::default()).unwrap(), &deliveries, until)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn arena_invariants_and_replay(seed in any::<u64>()) {
        let min = ArenaConfig::default().min_spawn_distance;
        let (driver, log, end) = simulate(AppKind::Arena, seed, 1_000, &mut |_, _| {});
        let snap = driver.snapshot();
        for e in snap["state"]["entities"].as_array().unwrap() {
            if e["enemy"].as_bool().unwrap() {
                let d = ((e["spawn_pos"]["x"].as_f64().unwrap() - e["streamer_at_spawn"]["x"].as_f64().unwrap()).powi(2)
                    + (e["spawn_pos"]["y"].as_f64().unwrap() - e["streamer_at_spawn"]["y"].as_f64().unwrap()).powi(2))
                .sqrt();
                prop_assert!(d >= min, "enemy spawned {d} from streamer");
            }
        }
        let economy = driver.app().economy().unwrap();
        for (user, entries) in economy.journal() {
            let mut bal = 0.0;
            for e in entries {
                match *e {
                    LedgerEntry::Open(x) => bal = x,
                    LedgerEntry::Accrual(x) => bal += x,
                    LedgerEntry::Spend(x) => bal -= x,
                }
            }
            prop_assert_eq!(Some(bal), economy.balance(user));
            prop_assert!(bal >= 0.0);
        }
        let replayed = replay(AppKind::Arena, seed, &log, end);
        prop_assert_eq!(serde_json::to_vec(&replayed.snapshot()).unwrap(), serde_json::to_vec(&snap).unwrap());
        prop_assert_eq!(replayed.outcome_log(), driver.outcome_log());
    }

    #[test]
    fn canvas_isolation_and_replay(seed in any::<u64>()) {
        let strokes_of = |d: &AppDriver, u: &str| -> Vec<serde_json::Value> {
            d.snapshot()["state"]["strokes"].as_array().unwrap().iter().filter(|s| s["user"] == u).cloned().collect()
        };
        let mut before: Vec<Vec<serde_json::Value>> = vec![Vec::new(); USERS.len()];
        let mut violations = Vec::new();
        let (driver, log, end) = simulate(AppKind::Canvas, seed, 300, &mut |d, actor| {
            for (i, u) in USERS.iter().enumerate() {
                let now = strokes_of(d, u);
                if *u != actor && now != before[i] {
                    violations.push(format!("{actor} changed {u}'s strokes"));
                }
                before[i] = now;
            }
        });
        prop_assert!(violations.is_empty(), "{violations:?}");
        let replayed = replay(AppKind::Canvas, seed, &log, end);
        prop_assert_eq!(serde_json::to_vec(&replayed.snapshot()).unwrap(), serde_json::to_vec(&driver.snapshot()).unwrap());
    }
}
