//! In-process deployment on a virtual clock: relay session, app and
//! scripted viewers, all driven from one loop.

use std::collections::{BTreeMap, VecDeque};

use spatial_relay_core::apps::{AppDriver, CameraRig, Landmarks};
use spatial_relay_core::compensation::resolve_naive;
use spatial_relay_core::protocol::{Envelope, EventKind, Hello, Message, PeerRole};
use spatial_relay_core::relay::{AppDelivery, ConnId, Outbound, Session};

use crate::metrics::{point_error, ErrorStats, EventRecord, MetricsReport, Totals};
use crate::scenario::{Scenario, ScenarioError};
use crate::viewer::{Plan, ScriptedViewer};

const APP_CONN: ConnId = 0;

/// How far back the harness keeps what the app showed. Latencies beyond
/// this see the oldest retained frame.
const LANDMARK_HISTORY_MS: i64 = 60_000;

pub struct RunOutput {
    pub report: MetricsReport,
    /// Relay receive log, JSONL.
    pub replay_log: Vec<u8>,
    pub outcome_log: Vec<u8>,
}

/// The app plus a record of what it displayed at each tick.
struct Stage {
    driver: AppDriver,
    next_tick: i64,
    history: VecDeque<(i64, Landmarks)>,
}

impl Stage {
    fn advance(&mut self, t: i64) {
        while self.next_tick <= t {
            self.driver.advance_to(self.next_tick);
            self.history.push_back((self.next_tick, self.driver.app().landmarks()));
            self.next_tick += self.driver.tick_ms();
        }
        while self.history.len() > 1 && self.history[1].0 <= t - LANDMARK_HISTORY_MS {
            self.history.pop_front();
        }
    }

    fn landmarks_at(&self, t: i64) -> Landmarks {
        let idx = self.history.partition_point(|(ts, _)| *ts <= t);
        match idx.checked_sub(1).and_then(|i| self.history.get(i)) {
            Some((_, l)) => l.clone(),
            None => self.history.front().map(|(_, l)| l.clone()).unwrap_or_else(|| self.driver.app().landmarks()),
        }
    }
}

#[derive(Default)]
struct Tally {
    totals: Totals,
    rejections: BTreeMap<String, u64>,
    skips: BTreeMap<String, u64>,
    relay_errors: BTreeMap<String, u64>,
    outcomes: BTreeMap<String, u64>,
    events: Vec<EventRecord>,
}

/// Runs a scenario to completion. Identical scenarios give identical output.
pub fn run_scenario(scenario: &Scenario) -> Result<RunOutput, ScenarioError> {
    scenario.validate()?;
    let rig = scenario.rig();
    let mut stage = Stage { driver: AppDriver::new(scenario.build_app()?), next_tick: 0, history: VecDeque::new() };
    let mut session = Session::new();
    let mut tally = Tally::default();

    let hello_app = Envelope::new(1, Message::Hello(Hello { role: PeerRole::App, user: None }));
    session.handle(APP_CONN, hello_app, 0);
    let mut viewers: Vec<ScriptedViewer> = Vec::with_capacity(scenario.viewers.len());
    let mut seqs = vec![1_u64; scenario.viewers.len()];
    for (i, spec) in scenario.viewers.iter().enumerate() {
        let hello = Hello { role: PeerRole::Viewer, user: Some(spec.user.clone()) };
        session.handle(conn_of(i), Envelope::new(1, Message::Hello(hello)), 0);
        viewers.push(ScriptedViewer::new(spec, scenario.seed, i));
    }

    for step in scenario.timeline() {
        let t = step.at_ms;
        stage.advance(t);
        flush_updates(&mut stage, &mut session, &mut tally);
        let plan = viewers[step.viewer].plan(step.action, t, &rig, &|seen| stage.landmarks_at(seen));
        let planned = match plan {
            Plan::Send(p) => p,
            Plan::Skip(reason) => {
                tally.totals.skipped += 1;
                *tally.skips.entry(reason.to_string()).or_default() += 1;
                continue;
            }
        };
        match planned.message {
            Message::MouseEvent(_) => tally.totals.sent += 1,
            _ => tally.totals.contexts += 1,
        }
        seqs[step.viewer] += 1;
        let envelope = Envelope::new(seqs[step.viewer], planned.message.clone());
        for out in session.handle(conn_of(step.viewer), envelope, t) {
            match out {
                Outbound::ToApp { delivery, .. } => {
                    if let Some((mut rec, admitted)) = deliver(&mut stage, &delivery, &rig) {
                        rec.true_latency_ms = planned.true_latency_ms;
                        rec.compensated_error = rec.compensated.as_ref().map(|c| point_error(&planned.intended, c));
                        rec.naive_error = point_error(&planned.intended, &rec.naive);
                        rec.intended = planned.intended.clone();
                        count_outcome(&mut tally, &rec.outcome, admitted);
                        tally.events.push(rec);
                    }
                }
                Outbound::ToPeer { envelope: Envelope { message: Message::Error(e), .. }, .. } => {
                    *tally.relay_errors.entry(e.code).or_default() += 1;
                }
                Outbound::ToPeer { .. } | Outbound::Close(_) => {}
            }
        }
        flush_updates(&mut stage, &mut session, &mut tally);
    }
    stage.advance(scenario.duration_ms);
    flush_updates(&mut stage, &mut session, &mut tally);

    tally.totals.dropped = session.stats().events_dropped;
    let with_history: Vec<&EventRecord> = tally.events.iter().filter(|e| e.compensated_error.is_some()).collect();
    let comp: Vec<f64> = with_history.iter().filter_map(|e| e.compensated_error).collect();
    let naive: Vec<f64> = with_history.iter().map(|e| e.naive_error).collect();
    let report = MetricsReport {
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        app: scenario.app.kind,
        duration_ms: scenario.duration_ms,
        totals: tally.totals,
        rejections: tally.rejections,
        skips: tally.skips,
        relay_errors: tally.relay_errors,
        compensated: ErrorStats::from_samples(&comp),
        naive: ErrorStats::from_samples(&naive),
        outcomes: tally.outcomes,
        events: tally.events,
        final_state: stage.driver.snapshot(),
    };
    Ok(RunOutput { report, replay_log: session.export_replay(), outcome_log: stage.driver.outcome_log() })
}

fn conn_of(viewer: usize) -> ConnId {
    viewer as ConnId + 1
}

/// Applies a delivery. For events, also returns the partially filled record
/// (measured with the history the app is about to use) and whether the app
/// accepted it.
fn deliver(stage: &mut Stage, delivery: &AppDelivery, rig: &CameraRig) -> Option<(EventRecord, bool)> {
    let AppDelivery::Event(ev) = delivery else {
        stage.driver.deliver(delivery);
        return None;
    };
    let ts = ev.server_ts_ms;
    stage.advance(ts);
    let compensated = stage.driver.app().viewport().resolve(ev).ok();
    let naive = resolve_naive(&rig.at(ts), ev);
    let outcome = stage.driver.deliver(delivery).expect("events always produce an outcome");
    let (label, admitted) = match outcome {
        Ok(label) => (label, true),
        Err(reject) => (reject.reason().to_string(), false),
    };
    let record = EventRecord {
        t_ms: ts,
        user: ev.user().to_string(),
        kind: match ev.event.kind {
            EventKind::Click => "click",
            EventKind::Gesture => "gesture",
        }
        .to_string(),
        true_latency_ms: 0,
        reported_latency_ms: ev.event.latency_ms,
        intended: Vec::new(),
        compensated,
        naive,
        compensated_error: None,
        naive_error: 0.0,
        outcome: label,
    };
    Some((record, admitted))
}

fn count_outcome(tally: &mut Tally, label: &str, admitted: bool) {
    if admitted {
        tally.totals.admitted += 1;
        *tally.outcomes.entry(label.to_string()).or_default() += 1;
    } else {
        tally.totals.rejected += 1;
        *tally.rejections.entry(label.to_string()).or_default() += 1;
    }
}

fn flush_updates(stage: &mut Stage, session: &mut Session, tally: &mut Tally) {
    let mut out = Vec::new();
    for update in stage.driver.drain_updates() {
        match session.push_app_update(APP_CONN, &update, &mut out) {
            Ok(targets) => tally.totals.updates_to_viewers += targets.len() as u64,
            Err(e) => log::warn!("app produced an invalid update: {e}"),
        }
    }
}
