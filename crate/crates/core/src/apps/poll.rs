//! Spatial click poll on a repeating countdown. The same machinery backs a
//! tic-tac-toe grid, upgrade votes and NPC selection; only what happens to the
//! winner differs.

use serde::{Deserialize, Serialize};

use super::{kv, App, AppConfigError, AppKind, AppReject, CameraRig, Gatekeeper, Landmarks, Outcome, Viewport};
use crate::aggregation::{AggregationError, PollRound, RegionMap};
use crate::compensation::BufferParams;
use crate::geom::Vec2;
use crate::protocol::{AppUpdate, EventKind};
use crate::relay::AdmittedEvent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PollMode {
    /// Winner square receives the round's symbol, alternating X and O.
    Grid,
    /// Winner label is appended to the applied upgrades.
    Upgrade,
    /// Winner label becomes the selected NPC.
    Npc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PollConfig {
    pub mode: PollMode,
    pub camera: CameraRig,
    pub regions: RegionMap,
    /// One label per region; empty means labels are the region indices.
    pub labels: Vec<String>,
    pub round_ms: i64,
    pub gap_ms: i64,
    pub lock_first: bool,
}

impl Default for PollConfig {
    fn default() -> Self {
        Self {
            mode: PollMode::Grid,
            camera: CameraRig::default(),
            regions: RegionMap::grid(Vec2::new(-15.0, -15.0), Vec2::new(10.0, 10.0), 3, 3).expect("valid grid"),
            labels: Vec::new(),
            round_ms: 10_000,
            gap_ms: 2_000,
            lock_first: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PollResult {
    pub round: u32,
    pub closed_ms: i64,
    pub counts: Vec<u32>,
    pub winner: Option<usize>,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PollState {
    pub round_index: u32,
    pub current: Option<PollRound>,
    /// Start of the next round while between rounds.
    pub next_open_ms: i64,
    pub board: Vec<Option<String>>,
    pub upgrades: Vec<String>,
    pub npc: Option<String>,
    pub history: Vec<PollResult>,
}

pub struct PollApp {
    config: PollConfig,
    viewport: Viewport,
    gate: Gatekeeper,
    state: PollState,
    updates: Vec<AppUpdate>,
}

impl PollApp {
    pub fn new(config: PollConfig, params: BufferParams, gate: Gatekeeper) -> Result<Self, AppConfigError> {
        if config.round_ms <= 0 || config.gap_ms < 0 {
            return Err(AppConfigError("poll needs round_ms > 0 and gap_ms >= 0".into()));
        }
        if !config.labels.is_empty() && config.labels.len() != config.regions.len() {
            return Err(AppConfigError(format!(
                "poll has {} regions but {} labels",
                config.regions.len(),
                config.labels.len()
            )));
        }
        let viewport = Viewport::new(config.camera, params)?;
        let state = PollState {
            round_index: 0,
            current: None,
            next_open_ms: 0,
            board: vec![None; config.regions.len()],
            upgrades: Vec::new(),
            npc: None,
            history: Vec::new(),
        };
        Ok(Self { config, viewport, gate, state, updates: Vec::new() })
    }

    pub fn state(&self) -> &PollState {
        &self.state
    }

    fn label(&self, region: usize) -> String {
        self.config.labels.get(region).cloned().unwrap_or_else(|| region.to_string())
    }

    fn open_round(&mut self, now_ms: i64) {
        let round = PollRound::new(self.config.regions.clone(), now_ms + self.config.round_ms)
            .lock_first(self.config.lock_first);
        self.state.current = Some(round);
        self.updates.push(AppUpdate::to_all(kv([("round", "open".to_string())])));
    }

    fn close_round(&mut self, round: PollRound, now_ms: i64) {
        let winner = match round.close_poll(now_ms) {
            Ok(w) => Some(w),
            Err(e) => {
                log::info!("poll round {} closed without a winner: {e}", self.state.round_index);
                None
            }
        };
        let label = winner.map(|w| self.label(w));
        match (winner, &label) {
            (Some(w), Some(l)) => {
                match self.config.mode {
                    PollMode::Grid => {
                        let symbol = if self.state.round_index.is_multiple_of(2) { "X" } else { "O" };
                        self.state.board[w] = Some(symbol.to_string());
                    }
                    PollMode::Upgrade => self.state.upgrades.push(l.clone()),
                    PollMode::Npc => self.state.npc = Some(l.clone()),
                }
                self.updates.push(AppUpdate::to_all(kv([("round", "closed".into()), ("winner", w.to_string())])));
            }
            _ => self.updates.push(AppUpdate::to_all(kv([("round", "closed".to_string())]))),
        }
        self.state.history.push(PollResult {
            round: self.state.round_index,
            closed_ms: now_ms,
            counts: round.counts().to_vec(),
            winner,
            label,
        });
        self.state.round_index += 1;
        self.state.next_open_ms = now_ms + self.config.gap_ms;
    }
}

impl App for PollApp {
    fn kind(&self) -> AppKind {
        AppKind::Poll
    }

    fn tick(&mut self, now_ms: i64) {
        self.viewport.record(now_ms);
        match self.state.current.take() {
            Some(round) if now_ms >= round.deadline_ms() => self.close_round(round, now_ms),
            Some(round) => self.state.current = Some(round),
            None => {}
        }
        if self.state.current.is_none() && now_ms >= self.state.next_open_ms {
            self.open_round(now_ms);
        }
    }

    fn on_event(&mut self, event: &AdmittedEvent, now_ms: i64) -> Outcome {
        if event.event.kind != EventKind::Click {
            return Err(AppReject::UnsupportedKind);
        }
        let at = self.viewport.resolve(event)?[0];
        let Some(round) = self.state.current.as_mut() else {
            return Err(AppReject::RoundClosed);
        };
        // Check the spatial part first so a miss does not burn a cooldown.
        if round.region_map().locate(at).is_none() {
            return Err(AppReject::MissedRegion);
        }
        if now_ms >= round.deadline_ms() {
            return Err(AppReject::RoundClosed);
        }
        self.gate.admit(event, now_ms)?;
        match round.cast_vote(event.user(), at, now_ms) {
            Ok(region) => Ok(format!("vote:{region}")),
            Err(AggregationError::VoteLocked) => Err(AppReject::VoteLocked),
            Err(AggregationError::MissedRegion) => Err(AppReject::MissedRegion),
            Err(_) => Err(AppReject::RoundClosed),
        }
    }

    fn drain_updates(&mut self) -> Vec<AppUpdate> {
        std::mem::take(&mut self.updates)
    }

    fn gatekeeper_mut(&mut self) -> &mut Gatekeeper {
        &mut self.gate
    }

    fn viewport(&self) -> &Viewport {
        &self.viewport
    }

    fn landmarks(&self) -> Landmarks {
        Landmarks {
            regions: self.config.regions.regions().iter().map(|r| r.center()).collect(),
            ..Landmarks::default()
        }
    }

    fn snapshot(&self) -> serde_json::Value {
        serde_json::json!({ "kind": "poll", "state": self.state })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apps::testutil::{click, ctx};
    use crate::apps::{AppDriver, GateSection};
    use crate::relay::AppDelivery;

    fn poll(config: PollConfig) -> AppDriver {
        let app = PollApp::new(config, BufferParams::default(), Gatekeeper::new(&GateSection::default())).unwrap();
        AppDriver::new(Box::new(app))
    }

    /// Frame point for the center of default grid cell `i`.
    fn cell(i: usize) -> (f64, f64) {
        let c = PollConfig::default().regions.regions()[i].center();
        (0.5 + c.x / 64.0, 0.5 + c.y / 32.0)
    }

    fn vote(d: &mut AppDriver, user: &str, region: usize, ts: i64) -> Outcome {
        let (x, y) = cell(region);
        d.deliver(&AppDelivery::Event(click(user, x, y, ts, ctx(&[])))).unwrap()
    }

    #[test]
    fn single_vote_places_symbol() {
        let mut d = poll(PollConfig::default());
        d.advance_to(0);
        assert_eq!(d.drain_updates(), vec![AppUpdate::to_all(kv([("round", "open".to_string())]))]);
        assert_eq!(vote(&mut d, "a", 1, 500), Ok("vote:1".into()));
        d.advance_to(10_000);
        assert_eq!(
            d.drain_updates(),
            vec![AppUpdate::to_all(kv([("round", "closed".into()), ("winner", "1".into())]))]
        );
        let s = d.snapshot();
        assert_eq!(s["state"]["board"][1], "X");
        assert_eq!(s["state"]["history"][0]["counts"], serde_json::json!([0, 1, 0, 0, 0, 0, 0, 0, 0]));
        // between rounds
        assert_eq!(vote(&mut d, "a", 2, 10_500), Err(AppReject::RoundClosed));
        d.advance_to(12_000);
        assert_eq!(d.drain_updates(), vec![AppUpdate::to_all(kv([("round", "open".to_string())]))]);
        assert!(vote(&mut d, "a", 2, 12_100).is_ok());
    }

    #[test]
    fn empty_round_has_no_winner() {
        let mut d = poll(PollConfig::default());
        d.advance_to(10_000);
        let updates = d.drain_updates();
        assert_eq!(updates.last().unwrap(), &AppUpdate::to_all(kv([("round", "closed".to_string())])));
        assert_eq!(d.snapshot()["state"]["history"][0]["winner"], serde_json::Value::Null);
    }

    #[test]
    fn upgrade_mode_applies_label() {
        let config = PollConfig {
            mode: PollMode::Upgrade,
            regions: RegionMap::grid(Vec2::new(-30.0, -10.0), Vec2::new(20.0, 20.0), 3, 1).unwrap(),
            labels: vec!["walls".into(), "archers".into(), "moat".into()],
            ..PollConfig::default()
        };
        let mut d = poll(config);
        // x = 15 world units right of center lands in the third column
        for (u, x) in [("a", 0.5 + 15.0 / 64.0), ("b", 0.5 + 15.0 / 64.0), ("c", 0.5)] {
            d.deliver(&AppDelivery::Event(click(u, x, 0.5, 100, ctx(&[])))).unwrap().unwrap();
        }
        d.advance_to(10_000);
        assert_eq!(d.snapshot()["state"]["upgrades"], serde_json::json!(["moat"]));
    }

    #[test]
    fn miss_outside_grid() {
        let mut d = poll(PollConfig::default());
        let out = d.deliver(&AppDelivery::Event(click("a", 0.01, 0.5, 100, ctx(&[])))).unwrap();
        assert_eq!(out, Err(AppReject::MissedRegion));
    }

    #[test]
    fn label_count_must_match() {
        let config = PollConfig { labels: vec!["x".into()], ..PollConfig::default() };
        assert!(PollApp::new(config, BufferParams::default(), Gatekeeper::default()).is_err());
    }
}
