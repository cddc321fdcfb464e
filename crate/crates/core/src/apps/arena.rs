//! Spawn-versus-streamer arena: viewers spend funds to drop items and enemies
//! around a streamer who walks across the map, or leave short-lived messages.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    kv, App, AppConfigError, AppKind, AppReject, CameraRig, Economy, EconomyConfig, Gatekeeper, Landmarks, Outcome,
    Viewport,
};
use crate::compensation::BufferParams;
use crate::geom::WorldPoint;
use crate::protocol::{AppUpdate, EventKind};
use crate::relay::AdmittedEvent;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemSpec {
    pub cost: f64,
    #[serde(default)]
    pub enemy: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArenaConfig {
    /// The camera is locked on the streamer.
    pub camera: CameraRig,
    pub min_spawn_distance: f64,
    pub items: BTreeMap<String, ItemSpec>,
    pub message_ttl_ms: i64,
    pub message_cost: f64,
    pub kills_per_level: u32,
    pub enemy_speed_per_tick: f64,
    pub defeat_radius: f64,
    pub economy: EconomyConfig,
}

impl Default for ArenaConfig {
    fn default() -> Self {
        let items = [
            ("zombie", ItemSpec { cost: 5.0, enemy: true }),
            ("skeleton", ItemSpec { cost: 8.0, enemy: true }),
            ("slime", ItemSpec { cost: 3.0, enemy: true }),
            ("potion", ItemSpec { cost: 2.0, enemy: false }),
            ("torch", ItemSpec { cost: 1.0, enemy: false }),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            camera: CameraRig::default(),
            min_spawn_distance: 10.0,
            items,
            message_ttl_ms: 4_000,
            message_cost: 0.0,
            kills_per_level: 10,
            enemy_speed_per_tick: 1.0,
            defeat_radius: 2.0,
            economy: EconomyConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Entity {
    pub id: u64,
    pub kind: String,
    pub enemy: bool,
    pub pos: WorldPoint,
    pub spawn_pos: WorldPoint,
    pub streamer_at_spawn: WorldPoint,
    pub spawner: String,
    pub spawned_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MessageMarker {
    pub text: String,
    pub pos: WorldPoint,
    pub author: String,
    pub expiry_ts_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArenaState {
    pub streamer_pos: WorldPoint,
    pub entities: Vec<Entity>,
    pub messages: Vec<MessageMarker>,
    pub kills: u32,
    pub level: u32,
    pub next_entity_id: u64,
}

pub struct ArenaApp {
    config: ArenaConfig,
    viewport: Viewport,
    gate: Gatekeeper,
    economy: Economy,
    state: ArenaState,
    updates: Vec<AppUpdate>,
}

impl ArenaApp {
    pub fn new(config: ArenaConfig, params: BufferParams, gate: Gatekeeper) -> Result<Self, AppConfigError> {
        if !(config.min_spawn_distance >= 0.0) || config.kills_per_level == 0 {
            return Err(AppConfigError("arena needs min_spawn_distance >= 0 and kills_per_level >= 1".into()));
        }
        if config.items.values().any(|i| !(i.cost >= 0.0)) || !(config.message_cost >= 0.0) {
            return Err(AppConfigError("item costs must be non-negative".into()));
        }
        let economy = Economy::new(config.economy.clone()).map_err(|e| AppConfigError(e.to_string()))?;
        let viewport = Viewport::new(config.camera, params)?;
        let state = ArenaState {
            streamer_pos: config.camera.start,
            entities: Vec::new(),
            messages: Vec::new(),
            kills: 0,
            level: 1,
            next_entity_id: 1,
        };
        Ok(Self { config, viewport, gate, economy, state, updates: Vec::new() })
    }

    pub fn state(&self) -> &ArenaState {
        &self.state
    }

    pub fn config(&self) -> &ArenaConfig {
        &self.config
    }

    fn spawn(&mut self, event: &AdmittedEvent, now_ms: i64) -> Outcome {
        if event.event.kind != EventKind::Click {
            return Err(AppReject::UnsupportedKind);
        }
        let user = event.user().to_string();
        self.economy.open(&user, now_ms);
        let at = self.viewport.resolve(event)?[0];
        let ctx = &event.context_snapshot;
        let item = ctx.get("item").and_then(|name| self.config.items.get(name).map(|spec| (name.clone(), *spec)));
        let message = ctx.get("message").filter(|m| !m.is_empty()).cloned();
        if item.is_none() && message.is_none() {
            return Err(AppReject::NoSelection);
        }
        self.gate.admit(event, now_ms)?;
        if let Some((kind, spec)) = item {
            if !self.economy.can_afford(&user, spec.cost) {
                return Err(AppReject::InsufficientFunds);
            }
            // Spawn-distance failures are fully refunded, so the charge is
            // only committed once the distance check passes.
            let streamer = self.state.streamer_pos;
            if spec.enemy && at.distance(streamer) < self.config.min_spawn_distance {
                return Err(AppReject::TooClose);
            }
            self.economy.spend(&user, spec.cost).map_err(|_| AppReject::InsufficientFunds)?;
            let id = self.state.next_entity_id;
            self.state.next_entity_id += 1;
            self.state.entities.push(Entity {
                id,
                kind: kind.clone(),
                enemy: spec.enemy,
                pos: at,
                spawn_pos: at,
                streamer_at_spawn: streamer,
                spawner: user,
                spawned_ms: now_ms,
            });
            return Ok(format!("spawn:{kind}"));
        }
        let text = message.expect("checked above");
        let cost = self.config.message_cost;
        self.economy.spend(&user, cost).map_err(|_| AppReject::InsufficientFunds)?;
        self.state.messages.push(MessageMarker {
            text,
            pos: at,
            author: user,
            expiry_ts_ms: now_ms + self.config.message_ttl_ms,
        });
        Ok("message".into())
    }

    fn step_enemies(&mut self) {
        let streamer = self.state.streamer_pos;
        let speed = self.config.enemy_speed_per_tick;
        let radius = self.config.defeat_radius;
        let mut defeated = 0;
        self.state.entities.retain_mut(|e| {
            if !e.enemy {
                return true;
            }
            let to = streamer - e.pos;
            let dist = to.length();
            if dist > 0.0 {
                e.pos = e.pos + to * (speed.min(dist) / dist);
            }
            if e.pos.distance(streamer) <= radius {
                defeated += 1;
                false
            } else {
                true
            }
        });
        for _ in 0..defeated {
            self.state.kills += 1;
            if self.state.kills.is_multiple_of(self.config.kills_per_level) {
                self.state.level += 1;
                self.updates.push(AppUpdate::to_all(kv([("level", self.state.level.to_string())])));
            }
        }
    }
}

impl App for ArenaApp {
    fn kind(&self) -> AppKind {
        AppKind::Arena
    }

    fn tick(&mut self, now_ms: i64) {
        self.viewport.record(now_ms);
        self.state.streamer_pos = self.viewport.camera_at(now_ms).center;
        self.economy.accrue_all(now_ms);
        self.state.messages.retain(|m| m.expiry_ts_ms > now_ms);
        self.step_enemies();
    }

    fn on_context(&mut self, payload: &crate::protocol::ContextPayload, now_ms: i64) {
        self.economy.open(&payload.user, now_ms);
    }

    fn on_event(&mut self, event: &AdmittedEvent, now_ms: i64) -> Outcome {
        self.spawn(event, now_ms)
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
        Landmarks { streamer: Some(self.state.streamer_pos), ..Landmarks::default() }
    }

    fn snapshot(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": "arena",
            "state": self.state,
            "economy": self.economy,
        })
    }

    fn economy(&self) -> Option<&Economy> {
        Some(&self.economy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apps::testutil::{click, ctx};
    use crate::apps::{AppDriver, GateSection};
    use crate::geom::Vec2;
    use crate::protocol::KvMap;
    use crate::relay::AppDelivery;

    fn arena(config: ArenaConfig) -> AppDriver {
        let app = ArenaApp::new(config, BufferParams::default(), Gatekeeper::new(&GateSection::default())).unwrap();
        AppDriver::new(Box::new(app))
    }

    fn static_config(initial: f64) -> ArenaConfig {
        ArenaConfig {
            camera: CameraRig { start: Vec2::ZERO, velocity_per_tick: Vec2::ZERO, extent: Vec2::new(64.0, 32.0) },
            economy: EconomyConfig { initial_balance: initial, journal: true, ..EconomyConfig::default() },
            enemy_speed_per_tick: 0.0,
            ..ArenaConfig::default()
        }
    }

    fn arena_state(d: &AppDriver) -> serde_json::Value {
        d.snapshot()["state"].clone()
    }

    #[test]
    fn spawn_charges_and_places_enemy() {
        // accrual is zero at t=0, so the opening balance is exactly 6
        let mut d = arena(static_config(6.0));
        // 0.5 + 30/64 along x: 30 world units right of the streamer
        let ev = click("alice", 0.5 + 30.0 / 64.0, 0.5, 0, ctx(&[("item", "zombie")]));
        let out = d.deliver(&AppDelivery::Event(ev)).unwrap();
        assert_eq!(out, Ok("spawn:zombie".into()));
        let s = arena_state(&d);
        assert_eq!(s["entities"][0]["pos"]["x"], 30.0);
        assert_eq!(d.app().economy().unwrap().balance("alice"), Some(1.0));
    }

    #[test]
    fn too_close_refunds() {
        let mut d = arena(static_config(6.0));
        let ev = click("alice", 0.5 + 3.0 / 64.0, 0.5, 0, ctx(&[("item", "zombie")]));
        assert_eq!(d.deliver(&AppDelivery::Event(ev)).unwrap(), Err(AppReject::TooClose));
        assert_eq!(d.app().economy().unwrap().balance("alice"), Some(6.0));
        assert!(arena_state(&d)["entities"].as_array().unwrap().is_empty());
        // items are not subject to the distance rule
        let ev = click("alice", 0.5, 0.5, 0, ctx(&[("item", "potion")]));
        assert_eq!(d.deliver(&AppDelivery::Event(ev)).unwrap(), Ok("spawn:potion".into()));
    }

    #[test]
    fn insufficient_funds() {
        let mut d = arena(static_config(1.0));
        let ev = click("bob", 0.9, 0.5, 0, ctx(&[("item", "skeleton")]));
        assert_eq!(d.deliver(&AppDelivery::Event(ev)).unwrap(), Err(AppReject::InsufficientFunds));
        let ev = click("bob", 0.9, 0.5, 0, KvMap::new());
        assert_eq!(d.deliver(&AppDelivery::Event(ev)).unwrap(), Err(AppReject::NoSelection));
    }

    #[test]
    fn message_expires_after_ttl() {
        let mut d = arena(static_config(0.0));
        let ev = click("carol", 0.25, 0.25, 1_000, ctx(&[("message", "hi")]));
        assert_eq!(d.deliver(&AppDelivery::Event(ev)).unwrap(), Ok("message".into()));
        let marker = &arena_state(&d)["messages"][0];
        assert_eq!(marker["pos"]["x"], -16.0);
        assert_eq!(marker["pos"]["y"], -8.0);
        d.advance_to(4_900);
        assert_eq!(arena_state(&d)["messages"].as_array().unwrap().len(), 1);
        d.advance_to(5_000);
        assert!(arena_state(&d)["messages"].as_array().unwrap().is_empty());
    }

    #[test]
    fn tenth_defeat_levels_up() {
        let mut config = static_config(1_000.0);
        config.enemy_speed_per_tick = 100.0;
        let mut d = arena(config);
        let mut updates = Vec::new();
        for i in 0..10 {
            let ev = click("dave", 0.9, 0.5, i * 100, ctx(&[("item", "slime")]));
            assert!(d.deliver(&AppDelivery::Event(ev)).unwrap().is_ok());
            updates.extend(d.drain_updates());
        }
        d.advance_to(1_000);
        updates.extend(d.drain_updates());
        assert_eq!(updates, vec![AppUpdate::to_all(kv([("level", "2".to_string())]))]);
        assert_eq!(arena_state(&d)["kills"], 10);
        d.advance_to(2_000);
        assert!(d.drain_updates().is_empty());
    }

    #[test]
    fn moving_camera_resolves_against_history() {
        let mut config = static_config(100.0);
        config.camera.velocity_per_tick = Vec2::new(5.0, 0.0);
        let mut d = arena(config);
        d.advance_to(3_000);
        let mut ev = click("eve", 0.5 + 20.0 / 64.0, 0.5, 3_000, ctx(&[("item", "potion")]));
        ev.event.latency_ms = 1_000;
        d.deliver(&AppDelivery::Event(ev)).unwrap().unwrap();
        // camera at t=2000 was centered on x=100
        assert_eq!(arena_state(&d)["entities"][0]["pos"]["x"], 120.0);
    }
}
