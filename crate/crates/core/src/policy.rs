//! Admission control: funds economy, cooldowns, role gating and bans.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::relay::AdmittedEvent;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("clock moved backwards from {last} ms to {now} ms")]
    ClockRegression { last: i64, now: i64 },
    #[error("insufficient funds: balance {balance}, cost {cost}")]
    InsufficientFunds { balance: f64, cost: f64 },
    #[error("invalid policy parameter: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {reason}")]
    File { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Everyone,
    Subscriber,
    Vip,
    Mod,
}

/// Per-user funds. Balances never go negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundsAccount {
    pub user: String,
    balance: f64,
    pub last_accrual_ts_ms: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum AccrualPolicy {
    /// `rate` funds per second for every user.
    ConstantRate { rate: f64 },
    /// A pool of `rate` funds per second split evenly among current viewers.
    InverseViewers { rate: f64 },
}

impl AccrualPolicy {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let (AccrualPolicy::ConstantRate { rate } | AccrualPolicy::InverseViewers { rate }) = *self;
        if rate > 0.0 && rate.is_finite() {
            Ok(())
        } else {
            Err(PolicyError::Invalid(format!("accrual rate must be positive, got {rate}")))
        }
    }

    /// Per-user rate in funds per second.
    pub fn per_user_rate(&self, viewer_count: u32) -> f64 {
        match *self {
            AccrualPolicy::ConstantRate { rate } => rate,
            AccrualPolicy::InverseViewers { rate } => rate / f64::from(viewer_count.max(1)),
        }
    }
}

impl FundsAccount {
    pub fn new(user: impl Into<String>, balance: f64, now_ms: i64) -> Self {
        Self { user: user.into(), balance: balance.max(0.0), last_accrual_ts_ms: now_ms }
    }

    pub fn balance(&self) -> f64 {
        self.balance
    }

    /// Adds funds for the time since the last accrual; returns the amount added.
    ///
    /// `cap`, when set, bounds the balance; funds above it are forfeited.
    pub fn accrue(
        &mut self,
        policy: &AccrualPolicy,
        viewer_count: u32,
        now_ms: i64,
        cap: Option<f64>,
    ) -> Result<f64, PolicyError> {
        if now_ms < self.last_accrual_ts_ms {
            return Err(PolicyError::ClockRegression { last: self.last_accrual_ts_ms, now: now_ms });
        }
        let dt_s = (now_ms - self.last_accrual_ts_ms) as f64 / 1000.0;
        let mut amount = policy.per_user_rate(viewer_count) * dt_s;
        if let Some(cap) = cap {
            amount = amount.min((cap - self.balance).max(0.0));
        }
        self.balance += amount;
        self.last_accrual_ts_ms = now_ms;
        Ok(amount)
    }

    pub fn spend(&mut self, cost: f64) -> Result<(), PolicyError> {
        if !(cost >= 0.0) || cost > self.balance {
            return Err(PolicyError::InsufficientFunds { balance: self.balance, cost });
        }
        self.balance -= cost;
        Ok(())
    }

    /// Returns funds taken by [`spend`](Self::spend).
    pub fn refund(&mut self, amount: f64) {
        self.balance += amount.max(0.0);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    /// Roles allowed to act; `everyone` admits any role.
    pub allowed_roles: BTreeSet<Role>,
    pub cooldown_ms: i64,
    pub global_cooldown_ms: i64,
    pub banned: BTreeSet<String>,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            allowed_roles: BTreeSet::from([Role::Everyone]),
            cooldown_ms: 0,
            global_cooldown_ms: 0,
            banned: BTreeSet::new(),
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.cooldown_ms < 0 || self.global_cooldown_ms < 0 {
            return Err(PolicyError::Invalid("cooldowns must be non-negative".into()));
        }
        Ok(())
    }

    pub fn role_allowed(&self, role: Role) -> bool {
        self.allowed_roles.contains(&Role::Everyone) || self.allowed_roles.contains(&role)
    }
}

/// Username to role; absent users are `everyone`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RoleTable(BTreeMap<String, Role>);

impl RoleTable {
    pub fn new(map: BTreeMap<String, Role>) -> Self {
        Self(map)
    }

    pub fn role_of(&self, user: &str) -> Role {
        self.0.get(user).copied().unwrap_or(Role::Everyone)
    }

    pub fn set(&mut self, user: impl Into<String>, role: Role) {
        self.0.insert(user.into(), role);
    }

    /// Parses `roles.json`: `{"username": "subscriber", ..}`.
    pub fn from_json(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }
}

/// Parses `bans.json`: `["username", ..]`.
pub fn bans_from_json(bytes: &[u8]) -> Result<BTreeSet<String>, serde_json::Error> {
    serde_json::from_slice(bytes)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CooldownState {
    last_admit: BTreeMap<String, i64>,
    last_global: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Banned,
    RoleGate,
    UserCooldown,
    GlobalCooldown,
    Filtered(String),
}

impl RejectReason {
    pub fn as_str(&self) -> &str {
        match self {
            RejectReason::Banned => "banned",
            RejectReason::RoleGate => "role_gate",
            RejectReason::UserCooldown => "user_cooldown",
            RejectReason::GlobalCooldown => "global_cooldown",
            RejectReason::Filtered(_) => "filtered",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Admit,
    Reject(RejectReason),
}

/// Hook for content-based moderation, consulted after the built-in checks.
pub trait AdmissionFilter {
    /// Returns a reason to reject the event, or `None` to let it through.
    fn inspect(&self, event: &AdmittedEvent) -> Option<String>;
}

/// Runs banned, role, per-user cooldown and global cooldown checks in that
/// order, then any filters. On admit both cooldown clocks restart at `now_ms`.
pub fn admit(
    event: &AdmittedEvent,
    gate: &GateConfig,
    roles: &RoleTable,
    state: &mut CooldownState,
    now_ms: i64,
    filters: &[&dyn AdmissionFilter],
) -> Verdict {
    let user = event.user();
    if gate.banned.contains(user) {
        return Verdict::Reject(RejectReason::Banned);
    }
    if !gate.role_allowed(roles.role_of(user)) {
        return Verdict::Reject(RejectReason::RoleGate);
    }
    if let Some(&last) = state.last_admit.get(user) {
        if now_ms - last < gate.cooldown_ms {
            return Verdict::Reject(RejectReason::UserCooldown);
        }
    }
    if let Some(last) = state.last_global {
        if now_ms - last < gate.global_cooldown_ms {
            return Verdict::Reject(RejectReason::GlobalCooldown);
        }
    }
    for f in filters {
        if let Some(why) = f.inspect(event) {
            return Verdict::Reject(RejectReason::Filtered(why));
        }
    }
    state.last_admit.insert(user.to_string(), now_ms);
    state.last_global = Some(now_ms);
    Verdict::Admit
}

/// `roles.json` / `bans.json` pair re-read whenever a file's mtime changes.
#[derive(Debug, Default)]
pub struct PolicyFiles {
    roles_path: Option<PathBuf>,
    bans_path: Option<PathBuf>,
    roles_mtime: Option<SystemTime>,
    bans_mtime: Option<SystemTime>,
}

fn read_if_changed(path: &Path, seen: &mut Option<SystemTime>) -> Result<Option<Vec<u8>>, PolicyError> {
    let err = |e: std::io::Error| PolicyError::File { path: path.to_path_buf(), reason: e.to_string() };
    let mtime = std::fs::metadata(path).and_then(|m| m.modified()).map_err(err)?;
    if *seen == Some(mtime) {
        return Ok(None);
    }
    let bytes = std::fs::read(path).map_err(err)?;
    *seen = Some(mtime);
    Ok(Some(bytes))
}

impl PolicyFiles {
    pub fn new(roles_path: Option<PathBuf>, bans_path: Option<PathBuf>) -> Self {
        Self { roles_path, bans_path, ..Self::default() }
    }

    /// Applies any changed file to `roles` / `gate.banned`; returns whether anything changed.
    pub fn reload_if_changed(&mut self, roles: &mut RoleTable, gate: &mut GateConfig) -> Result<bool, PolicyError> {
        let mut changed = false;
        if let Some(path) = &self.roles_path {
            if let Some(bytes) = read_if_changed(path, &mut self.roles_mtime)? {
                *roles = RoleTable::from_json(&bytes)
                    .map_err(|e| PolicyError::File { path: path.clone(), reason: e.to_string() })?;
                changed = true;
            }
        }
        if let Some(path) = &self.bans_path {
            if let Some(bytes) = read_if_changed(path, &mut self.bans_mtime)? {
                gate.banned = bans_from_json(&bytes)
                    .map_err(|e| PolicyError::File { path: path.clone(), reason: e.to_string() })?;
                changed = true;
            }
        }
        Ok(changed)
    }
}
