use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::policy::{AccrualPolicy, FundsAccount, PolicyError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EconomyConfig {
    pub accrual: AccrualPolicy,
    pub initial_balance: f64,
    pub balance_cap: Option<f64>,
    /// Keep a per-user journal of every balance change (tests and simulations).
    pub journal: bool,
}

impl Default for EconomyConfig {
    fn default() -> Self {
        Self {
            accrual: AccrualPolicy::InverseViewers { rate: 10.0 },
            initial_balance: 10.0,
            balance_cap: None,
            journal: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LedgerEntry {
    Open(f64),
    Accrual(f64),
    Spend(f64),
}

/// Funds accounts for every viewer the app has heard from.
#[derive(Debug, Clone, Serialize)]
pub struct Economy {
    #[serde(skip)]
    config: EconomyConfig,
    accounts: BTreeMap<String, FundsAccount>,
    #[serde(skip)]
    journal: BTreeMap<String, Vec<LedgerEntry>>,
}

impl Economy {
    pub fn new(config: EconomyConfig) -> Result<Self, PolicyError> {
        config.accrual.validate()?;
        if !(config.initial_balance >= 0.0) {
            return Err(PolicyError::Invalid("initial balance must be non-negative".into()));
        }
        Ok(Self { config, accounts: BTreeMap::new(), journal: BTreeMap::new() })
    }

    fn note(&mut self, user: &str, entry: LedgerEntry) {
        if self.config.journal {
            self.journal.entry(user.to_string()).or_default().push(entry);
        }
    }

    /// Opens an account on first contact; later calls are no-ops.
    pub fn open(&mut self, user: &str, now_ms: i64) {
        if !self.accounts.contains_key(user) {
            let initial = self.config.initial_balance;
            self.accounts.insert(user.to_string(), FundsAccount::new(user, initial, now_ms));
            self.note(user, LedgerEntry::Open(initial));
        }
    }

    /// Accrues every account up to `now_ms`, splitting inverse-viewer pools
    /// among the accounts currently open.
    pub fn accrue_all(&mut self, now_ms: i64) {
        let viewers = u32::try_from(self.accounts.len()).unwrap_or(u32::MAX).max(1);
        let mut added = Vec::new();
        for (user, account) in self.accounts.iter_mut() {
            match account.accrue(&self.config.accrual, viewers, now_ms, self.config.balance_cap) {
                Ok(amount) => added.push((user.clone(), amount)),
                Err(e) => log::warn!("accrual for {user} skipped: {e}"),
            }
        }
        for (user, amount) in added {
            self.note(&user, LedgerEntry::Accrual(amount));
        }
    }

    pub fn balance(&self, user: &str) -> Option<f64> {
        self.accounts.get(user).map(FundsAccount::balance)
    }

    pub fn can_afford(&self, user: &str, cost: f64) -> bool {
        self.balance(user).is_some_and(|b| cost >= 0.0 && cost <= b)
    }

    pub fn spend(&mut self, user: &str, cost: f64) -> Result<(), PolicyError> {
        let account = self.accounts.get_mut(user).ok_or(PolicyError::InsufficientFunds { balance: 0.0, cost })?;
        account.spend(cost)?;
        self.note(user, LedgerEntry::Spend(cost));
        Ok(())
    }

    pub fn accounts(&self) -> &BTreeMap<String, FundsAccount> {
        &self.accounts
    }

    pub fn journal(&self) -> &BTreeMap<String, Vec<LedgerEntry>> {
        &self.journal
    }

    pub fn journaling(&self) -> bool {
        self.config.journal
    }
}
