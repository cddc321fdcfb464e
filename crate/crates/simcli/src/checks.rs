//! Invariants checked by `simcli run --assert`.

use crate::harness::{run_scenario, RunOutput};
use crate::replay::{replay_log, AppSource};
use crate::scenario::Scenario;

/// Returns one message per violated invariant; empty means all held.
pub fn check_run(scenario: &Scenario, run: &RunOutput) -> Vec<String> {
    let mut failures = Vec::new();
    let r = &run.report;
    let t = r.totals;
    if !t.reconciles() {
        failures.push(format!(
            "reconciliation: sent {} != admitted {} + rejected {} + dropped {}",
            t.sent, t.admitted, t.rejected, t.dropped
        ));
    }

    match replay_log(&run.replay_log, &AppSource::Scenario(scenario)) {
        Ok(state) if to_bytes(&state) == to_bytes(&r.final_state) => {}
        Ok(_) => failures.push("replay: re-driven state differs from the recorded final state".into()),
        Err(e) => failures.push(format!("replay: {e}")),
    }

    match run_scenario(scenario) {
        Ok(again) if to_bytes(&again.report) == to_bytes(r) => {}
        Ok(_) => failures.push("determinism: a second run produced a different report".into()),
        Err(e) => failures.push(format!("determinism: second run failed: {e}")),
    }

    if r.compensated.count > 0 {
        let period = scenario.camera_buffer.period_ms as f64;
        if scenario.camera_moves() && scenario.mean_latency_ms() > period {
            if r.compensated.mean >= r.naive.mean {
                failures.push(format!(
                    "dominance: compensated mean {} not below naive mean {}",
                    r.compensated.mean, r.naive.mean
                ));
            }
        } else if !scenario.camera_moves() && r.compensated.mean != r.naive.mean {
            failures
                .push(format!("static camera: compensated mean {} != naive mean {}", r.compensated.mean, r.naive.mean));
        }
    }

    failures.extend(arena_invariants(scenario, &r.final_state));
    failures
}

#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn arena_invariants(scenario: &Scenario, state: &serde_json::Value) -> Vec<String> {
    let mut failures = Vec::new();
    if state["kind"] != "arena" {
        return failures;
    }
    let min = scenario.app.arena.min_spawn_distance;
    let xy = |v: &serde_json::Value| (v["x"].as_f64().unwrap_or(f64::NAN), v["y"].as_f64().unwrap_or(f64::NAN));
    for e in state["state"]["entities"].as_array().into_iter().flatten() {
        if e["enemy"].as_bool() != Some(true) {
            continue;
        }
        let (x, y) = xy(&e["spawn_pos"]);
        let (sx, sy) = xy(&e["streamer_at_spawn"]);
        let d = (x - sx).hypot(y - sy);
        // Negated so a NaN distance also fails.
        if !(d >= min) {
            failures.push(format!("min distance: entity {} spawned {d} from the streamer", e["id"]));
        }
    }
    if let Some(accounts) = state["economy"]["accounts"].as_object() {
        for (user, acct) in accounts {
            match acct["balance"].as_f64() {
                Some(b) if b >= 0.0 => {}
                other => failures.push(format!("economy: {user} has balance {other:?}")),
            }
        }
    }
    failures
}

fn to_bytes<T: serde::Serialize>(v: &T) -> Vec<u8> {
    serde_json::to_vec(v).expect("reports serialize")
}
