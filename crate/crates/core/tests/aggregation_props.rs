use std::collections::BTreeMap;

use proptest::collection::vec;
use proptest::prelude::*;
use spatial_relay_core::aggregation::{AggregationError, ForceRound, PollRound, RegionMap};
use spatial_relay_core::Vec2;

const DEADLINE: i64 = 1_000;

/// `n` unit cells in a row starting at the origin.
fn row(n: usize) -> RegionMap {
    RegionMap::grid(Vec2::ZERO, Vec2::new(1.0, 1.0), n, 1).unwrap()
}

#[derive(Debug, Clone)]
struct Vote {
    user: usize,
    x: f64,
    y: f64,
    t: i64,
}

fn votes() -> impl Strategy<Value = Vec<Vote>> {
    vec(
        (0..20_usize, -0.5..6.5_f64, -0.2..1.2_f64, 0..1_100_i64).prop_map(|(user, x, y, t)| Vote { user, x, y, t }),
        0..50,
    )
}

fn recount(votes: &BTreeMap<String, usize>, n: usize) -> Option<usize> {
    let mut counts = vec![0_u32; n];
    for &r in votes.values() {
        counts[r] += 1;
    }
    let max = *counts.iter().max()?;
    if max == 0 {
        return None;
    }
    counts.iter().position(|&c| c == max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn poll_matches_recount(n in 1..=6_usize, script in votes(), lock in any::<bool>()) {
        let mut round = PollRound::new(row(n), DEADLINE).lock_first(lock);
        for v in &script {
            let before = round.clone();
            let res = round.cast_vote(&format!("u{}", v.user), Vec2::new(v.x, v.y), v.t);
            if res.is_err() {
                prop_assert_eq!(&round, &before);
            }
            if v.t >= DEADLINE {
                prop_assert_eq!(res, Err(AggregationError::RoundClosed { deadline_ms: DEADLINE }));
            }
            // vote conservation
            prop_assert_eq!(round.counts().iter().sum::<u32>() as usize, round.votes().len());
        }
        let expect = recount(round.votes(), n);
        prop_assert_eq!(round.close_poll(DEADLINE).ok(), expect);
    }

    #[test]
    fn winner_independent_of_order(n in 1..=6_usize, picks in vec(0..6_usize, 1..30), seed in any::<u64>()) {
        let map = row(n);
        let picks: Vec<usize> = picks.into_iter().map(|p| p % n).collect();
        let tally = |order: &[usize]| {
            let mut round = PollRound::new(map.clone(), DEADLINE);
            for &i in order {
                let c = map.regions()[picks[i]].center();
                round.cast_vote(&format!("u{i}"), c, 0).unwrap();
            }
            round.close_poll(DEADLINE)
        };
        let forward: Vec<usize> = (0..picks.len()).collect();
        let mut shuffled = forward.clone();
        // deterministic Fisher-Yates from the seed
        let mut s = seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(tally(&forward), tally(&shuffled));
    }

    #[test]
    fn force_matches_mean(
        anchors in vec((-10.0..10.0_f64, -10.0..10.0_f64), 1..6),
        strokes in vec((0..20_usize, 0..6_usize, -2.0..2.0_f64, -2.0..2.0_f64, -50.0..50.0_f64, -50.0..50.0_f64, 0..1_100_i64), 0..50),
    ) {
        let anchors: Vec<Vec2> = anchors.into_iter().map(|(x, y)| Vec2::new(x, y)).collect();
        let mut round = ForceRound::new(anchors.clone(), 1.5, DEADLINE).unwrap();
        for (user, a, ox, oy, dx, dy, t) in strokes {
            let start = anchors[a % anchors.len()] + Vec2::new(ox, oy);
            let before = round.clone();
            let res = round.prime_force(&format!("u{user}"), &[start, start + Vec2::new(dx, dy)], t);
            if res.is_err() {
                prop_assert_eq!(&round, &before);
            }
        }
        let mut sum = vec![(0.0_f64, 0.0_f64, 0_u32); anchors.len()];
        for p in round.primes().values() {
            let e = &mut sum[p.anchor];
            e.0 += p.force.x;
            e.1 += p.force.y;
            e.2 += 1;
        }
        let expect: Vec<Vec2> = sum
            .into_iter()
            .map(|(x, y, n)| if n == 0 { Vec2::ZERO } else { Vec2::new(x / f64::from(n), y / f64::from(n)) })
            .collect();
        prop_assert_eq!(round.close_force(DEADLINE).unwrap(), expect);
    }
}
