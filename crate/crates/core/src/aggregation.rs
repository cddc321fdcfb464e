//! Countdown-scoped reduction of spatial inputs: region polls and force averaging.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Rect, Vec2, WorldPoint};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AggregationError {
    #[error("round closed at {deadline_ms} ms")]
    RoundClosed { deadline_ms: i64 },
    #[error("round still open until {deadline_ms} ms")]
    RoundOpen { deadline_ms: i64 },
    #[error("point lies outside every region")]
    MissedRegion,
    #[error("no votes were cast")]
    NoVotes,
    #[error("stroke starts farther than the snap radius from every anchor")]
    NoAnchor,
    #[error("user already voted and votes are locked")]
    VoteLocked,
    #[error("invalid round: {0}")]
    Invalid(String),
}

/// Non-overlapping world rectangles indexed `0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Rect>", into = "Vec<Rect>")]
pub struct RegionMap {
    regions: Vec<Rect>,
}

impl RegionMap {
    pub fn new(regions: Vec<Rect>) -> Result<Self, AggregationError> {
        if regions.is_empty() {
            return Err(AggregationError::Invalid("region map needs at least one region".into()));
        }
        for (i, r) in regions.iter().enumerate() {
            if !r.is_valid() {
                return Err(AggregationError::Invalid(format!("region {i} is degenerate")));
            }
            if let Some(j) = regions[..i].iter().position(|o| o.overlaps(r)) {
                return Err(AggregationError::Invalid(format!("regions {j} and {i} overlap")));
            }
        }
        Ok(Self { regions })
    }

    /// `cols x rows` grid of equal cells starting at `origin`, numbered row-major.
    pub fn grid(origin: Vec2, cell: Vec2, cols: usize, rows: usize) -> Result<Self, AggregationError> {
        // Neighbouring cells share one computed edge, so rounding cannot
        // make them overlap or leave a gap.
        let xs: Vec<f64> = (0..=cols).map(|c| origin.x + c as f64 * cell.x).collect();
        let ys: Vec<f64> = (0..=rows).map(|r| origin.y + r as f64 * cell.y).collect();
        let regions = (0..rows)
            .flat_map(|r| {
                let (xs, ys) = (&xs, &ys);
                (0..cols).map(move |c| Rect::new(Vec2::new(xs[c], ys[r]), Vec2::new(xs[c + 1], ys[r + 1])))
            })
            .collect();
        Self::new(regions)
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn regions(&self) -> &[Rect] {
        &self.regions
    }

    pub fn locate(&self, p: WorldPoint) -> Option<usize> {
        self.regions.iter().position(|r| r.contains(p))
    }
}

impl TryFrom<Vec<Rect>> for RegionMap {
    type Error = AggregationError;
    fn try_from(v: Vec<Rect>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<RegionMap> for Vec<Rect> {
    fn from(m: RegionMap) -> Self {
        m.regions
    }
}

/// A spatial poll: each user holds at most one vote for one region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PollRound {
    region_map: RegionMap,
    deadline_ms: i64,
    lock_first: bool,
    votes: BTreeMap<String, usize>,
    counts: Vec<u32>,
}

impl PollRound {
    pub fn new(region_map: RegionMap, deadline_ms: i64) -> Self {
        let counts = vec![0; region_map.len()];
        Self { region_map, deadline_ms, lock_first: false, votes: BTreeMap::new(), counts }
    }

    /// Keep each user's first vote instead of letting re-votes move it.
    pub fn lock_first(mut self, lock: bool) -> Self {
        self.lock_first = lock;
        self
    }

    pub fn deadline_ms(&self) -> i64 {
        self.deadline_ms
    }

    pub fn region_map(&self) -> &RegionMap {
        &self.region_map
    }

    pub fn votes(&self) -> &BTreeMap<String, usize> {
        &self.votes
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn total_votes(&self) -> usize {
        self.votes.len()
    }

    /// Records `user`'s vote for the region containing `point`; returns the region.
    pub fn cast_vote(&mut self, user: &str, point: WorldPoint, now_ms: i64) -> Result<usize, AggregationError> {
        if now_ms >= self.deadline_ms {
            return Err(AggregationError::RoundClosed { deadline_ms: self.deadline_ms });
        }
        let region = self.region_map.locate(point).ok_or(AggregationError::MissedRegion)?;
        match self.votes.get(user).copied() {
            Some(_) if self.lock_first => return Err(AggregationError::VoteLocked),
            Some(prev) => self.counts[prev] -= 1,
            None => {}
        }
        self.votes.insert(user.to_string(), region);
        self.counts[region] += 1;
        Ok(region)
    }

    /// Most-voted region, ties to the lowest index.
    pub fn close_poll(&self, now_ms: i64) -> Result<usize, AggregationError> {
        if now_ms < self.deadline_ms {
            return Err(AggregationError::RoundOpen { deadline_ms: self.deadline_ms });
        }
        winner(&self.counts)
    }
}

/// Argmax with ties broken toward the lowest index.
pub fn winner(counts: &[u32]) -> Result<usize, AggregationError> {
    let mut best: Option<(usize, u32)> = None;
    for (i, &c) in counts.iter().enumerate() {
        if c > 0 && best.is_none_or(|(_, b)| c > b) {
            best = Some((i, c));
        }
    }
    best.map(|(i, _)| i).ok_or(AggregationError::NoVotes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prime {
    pub anchor: usize,
    pub force: Vec2,
}

/// A force poll: each user primes one drag vector on one anchor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForceRound {
    anchors: Vec<WorldPoint>,
    snap_radius: f64,
    deadline_ms: i64,
    primes: BTreeMap<String, Prime>,
}

impl ForceRound {
    pub fn new(anchors: Vec<WorldPoint>, snap_radius: f64, deadline_ms: i64) -> Result<Self, AggregationError> {
        if !(snap_radius > 0.0 && snap_radius.is_finite()) {
            return Err(AggregationError::Invalid("snap radius must be positive".into()));
        }
        Ok(Self { anchors, snap_radius, deadline_ms, primes: BTreeMap::new() })
    }

    pub fn anchors(&self) -> &[WorldPoint] {
        &self.anchors
    }

    pub fn deadline_ms(&self) -> i64 {
        self.deadline_ms
    }

    pub fn primes(&self) -> &BTreeMap<String, Prime> {
        &self.primes
    }

    /// Nearest anchor within the snap radius, ties to the lowest index.
    pub fn snap(&self, p: WorldPoint) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, a) in self.anchors.iter().enumerate() {
            let d = a.distance(p);
            if d <= self.snap_radius && best.is_none_or(|(_, b)| d < b) {
                best = Some((i, d));
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn prime_force(
        &mut self,
        user: &str,
        stroke_world: &[WorldPoint],
        now_ms: i64,
    ) -> Result<Prime, AggregationError> {
        if now_ms >= self.deadline_ms {
            return Err(AggregationError::RoundClosed { deadline_ms: self.deadline_ms });
        }
        let (first, last) = match stroke_world {
            [first, .., last] => (*first, *last),
            _ => return Err(AggregationError::Invalid("force stroke needs two points".into())),
        };
        let anchor = self.snap(first).ok_or(AggregationError::NoAnchor)?;
        let prime = Prime { anchor, force: last - first };
        self.primes.insert(user.to_string(), prime);
        Ok(prime)
    }

    /// Per-anchor mean of primed vectors, summed in username order.
    pub fn close_force(&self, now_ms: i64) -> Result<Vec<Vec2>, AggregationError> {
        if now_ms < self.deadline_ms {
            return Err(AggregationError::RoundOpen { deadline_ms: self.deadline_ms });
        }
        let mut sums = vec![Vec2::ZERO; self.anchors.len()];
        let mut counts = vec![0_u32; self.anchors.len()];
        for prime in self.primes.values() {
            sums[prime.anchor] = sums[prime.anchor] + prime.force;
            counts[prime.anchor] += 1;
        }
        Ok(sums
            .into_iter()
            .zip(counts)
            .map(|(s, n)| if n == 0 { Vec2::ZERO } else { Vec2::new(s.x / n as f64, s.y / n as f64) })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid3() -> RegionMap {
        RegionMap::grid(Vec2::ZERO, Vec2::new(1.0, 1.0), 3, 3).unwrap()
    }

    fn center(map: &RegionMap, i: usize) -> Vec2 {
        map.regions()[i].center()
    }

    #[test]
    fn vote_then_revote() {
        let map = grid3();
        let mut round = PollRound::new(map.clone(), 1_000);
        assert_eq!(round.cast_vote("alice", center(&map, 4), 0).unwrap(), 4);
        assert_eq!(round.counts()[4], 1);
        round.cast_vote("alice", center(&map, 2), 10).unwrap();
        assert_eq!(round.counts()[4], 0);
        assert_eq!(round.counts()[2], 1);
        assert_eq!(round.total_votes(), 1);
    }

    #[test]
    fn missed_region_and_deadline_leave_state_untouched() {
        let map = grid3();
        let mut round = PollRound::new(map.clone(), 1_000);
        round.cast_vote("bob", center(&map, 0), 0).unwrap();
        let before = round.clone();
        assert_eq!(round.cast_vote("bob", Vec2::new(-1.0, -1.0), 5), Err(AggregationError::MissedRegion));
        assert_eq!(round, before);
        assert_eq!(
            round.cast_vote("bob", center(&map, 3), 1_000),
            Err(AggregationError::RoundClosed { deadline_ms: 1_000 })
        );
        assert_eq!(round, before);
    }

    #[test]
    fn lock_first_keeps_initial_vote() {
        let map = grid3();
        let mut round = PollRound::new(map.clone(), 1_000).lock_first(true);
        round.cast_vote("a", center(&map, 1), 0).unwrap();
        assert_eq!(round.cast_vote("a", center(&map, 2), 1), Err(AggregationError::VoteLocked));
        assert_eq!(round.counts()[1], 1);
    }

    #[test]
    fn winner_rules() {
        assert_eq!(winner(&[1, 3, 0]), Ok(1));
        assert_eq!(winner(&[2, 2, 0]), Ok(0));
        assert_eq!(winner(&[0, 0, 0]), Err(AggregationError::NoVotes));
        let round = PollRound::new(grid3(), 100);
        assert_eq!(round.close_poll(50), Err(AggregationError::RoundOpen { deadline_ms: 100 }));
        assert_eq!(round.close_poll(100), Err(AggregationError::NoVotes));
    }

    #[test]
    fn grid_cells_tile_with_awkward_sizes() {
        let map = RegionMap::grid(Vec2::new(-13.7, 4.1), Vec2::new(0.7, 3.3), 5, 4).unwrap();
        for w in map.regions().windows(2).filter(|w| w[0].min.y == w[1].min.y) {
            assert_eq!(w[0].max.x, w[1].min.x);
        }
    }

    #[test]
    fn overlapping_regions_rejected() {
        let a = Rect::from_origin_size(0.0, 0.0, 2.0, 2.0);
        let b = Rect::from_origin_size(1.0, 1.0, 2.0, 2.0);
        assert!(RegionMap::new(vec![a, b]).is_err());
        assert!(RegionMap::new(vec![]).is_err());
    }

    #[test]
    fn prime_examples() {
        let mut round = ForceRound::new(vec![Vec2::ZERO], 1.0, 1_000).unwrap();
        let p = round.prime_force("a", &[Vec2::new(0.1, 0.0), Vec2::new(2.1, 0.0)], 0).unwrap();
        assert_eq!(p, Prime { anchor: 0, force: Vec2::new(2.0, 0.0) });
        assert_eq!(
            round.prime_force("a", &[Vec2::new(5.0, 5.0), Vec2::new(6.0, 5.0)], 0),
            Err(AggregationError::NoAnchor)
        );
        round.prime_force("bob", &[Vec2::ZERO, Vec2::new(2.0, 0.0)], 0).unwrap();
        round.prime_force("bob", &[Vec2::ZERO, Vec2::new(0.0, 3.0)], 1).unwrap();
        assert_eq!(round.primes()["bob"].force, Vec2::new(0.0, 3.0));
        assert_eq!(round.primes().len(), 2);
    }

    #[test]
    fn snap_prefers_nearest() {
        let round = ForceRound::new(vec![Vec2::ZERO, Vec2::new(1.0, 0.0)], 1.0, 10).unwrap();
        assert_eq!(round.snap(Vec2::new(0.7, 0.0)), Some(1));
        assert_eq!(round.snap(Vec2::new(0.5, 0.0)), Some(0));
        assert_eq!(round.snap(Vec2::new(0.5, 5.0)), None);
    }

    #[test]
    fn close_force_examples() {
        let mut round = ForceRound::new(vec![Vec2::ZERO, Vec2::new(10.0, 0.0)], 1.0, 100).unwrap();
        assert_eq!(round.close_force(100).unwrap(), vec![Vec2::ZERO, Vec2::ZERO]);
        round.prime_force("a", &[Vec2::ZERO, Vec2::new(1.0, 0.0)], 0).unwrap();
        round.prime_force("b", &[Vec2::ZERO, Vec2::new(0.0, 1.0)], 0).unwrap();
        round.prime_force("c", &[Vec2::new(10.0, 0.0), Vec2::new(13.0, -4.0)], 0).unwrap();
        assert_eq!(round.close_force(100).unwrap(), vec![Vec2::new(0.5, 0.5), Vec2::new(3.0, -4.0)]);
        assert!(round.close_force(99).is_err());
    }
}
