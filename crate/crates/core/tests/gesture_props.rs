use proptest::collection::vec;
use proptest::prelude::*;
use spatial_relay_core::gesture::{Command, Recognizer, Stroke, NEXT_IDEAL, PREVIOUS_IDEAL};
use spatial_relay_core::Vec2;

fn stroke_points() -> impl Strategy<Value = Vec<Vec2>> {
    vec((0.0..1.0_f64, 0.0..1.0_f64), 2..10).prop_map(|v| v.into_iter().map(|(x, y)| Vec2::new(x, y)).collect())
}

/// A noisy chevron: the ideal shape with bounded jitter on every vertex.
fn chevron() -> impl Strategy<Value = Vec<Vec2>> {
    (any::<bool>(), vec((-0.08..0.08_f64, -0.08..0.08_f64), 3)).prop_map(|(next, jitter)| {
        let ideal = if next { NEXT_IDEAL } else { PREVIOUS_IDEAL };
        ideal.iter().zip(jitter).map(|(p, (dx, dy))| Vec2::new(p[0] + dx, p[1] + dy)).collect()
    })
}

fn any_stroke() -> impl Strategy<Value = Vec<Vec2>> {
    prop_oneof![stroke_points(), chevron()]
}

fn mirrored(c: Command) -> Command {
    match c {
        Command::Next => Command::Previous,
        Command::Previous => Command::Next,
        Command::Unrecognized => Command::Unrecognized,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1_000))]

    #[test]
    fn translation_and_scale_invariant(pts in any_stroke(), a in 0.1..10.0_f64, bx in -100.0..100.0_f64, by in -100.0..100.0_f64) {
        let r = Recognizer::default();
        let base = r.classify(&Stroke::new(pts.clone()).unwrap());
        let moved: Vec<Vec2> = pts.iter().map(|&p| p * a + Vec2::new(bx, by)).collect();
        let got = r.classify(&Stroke::new(moved).unwrap());
        prop_assert_eq!(got.command, base.command);
        prop_assert!((got.score - base.score).abs() <= 1e-9);
    }

    #[test]
    fn mirror_duality(pts in any_stroke()) {
        let r = Recognizer::default();
        let base = r.classify(&Stroke::new(pts.clone()).unwrap());
        let flipped: Vec<Vec2> = pts.iter().map(|p| Vec2::new(-p.x, p.y)).collect();
        let got = r.classify(&Stroke::new(flipped).unwrap());
        prop_assert_eq!(got.command, mirrored(base.command));
        prop_assert!((got.score - base.score).abs() <= 1e-9);
    }

    #[test]
    fn deterministic(pts in any_stroke()) {
        let r = Recognizer::default();
        let s = Stroke::new(pts).unwrap();
        let a = r.classify(&s);
        let b = r.classify(&s);
        prop_assert_eq!(a.command, b.command);
        prop_assert_eq!(a.score.to_bits(), b.score.to_bits());
    }
}

#[test]
fn ideals_score_one() {
    let r = Recognizer::default();
    for (ideal, cmd) in [(NEXT_IDEAL, Command::Next), (PREVIOUS_IDEAL, Command::Previous)] {
        let s = Stroke::new(ideal.iter().copied().map(Vec2::from).collect()).unwrap();
        let got = r.classify(&s);
        assert_eq!(got.command, cmd);
        assert_eq!(got.score, 1.0);
    }
}
