//! Unistroke gesture decoding by resample-and-compare template matching.
//!
//! A stroke is resampled to [`RESAMPLE_POINTS`] equidistant points along its
//! arc length, centered on its centroid and scaled so that its bounding box's
//! longest side is 1. The score against a template is one minus the mean
//! point-to-point distance. Rotation is deliberately not normalized away,
//! since `>` and `<` differ only in orientation.

use serde::Deserialize;
use thiserror::Error;

use crate::geom::Vec2;
use crate::protocol::{EventKind, ViewerEvent};

pub const RESAMPLE_POINTS: usize = 32;
pub const DEFAULT_ACCEPT_THRESHOLD: f64 = 0.7;
const DEGENERATE_ARC: f64 = 1e-6;
/// Best scores for different commands closer than this are treated as a tie.
pub const AMBIGUITY_MARGIN: f64 = 1e-9;

/// Ideal rightward chevron in frame coordinates.
pub const NEXT_IDEAL: [[f64; 2]; 3] = [[0.2, 0.2], [0.6, 0.5], [0.2, 0.8]];
/// Horizontal mirror of [`NEXT_IDEAL`].
pub const PREVIOUS_IDEAL: [[f64; 2]; 3] = [[0.6, 0.2], [0.2, 0.5], [0.6, 0.8]];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GestureError {
    #[error("stroke needs at least two finite points")]
    InvalidStroke,
    #[error("invalid template file: {0}")]
    InvalidTemplate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Next,
    Previous,
    Unrecognized,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Next => "next",
            Command::Previous => "previous",
            Command::Unrecognized => "unrecognized",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GestureCommand {
    pub command: Command,
    /// Best template score in `[0, 1]`, reported even when unrecognized.
    pub score: f64,
}

/// A drawn stroke in frame coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Stroke {
    points: Vec<Vec2>,
}

impl Stroke {
    pub fn new(points: Vec<Vec2>) -> Result<Self, GestureError> {
        if points.len() < 2 || points.iter().any(|p| !p.is_finite()) {
            return Err(GestureError::InvalidStroke);
        }
        Ok(Self { points })
    }

    pub fn from_event(event: &ViewerEvent) -> Result<Self, GestureError> {
        if event.kind != EventKind::Gesture {
            return Err(GestureError::InvalidStroke);
        }
        Self::new(event.points.iter().map(|p| Vec2::new(p.x(), p.y())).collect())
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }
}

/// Canonical form of a stroke: resampled, centered and unit-scaled.
pub fn normalize_stroke(points: &[Vec2]) -> Vec<Vec2> {
    let resampled = match resample(points, RESAMPLE_POINTS) {
        Some(r) => r,
        None => return vec![Vec2::ZERO; RESAMPLE_POINTS],
    };
    let n = resampled.len() as f64;
    let centroid = resampled.iter().fold(Vec2::ZERO, |acc, &p| acc + p) * (1.0 / n);
    let (mut min, mut max) = (resampled[0], resampled[0]);
    for p in &resampled {
        min = Vec2::new(min.x.min(p.x), min.y.min(p.y));
        max = Vec2::new(max.x.max(p.x), max.y.max(p.y));
    }
    let side = (max.x - min.x).max(max.y - min.y);
    resampled.into_iter().map(|p| (p - centroid) * (1.0 / side)).collect()
}

/// Equidistant resampling along arc length; `None` for degenerate strokes.
fn resample(points: &[Vec2], n: usize) -> Option<Vec<Vec2>> {
    let mut cumulative = Vec::with_capacity(points.len());
    let mut total = 0.0;
    cumulative.push(0.0);
    for w in points.windows(2) {
        total += w[0].distance(w[1]);
        cumulative.push(total);
    }
    if !(total >= DEGENERATE_ARC) {
        return None;
    }
    let step = total / (n - 1) as f64;
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for k in 0..n - 1 {
        let target = step * k as f64;
        while seg + 1 < points.len() - 1 && cumulative[seg + 1] < target {
            seg += 1;
        }
        let seg_len = cumulative[seg + 1] - cumulative[seg];
        let t = if seg_len > 0.0 { ((target - cumulative[seg]) / seg_len).clamp(0.0, 1.0) } else { 0.0 };
        out.push(points[seg] + (points[seg + 1] - points[seg]) * t);
    }
    out.push(*points.last().expect("non-empty"));
    Some(out)
}

fn mean_distance(a: &[Vec2], b: &[Vec2]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p.distance(*q)).sum::<f64>() / a.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub name: String,
    pub command: Command,
    canonical: Vec<Vec2>,
}

impl Template {
    pub fn new(name: impl Into<String>, command: Command, points: &[Vec2]) -> Result<Self, GestureError> {
        if command == Command::Unrecognized {
            return Err(GestureError::InvalidTemplate("template command must be next or previous".into()));
        }
        let stroke = Stroke::new(points.to_vec()).map_err(|e| GestureError::InvalidTemplate(e.to_string()))?;
        if resample(stroke.points(), RESAMPLE_POINTS).is_none() {
            return Err(GestureError::InvalidTemplate("template stroke is degenerate".into()));
        }
        Ok(Self { name: name.into(), command, canonical: normalize_stroke(stroke.points()) })
    }

    pub fn canonical(&self) -> &[Vec2] {
        &self.canonical
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateSpec {
    name: String,
    points: Vec<[f64; 2]>,
    command: Command,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recognizer {
    templates: Vec<Template>,
    accept_threshold: f64,
}

impl Default for Recognizer {
    fn default() -> Self {
        Self::builtin(DEFAULT_ACCEPT_THRESHOLD)
    }
}

fn ideal(points: &[[f64; 2]]) -> Vec<Vec2> {
    points.iter().copied().map(Vec2::from).collect()
}

impl Recognizer {
    /// The two chevron templates.
    pub fn builtin(accept_threshold: f64) -> Self {
        let templates = vec![
            Template::new("chevron-right", Command::Next, &ideal(&NEXT_IDEAL)).expect("valid ideal"),
            Template::new("chevron-left", Command::Previous, &ideal(&PREVIOUS_IDEAL)).expect("valid ideal"),
        ];
        Self { templates, accept_threshold }
    }

    pub fn with_templates(templates: Vec<Template>, accept_threshold: f64) -> Result<Self, GestureError> {
        if templates.is_empty() {
            return Err(GestureError::InvalidTemplate("template set is empty".into()));
        }
        Ok(Self { templates, accept_threshold })
    }

    /// Loads `[{"name": .., "points": [[x,y],..], "command": "next"|"previous"}, ..]`.
    pub fn from_json(bytes: &[u8], accept_threshold: f64) -> Result<Self, GestureError> {
        let specs: Vec<TemplateSpec> =
            serde_json::from_slice(bytes).map_err(|e| GestureError::InvalidTemplate(e.to_string()))?;
        let templates = specs
            .into_iter()
            .map(|s| Template::new(s.name, s.command, &ideal(&s.points)))
            .collect::<Result<Vec<_>, _>>()?;
        Self::with_templates(templates, accept_threshold)
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn accept_threshold(&self) -> f64 {
        self.accept_threshold
    }

    /// Scores the stroke against every template. The best template wins
    /// unless a template for a different command scores within
    /// [`AMBIGUITY_MARGIN`] of it, in which case the stroke is ambiguous and
    /// left unrecognized.
    pub fn classify(&self, stroke: &Stroke) -> GestureCommand {
        let canonical = normalize_stroke(stroke.points());
        let scores: Vec<(f64, Command)> = self
            .templates
            .iter()
            .map(|t| ((1.0 - mean_distance(&canonical, &t.canonical)).clamp(0.0, 1.0), t.command))
            .collect();
        let (score, command) = scores
            .iter()
            .copied()
            .reduce(|best, next| if next.0 > best.0 { next } else { best })
            .expect("recognizer holds at least one template");
        let contested = scores.iter().any(|&(s, c)| c != command && score - s <= AMBIGUITY_MARGIN);
        if score >= self.accept_threshold && !contested {
            GestureCommand { command, score }
        } else {
            GestureCommand { command: Command::Unrecognized, score }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(raw: &[[f64; 2]]) -> Vec<Vec2> {
        ideal(raw)
    }

    #[test]
    fn horizontal_segment_canonical_form() {
        let c = normalize_stroke(&pts(&[[0.0, 0.0], [1.0, 0.0]]));
        assert_eq!(c.len(), RESAMPLE_POINTS);
        for (k, p) in c.iter().enumerate() {
            let expected = -0.5 + k as f64 / 31.0;
            assert!((p.x - expected).abs() < 1e-12, "{k}: {p:?}");
            assert_eq!(p.y, 0.0);
        }
    }

    #[test]
    fn degenerate_stroke_collapses_to_origin() {
        let c = normalize_stroke(&pts(&[[0.4, 0.4], [0.4, 0.4]]));
        assert_eq!(c, vec![Vec2::ZERO; RESAMPLE_POINTS]);
    }

    #[test]
    fn translation_gives_same_canonical_form() {
        let base = pts(&[[0.1, 0.1], [0.3, 0.25], [0.2, 0.5], [0.05, 0.3]]);
        let moved: Vec<Vec2> = base.iter().map(|&p| p + Vec2::new(0.3, 0.2)).collect();
        for (a, b) in normalize_stroke(&base).iter().zip(normalize_stroke(&moved)) {
            assert!(a.distance(b) < 1e-12);
        }
    }

    #[test]
    fn resample_spacing_is_uniform() {
        let c = resample(&pts(&[[0.0, 0.0], [3.0, 0.0], [3.0, 1.0]]), RESAMPLE_POINTS).unwrap();
        let step = 4.0 / 31.0;
        for w in c.windows(2) {
            // consecutive samples straddling the corner are closer than the arc step
            assert!(w[0].distance(w[1]) <= step + 1e-12);
        }
        assert_eq!(c[31], Vec2::new(3.0, 1.0));
    }

    #[test]
    fn ideal_chevrons() {
        let r = Recognizer::default();
        let next = r.classify(&Stroke::new(pts(&NEXT_IDEAL)).unwrap());
        assert_eq!(next, GestureCommand { command: Command::Next, score: 1.0 });
        let prev = r.classify(&Stroke::new(pts(&PREVIOUS_IDEAL)).unwrap());
        assert_eq!(prev, GestureCommand { command: Command::Previous, score: 1.0 });
    }

    #[test]
    fn straight_line_is_unrecognized() {
        let r = Recognizer::default();
        let g = r.classify(&Stroke::new(pts(&[[0.1, 0.5], [0.9, 0.5]])).unwrap());
        assert_eq!(g.command, Command::Unrecognized);
        assert!(g.score < DEFAULT_ACCEPT_THRESHOLD);
    }

    #[test]
    fn template_file_round() {
        let json = br#"[{"name":"v","points":[[0,0],[0.5,1],[1,0]],"command":"next"}]"#;
        let r = Recognizer::from_json(json, 0.7).unwrap();
        assert_eq!(r.templates().len(), 1);
        let g = r.classify(&Stroke::new(pts(&[[0.0, 0.0], [0.5, 1.0], [1.0, 0.0]])).unwrap());
        assert_eq!(g.command, Command::Next);
        assert!(Recognizer::from_json(b"[]", 0.7).is_err());
        assert!(Recognizer::from_json(br#"[{"name":"x","points":[[0,0]],"command":"next"}]"#, 0.7).is_err());
        assert!(
            Recognizer::from_json(br#"[{"name":"x","points":[[0,0],[1,1]],"command":"unrecognized"}]"#, 0.7).is_err()
        );
        assert!(Recognizer::from_json(br#"[{"name":"x","points":[[0,0],[0,0]],"command":"next"}]"#, 0.7).is_err());
    }

    #[test]
    fn stroke_from_event_requires_gesture() {
        use crate::protocol::NormPoint;
        let click = ViewerEvent::click("a", NormPoint::new(0.1, 0.1).unwrap(), 0, 0);
        assert!(Stroke::from_event(&click).is_err());
    }
}
