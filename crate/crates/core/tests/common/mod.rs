#![allow(dead_code)]

use proptest::collection::{btree_map, vec};
use proptest::prelude::*;
use spatial_relay_core::protocol::{
    AppUpdate, Audience, ContextPayload, Envelope, ErrorBody, EventKind, Hello, KvMap, Message, NormPoint, PeerRole,
    ViewerEvent,
};

pub fn username() -> impl Strategy<Value = String> {
    prop_oneof![
        4 => "[a-z][a-z0-9_]{0,11}",
        1 => "\\PC{1,64}",
    ]
}

pub fn kv_map() -> impl Strategy<Value = KvMap> {
    btree_map("\\PC{0,32}", "\\PC{0,40}", 0..6)
}

pub fn unit() -> impl Strategy<Value = f64> {
    prop_oneof![
        8 => 0.0..=1.0_f64,
        1 => Just(0.0),
        1 => Just(1.0),
        1 => Just(0.1 + 0.2),
    ]
}

pub fn norm_point() -> impl Strategy<Value = NormPoint> {
    (unit(), unit()).prop_map(|(x, y)| NormPoint::new(x, y).unwrap())
}

pub fn viewer_event() -> impl Strategy<Value = ViewerEvent> {
    let latency = 0..20_000_u64;
    let click = (username(), norm_point(), latency.clone(), any::<i64>())
        .prop_map(|(u, p, l, ts)| ViewerEvent::click(u, p, l, ts));
    let gesture =
        (username(), vec((norm_point(), 0..200_u64), 2..24), latency, any::<i64>()).prop_map(|(u, pts, l, ts)| {
            let mut offset = 0;
            let mut offsets = Vec::new();
            let mut points = Vec::new();
            for (i, (p, step)) in pts.into_iter().enumerate() {
                if i > 0 {
                    offset += step;
                }
                offsets.push(offset);
                points.push(p);
            }
            ViewerEvent::gesture(u, points, offsets, l, ts)
        });
    prop_oneof![click, gesture]
}

pub fn message() -> impl Strategy<Value = Message> {
    prop_oneof![
        4 => viewer_event().prop_map(Message::MouseEvent),
        2 => (username(), kv_map()).prop_map(|(u, d)| Message::Context(ContextPayload::new(u, d))),
        2 => (kv_map(), prop_oneof![Just(None), username().prop_map(Some)]).prop_map(|(payload, to)| {
            let audience = to.map_or(Audience::All, Audience::SingleUser);
            Message::AppUpdate(AppUpdate { payload, audience })
        }),
        1 => prop_oneof![
            username().prop_map(|u| Hello { role: PeerRole::Viewer, user: Some(u) }),
            Just(Hello { role: PeerRole::App, user: None }),
        ]
        .prop_map(Message::Hello),
        1 => ("[a-z_]{1,20}", "\\PC{0,80}").prop_map(|(code, detail)| Message::Error(ErrorBody { code, detail })),
    ]
}

pub fn envelope() -> impl Strategy<Value = Envelope> {
    (0..=i64::MAX as u64, message()).prop_map(|(seq, message)| Envelope::new(seq, message))
}

pub fn is_kind(e: &ViewerEvent, kind: EventKind) -> bool {
    e.kind == kind
}
