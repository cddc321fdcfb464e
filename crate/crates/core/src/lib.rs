//! Spatial input relay for livestream viewers.
//!
//! Viewers click or draw on the video they are watching; the relay forwards
//! those inputs, tagged with the viewer's broadcast latency and context, to an
//! application that resolves them against where its camera was when the viewer
//! actually saw the frame.
//!
//! - [`protocol`]: wire messages and input classification
//! - [`relay`]: the session state machine between viewers and the app
//! - [`compensation`]: camera history and latency-compensated resolution
//! - [`aggregation`]: poll and force rounds
//! - [`gesture`]: stroke recognition
//! - [`policy`]: funds, cooldowns, roles and bans
//! - [`apps`]: headless reference applications

// `!(x >= 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregation;
pub mod apps;
pub mod compensation;
pub mod config;
pub mod geom;
pub mod gesture;
pub mod policy;
pub mod protocol;
pub mod relay;

pub use compensation::{BufferParams, CameraBuffer, CameraState};
pub use config::Config;
pub use geom::{Rect, Vec2, WorldPoint};
pub use protocol::{decode, encode, Envelope, Message, NormPoint, ViewerEvent};
pub use relay::{AdmittedEvent, AppDelivery, Outbound, Session};
