use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use futures_util::{SinkExt, StreamExt};
use spatial_relay_core::relay::ConnId;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, watch};
use tokio_tungstenite::tungstenite::protocol::WebSocketConfig;
use tokio_tungstenite::tungstenite::Message as WsMessage;

use crate::hub::{Command, PeerFrame, OUTBOUND_QUEUE};

/// Largest accepted websocket message. Wire messages are small JSON objects.
pub const MAX_MESSAGE_BYTES: usize = 64 * 1024;

pub(crate) fn ws_config() -> WebSocketConfig {
    WebSocketConfig::default().max_message_size(Some(MAX_MESSAGE_BYTES)).max_frame_size(Some(MAX_MESSAGE_BYTES))
}

pub(crate) async fn accept_loop(
    listener: TcpListener,
    hub: mpsc::Sender<Command>,
    mut shutdown: watch::Receiver<bool>,
) {
    // Id 0 is reserved for the in-process app.
    let next_id = Arc::new(AtomicU64::new(1));
    loop {
        tokio::select! {
            accepted = listener.accept() => match accepted {
                Ok((stream, peer)) => {
                    let conn = next_id.fetch_add(1, Ordering::Relaxed);
                    log::debug!("connection {conn} from {peer}");
                    tokio::spawn(serve_conn(conn, stream, hub.clone(), shutdown.clone()));
                }
                Err(e) => log::warn!("accept failed: {e}"),
            },
            _ = shutdown.changed() => break,
        }
    }
}

async fn serve_conn(conn: ConnId, stream: TcpStream, hub: mpsc::Sender<Command>, mut shutdown: watch::Receiver<bool>) {
    let _ = stream.set_nodelay(true);
    let ws = match tokio_tungstenite::accept_async_with_config(stream, Some(ws_config())).await {
        Ok(ws) => ws,
        Err(e) => {
            log::debug!("handshake with {conn} failed: {e}");
            return;
        }
    };
    let (mut sink, mut source) = ws.split();
    let (tx, mut rx) = mpsc::channel(OUTBOUND_QUEUE);
    if hub.send(Command::Connect { conn, tx }).await.is_err() {
        return;
    }

    let writer = tokio::spawn(async move {
        while let Some(frame) = rx.recv().await {
            let res = match frame {
                PeerFrame::Text(text) => sink.send(WsMessage::text(text)).await,
                PeerFrame::Close => {
                    let _ = sink.send(WsMessage::Close(None)).await;
                    break;
                }
            };
            if let Err(e) = res {
                log::debug!("write to {conn} failed: {e}");
                break;
            }
        }
        let _ = sink.close().await;
    });

    loop {
        tokio::select! {
            msg = source.next() => match msg {
                Some(Ok(WsMessage::Text(text))) => {
                    let bytes = text.as_str().as_bytes().to_vec();
                    if hub.send(Command::Frame { conn, bytes }).await.is_err() {
                        break;
                    }
                }
                // Binary frames are decoded the same way as text ones.
                Some(Ok(WsMessage::Binary(bytes))) => {
                    if hub.send(Command::Frame { conn, bytes: bytes.to_vec() }).await.is_err() {
                        break;
                    }
                }
                Some(Ok(WsMessage::Close(_))) | None => break,
                Some(Ok(_)) => {}
                Some(Err(e)) => {
                    log::debug!("read from {conn} failed: {e}");
                    break;
                }
            },
            _ = shutdown.changed() => break,
        }
    }
    let _ = hub.send(Command::Disconnect { conn }).await;
    let _ = writer.await;
}
