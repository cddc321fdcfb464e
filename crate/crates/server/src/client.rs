//! Minimal websocket peer, used by the harness and tests in place of the
//! browser client.

use futures_util::{SinkExt, StreamExt};
use spatial_relay_core::protocol::{self, Envelope, Hello, Message, PeerRole, ProtocolError};
use thiserror::Error;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message as WsMessage;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("websocket: {0}")]
    Ws(#[from] tokio_tungstenite::tungstenite::Error),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("connection closed")]
    Closed,
}

/// A connected peer that numbers its own outgoing envelopes.
pub struct ViewerClient {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
    next_seq: u64,
}

impl ViewerClient {
    pub async fn connect(url: &str) -> Result<Self, ClientError> {
        let (ws, _) = tokio_tungstenite::connect_async_with_config(url, Some(crate::net::ws_config()), true).await?;
        Ok(Self { ws, next_seq: 1 })
    }

    /// Connects and registers as viewer `user`, waiting for the hello echo.
    pub async fn join(url: &str, user: &str) -> Result<Self, ClientError> {
        Self::join_as(url, Hello { role: PeerRole::Viewer, user: Some(user.to_string()) }).await
    }

    pub async fn join_as(url: &str, hello: Hello) -> Result<Self, ClientError> {
        let mut c = Self::connect(url).await?;
        c.send(Message::Hello(hello)).await?;
        match c.recv().await? {
            Envelope { message: Message::Hello(_), .. } => Ok(c),
            Envelope { message: Message::Error(e), .. } => {
                Err(ProtocolError::Malformed(format!("hello refused: {} ({})", e.code, e.detail)).into())
            }
            _ => Err(ProtocolError::Malformed("expected hello acknowledgement".into()).into()),
        }
    }

    /// Sends `message` with the next sequence number and returns that number.
    pub async fn send(&mut self, message: Message) -> Result<u64, ClientError> {
        let seq = self.next_seq;
        self.send_envelope(&Envelope::new(seq, message)).await?;
        self.next_seq += 1;
        Ok(seq)
    }

    pub async fn send_envelope(&mut self, envelope: &Envelope) -> Result<(), ClientError> {
        let text = protocol::encode_string(envelope)?;
        self.ws.send(WsMessage::text(text)).await?;
        Ok(())
    }

    /// Sends raw text, bypassing encoding. For malformed-input tests.
    pub async fn send_raw(&mut self, text: &str) -> Result<(), ClientError> {
        self.ws.send(WsMessage::text(text.to_string())).await?;
        Ok(())
    }

    /// Next envelope from the relay, skipping control frames.
    pub async fn recv(&mut self) -> Result<Envelope, ClientError> {
        loop {
            match self.ws.next().await {
                Some(Ok(WsMessage::Text(t))) => return Ok(protocol::decode(t.as_str().as_bytes())?),
                Some(Ok(WsMessage::Close(_))) | None => return Err(ClientError::Closed),
                Some(Ok(_)) => {}
                Some(Err(e)) => return Err(e.into()),
            }
        }
    }

    /// Closes the connection and waits for the relay's close reply.
    pub async fn close(mut self) -> Result<(), ClientError> {
        self.ws.close(None).await?;
        while let Some(msg) = self.ws.next().await {
            if msg.is_err() {
                break;
            }
        }
        Ok(())
    }
}
