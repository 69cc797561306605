//! Websocket front end: one [`Session`] per connection, ticked on a timer.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use teleassist::agents::AssistiveAgent;
use teleassist::envs::{Task, TaskInfo};
use teleassist::jointloop::GammaPolicy;
use tokio::net::TcpListener;

use crate::protocol::ServerMessage;
use crate::session::{Session, SessionConfig};

/// Default tick period: 10 Hz.
pub const TICK: Duration = Duration::from_millis(100);

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub task: Task,
    pub seed: u64,
    pub gamma: GammaPolicy,
    pub store: PathBuf,
    pub tick: Duration,
}

struct Shared {
    cfg: ServeConfig,
    agent: Option<Arc<AssistiveAgent>>,
    next_id: AtomicU64,
}

pub fn router(cfg: ServeConfig, agent: Option<AssistiveAgent>) -> Router {
    let shared = Arc::new(Shared {
        cfg,
        agent: agent.map(Arc::new),
        next_id: AtomicU64::new(0),
    });
    Router::new()
        .route("/", get(info))
        .route("/ws", get(upgrade))
        .with_state(shared)
}

/// Serves until the listener fails.
pub async fn serve(listener: TcpListener, cfg: ServeConfig, agent: Option<AssistiveAgent>) -> std::io::Result<()> {
    axum::serve(listener, router(cfg, agent)).await
}

async fn info(State(shared): State<Arc<Shared>>) -> Json<TaskInfo> {
    Json(shared.cfg.task.info())
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| run_session(socket, shared))
}

async fn send_all(socket: &mut WebSocket, msgs: Vec<ServerMessage>) -> bool {
    for m in msgs {
        if socket.send(Message::Text(m.to_json().into())).await.is_err() {
            return false;
        }
    }
    true
}

async fn run_session(mut socket: WebSocket, shared: Arc<Shared>) {
    let id = shared.next_id.fetch_add(1, Ordering::Relaxed);
    let cfg = &shared.cfg;
    let session_cfg = SessionConfig {
        task: cfg.task,
        seed: teleassist::rng::mix_seed(cfg.seed, id),
        gamma: cfg.gamma,
        store: cfg.store.clone(),
    };
    let mut session = match Session::new(id, session_cfg, shared.agent.clone()) {
        Ok(s) => s,
        Err(e) => {
            send_all(&mut socket, vec![ServerMessage::error(e)]).await;
            return;
        }
    };
    if !send_all(&mut socket, vec![session.state_message()]).await {
        return;
    }
    let mut timer = tokio::time::interval(cfg.tick);
    timer.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    timer.tick().await;
    loop {
        tokio::select! {
            _ = timer.tick() => {
                let out = session.tick();
                if !send_all(&mut socket, out).await {
                    break;
                }
            }
            frame = socket.recv() => {
                let out = match frame {
                    Some(Ok(Message::Text(text))) => session.handle_text(text.as_str()),
                    Some(Ok(Message::Binary(_))) => vec![ServerMessage::error("binary frames are not supported")],
                    Some(Ok(Message::Ping(_) | Message::Pong(_))) => Vec::new(),
                    // disconnect: the unsaved recording goes with the session
                    Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                };
                if !send_all(&mut socket, out).await {
                    break;
                }
            }
        }
    }
}
