//! HTTP and server-sent-event service for viva voce examinations.
//!
//! Students take their own session; invigilators watch and may abort
//! sessions of their cohort; assessors create sessions and receive verdicts,
//! flags and transcripts. Authentication is by static bearer tokens.

pub mod app;
pub mod auth;
pub mod config;
pub mod error;
pub mod events;
pub mod routes;

pub use app::{AppState, ServerError, SessionSummary};
pub use auth::{Principal, Role, TokenRegistry};
pub use config::ServiceConfig;
pub use routes::{router, Endpoint};

use std::sync::Arc;
use std::time::{Duration, Instant};

/// Periodically aborts sessions whose answer window has closed.
pub fn spawn_reaper(state: Arc<AppState>, every: Duration) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut ticker = tokio::time::interval(every);
        loop {
            ticker.tick().await;
            let expired = state.sweep_timeouts(Instant::now()).await;
            if expired > 0 {
                tracing::info!(expired, "aborted sessions after answer timeout");
            }
        }
    })
}

/// Serves until interrupted.
pub async fn serve(config: ServiceConfig) -> Result<(), ServerError> {
    let state = Arc::new(AppState::from_config(&config)?);
    let reaper = spawn_reaper(Arc::clone(&state), Duration::from_millis(config.reaper_interval_ms.max(10)));
    let listener = tokio::net::TcpListener::bind(config.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    reaper.abort();
    Ok(())
}
