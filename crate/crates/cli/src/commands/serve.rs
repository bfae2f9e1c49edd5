use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use hintcolor_service::AppState;

use crate::config::overlay;
use crate::{CliError, ServeArgs};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ServeSettings {
    pub bind: String,
    pub ttl_secs: u64,
    pub patch_size: usize,
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(e) => {
                log::warn!("cannot listen for SIGTERM: {e}");
                std::future::pending::<()>().await
            }
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    log::info!("shutting down");
}

pub fn run(args: ServeArgs, overrides: Option<&Value>) -> Result<(), CliError> {
    let settings = overlay(
        ServeSettings {
            bind: args.bind,
            ttl_secs: args.ttl_secs,
            patch_size: args.patch_size,
        },
        overrides,
    )?;
    if settings.patch_size == 0 {
        return Err(CliError::user("patch_size must be positive"));
    }
    let state = AppState::load(&args.checkpoint, Duration::from_secs(settings.ttl_secs))?
        .with_patch_size(settings.patch_size);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::internal(format!("cannot start runtime: {e}")))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&settings.bind)
            .await
            .map_err(|e| CliError::user(format!("cannot bind {}: {e}", settings.bind)))?;
        let addr = listener.local_addr().map_err(|e| CliError::internal(e.to_string()))?;
        println!("serving {} on http://{addr}", state.checkpoint_name());
        hintcolor_service::serve(listener, Arc::new(state), shutdown_signal())
            .await
            .map_err(|e| CliError::internal(format!("server failed: {e}")))
    })
}
