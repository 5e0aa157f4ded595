//! Telemetry ingestion service: bearer-token auth, an embedded document
//! store, regex queries, operator command routing and threshold alerts.

pub mod alerts;
pub mod auth;
pub mod commands;
pub mod config;
pub mod http;
pub mod store;

use std::future::Future;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;

use thiserror::Error;
use tokio::sync::oneshot;

use crate::alerts::CompiledRule;
use crate::auth::{Credentials, LoginThrottle, TokenSigner};
use crate::commands::CommandBook;
pub use crate::config::{Clock, ManualClock, ServiceConfig, SystemClock};
use crate::store::{Store, StoreError};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("alert rule '{name}': {message}")]
    Rule { name: String, message: String },
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        source: std::io::Error,
    },
    #[error("runtime: {0}")]
    Runtime(std::io::Error),
}

pub struct AppState {
    pub config: ServiceConfig,
    pub signer: TokenSigner,
    pub credentials: Credentials,
    pub throttle: Mutex<LoginThrottle>,
    pub store: RwLock<Store>,
    pub commands: Mutex<CommandBook>,
    pub rules: Vec<CompiledRule>,
    pub clock: Arc<dyn Clock>,
}

impl AppState {
    pub fn new(config: ServiceConfig, clock: Arc<dyn Clock>) -> Result<Self, ServiceError> {
        config.validate()?;
        let store = match &config.store_path {
            Some(p) => Store::open(p)?,
            None => Store::in_memory(),
        };
        let rules = config
            .alert_rules
            .iter()
            .cloned()
            .map(|r| {
                let name = r.name.clone();
                CompiledRule::compile(r).map_err(|e| ServiceError::Rule {
                    name,
                    message: e.to_string(),
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            signer: TokenSigner::new(config.secret.as_bytes().to_vec()),
            credentials: config.credentials.clone(),
            throttle: Mutex::new(LoginThrottle::default()),
            store: RwLock::new(store),
            commands: Mutex::new(CommandBook::new(config.redelivery_s)),
            rules,
            clock,
            config,
        })
    }
}

/// Serve until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, http::router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

/// A service running on its own runtime thread. Dropping it shuts it down.
pub struct ServiceHandle {
    addr: SocketAddr,
    state: Arc<AppState>,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl ServiceHandle {
    /// Bind `config.bind` and start serving in the background.
    pub fn start(config: ServiceConfig, clock: Arc<dyn Clock>) -> Result<Self, ServiceError> {
        let listener = std::net::TcpListener::bind(&config.bind).map_err(|source| ServiceError::Bind {
            addr: config.bind.clone(),
            source,
        })?;
        listener.set_nonblocking(true).map_err(ServiceError::Runtime)?;
        let addr = listener.local_addr().map_err(ServiceError::Runtime)?;
        let state = Arc::new(AppState::new(config, clock)?);
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .map_err(ServiceError::Runtime)?;
        let (stop, stopped) = oneshot::channel::<()>();
        let serve_state = state.clone();
        let thread = std::thread::Builder::new()
            .name("aquagreen-service".into())
            .spawn(move || {
                runtime.block_on(async move {
                    let listener = tokio::net::TcpListener::from_std(listener)?;
                    serve(listener, serve_state, async {
                        let _ = stopped.await;
                    })
                    .await
                })
            })
            .map_err(ServiceError::Runtime)?;
        Ok(Self {
            addr,
            state,
            stop: Some(stop),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn state(&self) -> &Arc<AppState> {
        &self.state
    }

    pub fn reading_count(&self) -> usize {
        self.state.store.read().expect("store lock").reading_count()
    }

    pub fn record_count(&self) -> usize {
        self.state.store.read().expect("store lock").record_count()
    }

    pub fn shutdown(mut self) -> std::io::Result<()> {
        self.stop_inner()
    }

    fn stop_inner(&mut self) -> std::io::Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("service thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        let _ = self.stop_inner();
    }
}
