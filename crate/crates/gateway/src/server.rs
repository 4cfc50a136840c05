use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use floc_core::{Config, TelemetryStore, TickError, TreeNode};
use thiserror::Error;
use tokio::io::{AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::task::JoinSet;
use tokio::time::MissedTickBehavior;

use crate::ingest::{read_frame, Frame, IngestReply, RejectReason, MAX_LINE_BYTES};
use crate::state::Gateway;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("binding {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("opening audit log: {0}")]
    Audit(std::io::Error),
    #[error(transparent)]
    Store(#[from] floc_core::StoreError),
    #[error("http server: {0}")]
    Http(std::io::Error),
}

/// Bound listeners plus the shared state. Binding is separate from running
/// so callers (and tests using port 0) can learn the real addresses first.
pub struct Server {
    gateway: Gateway,
    http: TcpListener,
    ingest: TcpListener,
}

impl Server {
    /// Recovers the store named in `config`, binds both listeners and opens
    /// the audit log.
    pub async fn from_config(config: &Config, tree: TreeNode) -> Result<Server, ServeError> {
        let (store, stats) = TelemetryStore::recover(&config.store_path)?;
        if stats.dropped_bytes > 0 {
            tracing::warn!(dropped_bytes = stats.dropped_bytes, "discarded torn record at end of telemetry log");
        }
        tracing::info!(records = stats.records, path = %config.store_path.display(), "telemetry log opened");
        let mut gateway = Gateway::new(Arc::new(store), tree, config.clone());
        if let Some(path) = &config.audit_path {
            gateway = gateway.with_audit_log(path).map_err(ServeError::Audit)?;
        }
        Server::bind(gateway, &config.listen_addr, &config.ingest_addr).await
    }

    pub async fn bind(gateway: Gateway, http_addr: &str, ingest_addr: &str) -> Result<Server, ServeError> {
        let bind = |addr: &str| {
            let addr = addr.to_string();
            async move { TcpListener::bind(&addr).await.map_err(|source| ServeError::Bind { addr, source }) }
        };
        Ok(Server { http: bind(http_addr).await?, ingest: bind(ingest_addr).await?, gateway })
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn http_addr(&self) -> SocketAddr {
        self.http.local_addr().expect("bound listener has an address")
    }

    pub fn ingest_addr(&self) -> SocketAddr {
        self.ingest.local_addr().expect("bound listener has an address")
    }

    /// Serves HTTP, ingest and the tick loop until [`Gateway::shutdown`] is
    /// called, then drains connections and syncs the store.
    pub async fn run(self) -> Result<(), ServeError> {
        let Server { gateway, http, ingest } = self;
        tracing::info!(http = %http.local_addr().map_err(ServeError::Http)?, ingest = %ingest.local_addr().map_err(ServeError::Http)?, "serving");

        let mut tasks = JoinSet::new();
        tasks.spawn(tick_loop(gateway.clone()));
        tasks.spawn(ingest_loop(gateway.clone(), ingest));

        let app = crate::api::router(gateway.clone());
        let served = axum::serve(http, app).with_graceful_shutdown(gateway.shutdown_signal()).await;
        // The HTTP server only returns on shutdown or a fatal accept error.
        gateway.shutdown();
        while tasks.join_next().await.is_some() {}
        gateway.flush()?;
        tracing::info!("shut down cleanly");
        served.map_err(ServeError::Http)
    }
}

/// Ticks every `tick_ms`. A slow tick delays the next one rather than
/// letting ticks pile up or overlap.
async fn tick_loop(gateway: Gateway) {
    let budget = Duration::from_millis(gateway.tick_ms());
    let mut interval = tokio::time::interval(budget);
    interval.set_missed_tick_behavior(MissedTickBehavior::Delay);
    let stop = gateway.shutdown_signal();
    tokio::pin!(stop);
    loop {
        tokio::select! {
            _ = &mut stop => break,
            _ = interval.tick() => {}
        }
        match gateway.tick().await {
            Ok(report) => {
                if report.elapsed() >= budget {
                    tracing::warn!(elapsed_ms = report.elapsed_ms, budget_ms = gateway.tick_ms(), "tick over budget");
                }
            }
            Err(TickError::NoData) => tracing::trace!("no telemetry yet, tick skipped"),
            Err(e) => tracing::error!(error = %e, "tick failed"),
        }
    }
}

async fn ingest_loop(gateway: Gateway, listener: TcpListener) {
    let mut conns = JoinSet::new();
    let stop = gateway.shutdown_signal();
    tokio::pin!(stop);
    loop {
        tokio::select! {
            _ = &mut stop => break,
            accepted = listener.accept() => match accepted {
                Ok((sock, peer)) => {
                    tracing::debug!(%peer, "ingest connection");
                    conns.spawn(serve_ingest(gateway.clone(), sock));
                }
                Err(e) => tracing::warn!(error = %e, "ingest accept failed"),
            },
            Some(_) = conns.join_next(), if !conns.is_empty() => {}
        }
    }
    conns.shutdown().await;
}

/// One reply line per frame; rejects never close the connection.
pub async fn serve_ingest(gateway: Gateway, sock: TcpStream) {
    let (rd, mut wr) = sock.into_split();
    let mut rd = BufReader::with_capacity(MAX_LINE_BYTES + 2, rd);
    let stop = gateway.shutdown_signal();
    tokio::pin!(stop);
    loop {
        let frame = tokio::select! {
            _ = &mut stop => break,
            f = read_frame(&mut rd) => f,
        };
        let reply = match frame {
            Ok(None) => break,
            Ok(Some(Frame::Line(line))) => gateway.ingest_line(&line),
            Ok(Some(Frame::TooLong(n))) => {
                IngestReply::reject(RejectReason::LineTooLong, format!("{n} bytes exceeds {MAX_LINE_BYTES}"))
            }
            Err(e) => {
                tracing::debug!(error = %e, "ingest read failed");
                break;
            }
        };
        if wr.write_all(reply.to_line().as_bytes()).await.is_err() {
            break;
        }
    }
    let _ = wr.shutdown().await;
}
