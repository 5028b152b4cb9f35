use std::sync::Arc;

use anyhow::Context;

use crate::args::{Cli, ServeArgs};
use crate::exit::Outcome;
use crate::runner::runtime;

pub fn run(cli: &Cli, args: &ServeArgs) -> anyhow::Result<Outcome> {
    let engine = Arc::new(cli.engine.settings()?.build()?);
    runtime()?.block_on(async {
        let listener = tokio::net::TcpListener::bind(&args.addr)
            .await
            .with_context(|| format!("binding {}", args.addr))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        warden_server::serve(listener, engine, shutdown).await.context("serving")
    })?;
    Ok(Outcome::Granted)
}
