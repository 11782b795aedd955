use std::path::PathBuf;
use std::process::ExitCode;

use decomp_core::bundle::ModelBundle;
use decomp_service::{serve, AppState, DEFAULT_PORT, MODEL_DIR_ENV, PORT_ENV};

#[tokio::main]
async fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let port = match std::env::var(PORT_ENV) {
        Ok(p) => match p.parse::<u16>() {
            Ok(p) => p,
            Err(_) => {
                log::error!("{PORT_ENV}={p:?} is not a port number");
                return ExitCode::from(2);
            }
        },
        Err(_) => DEFAULT_PORT,
    };
    let bundle = match std::env::var_os(MODEL_DIR_ENV) {
        Some(dir) => {
            let dir = PathBuf::from(dir);
            match ModelBundle::load(&dir, true) {
                Ok(b) => {
                    log::info!("loaded model {} from {}", b.manifest.version, dir.display());
                    Some(b)
                }
                Err(e) => {
                    log::error!("cannot load model from {}: {e}", dir.display());
                    return ExitCode::from(1);
                }
            }
        }
        None => {
            log::warn!("{MODEL_DIR_ENV} not set; prediction endpoints return 503");
            None
        }
    };
    match serve(AppState::new(bundle), port).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(1)
        }
    }
}
