//! Process-wide switch that forbids outbound network calls.
//!
//! Every remote client in this crate checks [`ensure_allowed`] before opening
//! a connection. Replay/rule runs set the guard so that an accidental remote
//! call fails loudly instead of silently reaching the network.

use std::sync::atomic::{AtomicBool, Ordering};

use thiserror::Error;

/// Environment variable that activates the guard when set to `1`/`true`.
pub const FORBID_NETWORK_ENV: &str = "FORPKG_FORBID_NETWORK";

static FORBIDDEN: AtomicBool = AtomicBool::new(false);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("network access forbidden (attempted: {0})")]
pub struct NetworkForbidden(pub String);

pub fn forbid_network() {
    FORBIDDEN.store(true, Ordering::SeqCst);
}

pub fn allow_network() {
    FORBIDDEN.store(false, Ordering::SeqCst);
}

pub fn network_forbidden() -> bool {
    if FORBIDDEN.load(Ordering::SeqCst) {
        return true;
    }
    matches!(std::env::var(FORBID_NETWORK_ENV).as_deref(), Ok("1") | Ok("true") | Ok("yes"))
}

pub fn ensure_allowed(target: &str) -> Result<(), NetworkForbidden> {
    if network_forbidden() {
        log::error!("blocked network access to {target}");
        Err(NetworkForbidden(target.to_string()))
    } else {
        Ok(())
    }
}
