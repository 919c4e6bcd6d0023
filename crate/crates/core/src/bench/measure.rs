use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tensor::ScopeGuard;

/// Runs `f` in an exclusive arena scope and returns its result with the
/// peak tensor bytes allocated above the scope's opening level. Fails with
/// `NestedScope` if called from inside another measurement.
pub fn measure_peak_memory<T>(f: impl FnOnce() -> T) -> Result<(T, u64)> {
    let scope = ScopeGuard::enter()?;
    let out = f();
    Ok((out, scope.delta()))
}

/// Runs `f` and returns its result with the elapsed monotonic time in
/// milliseconds.
pub fn measure_wall_time<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64() * 1e3)
}

/// Whether wall times are recorded. `Disabled` writes zeros so that
/// repeated sweeps emit byte-identical tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timing {
    #[default]
    Measured,
    Disabled,
}

impl Timing {
    pub fn time<T>(self, f: impl FnOnce() -> T) -> (T, u64) {
        match self {
            Timing::Measured => {
                let (out, ms) = measure_wall_time(f);
                (out, ms.round() as u64)
            }
            Timing::Disabled => (f(), 0),
        }
    }
}
