//! Thread budget for internally parallel operations.

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "DEFECT_FOUNDRY_THREADS";

/// Number of worker threads to use: the value of `DEFECT_FOUNDRY_THREADS` when set to a
/// positive integer (never more than the hardware offers), otherwise the available hardware parallelism.
pub fn thread_budget() -> usize {
    let hw = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    match std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
    {
        Some(n) if n > 0 => n.min(hw),
        _ => hw,
    }
}
