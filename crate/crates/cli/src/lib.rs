//! Command-line harness around the `histair` registration library: synthetic
//! test pairs with ground truth, registration reports, segmentation dumps,
//! evaluation and a brute-force correlation oracle.

pub mod commands;
pub mod error;
pub mod oracle;
pub mod report;
pub mod scene;
pub mod synth;

/// Sizes the global rayon pool. `None` falls back to `HISTAIR_THREADS`, then
/// to rayon's default (all cores).
pub fn configure_threads(threads: Option<usize>) -> Result<(), error::CliError> {
    let threads = match threads {
        Some(n) => Some(n),
        None => match std::env::var("HISTAIR_THREADS") {
            Ok(v) if !v.trim().is_empty() => Some(v.trim().parse::<usize>().map_err(|_| {
                error::CliError::Usage(format!(
                    "HISTAIR_THREADS must be a positive integer, got {v:?}"
                ))
            })?),
            _ => None,
        },
    };
    match threads {
        Some(0) => Err(error::CliError::Usage("thread count must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| error::CliError::Usage(format!("cannot size thread pool: {e}"))),
        None => Ok(()),
    }
}
