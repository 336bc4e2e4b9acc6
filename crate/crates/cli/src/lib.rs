//! Configuration, stage runner and stage implementations behind the
//! `stepturn` command.

pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;
mod stages;

pub use config::{Overrides, PipelineConfig, CONFIG_ENV};
pub use error::PipelineError;
pub use pipeline::{Outcome, Pipeline, Stage};

/// Maps `f` over `items` on at most `jobs` threads, keeping input order.
pub fn par_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| s.spawn(move || c.iter().map(f).collect::<Vec<R>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker thread panicked")).collect()
    })
}

#[cfg(test)]
mod tests {
    #[test]
    fn par_map_keeps_order() {
        let v: Vec<u32> = (0..103).collect();
        for jobs in [1, 2, 7] {
            assert_eq!(super::par_map(&v, jobs, |x| x * 2), v.iter().map(|x| x * 2).collect::<Vec<_>>());
        }
    }
}
