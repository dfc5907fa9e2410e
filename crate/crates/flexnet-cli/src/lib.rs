//! Experiment harness for the flexnet library: model sampling, bound
//! verification, family sweeps and the monotonicity battery, plus the CSV/JSON
//! emitters used by the `flexnet` binary.

pub mod battery;
pub mod experiment;
pub mod output;
pub mod sampler;

/// Map a vector, in parallel when the `parallel` feature is on. Output order
/// matches input order either way.
pub(crate) fn par_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}
