//! Execution mode for the per-agent work inside an integration step.
//!
//! Agents are evaluated against an immutable snapshot of all states and
//! write disjoint derivative blocks, so the two modes produce bit-identical
//! results; the choice only affects throughput.

/// How per-agent derivative evaluation is dispatched.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Parallelism {
    #[default]
    Sequential,
    /// Rayon data-parallel dispatch (needs the `parallel` feature).
    #[cfg(feature = "parallel")]
    Rayon,
}

impl Parallelism {
    /// Pick a mode for a fleet size. A per-agent evaluation is a few
    /// hundred nanoseconds, so the rayon dispatch only pays off for large
    /// fleets on a machine that actually has spare threads.
    pub fn auto(n_agents: usize) -> Self {
        #[cfg(feature = "parallel")]
        if n_agents >= 32 && rayon::current_num_threads() > 1 {
            return Parallelism::Rayon;
        }
        let _ = n_agents;
        Parallelism::Sequential
    }
}

/// Apply `f` to each indexed item, sequentially or via rayon.
pub(crate) fn for_each_indexed<T, F>(mode: Parallelism, items: Vec<T>, f: F)
where
    T: Send,
    F: Fn(usize, T) + Sync + Send,
{
    match mode {
        Parallelism::Sequential => {
            for (i, item) in items.into_iter().enumerate() {
                f(i, item);
            }
        }
        #[cfg(feature = "parallel")]
        Parallelism::Rayon => {
            use rayon::prelude::*;
            items
                .into_par_iter()
                .enumerate()
                .for_each(|(i, item)| f(i, item));
        }
    }
}
