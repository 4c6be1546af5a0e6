//! Maximal satisfying subsets of a finite item set.
//!
//! Subsets are u64 bitmasks. The search walks levels from the full set
//! downward; a candidate covered by an already-recorded satisfying set is
//! skipped, so the result is exactly the antichain of maximal satisfying
//! subsets, for an arbitrary predicate. Probes within a level can run in
//! parallel; recording happens sequentially in mask order, so results and
//! error choices are deterministic either way.

use rayon::prelude::*;

use crate::{Error, Result};

/// Default cap on the item count, overridable through `XR_MAX_FACTS`.
pub const DEFAULT_MAX_ITEMS: usize = 24;

/// Effective item cap: `XR_MAX_FACTS` when set and parseable, else the
/// default. Values above 63 are clamped; masks are 64 bits wide.
pub fn max_items_limit() -> usize {
    std::env::var("XR_MAX_FACTS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .unwrap_or(DEFAULT_MAX_ITEMS)
        .min(63)
}

#[derive(Debug, Clone)]
pub struct LatticeOptions {
    pub max_items: usize,
    pub parallel: bool,
}

impl Default for LatticeOptions {
    fn default() -> Self {
        LatticeOptions {
            max_items: max_items_limit(),
            parallel: true,
        }
    }
}

/// All masks over `n` items with exactly `k` bits set, ascending.
fn masks_of_size(n: usize, k: usize) -> Vec<u64> {
    if k > n {
        return vec![];
    }
    if k == 0 {
        return vec![0];
    }
    let limit: u64 = 1 << n;
    let mut out = Vec::new();
    let mut mask: u64 = (1 << k) - 1;
    while mask < limit {
        out.push(mask);
        // Gosper's hack: next mask with the same popcount.
        let low = mask & mask.wrapping_neg();
        let carry = mask + low;
        mask = carry | (((mask ^ carry) / low) >> 2);
    }
    out
}

/// Finds the maximal subsets (as bitmasks, sorted ascending) on which the
/// predicate holds. Returns an empty vector when no subset satisfies it,
/// including the empty one.
pub fn maximal_satisfying_subsets<F>(
    n: usize,
    opts: &LatticeOptions,
    pred: F,
) -> Result<Vec<u64>>
where
    F: Fn(u64) -> Result<bool> + Sync,
{
    if n > opts.max_items || n > 63 {
        return Err(Error::Resource(format!(
            "subset search over {n} items exceeds the cap of {} (set XR_MAX_FACTS to raise it)",
            opts.max_items.min(63)
        )));
    }
    let mut found: Vec<u64> = Vec::new();
    for k in (0..=n).rev() {
        let candidates: Vec<u64> = masks_of_size(n, k)
            .into_iter()
            .filter(|m| !found.iter().any(|r| m & r == *m))
            .collect();
        if candidates.is_empty() {
            continue;
        }
        let probes: Vec<(u64, Result<bool>)> = if opts.parallel {
            candidates.into_par_iter().map(|m| (m, pred(m))).collect()
        } else {
            candidates.into_iter().map(|m| (m, pred(m))).collect()
        };
        // Probes are already in ascending mask order; record in that
        // order so the first error is deterministic.
        for (m, verdict) in probes {
            if verdict? {
                found.push(m);
            }
        }
    }
    found.sort();
    Ok(found)
}

/// Expands a mask over an indexed item slice.
pub fn select<T>(items: &[T], mask: u64) -> impl Iterator<Item = &T> {
    items
        .iter()
        .enumerate()
        .filter(move |(i, _)| mask & (1 << i) != 0)
        .map(|(_, t)| t)
}
