//! Deterministic parallel reduction.
//!
//! `rayon`'s fold/reduce splits depend on work stealing, so float sums come
//! out bitwise different from run to run. Reports must be byte-identical
//! for identical inputs, so all Monte Carlo accumulation goes through
//! [`indexed_block_sum`]: fixed-width index blocks are each accumulated
//! sequentially in index order, and the block partials are folded in block
//! order. The result is independent of the worker count.

use rayon::prelude::*;

use crate::error::Result;

/// Paths per block: large enough to amortize scheduling, small enough to
/// keep every core busy on typical path counts.
const BLOCK_WIDTH: u64 = 1024;

pub(crate) fn indexed_block_sum<A, F, M>(
    n: u64,
    init: impl Fn() -> A + Sync,
    eval: F,
    merge: M,
) -> Result<A>
where
    A: Send,
    F: Fn(&mut A, u64) -> Result<()> + Sync,
    M: Fn(&mut A, A),
{
    let blocks = n.div_ceil(BLOCK_WIDTH);
    let partials: Vec<A> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let lo = b * BLOCK_WIDTH;
            let hi = (lo + BLOCK_WIDTH).min(n);
            let mut acc = init();
            for i in lo..hi {
                eval(&mut acc, i)?;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = init();
    for p in partials {
        merge(&mut total, p);
    }
    Ok(total)
}
