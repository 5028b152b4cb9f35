#![allow(dead_code)]

use std::collections::HashMap;

use warden_core::memory::{MemoryEntry, MemoryStore, RetrievalOrder};

/// Edit distance by memoized recursion over suffixes.
pub fn lev_oracle(a: &str, b: &str) -> usize {
    fn go(a: &[char], b: &[char], memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if a.is_empty() {
            return b.len();
        }
        if b.is_empty() {
            return a.len();
        }
        if let Some(&d) = memo.get(&(a.len(), b.len())) {
            return d;
        }
        let d = if a[0] == b[0] {
            go(&a[1..], &b[1..], memo)
        } else {
            1 + go(&a[1..], b, memo).min(go(a, &b[1..], memo)).min(go(&a[1..], &b[1..], memo))
        };
        memo.insert((a.len(), b.len()), d);
        d
    }
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    go(&a, &b, &mut HashMap::new())
}

/// Ids of the `k` entries tagged `tag` picked one at a time: the closest (or
/// farthest) remaining entry, smaller id first on ties.
pub fn retrieve_oracle(
    store: &MemoryStore,
    tag: &str,
    input: &str,
    output: &str,
    k: usize,
    order: RetrievalOrder,
) -> Vec<u64> {
    let query = format!("{input}\n{output}");
    let mut pool: Vec<(&MemoryEntry, usize)> = store
        .entries()
        .iter()
        .filter(|e| e.benchmark_tag == tag)
        .map(|e| (e, lev_oracle(&format!("{}\n{}", e.agent_input, e.agent_output), &query)))
        .collect();
    let mut picked = Vec::new();
    while picked.len() < k && !pool.is_empty() {
        let mut best = 0;
        for i in 1..pool.len() {
            let (e, d) = pool[i];
            let (b, bd) = pool[best];
            let better = match order {
                RetrievalOrder::MostSimilar => d < bd,
                RetrievalOrder::LeastSimilar => d > bd,
            };
            if better || (d == bd && e.id < b.id) {
                best = i;
            }
        }
        picked.push(pool.remove(best).0.id);
    }
    picked
}
