//! Fill-reducing ordering for symmetric sparse matrices.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// Minimum-degree ordering on the explicit elimination graph.
///
/// `adjacency[i]` lists the neighbours of node `i` (symmetric, self loops
/// ignored). Returns `perm` with `perm[new] = old`. Ties are broken by the
/// smallest node index, so the result is deterministic.
pub fn minimum_degree(adjacency: &[Vec<usize>]) -> Vec<usize> {
    constrained_minimum_degree(adjacency, &vec![Vec::new(); adjacency.len()])
}

/// Minimum degree where node `i` may only be eliminated after every node in
/// `after[i]`. Used on saddle-point matrices so that a constraint row is
/// pivoted only once the variables that make its pivot nonzero are gone.
pub fn constrained_minimum_degree(adjacency: &[Vec<usize>], after: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    assert_eq!(after.len(), n);
    let mut adj: Vec<Vec<usize>> = adjacency
        .iter()
        .enumerate()
        .map(|(i, nb)| {
            let mut v: Vec<usize> = nb.iter().copied().filter(|&j| j != i).collect();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect();
    let mut waiting: Vec<usize> = after.iter().map(Vec::len).collect();
    let mut unlocks: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, pre) in after.iter().enumerate() {
        for &p in pre {
            unlocks[p].push(i);
        }
    }
    let mut ready: Vec<bool> = waiting.iter().map(|&w| w == 0).collect();
    let mut eliminated = vec![false; n];
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = adj
        .iter()
        .enumerate()
        .filter(|&(i, _)| ready[i])
        .map(|(i, v)| Reverse((v.len(), i)))
        .collect();
    let mut perm = Vec::with_capacity(n);
    let mut merged: Vec<usize> = Vec::new();

    while let Some(Reverse((deg, v))) = heap.pop() {
        if eliminated[v] || !ready[v] || deg != adj[v].len() {
            continue;
        }
        eliminated[v] = true;
        perm.push(v);
        for &u in &unlocks[v] {
            waiting[u] -= 1;
            if waiting[u] == 0 {
                ready[u] = true;
                heap.push(Reverse((adj[u].len(), u)));
            }
        }
        let clique = std::mem::take(&mut adj[v]);
        for &u in &clique {
            // adj[u] <- (adj[u] ∪ clique) \ {u, v}
            merged.clear();
            let (a, b) = (&adj[u], &clique);
            let (mut i, mut j) = (0, 0);
            while i < a.len() || j < b.len() {
                let next = match (a.get(i), b.get(j)) {
                    (Some(&x), Some(&y)) if x == y => {
                        i += 1;
                        j += 1;
                        x
                    }
                    (Some(&x), Some(&y)) if x < y => {
                        i += 1;
                        x
                    }
                    (Some(_), Some(&y)) => {
                        j += 1;
                        y
                    }
                    (Some(&x), None) => {
                        i += 1;
                        x
                    }
                    (None, Some(&y)) => {
                        j += 1;
                        y
                    }
                    (None, None) => unreachable!(),
                };
                if next != u && next != v && !eliminated[next] {
                    merged.push(next);
                }
            }
            std::mem::swap(&mut adj[u], &mut merged);
            heap.push(Reverse((adj[u].len(), u)));
        }
    }
    assert_eq!(perm.len(), n, "cyclic elimination constraints");
    perm
}
