//! Bemis-Murcko style scaffold keys.
//!
//! Side chains are stripped by repeatedly deleting non-ring atoms of
//! degree <= 1; ring systems and the linkers between them survive. The
//! surviving skeleton is encoded with colour refinement, which is label
//! invariant but can merge rare non-isomorphic skeletons.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::structio::BondGraph;

/// Canonical string for a pruned skeleton; empty for acyclic molecules.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ScaffoldKey(pub String);

impl ScaffoldKey {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for ScaffoldKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn bemis_murcko_key(graph: &BondGraph) -> ScaffoldKey {
    scaffold_key(graph, None)
}

/// Like [`bemis_murcko_key`] but atoms with different atomic numbers start
/// in different colour classes.
pub fn bemis_murcko_key_with_elements(graph: &BondGraph, atomic_numbers: &[u8]) -> ScaffoldKey {
    scaffold_key(graph, Some(atomic_numbers))
}

fn scaffold_key(graph: &BondGraph, elements: Option<&[u8]>) -> ScaffoldKey {
    let adj = graph.adjacency();
    let alive = prune_side_chains(&adj, &ring_atoms(&adj));
    if !alive.iter().any(|&a| a) {
        return ScaffoldKey(String::new());
    }
    let sub: Vec<Vec<usize>> = adj
        .iter()
        .enumerate()
        .map(|(v, ns)| {
            if alive[v] {
                ns.iter().copied().filter(|&u| alive[u]).collect()
            } else {
                Vec::new()
            }
        })
        .collect();
    let colors = refine_colors(&sub, &alive, elements);
    ScaffoldKey(encode(&sub, &alive, &colors))
}

/// Atoms lying on at least one cycle, i.e. incident to a non-bridge edge.
pub(crate) fn ring_atoms(adj: &[Vec<usize>]) -> Vec<bool> {
    let n = adj.len();
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut timer = 0;
    let mut in_ring = vec![false; n];
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        // Iterative DFS: (vertex, parent, next neighbor position).
        let mut stack = vec![(root, usize::MAX, 0usize)];
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        while let Some(top) = stack.len().checked_sub(1) {
            let (v, parent, pos) = stack[top];
            if pos < adj[v].len() {
                let u = adj[v][pos];
                stack[top].2 += 1;
                if u == parent {
                    continue;
                }
                if disc[u] == usize::MAX {
                    disc[u] = timer;
                    low[u] = timer;
                    timer += 1;
                    stack.push((u, v, 0));
                } else {
                    low[v] = low[v].min(disc[u]);
                }
            } else {
                stack.pop();
                if parent != usize::MAX {
                    low[parent] = low[parent].min(low[v]);
                    // Edge (parent, v) is not a bridge.
                    if low[v] <= disc[parent] {
                        in_ring[v] = true;
                        in_ring[parent] = true;
                    }
                }
            }
        }
    }
    in_ring
}

fn prune_side_chains(adj: &[Vec<usize>], in_ring: &[bool]) -> Vec<bool> {
    let mut alive = vec![true; adj.len()];
    let mut degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut queue: Vec<usize> = (0..adj.len()).filter(|&v| !in_ring[v] && degree[v] <= 1).collect();
    while let Some(v) = queue.pop() {
        if !alive[v] {
            continue;
        }
        alive[v] = false;
        for &u in &adj[v] {
            if alive[u] {
                degree[u] -= 1;
                if !in_ring[u] && degree[u] <= 1 {
                    queue.push(u);
                }
            }
        }
    }
    alive
}

fn refine_colors(adj: &[Vec<usize>], alive: &[bool], elements: Option<&[u8]>) -> Vec<usize> {
    let live: Vec<usize> = (0..adj.len()).filter(|&v| alive[v]).collect();
    let mut colors: Vec<usize> = vec![0; adj.len()];
    let initial: Vec<(usize, u8)> = live
        .iter()
        .map(|&v| (adj[v].len(), elements.map_or(0, |e| e[v])))
        .collect();
    relabel(&live, &initial, &mut colors);
    let mut n_classes = count_classes(&live, &colors);
    for _ in 0..live.len() {
        let sigs: Vec<(usize, Vec<usize>)> = live
            .iter()
            .map(|&v| {
                let mut ns: Vec<usize> = adj[v].iter().map(|&u| colors[u]).collect();
                ns.sort_unstable();
                (colors[v], ns)
            })
            .collect();
        relabel(&live, &sigs, &mut colors);
        let next = count_classes(&live, &colors);
        if next == n_classes {
            break;
        }
        n_classes = next;
    }
    colors
}

fn relabel<S: Ord + Clone>(live: &[usize], sigs: &[S], colors: &mut [usize]) {
    let mut uniq: Vec<S> = sigs.to_vec();
    uniq.sort();
    uniq.dedup();
    for (&v, s) in live.iter().zip(sigs) {
        colors[v] = uniq.binary_search(s).expect("signature present");
    }
}

fn count_classes(live: &[usize], colors: &[usize]) -> usize {
    let mut c: Vec<usize> = live.iter().map(|&v| colors[v]).collect();
    c.sort_unstable();
    c.dedup();
    c.len()
}

fn encode(adj: &[Vec<usize>], alive: &[bool], colors: &[usize]) -> String {
    let mut component = vec![usize::MAX; adj.len()];
    let mut blocks: BTreeMap<String, usize> = BTreeMap::new();
    for start in 0..adj.len() {
        if !alive[start] || component[start] != usize::MAX {
            continue;
        }
        let mut members = vec![start];
        component[start] = start;
        let mut k = 0;
        while k < members.len() {
            let v = members[k];
            k += 1;
            for &u in &adj[v] {
                if component[u] == usize::MAX {
                    component[u] = start;
                    members.push(u);
                }
            }
        }
        let mut vc: Vec<usize> = members.iter().map(|&v| colors[v]).collect();
        vc.sort_unstable();
        let mut edges: Vec<(usize, usize)> = members
            .iter()
            .flat_map(|&v| adj[v].iter().filter(move |&&u| u > v).map(move |&u| (v, u)))
            .map(|(a, b)| (colors[a].min(colors[b]), colors[a].max(colors[b])))
            .collect();
        edges.sort_unstable();
        let mut s = String::new();
        let _ = write!(s, "v{}:", vc.len());
        s.push_str(&join(vc.iter().map(usize::to_string)));
        s.push_str(";e:");
        s.push_str(&join(edges.iter().map(|(a, b)| format!("{a}-{b}"))));
        *blocks.entry(s).or_default() += 1;
    }
    let mut degrees: Vec<usize> = (0..adj.len()).filter(|&v| alive[v]).map(|v| adj[v].len()).collect();
    degrees.sort_unstable();
    let mut key = format!("d:{}", join(degrees.iter().map(usize::to_string)));
    for (block, count) in blocks {
        let _ = write!(key, "|{count}x{block}");
    }
    key
}

fn join(items: impl Iterator<Item = String>) -> String {
    items.collect::<Vec<_>>().join(",")
}
