//! Minimum spanning trees of small dense graphs.

use std::cmp::Ordering;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

impl Edge {
    fn key(&self) -> (usize, usize) {
        (self.a.min(self.b), self.a.max(self.b))
    }

    /// Weight first, then endpoint indices.
    fn order(&self, other: &Edge) -> Ordering {
        self.weight.total_cmp(&other.weight).then(self.key().cmp(&other.key()))
    }
}

/// Sum in ascending order, so equal multisets give equal sums.
pub fn sorted_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Greedy edge insertion with union-find.
pub fn kruskal(n: usize, edges: &[Edge]) -> Vec<Edge> {
    let mut sorted = edges.to_vec();
    sorted.sort_by(Edge::order);
    let mut parent: Vec<usize> = (0..n).collect();
    let mut tree = Vec::with_capacity(n.saturating_sub(1));
    for e in sorted {
        let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, e.b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
            tree.push(e);
            if tree.len() + 1 == n {
                break;
            }
        }
    }
    tree
}

/// Frontier growth from vertex 0.
pub fn prim(n: usize, edges: &[Edge]) -> Vec<Edge> {
    if n == 0 {
        return Vec::new();
    }
    let mut adj: Vec<Option<Edge>> = vec![None; n * n];
    for e in edges {
        for (u, v) in [(e.a, e.b), (e.b, e.a)] {
            let slot = &mut adj[u * n + v];
            if slot.map_or(true, |old| e.order(&old) == Ordering::Less) {
                *slot = Some(*e);
            }
        }
    }
    let mut in_tree = vec![false; n];
    let mut best: Vec<Option<Edge>> = vec![None; n];
    in_tree[0] = true;
    for v in 0..n {
        best[v] = adj[v];
    }
    let mut tree = Vec::with_capacity(n - 1);
    for _ in 1..n {
        let next = (0..n)
            .filter(|&v| !in_tree[v])
            .filter_map(|v| best[v].map(|e| (v, e)))
            .min_by(|x, y| x.1.order(&y.1));
        let Some((v, e)) = next else { break };
        in_tree[v] = true;
        tree.push(e);
        for w in 0..n {
            if let Some(c) = adj[v * n + w] {
                if !in_tree[w] && best[w].map_or(true, |old| c.order(&old) == Ordering::Less) {
                    best[w] = Some(c);
                }
            }
        }
    }
    tree
}

/// Smallest mean edge weight over every spanning tree of the complete graph
/// on `n` vertices, by enumerating Prüfer sequences. Exponential; for
/// checking only.
pub fn brute_force_min_tree(n: usize, mut weight: impl FnMut(usize, usize) -> f64) -> f64 {
    assert!(n >= 2);
    if n == 2 {
        return weight(0, 1);
    }
    let len = n - 2;
    let mut seq = vec![0usize; len];
    let mut best = f64::INFINITY;
    loop {
        let mut degree = vec![1usize; n];
        for &s in &seq {
            degree[s] += 1;
        }
        let mut weights = Vec::with_capacity(n - 1);
        for &s in &seq {
            let leaf = (0..n).find(|&v| degree[v] == 1).unwrap();
            weights.push(weight(leaf, s));
            degree[leaf] -= 1;
            degree[s] -= 1;
        }
        let rest: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
        weights.push(weight(rest[0], rest[1]));
        best = best.min(sorted_sum(weights) / (n - 1) as f64);

        let mut i = 0;
        while i < len {
            seq[i] += 1;
            if seq[i] < n {
                break;
            }
            seq[i] = 0;
            i += 1;
        }
        if i == len {
            return best;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edges(n: usize, w: impl Fn(usize, usize) -> f64) -> Vec<Edge> {
        let mut out = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                out.push(Edge { a, b, weight: w(a, b) });
            }
        }
        out
    }

    fn keys(t: &[Edge]) -> Vec<(usize, usize)> {
        let mut k: Vec<_> = t.iter().map(Edge::key).collect();
        k.sort();
        k
    }

    #[test]
    fn trees_agree_with_each_other_and_enumeration() {
        let mut s = 7u64;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        for n in 2..=6 {
            for _ in 0..10 {
                let w: Vec<f64> = (0..n * n).map(|_| next()).collect();
                let f = |a: usize, b: usize| w[a.min(b) * n + a.max(b)];
                let e = edges(n, f);
                let (k, p) = (kruskal(n, &e), prim(n, &e));
                assert_eq!(k.len(), n - 1);
                assert_eq!(keys(&k), keys(&p));
                let mean = sorted_sum(k.iter().map(|e| e.weight)) / (n - 1) as f64;
                assert_eq!(mean, brute_force_min_tree(n, f));
            }
        }
    }

    #[test]
    fn ties_are_broken_by_index() {
        let e = edges(4, |_, _| 1.0);
        assert_eq!(keys(&kruskal(4, &e)), vec![(0, 1), (0, 2), (0, 3)]);
        assert_eq!(keys(&prim(4, &e)), vec![(0, 1), (0, 2), (0, 3)]);
    }

    #[test]
    fn cayley_count() {
        let mut count = 0;
        brute_force_min_tree(5, |_, _| {
            count += 1;
            1.0
        });
        // 5^3 trees with 4 edges each
        assert_eq!(count, 125 * 4);
    }
}
