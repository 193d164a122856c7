//! Largest-connected-component extraction.

use std::collections::VecDeque;

use super::AttributedGraph;
use crate::error::{Error, Result};

/// Sorted node ids of the largest connected component. Ties go to the
/// component holding the smallest node id.
pub fn largest_component(g: &AttributedGraph) -> Vec<usize> {
    let n = g.n_nodes();
    let mut seen = vec![false; n];
    let mut best: Vec<usize> = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut comp = vec![start];
        seen[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            for &u in g.neighbors(v) {
                if !seen[u] {
                    seen[u] = true;
                    comp.push(u);
                    queue.push_back(u);
                }
            }
        }
        // components are discovered in order of their smallest id, so a
        // strict comparison keeps the earliest on ties
        if comp.len() > best.len() {
            best = comp;
        }
    }
    best.sort_unstable();
    best
}

/// Induced subgraph on the largest connected component with ids compacted
/// in original order. Idempotent.
pub fn preprocess(g: &AttributedGraph) -> Result<AttributedGraph> {
    if g.n_nodes() == 0 {
        return Err(Error::Empty("graph has no nodes".into()));
    }
    let keep = largest_component(g);
    if keep.len() == g.n_nodes() {
        return Ok(g.clone());
    }
    Ok(g.induced(&keep))
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::graph;
    use super::*;

    #[test]
    fn equal_triangles_keep_the_one_with_smallest_id() {
        let g = graph(
            6,
            &[(3, 4), (4, 5), (3, 5), (0, 1), (1, 2), (0, 2)],
            &[0, 1, 0, 1, 1, 1],
            2,
        );
        let p = preprocess(&g).unwrap();
        assert_eq!(p.n_nodes(), 3);
        assert_eq!(p.n_edges(), 3);
        assert_eq!(p.original_ids(), &[0, 1, 2]);
        assert_eq!(p.labels(), &[0, 1, 0]);
    }

    #[test]
    fn larger_component_wins_and_is_relabelled() {
        let g = graph(5, &[(0, 1), (2, 3), (3, 4)], &[0, 0, 1, 0, 1], 2);
        let p = preprocess(&g).unwrap();
        assert_eq!(p.original_ids(), &[2, 3, 4]);
        assert!(p.adjacency().contains(0, 1) && p.adjacency().contains(1, 2));
        assert_eq!(p.labels(), &[1, 0, 1]);
        assert_eq!(p.features().get(0, 2), 1.0);
    }

    #[test]
    fn connected_graph_is_a_fixed_point() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3)], &[0, 1, 0, 1], 2);
        let p = preprocess(&g).unwrap();
        assert_eq!(p, g);
        assert_eq!(preprocess(&p).unwrap(), p);
    }

    #[test]
    fn isolated_nodes_are_dropped() {
        let g = graph(3, &[(1, 2)], &[0, 0, 0], 1);
        assert_eq!(preprocess(&g).unwrap().original_ids(), &[1, 2]);
    }
}
