use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    cost: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    // min-heap on (cost, node)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest path between two nodes of a graph with nonnegative weights.
///
/// `neighbors(u, emit)` must call `emit(v, w)` for every edge `u -> v`.
/// Ties between equal-cost frontier entries are broken by the smaller node
/// index, so the result is a pure function of the graph.
pub fn dijkstra<F>(
    node_count: usize,
    start: usize,
    goal: usize,
    mut neighbors: F,
) -> Result<(Vec<usize>, f64)>
where
    F: FnMut(usize, &mut dyn FnMut(usize, f64)),
{
    if start >= node_count || goal >= node_count {
        return Err(Error::invalid(format!(
            "node index out of range ({start}, {goal}) for {node_count} nodes"
        )));
    }
    let mut dist = vec![f64::INFINITY; node_count];
    let mut parent = vec![usize::MAX; node_count];
    let mut done = vec![false; node_count];
    let mut heap = BinaryHeap::new();
    dist[start] = 0.0;
    heap.push(Entry {
        cost: 0.0,
        node: start,
    });
    while let Some(Entry { cost, node }) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        if node == goal {
            break;
        }
        neighbors(node, &mut |v, w| {
            let next = cost + w;
            if next < dist[v] {
                dist[v] = next;
                parent[v] = node;
                heap.push(Entry {
                    cost: next,
                    node: v,
                });
            }
        });
    }
    if !done[goal] {
        return Err(Error::Unreachable { start, goal });
    }
    let mut path = vec![goal];
    let mut cur = goal;
    while cur != start {
        cur = parent[cur];
        path.push(cur);
    }
    path.reverse();
    Ok((path, dist[goal]))
}

/// Dijkstra over explicit adjacency lists.
pub fn dijkstra_adjacency(
    adjacency: &[Vec<(usize, f64)>],
    start: usize,
    goal: usize,
) -> Result<(Vec<usize>, f64)> {
    dijkstra(adjacency.len(), start, goal, |u, emit| {
        for &(v, w) in &adjacency[u] {
            emit(v, w);
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_graph() {
        let adj = vec![vec![(1, 1.0)], vec![(0, 1.0), (2, 2.5)], vec![(1, 2.5)]];
        let (path, cost) = dijkstra_adjacency(&adj, 0, 2).unwrap();
        assert_eq!(path, vec![0, 1, 2]);
        assert_eq!(cost, 3.5);
        let (path, cost) = dijkstra_adjacency(&adj, 1, 1).unwrap();
        assert_eq!(path, vec![1]);
        assert_eq!(cost, 0.0);
    }

    #[test]
    fn prefers_cheaper_detour() {
        let adj = vec![
            vec![(1, 10.0), (2, 1.0)],
            vec![(0, 10.0), (2, 1.0)],
            vec![(0, 1.0), (1, 1.0)],
        ];
        assert_eq!(
            dijkstra_adjacency(&adj, 0, 1).unwrap(),
            (vec![0, 2, 1], 2.0)
        );
    }

    #[test]
    fn equal_costs_resolve_to_lower_index() {
        // 0 -> {1, 2} -> 3 with identical costs
        let adj = vec![
            vec![(2, 1.0), (1, 1.0)],
            vec![(3, 1.0)],
            vec![(3, 1.0)],
            vec![],
        ];
        assert_eq!(dijkstra_adjacency(&adj, 0, 3).unwrap().0, vec![0, 1, 3]);
    }

    #[test]
    fn unreachable_and_out_of_range() {
        let adj = vec![vec![], vec![]];
        assert!(matches!(
            dijkstra_adjacency(&adj, 0, 1),
            Err(Error::Unreachable { .. })
        ));
        assert!(dijkstra_adjacency(&adj, 0, 5).is_err());
    }
}
