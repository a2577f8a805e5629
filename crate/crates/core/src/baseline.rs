//! Centralized least-delay-cost baseline (dDSAaR, static reduction).
//!
//! With stationary nodes the space-time-band graph collapses to a static
//! multigraph: one edge per (i, j, band) within range, weighted by the
//! per-packet transmission delay plus propagation delay. Routes are computed
//! once per source-destination pair in a bootstrap phase and never change;
//! a blocked packet waits in FIFO order on its precomputed hop instead of
//! being rerouted or re-banded.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use crate::radio::{BandCatalog, BandId, RadioParams};
use crate::scalar::{cast, Scalar};
use crate::{NodeId, Point, Real};

/// One directed edge of the band-multigraph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StbEdge<F = Real> {
    pub from: NodeId,
    pub to: NodeId,
    pub band: BandId,
    /// Per-packet delay in seconds: `l / R_b + d_ij / c`.
    pub weight: F,
}

/// Static band-multigraph over the deployed nodes.
#[derive(Debug, Clone)]
pub struct StbGraph<F = Real> {
    num_nodes: usize,
    /// Outgoing edges per node, ordered by (to, catalog band order).
    adjacency: Vec<Vec<StbEdge<F>>>,
}

impl<F: Scalar> StbGraph<F> {
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges_from(&self, node: NodeId) -> &[StbEdge<F>] {
        &self.adjacency[node]
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }
}

/// Builds the multigraph: one edge per (i, j, band) satisfying the link rule.
pub fn build_stb_static<F: Scalar>(
    positions: &[Point],
    catalog: &BandCatalog<F>,
    packet_size_bits: F,
    params: &RadioParams<F>,
) -> StbGraph<F> {
    let n = positions.len();
    let mut adjacency = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d: F = cast(positions[i].distance(&positions[j]));
            for profile in catalog.profiles() {
                if d <= profile.range_m {
                    let weight =
                        packet_size_bits / profile.bit_rate_bps + d / params.speed_of_light;
                    adjacency[i].push(StbEdge {
                        from: i,
                        to: j,
                        band: profile.band,
                        weight,
                    });
                }
            }
        }
    }
    StbGraph {
        num_nodes: n,
        adjacency,
    }
}

/// One precomputed hop: forward to `next` over `band`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RouteHop {
    pub next: NodeId,
    pub band: BandId,
}

#[derive(Clone, Copy)]
struct HeapEntry<F> {
    cost: F,
    hops: usize,
    node: NodeId,
}

impl<F: Scalar> PartialEq for HeapEntry<F> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<F: Scalar> Eq for HeapEntry<F> {}

impl<F: Scalar> Ord for HeapEntry<F> {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap, we need the cheapest first.
        other
            .cost
            .partial_cmp(&self.cost)
            .unwrap_or(Ordering::Equal)
            .then(other.hops.cmp(&self.hops))
            .then(other.node.cmp(&self.node))
    }
}

impl<F: Scalar> PartialOrd for HeapEntry<F> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Copy)]
struct NodeBest<F> {
    cost: F,
    hops: usize,
    prev: NodeId,
    band: BandId,
}

/// Least-delay-cost route as a hop list from `source` to `destination`.
///
/// Ties are broken by fewer hops, then by the lower predecessor node index
/// and catalog band order, so the result is unique and reproducible. An
/// unreachable destination (or `source == destination`) yields an empty
/// route.
pub fn ldc_route<F: Scalar>(
    graph: &StbGraph<F>,
    source: NodeId,
    destination: NodeId,
    catalog: &BandCatalog<F>,
) -> Vec<RouteHop> {
    if source == destination || source >= graph.num_nodes() || destination >= graph.num_nodes() {
        return Vec::new();
    }
    let n = graph.num_nodes();
    let mut best: Vec<Option<NodeBest<F>>> = vec![None; n];
    best[source] = Some(NodeBest {
        cost: F::zero(),
        hops: 0,
        prev: source,
        band: catalog.profiles()[0].band,
    });
    let mut heap = BinaryHeap::new();
    heap.push(HeapEntry {
        cost: F::zero(),
        hops: 0,
        node: source,
    });

    while let Some(entry) = heap.pop() {
        let current = match best[entry.node] {
            Some(b) => b,
            None => continue,
        };
        if entry.cost > current.cost || (entry.cost == current.cost && entry.hops > current.hops) {
            continue; // stale heap entry
        }
        if entry.node == destination {
            break;
        }
        for edge in graph.edges_from(entry.node) {
            let cand = NodeBest {
                cost: current.cost + edge.weight,
                hops: current.hops + 1,
                prev: entry.node,
                band: edge.band,
            };
            let accept = match &best[edge.to] {
                None => true,
                Some(old) => {
                    cand.cost < old.cost
                        || (cand.cost == old.cost
                            && (cand.hops < old.hops
                                || (cand.hops == old.hops
                                    && (cand.prev, band_rank(catalog, cand.band))
                                        < (old.prev, band_rank(catalog, old.band)))))
                }
            };
            if accept {
                best[edge.to] = Some(cand);
                heap.push(HeapEntry {
                    cost: cand.cost,
                    hops: cand.hops,
                    node: edge.to,
                });
            }
        }
    }

    // Unwind predecessors from the destination.
    if best[destination].is_none() {
        return Vec::new();
    }
    let mut hops = Vec::new();
    let mut node = destination;
    while node != source {
        let b = best[node].expect("reached nodes have a predecessor");
        hops.push(RouteHop {
            next: node,
            band: b.band,
        });
        node = b.prev;
    }
    hops.reverse();
    hops
}

fn band_rank<F: Scalar>(catalog: &BandCatalog<F>, band: BandId) -> usize {
    catalog.index_of(band).unwrap_or(usize::MAX)
}

/// Total weight of a hop list starting at `source`, if every hop is an edge.
pub fn route_cost<F: Scalar>(graph: &StbGraph<F>, source: NodeId, hops: &[RouteHop]) -> Option<F> {
    let mut node = source;
    let mut total = F::zero();
    for hop in hops {
        let edge = graph
            .edges_from(node)
            .iter()
            .find(|e| e.to == hop.next && e.band == hop.band)?;
        total = total + edge.weight;
        node = hop.next;
    }
    Some(total)
}

/// Precomputed routes for every (source, destination) pair.
#[derive(Debug, Clone, Default)]
pub struct RouteTable {
    routes: HashMap<(NodeId, NodeId), Vec<RouteHop>>,
}

impl RouteTable {
    pub fn build(
        graph: &StbGraph<Real>,
        sources: &[NodeId],
        destinations: &[NodeId],
        catalog: &BandCatalog<Real>,
    ) -> Self {
        let mut routes = HashMap::new();
        for &s in sources {
            for &d in destinations {
                routes.insert((s, d), ldc_route(graph, s, d, catalog));
            }
        }
        Self { routes }
    }

    /// Stored hop list; empty when the pair is disconnected.
    pub fn get(&self, source: NodeId, destination: NodeId) -> Option<&[RouteHop]> {
        self.routes.get(&(source, destination)).map(Vec::as_slice)
    }

    /// Rows (source, destination, hop_index, next_node, band) in sorted order.
    pub fn rows(&self) -> Vec<(NodeId, NodeId, usize, NodeId, BandId)> {
        let mut keys: Vec<_> = self.routes.keys().copied().collect();
        keys.sort_unstable();
        let mut rows = Vec::new();
        for (s, d) in keys {
            for (k, hop) in self.routes[&(s, d)].iter().enumerate() {
                rows.push((s, d, k, hop.next, hop.band));
            }
        }
        rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio::BandProfile;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn catalog() -> BandCatalog<Real> {
        let params = RadioParams::default();
        BandCatalog::new(vec![
            BandProfile::derive(BandId::Tv, 600e6, 6e6, 4.0, 6, &params).unwrap(),
            BandProfile::derive(BandId::Ism, 2.4e9, 20e6, 1.0, 6, &params).unwrap(),
            BandProfile::derive(BandId::Lte, 1.9e9, 20e6, 4.0, 6, &params).unwrap(),
            BandProfile::derive(BandId::Cbrs, 3.5e9, 40e6, 10.0, 6, &params).unwrap(),
        ])
        .unwrap()
    }

    fn graph(positions: &[Point]) -> StbGraph<Real> {
        build_stb_static(positions, &catalog(), 5e6, &RadioParams::default())
    }

    /// Exhaustive minimum over all simple paths, for cross-checking.
    fn brute_force_min_cost(
        g: &StbGraph<Real>,
        source: NodeId,
        destination: NodeId,
    ) -> Option<Real> {
        fn walk(
            g: &StbGraph<Real>,
            node: NodeId,
            destination: NodeId,
            visited: &mut Vec<bool>,
            cost: Real,
            best: &mut Option<Real>,
        ) {
            if node == destination {
                *best = Some(best.map_or(cost, |b: Real| b.min(cost)));
                return;
            }
            for e in g.edges_from(node) {
                if !visited[e.to] {
                    visited[e.to] = true;
                    walk(g, e.to, destination, visited, cost + e.weight, best);
                    visited[e.to] = false;
                }
            }
        }
        let mut visited = vec![false; g.num_nodes()];
        visited[source] = true;
        let mut best = None;
        walk(g, source, destination, &mut visited, 0.0, &mut best);
        best
    }

    #[test]
    fn colocated_pair_has_four_parallel_edges_each_way() {
        let g = graph(&[Point::new(0.0, 0.0), Point::new(0.0, 0.0)]);
        assert_eq!(g.edges_from(0).len(), 4);
        assert_eq!(g.edges_from(1).len(), 4);
        assert_eq!(g.edge_count(), 8);
    }

    #[test]
    fn distant_pair_connects_over_tv_only() {
        let g = graph(&[Point::new(0.0, 0.0), Point::new(3000.0, 0.0)]);
        assert_eq!(g.edges_from(0).len(), 1);
        assert_eq!(g.edges_from(0)[0].band, BandId::Tv);
        assert_eq!(g.edges_from(1).len(), 1);
    }

    #[test]
    fn isolated_node_has_no_incident_edges() {
        let g = graph(&[
            Point::new(0.0, 0.0),
            Point::new(100.0, 0.0),
            Point::new(90_000.0, 0.0),
        ]);
        assert!(g.edges_from(2).is_empty());
        assert!(g
            .edges_from(0)
            .iter()
            .chain(g.edges_from(1))
            .all(|e| e.to != 2));
    }

    #[test]
    fn direct_cbrs_beats_two_hop_tv() {
        // 1500 m pair: direct CBRS (~0.0608 s) against any relayed
        // alternative; brute force confirms the minimum.
        let positions = [
            Point::new(0.0, 0.0),
            Point::new(750.0, 600.0),
            Point::new(1500.0, 0.0),
        ];
        let g = graph(&positions);
        let route = ldc_route(&g, 0, 2, &catalog());
        assert_eq!(route.len(), 1);
        assert_eq!(route[0].next, 2);
        assert_eq!(route[0].band, BandId::Cbrs);
        let cost = route_cost(&g, 0, &route).unwrap();
        assert!((cost - brute_force_min_cost(&g, 0, 2).unwrap()).abs() < 1e-12);
        assert!((cost - 0.0608).abs() < 1e-3);
    }

    #[test]
    fn single_edge_graph_routes_over_it() {
        let g = graph(&[Point::new(0.0, 0.0), Point::new(3000.0, 0.0)]);
        let route = ldc_route(&g, 0, 1, &catalog());
        assert_eq!(route, vec![RouteHop { next: 1, band: BandId::Tv }]);
    }

    #[test]
    fn disconnected_pair_yields_empty_route() {
        let g = graph(&[Point::new(0.0, 0.0), Point::new(90_000.0, 0.0)]);
        assert!(ldc_route(&g, 0, 1, &catalog()).is_empty());
        assert!(ldc_route(&g, 0, 0, &catalog()).is_empty());
    }

    #[test]
    fn ldc_matches_exhaustive_enumeration_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(4242);
        for _ in 0..40 {
            let n = rng.gen_range(2..=8);
            let positions: Vec<Point> = (0..n)
                .map(|_| Point::new(rng.gen_range(0.0..6000.0), rng.gen_range(0.0..6000.0)))
                .collect();
            let g = graph(&positions);
            let route = ldc_route(&g, 0, n - 1, &catalog());
            let brute = brute_force_min_cost(&g, 0, n - 1);
            match brute {
                None => assert!(route.is_empty()),
                Some(min_cost) => {
                    let cost = route_cost(&g, 0, &route).expect("route uses graph edges");
                    assert!(
                        (cost - min_cost).abs() <= 1e-9 * min_cost.max(1.0),
                        "dijkstra {cost} vs brute force {min_cost}"
                    );
                    // Loop freedom.
                    let mut seen = vec![0usize];
                    for h in &route {
                        assert!(!seen.contains(&h.next), "loop at {}", h.next);
                        seen.push(h.next);
                    }
                }
            }
        }
    }

    #[test]
    fn adding_nodes_never_increases_ldc_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let mut positions: Vec<Point> = (0..5)
                .map(|_| Point::new(rng.gen_range(0.0..5000.0), rng.gen_range(0.0..5000.0)))
                .collect();
            let small = graph(&positions);
            let before = route_cost(&small, 0, &ldc_route(&small, 0, 4, &catalog()));
            positions.push(Point::new(
                rng.gen_range(0.0..5000.0),
                rng.gen_range(0.0..5000.0),
            ));
            let grown = graph(&positions);
            let after = route_cost(&grown, 0, &ldc_route(&grown, 0, 4, &catalog()));
            match (before, after) {
                (Some(b), Some(a)) => assert!(a <= b + 1e-12),
                (None, _) => {}
                (Some(_), None) => panic!("existing route lost after adding a node"),
            }
        }
    }

    #[test]
    fn route_table_rows_are_sorted_and_complete() {
        let positions = [
            Point::new(0.0, 0.0),
            Point::new(500.0, 0.0),
            Point::new(1000.0, 0.0),
        ];
        let g = graph(&positions);
        let table = RouteTable::build(&g, &[0], &[1, 2], &catalog());
        assert!(table.get(0, 1).is_some());
        assert!(table.get(1, 0).is_none());
        let rows = table.rows();
        assert!(!rows.is_empty());
        assert!(rows.windows(2).all(|w| (w[0].0, w[0].1, w[0].2) <= (w[1].0, w[1].1, w[1].2)));
    }
}
