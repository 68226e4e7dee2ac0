//! Portals (maximal axis-parallel chains), portal graphs and portal
//! distances, all computed on a region's retained edges.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::grid::{Axis, GridPoint};
use crate::split::{Region, SplitError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Portal {
    pub axis: Axis,
    /// Chain nodes ordered in the axis' positive direction.
    pub nodes: Vec<GridPoint>,
    pub id: usize,
}

impl Portal {
    pub fn first(&self) -> GridPoint {
        self.nodes[0]
    }

    pub fn last(&self) -> GridPoint {
        *self.nodes.last().unwrap()
    }

    pub fn line_index(&self) -> i64 {
        self.nodes[0].portal_index(self.axis)
    }
}

/// Portals of one axis. Ids follow the lexicographic order of each chain's
/// minimal node.
pub fn compute_portals(region: &Region, axis: Axis) -> Vec<Portal> {
    let mut portals = Vec::new();
    for p in region.nodes() {
        if region.has_edge(p, axis.negative()) {
            continue;
        }
        portals.push(region.chain_through(p, axis));
    }
    portals.sort_by_key(|chain| *chain.iter().min().unwrap());
    portals
        .into_iter()
        .enumerate()
        .map(|(id, nodes)| Portal { axis, nodes, id })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PortalGraph {
    pub axis: Axis,
    pub portals: Vec<Portal>,
    /// Sorted neighbor lists indexed by portal id.
    pub adjacency: Vec<Vec<usize>>,
    portal_of: BTreeMap<GridPoint, usize>,
}

pub fn portal_graph(region: &Region, axis: Axis) -> PortalGraph {
    let portals = compute_portals(region, axis);
    let mut portal_of = BTreeMap::new();
    for p in &portals {
        for &u in &p.nodes {
            portal_of.insert(u, p.id);
        }
    }
    let mut sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); portals.len()];
    for p in &portals {
        for &u in &p.nodes {
            for (d, v) in region.neighbors(u) {
                if d.axis() != axis {
                    sets[p.id].insert(portal_of[&v]);
                }
            }
        }
    }
    PortalGraph {
        axis,
        portals,
        adjacency: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        portal_of,
    }
}

impl PortalGraph {
    pub fn len(&self) -> usize {
        self.portals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.portals.is_empty()
    }

    pub fn portal_of(&self, p: GridPoint) -> Option<usize> {
        self.portal_of.get(&p).copied()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(|n| n.len()).sum::<usize>() / 2
    }

    pub fn degree(&self, id: usize) -> usize {
        self.adjacency[id].len()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, ns) in self.adjacency.iter().enumerate() {
            out.extend(ns.iter().filter(|&&j| i < j).map(|&j| (i, j)));
        }
        out
    }

    /// BFS distances from a set of source portals.
    pub fn distances_from(&self, sources: &[usize]) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.len()];
        let mut queue = VecDeque::new();
        for &s in sources {
            if dist[s].is_none() {
                dist[s] = Some(0);
                queue.push_back(s);
            }
        }
        while let Some(i) = queue.pop_front() {
            let d = dist[i].unwrap();
            for &j in &self.adjacency[i] {
                if dist[j].is_none() {
                    dist[j] = Some(d + 1);
                    queue.push_back(j);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.is_empty() || self.distances_from(&[0]).iter().all(Option::is_some)
    }

    pub fn is_tree(&self) -> bool {
        self.is_connected() && self.edge_count() + 1 == self.len()
    }

    pub fn has_cycle(&self) -> bool {
        // Each connected component with k nodes is acyclic iff it has k-1 edges.
        let mut seen = vec![false; self.len()];
        let mut components = 0;
        for s in 0..self.len() {
            if seen[s] {
                continue;
            }
            components += 1;
            for (i, d) in self.distances_from(&[s]).into_iter().enumerate() {
                if d.is_some() {
                    seen[i] = true;
                }
            }
        }
        self.edge_count() + components > self.len()
    }

    /// Path of portal ids from `from` to `to` (inclusive), if connected.
    pub fn path(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        let dist = self.distances_from(&[to]);
        dist[from]?;
        let mut out = vec![from];
        let mut cur = from;
        while cur != to {
            let d = dist[cur].unwrap();
            cur = *self.adjacency[cur]
                .iter()
                .find(|&&j| dist[j] == Some(d - 1))
                .unwrap();
            out.push(cur);
        }
        Some(out)
    }
}

/// Distance between the portals of `u` and `v` in the axis portal graph.
pub fn portal_distance(region: &Region, u: GridPoint, v: GridPoint, axis: Axis) -> Result<usize, SplitError> {
    for p in [u, v] {
        if !region.contains(p) {
            return Err(SplitError::NodeOutsideRegion(p));
        }
    }
    let graph = portal_graph(region, axis);
    let pu = graph.portal_of(u).unwrap();
    let pv = graph.portal_of(v).unwrap();
    Ok(graph.distances_from(&[pu])[pv].expect("region is connected"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{hexagon, AmoebotStructure};

    fn region_of(points: Vec<GridPoint>) -> Region {
        Region::from_structure(&AmoebotStructure::new(points).unwrap())
    }

    #[test]
    fn line_portals() {
        let r = region_of((0..5).map(|a| GridPoint::new(a, 0)).collect());
        assert_eq!(compute_portals(&r, Axis::X).len(), 1);
        assert_eq!(compute_portals(&r, Axis::Y).len(), 5);
        let g = portal_graph(&r, Axis::X);
        assert_eq!(g.len(), 1);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn hexagon_y_portals() {
        let r = region_of(hexagon(GridPoint::new(0, 0), 1));
        let sizes: Vec<_> = compute_portals(&r, Axis::Y).iter().map(|p| p.nodes.len()).collect();
        assert_eq!(sizes, vec![2, 3, 2]);
        for axis in Axis::ALL {
            assert!(portal_graph(&r, axis).is_tree());
        }
    }

    #[test]
    fn annulus_y_graph_has_cycle() {
        let mut pts = hexagon(GridPoint::new(0, 0), 2);
        pts.retain(|p| *p != GridPoint::new(0, 0));
        let g = portal_graph(&region_of(pts), Axis::Y);
        assert!(g.has_cycle());
        assert!(!g.is_tree());
    }

    #[test]
    fn portal_distances_of_adjacent_nodes() {
        let r = region_of(hexagon(GridPoint::new(0, 0), 2));
        let u = GridPoint::new(0, 0);
        let v = GridPoint::new(1, 0);
        assert_eq!(portal_distance(&r, u, u, Axis::Y).unwrap(), 0);
        assert_eq!(portal_distance(&r, u, v, Axis::X).unwrap(), 0);
        assert_eq!(portal_distance(&r, u, v, Axis::Y).unwrap(), 1);
        assert_eq!(portal_distance(&r, u, v, Axis::Z).unwrap(), 1);
        assert!(portal_distance(&r, u, GridPoint::new(9, 9), Axis::X).is_err());
    }
}
