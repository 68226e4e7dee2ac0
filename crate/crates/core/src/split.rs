//! Regions and the portal/node splitting operations.
//!
//! A region is a node set plus a retained edge set. Nodes on a cut portal
//! end up in several regions, each holding only the incident edges on its
//! own side; no phantom coordinates are created.
//!
//! Every split is expressed as a [`Cut`]: a set of portal nodes of one axis
//! that are cut into a low-side and a high-side copy, plus optional
//! sub-splits that divide one copy of a node into the bundle holding the
//! axis' positive end and the bundle holding its negative end.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{AmoebotStructure, Axis, DirSet, Direction, GridPoint, Side};
use crate::portals::Portal;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SplitError {
    #[error("node {0} is not part of the region")]
    NodeOutsideRegion(GridPoint),
    #[error("portal node {0} is not part of the region")]
    PortalOutsideRegion(GridPoint),
    #[error("split node {node} does not lie on the {axis}-portal being cut")]
    NodeOffPortal { node: GridPoint, axis: Axis },
    #[error("empty point {empty} of {node} is not a free neighbor in the region")]
    EmptyPointOccupied { node: GridPoint, empty: GridPoint },
    #[error("empty point {empty} is not adjacent to {node} across the {axis}-axis")]
    EmptyPointNotAcross { node: GridPoint, empty: GridPoint, axis: Axis },
    #[error("node {0} does not lie on a gate of the region")]
    NodeNotOnGate(GridPoint),
    #[error("node-only split at {0} would separate edges on both sides of its portal")]
    NodeSpansBothSides(GridPoint),
    #[error("cut leaves two copies of node {0} in one region")]
    DuplicateCopy(GridPoint),
}

/// A connected subgraph of the structure: nodes plus the retained edges,
/// stored as the set of retained directions at every node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub id: u64,
    adj: BTreeMap<GridPoint, DirSet>,
    pub gates: Vec<Gate>,
}

/// Canonical, id-free form of a region: sorted nodes and sorted edges.
pub type RegionShape = (Vec<GridPoint>, Vec<(GridPoint, GridPoint)>);

impl Region {
    /// The whole structure with all induced edges.
    pub fn from_structure(structure: &AmoebotStructure) -> Region {
        let adj = structure
            .iter()
            .map(|p| (p, structure.occupied_dirs(p)))
            .collect();
        Region { id: 0, adj, gates: Vec::new() }
    }

    /// Build a region from per-node retained directions. Directions must be
    /// symmetric (an edge is retained at both endpoints).
    pub fn from_dirs(id: u64, adj: BTreeMap<GridPoint, DirSet>) -> Region {
        debug_assert!(adj.iter().all(|(p, ds)| ds
            .iter()
            .all(|d| adj.get(&p.neighbor(d)).is_some_and(|o| o.contains(d.opposite())))));
        Region { id, adj, gates: Vec::new() }
    }

    /// Region induced by `nodes` in the structure (all edges among them).
    pub fn induced(structure: &AmoebotStructure, nodes: &BTreeSet<GridPoint>) -> Region {
        let adj = nodes
            .iter()
            .map(|&p| {
                let ds = structure
                    .occupied_dirs(p)
                    .iter()
                    .filter(|d| nodes.contains(&p.neighbor(*d)))
                    .fold(DirSet::EMPTY, |s, d| s.with(d));
                (p, ds)
            })
            .collect();
        Region { id: 0, adj, gates: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn contains(&self, p: GridPoint) -> bool {
        self.adj.contains_key(&p)
    }

    pub fn nodes(&self) -> impl Iterator<Item = GridPoint> + '_ {
        self.adj.keys().copied()
    }

    pub fn node_set(&self) -> BTreeSet<GridPoint> {
        self.adj.keys().copied().collect()
    }

    /// Retained directions at `p` (empty if `p` is not in the region).
    pub fn dirs(&self, p: GridPoint) -> DirSet {
        self.adj.get(&p).copied().unwrap_or_default()
    }

    pub fn dir_map(&self) -> &BTreeMap<GridPoint, DirSet> {
        &self.adj
    }

    pub fn has_edge(&self, p: GridPoint, d: Direction) -> bool {
        self.dirs(p).contains(d)
    }

    /// Retained neighbors of `p`, in direction order.
    pub fn neighbors(&self, p: GridPoint) -> impl Iterator<Item = (Direction, GridPoint)> + '_ {
        self.dirs(p).iter().map(move |d| (d, p.neighbor(d)))
    }

    /// Retained edges as ordered pairs `(p, q)` with `p < q`.
    pub fn edges(&self) -> Vec<(GridPoint, GridPoint)> {
        let mut out = Vec::new();
        for (&p, ds) in &self.adj {
            for d in ds.iter() {
                let q = p.neighbor(d);
                if p < q {
                    out.push((p, q));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adj.values().map(|d| d.len()).sum::<usize>() / 2
    }

    pub fn shape(&self) -> RegionShape {
        (self.nodes().collect(), self.edges())
    }

    pub fn is_connected(&self) -> bool {
        let Some(&start) = self.adj.keys().next() else {
            return true;
        };
        let mut seen = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(p) = stack.pop() {
            for (_, q) in self.neighbors(p) {
                if seen.insert(q) {
                    stack.push(q);
                }
            }
        }
        seen.len() == self.adj.len()
    }

    /// Nodes of `p`'s maximal chain along `axis` within the retained edges.
    pub fn chain_through(&self, p: GridPoint, axis: Axis) -> Vec<GridPoint> {
        let mut start = p;
        while self.has_edge(start, axis.negative()) {
            start = start.neighbor(axis.negative());
        }
        let mut out = vec![start];
        let mut cur = start;
        while self.has_edge(cur, axis.positive()) {
            cur = cur.neighbor(axis.positive());
            out.push(cur);
        }
        out
    }
}

/// The part of a splitting y-portal that a region touches.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Gate {
    /// Index of the y-portal line (the `a` coordinate of its nodes).
    pub portal_id: i64,
    /// Side of the portal on which the region lies.
    pub side: GateSide,
    /// Chain of gate nodes from SSW to NNE.
    pub nodes: Vec<GridPoint>,
    pub region_id: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GateSide {
    WNW,
    ESE,
}

impl From<Side> for GateSide {
    fn from(s: Side) -> GateSide {
        match s {
            Side::Low => GateSide::WNW,
            Side::High => GateSide::ESE,
        }
    }
}

/// A node to be split in two, given with the free neighbor that tells on
/// which side of its portal the split happens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct SplitNodeSpec {
    pub node: GridPoint,
    pub empty_point: GridPoint,
}

impl SplitNodeSpec {
    pub fn new(node: GridPoint, empty_dir: Direction) -> SplitNodeSpec {
        SplitNodeSpec { node, empty_point: node.neighbor(empty_dir) }
    }

    fn side(&self, region: &Region, axis: Axis) -> Result<Side, SplitError> {
        let d = self.node.direction_to(self.empty_point);
        let side = d.and_then(|d| axis.side_of(d));
        let (Some(d), Some(side)) = (d, side) else {
            return Err(SplitError::EmptyPointNotAcross {
                node: self.node,
                empty: self.empty_point,
                axis,
            });
        };
        if region.has_edge(self.node, d) {
            return Err(SplitError::EmptyPointOccupied { node: self.node, empty: self.empty_point });
        }
        Ok(side)
    }
}

/// One simultaneous cut along a single axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cut {
    pub axis: Axis,
    /// Nodes of the portals being cut.
    pub portal_nodes: BTreeSet<GridPoint>,
    /// Node copies to be split further, keyed by node, listing the sides.
    /// Nodes not in `portal_nodes` are node-only splits.
    pub subsplits: BTreeMap<GridPoint, BTreeSet<Side>>,
}

impl Cut {
    pub fn new(axis: Axis) -> Cut {
        Cut { axis, portal_nodes: BTreeSet::new(), subsplits: BTreeMap::new() }
    }

    pub fn add_portal(&mut self, nodes: impl IntoIterator<Item = GridPoint>) {
        self.portal_nodes.extend(nodes);
    }

    pub fn add_subsplit(&mut self, node: GridPoint, side: Side) {
        self.subsplits.entry(node).or_default().insert(side);
    }

    pub fn is_empty(&self) -> bool {
        self.portal_nodes.is_empty() && self.subsplits.is_empty()
    }

    /// Merge another cut of the same axis into this one.
    pub fn merge(&mut self, other: &Cut) {
        assert_eq!(self.axis, other.axis);
        self.portal_nodes.extend(other.portal_nodes.iter().copied());
        for (&p, sides) in &other.subsplits {
            self.subsplits.entry(p).or_default().extend(sides.iter().copied());
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Copy {
    node: GridPoint,
    dirs: DirSet,
    /// Side tag for copies of cut portal nodes.
    side: Option<Side>,
}

/// Apply a cut to a region. Results are ordered canonically by shape and
/// carry id 0; callers assign ids.
pub fn apply_cut(region: &Region, cut: &Cut) -> Result<Vec<Region>, SplitError> {
    let axis = cut.axis;
    for &p in &cut.portal_nodes {
        if !region.contains(p) {
            return Err(SplitError::PortalOutsideRegion(p));
        }
    }
    let mut copies: Vec<Copy> = Vec::new();
    let mut copies_of: BTreeMap<GridPoint, Vec<usize>> = BTreeMap::new();
    for (&p, &ds) in region.dir_map() {
        let mut push = |c: Copy| {
            copies_of.entry(p).or_default().push(copies.len());
            copies.push(c);
        };
        let sub = cut.subsplits.get(&p);
        if cut.portal_nodes.contains(&p) {
            for side in [Side::Low, Side::High] {
                let part = ds.intersect(axis.side_dirs(side).union(axis.axis_dirs()));
                if sub.is_some_and(|s| s.contains(&side)) {
                    let (pos, neg) = axis.node_split_bundles(side);
                    push(Copy { node: p, dirs: part.intersect(pos), side: Some(side) });
                    push(Copy { node: p, dirs: part.intersect(neg), side: Some(side) });
                } else {
                    push(Copy { node: p, dirs: part, side: Some(side) });
                }
            }
        } else if let Some(sides) = sub {
            if sides.len() != 1 {
                return Err(SplitError::NodeSpansBothSides(p));
            }
            let side = *sides.iter().next().unwrap();
            if !ds.minus(axis.side_dirs(side).union(axis.axis_dirs())).is_empty() {
                return Err(SplitError::NodeSpansBothSides(p));
            }
            let (pos, neg) = axis.node_split_bundles(side);
            push(Copy { node: p, dirs: ds.intersect(pos), side: None });
            push(Copy { node: p, dirs: ds.intersect(neg), side: None });
        } else {
            push(Copy { node: p, dirs: ds, side: None });
        }
    }
    for &p in cut.subsplits.keys() {
        if !region.contains(p) {
            return Err(SplitError::NodeOutsideRegion(p));
        }
    }

    let mut uf = UnionFind::new(copies.len());
    for (i, c) in copies.iter().enumerate() {
        for d in c.dirs.iter() {
            let q = c.node.neighbor(d);
            if c.node > q {
                continue;
            }
            let both_on_cut = d.axis() == axis
                && cut.portal_nodes.contains(&c.node)
                && cut.portal_nodes.contains(&q);
            for &j in &copies_of[&q] {
                let o = copies[j];
                if !o.dirs.contains(d.opposite()) {
                    continue;
                }
                if both_on_cut && o.side != c.side {
                    continue;
                }
                uf.union(i, j);
            }
        }
    }

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..copies.len() {
        groups.entry(uf.find(i)).or_default().push(i);
    }
    let mut comps: Vec<(bool, BTreeMap<GridPoint, DirSet>)> = Vec::new();
    for members in groups.values() {
        let mut adj: BTreeMap<GridPoint, DirSet> = BTreeMap::new();
        let mut bare = true;
        for &i in members {
            let c = copies[i];
            if adj.insert(c.node, c.dirs).is_some() {
                return Err(SplitError::DuplicateCopy(c.node));
            }
            if copies_of[&c.node].len() == 1 {
                bare = false;
            }
        }
        comps.push((bare, adj));
    }
    comps.sort_by(|a, b| shape_key(&a.1).cmp(&shape_key(&b.1)));

    // Components made only of split copies are dropped when every node they
    // hold is still covered by another component.
    let mut keep = vec![true; comps.len()];
    for i in 0..comps.len() {
        if !comps[i].0 {
            continue;
        }
        let covered = comps[i].1.keys().all(|p| {
            comps
                .iter()
                .enumerate()
                .any(|(j, (_, adj))| j != i && keep[j] && adj.contains_key(p))
        });
        if covered {
            keep[i] = false;
        }
    }
    Ok(comps
        .into_iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|((_, adj), _)| Region::from_dirs(0, adj))
        .collect())
}

fn shape_key(adj: &BTreeMap<GridPoint, DirSet>) -> Vec<(GridPoint, u8)> {
    adj.iter().map(|(p, d)| (*p, d.0)).collect()
}

/// Split a region at a portal (Case 1 of the splitting definition).
pub fn split_at_portal(region: &Region, portal: &Portal) -> Result<Vec<Region>, SplitError> {
    split_at_portal_and_nodes(region, portal, &[])
}

/// Split a region at a portal and at the given portal nodes, each of which is
/// further divided on the side of its empty point.
pub fn split_at_portal_and_nodes(
    region: &Region,
    portal: &Portal,
    specs: &[SplitNodeSpec],
) -> Result<Vec<Region>, SplitError> {
    let mut cut = Cut::new(portal.axis);
    cut.add_portal(portal.nodes.iter().copied());
    for spec in specs {
        if !portal.nodes.contains(&spec.node) {
            return Err(SplitError::NodeOffPortal { node: spec.node, axis: portal.axis });
        }
        let side = spec.side(region, portal.axis)?;
        cut.add_subsplit(spec.node, side);
    }
    apply_cut(region, &cut)
}

/// Split a region at a single node lying on one of its gates. The node's
/// retained edges are divided into the NNE-side and SSW-side bundles.
pub fn split_region_at_node(region: &Region, spec: SplitNodeSpec) -> Result<Vec<Region>, SplitError> {
    if !region.contains(spec.node) {
        return Err(SplitError::NodeOutsideRegion(spec.node));
    }
    if !region.gates.iter().any(|g| g.nodes.contains(&spec.node)) {
        return Err(SplitError::NodeNotOnGate(spec.node));
    }
    let side = spec.side(region, Axis::Y)?;
    let mut cut = Cut::new(Axis::Y);
    cut.add_subsplit(spec.node, side);
    apply_cut(region, &cut)
}

/// Minimal union-find with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> UnionFind {
        UnionFind { parent: (0..n).collect(), size: vec![1; n] }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::parallelogram;
    use crate::portals::compute_portals;

    fn region_of(points: Vec<GridPoint>) -> Region {
        Region::from_structure(&AmoebotStructure::new(points).unwrap())
    }

    fn y_portal_at(region: &Region, a: i64) -> Portal {
        compute_portals(region, Axis::Y)
            .into_iter()
            .find(|p| p.nodes[0].a == a)
            .unwrap()
    }

    #[test]
    fn parallelogram_split_at_middle_portal() {
        let r = region_of(parallelogram(5, 3));
        let parts = split_at_portal(&r, &y_portal_at(&r, 2)).unwrap();
        assert_eq!(parts.len(), 2);
        let a = parts[0].node_set();
        let b = parts[1].node_set();
        let shared: BTreeSet<_> = a.intersection(&b).copied().collect();
        assert_eq!(shared, (0..3).map(|b| GridPoint::new(2, b)).collect());
        assert_eq!(parts[0].edge_count() + parts[1].edge_count(), r.edge_count() + 2);
        assert!(parts.iter().all(|p| p.is_connected()));
    }

    #[test]
    fn single_portal_region_is_unchanged() {
        let r = region_of((0..4).map(|b| GridPoint::new(0, b)).collect());
        let parts = split_at_portal(&r, &y_portal_at(&r, 0)).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].shape(), r.shape());
    }

    #[test]
    fn empty_spec_list_matches_portal_split() {
        let r = region_of(parallelogram(4, 4));
        let p = y_portal_at(&r, 1);
        assert_eq!(split_at_portal(&r, &p).unwrap(), split_at_portal_and_nodes(&r, &p, &[]).unwrap());
    }

    #[test]
    fn node_split_divides_bundles() {
        // Parallelogram with a notch E of (2,1): (2,1) has a free E neighbor
        // and its ESE copy is split in two.
        let mut pts = parallelogram(4, 3);
        pts.retain(|p| *p != GridPoint::new(3, 1));
        let r = region_of(pts);
        let p = y_portal_at(&r, 2);
        let spec = SplitNodeSpec::new(GridPoint::new(2, 1), Direction::E);
        let parts = split_at_portal_and_nodes(&r, &p, &[spec]).unwrap();
        assert_eq!(parts.len(), 3);
        assert!(parts.iter().all(|p| p.is_connected()));
        let with_node: Vec<_> = parts.iter().filter(|p| p.contains(GridPoint::new(2, 1))).collect();
        assert_eq!(with_node.len(), 3);
    }

    #[test]
    fn spec_errors() {
        let r = region_of(parallelogram(4, 3));
        let p = y_portal_at(&r, 1);
        let off = SplitNodeSpec::new(GridPoint::new(2, 1), Direction::SSE);
        assert!(matches!(
            split_at_portal_and_nodes(&r, &p, &[off]),
            Err(SplitError::NodeOffPortal { .. })
        ));
        let occupied = SplitNodeSpec::new(GridPoint::new(1, 1), Direction::E);
        assert!(matches!(
            split_at_portal_and_nodes(&r, &p, &[occupied]),
            Err(SplitError::EmptyPointOccupied { .. })
        ));
    }

    #[test]
    fn corridor_split_at_gate_node() {
        // A column gate with two single-node spurs on its ESE side. Splitting
        // the middle gate node separates the NNE and SSW halves.
        let thin: Vec<_> = (0..5)
            .map(|b| GridPoint::new(0, b))
            .chain([GridPoint::new(1, 0), GridPoint::new(1, 3)])
            .collect();
        let mut r = Region::from_structure(&AmoebotStructure::new(thin).unwrap());
        r.gates.push(Gate {
            portal_id: 0,
            side: GateSide::ESE,
            nodes: (0..5).map(|b| GridPoint::new(0, b)).collect(),
            region_id: 0,
        });
        let parts = split_region_at_node(&r, SplitNodeSpec::new(GridPoint::new(0, 2), Direction::E)).unwrap();
        assert_eq!(parts.len(), 2);
        assert!(parts.iter().all(|p| p.contains(GridPoint::new(0, 2))));
        assert!(parts.iter().all(|p| p.is_connected()));
    }

    #[test]
    fn node_split_with_only_nne_edges_is_noop() {
        let pts = vec![GridPoint::new(0, 0), GridPoint::new(0, 1)];
        let mut r = region_of(pts);
        r.gates.push(Gate {
            portal_id: 0,
            side: GateSide::ESE,
            nodes: vec![GridPoint::new(0, 0), GridPoint::new(0, 1)],
            region_id: 0,
        });
        let parts = split_region_at_node(&r, SplitNodeSpec::new(GridPoint::new(0, 0), Direction::E)).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].shape(), r.shape());
    }

    #[test]
    fn node_not_on_gate_is_rejected() {
        let r = region_of(parallelogram(2, 2));
        let spec = SplitNodeSpec::new(GridPoint::new(0, 0), Direction::W);
        assert_eq!(split_region_at_node(&r, spec), Err(SplitError::NodeNotOnGate(GridPoint::new(0, 0))));
    }
}
