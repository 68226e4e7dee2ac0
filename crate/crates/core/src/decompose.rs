//! Centralized reference decomposition in three phases: simple regions,
//! tunnel regions and convex regions.
//!
//! Every phase is split into a *plan* (which portals and nodes to cut) and an
//! *application* of the plan. The distributed pipeline computes the same
//! plans with circuit protocols and reuses the application step.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::grid::{find_holes, AmoebotStructure, Axis, Compass, Direction, GridPoint, Side};
use crate::portals::{portal_graph, Portal, PortalGraph};
use crate::split::{apply_cut, Cut, Gate, GateSide, Region, SplitError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecomposeError {
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error("tunnel region touches {0} gates, expected at most two")]
    TooManyGates(usize),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

/// Full output of the centralized pipeline.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub regions: Vec<Region>,
    pub phase1_regions: Vec<Region>,
    pub phase2_regions: Vec<Region>,
    /// Gates of the phase-1 regions.
    pub gates: Vec<Gate>,
    pub holes: usize,
    pub tunnels: Vec<TunnelCaseData>,
}

impl Decomposition {
    /// Region shapes sorted canonically, for comparisons up to id permutation.
    pub fn shapes(&self) -> Vec<crate::split::RegionShape> {
        let mut s: Vec<_> = self.regions.iter().map(Region::shape).collect();
        s.sort();
        s
    }
}

/// How one of the axes x or z was handled for a two-gate tunnel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "case")]
pub enum AxisCase {
    /// Some portal of the axis meets both gates.
    #[serde(rename = "1")]
    Spanning {
        north: Vec<GridPoint>,
        south: Vec<GridPoint>,
        b_north: Option<GridPoint>,
        b_south: Option<GridPoint>,
    },
    /// No portal meets both gates; cut at the portal of each gate nearest
    /// to the other gate.
    #[serde(rename = "2")]
    Separate {
        near_first: Vec<GridPoint>,
        near_second: Vec<GridPoint>,
        b_first: Option<GridPoint>,
        b_second: Option<GridPoint>,
    },
}

impl AxisCase {
    pub fn case_number(&self) -> u8 {
        match self {
            AxisCase::Spanning { .. } => 1,
            AxisCase::Separate { .. } => 2,
        }
    }
}

/// Median split of the middle region along one axis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MedianSplit {
    pub axis: Axis,
    pub distance: usize,
    /// One median portal, or two when the distance is odd.
    pub portals: Vec<Vec<GridPoint>>,
    pub split_nodes: Vec<GridPoint>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TunnelCaseData {
    pub gates: Vec<Gate>,
    pub x: AxisCase,
    pub z: AxisCase,
    /// Middle regions, only when both axes fall into the separate case.
    pub middles: Vec<MiddleData>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MiddleData {
    pub nodes: Vec<GridPoint>,
    pub g: GridPoint,
    pub g_prime: GridPoint,
    pub medians: Vec<MedianSplit>,
}

/// Cuts for one tunnel: first the x and z cuts on the tunnel, then the
/// median cuts applied to the middle regions only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TunnelPlan {
    pub cuts: Vec<Cut>,
    pub middle: Option<MiddlePlan>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MiddlePlan {
    /// A middle region contains a node of each set.
    pub first_side: BTreeSet<GridPoint>,
    pub second_side: BTreeSet<GridPoint>,
    /// Median cuts per middle region, in family order.
    pub cuts: Vec<Vec<Cut>>,
}

// ---------------------------------------------------------------------------
// Shared helpers

/// Apply a cut to every region of a family, restricted to each region.
/// Node-only sub-splits apply where the node's copy lies on the named side.
pub fn cut_family(regions: Vec<Region>, cut: &Cut) -> Result<Vec<Region>, SplitError> {
    let mut out = Vec::new();
    for r in regions {
        let mut local = Cut::new(cut.axis);
        local.portal_nodes = cut.portal_nodes.iter().copied().filter(|p| r.contains(*p)).collect();
        for (&p, sides) in &cut.subsplits {
            if !r.contains(p) {
                continue;
            }
            if local.portal_nodes.contains(&p) {
                local.subsplits.insert(p, sides.clone());
                continue;
            }
            let ds = r.dirs(p);
            for &s in sides {
                let on_side = !ds.intersect(cut.axis.side_dirs(s)).is_empty();
                let within = ds.minus(cut.axis.side_dirs(s).union(cut.axis.axis_dirs())).is_empty();
                if on_side && within {
                    local.add_subsplit(p, s);
                }
            }
        }
        if local.is_empty() {
            out.push(r);
        } else {
            out.extend(apply_cut(&r, &local)?);
        }
    }
    Ok(out)
}

/// Sort regions canonically, assign ids and recompute gates.
pub fn finalize(mut regions: Vec<Region>, split_y: &BTreeSet<GridPoint>) -> Vec<Region> {
    regions.sort_by_cached_key(Region::shape);
    for (i, r) in regions.iter_mut().enumerate() {
        r.id = i as u64;
        r.gates = gates_of(r, split_y);
    }
    regions
}

/// Gates of a region: maximal y-chains of nodes lying on splitting y-portals.
pub fn gates_of(region: &Region, split_y: &BTreeSet<GridPoint>) -> Vec<Gate> {
    let mut gates = Vec::new();
    for p in region.nodes() {
        if !split_y.contains(&p) {
            continue;
        }
        let below = p.neighbor(Direction::SSW);
        if region.has_edge(p, Direction::SSW) && split_y.contains(&below) {
            continue;
        }
        let mut nodes = vec![p];
        let mut cur = p;
        while region.has_edge(cur, Direction::NNE) && split_y.contains(&cur.neighbor(Direction::NNE)) {
            cur = cur.neighbor(Direction::NNE);
            nodes.push(cur);
        }
        let low = nodes
            .iter()
            .any(|&u| !region.dirs(u).intersect(Axis::Y.side_dirs(Side::Low)).is_empty());
        gates.push(Gate {
            portal_id: p.a,
            side: if low { GateSide::WNW } else { GateSide::ESE },
            nodes,
            region_id: region.id,
        });
    }
    gates
}

fn bfs_region(region: &Region, sources: impl IntoIterator<Item = GridPoint>) -> BTreeMap<GridPoint, usize> {
    let mut dist = BTreeMap::new();
    let mut queue = VecDeque::new();
    for s in sources {
        if region.contains(s) && !dist.contains_key(&s) {
            dist.insert(s, 0);
            queue.push_back(s);
        }
    }
    while let Some(p) = queue.pop_front() {
        let d = dist[&p];
        for (_, q) in region.neighbors(p) {
            if !dist.contains_key(&q) {
                dist.insert(q, d + 1);
                queue.push_back(q);
            }
        }
    }
    dist
}

/// Whether `p` has no retained edge in some direction of `side`.
fn free_on_side(region: &Region, p: GridPoint, axis: Axis, side: Side) -> bool {
    axis.side_dirs(side).iter().any(|d| !region.has_edge(p, d))
}

/// Side of `portal` on which the adjacent portal `other` lies.
fn side_towards(portal: &Portal, other: &Portal) -> Side {
    if other.line_index() > portal.line_index() {
        Side::High
    } else {
        Side::Low
    }
}

// ---------------------------------------------------------------------------
// Phase 1

/// Split node chosen for one inner hole: the node, the side of its portal
/// facing the hole, and the preferred free direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct HoleSplitNode {
    pub node: GridPoint,
    pub side: Side,
    pub empty: Direction,
}

/// WNW-most and ESE-most boundary nodes of every inner hole (ties broken
/// towards NNE).
pub fn phase1_split_nodes(structure: &AmoebotStructure) -> Vec<HoleSplitNode> {
    let (_, inner) = find_holes(structure);
    let mut out = Vec::new();
    for hole in &inner {
        let wnw = *hole
            .boundary
            .iter()
            .max_by_key(|p| (Compass::WNW.key(**p), p.b))
            .unwrap();
        let ese = *hole
            .boundary
            .iter()
            .max_by_key(|p| (Compass::ESE.key(**p), p.b))
            .unwrap();
        let pick = |p: GridPoint, prefs: [Direction; 2]| {
            *prefs
                .iter()
                .find(|d| hole.cells.contains(&p.neighbor(**d)))
                .expect("extremal boundary node faces its hole")
        };
        out.push(HoleSplitNode { node: wnw, side: Side::High, empty: pick(wnw, [Direction::E, Direction::SSE]) });
        out.push(HoleSplitNode { node: ese, side: Side::Low, empty: pick(ese, [Direction::W, Direction::NNW]) });
    }
    out
}

/// The single y-cut of phase 1 given its split nodes.
pub fn phase1_cut(structure: &AmoebotStructure, nodes: &[HoleSplitNode]) -> Cut {
    let full = Region::from_structure(structure);
    let mut cut = Cut::new(Axis::Y);
    for n in nodes {
        cut.add_portal(full.chain_through(n.node, Axis::Y));
        cut.add_subsplit(n.node, n.side);
    }
    cut
}

/// Decompose the structure into simple regions. Returns the regions, their
/// gates and the nodes of all splitting y-portals.
pub fn phase1_apply(
    structure: &AmoebotStructure,
    cut: &Cut,
) -> Result<(Vec<Region>, BTreeSet<GridPoint>), DecomposeError> {
    let full = Region::from_structure(structure);
    let regions = if cut.is_empty() { vec![full] } else { apply_cut(&full, cut)? };
    let split_y = cut.portal_nodes.clone();
    Ok((finalize(regions, &split_y), split_y))
}

pub fn phase1_simple(structure: &AmoebotStructure) -> Result<(Vec<Region>, Vec<Gate>), DecomposeError> {
    let cut = phase1_cut(structure, &phase1_split_nodes(structure));
    let (regions, _) = phase1_apply(structure, &cut)?;
    let gates = regions.iter().flat_map(|r| r.gates.clone()).collect();
    Ok((regions, gates))
}

// ---------------------------------------------------------------------------
// Phase 2

/// Portals left after iteratively pruning non-gate leaves of the y-portal
/// tree. Returns a keep flag per portal id.
pub fn prune_non_gate_leaves(graph: &PortalGraph, is_gate: &[bool]) -> Vec<bool> {
    let n = graph.len();
    let mut keep = vec![true; n];
    let mut degree: Vec<usize> = (0..n).map(|i| graph.degree(i)).collect();
    let mut stack: Vec<usize> = (0..n).filter(|&i| degree[i] <= 1 && !is_gate[i]).collect();
    while let Some(i) = stack.pop() {
        if !keep[i] {
            continue;
        }
        // A lone remaining non-gate portal is pruned too, unless it is the
        // whole tree and there are no gates at all.
        keep[i] = false;
        for &j in &graph.adjacency[i] {
            if keep[j] {
                degree[j] -= 1;
                if degree[j] <= 1 && !is_gate[j] {
                    stack.push(j);
                }
            }
        }
    }
    keep
}

fn gate_flags(graph: &PortalGraph, split_y: &BTreeSet<GridPoint>) -> Vec<bool> {
    graph
        .portals
        .iter()
        .map(|p| p.nodes.iter().any(|u| split_y.contains(u)))
        .collect()
}

/// Phase-2 portal cut over all regions plus the nodes of pruned portals.
pub fn phase2_degree_cut(regions: &[Region], split_y: &BTreeSet<GridPoint>) -> (Cut, BTreeSet<GridPoint>) {
    let mut cut = Cut::new(Axis::Y);
    let mut pruned = BTreeSet::new();
    for r in regions {
        let graph = portal_graph(r, Axis::Y);
        let is_gate = gate_flags(&graph, split_y);
        if is_gate.iter().filter(|g| **g).count() <= 2 {
            continue;
        }
        let keep = prune_non_gate_leaves(&graph, &is_gate);
        for (i, p) in graph.portals.iter().enumerate() {
            if !keep[i] {
                pruned.extend(p.nodes.iter().copied());
                continue;
            }
            let deg = graph.adjacency[i].iter().filter(|&&j| keep[j]).count();
            if !is_gate[i] && deg >= 3 {
                cut.add_portal(p.nodes.iter().copied());
            }
        }
    }
    (cut, pruned)
}

/// Node splits at `g_2, …, g_ℓ` of every gate with several adjacent
/// unpruned portals.
pub fn phase2_node_cut(regions: &[Region], split_y: &BTreeSet<GridPoint>, pruned: &BTreeSet<GridPoint>) -> Cut {
    let mut cut = Cut::new(Axis::Y);
    for r in regions {
        let graph = portal_graph(r, Axis::Y);
        let is_gate = gate_flags(&graph, split_y);
        if is_gate.iter().filter(|g| **g).count() <= 2 {
            continue;
        }
        for (i, gate) in graph.portals.iter().enumerate() {
            if !is_gate[i] {
                continue;
            }
            // Northernmost gate node adjacent to each unpruned neighbor portal.
            let mut marks: BTreeMap<usize, (GridPoint, Side)> = BTreeMap::new();
            for &u in &gate.nodes {
                for (d, v) in r.neighbors(u) {
                    if d.axis() == Axis::Y || pruned.contains(&v) {
                        continue;
                    }
                    let side = Axis::Y.side_of(d).unwrap();
                    let j = graph.portal_of(v).unwrap();
                    let e = marks.entry(j).or_insert((u, side));
                    if u.b > e.0.b {
                        *e = (u, side);
                    }
                }
            }
            let mut ordered: Vec<(GridPoint, Side)> = marks.into_values().collect();
            ordered.sort_by_key(|(u, _)| std::cmp::Reverse(u.b));
            ordered.dedup_by_key(|(u, _)| *u);
            for &(u, side) in ordered.iter().skip(1) {
                cut.add_subsplit(u, side);
            }
        }
    }
    cut
}

/// Split every simple region into tunnel regions. Returns the regions and
/// the enlarged set of splitting y-portal nodes.
pub fn phase2_apply(
    regions: Vec<Region>,
    split_y: &BTreeSet<GridPoint>,
    degree_cut: &Cut,
    node_cut: impl FnOnce(&[Region], &BTreeSet<GridPoint>) -> Cut,
) -> Result<(Vec<Region>, BTreeSet<GridPoint>), DecomposeError> {
    let mut split_y = split_y.clone();
    split_y.extend(degree_cut.portal_nodes.iter().copied());
    let mid = finalize(cut_family(regions, degree_cut)?, &split_y);
    let ncut = node_cut(&mid, &split_y);
    let out = finalize(cut_family(mid, &ncut)?, &split_y);
    Ok((out, split_y))
}

/// Tunnel decomposition of a single simple region.
pub fn phase2_tunnels(region: &Region, split_y: &BTreeSet<GridPoint>) -> Result<Vec<Region>, DecomposeError> {
    let regions = vec![region.clone()];
    let (degree_cut, pruned) = phase2_degree_cut(&regions, split_y);
    let (out, _) = phase2_apply(regions, split_y, &degree_cut, |r, s| phase2_node_cut(r, s, &pruned))?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Phase 3

struct GatePair<'a> {
    first: &'a Gate,
    second: &'a Gate,
}

fn portals_meeting(graph: &PortalGraph, gate: &Gate) -> BTreeSet<usize> {
    gate.nodes.iter().filter_map(|u| graph.portal_of(*u)).collect()
}

fn westernmost(nodes: impl IntoIterator<Item = GridPoint>) -> Option<GridPoint> {
    nodes.into_iter().min_by_key(|p| p.west_key())
}

fn axis_case(t: &Region, pair: &GatePair, axis: Axis, cut: &mut Cut) -> AxisCase {
    let graph = portal_graph(t, axis);
    let a = portals_meeting(&graph, pair.first);
    let b = portals_meeting(&graph, pair.second);
    let common: Vec<usize> = a.intersection(&b).copied().collect();
    if !common.is_empty() {
        let north = &graph.portals[*common.iter().max_by_key(|&&i| graph.portals[i].line_index()).unwrap()];
        let south = &graph.portals[*common.iter().min_by_key(|&&i| graph.portals[i].line_index()).unwrap()];
        let on_gates: BTreeSet<GridPoint> = pair.first.nodes.iter().chain(&pair.second.nodes).copied().collect();
        let pick = |p: &Portal, side: Side| {
            westernmost(
                p.nodes
                    .iter()
                    .copied()
                    .filter(|u| !on_gates.contains(u) && free_on_side(t, *u, axis, side)),
            )
        };
        let b_north = pick(north, Side::High);
        let b_south = pick(south, Side::Low);
        cut.add_portal(north.nodes.iter().copied());
        cut.add_portal(south.nodes.iter().copied());
        if let Some(u) = b_north {
            cut.add_subsplit(u, Side::High);
        }
        if let Some(u) = b_south {
            cut.add_subsplit(u, Side::Low);
        }
        return AxisCase::Spanning {
            north: north.nodes.clone(),
            south: south.nodes.clone(),
            b_north,
            b_south,
        };
    }
    let mut near = |from: &BTreeSet<usize>, to: &BTreeSet<usize>, gate: &Gate| {
        let dist = graph.distances_from(&to.iter().copied().collect::<Vec<_>>());
        let best = *from.iter().min_by_key(|&&i| (dist[i], graph.portals[i].line_index())).unwrap();
        let portal = &graph.portals[best];
        // The next portal on the tree path towards the other gate.
        let next = graph.adjacency[best]
            .iter()
            .copied()
            .find(|&j| dist[j].is_some() && dist[j] < dist[best])
            .expect("gates lie in one connected tunnel");
        let side = side_towards(portal, &graph.portals[next]);
        let meet = portal.nodes.iter().position(|u| gate.nodes.contains(u)).unwrap();
        let mut order: Vec<usize> = (0..portal.nodes.len()).collect();
        order.sort_by_key(|&k| (k as i64 - meet as i64).abs());
        let split = order
            .into_iter()
            .map(|k| portal.nodes[k])
            .find(|u| !gate.nodes.contains(u) && free_on_side(t, *u, axis, side));
        cut.add_portal(portal.nodes.iter().copied());
        if let Some(u) = split {
            cut.add_subsplit(u, side);
        }
        (portal.nodes.clone(), split)
    };
    let (near_first, b_first) = near(&a, &b, pair.first);
    let (near_second, b_second) = near(&b, &a, pair.second);
    AxisCase::Separate { near_first, near_second, b_first, b_second }
}

/// Nodes on the portal-path intersection between two nodes of a simple
/// region: for every axis, the union of portals on the tree path.
pub fn shortest_path_set(m: &Region, g: GridPoint, g2: GridPoint) -> BTreeSet<GridPoint> {
    let mut on_path: Vec<BTreeSet<usize>> = Vec::new();
    let mut graphs = Vec::new();
    for axis in Axis::ALL {
        let graph = portal_graph(m, axis);
        let path = graph
            .path(graph.portal_of(g).unwrap(), graph.portal_of(g2).unwrap())
            .expect("region is connected");
        on_path.push(path.into_iter().collect());
        graphs.push(graph);
    }
    m.nodes()
        .filter(|&v| (0..3).all(|k| on_path[k].contains(&graphs[k].portal_of(v).unwrap())))
        .collect()
}

/// Articulation nodes of the subgraph of `m` induced by `set`.
pub fn articulation_nodes(m: &Region, set: &BTreeSet<GridPoint>) -> BTreeSet<GridPoint> {
    let nodes: Vec<GridPoint> = set.iter().copied().collect();
    let index: BTreeMap<GridPoint, usize> = nodes.iter().enumerate().map(|(i, p)| (*p, i)).collect();
    let adj: Vec<Vec<usize>> = nodes
        .iter()
        .map(|&p| m.neighbors(p).filter_map(|(_, q)| index.get(&q).copied()).collect())
        .collect();
    let n = nodes.len();
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut out = BTreeSet::new();
    let mut timer = 0;
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        let mut root_children = 0;
        // Stack of (node, parent, next neighbor index).
        let mut stack = vec![(root, usize::MAX, 0usize)];
        while let Some(&mut (v, parent, ref mut next)) = stack.last_mut() {
            if *next < adj[v].len() {
                let w = adj[v][*next];
                *next += 1;
                if disc[w] == usize::MAX {
                    disc[w] = timer;
                    low[w] = timer;
                    timer += 1;
                    if v == root {
                        root_children += 1;
                    }
                    stack.push((w, v, 0));
                } else if w != parent {
                    low[v] = low[v].min(disc[w]);
                }
            } else {
                stack.pop();
                if parent != usize::MAX {
                    low[parent] = low[parent].min(low[v]);
                    if parent != root && low[v] >= disc[parent] {
                        out.insert(nodes[parent]);
                    }
                }
            }
        }
        if root_children >= 2 {
            out.insert(nodes[root]);
        }
    }
    out
}

/// Median portal cuts of a middle region with single-node gates `g`, `g2`.
pub fn median_cuts(m: &Region, g: GridPoint, g2: GridPoint) -> Result<(Vec<Cut>, Vec<MedianSplit>), DecomposeError> {
    for p in [g, g2] {
        if !m.contains(p) {
            return Err(SplitError::NodeOutsideRegion(p).into());
        }
    }
    let s_m = shortest_path_set(m, g, g2);
    let blocking = articulation_nodes(m, &s_m);
    let mut cuts = Vec::new();
    let mut info = Vec::new();
    for axis in Axis::ALL {
        let graph = portal_graph(m, axis);
        let path = graph
            .path(graph.portal_of(g).unwrap(), graph.portal_of(g2).unwrap())
            .expect("region is connected");
        let d = path.len() - 1;
        // The portal at ⌈d/2⌉ from one gate and ⌊d/2⌋ from the other. For
        // odd d the two labellings of the gates give adjacent candidates;
        // the one with the smaller portal index is taken so that the result
        // does not depend on which gate is called g.
        let mut k = d.div_ceil(2);
        if d % 2 == 1 && graph.portals[path[k - 1]].line_index() < graph.portals[path[k]].line_index() {
            k -= 1;
        }
        let mut cut = Cut::new(axis);
        let mut median = MedianSplit { axis, distance: d, portals: Vec::new(), split_nodes: Vec::new() };
        let portal = &graph.portals[path[k]];
        cut.add_portal(portal.nodes.iter().copied());
        median.portals.push(portal.nodes.clone());
        if k != 0 && k != d {
            let before = side_towards(portal, &graph.portals[path[k - 1]]);
            let after = side_towards(portal, &graph.portals[path[k + 1]]);
            if before == after {
                if let Some(b) = westernmost(portal.nodes.iter().copied().filter(|u| blocking.contains(u))) {
                    cut.add_subsplit(b, before);
                    median.split_nodes.push(b);
                }
            }
        }
        cuts.push(cut);
        info.push(median);
    }
    Ok((cuts, info))
}

/// Split a middle region at its median portals.
pub fn point_gate_split(m: &Region, g: GridPoint, g2: GridPoint) -> Result<Vec<Region>, DecomposeError> {
    let (cuts, _) = median_cuts(m, g, g2)?;
    let mut family = vec![m.clone()];
    for cut in &cuts {
        family = cut_family(family, cut)?;
    }
    Ok(family)
}

/// Choose the point gate on one side of the middle region: the node of the
/// near x-portal inside `m` closest to the gate, or of the near z-portal if
/// the x-portal misses `m`. Along a near portal the distance to the gate is
/// the position on the portal, so this is a closest-node query per portal.
fn point_gate(t: &Region, m: &Region, gate: &Gate, near_x: &[GridPoint], near_z: &[GridPoint]) -> Option<GridPoint> {
    let dist = bfs_region(t, gate.nodes.iter().copied());
    let candidates = near_x
        .iter()
        .map(|p| (*p, 0))
        .chain(near_z.iter().map(|p| (*p, 1)))
        .filter(|(p, _)| m.contains(*p));
    candidates
        .min_by_key(|(p, tag)| (*tag, dist.get(p).copied().unwrap_or(usize::MAX), std::cmp::Reverse(p.b), p.west_key()))
        .map(|(p, _)| p)
}

/// Indices of the regions of a family touching both node sets. Normally
/// there is exactly one; when the near portals of the two gates cross, each
/// touching region is handled on its own.
pub fn middle_regions(family: &[Region], first: &BTreeSet<GridPoint>, second: &BTreeSet<GridPoint>) -> Vec<usize> {
    (0..family.len())
        .filter(|&i| {
            let r = &family[i];
            first.iter().any(|p| r.contains(*p)) && second.iter().any(|p| r.contains(*p))
        })
        .collect()
}

/// Case analysis of a two-gate tunnel for the x- and z-axis, with the
/// resulting cuts.
pub fn tunnel_axis_cases(t: &Region) -> (AxisCase, AxisCase, Cut, Cut) {
    let pair = GatePair { first: &t.gates[0], second: &t.gates[1] };
    let mut xcut = Cut::new(Axis::X);
    let mut zcut = Cut::new(Axis::Z);
    let x = axis_case(t, &pair, Axis::X, &mut xcut);
    let z = axis_case(t, &pair, Axis::Z, &mut zcut);
    (x, z, xcut, zcut)
}

/// Plan the phase-3 cuts of a tunnel with exactly two gates.
pub fn plan_tunnel(t: &Region) -> Result<(TunnelPlan, TunnelCaseData), DecomposeError> {
    if t.gates.len() != 2 {
        return Err(DecomposeError::TooManyGates(t.gates.len()));
    }
    let pair = GatePair { first: &t.gates[0], second: &t.gates[1] };
    let (x, z, xcut, zcut) = tunnel_axis_cases(t);
    let mut data = TunnelCaseData { gates: t.gates.clone(), x: x.clone(), z: z.clone(), middles: Vec::new() };
    let cuts = vec![xcut, zcut];
    let (
        AxisCase::Separate { near_first: fx, near_second: sx, .. },
        AxisCase::Separate { near_first: fz, near_second: sz, .. },
    ) = (&x, &z)
    else {
        return Ok((TunnelPlan { cuts, middle: None }, data));
    };
    let mut family = vec![t.clone()];
    for c in &cuts {
        family = cut_family(family, c)?;
    }
    let first_side: BTreeSet<GridPoint> = fx.iter().chain(fz).copied().collect();
    let second_side: BTreeSet<GridPoint> = sx.iter().chain(sz).copied().collect();
    let mut mcuts = Vec::new();
    for i in middle_regions(&family, &first_side, &second_side) {
        let m = &family[i];
        let g = point_gate(t, m, pair.first, fx, fz)
            .ok_or_else(|| DecomposeError::Invariant("no point gate on the first side".into()))?;
        let g2 = point_gate(t, m, pair.second, sx, sz)
            .ok_or_else(|| DecomposeError::Invariant("no point gate on the second side".into()))?;
        let (c, medians) = median_cuts(m, g, g2)?;
        mcuts.push(c);
        data.middles.push(MiddleData { nodes: m.nodes().collect(), g, g_prime: g2, medians });
    }
    Ok((
        TunnelPlan {
            cuts,
            middle: Some(MiddlePlan { first_side, second_side, cuts: mcuts }),
        },
        data,
    ))
}

/// Apply a tunnel plan.
pub fn apply_tunnel_plan(t: &Region, plan: &TunnelPlan) -> Result<Vec<Region>, DecomposeError> {
    let mut family = vec![t.clone()];
    for c in &plan.cuts {
        family = cut_family(family, c)?;
    }
    let Some(mp) = &plan.middle else {
        return Ok(family);
    };
    let middles = middle_regions(&family, &mp.first_side, &mp.second_side);
    if middles.len() != mp.cuts.len() {
        return Err(DecomposeError::Invariant(format!(
            "plan has {} middle regions, family has {}",
            mp.cuts.len(),
            middles.len()
        )));
    }
    let mut out = Vec::new();
    for (i, r) in family.into_iter().enumerate() {
        match middles.iter().position(|&j| j == i) {
            Some(k) => {
                let mut inner = vec![r];
                for c in &mp.cuts[k] {
                    inner = cut_family(inner, c)?;
                }
                out.extend(inner);
            }
            None => out.push(r),
        }
    }
    Ok(out)
}

pub fn phase3_convex(tunnel: &Region) -> Result<(Vec<Region>, Option<TunnelCaseData>), DecomposeError> {
    match tunnel.gates.len() {
        0 | 1 => Ok((vec![tunnel.clone()], None)),
        2 => {
            let (plan, data) = plan_tunnel(tunnel)?;
            Ok((apply_tunnel_plan(tunnel, &plan)?, Some(data)))
        }
        k => Err(DecomposeError::TooManyGates(k)),
    }
}

/// Run all three phases.
pub fn decompose(structure: &AmoebotStructure) -> Result<Decomposition, DecomposeError> {
    let holes = find_holes(structure).1.len();
    let cut1 = phase1_cut(structure, &phase1_split_nodes(structure));
    let (phase1_regions, split_y) = phase1_apply(structure, &cut1)?;
    let gates = phase1_regions.iter().flat_map(|r| r.gates.clone()).collect();

    let (degree_cut, pruned) = phase2_degree_cut(&phase1_regions, &split_y);
    let (phase2_regions, split_y) = phase2_apply(phase1_regions.clone(), &split_y, &degree_cut, |r, s| {
        phase2_node_cut(r, s, &pruned)
    })?;

    let mut regions = Vec::new();
    let mut tunnels = Vec::new();
    for t in &phase2_regions {
        let (parts, data) = phase3_convex(t)?;
        regions.extend(parts);
        tunnels.extend(data);
    }
    Ok(Decomposition {
        regions: finalize(regions, &split_y),
        phase1_regions,
        phase2_regions,
        gates,
        holes,
        tunnels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{hexagon, parallelogram};
    use crate::oracle::{is_geodesically_convex, is_simple};

    fn st(points: Vec<GridPoint>) -> AmoebotStructure {
        AmoebotStructure::new(points).unwrap()
    }

    fn annulus(radius: i64) -> AmoebotStructure {
        let mut pts = hexagon(GridPoint::new(0, 0), radius);
        pts.retain(|p| *p != GridPoint::new(0, 0));
        st(pts)
    }

    #[test]
    fn single_node_and_blob_are_one_region() {
        let d = decompose(&st(vec![GridPoint::new(0, 0)])).unwrap();
        assert_eq!(d.regions.len(), 1);
        let d = decompose(&st(hexagon(GridPoint::new(0, 0), 3))).unwrap();
        assert_eq!(d.regions.len(), 1);
        assert!(d.gates.is_empty());
    }

    #[test]
    fn annulus_phase1() {
        let s = annulus(2);
        let (regions, gates) = phase1_simple(&s).unwrap();
        assert!(regions.len() <= 4);
        assert!(gates.len() <= 6);
        for r in &regions {
            assert!(r.is_connected());
            assert!(is_simple(&r.node_set()));
        }
        let covered: BTreeSet<_> = regions.iter().flat_map(|r| r.nodes()).collect();
        assert_eq!(&covered, s.nodes());
    }

    #[test]
    fn annulus_full_pipeline_is_convex() {
        for radius in 2..5 {
            let s = annulus(radius);
            let d = decompose(&s).unwrap();
            for r in &d.regions {
                assert!(r.is_connected());
                assert!(is_simple(&r.node_set()));
                let (ok, w) = is_geodesically_convex(&s, &r.node_set());
                assert!(ok, "radius {radius}: witness {w:?}");
            }
        }
    }

    #[test]
    fn articulation_of_a_path() {
        let pts: Vec<_> = (0..4).map(|a| GridPoint::new(a, 0)).collect();
        let r = Region::from_structure(&st(pts.clone()));
        let set: BTreeSet<_> = pts.into_iter().collect();
        let art = articulation_nodes(&r, &set);
        assert_eq!(art, BTreeSet::from([GridPoint::new(1, 0), GridPoint::new(2, 0)]));
    }

    #[test]
    fn zero_or_one_gate_skips_phase3() {
        let r = Region::from_structure(&st(parallelogram(3, 3)));
        let (out, data) = phase3_convex(&r).unwrap();
        assert_eq!(out.len(), 1);
        assert!(data.is_none());
    }

    #[test]
    fn point_gate_split_of_adjacent_nodes() {
        let s = st(parallelogram(4, 3));
        let m = Region::from_structure(&s);
        let parts = point_gate_split(&m, GridPoint::new(1, 1), GridPoint::new(2, 1)).unwrap();
        for r in &parts {
            assert!(r.is_connected());
            assert!(is_geodesically_convex(&s, &r.node_set()).0);
        }
    }
}
