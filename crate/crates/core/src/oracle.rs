//! Brute-force checks: shortest-path sets, geodesic convexity, simplicity,
//! the half-sum distance identity and full decomposition verification.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use crate::decompose::Decomposition;
use crate::grid::{holes_of, AmoebotStructure, Axis, Compass, Direction, GridPoint};
use crate::portals::portal_graph;
use crate::split::Region;

/// Regions up to this size are checked over all pairs; larger ones over a
/// deterministic sample of sources.
pub const EXHAUSTIVE_LIMIT: usize = 3000;

const NONE: u32 = u32::MAX;

/// Index-based adjacency for fast repeated BFS.
#[derive(Debug, Clone)]
pub struct DenseGraph {
    pub nodes: Vec<GridPoint>,
    index: BTreeMap<GridPoint, u32>,
    nbr: Vec<[u32; 6]>,
}

impl DenseGraph {
    pub fn of_structure(structure: &AmoebotStructure) -> DenseGraph {
        Self::build(structure.iter().map(|p| (p, structure.occupied_dirs(p))))
    }

    pub fn of_region(region: &Region) -> DenseGraph {
        Self::build(region.dir_map().iter().map(|(p, d)| (*p, *d)))
    }

    fn build(items: impl Iterator<Item = (GridPoint, crate::grid::DirSet)>) -> DenseGraph {
        let items: Vec<_> = items.collect();
        let nodes: Vec<GridPoint> = items.iter().map(|(p, _)| *p).collect();
        let index: BTreeMap<GridPoint, u32> = nodes.iter().enumerate().map(|(i, p)| (*p, i as u32)).collect();
        let nbr = items
            .iter()
            .map(|(p, ds)| {
                let mut row = [NONE; 6];
                for d in ds.iter() {
                    row[d.index()] = index[&p.neighbor(d)];
                }
                row
            })
            .collect();
        DenseGraph { nodes, index, nbr }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index_of(&self, p: GridPoint) -> Option<usize> {
        self.index.get(&p).map(|&i| i as usize)
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.nbr[i].iter().filter(|&&j| j != NONE).map(|&j| j as usize)
    }

    pub fn neighbor(&self, i: usize, d: Direction) -> Option<usize> {
        let j = self.nbr[i][d.index()];
        (j != NONE).then_some(j as usize)
    }

    /// BFS distances from `src`; unreachable nodes get `u32::MAX`.
    pub fn bfs(&self, src: usize) -> Vec<u32> {
        let mut dist = vec![NONE; self.len()];
        let mut queue = VecDeque::from([src]);
        dist[src] = 0;
        while let Some(i) = queue.pop_front() {
            for j in self.neighbors(i) {
                if dist[j] == NONE {
                    dist[j] = dist[i] + 1;
                    queue.push_back(j);
                }
            }
        }
        dist
    }
}

/// All nodes on some shortest `u`–`v` path in the structure.
pub fn shortest_path_nodes(structure: &AmoebotStructure, u: GridPoint, v: GridPoint) -> BTreeSet<GridPoint> {
    let g = DenseGraph::of_structure(structure);
    let (Some(iu), Some(iv)) = (g.index_of(u), g.index_of(v)) else {
        return BTreeSet::new();
    };
    let du = g.bfs(iu);
    let dv = g.bfs(iv);
    let total = du[iv];
    (0..g.len())
        .filter(|&w| du[w] != NONE && dv[w] != NONE && du[w] + dv[w] == total)
        .map(|w| g.nodes[w])
        .collect()
}

/// A violating triple: `w` lies on a shortest `u`–`v` path but outside the region.
pub type Witness = (GridPoint, GridPoint, GridPoint);

/// Geodesic convexity of a node set within the structure.
pub fn is_geodesically_convex(structure: &AmoebotStructure, region: &BTreeSet<GridPoint>) -> (bool, Option<Witness>) {
    let g = DenseGraph::of_structure(structure);
    convex_in(&g, region, None)
}

/// Convexity check against a prebuilt structure graph. With `sample`, only
/// every k-th source node is used.
pub fn convex_in(g: &DenseGraph, region: &BTreeSet<GridPoint>, sample: Option<usize>) -> (bool, Option<Witness>) {
    let members: Vec<usize> = region.iter().filter_map(|p| g.index_of(*p)).collect();
    let mut inside = vec![false; g.len()];
    for &i in &members {
        inside[i] = true;
    }
    let stride = sample.unwrap_or(1).max(1);
    let mut order: Vec<usize> = Vec::with_capacity(g.len());
    let mut origin = vec![NONE; g.len()];
    for &u in members.iter().step_by(stride) {
        let dist = g.bfs(u);
        order.clear();
        order.extend((0..g.len()).filter(|&i| dist[i] != NONE));
        order.sort_unstable_by_key(|&i| std::cmp::Reverse(dist[i]));
        origin.fill(NONE);
        for &i in &members {
            origin[i] = i as u32;
        }
        // Walk the shortest-path DAG backwards from every region node.
        for &x in &order {
            if origin[x] == NONE || dist[x] == 0 {
                continue;
            }
            for w in g.neighbors(x) {
                if dist[w] + 1 == dist[x] && origin[w] == NONE {
                    origin[w] = origin[x];
                    if !inside[w] {
                        let v = g.nodes[origin[x] as usize];
                        return (false, Some((g.nodes[u], v, g.nodes[w])));
                    }
                }
            }
        }
    }
    (true, None)
}

/// True iff the node set encloses no unoccupied cell.
pub fn is_simple(nodes: &BTreeSet<GridPoint>) -> bool {
    holes_of(nodes).1.is_empty()
}

/// Checks `d(u,v) = ½(d_x + d_y + d_z)` for all pairs in the region, using
/// distances along retained edges. Returns the first failing pair.
pub fn distance_identity(region: &Region) -> Result<(), (GridPoint, GridPoint)> {
    distance_identity_sampled(region, 1)
}

pub fn distance_identity_sampled(region: &Region, stride: usize) -> Result<(), (GridPoint, GridPoint)> {
    let g = DenseGraph::of_region(region);
    let graphs: Vec<_> = Axis::ALL.iter().map(|&a| portal_graph(region, a)).collect();
    let portal_idx: Vec<Vec<usize>> = graphs
        .iter()
        .map(|pg| g.nodes.iter().map(|p| pg.portal_of(*p).unwrap()).collect())
        .collect();
    for u in (0..g.len()).step_by(stride.max(1)) {
        let d = g.bfs(u);
        let pd: Vec<Vec<Option<usize>>> = graphs
            .iter()
            .zip(&portal_idx)
            .map(|(pg, idx)| pg.distances_from(&[idx[u]]))
            .collect();
        for v in 0..g.len() {
            let sum: usize = (0..3).map(|k| pd[k][portal_idx[k][v]].unwrap_or(usize::MAX / 4)).sum();
            if d[v] == NONE || 2 * d[v] as usize != sum {
                return Err((g.nodes[u], g.nodes[v]));
            }
        }
    }
    Ok(())
}

/// Nodes of `nodes` with the fewest members lying strictly beyond them in
/// direction `dir`.
pub fn global_maxima_oracle(nodes: &BTreeSet<GridPoint>, dir: Compass) -> BTreeSet<GridPoint> {
    let count = |w: GridPoint| nodes.iter().filter(|v| dir.key(**v) > dir.key(w)).count();
    let best = nodes.iter().map(|&w| count(w)).min();
    nodes.iter().copied().filter(|&w| Some(count(w)) == best).collect()
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RegionCheck {
    pub id: u64,
    pub size: usize,
    pub connected_ok: bool,
    pub edges_ok: bool,
    pub simple_ok: bool,
    pub convex_ok: bool,
    pub witness: Option<[[i64; 2]; 3]>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Counts {
    pub holes: usize,
    pub phase1_regions: usize,
    pub gates: usize,
    pub tunnels: usize,
    pub regions: usize,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct BoundChecks {
    pub phase1_regions_ok: bool,
    pub gates_ok: bool,
    pub phase1_simple_ok: bool,
    pub tunnels_two_gates_ok: bool,
    /// `(regions − 1) / |H|`, or 0 without holes.
    pub region_constant: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct VerificationReport {
    pub coverage_ok: bool,
    pub regions: Vec<RegionCheck>,
    pub counts: Counts,
    pub bound_checks: BoundChecks,
    pub distance_identity_ok: bool,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.coverage_ok
            && self.distance_identity_ok
            && self.bound_checks.phase1_regions_ok
            && self.bound_checks.gates_ok
            && self.bound_checks.phase1_simple_ok
            && self.bound_checks.tunnels_two_gates_ok
            && self
                .regions
                .iter()
                .all(|r| r.connected_ok && r.edges_ok && r.simple_ok && r.convex_ok)
    }

    /// Human-readable failure summary (empty on success).
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.coverage_ok {
            out.push("regions do not cover the structure".to_string());
        }
        if !self.distance_identity_ok {
            out.push("distance identity fails on a simple region".to_string());
        }
        let b = &self.bound_checks;
        for (ok, what) in [
            (b.phase1_regions_ok, "phase-1 region count exceeds 3|H|+1"),
            (b.gates_ok, "gate count exceeds 6|H|"),
            (b.phase1_simple_ok, "a phase-1 region is not simple"),
            (b.tunnels_two_gates_ok, "a tunnel region touches more than two gates"),
        ] {
            if !ok {
                out.push(what.to_string());
            }
        }
        for r in &self.regions {
            for (ok, what) in [
                (r.connected_ok, "disconnected"),
                (r.edges_ok, "has edges outside the structure"),
                (r.simple_ok, "is not simple"),
                (r.convex_ok, "is not geodesically convex"),
            ] {
                if !ok {
                    out.push(format!("region {} {what}", r.id));
                }
            }
            if let Some(w) = r.witness {
                out.push(format!("region {} witness u={:?} v={:?} w={:?}", r.id, w[0], w[1], w[2]));
            }
        }
        out
    }
}

/// Verify every claimed property of a decomposition.
pub fn verify_decomposition(structure: &AmoebotStructure, dec: &Decomposition) -> VerificationReport {
    let g = DenseGraph::of_structure(structure);
    let covered: BTreeSet<GridPoint> = dec.regions.iter().flat_map(|r| r.nodes()).collect();
    let coverage_ok = &covered == structure.nodes();
    let mut distance_identity_ok = true;
    let mut regions = Vec::new();
    for r in &dec.regions {
        let nodes = r.node_set();
        let edges_ok = r.dir_map().iter().all(|(p, ds)| {
            structure.contains(*p) && ds.minus(structure.occupied_dirs(*p)).is_empty()
        });
        let simple_ok = is_simple(&nodes);
        let sample = (nodes.len() > EXHAUSTIVE_LIMIT).then(|| nodes.len().div_ceil(EXHAUSTIVE_LIMIT / 4));
        let (convex_ok, witness) = convex_in(&g, &nodes, sample);
        if simple_ok && r.is_connected() {
            let stride = if nodes.len() > 400 { nodes.len() / 100 } else { 1 };
            distance_identity_ok &= distance_identity_sampled(r, stride).is_ok();
        }
        regions.push(RegionCheck {
            id: r.id,
            size: nodes.len(),
            connected_ok: r.is_connected(),
            edges_ok,
            simple_ok,
            convex_ok,
            witness: witness.map(|(u, v, w)| [[u.a, u.b], [v.a, v.b], [w.a, w.b]]),
        });
    }
    let h = dec.holes;
    let counts = Counts {
        holes: h,
        phase1_regions: dec.phase1_regions.len(),
        gates: dec.gates.len(),
        tunnels: dec.phase2_regions.len(),
        regions: dec.regions.len(),
    };
    let bound_checks = BoundChecks {
        phase1_regions_ok: counts.phase1_regions <= 3 * h + 1,
        gates_ok: counts.gates <= 6 * h,
        phase1_simple_ok: dec.phase1_regions.iter().all(|r| is_simple(&r.node_set())),
        tunnels_two_gates_ok: dec.phase2_regions.iter().all(|r| r.gates.len() <= 2),
        region_constant: if h == 0 {
            0.0
        } else {
            (counts.regions as f64 - 1.0) / h as f64
        },
    };
    VerificationReport { coverage_ok, regions, counts, bound_checks, distance_identity_ok }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{hexagon, parallelogram};

    fn s(points: Vec<GridPoint>) -> AmoebotStructure {
        AmoebotStructure::new(points).unwrap()
    }

    #[test]
    fn shortest_paths_trivial() {
        let st = s(parallelogram(4, 4));
        let u = GridPoint::new(1, 1);
        assert_eq!(shortest_path_nodes(&st, u, u), BTreeSet::from([u]));
        let v = GridPoint::new(2, 1);
        assert_eq!(shortest_path_nodes(&st, u, v), BTreeSet::from([u, v]));
    }

    #[test]
    fn shortest_path_set_is_symmetric_and_convex() {
        let mut pts = hexagon(GridPoint::new(0, 0), 3);
        pts.retain(|p| *p != GridPoint::new(0, 0) && *p != GridPoint::new(1, 0));
        let st = s(pts);
        let u = GridPoint::new(-2, 0);
        let v = GridPoint::new(3, 0);
        let a = shortest_path_nodes(&st, u, v);
        assert_eq!(a, shortest_path_nodes(&st, v, u));
        assert!(is_geodesically_convex(&st, &a).0);
    }

    #[test]
    fn convexity_cases() {
        let st = s(parallelogram(6, 4));
        assert!(is_geodesically_convex(&st, st.nodes()).0);
        let line: BTreeSet<_> = (0..6).map(|a| GridPoint::new(a, 1)).collect();
        assert!(is_geodesically_convex(&st, &line).0);
        // A C shape around a filled block: its two tips have shorter paths
        // through the block.
        let c: BTreeSet<_> = (0..6)
            .map(|a| GridPoint::new(a, 0))
            .chain((0..6).map(|a| GridPoint::new(a, 3)))
            .chain((0..4).map(|b| GridPoint::new(0, b)))
            .collect();
        let (ok, witness) = is_geodesically_convex(&st, &c);
        assert!(!ok);
        let (u, v, w) = witness.unwrap();
        assert!(c.contains(&u) && c.contains(&v) && !c.contains(&w));
    }

    #[test]
    fn simplicity() {
        let hex: BTreeSet<_> = hexagon(GridPoint::new(0, 0), 2).into_iter().collect();
        assert!(is_simple(&hex));
        let mut ring = hex.clone();
        ring.remove(&GridPoint::new(0, 0));
        assert!(!is_simple(&ring));
    }

    #[test]
    fn distance_identity_on_hexagon() {
        let r = Region::from_structure(&s(hexagon(GridPoint::new(0, 0), 3)));
        assert!(distance_identity(&r).is_ok());
    }

    #[test]
    fn maxima_oracle() {
        let single = BTreeSet::from([GridPoint::new(2, 2)]);
        assert_eq!(global_maxima_oracle(&single, Compass::E), single);
        let line: BTreeSet<_> = (0..5).map(|a| GridPoint::new(a, 0)).collect();
        assert_eq!(global_maxima_oracle(&line, Compass::E), BTreeSet::from([GridPoint::new(4, 0)]));
    }
}
