//! Triangular-grid geometry: coordinates, directions, structures, holes and
//! boundary cycles.
//!
//! A node is addressed by two integers `(a, b)`: `a` counts steps along the E
//! axis and `b` steps along the NNE axis. The rendering-plane position of a
//! node is `a·(1, 0) + b·(1/2, √3/2)`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GridError {
    #[error("node {0} is not part of the structure")]
    NotInStructure(GridPoint),
    #[error("structure is empty")]
    Empty,
    #[error("structure is disconnected ({components} components)")]
    Disconnected { components: usize },
    #[error("duplicate node {0}")]
    Duplicate(GridPoint),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// The six lattice directions in counter-clockwise order starting at E.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    E,
    NNE,
    NNW,
    W,
    SSW,
    SSE,
}

impl Direction {
    pub const ALL: [Direction; 6] = [
        Direction::E,
        Direction::NNE,
        Direction::NNW,
        Direction::W,
        Direction::SSW,
        Direction::SSE,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Direction {
        Self::ALL[i % 6]
    }

    pub fn opposite(self) -> Direction {
        self.rotate(3)
    }

    /// Rotate counter-clockwise by `steps` multiples of 60°.
    pub fn rotate(self, steps: i32) -> Direction {
        Self::from_index((self.index() as i32 + steps).rem_euclid(6) as usize)
    }

    pub fn offset(self) -> (i64, i64) {
        match self {
            Direction::E => (1, 0),
            Direction::NNE => (0, 1),
            Direction::NNW => (-1, 1),
            Direction::W => (-1, 0),
            Direction::SSW => (0, -1),
            Direction::SSE => (1, -1),
        }
    }

    pub fn axis(self) -> Axis {
        match self {
            Direction::E | Direction::W => Axis::X,
            Direction::NNE | Direction::SSW => Axis::Y,
            Direction::NNW | Direction::SSE => Axis::Z,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A set of directions packed into one byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct DirSet(pub u8);

impl DirSet {
    pub const EMPTY: DirSet = DirSet(0);
    pub const FULL: DirSet = DirSet(0b11_1111);

    pub fn of(dirs: &[Direction]) -> DirSet {
        dirs.iter().fold(DirSet::EMPTY, |s, &d| s.with(d))
    }

    pub fn contains(self, d: Direction) -> bool {
        self.0 & (1 << d.index()) != 0
    }

    pub fn with(self, d: Direction) -> DirSet {
        DirSet(self.0 | (1 << d.index()))
    }

    pub fn without(self, d: Direction) -> DirSet {
        DirSet(self.0 & !(1 << d.index()))
    }

    pub fn union(self, o: DirSet) -> DirSet {
        DirSet(self.0 | o.0)
    }

    pub fn intersect(self, o: DirSet) -> DirSet {
        DirSet(self.0 & o.0)
    }

    pub fn minus(self, o: DirSet) -> DirSet {
        DirSet(self.0 & !o.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = Direction> {
        Direction::ALL.into_iter().filter(move |d| self.contains(*d))
    }

    /// Number of maximal cyclic runs of consecutive members.
    pub fn runs(self) -> usize {
        if self == DirSet::FULL {
            return 1;
        }
        Direction::ALL
            .into_iter()
            .filter(|d| self.contains(*d) && !self.contains(d.rotate(-1)))
            .count()
    }
}

/// The three lattice axes. Portals of an axis are maximal chains of edges
/// parallel to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    /// Direction in which the chain order of a portal increases.
    pub fn positive(self) -> Direction {
        match self {
            Axis::X => Direction::E,
            Axis::Y => Direction::NNE,
            Axis::Z => Direction::NNW,
        }
    }

    pub fn negative(self) -> Direction {
        self.positive().opposite()
    }

    /// Number of 60° counter-clockwise steps that carry the y-axis frame onto
    /// this axis such that the low side of the y-axis lands on the low side of
    /// this axis.
    pub fn frame_rotation(self) -> i32 {
        match self {
            Axis::Y => 0,
            Axis::Z => 1,
            Axis::X => 2,
        }
    }

    /// Map a direction given in the y-axis frame into this axis' frame.
    pub fn from_y_frame(self, d: Direction) -> Direction {
        d.rotate(self.frame_rotation())
    }

    /// The directions of the cross edges on the given side.
    pub fn side_dirs(self, side: Side) -> DirSet {
        let (a, b) = match side {
            Side::Low => (Direction::NNW, Direction::W),
            Side::High => (Direction::SSE, Direction::E),
        };
        DirSet::of(&[self.from_y_frame(a), self.from_y_frame(b)])
    }

    pub fn axis_dirs(self) -> DirSet {
        DirSet::of(&[self.positive(), self.negative()])
    }

    /// Which side of a portal of this axis a direction points to, or `None`
    /// if it runs along the axis.
    pub fn side_of(self, d: Direction) -> Option<Side> {
        if self.side_dirs(Side::Low).contains(d) {
            Some(Side::Low)
        } else if self.side_dirs(Side::High).contains(d) {
            Some(Side::High)
        } else {
            None
        }
    }

    /// Direction bundles used when a node copy on the given side is split in
    /// two: `(bundle holding the frame's NNE, bundle holding the frame's SSW)`.
    ///
    /// For the y-axis and the high (ESE) side these are `{NNE, E}` and
    /// `{SSW, SSE}`; the other cases are the rotated or reflected analogues.
    pub fn node_split_bundles(self, side: Side) -> (DirSet, DirSet) {
        let (pos, neg) = match side {
            Side::High => (
                [Direction::NNE, Direction::E],
                [Direction::SSW, Direction::SSE],
            ),
            Side::Low => (
                [Direction::NNE, Direction::NNW],
                [Direction::SSW, Direction::W],
            ),
        };
        let map = |ds: [Direction; 2]| DirSet::of(&[self.from_y_frame(ds[0]), self.from_y_frame(ds[1])]);
        (map(pos), map(neg))
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Side of a portal, by portal index: `Low` is the side with the smaller
/// index. For y-portals `Low` is WNW and `High` is ESE; for x- and z-portals
/// `High` is the northern side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Low,
    High,
}

impl Side {
    pub fn flip(self) -> Side {
        match self {
            Side::Low => Side::High,
            Side::High => Side::Low,
        }
    }
}

/// Compass keys used for extremal queries. Larger key means further in the
/// named direction. WNW/ESE are normal to the y-axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Compass {
    E,
    NNE,
    NNW,
    W,
    SSW,
    SSE,
    WNW,
    ESE,
}

impl Compass {
    pub const ALL: [Compass; 8] = [
        Compass::E,
        Compass::NNE,
        Compass::NNW,
        Compass::W,
        Compass::SSW,
        Compass::SSE,
        Compass::WNW,
        Compass::ESE,
    ];

    /// Integer projection of `p` onto this direction (scaled, exact).
    pub fn key(self, p: GridPoint) -> i64 {
        let (a, b) = (p.a, p.b);
        match self {
            Compass::E => 2 * a + b,
            Compass::W => -(2 * a + b),
            Compass::NNE => a + 2 * b,
            Compass::SSW => -(a + 2 * b),
            Compass::NNW => b - a,
            Compass::SSE => a - b,
            Compass::WNW => -a,
            Compass::ESE => a,
        }
    }

    /// Key difference when stepping one edge in direction `d`.
    pub fn step(self, d: Direction) -> i64 {
        let o = GridPoint::new(0, 0).neighbor(d);
        self.key(o)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridPoint {
    pub a: i64,
    pub b: i64,
}

impl GridPoint {
    pub const fn new(a: i64, b: i64) -> Self {
        GridPoint { a, b }
    }

    pub fn neighbor(self, d: Direction) -> GridPoint {
        let (da, db) = d.offset();
        GridPoint::new(self.a + da, self.b + db)
    }

    pub fn neighbors(self) -> impl Iterator<Item = (Direction, GridPoint)> {
        Direction::ALL.into_iter().map(move |d| (d, self.neighbor(d)))
    }

    /// Direction from `self` to an adjacent point.
    pub fn direction_to(self, other: GridPoint) -> Option<Direction> {
        Direction::ALL.into_iter().find(|&d| self.neighbor(d) == other)
    }

    /// Index of the portal line of `axis` through this point.
    pub fn portal_index(self, axis: Axis) -> i64 {
        match axis {
            Axis::X => self.b,
            Axis::Y => self.a,
            Axis::Z => self.a + self.b,
        }
    }

    /// Position along a portal line of `axis` (grows in `axis.positive()`).
    pub fn chain_index(self, axis: Axis) -> i64 {
        match axis {
            Axis::X => self.a,
            Axis::Y | Axis::Z => self.b,
        }
    }

    /// Rendering-plane coordinates.
    pub fn position(self) -> (f64, f64) {
        let (a, b) = (self.a as f64, self.b as f64);
        (a + 0.5 * b, b * 3f64.sqrt() / 2.0)
    }

    /// Twice the rendering x-coordinate; smaller is further west.
    pub fn west_key(self) -> i64 {
        2 * self.a + self.b
    }

    pub fn translate(self, da: i64, db: i64) -> GridPoint {
        GridPoint::new(self.a + da, self.b + db)
    }
}

impl fmt::Display for GridPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.a, self.b)
    }
}

/// Connected set of occupied grid nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AmoebotStructure {
    nodes: BTreeSet<GridPoint>,
}

impl AmoebotStructure {
    pub fn new(points: impl IntoIterator<Item = GridPoint>) -> Result<Self, GridError> {
        let mut nodes = BTreeSet::new();
        for p in points {
            if !nodes.insert(p) {
                return Err(GridError::Duplicate(p));
            }
        }
        if nodes.is_empty() {
            return Err(GridError::Empty);
        }
        let components = count_components(&nodes);
        if components != 1 {
            return Err(GridError::Disconnected { components });
        }
        Ok(AmoebotStructure { nodes })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, p: GridPoint) -> bool {
        self.nodes.contains(&p)
    }

    pub fn nodes(&self) -> &BTreeSet<GridPoint> {
        &self.nodes
    }

    pub fn iter(&self) -> impl Iterator<Item = GridPoint> + '_ {
        self.nodes.iter().copied()
    }

    /// Occupied neighbors of `p` in the fixed order E, NNE, NNW, W, SSW, SSE.
    pub fn neighbors(&self, p: GridPoint) -> Result<Vec<(Direction, GridPoint)>, GridError> {
        if !self.contains(p) {
            return Err(GridError::NotInStructure(p));
        }
        Ok(p.neighbors().filter(|(_, q)| self.contains(*q)).collect())
    }

    pub fn occupied_dirs(&self, p: GridPoint) -> DirSet {
        p.neighbors()
            .filter(|(_, q)| self.contains(*q))
            .fold(DirSet::EMPTY, |s, (d, _)| s.with(d))
    }

    pub fn edge_count(&self) -> usize {
        self.nodes
            .iter()
            .map(|&p| self.occupied_dirs(p).len())
            .sum::<usize>()
            / 2
    }

    pub fn translate(&self, da: i64, db: i64) -> AmoebotStructure {
        AmoebotStructure {
            nodes: self.nodes.iter().map(|p| p.translate(da, db)).collect(),
        }
    }

    /// Parse the `a b` per-line text format. `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self, GridError> {
        let mut points = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let mut coord = |name: &str| -> Result<i64, GridError> {
                let tok = it.next().ok_or_else(|| GridError::Parse {
                    line: i + 1,
                    msg: format!("missing coordinate {name}"),
                })?;
                tok.parse::<i64>().map_err(|e| GridError::Parse {
                    line: i + 1,
                    msg: format!("bad coordinate {tok:?}: {e}"),
                })
            };
            let a = coord("a")?;
            let b = coord("b")?;
            if let Some(extra) = it.next() {
                return Err(GridError::Parse {
                    line: i + 1,
                    msg: format!("unexpected token {extra:?}"),
                });
            }
            let p = GridPoint::new(a, b);
            if !seen.insert(p) {
                return Err(GridError::Duplicate(p));
            }
            points.push(p);
        }
        AmoebotStructure::new(points)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.nodes {
            out.push_str(&format!("{} {}\n", p.a, p.b));
        }
        out
    }

    /// Inclusive bounding box `(min_a, max_a, min_b, max_b)`.
    pub fn bounds(&self) -> (i64, i64, i64, i64) {
        bounds_of(&self.nodes)
    }
}

pub(crate) fn bounds_of(nodes: &BTreeSet<GridPoint>) -> (i64, i64, i64, i64) {
    let mut it = nodes.iter();
    let first = it.next().copied().unwrap_or(GridPoint::new(0, 0));
    it.fold(
        (first.a, first.a, first.b, first.b),
        |(a0, a1, b0, b1), p| (a0.min(p.a), a1.max(p.a), b0.min(p.b), b1.max(p.b)),
    )
}

fn count_components(nodes: &BTreeSet<GridPoint>) -> usize {
    let mut seen = BTreeSet::new();
    let mut components = 0;
    for &start in nodes {
        if seen.contains(&start) {
            continue;
        }
        components += 1;
        let mut queue = VecDeque::from([start]);
        seen.insert(start);
        while let Some(p) = queue.pop_front() {
            for (_, q) in p.neighbors() {
                if nodes.contains(&q) && seen.insert(q) {
                    queue.push_back(q);
                }
            }
        }
    }
    components
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HoleKind {
    Inner,
    Outer,
}

/// A connected component of the unoccupied grid nodes. The outer hole is
/// infinite; it only stores its cells adjacent to the structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hole {
    pub kind: HoleKind,
    pub cells: BTreeSet<GridPoint>,
    pub boundary: BTreeSet<GridPoint>,
}

/// Holes of an arbitrary node set (which need not be connected).
pub fn holes_of(nodes: &BTreeSet<GridPoint>) -> (Hole, Vec<Hole>) {
    let (a0, a1, b0, b1) = bounds_of(nodes);
    let inside = |p: GridPoint| p.a >= a0 - 1 && p.a <= a1 + 1 && p.b >= b0 - 1 && p.b <= b1 + 1;
    let on_frame = |p: GridPoint| p.a == a0 - 1 || p.a == a1 + 1 || p.b == b0 - 1 || p.b == b1 + 1;

    let mut seen: BTreeSet<GridPoint> = BTreeSet::new();
    let mut outer = Hole {
        kind: HoleKind::Outer,
        cells: BTreeSet::new(),
        boundary: BTreeSet::new(),
    };
    let mut inner = Vec::new();
    for a in a0 - 1..=a1 + 1 {
        for b in b0 - 1..=b1 + 1 {
            let start = GridPoint::new(a, b);
            if nodes.contains(&start) || seen.contains(&start) {
                continue;
            }
            let mut cells = BTreeSet::new();
            let mut unbounded = false;
            let mut queue = VecDeque::from([start]);
            seen.insert(start);
            while let Some(p) = queue.pop_front() {
                cells.insert(p);
                unbounded |= on_frame(p);
                for (_, q) in p.neighbors() {
                    if inside(q) && !nodes.contains(&q) && seen.insert(q) {
                        queue.push_back(q);
                    }
                }
            }
            let boundary: BTreeSet<GridPoint> = cells
                .iter()
                .flat_map(|c| c.neighbors().map(|(_, q)| q))
                .filter(|q| nodes.contains(q))
                .collect();
            if unbounded {
                outer
                    .cells
                    .extend(cells.into_iter().filter(|c| c.neighbors().any(|(_, q)| nodes.contains(&q))));
                outer.boundary.extend(boundary);
            } else {
                inner.push(Hole {
                    kind: HoleKind::Inner,
                    cells,
                    boundary,
                });
            }
        }
    }
    (outer, inner)
}

/// Outer hole and inner holes of the structure. Inner holes are ordered by
/// their smallest cell.
pub fn find_holes(structure: &AmoebotStructure) -> (Hole, Vec<Hole>) {
    holes_of(&structure.nodes)
}

/// One maximal run of unoccupied directions around a boundary node. A node
/// appears once per run, so a node at a pinch has several occurrences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BoundaryOccurrence {
    pub node: GridPoint,
    /// First empty direction of the run (counter-clockwise order).
    pub start: Direction,
    /// Number of empty directions in the run (1..=6).
    pub len: u8,
}

impl BoundaryOccurrence {
    /// Directions covered by the run.
    pub fn dirs(&self) -> impl Iterator<Item = Direction> + '_ {
        (0..self.len as i32).map(move |k| self.start.rotate(k))
    }

    /// Turning contribution in units of 60°. Walking a cycle sums to +6 on
    /// the outer boundary and −6 around an inner hole.
    pub fn turn(&self) -> i32 {
        if self.len == 6 {
            6
        } else {
            self.len as i32 - 2
        }
    }

    /// Direction of the edge leaving this occurrence along the cycle.
    pub fn exit(&self) -> Option<Direction> {
        (self.len < 6).then(|| self.start.rotate(self.len as i32))
    }

    /// Direction of the edge entering this occurrence along the cycle.
    pub fn entry(&self) -> Option<Direction> {
        (self.len < 6).then(|| self.start.rotate(-1))
    }

    /// Preferred empty direction for splitting at this node: the first of
    /// `prefs` that lies in the run.
    pub fn empty_dir_among(&self, prefs: &[Direction]) -> Option<Direction> {
        prefs.iter().copied().find(|d| self.dirs().any(|x| x == *d))
    }
}

/// Boundary occurrences of a node given its occupied directions.
pub fn occurrences_at(node: GridPoint, occupied: DirSet) -> Vec<BoundaryOccurrence> {
    if occupied.is_empty() {
        return vec![BoundaryOccurrence {
            node,
            start: Direction::E,
            len: 6,
        }];
    }
    let mut out = Vec::new();
    for d in Direction::ALL {
        if !occupied.contains(d) && occupied.contains(d.rotate(-1)) {
            let mut len = 0u8;
            while !occupied.contains(d.rotate(len as i32)) {
                len += 1;
            }
            out.push(BoundaryOccurrence { node, start: d, len });
        }
    }
    out
}

/// Successor of an occurrence along its boundary cycle.
pub fn next_occurrence(structure: &AmoebotStructure, occ: &BoundaryOccurrence) -> BoundaryOccurrence {
    match occ.exit() {
        None => *occ,
        Some(out) => {
            let v = occ.node.neighbor(out);
            let start = out.opposite().rotate(1);
            let occupied = structure.occupied_dirs(v);
            occurrences_at(v, occupied)
                .into_iter()
                .find(|o| o.start == start)
                .expect("wall following reached a non-boundary node")
        }
    }
}

/// A boundary cycle: the hole it walks around and its occurrences in order.
#[derive(Debug, Clone)]
pub struct BoundaryCycle {
    pub hole: Hole,
    pub occurrences: Vec<BoundaryOccurrence>,
}

impl BoundaryCycle {
    pub fn nodes(&self) -> Vec<GridPoint> {
        self.occurrences.iter().map(|o| o.node).collect()
    }

    pub fn turning(&self) -> i32 {
        self.occurrences.iter().map(|o| o.turn()).sum()
    }
}

/// Wall-following cycles, one per hole, each listing boundary nodes in
/// cyclic order (a node may repeat at a pinch). The outer cycle comes first.
pub fn boundary_cycles(structure: &AmoebotStructure) -> Vec<BoundaryCycle> {
    let (outer, inner) = find_holes(structure);
    let mut hole_of_cell: BTreeMap<GridPoint, usize> = BTreeMap::new();
    for (i, h) in std::iter::once(&outer).chain(inner.iter()).enumerate() {
        for &c in &h.cells {
            hole_of_cell.insert(c, i);
        }
    }
    let mut visited: BTreeSet<BoundaryOccurrence> = BTreeSet::new();
    let mut by_hole: BTreeMap<usize, Vec<BoundaryOccurrence>> = BTreeMap::new();
    for &p in structure.nodes() {
        for occ in occurrences_at(p, structure.occupied_dirs(p)) {
            if visited.contains(&occ) {
                continue;
            }
            let hole = hole_of_cell[&occ.node.neighbor(occ.start)];
            let mut cycle = Vec::new();
            let mut cur = occ;
            loop {
                visited.insert(cur);
                cycle.push(cur);
                cur = next_occurrence(structure, &cur);
                if cur == occ {
                    break;
                }
            }
            let previous = by_hole.insert(hole, cycle);
            debug_assert!(previous.is_none(), "hole with two boundary cycles");
        }
    }
    let holes: Vec<Hole> = std::iter::once(outer).chain(inner).collect();
    by_hole
        .into_iter()
        .map(|(i, occurrences)| BoundaryCycle {
            hole: holes[i].clone(),
            occurrences,
        })
        .collect()
}

/// Filled hexagon of the given radius around `center`.
pub fn hexagon(center: GridPoint, radius: i64) -> Vec<GridPoint> {
    let mut out = Vec::new();
    for a in -radius..=radius {
        for b in -radius..=radius {
            if (a + b).abs() <= radius {
                out.push(center.translate(a, b));
            }
        }
    }
    out
}

/// Filled parallelogram spanned by the E and NNE axes.
pub fn parallelogram(width: i64, height: i64) -> Vec<GridPoint> {
    let mut out = Vec::new();
    for b in 0..height {
        for a in 0..width {
            out.push(GridPoint::new(a, b));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn structure(points: Vec<GridPoint>) -> AmoebotStructure {
        AmoebotStructure::new(points).unwrap()
    }

    #[test]
    fn directions_are_consistent() {
        for d in Direction::ALL {
            assert_eq!(d.opposite().opposite(), d);
            let (a, b) = d.offset();
            let (oa, ob) = d.opposite().offset();
            assert_eq!((a + oa, b + ob), (0, 0));
        }
        let origin = GridPoint::new(0, 0);
        let n: BTreeSet<_> = origin.neighbors().map(|(_, q)| q).collect();
        assert_eq!(n.len(), 6);
    }

    #[test]
    fn side_dirs_partition_cross_directions() {
        for axis in Axis::ALL {
            let low = axis.side_dirs(Side::Low);
            let high = axis.side_dirs(Side::High);
            assert_eq!(low.intersect(high), DirSet::EMPTY);
            assert_eq!(low.union(high).union(axis.axis_dirs()), DirSet::FULL);
            let p = GridPoint::new(3, -2);
            for d in low.iter() {
                assert_eq!(p.neighbor(d).portal_index(axis), p.portal_index(axis) - 1);
            }
            for d in high.iter() {
                assert_eq!(p.neighbor(d).portal_index(axis), p.portal_index(axis) + 1);
            }
            for d in axis.axis_dirs().iter() {
                assert_eq!(p.neighbor(d).portal_index(axis), p.portal_index(axis));
            }
        }
        assert_eq!(Axis::Y.side_dirs(Side::Low), DirSet::of(&[Direction::NNW, Direction::W]));
        assert_eq!(Axis::Y.side_dirs(Side::High), DirSet::of(&[Direction::SSE, Direction::E]));
    }

    #[test]
    fn node_split_bundles_cover_side_and_axis() {
        for axis in Axis::ALL {
            for side in [Side::Low, Side::High] {
                let (pos, neg) = axis.node_split_bundles(side);
                assert!(pos.contains(axis.from_y_frame(Direction::NNE)));
                assert!(neg.contains(axis.from_y_frame(Direction::SSW)));
                assert_eq!(pos.union(neg), axis.side_dirs(side).union(axis.axis_dirs()));
            }
        }
    }

    #[test]
    fn neighbors_of_isolated_and_full_nodes() {
        let single = structure(vec![GridPoint::new(0, 0)]);
        assert!(single.neighbors(GridPoint::new(0, 0)).unwrap().is_empty());
        let hex = structure(hexagon(GridPoint::new(0, 0), 1));
        let n = hex.neighbors(GridPoint::new(0, 0)).unwrap();
        assert_eq!(n.len(), 6);
        assert_eq!(n.iter().map(|(d, _)| *d).collect::<Vec<_>>(), Direction::ALL.to_vec());
        assert_eq!(
            hex.neighbors(GridPoint::new(5, 5)),
            Err(GridError::NotInStructure(GridPoint::new(5, 5)))
        );
    }

    #[test]
    fn structure_validation() {
        assert_eq!(AmoebotStructure::new(vec![]), Err(GridError::Empty));
        assert!(matches!(
            AmoebotStructure::new(vec![GridPoint::new(0, 0), GridPoint::new(2, 0)]),
            Err(GridError::Disconnected { components: 2 })
        ));
        assert_eq!(
            AmoebotStructure::parse("0 0\n1 0\n0 0\n"),
            Err(GridError::Duplicate(GridPoint::new(0, 0)))
        );
        assert!(matches!(AmoebotStructure::parse("0 x"), Err(GridError::Parse { line: 1, .. })));
        let s = AmoebotStructure::parse("# comment\n0 0\n\n1 0\n").unwrap();
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn holes_of_simple_shapes() {
        let para = structure(parallelogram(5, 4));
        let (outer, inner) = find_holes(&para);
        assert!(inner.is_empty());
        assert_eq!(outer.kind, HoleKind::Outer);

        let mut ring = hexagon(GridPoint::new(0, 0), 2);
        ring.retain(|p| *p != GridPoint::new(0, 0));
        let ring = structure(ring);
        let (_, inner) = find_holes(&ring);
        assert_eq!(inner.len(), 1);
        assert_eq!(inner[0].cells.len(), 1);
        assert_eq!(inner[0].boundary.len(), 6);
    }

    #[test]
    fn boundary_cycle_of_hexagon_rim() {
        let hex = structure(hexagon(GridPoint::new(0, 0), 1));
        let cycles = boundary_cycles(&hex);
        assert_eq!(cycles.len(), 1);
        assert_eq!(cycles[0].hole.kind, HoleKind::Outer);
        assert_eq!(cycles[0].occurrences.len(), 6);
        assert_eq!(cycles[0].turning(), 6);
        let rim: BTreeSet<_> = cycles[0].nodes().into_iter().collect();
        assert!(!rim.contains(&GridPoint::new(0, 0)));
    }

    #[test]
    fn boundary_cycle_of_minimal_hole() {
        let mut ring = hexagon(GridPoint::new(0, 0), 2);
        ring.retain(|p| *p != GridPoint::new(0, 0));
        let cycles = boundary_cycles(&structure(ring));
        let inner: Vec<_> = cycles.iter().filter(|c| c.hole.kind == HoleKind::Inner).collect();
        assert_eq!(inner.len(), 1);
        assert_eq!(inner[0].occurrences.len(), 6);
        assert_eq!(inner[0].turning(), -6);
    }

    #[test]
    fn single_node_cycle() {
        let cycles = boundary_cycles(&structure(vec![GridPoint::new(4, 4)]));
        assert_eq!(cycles.len(), 1);
        assert_eq!(cycles[0].occurrences.len(), 1);
        assert_eq!(cycles[0].turning(), 6);
    }

    #[test]
    fn dir_runs() {
        assert_eq!(DirSet::FULL.runs(), 1);
        assert_eq!(DirSet::EMPTY.runs(), 0);
        assert_eq!(DirSet::of(&[Direction::E, Direction::W]).runs(), 2);
        assert_eq!(DirSet::of(&[Direction::SSE, Direction::E, Direction::NNE]).runs(), 1);
    }

    #[test]
    fn compass_keys_order_by_direction() {
        let p = GridPoint::new(2, -1);
        for c in Compass::ALL {
            let _ = c.key(p);
        }
        for d in Direction::ALL {
            let c = match d {
                Direction::E => Compass::E,
                Direction::NNE => Compass::NNE,
                Direction::NNW => Compass::NNW,
                Direction::W => Compass::W,
                Direction::SSW => Compass::SSW,
                Direction::SSE => Compass::SSE,
            };
            assert!(c.key(p.neighbor(d)) > c.key(p));
        }
        assert!(Compass::WNW.key(p.neighbor(Direction::W)) > Compass::WNW.key(p));
    }
}
