//! Seeded random structures: accretion growth followed by hole carving.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{holes_of, AmoebotStructure, Direction, GridPoint};

/// Shape parameters for [`generate_with`].
#[derive(Debug, Clone, Copy)]
pub struct GenParams {
    /// Probability of growing from one of the most recently added nodes
    /// instead of a uniformly chosen one. Higher values give longer arms.
    pub arm_bias: f64,
    /// Maximum number of cells per carved hole.
    pub max_hole_cells: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams { arm_bias: 0.5, max_hole_cells: 6 }
    }
}

/// A connected structure of about `n` nodes with exactly `holes` inner holes.
/// When `n` is too small to fit the holes the structure ends up larger.
pub fn generate_random(n: usize, holes: usize, seed: u64) -> AmoebotStructure {
    generate_with(n, holes, seed, GenParams::default())
}

pub fn generate_with(n: usize, holes: usize, seed: u64, params: GenParams) -> AmoebotStructure {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n.max(1);
    let mut attempt = 0u64;
    loop {
        // Each failed attempt grows a slightly larger structure, so tiny
        // sizes with many holes still terminate.
        let size = n + holes * 2 + attempt as usize * (holes + 1);
        let mut nodes = grow(size, &mut rng, params.arm_bias);
        if carve(&mut nodes, holes, params.max_hole_cells, &mut rng) {
            return AmoebotStructure::new(nodes).expect("generator keeps the structure connected");
        }
        attempt += 1;
        // Not enough interior room for the holes; retry with a derived seed.
        rng = ChaCha8Rng::seed_from_u64(seed ^ (attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
    }
}

fn grow(n: usize, rng: &mut ChaCha8Rng, arm_bias: f64) -> BTreeSet<GridPoint> {
    let mut nodes = BTreeSet::from([GridPoint::new(0, 0)]);
    let mut order = vec![GridPoint::new(0, 0)];
    // Accretion can enclose empty cells. They are filled as growth goes so
    // that the node count includes them and only carved holes remain.
    let refill = (n / 32).max(1);
    let mut since_fill = 0;
    while nodes.len() < n {
        if since_fill >= refill {
            since_fill = 0;
            fill_cavities(&mut nodes, &mut order);
            continue;
        }
        let base = if rng.gen_bool(arm_bias) {
            let k = order.len().min(8);
            order[order.len() - 1 - rng.gen_range(0..k)]
        } else {
            order[rng.gen_range(0..order.len())]
        };
        let d = Direction::ALL[rng.gen_range(0..6)];
        let p = base.neighbor(d);
        if nodes.insert(p) {
            order.push(p);
            since_fill += 1;
        }
    }
    fill_cavities(&mut nodes, &mut order);
    nodes
}

fn fill_cavities(nodes: &mut BTreeSet<GridPoint>, order: &mut Vec<GridPoint>) {
    for hole in holes_of(nodes).1 {
        for c in hole.cells {
            if nodes.insert(c) {
                order.push(c);
            }
        }
    }
}

fn connected(nodes: &BTreeSet<GridPoint>) -> bool {
    AmoebotStructure::new(nodes.iter().copied()).is_ok()
}

fn carve(nodes: &mut BTreeSet<GridPoint>, holes: usize, max_cells: usize, rng: &mut ChaCha8Rng) -> bool {
    let mut made = 0;
    let mut failures = 0;
    while made < holes {
        if failures > 200 {
            return false;
        }
        let interior: Vec<GridPoint> = nodes
            .iter()
            .copied()
            .filter(|p| p.neighbors().all(|(_, q)| nodes.contains(&q)))
            .collect();
        let Some(&seed_cell) = interior.choose(rng) else {
            return false;
        };
        let mut trial = nodes.clone();
        trial.remove(&seed_cell);
        if holes_of(&trial).1.len() != made + 1 {
            failures += 1;
            continue;
        }
        let mut cells = vec![seed_cell];
        let target = rng.gen_range(1..=max_cells.max(1));
        let mut tries = 0;
        while cells.len() < target && tries < 20 {
            tries += 1;
            let c = cells[rng.gen_range(0..cells.len())];
            let p = c.neighbor(Direction::ALL[rng.gen_range(0..6)]);
            if !trial.contains(&p) || !p.neighbors().all(|(_, q)| trial.contains(&q) || cells.contains(&q)) {
                continue;
            }
            let mut next = trial.clone();
            next.remove(&p);
            if holes_of(&next).1.len() == made + 1 && connected(&next) {
                trial = next;
                cells.push(p);
            }
        }
        if !connected(&trial) {
            failures += 1;
            continue;
        }
        *nodes = trial;
        made += 1;
    }
    true
}
