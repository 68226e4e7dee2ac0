//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Tolerances are the constants below.

use std::collections::{BTreeSet, VecDeque};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use amoebot_convex::circuits::PortGraph;
use amoebot_convex::decompose::{decompose, Decomposition};
use amoebot_convex::distalgo::{reassemble, run_distributed};
use amoebot_convex::generate::{generate_random, generate_with, GenParams};
use amoebot_convex::grid::{hexagon, Compass};
use amoebot_convex::oracle::{distance_identity, global_maxima_oracle, is_geodesically_convex, is_simple, verify_decomposition};
use amoebot_convex::portals::{portal_graph, PortalGraph};
use amoebot_convex::primitives::{
    boundary_test, global_maxima_boundary, leader_election, leaders_per_component, log2_ceil, pasc, root_and_prune,
    stream_value, PascInput,
};
use amoebot_convex::split::Region;
use amoebot_convex::{AmoebotStructure, Axis, GridPoint};
use amoebot_convex_cli::bench::bench;
use amoebot_convex_cli::emit::{json_string, svg_string};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criterion 1 wall-clock budget.
const COUNT_BUDGET: Duration = Duration::from_secs(60);
/// Criterion 3: allowed relative spread of the per-density constant.
const CONSTANT_SPREAD: f64 = 0.20;
/// Criterion 7: allowed growth of mean rounds/log₂ n from one size to the next.
const FLAT_SLACK: f64 = 0.05;
const SWEEP: [usize; 7] = [64, 128, 256, 512, 1024, 2048, 4096];
const SWEEP_SEEDS: u64 = 20;
const ELECTION_TRIALS: u64 = 1000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

struct Sample {
    structure: AmoebotStructure,
    dec: Decomposition,
}

/// 200 structures with n ≤ 2000 and 0 to 8 holes, mixing sizes and shapes.
fn corpus() -> (Vec<Sample>, Duration) {
    let sizes = [120, 400, 800, 1300, 1900];
    let start = Instant::now();
    let samples = (0..200u64)
        .map(|i| {
            let n = sizes[i as usize % sizes.len()];
            let holes = (i as usize / sizes.len()) % 9;
            let params = GenParams { arm_bias: [0.2, 0.5, 0.8][i as usize % 3], max_hole_cells: 1 + i as usize % 7 };
            let structure = generate_with(n, holes, 1000 + i, params);
            let dec = decompose(&structure).expect("centralized pipeline succeeds");
            Sample { structure, dec }
        })
        .collect();
    (samples, start.elapsed())
}

fn counting_bounds(corpus: &[Sample], elapsed: Duration) -> Outcome {
    let mut violations = 0;
    let mut max_n = 0;
    for s in corpus {
        let h = s.dec.holes;
        max_n = max_n.max(s.structure.len());
        if s.dec.phase1_regions.len() > 3 * h + 1 || s.dec.gates.len() > 6 * h {
            violations += 1;
        }
    }
    let pass = violations == 0 && max_n <= 2000 && elapsed < COUNT_BUDGET;
    outcome(pass, format!("{} structures, max n {max_n}, {violations} violations, {:.1}s", corpus.len(), elapsed.as_secs_f64()))
}

fn simple_and_convex(corpus: &[Sample]) -> Outcome {
    let mut regions = 0;
    let mut witnesses = Vec::new();
    for s in corpus {
        for r in &s.dec.regions {
            regions += 1;
            let set = r.node_set();
            assert!(set.len() <= amoebot_convex::oracle::EXHAUSTIVE_LIMIT);
            if !is_simple(&set) {
                witnesses.push(format!("region {} not simple", r.id));
            }
            if let (false, w) = is_geodesically_convex(&s.structure, &set) {
                witnesses.push(format!("region {} witness {w:?}", r.id));
            }
        }
    }
    outcome(witnesses.is_empty(), format!("{regions} regions, {} witnesses {:?}", witnesses.len(), witnesses.first()))
}

/// The tightest `C` with `regions ≤ C·|H| + 1` over a set of structures.
fn bound_constant<'a>(samples: impl Iterator<Item = &'a Sample>) -> f64 {
    samples
        .map(|s| (s.dec.regions.len() as f64 - 1.0) / s.dec.holes as f64)
        .fold(0.0, f64::max)
}

fn region_linearity(corpus: &[Sample]) -> Outcome {
    let with_holes: Vec<&Sample> = corpus.iter().filter(|s| s.dec.holes > 0).collect();
    let c = bound_constant(with_holes.iter().copied());
    let density = |s: &Sample| s.dec.holes as f64 / s.structure.len() as f64;
    let bands = [(0.0, 0.004), (0.004, 0.012), (0.012, f64::INFINITY)];
    let mut per_band = Vec::new();
    let mut pass = corpus.iter().all(|s| s.dec.regions.len() as f64 <= c * s.dec.holes as f64 + 1.0);
    for (lo, hi) in bands {
        let band: Vec<&Sample> = with_holes.iter().copied().filter(|s| (lo..hi).contains(&density(s))).collect();
        let cb = bound_constant(band.iter().copied());
        pass &= !band.is_empty() && (cb / c - 1.0).abs() <= CONSTANT_SPREAD;
        let mean = band.iter().map(|s| (s.dec.regions.len() as f64 - 1.0) / s.dec.holes as f64).sum::<f64>() / band.len().max(1) as f64;
        per_band.push(format!("[{lo}, {hi}): C {cb:.1}, mean {mean:.1}, {} structures", band.len()));
    }
    outcome(pass, format!("C = {c:.2}; per |H|/n band {}", per_band.join("; ")))
}

fn distance_identity_check() -> Outcome {
    let mut bad = Vec::new();
    let mut pairs = 0;
    for seed in 0..50u64 {
        let n = 20 + (seed as usize * 37) % 170;
        let s = generate_with(n, 0, 500 + seed, GenParams { arm_bias: (seed % 10) as f64 / 10.0, max_hole_cells: 1 });
        assert!(s.len() <= 200);
        pairs += s.len() * s.len();
        if let Err(p) = distance_identity(&Region::from_structure(&s)) {
            bad.push(p);
        }
    }
    outcome(bad.is_empty(), format!("50 structures, {pairs} ordered pairs, {} failures {:?}", bad.len(), bad.first()))
}

fn annulus(radius: i64, hole: i64) -> AmoebotStructure {
    let inner: BTreeSet<GridPoint> = hexagon(GridPoint::new(0, 0), hole).into_iter().collect();
    AmoebotStructure::new(hexagon(GridPoint::new(0, 0), radius).into_iter().filter(|p| !inner.contains(p))).unwrap()
}

fn portal_trees(corpus: &[Sample]) -> Outcome {
    let mut simple = 0;
    let mut not_tree = 0;
    for s in corpus {
        let all = s.dec.phase1_regions.iter().chain(&s.dec.phase2_regions).chain(&s.dec.regions);
        for r in all {
            simple += 1;
            if !Axis::ALL.iter().all(|&a| portal_graph(r, a).is_tree()) {
                not_tree += 1;
            }
        }
    }
    let mut annuli: Vec<AmoebotStructure> = corpus.iter().filter(|s| s.dec.holes == 1).map(|s| s.structure.clone()).collect();
    annuli.extend([annulus(1, 0), annulus(3, 0), annulus(4, 1), annulus(6, 2)]);
    let acyclic = annuli.iter().filter(|s| !portal_graph(&Region::from_structure(s), Axis::Y).has_cycle()).count();
    outcome(
        not_tree == 0 && acyclic == 0,
        format!("{simple} simple regions, {not_tree} non-tree; {} annuli, {acyclic} without y-cycle", annuli.len()),
    )
}

fn equivalence() -> Outcome {
    let mut mismatches = 0;
    let mut max_rounds = 0;
    for i in 0..100u64 {
        let n = [60, 250, 600, 1200][i as usize % 4];
        let s = generate_random(n, (i as usize / 4) % 9, 7000 + i);
        let central = decompose(&s).unwrap();
        match run_distributed(&s, i, s.len() as u64) {
            Ok(out) => {
                max_rounds = max_rounds.max(out.trace.total_rounds);
                let mut back: Vec<_> = reassemble(&out.knowledge).iter().map(Region::shape).collect();
                back.sort();
                if back != central.shapes() {
                    mismatches += 1;
                }
            }
            Err(_) => mismatches += 1,
        }
    }
    outcome(mismatches == 0, format!("100 pairs, {mismatches} mismatches, max {max_rounds} rounds"))
}

fn round_scaling() -> Outcome {
    let table = bench(&SWEEP, SWEEP_SEEDS, None);
    let failures: usize = table.sizes.iter().map(|s| s.failures).sum();
    let means: Vec<f64> = table.sizes.iter().map(|s| s.mean_ratio).collect();
    let flat = means.windows(2).all(|w| w[1] <= w[0] * (1.0 + FLAT_SLACK));
    // Fit C on the smaller half of the sweep and require it to bound the rest.
    let split = SWEEP.len() / 2;
    let c = table.sizes[..=split].iter().map(|s| s.max_ratio).fold(0.0, f64::max);
    let bounded = table.sizes.iter().all(|s| s.max_ratio <= c);
    let means_txt: Vec<String> = table.sizes.iter().map(|s| format!("{}:{:.1}", s.n, s.mean_ratio)).collect();
    outcome(
        failures == 0 && flat && bounded && !table.sizes.iter().any(|s| s.flagged),
        format!(
            "C = {c:.1} fitted on n ≤ {}, max total {} at n = {}; mean rounds/log2 n {}",
            SWEEP[split],
            table.sizes.last().unwrap().max_total,
            SWEEP[SWEEP.len() - 1],
            means_txt.join(" ")
        ),
    )
}

fn bfs(g: &PortGraph, root: usize) -> (Vec<usize>, Vec<Option<usize>>) {
    let mut depth = vec![usize::MAX; g.len()];
    let mut up = vec![None; g.len()];
    depth[root] = 0;
    let mut queue = VecDeque::from([root]);
    while let Some(a) = queue.pop_front() {
        for p in g.linked_ports(a) {
            let (b, q) = g.link(a, p).unwrap();
            if depth[b] == usize::MAX {
                depth[b] = depth[a] + 1;
                up[b] = Some(q);
                queue.push_back(b);
            }
        }
    }
    (depth, up)
}

/// One agent per portal, linked along portal adjacency.
fn port_graph_of(pg: &PortalGraph) -> PortGraph {
    let mut g = PortGraph::new();
    for id in 0..pg.len() {
        g.add_agent(pg.degree(id).max(1), id as u64 + 1);
    }
    let mut used = vec![0; pg.len()];
    for (a, b) in pg.edges() {
        g.connect(a, used[a], b, used[b]);
        used[a] += 1;
        used[b] += 1;
    }
    g
}

fn random_portal_tree(i: u64) -> (PortalGraph, PortGraph) {
    let s = generate_random(30 + (i as usize * 53) % 400, 0, 9000 + i);
    let pg = portal_graph(&Region::from_structure(&s), Axis::ALL[i as usize % 3]);
    let g = port_graph_of(&pg);
    (pg, g)
}

fn primitives() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    let mut pasc_bad = 0;
    let mut prune_bad = 0;
    for i in 0..100u64 {
        let (pg, g) = random_portal_tree(i);
        let mut rng = ChaCha8Rng::seed_from_u64(i);
        let root = rng.gen_range(0..g.len());
        let (_, up) = bfs(&g, root);
        let expect = pg.distances_from(&[root]);
        let r = pasc(&g, &PascInput::distances(up.clone()), i).unwrap();
        if (0..g.len()).any(|a| Some(stream_value(&r.output.after[a][0]) as usize) != expect[a]) {
            pasc_bad += 1;
        }

        let q: Vec<bool> = (0..g.len()).map(|a| a == root || rng.gen_bool(0.15)).collect();
        let roots: Vec<bool> = (0..g.len()).map(|a| a == root).collect();
        let kept = root_and_prune(&g, &q, &roots, i).unwrap().output.survivor;
        let mut union = BTreeSet::from([root]);
        for a in (0..g.len()).filter(|&a| q[a]) {
            let mut x = a;
            while union.insert(x) {
                x = g.link(x, up[x].unwrap()).unwrap().0;
            }
        }
        if (0..g.len()).any(|a| kept[a] != union.contains(&a)) {
            prune_bad += 1;
        }
    }
    pass &= pasc_bad == 0 && prune_bad == 0;
    notes.push(format!("pasc {pasc_bad}/100 wrong, root-and-prune {prune_bad}/100 wrong"));

    let mut maxima_bad = 0;
    for i in 0..100u64 {
        let s = generate_random(40 + (i as usize * 31) % 300, 1 + i as usize % 4, 3000 + i);
        let n_hat = s.len() as u64;
        let test = boundary_test(&s, n_hat, i).unwrap().output;
        let mut rng = ChaCha8Rng::seed_from_u64(i);
        let members: Vec<bool> = (0..test.occurrences.len()).map(|_| rng.gen_bool(0.3)).collect();
        let mut ok = true;
        for dir in Compass::ALL {
            let carrier = test.carrier(dir);
            let flags = global_maxima_boundary(&carrier, &members, n_hat, i).unwrap().output.flags;
            for comp in carrier.chains.components() {
                let set: BTreeSet<GridPoint> = comp.iter().filter(|&&a| members[a]).map(|&a| test.occurrences[a].node).collect();
                let got: BTreeSet<GridPoint> = comp.iter().filter(|&&a| flags[a]).map(|&a| test.occurrences[a].node).collect();
                ok &= got == global_maxima_oracle(&set, dir);
            }
        }
        maxima_bad += usize::from(!ok);
    }
    pass &= maxima_bad == 0;
    notes.push(format!("boundary maxima {maxima_bad}/100 wrong"));

    let mut election = Vec::new();
    let mut prev_ratio = f64::INFINITY;
    for &n in &SWEEP {
        let g = PortGraph::path(n, 0);
        let all = vec![true; n];
        let mut failures = 0;
        let mut rounds = 0;
        for seed in 0..ELECTION_TRIALS {
            let r = leader_election(&g, &all, n as u64, seed).unwrap();
            rounds = rounds.max(r.rounds);
            failures += u64::from(leaders_per_component(&g, &r.output) != [1]);
        }
        let ratio = rounds as f64 / f64::from(log2_ceil(n as u64));
        pass &= (failures as f64) <= ELECTION_TRIALS as f64 / n as f64 && ratio <= prev_ratio * (1.0 + FLAT_SLACK);
        prev_ratio = ratio;
        election.push(format!("{n}:{failures}/{ELECTION_TRIALS},{rounds}r"));
    }
    notes.push(format!("election failures {}", election.join(" ")));
    outcome(pass, notes.join("; "))
}

fn artifacts(s: &AmoebotStructure, seed: u64) -> (String, String, String) {
    let out = run_distributed(s, seed, s.len() as u64).unwrap();
    let report = verify_decomposition(s, &out.decomposition);
    let json = json_string(&out.decomposition, Some(&report), Some(&out.trace), true);
    let svg = svg_string(s, &out.decomposition);
    let trace = serde_json::to_string(&out.trace).unwrap();
    (json, svg, trace)
}

fn determinism() -> Outcome {
    let mut differ = 0;
    for i in 0..6u64 {
        let s = generate_random(150 + 200 * i as usize, i as usize, 40 + i);
        differ += usize::from(artifacts(&s, i) != artifacts(&s, i));
    }
    outcome(differ == 0, format!("6 structures, {differ} differing artifact sets"))
}

fn main() -> ExitCode {
    let (corpus, elapsed) = corpus();
    let results = [
        ("counting bounds", counting_bounds(&corpus, elapsed)),
        ("simple and convex regions", simple_and_convex(&corpus)),
        ("region-count linearity", region_linearity(&corpus)),
        ("distance identity", distance_identity_check()),
        ("portal trees", portal_trees(&corpus)),
        ("distributed equals centralized", equivalence()),
        ("round scaling", round_scaling()),
        ("primitive correctness", primitives()),
        ("determinism", determinism()),
    ];
    let mut all = true;
    for (i, (name, o)) in results.iter().enumerate() {
        println!("criterion {} {} {name}: {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        all &= o.pass;
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
