//! Compare the distributed and centralized pipelines on random structures.
//!
//! Usage: equiv <nodes> <holes> <seeds>

use amoebot_convex::decompose::decompose;
use amoebot_convex::distalgo::run_distributed;
use amoebot_convex::generate::generate_random;

fn main() {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().unwrap()).collect();
    let (n, holes, seeds) = (args[0] as usize, args[1] as usize, args[2]);
    let mut bad = 0;
    let mut max_rounds = 0;
    for seed in 0..seeds {
        let s = generate_random(n, holes, seed);
        let central = decompose(&s).unwrap();
        match run_distributed(&s, seed, s.len() as u64) {
            Err((e, _)) => {
                bad += 1;
                println!("seed {seed}: {e}");
            }
            Ok(out) => {
                max_rounds = max_rounds.max(out.trace.total_rounds);
                let d = &out.decomposition;
                let p1 = d.phase1_regions == central.phase1_regions;
                let p2 = d.phase2_regions == central.phase2_regions;
                let p3 = d.shapes() == central.shapes();
                if !(p1 && p2 && p3) {
                    bad += 1;
                    println!("seed {seed}: phase1 {p1} phase2 {p2} final {p3}");
                }
            }
        }
    }
    println!("{bad} mismatches of {seeds}; max rounds {max_rounds}");
}
