//! Decompose and verify many random structures.
//!
//! Usage: stress <nodes> <holes> <seeds> [arm_bias] [max_hole_cells]

use amoebot_convex::decompose::decompose;
use amoebot_convex::generate::{generate_with, GenParams};
use amoebot_convex::oracle::verify_decomposition;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n: usize = args[0].parse().unwrap();
    let holes: usize = args[1].parse().unwrap();
    let seeds: u64 = args[2].parse().unwrap();
    let mut params = GenParams::default();
    if let Some(b) = args.get(3) {
        params.arm_bias = b.parse().unwrap();
    }
    if let Some(c) = args.get(4) {
        params.max_hole_cells = c.parse().unwrap();
    }
    let mut bad = 0;
    for seed in 0..seeds {
        let s = generate_with(n, holes, seed, params);
        match decompose(&s) {
            Err(e) => {
                bad += 1;
                println!("seed {seed}: error {e}");
            }
            Ok(d) => {
                let r = verify_decomposition(&s, &d);
                if !r.passed() {
                    bad += 1;
                    println!("seed {seed}: {:?}", r.failures());
                }
            }
        }
    }
    println!("{bad} failures of {seeds}");
}
