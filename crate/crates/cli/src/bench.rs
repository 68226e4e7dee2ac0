//! Round-count sweep over structure sizes.

use std::fmt::Write as _;

use amoebot_convex::distalgo::run_distributed;
use amoebot_convex::generate::generate_random;
use rayon::prelude::*;
use serde::Serialize;

pub const PHASES: [&str; 3] = ["simple", "tunnel", "convex"];

/// Hole count used when none is given: one per 256 nodes (rounded), at
/// least one.
pub fn default_holes(n: usize) -> usize {
    ((n + 128) / 256).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub seed: u64,
    pub holes: usize,
    pub phase_rounds: [u64; 3],
    pub total: u64,
    pub ratio: f64,
    /// Set when the run aborted; rounds then cover the completed steps.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeSummary {
    /// Requested size; generated structures deviate slightly.
    pub n: usize,
    pub runs: usize,
    pub failures: usize,
    pub max_total: u64,
    pub mean_ratio: f64,
    pub max_ratio: f64,
    /// Mean rounds/log₂ n exceeds three times the median over all runs.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchTable {
    pub rows: Vec<BenchRow>,
    pub sizes: Vec<SizeSummary>,
    pub median_ratio: f64,
}

fn log2(n: usize) -> f64 {
    (n.max(2) as f64).log2()
}

fn run_one(n: usize, holes: usize, seed: u64) -> BenchRow {
    let s = generate_random(n, holes, seed);
    let (trace, error) = match run_distributed(&s, seed, s.len() as u64) {
        Ok(out) => (out.trace, None),
        Err((e, trace)) => (trace, Some(e.to_string())),
    };
    let mut phase_rounds = [0; 3];
    for p in &trace.phases {
        if let Some(i) = PHASES.iter().position(|&name| name == p.phase) {
            phase_rounds[i] += p.rounds;
        }
    }
    BenchRow {
        n: s.len(),
        seed,
        holes,
        phase_rounds,
        total: trace.total_rounds,
        ratio: trace.total_rounds as f64 / log2(s.len()),
        error,
    }
}

/// Run the distributed pipeline on `seeds` generated structures per size.
/// Rows come out in (size, seed) order regardless of scheduling.
pub fn bench(sizes: &[usize], seeds: u64, holes: Option<usize>) -> BenchTable {
    let jobs: Vec<(usize, u64)> = sizes.iter().flat_map(|&n| (0..seeds).map(move |s| (n, s))).collect();
    let rows: Vec<BenchRow> = jobs
        .par_iter()
        .map(|&(n, seed)| run_one(n, holes.unwrap_or_else(|| default_holes(n)), seed))
        .collect();

    let mut ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    ratios.sort_by(f64::total_cmp);
    let median_ratio = if ratios.is_empty() { 0.0 } else { ratios[ratios.len() / 2] };

    let sizes = sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let chunk = &rows[i * seeds as usize..(i + 1) * seeds as usize];
            let mean_ratio = chunk.iter().map(|r| r.ratio).sum::<f64>() / chunk.len().max(1) as f64;
            SizeSummary {
                n,
                runs: chunk.len(),
                failures: chunk.iter().filter(|r| r.error.is_some()).count(),
                max_total: chunk.iter().map(|r| r.total).max().unwrap_or(0),
                mean_ratio,
                max_ratio: chunk.iter().map(|r| r.ratio).fold(0.0, f64::max),
                flagged: mean_ratio > 3.0 * median_ratio,
            }
        })
        .collect();
    BenchTable { rows, sizes, median_ratio }
}

impl BenchTable {
    /// Tab-separated table, one line per size.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("n\truns\tfailures\tmax_total\tmean_rounds_per_log2n\tmax_rounds_per_log2n\tflag\n");
        for s in &self.sizes {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{:.3}\t{:.3}\t{}",
                s.n,
                s.runs,
                s.failures,
                s.max_total,
                s.mean_ratio,
                s.max_ratio,
                if s.flagged { "SLOW" } else { "ok" }
            );
        }
        out
    }

    /// Tab-separated table, one line per run.
    pub fn rows_tsv(&self) -> String {
        let mut out = String::from("n\tseed\tholes\tsimple\ttunnel\tconvex\ttotal\trounds_per_log2n\terror\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.3}\t{}",
                r.n,
                r.seed,
                r.holes,
                r.phase_rounds[0],
                r.phase_rounds[1],
                r.phase_rounds[2],
                r.total,
                r.ratio,
                r.error.as_deref().unwrap_or("-")
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoke_run_is_deterministic() {
        let a = bench(&[64], 3, None);
        let b = bench(&[64], 3, None);
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 3);
        assert!(a.rows.iter().all(|r| r.error.is_none() && r.total > 0));
        assert!(!a.sizes[0].flagged);
    }
}
