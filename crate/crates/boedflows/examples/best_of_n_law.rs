//! The success probability of best-of-n extraction follows
//! 1 − (1 − p)^n when each candidate independently lands in an
//! ε-good set with probability p. This example checks both that law and
//! the exact expected-maximum formula against simulation.
//!
//! Run with: cargo run --release --example best_of_n_law

use boedflows::extract::{bon_success_probability, expected_best_of_n};
use boedflows::stream::{substream, Purpose};
use rand::Rng;

fn main() {
    // --- success-probability law -----------------------------------------
    println!("success probability of n independent candidates, per-draw p:");
    println!("{:>6} {:>4} {:>12} {:>12}", "p", "n", "closed form", "simulated");
    let reps = 100_000;
    for &(p, n) in &[(0.05, 10u32), (0.1, 20), (0.3, 5), (0.5, 3)] {
        let law = bon_success_probability(p, n);
        let mut rng = substream(13, 0, n as u64, Purpose::Extract);
        let mut hits = 0usize;
        for _ in 0..reps {
            if (0..n).any(|_| rng.gen::<f64>() < p) {
                hits += 1;
            }
        }
        println!("{p:>6.2} {n:>4} {law:>12.4} {:>12.4}", hits as f64 / reps as f64);
    }

    // --- expected best score ----------------------------------------------
    // A finite pool of candidate scores; draw n uniformly with replacement
    // and keep the best.
    let pool: Vec<f64> = (0..40).map(|k| (k as f64 * 0.37).sin().abs() * 2.0).collect();
    println!("\nexpected best score from a 40-candidate pool:");
    println!("{:>4} {:>12} {:>12}", "n", "closed form", "simulated");
    for &n in &[1u32, 3, 10, 30] {
        let exact = expected_best_of_n(&pool, n);
        let mut rng = substream(13, 1, n as u64, Purpose::Extract);
        let mut acc = 0.0;
        for _ in 0..reps {
            let best = (0..n)
                .map(|_| pool[rng.gen_range(0..pool.len())])
                .fold(f64::NEG_INFINITY, f64::max);
            acc += best;
        }
        println!("{n:>4} {exact:>12.4} {:>12.4}", acc / reps as f64);
    }
}
