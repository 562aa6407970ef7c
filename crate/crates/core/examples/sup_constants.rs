//! Regenerates the reference Monte Carlo values of `c1 = E[e^{S1}]` and
//! `c2 = E[S1 e^{S1}]` frozen in the test suite.
//!
//! cargo run --release --example sup_constants -- [paths] [steps] [seed]

use bridge_stop::estimate_sup_constants;

fn main() {
    let mut args = std::env::args().skip(1);
    let paths: usize = args.next().map_or(1_000_000, |a| a.parse().expect("paths"));
    let steps: usize = args.next().map_or(10_000, |a| a.parse().expect("steps"));
    let seed: u64 = args.next().map_or(2019, |a| a.parse().expect("seed"));
    let start = std::time::Instant::now();
    let c = estimate_sup_constants(paths, steps, seed).expect("valid arguments");
    println!("paths = {paths}, steps = {steps}, seed = {seed}, {:?}", start.elapsed());
    println!("c1 = {:.17e} ± {:.3e}", c.c1.mean, c.c1.std_error);
    println!("c2 = {:.17e} ± {:.3e}", c.c2.mean, c.c2.std_error);
}
