//! Regenerates `data/pstable_medians.txt`, the median of |X| for X drawn
//! from the p-stable law on a 0.01 grid of p.
//!
//! Usage: `cargo run --release --example median_table [draws] > data/pstable_medians.txt`

use coarse_sketch::lp::ln_abs_p_stable;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 0x5eed_d1a7;

fn main() {
    let draws: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("draws must be an integer"))
        .unwrap_or(10_000_000);
    println!("# median of |X|, X p-stable; seed {SEED} draws {draws}");
    println!("# p median");
    let mut logs = vec![0.0f64; draws];
    for step in 10..=200u32 {
        let p = f64::from(step) / 100.0;
        let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ u64::from(step));
        for slot in logs.iter_mut() {
            let theta = std::f64::consts::PI * (rng.random::<f64>() - 0.5);
            let t = 1.0 - rng.random::<f64>();
            *slot = ln_abs_p_stable(p, theta, t);
        }
        let mid = draws / 2;
        let (_, m, _) = logs.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
        println!("{p:.2} {:.6e}", m.exp());
    }
}
