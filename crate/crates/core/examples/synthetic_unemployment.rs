//! Writes the bundled synthetic unemployment-duration dataset to stdout.
//!
//! Spells are measured in two-week intervals (1..=28). Re-employment
//! hazards are lower for claimants of unemployment insurance and for older
//! workers, so the data contain real subgroups for the tree to find.
//!
//! ```text
//! cargo run --example synthetic_unemployment > crates/core/data/unemployment_synthetic.csv
//! ```

use rand::Rng;
use rand_distr::{Distribution, Normal};

const N: usize = 1200;
const K: u32 = 28;

fn main() {
    let mut rng = mobds::rng::stream(20_170_301, &[]);
    let logwage = Normal::new(5.7, 0.5).unwrap();
    println!("id,spell,censor1,age,ui,reprate,disrate,logwage,tenure");
    for id in 1..=N {
        let age: u32 = rng.random_range(20..=61);
        let ui = rng.random::<f64>() < 0.55;
        let reprate: f64 = rng.random_range(0.1..1.0);
        let disrate: f64 = rng.random_range(0.05..1.0);
        let lw: f64 = logwage.sample(&mut rng);
        let tenure: u32 = rng.random_range(0..=30);
        let shift = if ui { -0.9 } else { 0.0 } + if age > 45 { -0.6 } else { 0.0 } + 0.2 * (lw - 5.7);
        let dropout = rng.random_range(4..=K + 12);
        let mut spell = K;
        let mut event = false;
        for t in 1..=K {
            let eta = (0.12f64 / 0.88).ln() - 0.04 * (t as f64 - 1.0) + shift;
            if rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp()) {
                spell = t;
                event = true;
                break;
            }
            if t == dropout {
                spell = t;
                break;
            }
        }
        println!(
            "{id},{spell},{},{age},{},{:.3},{:.3},{:.4},{tenure}",
            event as u8,
            if ui { "yes" } else { "no" },
            reprate,
            disrate,
            lw
        );
    }
}
