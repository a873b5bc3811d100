use qgc::bitalloc::*;
use qgc::straggler::sample_profiles;
use std::time::Instant;

fn main() {
    let l = 1024usize;
    // criterion-2 protocol: 100 seeded instances, interleaved measurement
    for round in 0..5 {
        let mut dp_time = 0.0; let mut prop_time = 0.0;
        let mut worst: f64 = 1.0;
        for seed in 0..100u64 {
            let profiles = sample_profiles(10, 0.1, 2.0, 1.1, seed * 31 + round).unwrap();
            let t0 = Instant::now();
            let dp = dp_allocate(&profiles, l, 50);
            dp_time += t0.elapsed().as_secs_f64();
            let t1 = Instant::now();
            let prop = proposed_allocate(&profiles, l, 50);
            prop_time += t1.elapsed().as_secs_f64();
            worst = worst.min(prop.objective / dp.objective);
        }
        println!("round {round}: dp {:7.2} ms, proposed {:7.2} ms, ratio worst {worst:.6}", dp_time*1e3, prop_time*1e3);
    }
}
