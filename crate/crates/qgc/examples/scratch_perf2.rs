use qgc::bitalloc::*;
use qgc::straggler::sample_profiles;
use std::time::Instant;

fn main() {
    let profiles = sample_profiles(10, 0.1, 2.0, 1.1, 3).unwrap();
    let l = 1024usize;
    let z = 50u32;
    for _ in 0..100 { let _ = proposed_allocate(&profiles, l, z); }

    // lagrangian over each kappa prefix (public API builds curves per call)
    let mut order: Vec<usize> = (0..10).collect();
    order.sort_by(|&a, &b| profiles[a].p.partial_cmp(&profiles[b].p).unwrap());
    let t = Instant::now();
    let reps = 2000;
    for _ in 0..reps {
        for kappa in 1..=10usize {
            std::hint::black_box(lagrangian_allocate(&order[..kappa], &profiles, l, z));
        }
    }
    println!("lag all kappa (incl curve build): {:8.1} us", t.elapsed().as_secs_f64() * 1e6 / reps as f64);

    let t = Instant::now();
    for _ in 0..reps {
        for kappa in 1..=10usize {
            std::hint::black_box(equal_allocate(&order[..kappa], z));
        }
    }
    println!("equal all kappa: {:8.1} us", t.elapsed().as_secs_f64() * 1e6 / reps as f64);

    let t = Instant::now();
    let r = vec![5u32; 10];
    for _ in 0..reps {
        for _ in 1..=10usize {
            std::hint::black_box(local_search_refine(&r, &profiles, l));
        }
    }
    println!("refine x10 (incl table build): {:8.1} us", t.elapsed().as_secs_f64() * 1e6 / reps as f64);
}
