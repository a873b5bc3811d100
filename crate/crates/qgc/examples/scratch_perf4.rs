// Section-timed replica of proposed_allocate's work profile.
use qgc::bitalloc::*;
use qgc::straggler::sample_profiles;
use std::time::Instant;

fn main() {
    let profiles = sample_profiles(10, 0.1, 2.0, 1.1, 3).unwrap();
    let l = 1024usize;
    let z = 50u32;
    for _ in 0..200 { let _ = proposed_allocate(&profiles, l, z); }
    let reps = 3000u32;

    // full proposed
    let t = Instant::now();
    for _ in 0..reps { std::hint::black_box(proposed_allocate(&profiles, l, z)); }
    println!("proposed total:   {:7.1} us", t.elapsed().as_secs_f64()*1e6/reps as f64);

    // table alone
    let t = Instant::now();
    for _ in 0..reps {
        let table: Vec<Vec<f64>> = profiles.iter().map(|w| (0..=z+1).map(|r| utility(w.p, r, l)).collect()).collect();
        std::hint::black_box(table);
    }
    println!("table:            {:7.1} us", t.elapsed().as_secs_f64()*1e6/reps as f64);

    // local search from plausible candidates x10
    let mut order: Vec<usize> = (0..10).collect();
    order.sort_by(|&a,&b| profiles[a].p.partial_cmp(&profiles[b].p).unwrap());
    let mut cands: Vec<Vec<u32>> = Vec::new();
    for kappa in 1..=10usize {
        let eq = equal_allocate(&order[..kappa], z);
        let mut full = vec![0u32; 10];
        for (pos, &w) in order[..kappa].iter().enumerate() { full[w] = eq[pos]; }
        cands.push(full);
    }
    let t = Instant::now();
    for _ in 0..reps {
        for c in &cands { std::hint::black_box(local_search_refine(c, &profiles, l)); }
    }
    println!("refine x10 (incl 10 tables): {:7.1} us", t.elapsed().as_secs_f64()*1e6/reps as f64);
}
