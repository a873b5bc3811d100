// Counter-instrumented copy of the water-filling internals.
use qgc::straggler::sample_profiles;
use std::time::Instant;

static mut EVALS: u64 = 0;
static mut VISITS: u64 = 0;

struct SlopeCurve { coeff: f64, p4: f64, l: f64, peak_r: f64, slope_peak: f64, slope_budget: f64, slope_zero: f64 }
impl SlopeCurve {
    fn new(p: f64, l: usize, budget: f64) -> Self {
        let mut c = Self { coeff: 8.0*l as f64*std::f64::consts::LN_2*(1.0-p), p4: 4.0*p, l: l as f64, peak_r: 0.0, slope_peak: 0.0, slope_budget: 0.0, slope_zero: 0.0 };
        let (mut lo, mut hi) = (0.0f64, budget);
        for _ in 0..36 { let m1 = lo+(hi-lo)/3.0; let m2 = hi-(hi-lo)/3.0; if c.slope(m1) < c.slope(m2) { lo = m1 } else { hi = m2 } }
        c.peak_r = 0.5*(lo+hi); c.slope_peak = c.slope(c.peak_r); c.slope_budget = c.slope(budget); c.slope_zero = c.slope(0.0); c
    }
    #[inline] fn slope(&self, r: f64) -> f64 { unsafe { EVALS += 1; } let y = (r+1.0).exp2(); let q = y-1.0; let d = self.p4*q*q+self.l; self.coeff*y*q/(d*d) }
    #[inline] fn swd(&self, r: f64) -> (f64, f64) { unsafe { EVALS += 1; } let y = (r+1.0).exp2(); let q = y-1.0; let d = self.p4*q*q+self.l; (self.coeff*y*q/(d*d), std::f64::consts::LN_2*(1.0+y/q-4.0*self.p4*q*y/d)) }
    fn alloc_at(&self, lambda: f64, budget: f64, warm: &mut f64) -> f64 {
        unsafe { VISITS += 1; }
        if lambda <= self.slope_budget { return budget; }
        if lambda >= self.slope_peak { return 0.0; }
        let (mut lo, mut hi) = (self.peak_r, budget);
        let mut r = warm.clamp(lo, hi);
        for _ in 0..40 {
            let (s, dln) = self.swd(r);
            if s >= lambda { lo = r } else { hi = r }
            if (s-lambda).abs() <= 1e-9*lambda || hi-lo <= 1e-9 { break; }
            let next = r - (s-lambda)/(s*dln);
            r = if next.is_finite() && next > lo && next < hi { next } else { 0.5*(lo+hi) };
        }
        let out = 0.5*(lo+hi); *warm = out; out
    }
}

fn core(curves: &[SlopeCurve], budget: u32) -> Option<Vec<f64>> {
    let kappa = curves.len(); let b = budget as f64;
    if budget == 0 { return Some(vec![0.0; kappa]); }
    if kappa == 1 { return Some(vec![b]); }
    let lambda_lo = curves.iter().map(|c| c.slope_budget).fold(f64::INFINITY, f64::min);
    let lambda_hi = curves.iter().map(|c| c.slope_zero).fold(0.0, f64::max);
    let mut warm: Vec<f64> = curves.iter().map(|c| c.peak_r).collect();
    let mut r_min = vec![0.0f64; kappa]; let mut r_max = vec![b; kappa];
    let mut sum_hi = 0.0;
    for i in 0..kappa { r_min[i] = curves[i].alloc_at(lambda_hi, b, &mut warm[i]); sum_hi += r_min[i]; }
    if sum_hi > b { return None; }
    const FREEZE: f64 = 1e-4;
    let mut fresh = vec![f64::NAN; kappa];
    let (mut lo, mut hi) = (lambda_lo, lambda_hi);
    for _ in 0..60 {
        let mid = 0.5*(lo+hi); let mut sum = 0.0; fresh.fill(f64::NAN);
        for i in 0..kappa {
            if r_max[i]-r_min[i] <= FREEZE { sum += 0.5*(r_min[i]+r_max[i]); }
            else { let v = curves[i].alloc_at(mid, b, &mut warm[i]); fresh[i] = v; sum += v; }
        }
        if sum >= b { lo = mid; for i in 0..kappa { if !fresh[i].is_nan() { r_max[i] = fresh[i]; } } }
        else { hi = mid; for i in 0..kappa { if !fresh[i].is_nan() { r_min[i] = fresh[i]; } } }
    }
    Some((0..kappa).map(|i| if r_max[i]-r_min[i] <= FREEZE { 0.5*(r_min[i]+r_max[i]) } else { curves[i].alloc_at(lo, b, &mut warm[i]) }).collect())
}

fn main() {
    let profiles = sample_profiles(10, 0.1, 2.0, 1.1, 3).unwrap();
    let l = 1024usize; let z = 50u32;
    let curves: Vec<SlopeCurve> = { let mut o: Vec<usize> = (0..10).collect(); o.sort_by(|&a,&b| profiles[a].p.partial_cmp(&profiles[b].p).unwrap()); o.iter().map(|&i| SlopeCurve::new(profiles[i].p, l, z as f64)).collect() };
    unsafe { EVALS = 0; VISITS = 0; }
    let t = Instant::now();
    let reps = 2000;
    for _ in 0..reps { for kappa in 1..=10 { std::hint::black_box(core(&curves[..kappa], z)); } }
    let us = t.elapsed().as_secs_f64()*1e6/reps as f64;
    unsafe { println!("core all kappa: {us:.1} us   visits/call {}   evals/call {}", VISITS/reps/10, EVALS/reps/10); }

    // curve build cost
    let t = Instant::now();
    for _ in 0..reps { for i in 0..10 { std::hint::black_box(SlopeCurve::new(profiles[i].p, l, z as f64)); } }
    println!("curves x10: {:.1} us", t.elapsed().as_secs_f64()*1e6/reps as f64);
}
