use qgc::baselines::{build_scheme, EtaChoice, SchemeSpec};
use qgc::loss::{make_quadratic, LossModel};
use qgc::rng::substream;
use qgc::sim::*;
use qgc::straggler::sample_profiles;

fn main() {
    let (k, n, l) = (10usize, 20usize, 32usize);
    for tau in [1.1f64, 1.5, 2.0, 3.0] {
        let mut rng = substream(1729, &[6, 5]);
        let loss = LossModel::Quadratic(make_quadratic(n, l, 1.0, &mut rng).unwrap());
        let profiles = sample_profiles(k, 0.1, 2.0, tau, 777).unwrap();
        let scheme = build_scheme(&SchemeSpec::parse("proposed").unwrap(), &profiles, n, l, 2*k as u64 + 50, EtaChoice::One, 778).unwrap();
        let design = scheme.design.as_ref().unwrap();
        let warmup = uncoded_gd_trajectory(&loss, 1.0/loss.smoothness(), 200);
        let c_bound = calibrate_c(&loss, &warmup);
        let inv_sum: f64 = design.c.iter().map(|v| 1.0/v).sum();
        let factor = 1.0 + 1.0/inv_sum;
        let config = TrainConfig { iterations: 10_000, schedule: LrSchedule::InvLambdaT { lambda: 1.0 }, optimizer: Optimizer::Gd, trials: 50, master_seed: 779 };
        let series = run_experiment(&scheme, &profiles, &loss, &config).unwrap();
        let dist = series.mean_dist_sq.as_ref().unwrap();
        print!("tau_th={tau}: S={inv_sum:.2} C={c_bound:.2} ");
        for &t in &[10usize, 100, 1000, 10000] {
            let bound = 4.0*(n*n) as f64*c_bound*factor/t as f64;
            print!("T={t}: {:.2e}/{:.2e}={} ", dist[t], bound, if dist[t] <= bound {"OK"} else {"FAIL"});
        }
        println!();
    }
}
