use cellpop::presets;
use cellpop::quad::QuadratureGrid;
use cellpop::spectral::SpectralSolution;
use cellpop::transport::{initial_profile, InitialProfile, Transport};

fn main() {
    let p = presets::affine_target();
    let (lo, hi) = p.model.window();
    println!("window [{lo}, {hi}]");
    let grid = QuadratureGrid::composite(lo, hi, 8, 32).unwrap();
    let sol = SpectralSolution::solve(&p.law, &p.model, grid, 512).unwrap();
    println!("lambda = {}, residuals = {:?}", sol.lambda, sol.residuals);
    let tr = Transport::from_spectral(&p.law, &p.model, &sol).unwrap();
    let mc = p.model.mean_cycle_length().unwrap();
    println!("mean cycle = {mc}, a_max = {}", sol.a_levels.last().unwrap());
    let (ga_lo, ga_hi) = p.model.global_support();
    println!("global support = [{ga_lo}, {ga_hi}]");
    let u0 = initial_profile(InitialProfile::SmoothBox, p.model.window(), ga_lo);
    let mut st = tr.init_state(u0).unwrap();
    let report = tr.evolve(&mut st, 15.0 * mc, &sol).unwrap();
    let n = report.rows.len();
    for idx in (0..n).step_by(n / 25) {
        let r = &report.rows[idx];
        println!(
            "t={:8.4}  births={:12.5e}  pop={:12.5e}  C/C0={:10.6}  d={:10.6}",
            r.t, r.births, r.population, r.conserved / report.c0, r.aeg_l1
        );
    }
    let (rate, se) = report.fitted_growth_rate();
    println!("fitted rate = {rate} +- {se}, lambda = {}", sol.lambda);
}
