use cellpop::presets;

fn main() {
    let (p, probe) = presets::dyadic_paradox();
    let (w_lo, w_hi) = p.model.window();
    println!("window [{w_lo}, {w_hi}], bound {}", probe.generation_bound);
    for i in 0..16 {
        let x = w_lo + (w_hi - w_lo) * i as f64 / 15.0;
        let lo = p.model.a_lo(x);
        let hi = p.model.a_hi(x);
        print!("x={x:.6} a_lo={lo:?} a_hi={hi:?} ");
        match (lo, hi) {
            (Ok(lo), Ok(hi)) => {
                let s_lo = p.law.daughter_size(x, lo);
                let s_hi = p.law.daughter_size(x, hi);
                println!("S_lo={s_lo:?} S_hi={s_hi:?}");
            }
            _ => println!(),
        }
    }
}
