//! Remainders of the small-data expansion `u = εv + ε²w + O(ε³)`.
use westervelt::fields::Grid3D;
use westervelt::media::{Nonlinearity, SoundSpeed};
use westervelt::solvers::{expansion_remainders, DirichletProfile};

fn main() -> westervelt::Result<()> {
    let c = SoundSpeed::constant(1.0)?;
    let grid = Grid3D::from_spacing(0.125, 0.03, 3.48)?;
    let rows = expansion_remainders(&c, &Nonlinearity::Constant(0.5), &DirichletProfile::onset(1.0), grid, &[0.04, 0.02, 0.01, 0.005])?;
    println!("eps,first,second,min_factor");
    for r in &rows {
        println!("{},{:e},{:e},{}", r.eps, r.first, r.second, r.min_factor);
    }
    for w in rows.windows(2) {
        println!("slopes {:.3} {:.3}", (w[0].first / w[1].first).log2(), (w[0].second / w[1].second).log2());
    }
    Ok(())
}
