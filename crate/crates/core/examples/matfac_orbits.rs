//! Symmetric and quasi-symmetric factorization of a seeded 8x8 target at
//! eta = 1.02 / sigma1^2: both settle on the same top-singular-value 2-cycle.

use eoslab::matfac::{
    beta_for_eta_factor, gd_quasisymmetric, gd_symmetric, random_perturbation, seeded_target, svd,
    MatfacOptions, DEFAULT_EPS_FRACTION,
};

fn main() -> eoslab::Result<()> {
    let x0 = seeded_target(8, 0.6, 2024)?;
    let sigma1 = svd(&x0)?.sigma[0];
    let beta = beta_for_eta_factor(sigma1, 1.02);
    let eps = DEFAULT_EPS_FRACTION * sigma1;
    let opts = MatfacOptions {
        steps: 20_000,
        theorem_mode: true,
        ..Default::default()
    };

    let sym = gd_symmetric(&x0, &random_perturbation(8, 8, eps, 1), beta, &opts)?;
    let (hi, lo) = sym.tail_pair("sigma1").unwrap();
    let [p_hi, p_lo] = sym.orbit.predicted_top;
    println!("sigma1 = {sigma1:.6}");
    println!("symmetric    cycle ({hi:.9}, {lo:.9})  ratio {:.6}", hi / lo);
    println!("predicted    cycle ({p_hi:.9}, {p_lo:.9})  ratio {:.6}", p_hi / p_lo);

    let dy = random_perturbation(8, 8, eps / 2f64.sqrt(), 2);
    let dz = random_perturbation(8, 8, eps / 2f64.sqrt(), 3);
    let quasi = gd_quasisymmetric(&x0, 0.8, &dy, &dz, beta, &opts)?;
    let (yh, yl) = quasi.tail_pair("sigma1_y").unwrap();
    let (zh, zl) = quasi.tail_pair("sigma1_z").unwrap();
    println!("quasi Y      cycle ({yh:.9}, {yl:.9})");
    println!("quasi Z      cycle ({zh:.9}, {zl:.9})");
    println!(
        "max distance to symmetric cycle {:.3e} (envelope {:.3e})",
        (yh - hi).abs().max((yl - lo).abs()),
        quasi.orbit_envelope()
    );
    Ok(())
}
