//! Leading Hessian eigenvector of 1/2 ||XY - C||^2 at a factorization of a
//! seeded target, checked against finite-difference power iteration, and the
//! cross-section margin along it.

use eoslab::dynamics::top_eigenvalue;
use eoslab::linalg::dot;
use eoslab::matfac::{cross_section_condition, leading_hessian_eigvec, pair_gradient, seeded_target, DenseMatrix};

fn main() -> eoslab::Result<()> {
    let n = 4;
    let x = seeded_target(n, 0.6, 11)?;
    let y = seeded_target(n, 0.5, 12)?.scale(0.8);
    let c = x.matmul(&y)?;
    let lead = leading_hessian_eigvec(&x, &y)?;

    let grad = |theta: &[f64]| {
        let xm = DenseMatrix::from_vec(n, n, theta[..n * n].to_vec()).unwrap();
        let ym = DenseMatrix::from_vec(n, n, theta[n * n..].to_vec()).unwrap();
        let (gx, gy) = pair_gradient(&xm, &ym, &c);
        let mut g = gx.into_vec();
        g.extend(gy.into_vec());
        g
    };
    let mut theta = x.as_slice().to_vec();
    theta.extend_from_slice(y.as_slice());
    let power = top_eigenvalue(&grad, &theta, 1e-10, 5000, 3)?;
    let align = dot(&power.vector, &lead.flatten()).abs();
    println!("closed-form eigenvalue {:.9}", lead.eigenvalue);
    println!("power iteration        {:.9}  |<v, Delta>| = {align:.9}", power.lambda);

    let cs = cross_section_condition(&x, &y, &c, &lead.dx, &lead.dy)?;
    println!("f2 {:.6}  f3 {:.6}  f4 {:.6}  margin 3 f3^2 - f2 f4 = {:.6}", cs.f2, cs.f3, cs.f4, cs.margin);
    Ok(())
}
