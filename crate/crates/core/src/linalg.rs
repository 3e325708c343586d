//! Small vector helpers shared by the simulators.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Flips the sign so the largest-magnitude entry is positive.
pub fn normalize_sign(mut v: Vec<f64>) -> Vec<f64> {
    let mut idx = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[idx].abs() {
            idx = i;
        }
    }
    if v.get(idx).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

/// |<a, b>| / (||a|| ||b||).
pub fn abs_cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b).abs() / (norm2(a) * norm2(b))
}

/// Eigenvalues of the symmetric 2x2 matrix [[a, b], [b, c]], larger first.
pub fn sym2_eigenvalues(a: f64, b: f64, c: f64) -> (f64, f64) {
    let mean = 0.5 * (a + c);
    let radius = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    (mean + radius, mean - radius)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_fixed_by_largest_entry() {
        assert_eq!(normalize_sign(vec![0.1, -0.9, 0.2]), vec![-0.1, 0.9, -0.2]);
        assert_eq!(normalize_sign(vec![0.5, 0.1]), vec![0.5, 0.1]);
    }

    #[test]
    fn sym2_eigs() {
        let (l1, l2) = sym2_eigenvalues(0.0, -1.0, 0.0);
        assert_eq!((l1, l2), (1.0, -1.0));
        let (l1, l2) = sym2_eigenvalues(0.25, 1.0, 4.0);
        assert!((l1 - 4.25).abs() < 1e-14 && l2.abs() < 1e-14);
    }
}
