//! Small dense least-squares fits (Householder QR).

/// Result of a linear least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub coef: Vec<f64>,
    /// Residuals `y − Xβ` (unweighted).
    pub residuals: Vec<f64>,
    /// `sqrt(Σ wᵢ rᵢ² / Σ wᵢ)`.
    pub rms: f64,
}

/// Weighted least squares `min Σ wᵢ (yᵢ − xᵢ·β)²`; `None` if the design is
/// rank deficient or there are fewer rows than columns.
pub fn weighted_least_squares(x: &[Vec<f64>], y: &[f64], w: Option<&[f64]>) -> Option<LinearFit> {
    let n = y.len();
    let m = x.first()?.len();
    if n < m || x.len() != n || w.is_some_and(|w| w.len() != n) {
        return None;
    }
    let sw: Vec<f64> = (0..n).map(|i| w.map_or(1.0, |w| w[i]).max(0.0).sqrt()).collect();
    // column-major copy, scaled rows
    let mut a: Vec<Vec<f64>> = (0..m).map(|j| (0..n).map(|i| x[i][j] * sw[i]).collect()).collect();
    let mut b: Vec<f64> = (0..n).map(|i| y[i] * sw[i]).collect();
    let scale: Vec<f64> = a.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    if scale.iter().any(|&s| s == 0.0 || !s.is_finite()) {
        return None;
    }
    for (c, s) in a.iter_mut().zip(&scale) {
        c.iter_mut().for_each(|v| *v /= s);
    }
    for j in 0..m {
        let norm = a[j][j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return None;
        }
        let alpha = if a[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[j][j..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for col in a.iter_mut().skip(j) {
            let d: f64 = v.iter().zip(&col[j..]).map(|(p, q)| p * q).sum::<f64>() * 2.0 / vnorm2;
            col[j..].iter_mut().zip(&v).for_each(|(c, vi)| *c -= d * vi);
        }
        let d: f64 = v.iter().zip(&b[j..]).map(|(p, q)| p * q).sum::<f64>() * 2.0 / vnorm2;
        b[j..].iter_mut().zip(&v).for_each(|(c, vi)| *c -= d * vi);
    }
    let mut coef = vec![0.0; m];
    for j in (0..m).rev() {
        let s: f64 = (j + 1..m).map(|k| a[k][j] * coef[k]).sum();
        coef[j] = (b[j] - s) / a[j][j];
    }
    for (c, s) in coef.iter_mut().zip(&scale) {
        *c /= s;
    }
    let residuals: Vec<f64> = (0..n)
        .map(|i| y[i] - x[i].iter().zip(&coef).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    let wsum: f64 = (0..n).map(|i| sw[i] * sw[i]).sum();
    let rms = ((0..n).map(|i| sw[i] * sw[i] * residuals[i] * residuals[i]).sum::<f64>() / wsum).sqrt();
    Some(LinearFit {
        coef,
        residuals,
        rms,
    })
}
