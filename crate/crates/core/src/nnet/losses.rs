use super::NnError;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64, NnError> {
    if a.len() != b.len() {
        return Err(NnError::Shape { op: "euclidean_distance", left: (1, a.len()), right: (1, b.len()) });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletOutput {
    pub loss: f64,
    pub d_ap: f64,
    pub d_an: f64,
    pub grad_anchor: Vec<f64>,
    pub grad_positive: Vec<f64>,
    pub grad_negative: Vec<f64>,
}

impl TripletOutput {
    pub fn active(&self) -> bool {
        self.loss > 0.0
    }
}

/// Hinge `max(0, d(a,p) - d(a,n) + margin)` with its gradients. A zero
/// distance contributes a zero subgradient.
pub fn triplet_loss(a: &[f64], p: &[f64], n: &[f64], margin: f64) -> Result<TripletOutput, NnError> {
    if a.is_empty() {
        return Err(NnError::Shape { op: "triplet_loss", left: (1, 0), right: (1, p.len()) });
    }
    if !(margin > 0.0) {
        return Err(NnError::Precondition(format!("margin must be positive, got {margin}")));
    }
    let d_ap = euclidean_distance(a, p)?;
    let d_an = euclidean_distance(a, n)?;
    let raw = d_ap - d_an + margin;
    let dim = a.len();
    let mut out = TripletOutput {
        loss: raw.max(0.0),
        d_ap,
        d_an,
        grad_anchor: vec![0.0; dim],
        grad_positive: vec![0.0; dim],
        grad_negative: vec![0.0; dim],
    };
    if raw <= 0.0 {
        return Ok(out);
    }
    for i in 0..dim {
        let gp = if d_ap > 0.0 { (a[i] - p[i]) / d_ap } else { 0.0 };
        let gn = if d_an > 0.0 { (a[i] - n[i]) / d_an } else { 0.0 };
        out.grad_anchor[i] = gp - gn;
        out.grad_positive[i] = -gp;
        out.grad_negative[i] = gn;
    }
    Ok(out)
}

/// Positive-weighted binary cross-entropy on a logit. Returns `(loss, dL/dz)`.
pub fn bce_with_logits(z: f64, y: f64, pos_weight: f64) -> Result<(f64, f64), NnError> {
    if y != 0.0 && y != 1.0 {
        return Err(NnError::Precondition(format!("label must be 0 or 1, got {y}")));
    }
    if !(pos_weight > 0.0) {
        return Err(NnError::Precondition(format!("pos_weight must be positive, got {pos_weight}")));
    }
    let loss = pos_weight * y * softplus(-z) + (1.0 - y) * softplus(z);
    let s = sigmoid(z);
    let grad = pos_weight * y * (s - 1.0) + (1.0 - y) * s;
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn distance_cases() {
        assert_eq!(euclidean_distance(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(euclidean_distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert!(euclidean_distance(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn triplet_cases() {
        let t = triplet_loss(&[0.0, 0.0], &[0.0, 0.0], &[2.0, 0.0], 1.0).unwrap();
        assert_eq!(t.loss, 0.0);
        assert!(t.grad_anchor.iter().chain(&t.grad_positive).chain(&t.grad_negative).all(|g| *g == 0.0));
        let t = triplet_loss(&[0.0, 0.0], &[1.0, 0.0], &[1.0, 0.0], 1.0).unwrap();
        assert_eq!(t.loss, 1.0);
        assert!(triplet_loss(&[], &[], &[], 1.0).is_err());
    }

    #[test]
    fn bce_cases() {
        let (l, _) = bce_with_logits(0.0, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(l, std::f64::consts::LN_2, epsilon = 1e-12);
        let (l, _) = bce_with_logits(0.0, 1.0, 5.0).unwrap();
        assert_abs_diff_eq!(l, 5.0 * std::f64::consts::LN_2, epsilon = 1e-12);
        for w in [0.5, 1.0, 5.0] {
            let (l, g) = bce_with_logits(100.0, 1.0, w).unwrap();
            assert!(l.is_finite() && l < 1e-40 && g.is_finite());
        }
        let (l, g) = bce_with_logits(-100.0, 0.0, 5.0).unwrap();
        assert!(l.is_finite() && g.is_finite());
        assert!(bce_with_logits(0.0, 0.5, 1.0).is_err());
    }
}
