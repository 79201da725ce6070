use super::{NnError, Tensor2D};

/// Feature-wise affine modulation `gamma ⊙ e + beta` of a single row.
pub fn film_modulate(e: &Tensor2D, gamma: &Tensor2D, beta: &Tensor2D) -> Result<Tensor2D, NnError> {
    if e.shape() != gamma.shape() || e.shape() != beta.shape() || e.rows() != 1 {
        return Err(NnError::Shape { op: "film_modulate", left: e.shape(), right: gamma.shape() });
    }
    let data = e
        .data()
        .iter()
        .zip(gamma.data())
        .zip(beta.data())
        .map(|((x, g), b)| g * x + b)
        .collect();
    Tensor2D::from_vec(1, e.cols(), data)
}

/// Returns `(d_e, d_gamma, d_beta)`.
pub fn film_backward(
    e: &Tensor2D,
    gamma: &Tensor2D,
    dout: &Tensor2D,
) -> Result<(Tensor2D, Tensor2D, Tensor2D), NnError> {
    if e.shape() != dout.shape() {
        return Err(NnError::Shape { op: "film_backward", left: e.shape(), right: dout.shape() });
    }
    let de = Tensor2D::from_vec(1, e.cols(), dout.data().iter().zip(gamma.data()).map(|(d, g)| d * g).collect())?;
    let dg = Tensor2D::from_vec(1, e.cols(), dout.data().iter().zip(e.data()).map(|(d, x)| d * x).collect())?;
    Ok((de, dg, dout.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: &[f64]) -> Tensor2D {
        Tensor2D::row_vector(v)
    }

    #[test]
    fn identity_erasure_and_arithmetic() {
        let e = row(&[1.0, 2.0]);
        assert_eq!(film_modulate(&e, &row(&[1.0, 1.0]), &row(&[0.0, 0.0])).unwrap(), e);
        assert_eq!(film_modulate(&e, &row(&[0.0, 0.0]), &row(&[3.0, -4.0])).unwrap().data(), &[3.0, -4.0]);
        assert_eq!(film_modulate(&e, &row(&[2.0, 0.5]), &row(&[-1.0, 1.0])).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn length_mismatch() {
        assert!(film_modulate(&row(&[1.0]), &row(&[1.0, 2.0]), &row(&[1.0])).is_err());
    }
}
