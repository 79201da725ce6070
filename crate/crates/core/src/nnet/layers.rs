use super::{NnError, Tensor2D};

/// `x·W + b`, with `b` a `1 × out` row broadcast over the rows of `x·W`.
pub fn affine_forward(x: &Tensor2D, w: &Tensor2D, b: &Tensor2D) -> Result<Tensor2D, NnError> {
    if b.rows() != 1 || b.cols() != w.cols() {
        return Err(NnError::Shape { op: "affine_forward(bias)", left: w.shape(), right: b.shape() });
    }
    let mut y = x.matmul(w)?;
    for r in 0..y.rows() {
        for (v, bb) in y.row_mut(r).iter_mut().zip(b.data()) {
            *v += bb;
        }
    }
    Ok(y)
}

#[derive(Debug, Clone)]
pub struct AffineGrads {
    pub dx: Tensor2D,
    pub dw: Tensor2D,
    pub db: Tensor2D,
}

/// Backward of [`affine_forward`]; `x` is the cached forward input.
pub fn affine_backward(x: &Tensor2D, w: &Tensor2D, dy: &Tensor2D) -> Result<AffineGrads, NnError> {
    Ok(AffineGrads { dx: dy.matmul_t(w)?, dw: x.t_matmul(dy)?, db: dy.sum_rows() })
}

pub fn relu_forward(x: &Tensor2D) -> Tensor2D {
    x.map(|v| v.max(0.0))
}

/// Backward of ReLU given the forward *output* `y`.
pub fn relu_backward(y: &Tensor2D, dy: &Tensor2D) -> Tensor2D {
    let mut dx = dy.clone();
    for (d, &v) in dx.data_mut().iter_mut().zip(y.data()) {
        if v <= 0.0 {
            *d = 0.0;
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_identity_and_arithmetic() {
        let x = Tensor2D::row_vector(&[1.0, 2.0]);
        let eye = Tensor2D::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let zero = Tensor2D::row_vector(&[0.0, 0.0]);
        assert_eq!(affine_forward(&x, &eye, &zero).unwrap().data(), &[1.0, 2.0]);

        let x = Tensor2D::row_vector(&[1.0, 1.0]);
        let w = Tensor2D::from_rows(&[vec![2.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let b = Tensor2D::row_vector(&[1.0, 1.0]);
        assert_eq!(affine_forward(&x, &w, &b).unwrap().data(), &[3.0, 4.0]);
    }

    #[test]
    fn affine_dimension_mismatch_reports_shapes() {
        let x = Tensor2D::zeros(3, 4);
        let w = Tensor2D::zeros(5, 2);
        let b = Tensor2D::zeros(1, 2);
        let msg = affine_forward(&x, &w, &b).unwrap_err().to_string();
        assert!(msg.contains("3x4") && msg.contains("5x2"), "{msg}");
    }
}
