use crate::tensor::{Graph, TensorError, Var};

/// Coefficients of the weighted edge loss `w_l2 * L2 + w_el * EL`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub w_l2: f64,
    pub w_el: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { w_l2: 1.0, w_el: 0.05 }
    }
}

impl LossWeights {
    pub fn is_valid(&self) -> bool {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        ok(self.w_l2) && ok(self.w_el) && (self.w_l2 > 0.0 || self.w_el > 0.0)
    }
}

/// Graph nodes of one loss evaluation. All three are scalars.
#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub wel: Var,
    pub l2: Var,
    pub el: Var,
}

/// Mean squared pixel difference.
pub fn l2_loss(g: &mut Graph, pred: Var, gt: Var) -> Result<Var, TensorError> {
    let d = g.sub(pred, gt)?;
    let sq = g.square(d)?;
    g.mean_all(sq)
}

/// Edge-preserving loss: mean absolute difference between the
/// forward-difference gradients of `pred` and `gt`, averaged over every
/// pixel and both gradient directions.
pub fn edge_loss(g: &mut Graph, pred: Var, gt: Var) -> Result<Var, TensorError> {
    let (ps, gs) = (g.value(pred).shape(), g.value(gt).shape());
    if ps != gs {
        return Err(TensorError::ShapeMismatch {
            op: "edge_loss",
            lhs: ps,
            rhs: gs,
        });
    }
    let grad_pred = g.spatial_gradient(pred)?;
    let grad_gt = g.spatial_gradient(gt)?;
    let d = g.sub(grad_pred, grad_gt)?;
    let a = g.abs(d)?;
    g.mean_all(a)
}

/// Weighted edge loss. Both components are returned for logging.
pub fn wel_loss(g: &mut Graph, pred: Var, gt: Var, weights: LossWeights) -> Result<LossParts, TensorError> {
    let l2 = l2_loss(g, pred, gt)?;
    let el = edge_loss(g, pred, gt)?;
    let a = g.scale(l2, weights.w_l2)?;
    let b = g.scale(el, weights.w_el)?;
    let wel = g.add(a, b)?;
    Ok(LossParts { wel, l2, el })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Shape, Tensor};

    fn plane(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> Tensor {
        let data = (0..h).flat_map(|i| (0..w).map(move |j| (i, j))).map(|(i, j)| f(i, j)).collect();
        Tensor::new(Shape::new(1, 1, h, w), data).unwrap()
    }

    /// Per-pixel enumeration of the edge loss, independent of the graph.
    fn edge_loss_oracle(a: &Tensor, b: &Tensor) -> f64 {
        let [_, _, h, w] = a.shape().0;
        let at = |t: &Tensor, i: usize, j: usize| t.get(0, 0, i, j);
        let mut total = 0.0;
        for i in 0..h {
            for j in 0..w {
                let gx = |t: &Tensor| if j + 1 < w { at(t, i, j + 1) - at(t, i, j) } else { 0.0 };
                let gy = |t: &Tensor| if i + 1 < h { at(t, i + 1, j) - at(t, i, j) } else { 0.0 };
                total += (gx(a) - gx(b)).abs() + (gy(a) - gy(b)).abs();
            }
        }
        total / (2 * h * w) as f64
    }

    fn eval(pred: &Tensor, gt: &Tensor, w: LossWeights) -> (f64, f64, f64) {
        let mut g = Graph::new();
        let p = g.constant(pred.clone());
        let t = g.constant(gt.clone());
        let parts = wel_loss(&mut g, p, t, w).unwrap();
        let v = |x: Var| g.value(x).item().unwrap();
        (v(parts.wel), v(parts.l2), v(parts.el))
    }

    #[test]
    fn identical_inputs_give_zero() {
        let a = plane(5, 6, |i, j| (i * j) as f64 * 0.1);
        let (wel, l2, el) = eval(&a, &a, LossWeights { w_l2: 1.0, w_el: 1.0 });
        assert_eq!((wel, l2, el), (0.0, 0.0, 0.0));
    }

    #[test]
    fn ramp_against_constant_approaches_half_slope() {
        let c = 0.3;
        for w in [4usize, 16, 64, 256] {
            let pred = plane(8, w, |_, j| c * j as f64);
            let gt = plane(8, w, |_, _| 0.5);
            let (_, _, el) = eval(&pred, &gt, LossWeights::default());
            let oracle = edge_loss_oracle(&pred, &gt);
            assert!((el - oracle).abs() < 1e-12);
            // Closed form: c on (w-1)/w of the horizontal gradients.
            assert!((el - c * (w - 1) as f64 / (2 * w) as f64).abs() < 1e-12);
        }
        let pred = plane(4, 4096, |_, j| c * j as f64);
        let (_, _, el) = eval(&pred, &plane(4, 4096, |_, _| 0.0), LossWeights::default());
        assert!((el - c / 2.0).abs() < 1e-4);
    }

    #[test]
    fn edge_loss_is_symmetric() {
        let a = plane(6, 5, |i, j| ((i * 13 + j * 7) % 5) as f64 / 4.0);
        let b = plane(6, 5, |i, j| ((i * 3 + j * 11) % 7) as f64 / 6.0);
        assert_eq!(eval(&a, &b, LossWeights::default()).2, eval(&b, &a, LossWeights::default()).2);
    }

    #[test]
    fn zero_edge_weight_reduces_to_mse() {
        let a = plane(6, 5, |i, j| ((i * 13 + j * 7) % 5) as f64 / 4.0);
        let b = plane(6, 5, |i, j| ((i * 3 + j * 11) % 7) as f64 / 6.0);
        let mse = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / 30.0;
        let (wel, l2, _) = eval(&a, &b, LossWeights { w_l2: 1.0, w_el: 0.0 });
        assert_eq!(wel, l2);
        assert!((wel - mse).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_hand_enumeration() {
        // pred [[0,1],[1,0]], gt 0.
        // gx: [1, 0 | -1, 0], gy: [1, -1 | 0, 0] -> |.| sums to 4 over 8.
        let pred = plane(2, 2, |i, j| if i != j { 1.0 } else { 0.0 });
        let gt = plane(2, 2, |_, _| 0.0);
        let (wel, l2, el) = eval(&pred, &gt, LossWeights { w_l2: 1.0, w_el: 1.0 });
        assert_eq!(l2, 0.5);
        assert_eq!(el, 0.5);
        assert!((el - edge_loss_oracle(&pred, &gt)).abs() < 1e-12);
        assert!((wel - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        let mut g = Graph::new();
        let p = g.constant(Tensor::zeros(Shape::new(1, 1, 4, 4)));
        let t = g.constant(Tensor::zeros(Shape::new(1, 1, 4, 3)));
        assert!(wel_loss(&mut g, p, t, LossWeights::default()).is_err());
        assert!(edge_loss(&mut g, p, t).is_err());
    }

    #[test]
    fn weight_validation() {
        assert!(LossWeights::default().is_valid());
        assert!(!LossWeights { w_l2: 0.0, w_el: 0.0 }.is_valid());
        assert!(!LossWeights { w_l2: -1.0, w_el: 1.0 }.is_valid());
    }
}
