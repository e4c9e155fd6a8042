use crate::diffcore::{cross_entropy_value, huber_value, Real, Tensor};
use crate::error::{Error, Result};

/// Mean Huber loss: `0.5·r²` for `|r| ≤ δ`, else `δ·(|r| − 0.5·δ)`.
pub fn huber_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>, delta: f64) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::dim(
            "huber_loss",
            format!("{:?} vs {:?}", pred.shape(), target.shape()),
        ));
    }
    if !(delta > 0.0) {
        return Err(Error::Config(format!("huber delta must be positive, got {delta}")));
    }
    Ok(huber_value(pred.data(), target.data(), T::lit(delta)).as_f64())
}

/// Mean over rows of `−Σ_c target_c · ln(probs_c + 1e-12)`.
pub fn cross_entropy_loss<T: Real>(probs: &Tensor<T>, onehot: &Tensor<T>) -> Result<f64> {
    if probs.shape() != onehot.shape() || probs.shape().len() != 2 {
        return Err(Error::dim(
            "cross_entropy_loss",
            format!("{:?} vs {:?}", probs.shape(), onehot.shape()),
        ));
    }
    Ok(cross_entropy_value(probs, onehot).as_f64())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::diffcore::{softmax_rows, Graph, ParamSet};

    fn m(rows: &[Vec<f64>]) -> Tensor<f64> {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn huber_examples() {
        let t = m(&[vec![0.3, 0.7]]);
        assert_eq!(huber_loss(&t, &t, 1.0).unwrap(), 0.0);
        assert_eq!(huber_loss(&m(&[vec![0.5]]), &m(&[vec![0.0]]), 1.0).unwrap(), 0.125);
        assert_eq!(huber_loss(&m(&[vec![2.0]]), &m(&[vec![0.0]]), 1.0).unwrap(), 1.5);
        assert!(huber_loss(&m(&[vec![2.0]]), &m(&[vec![0.0, 1.0]]), 1.0).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let onehot = m(&[vec![0.0, 1.0, 0.0, 0.0]]);
        assert!(cross_entropy_loss(&onehot, &onehot).unwrap().abs() < 1e-9);
        let uniform = m(&[vec![0.25; 4]]);
        assert!((cross_entropy_loss(&uniform, &onehot).unwrap() - 4f64.ln()).abs() < 1e-9);
        assert!(cross_entropy_loss(&uniform, &m(&[vec![1.0, 0.0]])).is_err());
    }

    #[test]
    fn softmax_cross_entropy_gradient_matches_finite_differences() {
        let mut p = ParamSet::<f64>::new();
        let z = p
            .insert("z", m(&[vec![0.3, -1.2, 2.0], vec![1.5, 0.1, -0.4], vec![-0.7, 0.9, 0.2]]))
            .unwrap();
        let onehot = m(&[vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        let loss_at = |zv: &Tensor<f64>| cross_entropy_loss(&softmax_rows(zv).unwrap(), &onehot).unwrap();
        let mut g = Graph::new(&p);
        let zn = g.param(z);
        let l = g.softmax_cross_entropy(zn, onehot.clone()).unwrap();
        assert!((g.value(l).item() - loss_at(p.get(z))).abs() < 1e-15);
        let grads = g.backward(l).unwrap();
        let h = 1e-5;
        for i in 0..9 {
            let mut up = p.get(z).clone();
            up.data_mut()[i] += h;
            let mut down = p.get(z).clone();
            down.data_mut()[i] -= h;
            let fd = (loss_at(&up) - loss_at(&down)) / (2.0 * h);
            let a = grads.get(z).data()[i];
            assert!((a - fd).abs() / fd.abs().max(1e-8) < 1e-4, "entry {i}: {a} vs {fd}");
        }
    }

    proptest! {
        #[test]
        fn huber_symmetric(a in proptest::collection::vec(-3.0f64..3.0, 8),
                           b in proptest::collection::vec(-3.0f64..3.0, 8),
                           delta in 0.1f64..2.0) {
            let (pa, pb) = (Tensor::matrix(2, 4, a).unwrap(), Tensor::matrix(2, 4, b).unwrap());
            prop_assert_eq!(huber_loss(&pa, &pb, delta).unwrap(), huber_loss(&pb, &pa, delta).unwrap());
        }
    }
}
