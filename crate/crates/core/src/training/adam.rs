use crate::diffcore::{GradSet, ParamSet, Real, Tensor};
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moments per parameter plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ParamSet<T>) -> Self {
        let zeros = || params.iter().map(|(_, _, p)| Tensor::zeros(p.shape().to_vec())).collect();
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self, i: usize) -> &Tensor<T> {
        &self.m[i]
    }

    pub fn second_moment(&self, i: usize) -> &Tensor<T> {
        &self.v[i]
    }

    /// Grows moment tensors with zeros to follow parameters that were
    /// expanded along their first axis. Existing slots keep their values.
    pub fn conform(&mut self, params: &ParamSet<T>) -> Result<()> {
        for (id, name, p) in params.iter() {
            let i = id.index();
            if i >= self.m.len() {
                self.m.push(Tensor::zeros(p.shape().to_vec()));
                self.v.push(Tensor::zeros(p.shape().to_vec()));
                continue;
            }
            let cur = self.m[i].shape().to_vec();
            if cur == p.shape() {
                continue;
            }
            let grows = cur.len() == p.shape().len()
                && cur[1..] == p.shape()[1..]
                && p.shape()[0] >= cur[0];
            if !grows {
                return Err(Error::Contract(format!(
                    "parameter {name} changed shape {cur:?} -> {:?} other than by appending rows",
                    p.shape()
                )));
            }
            let extra = p.shape()[0] - cur[0];
            self.m[i].grow_rows(extra, T::zero);
            self.v[i].grow_rows(extra, T::zero);
        }
        Ok(())
    }
}

/// One bias-corrected Adam update.
pub fn adam_step<T: Real>(
    params: &mut ParamSet<T>,
    grads: &GradSet<T>,
    state: &mut AdamState<T>,
    lr: f64,
) -> Result<()> {
    if !grads.is_congruent(params) {
        return Err(Error::dim("adam_step", "gradients do not match parameters"));
    }
    state.conform(params)?;
    state.t += 1;
    let t = state.t as i32;
    let b1 = T::lit(BETA1);
    let b2 = T::lit(BETA2);
    let one = T::one();
    let bc1 = T::lit(1.0 - BETA1.powi(t));
    let bc2 = T::lit(1.0 - BETA2.powi(t));
    let eps = T::lit(EPSILON);
    let lr = T::lit(lr);
    for (i, p) in params.tensors_mut().iter_mut().enumerate() {
        let g = grads.iter().nth(i).expect("congruent");
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (((theta, &gi), mi), vi) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = b1 * *mi + (one - b1) * gi;
            *vi = b2 * *vi + (one - b2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *theta -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn one_param(vals: Vec<f64>) -> ParamSet<f64> {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::new(vec![vals.len()], vals).unwrap()).unwrap();
        p
    }

    #[test]
    fn first_step_is_lr_sized() {
        let mut p = one_param(vec![0.0]);
        let mut g = GradSet::zeros_like(&p);
        let id = p.id("w").unwrap();
        g.get_mut(id).data_mut()[0] = 1.0;
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &g, &mut s, 0.001).unwrap();
        let expected = -0.001 / (1.0 + 1e-8);
        assert!((p.get(id).data()[0] - expected).abs() < 1e-15);
        assert_eq!(s.steps(), 1);
    }

    #[test]
    fn conform_grows_with_zeros() {
        let mut p = ParamSet::<f64>::new();
        let id = p.insert("w", Tensor::full(vec![2, 3], 1.0)).unwrap();
        let mut s = AdamState::new(&p);
        let mut g = GradSet::zeros_like(&p);
        g.get_mut(id).data_mut().fill(0.5);
        adam_step(&mut p, &g, &mut s, 0.1).unwrap();
        let m_before = s.first_moment(0).clone();
        p.get_mut(id).grow_rows(2, || 0.0);
        s.conform(&p).unwrap();
        assert_eq!(s.first_moment(0).shape(), &[4, 3]);
        assert_eq!(&s.first_moment(0).data()[..6], m_before.data());
        assert!(s.first_moment(0).data()[6..].iter().all(|&v| v == 0.0));
        assert!(s.second_moment(0).data()[6..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identical_runs_identical_trajectories() {
        let run = || {
            let mut p = one_param(vec![0.3, -0.2, 1.0]);
            let id = p.id("w").unwrap();
            let mut s = AdamState::new(&p);
            for k in 0..50 {
                let mut g = GradSet::zeros_like(&p);
                for (i, v) in g.get_mut(id).data_mut().iter_mut().enumerate() {
                    *v = ((k * 3 + i) as f64 * 0.7).sin();
                }
                adam_step(&mut p, &g, &mut s, 0.01).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    proptest! {
        #[test]
        fn zero_gradient_is_identity(vals in proptest::collection::vec(-10.0f64..10.0, 1..20), lr in 1e-5f64..1.0) {
            let mut p = one_param(vals);
            let before = p.clone();
            let g = GradSet::zeros_like(&p);
            let mut s = AdamState::new(&p);
            adam_step(&mut p, &g, &mut s, lr).unwrap();
            prop_assert_eq!(p, before);
        }
    }
}
