use crate::error::{Error, Result};
use crate::tensor::{Gradients, ParamStore, Real, Tensor};

/// Bias-corrected Adam over every trainable entry of a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(store: &ParamStore<T>, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Tensor<T>> = store
            .ids()
            .map(|id| {
                let [r, c] = store.get(id).shape();
                Tensor::zeros(r, c)
            })
            .collect();
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update. Every trainable parameter must have a gradient.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &Gradients<T>) -> Result<()> {
        if self.m.len() != store.len() {
            return Err(Error::domain("optimizer state does not match the parameter store"));
        }
        let ids: Vec<_> = store.ids().filter(|&id| store.is_trainable(id)).collect();
        for &id in &ids {
            if grads.param(id).is_none() {
                return Err(Error::domain(format!("no gradient for parameter {}", store.name(id))));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for id in ids {
            let g = grads.param(id).expect("checked above");
            let i = id.index();
            let p = store.get_mut(id);
            if g.shape() != p.shape() {
                return Err(Error::Shape {
                    op: "adam",
                    left: p.shape(),
                    right: g.shape(),
                });
            }
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (j, (w, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                let gj = gj.f64();
                let mj = b1 * m[j].f64() + (1.0 - b1) * gj;
                let vj = b2 * v[j].f64() + (1.0 - b2) * gj * gj;
                m[j] = T::lit(mj);
                v[j] = T::lit(vj);
                let update = self.lr * (mj / c1) / ((vj / c2).sqrt() + self.eps);
                *w = T::lit(w.f64() - update);
            }
        }
        Ok(())
    }
}
