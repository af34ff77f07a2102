use crate::autograd::{Gradients, Tape};
use crate::data::PatchBatch;
use crate::error::{shape_err, Error, Result};
use crate::model::MrenModel;
use crate::params::ParamStore;
use crate::tensor::{Scalar, Tensor4};

use super::TrainConfig;

/// First and second moments, aligned with the parameter store's order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Scalar = f32> {
    pub step: u64,
    pub m: Vec<Tensor4<T>>,
    pub v: Vec<Tensor4<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros = || params.iter().map(|(_, p)| Tensor4::zeros(p.value.dims())).collect();
        AdamState { step: 0, m: zeros(), v: zeros() }
    }

    fn check(&self, params: &ParamStore<T>) -> Result<()> {
        if self.m.len() != params.len() || self.v.len() != params.len() {
            return Err(shape_err!(
                "optimizer state has {} moments for {} parameters",
                self.m.len(),
                params.len()
            ));
        }
        for ((name, p), (m, v)) in params.iter().zip(self.m.iter().zip(&self.v)) {
            if m.dims() != p.value.dims() || v.dims() != p.value.dims() {
                return Err(shape_err!("optimizer moments for {name} do not match its dims"));
            }
        }
        Ok(())
    }
}

/// One bias-corrected Adam update of every parameter.
pub fn adam_step<T: Scalar>(
    params: &mut ParamStore<T>,
    grads: &Gradients<T>,
    state: &mut AdamState<T>,
    lr: f64,
    config: &TrainConfig,
) -> Result<()> {
    state.check(params)?;
    for (i, (name, _)) in params.iter().enumerate() {
        if grads.param(i).is_none() {
            return Err(Error::Usage(format!("no gradient for parameter {name}")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let (tb1, tb2) = (T::of(b1), T::of(b2));
    let (ob1, ob2) = (T::of(1.0 - b1), T::of(1.0 - b2));
    let (inv_c1, inv_c2) = (T::of(1.0 / c1), T::of(1.0 / c2));
    let (lr, eps) = (T::of(lr), T::of(config.eps));
    for i in 0..params.len() {
        let g = grads.param(i).expect("checked above");
        let (_, p) = params.by_index_mut(i).expect("index in range");
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (((w, &g), m), v) in p
            .value
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *m = tb1 * *m + ob1 * g;
            *v = tb2 * *v + ob2 * g * g;
            let m_hat = *m * inv_c1;
            let v_hat = *v * inv_c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Forward, L1 against HR, backward and one Adam update. Returns the loss
/// before the update.
pub fn train_step<T: Scalar>(
    model: &mut MrenModel<T>,
    batch: &PatchBatch<T>,
    state: &mut AdamState<T>,
    lr: f64,
    config: &TrainConfig,
) -> Result<f64> {
    if batch.scale != model.config.scale {
        return Err(shape_err!(
            "batch scale {} does not match model scale {}",
            batch.scale,
            model.config.scale
        ));
    }
    let mut tape = Tape::new();
    let x = tape.input(batch.lr.clone());
    let y = model.forward(&mut tape, x)?;
    let target = tape.input(batch.hr.clone());
    let loss_var = tape.l1_loss(y, target)?;
    let loss = tape.value(loss_var).data()[0].as_f64();
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("training loss is {loss}")));
    }
    let grads = tape.backward(loss_var)?;
    adam_step(&mut model.params, &grads, state, lr, config)?;
    Ok(loss)
}
