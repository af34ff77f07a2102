//! The super-resolution network: configuration, blocks and parameter store.

pub mod blocks;
pub mod config;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Tape, Var};
use crate::error::{shape_err, Result};
use crate::graph::{Eager, ShapeTrace, Traced};
use crate::ops::ConvSpec;
use crate::params::ParamStore;
use crate::tensor::{Scalar, Tensor4};

pub use blocks::{dracb, mreb, mren_forward, rbwa, scacb, wsilbv, AttentionState};
pub use config::{ModelConfig, Variant};

/// Conv layers of a configuration in execution order.
pub fn conv_layers(config: &ModelConfig) -> Result<Vec<(String, ConvSpec)>> {
    config.validate()?;
    let mut trace = ShapeTrace::new();
    mren_forward(&mut trace, &[1, 3, 4, 4], config)?;
    trace.conv_layers()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MrenModel<T: Scalar = f32> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
}

/// Builds a model with conv weights drawn uniformly from ±1/√fan_in and zero
/// biases. The same seed yields identical parameters in either precision.
pub fn init_model<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<MrenModel<T>> {
    let params = init_params(&conv_layers(config)?, seed)?;
    Ok(MrenModel { config: config.clone(), params })
}

/// Allocates and initializes parameters for a list of conv layers.
pub fn init_params<T: Scalar>(layers: &[(String, ConvSpec)], seed: u64) -> Result<ParamStore<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamStore::new();
    for (name, spec) in layers {
        let wd = spec.weight_dims();
        let fan_in = (wd[1] * wd[2] * wd[3]) as f64;
        let bound = 1.0 / fan_in.sqrt();
        let weight = Tensor4::from_fn(wd, |_| T::of(rng.gen_range(-bound..bound)));
        params.insert(format!("{name}.weight"), weight)?;
        if spec.bias {
            params.insert(format!("{name}.bias"), Tensor4::zeros(spec.bias_dims()))?;
        }
    }
    Ok(params)
}

impl<T: Scalar> MrenModel<T> {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        init_model(config, seed)
    }

    /// Checks that the store holds exactly the parameters the config needs.
    pub fn check_params(&self) -> Result<()> {
        let layers = conv_layers(&self.config)?;
        let mut expected = 0;
        for (name, spec) in &layers {
            let mut want = vec![(format!("{name}.weight"), spec.weight_dims())];
            if spec.bias {
                want.push((format!("{name}.bias"), spec.bias_dims()));
            }
            for (pname, dims) in want {
                let p = self
                    .params
                    .get(&pname)
                    .ok_or_else(|| shape_err!("missing parameter {pname}"))?;
                if p.value.dims() != dims {
                    return Err(shape_err!(
                        "parameter {pname} has dims {:?}, config expects {:?}",
                        p.value.dims(),
                        dims
                    ));
                }
                expected += 1;
            }
        }
        if expected != self.params.len() {
            return Err(shape_err!(
                "parameter store has {} tensors, config expects {expected}",
                self.params.len()
            ));
        }
        Ok(())
    }

    /// Records a forward pass on `tape`.
    pub fn forward(&self, tape: &mut Tape<T>, input: Var) -> Result<Var> {
        let mut g = Traced::new(tape, &self.params);
        mren_forward(&mut g, &input, &self.config)
    }

    /// Forward pass without recording.
    pub fn infer(&self, input: &Tensor4<T>) -> Result<Tensor4<T>> {
        let mut g = Eager::new(&self.params);
        let x = g.input(input.clone());
        let y = mren_forward(&mut g, &x, &self.config)?;
        drop(x);
        Ok(std::rc::Rc::try_unwrap(y).unwrap_or_else(|rc| (*rc).clone()))
    }

    /// Zeroes the final RGB projection, reducing the network to bicubic upsampling.
    pub fn zero_tail(&mut self) {
        for name in ["tail.weight", "tail.bias"] {
            if let Some(p) = self.params.get_mut(name) {
                p.value.fill(T::zero());
            }
        }
    }

    pub fn cast<U: Scalar>(&self) -> MrenModel<U> {
        MrenModel { config: self.config.clone(), params: self.params.cast() }
    }
}
