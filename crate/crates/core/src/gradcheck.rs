//! Central finite-difference verification of tape gradients (double precision).

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Tape, Var};
use crate::error::Result;
use crate::ops::{ConvSpec, ResizeKind};
use crate::params::ParamStore;
use crate::tensor::Tensor4;

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Primitives with a built-in gradient check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Primitive {
    Conv2d { kernel: usize, depthwise: bool },
    Gelu,
    Sigmoid,
    Add,
    Mul,
    Axpy,
    Concat,
    Slice,
    Bilinear,
    Bicubic,
    GlobalAvgPool,
    ChannelScale,
    L1Loss,
}

impl Primitive {
    pub const ALL: [Primitive; 18] = [
        Primitive::Conv2d { kernel: 1, depthwise: false },
        Primitive::Conv2d { kernel: 3, depthwise: false },
        Primitive::Conv2d { kernel: 5, depthwise: false },
        Primitive::Conv2d { kernel: 1, depthwise: true },
        Primitive::Conv2d { kernel: 3, depthwise: true },
        Primitive::Conv2d { kernel: 5, depthwise: true },
        Primitive::Gelu,
        Primitive::Sigmoid,
        Primitive::Add,
        Primitive::Mul,
        Primitive::Axpy,
        Primitive::Concat,
        Primitive::Slice,
        Primitive::Bilinear,
        Primitive::Bicubic,
        Primitive::GlobalAvgPool,
        Primitive::ChannelScale,
        Primitive::L1Loss,
    ];
}

/// Which coordinates of each tensor are perturbed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Probes {
    All,
    /// At most this many randomly chosen elements per tensor.
    Sample(usize),
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

fn probe_indices(len: usize, probes: Probes, rng: &mut ChaCha8Rng) -> Vec<usize> {
    match probes {
        Probes::All => (0..len).collect(),
        Probes::Sample(k) if k >= len => (0..len).collect(),
        Probes::Sample(k) => {
            let mut v = sample(rng, len, k).into_vec();
            v.sort_unstable();
            v
        }
    }
}

pub fn random_tensor(dims: [usize; 4], rng: &mut impl Rng) -> Tensor4<f64> {
    Tensor4::from_fn(dims, |_| rng.gen_range(-1.0..1.0))
}

/// Compares tape gradients of `f` against central differences.
///
/// `f` maps the inputs (and parameters bound from `params`) to any tensor; a
/// fixed random projection reduces it to a scalar. Both the input tensors and
/// every parameter in `params` are checked. Returns the maximum relative
/// error `|analytic − numeric| / max(1e-8, |analytic| + |numeric|)`.
pub fn grad_check_fn<F>(
    inputs: &[Tensor4<f64>],
    params: &ParamStore<f64>,
    f: F,
    probes: Probes,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &ParamStore<f64>, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);

    // Projection weights, sized from one reference evaluation.
    let out_dims = {
        let mut tape = Tape::no_grad();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
        let out = f(&mut tape, params, &vars)?;
        tape.dims(out)
    };
    let projection = random_tensor(out_dims, &mut rng);

    let output = |inputs: &[Tensor4<f64>], params: &ParamStore<f64>| -> Result<Tensor4<f64>> {
        let mut tape = Tape::no_grad();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
        let out = f(&mut tape, params, &vars)?;
        Ok(tape.value(out).clone())
    };
    // Differencing element-wise before projecting keeps the rounding of a
    // large projected sum out of the quotient.
    let central = |plus: &Tensor4<f64>, minus: &Tensor4<f64>| -> f64 {
        plus.data()
            .iter()
            .zip(minus.data())
            .zip(projection.data())
            .map(|((p, m), w)| (p - m) * w)
            .sum::<f64>()
            / (2.0 * FD_STEP)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.input_with_grad(t.clone())).collect();
    let out = f(&mut tape, params, &vars)?;
    let loss = tape.dot(out, projection.clone())?;
    let grads = tape.backward(loss)?;
    let mut param_grads = params.clone();
    param_grads.zero_grad();
    grads.accumulate_into(&mut param_grads)?;

    let mut worst = 0.0f64;
    let mut work = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let zeros = Tensor4::zeros(inputs[k].dims());
        let analytic = grads.wrt(*v).unwrap_or(&zeros);
        for j in probe_indices(inputs[k].len(), probes, &mut rng) {
            let orig = work[k].data()[j];
            work[k].data_mut()[j] = orig + FD_STEP;
            let plus = output(&work, params)?;
            work[k].data_mut()[j] = orig - FD_STEP;
            let minus = output(&work, params)?;
            work[k].data_mut()[j] = orig;
            let numeric = central(&plus, &minus);
            worst = worst.max(relative_error(analytic.data()[j], numeric));
        }
    }

    let mut store = params.clone();
    let names: Vec<String> = params.names().map(str::to_owned).collect();
    for name in names {
        let len = params.get(&name).expect("present").value.len();
        for j in probe_indices(len, probes, &mut rng) {
            let orig = params.get(&name).expect("present").value.data()[j];
            store.get_mut(&name).expect("present").value.data_mut()[j] = orig + FD_STEP;
            let plus = output(inputs, &store)?;
            store.get_mut(&name).expect("present").value.data_mut()[j] = orig - FD_STEP;
            let minus = output(inputs, &store)?;
            store.get_mut(&name).expect("present").value.data_mut()[j] = orig;
            let numeric = central(&plus, &minus);
            let analytic = param_grads.get(&name).expect("present").grad.data()[j];
            worst = worst.max(relative_error(analytic, numeric));
        }
    }
    Ok(worst)
}

/// Gradient check of a single primitive on random inputs of the given dims.
pub fn grad_check(primitive: Primitive, dims: [usize; 4], seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [n, c, h, w] = dims;
    let none = ParamStore::new();
    let x = random_tensor(dims, &mut rng);
    match primitive {
        Primitive::Conv2d { kernel, depthwise } => {
            let spec = if depthwise { ConvSpec::depthwise(c, kernel) } else { ConvSpec::new(c, c + 1, kernel) };
            let wt = random_tensor(spec.weight_dims(), &mut rng);
            let b = random_tensor(spec.bias_dims(), &mut rng);
            grad_check_fn(
                &[x, wt, b],
                &none,
                move |t, _, v| t.conv2d(v[0], v[1], Some(v[2]), spec),
                Probes::All,
                seed,
            )
        }
        Primitive::Gelu => grad_check_fn(&[x.map(|v| 2.0 * v)], &none, |t, _, v| Ok(t.gelu(v[0])), Probes::All, seed),
        Primitive::Sigmoid => {
            grad_check_fn(&[x.map(|v| 3.0 * v)], &none, |t, _, v| Ok(t.sigmoid(v[0])), Probes::All, seed)
        }
        Primitive::Add => {
            let y = random_tensor(dims, &mut rng);
            grad_check_fn(&[x, y], &none, |t, _, v| t.add(v[0], v[1]), Probes::All, seed)
        }
        Primitive::Mul => {
            let y = random_tensor(dims, &mut rng);
            grad_check_fn(&[x, y], &none, |t, _, v| t.mul(v[0], v[1]), Probes::All, seed)
        }
        Primitive::Axpy => {
            let y = random_tensor(dims, &mut rng);
            grad_check_fn(&[x, y], &none, |t, _, v| t.axpy(0.2, v[0], v[1]), Probes::All, seed)
        }
        Primitive::Concat => {
            let y = random_tensor([n, c + 1, h, w], &mut rng);
            grad_check_fn(&[x, y], &none, |t, _, v| t.concat_channels(&[v[0], v[1]]), Probes::All, seed)
        }
        Primitive::Slice => {
            let len = (c / 2).max(1);
            grad_check_fn(&[x], &none, move |t, _, v| t.slice_channels(v[0], c - len, len), Probes::All, seed)
        }
        Primitive::Bilinear => grad_check_fn(
            &[x],
            &none,
            |t, _, v| t.resize(ResizeKind::Bilinear, v[0], 2),
            Probes::All,
            seed,
        ),
        Primitive::Bicubic => grad_check_fn(
            &[x],
            &none,
            |t, _, v| t.resize(ResizeKind::Bicubic, v[0], 3),
            Probes::All,
            seed,
        ),
        Primitive::GlobalAvgPool => {
            grad_check_fn(&[x], &none, |t, _, v| Ok(t.global_avg_pool(v[0])), Probes::All, seed)
        }
        Primitive::ChannelScale => {
            let s = random_tensor([n, c, 1, 1], &mut rng);
            grad_check_fn(&[x, s], &none, |t, _, v| t.channel_scale(v[0], v[1]), Probes::All, seed)
        }
        Primitive::L1Loss => {
            // Keep every residual well away from the kink at zero.
            let residual = Tensor4::from_fn(dims, |_| {
                let mag = rng.gen_range(0.1..1.0);
                if rng.gen_bool(0.5) {
                    mag
                } else {
                    -mag
                }
            });
            let pred = x.zip_map(&residual, |t, r| t + r).expect("same dims");
            grad_check_fn(&[pred, x], &none, |t, _, v| t.l1_loss(v[0], v[1]), Probes::All, seed)
        }
    }
}
