//! Execution backends for network definitions.
//!
//! Blocks are written once against [`Graph`] and run in three ways:
//! recorded on a [`Tape`] for training ([`Traced`]), evaluated eagerly with
//! intermediates dropped as soon as they go out of scope ([`Eager`]), or
//! traced for shapes only ([`ShapeTrace`]) to declare parameters and count
//! operations without touching data.

use std::rc::Rc;

use crate::autograd::{Tape, Var};
use crate::error::{shape_err, Error, Result};
use crate::ops::{self, ConvSpec, ResizeKind};
use crate::params::ParamStore;
use crate::tensor::{Scalar, Tensor4};

pub trait Graph {
    type Var: Clone;

    fn dims(&self, v: &Self::Var) -> [usize; 4];

    /// Convolution whose parameters live under `{name}.weight` / `{name}.bias`.
    fn conv(&mut self, name: &str, x: &Self::Var, spec: ConvSpec) -> Result<Self::Var>;

    fn gelu(&mut self, x: &Self::Var) -> Result<Self::Var>;

    fn sigmoid(&mut self, x: &Self::Var) -> Result<Self::Var>;

    fn add(&mut self, x: &Self::Var, y: &Self::Var) -> Result<Self::Var>;

    fn mul(&mut self, x: &Self::Var, y: &Self::Var) -> Result<Self::Var>;

    /// `alpha · x + y`.
    fn axpy(&mut self, alpha: f64, x: &Self::Var, y: &Self::Var) -> Result<Self::Var>;

    fn concat(&mut self, parts: &[Self::Var]) -> Result<Self::Var>;

    fn resize(&mut self, kind: ResizeKind, x: &Self::Var, scale: usize) -> Result<Self::Var>;

    fn global_avg_pool(&mut self, x: &Self::Var) -> Result<Self::Var>;

    fn channel_scale(&mut self, x: &Self::Var, scale: &Self::Var) -> Result<Self::Var>;
}

fn lookup<'a, T: Scalar>(
    params: &'a ParamStore<T>,
    name: &str,
    dims: [usize; 4],
) -> Result<&'a Tensor4<T>> {
    let p = params
        .get(name)
        .ok_or_else(|| shape_err!("missing parameter {name}"))?;
    if p.value.dims() != dims {
        return Err(shape_err!(
            "parameter {name} has dims {:?}, layer expects {:?}",
            p.value.dims(),
            dims
        ));
    }
    Ok(&p.value)
}

/// Records every operation on a tape, binding parameters from a store.
pub struct Traced<'a, T: Scalar> {
    pub tape: &'a mut Tape<T>,
    pub params: &'a ParamStore<T>,
}

impl<'a, T: Scalar> Traced<'a, T> {
    pub fn new(tape: &'a mut Tape<T>, params: &'a ParamStore<T>) -> Self {
        Traced { tape, params }
    }
}

impl<T: Scalar> Graph for Traced<'_, T> {
    type Var = Var;

    fn dims(&self, v: &Var) -> [usize; 4] {
        self.tape.dims(*v)
    }

    fn conv(&mut self, name: &str, x: &Var, spec: ConvSpec) -> Result<Var> {
        let wname = format!("{name}.weight");
        lookup(self.params, &wname, spec.weight_dims())?;
        let w = self.tape.param(self.params, &wname)?;
        let b = if spec.bias {
            let bname = format!("{name}.bias");
            lookup(self.params, &bname, spec.bias_dims())?;
            Some(self.tape.param(self.params, &bname)?)
        } else {
            None
        };
        self.tape.conv2d(*x, w, b, spec)
    }

    fn gelu(&mut self, x: &Var) -> Result<Var> {
        Ok(self.tape.gelu(*x))
    }

    fn sigmoid(&mut self, x: &Var) -> Result<Var> {
        Ok(self.tape.sigmoid(*x))
    }

    fn add(&mut self, x: &Var, y: &Var) -> Result<Var> {
        self.tape.add(*x, *y)
    }

    fn mul(&mut self, x: &Var, y: &Var) -> Result<Var> {
        self.tape.mul(*x, *y)
    }

    fn axpy(&mut self, alpha: f64, x: &Var, y: &Var) -> Result<Var> {
        self.tape.axpy(T::of(alpha), *x, *y)
    }

    fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        self.tape.concat_channels(parts)
    }

    fn resize(&mut self, kind: ResizeKind, x: &Var, scale: usize) -> Result<Var> {
        self.tape.resize(kind, *x, scale)
    }

    fn global_avg_pool(&mut self, x: &Var) -> Result<Var> {
        Ok(self.tape.global_avg_pool(*x))
    }

    fn channel_scale(&mut self, x: &Var, scale: &Var) -> Result<Var> {
        self.tape.channel_scale(*x, *scale)
    }
}

/// Direct evaluation without recording; memory is released as values drop.
pub struct Eager<'a, T: Scalar> {
    pub params: &'a ParamStore<T>,
}

impl<'a, T: Scalar> Eager<'a, T> {
    pub fn new(params: &'a ParamStore<T>) -> Self {
        Eager { params }
    }

    pub fn input(&self, x: Tensor4<T>) -> Rc<Tensor4<T>> {
        Rc::new(x)
    }
}

impl<T: Scalar> Graph for Eager<'_, T> {
    type Var = Rc<Tensor4<T>>;

    fn dims(&self, v: &Self::Var) -> [usize; 4] {
        v.dims()
    }

    fn conv(&mut self, name: &str, x: &Self::Var, spec: ConvSpec) -> Result<Self::Var> {
        let w = lookup(self.params, &format!("{name}.weight"), spec.weight_dims())?;
        let b = if spec.bias {
            Some(lookup(self.params, &format!("{name}.bias"), spec.bias_dims())?)
        } else {
            None
        };
        Ok(Rc::new(ops::conv2d(x, w, b, &spec)?))
    }

    fn gelu(&mut self, x: &Self::Var) -> Result<Self::Var> {
        Ok(Rc::new(ops::gelu(x)))
    }

    fn sigmoid(&mut self, x: &Self::Var) -> Result<Self::Var> {
        Ok(Rc::new(ops::sigmoid(x)))
    }

    fn add(&mut self, x: &Self::Var, y: &Self::Var) -> Result<Self::Var> {
        Ok(Rc::new(ops::add(x, y)?))
    }

    fn mul(&mut self, x: &Self::Var, y: &Self::Var) -> Result<Self::Var> {
        Ok(Rc::new(ops::mul(x, y)?))
    }

    fn axpy(&mut self, alpha: f64, x: &Self::Var, y: &Self::Var) -> Result<Self::Var> {
        Ok(Rc::new(ops::axpy(T::of(alpha), x, y)?))
    }

    fn concat(&mut self, parts: &[Self::Var]) -> Result<Self::Var> {
        let refs: Vec<&Tensor4<T>> = parts.iter().map(|p| p.as_ref()).collect();
        Ok(Rc::new(ops::concat_channels(&refs)?))
    }

    fn resize(&mut self, kind: ResizeKind, x: &Self::Var, scale: usize) -> Result<Self::Var> {
        Ok(Rc::new(ops::resize(kind, x, scale)?))
    }

    fn global_avg_pool(&mut self, x: &Self::Var) -> Result<Self::Var> {
        Ok(Rc::new(ops::global_avg_pool(x)))
    }

    fn channel_scale(&mut self, x: &Self::Var, scale: &Self::Var) -> Result<Self::Var> {
        Ok(Rc::new(ops::channel_scale(x, scale)?))
    }
}

/// Kind of a traced operation.
#[derive(Debug, Clone, PartialEq)]
pub enum TracedOp {
    Conv { name: String, spec: ConvSpec },
    Gelu,
    Sigmoid,
    Add,
    Mul,
    Axpy,
    Concat,
    Resize { kind: ResizeKind, scale: usize },
    GlobalAvgPool,
    ChannelScale,
}

impl TracedOp {
    pub fn label(&self) -> String {
        match self {
            TracedOp::Conv { name, .. } => name.clone(),
            TracedOp::Gelu => "gelu".into(),
            TracedOp::Sigmoid => "sigmoid".into(),
            TracedOp::Add => "add".into(),
            TracedOp::Mul => "mul".into(),
            TracedOp::Axpy => "axpy".into(),
            TracedOp::Concat => "concat".into(),
            TracedOp::Resize { kind, scale } => format!("resize_{kind:?}_x{scale}").to_lowercase(),
            TracedOp::GlobalAvgPool => "avgpool".into(),
            TracedOp::ChannelScale => "channel_scale".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub op: TracedOp,
    pub input_dims: [usize; 4],
    pub output_dims: [usize; 4],
}

/// Shape-only execution that records the operation sequence.
#[derive(Debug, Default)]
pub struct ShapeTrace {
    pub entries: Vec<TraceEntry>,
}

impl ShapeTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Convolution layers in execution order; errors on a reused name.
    pub fn conv_layers(&self) -> Result<Vec<(String, ConvSpec)>> {
        let mut seen = std::collections::HashSet::new();
        let mut layers = Vec::new();
        for e in &self.entries {
            if let TracedOp::Conv { name, spec } = &e.op {
                if !seen.insert(name.clone()) {
                    return Err(Error::Config(format!("layer name {name} used twice")));
                }
                layers.push((name.clone(), *spec));
            }
        }
        Ok(layers)
    }

    fn record(&mut self, op: TracedOp, input_dims: [usize; 4], output_dims: [usize; 4]) -> [usize; 4] {
        self.entries.push(TraceEntry { op, input_dims, output_dims });
        output_dims
    }

    fn same(&self, x: &[usize; 4], y: &[usize; 4], what: &str) -> Result<()> {
        if x != y {
            return Err(shape_err!("{what}: dims {x:?} vs {y:?}"));
        }
        Ok(())
    }
}

impl Graph for ShapeTrace {
    type Var = [usize; 4];

    fn dims(&self, v: &[usize; 4]) -> [usize; 4] {
        *v
    }

    fn conv(&mut self, name: &str, x: &[usize; 4], spec: ConvSpec) -> Result<[usize; 4]> {
        spec.validate()?;
        if x[1] != spec.in_channels {
            return Err(shape_err!(
                "conv2d {name}: input channel axis is {} but layer expects {}",
                x[1],
                spec.in_channels
            ));
        }
        let out = [x[0], spec.out_channels, x[2], x[3]];
        Ok(self.record(TracedOp::Conv { name: name.to_string(), spec }, *x, out))
    }

    fn gelu(&mut self, x: &[usize; 4]) -> Result<[usize; 4]> {
        Ok(self.record(TracedOp::Gelu, *x, *x))
    }

    fn sigmoid(&mut self, x: &[usize; 4]) -> Result<[usize; 4]> {
        Ok(self.record(TracedOp::Sigmoid, *x, *x))
    }

    fn add(&mut self, x: &[usize; 4], y: &[usize; 4]) -> Result<[usize; 4]> {
        self.same(x, y, "add")?;
        Ok(self.record(TracedOp::Add, *x, *x))
    }

    fn mul(&mut self, x: &[usize; 4], y: &[usize; 4]) -> Result<[usize; 4]> {
        self.same(x, y, "mul")?;
        Ok(self.record(TracedOp::Mul, *x, *x))
    }

    fn axpy(&mut self, _alpha: f64, x: &[usize; 4], y: &[usize; 4]) -> Result<[usize; 4]> {
        self.same(x, y, "axpy")?;
        Ok(self.record(TracedOp::Axpy, *x, *x))
    }

    fn concat(&mut self, parts: &[[usize; 4]]) -> Result<[usize; 4]> {
        let first = *parts.first().ok_or_else(|| shape_err!("concat_channels: no parts"))?;
        let mut out = first;
        out[1] = 0;
        for p in parts {
            if p[0] != first[0] || p[2] != first[2] || p[3] != first[3] {
                return Err(shape_err!("concat_channels: {p:?} vs {first:?}"));
            }
            out[1] += p[1];
        }
        Ok(self.record(TracedOp::Concat, out, out))
    }

    fn resize(&mut self, kind: ResizeKind, x: &[usize; 4], scale: usize) -> Result<[usize; 4]> {
        if scale == 0 {
            return Err(Error::Config("resize scale must be at least 1".into()));
        }
        let out = [x[0], x[1], x[2] * scale, x[3] * scale];
        Ok(self.record(TracedOp::Resize { kind, scale }, *x, out))
    }

    fn global_avg_pool(&mut self, x: &[usize; 4]) -> Result<[usize; 4]> {
        Ok(self.record(TracedOp::GlobalAvgPool, *x, [x[0], x[1], 1, 1]))
    }

    fn channel_scale(&mut self, x: &[usize; 4], scale: &[usize; 4]) -> Result<[usize; 4]> {
        if *scale != [x[0], x[1], 1, 1] {
            return Err(shape_err!("channel_scale: {scale:?} does not broadcast over {x:?}"));
        }
        Ok(self.record(TracedOp::ChannelScale, *x, *x))
    }
}
