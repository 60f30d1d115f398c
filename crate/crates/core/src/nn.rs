//! Dense ReLU networks over a flat parameter vector.
//!
//! Every learned function in the crate (point, cluster, unassigned and row
//! encoders, logit heads, the permanent head) is one of these. Inputs are
//! batched row-major: `rows × in_width` in, `rows × out_width` out. The
//! parameter layout is fixed per layer: weights `out × in` row-major, then
//! the `out` biases.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layer_widths: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

impl NetworkSpec {
    pub fn new(layer_widths: impl Into<Vec<usize>>) -> Result<Self> {
        let spec = NetworkSpec {
            layer_widths: layer_widths.into(),
            activation: Activation::Relu,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(contract(format!(
                "network needs at least two layer widths, got {:?}",
                self.layer_widths
            )));
        }
        if let Some(pos) = self.layer_widths.iter().position(|&w| w == 0) {
            return Err(contract(format!("layer {pos} has zero width")));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().expect("validated spec")
    }

    pub fn num_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    /// Σ_l (w_l·w_{l+1} + w_{l+1}).
    pub fn param_count(&self) -> usize {
        self.layer_widths
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// Offsets of (weights, biases) for each layer.
    fn layer_offsets(&self) -> Vec<(usize, usize)> {
        let mut offsets = Vec::with_capacity(self.num_layers());
        let mut at = 0;
        for w in self.layer_widths.windows(2) {
            let bias = at + w[0] * w[1];
            offsets.push((at, bias));
            at = bias + w[1];
        }
        offsets
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterStore(pub Vec<f64>);

impl ParameterStore {
    pub fn zeros(len: usize) -> Self {
        ParameterStore(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Gradient buffer shadowing a [`ParameterStore`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradientAccumulator(pub Vec<f64>);

impl GradientAccumulator {
    pub fn zeros(len: usize) -> Self {
        GradientAccumulator(vec![0.0; len])
    }

    pub fn reset(&mut self) {
        self.0.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn add_scaled(&mut self, other: &GradientAccumulator, scale: f64) {
        debug_assert_eq!(self.0.len(), other.0.len());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.0.iter_mut().for_each(|g| *g *= s);
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Activations kept from one batched forward pass, consumed by
/// [`Network::backward_traced`].
#[derive(Debug, Clone)]
pub struct Trace {
    rows: usize,
    /// `acts[0]` is the input; `acts[l]` the post-ReLU output of hidden layer `l`.
    acts: Vec<Vec<f64>>,
}

impl Trace {
    pub fn rows(&self) -> usize {
        self.rows
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    params: ParameterStore,
}

impl Network {
    pub fn new(spec: NetworkSpec, params: ParameterStore) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.param_count() {
            return Err(contract(format!(
                "parameter store has {} values, spec {:?} needs {}",
                params.len(),
                spec.layer_widths,
                spec.param_count()
            )));
        }
        Ok(Network { spec, params })
    }

    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        let n = spec.param_count();
        Network::new(spec, ParameterStore::zeros(n))
    }

    /// He-scaled normal weights (variance 2/fan_in), zero biases.
    pub fn init<R: Rng + ?Sized>(spec: NetworkSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let params = init_params(&spec, rng);
        Network::new(spec, params)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParameterStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        self.params.as_mut_slice()
    }

    pub fn input_width(&self) -> usize {
        self.spec.input_width()
    }

    pub fn output_width(&self) -> usize {
        self.spec.output_width()
    }

    pub fn zero_grad(&self) -> GradientAccumulator {
        GradientAccumulator::zeros(self.params.len())
    }

    fn check_input(&self, input: &[f64], rows: usize) -> Result<()> {
        let w = self.input_width();
        if input.len() != rows * w {
            return Err(contract(format!(
                "layer 0 expects {rows} rows of width {w} ({} values), got {}",
                rows * w,
                input.len()
            )));
        }
        Ok(())
    }

    /// Single input vector.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.forward_batch(input, 1)
    }

    pub fn forward_batch(&self, input: &[f64], rows: usize) -> Result<Vec<f64>> {
        self.check_input(input, rows)?;
        Ok(self.run(input, rows, None))
    }

    pub fn forward_traced(&self, input: &[f64], rows: usize) -> Result<(Vec<f64>, Trace)> {
        self.check_input(input, rows)?;
        let mut acts = Vec::with_capacity(self.spec.num_layers());
        let out = self.run(input, rows, Some(&mut acts));
        Ok((out, Trace { rows, acts }))
    }

    fn run(&self, input: &[f64], rows: usize, mut keep: Option<&mut Vec<Vec<f64>>>) -> Vec<f64> {
        let widths = &self.spec.layer_widths;
        let p = self.params.as_slice();
        let layers = self.spec.num_layers();
        let mut cur = input.to_vec();
        for (l, &(w_at, b_at)) in self.spec.layer_offsets().iter().enumerate() {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let bias = &p[b_at..b_at + fan_out];
            let mut next = Vec::with_capacity(rows * fan_out);
            for _ in 0..rows {
                next.extend_from_slice(bias);
            }
            // next += cur · Wᵀ
            gemm(
                rows,
                fan_in,
                fan_out,
                &cur,
                (fan_in, 1),
                &p[w_at..b_at],
                (1, fan_in),
                1.0,
                &mut next,
                (fan_out, 1),
            );
            if l + 1 < layers {
                match self.spec.activation {
                    Activation::Relu => next.iter_mut().for_each(|v| *v = v.max(0.0)),
                }
            }
            let prev = std::mem::replace(&mut cur, next);
            if let Some(k) = keep.as_deref_mut() {
                k.push(prev);
            }
        }
        cur
    }

    /// Reverse pass. Adds ∂(cotangent·output)/∂params into `grad` and, when
    /// `want_input` is set, returns ∂(cotangent·output)/∂input.
    pub fn backward_traced(
        &self,
        trace: &Trace,
        cotangent: &[f64],
        grad: &mut GradientAccumulator,
        want_input: bool,
    ) -> Result<Option<Vec<f64>>> {
        let rows = trace.rows;
        let out_w = self.output_width();
        if cotangent.len() != rows * out_w {
            return Err(contract(format!(
                "layer {} expects a cotangent of {} values, got {}",
                self.spec.num_layers(),
                rows * out_w,
                cotangent.len()
            )));
        }
        if grad.0.len() != self.params.len() {
            return Err(contract("gradient accumulator length mismatch"));
        }
        let widths = &self.spec.layer_widths;
        let p = self.params.as_slice();
        let offsets = self.spec.layer_offsets();
        let mut delta = cotangent.to_vec();
        for l in (0..self.spec.num_layers()).rev() {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let (w_at, b_at) = offsets[l];
            let a_in = &trace.acts[l];
            {
                let g = &mut grad.0;
                // dW += deltaᵀ · a_in
                let (gw, gb) = g[w_at..b_at + fan_out].split_at_mut(b_at - w_at);
                gemm(
                    fan_out,
                    rows,
                    fan_in,
                    &delta,
                    (1, fan_out),
                    a_in,
                    (fan_in, 1),
                    1.0,
                    gw,
                    (fan_in, 1),
                );
                for r in 0..rows {
                    for (b, d) in gb.iter_mut().zip(&delta[r * fan_out..(r + 1) * fan_out]) {
                        *b += d;
                    }
                }
            }
            if l == 0 && !want_input {
                return Ok(None);
            }
            // d a_in = delta · W
            let mut d_in = vec![0.0; rows * fan_in];
            gemm(
                rows,
                fan_out,
                fan_in,
                &delta,
                (fan_out, 1),
                &p[w_at..b_at],
                (fan_in, 1),
                0.0,
                &mut d_in,
                (fan_in, 1),
            );
            if l > 0 {
                match self.spec.activation {
                    Activation::Relu => {
                        for (d, a) in d_in.iter_mut().zip(a_in) {
                            if *a <= 0.0 {
                                *d = 0.0;
                            }
                        }
                    }
                }
            }
            delta = d_in;
        }
        Ok(Some(delta))
    }

    /// Recomputes the forward activations, then runs the reverse pass.
    /// Returns (parameter gradient, input gradient) for a single input.
    pub fn backward(
        &self,
        input: &[f64],
        cotangent: &[f64],
    ) -> Result<(GradientAccumulator, Vec<f64>)> {
        let (_, trace) = self.forward_traced(input, 1)?;
        let mut grad = self.zero_grad();
        let d_in = self
            .backward_traced(&trace, cotangent, &mut grad, true)?
            .expect("input gradient requested");
        Ok((grad, d_in))
    }
}

/// He-style initialization: weights ~ N(0, 2/fan_in), biases zero.
pub fn init_params<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> ParameterStore {
    let mut values = Vec::with_capacity(spec.param_count());
    for w in spec.layer_widths.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
        values.extend((0..fan_in * fan_out).map(|_| normal.sample(rng)));
        values.extend(std::iter::repeat_n(0.0, fan_out));
    }
    ParameterStore(values)
}

/// `c = a·b + beta·c` with explicit (row, col) strides. `a` is m×k, `b` is k×n.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let span = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs + 1;
    assert!(c.len() >= span(m, n, rsc, csc), "gemm: output too short");
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                c[i * rsc + j * csc] *= beta;
            }
        }
        return;
    }
    assert!(a.len() >= span(m, k, rsa, csa), "gemm: lhs too short");
    assert!(b.len() >= span(k, n, rsb, csb), "gemm: rhs too short");
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}
