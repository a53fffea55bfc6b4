//! L-layer graph convolutional network with an analytic backward pass.
//!
//! Layer l computes `h_l = f(Â (h_{l-1} W_l + b_l))`. Hidden layers use
//! ReLU; the output layer is linear unless [`Activation::Relu`] is selected.
//! The network output is returned topic-major (K × V), i.e. `h_Lᵀ`.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{FeatureMatrix, NormalizedAdjacency};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Linear,
    Relu,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Linear => x,
            Activation::Relu => x.max(T::zero()),
        }
    }

    /// Derivative at `x`; ReLU uses 0 at exactly 0.
    #[inline]
    fn derivative<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Linear => T::one(),
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnLayer<T> {
    /// dim_{l-1} × dim_l
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams<T> {
    pub layers: Vec<GcnLayer<T>>,
    pub output_activation: Activation,
}

impl<T: Scalar> GcnParams<T> {
    /// Gaussian weights with standard deviation `init_std`, zero biases.
    /// `dims` lists every layer width from the input (M) to the output (K).
    pub fn init<R: Rng + ?Sized>(dims: &[usize], init_std: f64, rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Shape(format!("invalid GCN layer widths {dims:?}")));
        }
        let normal = Normal::new(0.0, init_std)
            .map_err(|e| Error::Invalid(format!("GCN init std {init_std}: {e}")))?;
        let layers = dims
            .windows(2)
            .map(|w| GcnLayer {
                weight: Array2::from_shape_simple_fn((w[0], w[1]), || T::lit(normal.sample(rng))),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Ok(Self {
            layers,
            output_activation: Activation::Linear,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| GcnLayer {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
            output_activation: self.output_activation,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.ncols())
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(|l| l.weight.ncols()));
        d
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Shape("GCN needs at least one layer".into()));
        }
        for (l, pair) in self.layers.windows(2).enumerate() {
            if pair[0].weight.ncols() != pair[1].weight.nrows() {
                return Err(Error::Shape(format!(
                    "layer {} outputs {} columns but layer {} expects {}",
                    l + 1,
                    pair[0].weight.ncols(),
                    l + 2,
                    pair[1].weight.nrows()
                )));
            }
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.bias.len() != layer.weight.ncols() {
                return Err(Error::Shape(format!("layer {} bias length mismatch", l + 1)));
            }
        }
        Ok(())
    }

    /// Squared Frobenius distance over every weight and bias.
    pub fn sq_distance(&self, other: &Self) -> T {
        self.layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| {
                let dw: T = a.weight.iter().zip(&b.weight).map(|(&x, &y)| (x - y) * (x - y)).sum();
                let db: T = a.bias.iter().zip(&b.bias).map(|(&x, &y)| (x - y) * (x - y)).sum();
                dw + db
            })
            .sum()
    }

    /// Flat views over every tensor, weights then bias per layer.
    pub fn tensors(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    /// FNV-1a hash over every parameter bit pattern; ties a forward cache to
    /// the parameters that produced it.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in self.tensors() {
            for &v in t {
                for b in v.to_f64_lossless().to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output_activation
        } else {
            Activation::Relu
        }
    }
}

/// Intermediate values of one forward pass, consumed by [`gcn_backward`].
#[derive(Debug, Clone)]
pub struct GcnCache<'a, T> {
    input: &'a FeatureMatrix<T>,
    /// h_1 … h_L, node-major.
    hidden: Vec<Array2<T>>,
    /// Â (h_{l-1} W_l + b_l) before the activation.
    pre: Vec<Array2<T>>,
    fingerprint: u64,
}

impl<T: Scalar> GcnCache<'_, T> {
    pub fn input(&self) -> &FeatureMatrix<T> {
        self.input
    }

    /// h_l for l = 1..=L.
    pub fn layer_output(&self, l: usize) -> &Array2<T> {
        &self.hidden[l - 1]
    }

    pub fn pre_activation(&self, l: usize) -> &Array2<T> {
        &self.pre[l - 1]
    }

    /// Network output h (K × V) recorded by this pass.
    pub fn output(&self) -> ndarray::ArrayView2<'_, T> {
        self.hidden.last().expect("at least one layer").t()
    }
}

fn check_finite<T: Scalar>(m: &Array2<T>, layer: usize) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("GCN layer {layer} produced a non-finite value")))
    }
}

/// Forward pass. Returns `h = h_Lᵀ` (K × V) and the activation cache.
pub fn gcn_forward<'a, T: Scalar>(
    x: &'a FeatureMatrix<T>,
    adj: &NormalizedAdjacency<T>,
    params: &GcnParams<T>,
) -> Result<(Array2<T>, GcnCache<'a, T>)> {
    params.validate()?;
    if x.nrows() != adj.dim() {
        return Err(Error::Shape(format!(
            "features have {} rows, adjacency is {}x{}",
            x.nrows(),
            adj.dim(),
            adj.dim()
        )));
    }
    if x.ncols() != params.input_dim() {
        return Err(Error::Shape(format!(
            "features have {} columns, first layer expects {}",
            x.ncols(),
            params.input_dim()
        )));
    }

    let mut hidden: Vec<Array2<T>> = Vec::with_capacity(params.layers.len());
    let mut pre = Vec::with_capacity(params.layers.len());
    for (l, layer) in params.layers.iter().enumerate() {
        let mut z = match hidden.last() {
            None => x.matmul(&layer.weight),
            Some(h) => h.dot(&layer.weight),
        };
        z += &layer.bias;
        let p = adj.matmul(&z)?;
        let act = params.activation(l);
        let h = p.mapv(|v| act.apply(v));
        check_finite(&h, l + 1)?;
        pre.push(p);
        hidden.push(h);
    }
    let out = hidden.last().expect("at least one layer").t().to_owned();
    let cache = GcnCache {
        input: x,
        hidden,
        pre,
        fingerprint: params.fingerprint(),
    };
    Ok((out, cache))
}

/// Reverse pass for any scalar objective with gradient `grad_h` (K × V) with
/// respect to the forward output. Uses Âᵀ = Â.
pub fn gcn_backward<T: Scalar>(
    grad_h: &Array2<T>,
    adj: &NormalizedAdjacency<T>,
    params: &GcnParams<T>,
    cache: &GcnCache<'_, T>,
) -> Result<GcnParams<T>> {
    let n_layers = params.layers.len();
    if cache.hidden.len() != n_layers
        || cache
            .hidden
            .iter()
            .zip(&params.layers)
            .any(|(h, l)| h.ncols() != l.weight.ncols() || h.nrows() != adj.dim())
    {
        return Err(Error::Shape("GCN cache does not match parameters".into()));
    }
    if cache.fingerprint != params.fingerprint() {
        return Err(Error::Invalid("stale GCN cache: parameters changed since the forward pass".into()));
    }
    let out_dim = params.output_dim();
    if grad_h.dim() != (out_dim, adj.dim()) {
        return Err(Error::Shape(format!(
            "output gradient is {:?}, expected ({out_dim}, {})",
            grad_h.dim(),
            adj.dim()
        )));
    }

    let mut grads = params.zeros_like();
    let mut upstream: Array2<T> = grad_h.t().to_owned();
    for l in (0..n_layers).rev() {
        let act = params.activation(l);
        let pre = &cache.pre[l];
        let mut d_pre = upstream;
        ndarray::Zip::from(&mut d_pre)
            .and(pre)
            .for_each(|g, &p| *g *= act.derivative(p));
        let d_z = adj.matmul(&d_pre)?;
        grads.layers[l].bias = d_z.sum_axis(Axis(0));
        grads.layers[l].weight = if l == 0 {
            cache.input.t_matmul(&d_z)
        } else {
            cache.hidden[l - 1].t().dot(&d_z)
        };
        upstream = if l == 0 {
            Array2::zeros((0, 0))
        } else {
            d_z.dot(&params.layers[l].weight.t())
        };
    }
    Ok(grads)
}
