use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Negative slope of the leaky ReLU inside attention logits.
pub const LEAKY_SLOPE: f64 = 0.2;
pub const NORM_EPS: f64 = 1e-5;
pub const NORM_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Gcn,
    Gat,
}

impl Arch {
    pub fn as_str(self) -> &'static str {
        match self {
            Arch::Gcn => "gcn",
            Arch::Gat => "gat",
        }
    }
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(Arch::Gcn),
            "gat" => Ok(Arch::Gat),
            other => Err(Error::InvalidArgument(format!("unknown architecture {other:?}"))),
        }
    }
}

/// Feature standardization with learned scale and shift. Training uses the
/// statistics of the current node set; inference uses the running ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Norm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl Norm {
    fn identity(width: usize) -> Self {
        Norm {
            gamma: vec![1.0; width],
            beta: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
        }
    }
}

/// One message-passing layer. `weight` is `d_in x d_out`; for attention
/// layers `attention` holds the centre half followed by the neighbour half.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Vec<f64>,
    pub attention: Option<Vec<f64>>,
    pub norm: Option<Norm>,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub(crate) fn attention_halves(&self) -> Option<(&[f64], &[f64])> {
        self.attention.as_ref().map(|a| a.split_at(self.out_dim()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnnModel {
    arch: Arch,
    dims: Vec<usize>,
    layers: Vec<Layer>,
}

impl GnnModel {
    /// Glorot-uniform initialized model over the dimension chain `dims`
    /// (input, hidden..., output).
    pub fn new(arch: Arch, dims: &[usize], with_norm: bool, seed: u64) -> Result<Self> {
        check_dims(dims)?;
        let mut rng = seed::rng(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (din, dout) = (w[0], w[1]);
                let limit = (6.0 / (din + dout) as f64).sqrt();
                let weight =
                    Array2::from_shape_fn((din, dout), |_| rng.random_range(-limit..limit));
                let attention = (arch == Arch::Gat).then(|| {
                    let limit = (6.0 / (dout + 1) as f64).sqrt();
                    (0..2 * dout).map(|_| rng.random_range(-limit..limit)).collect()
                });
                Layer {
                    weight,
                    bias: vec![0.0; dout],
                    attention,
                    norm: with_norm.then(|| Norm::identity(dout)),
                }
            })
            .collect();
        Ok(GnnModel {
            arch,
            dims: dims.to_vec(),
            layers,
        })
    }

    /// Model with every parameter set to zero (norm layers stay identity).
    pub fn zeroed(arch: Arch, dims: &[usize], with_norm: bool) -> Result<Self> {
        let mut m = Self::new(arch, dims, with_norm, 0)?;
        let zeros = vec![0.0; m.num_params()];
        m.set_flat_params(&zeros)?;
        if with_norm {
            for l in &mut m.layers {
                if let Some(n) = &mut l.norm {
                    n.gamma.iter_mut().for_each(|g| *g = 1.0);
                }
            }
        }
        Ok(m)
    }

    pub fn from_layers(arch: Arch, layers: Vec<Layer>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::InvalidArgument("model needs at least one layer".into()))?;
        let mut dims = vec![first.in_dim()];
        for (i, l) in layers.iter().enumerate() {
            let expected = *dims.last().unwrap();
            if l.in_dim() != expected {
                return Err(Error::Dimension {
                    context: "layer input",
                    expected,
                    found: l.in_dim(),
                });
            }
            let d = l.out_dim();
            if l.bias.len() != d {
                return Err(Error::Dimension {
                    context: "bias",
                    expected: d,
                    found: l.bias.len(),
                });
            }
            match (arch, &l.attention) {
                (Arch::Gat, Some(a)) if a.len() == 2 * d => {}
                (Arch::Gat, Some(a)) => {
                    return Err(Error::Dimension {
                        context: "attention vector",
                        expected: 2 * d,
                        found: a.len(),
                    })
                }
                (Arch::Gat, None) => {
                    return Err(Error::Format(format!("layer {i} lacks attention parameters")))
                }
                (Arch::Gcn, Some(_)) => {
                    return Err(Error::Format(format!("GCN layer {i} has attention parameters")))
                }
                (Arch::Gcn, None) => {}
            }
            if let Some(n) = &l.norm {
                for v in [&n.gamma, &n.beta, &n.running_mean, &n.running_var] {
                    if v.len() != d {
                        return Err(Error::Dimension {
                            context: "norm parameters",
                            expected: d,
                            found: v.len(),
                        });
                    }
                }
            }
            dims.push(d);
        }
        let model = GnnModel { arch, dims, layers };
        if !model.is_finite() {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(model)
    }

    pub fn arch(&self) -> Arch {
        self.arch
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn has_norm(&self) -> bool {
        self.layers.iter().any(|l| l.norm.is_some())
    }

    /// Number of trainable scalars (running statistics excluded).
    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| {
                l.weight.len()
                    + l.bias.len()
                    + l.attention.as_ref().map_or(0, Vec::len)
                    + l.norm.as_ref().map_or(0, |n| 2 * n.gamma.len())
            })
            .sum()
    }

    /// Trainable parameters in a fixed order: per layer weight (row-major),
    /// bias, attention, norm scale, norm shift.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(&l.bias);
            if let Some(a) = &l.attention {
                out.extend(a);
            }
            if let Some(n) = &l.norm {
                out.extend(&n.gamma);
                out.extend(&n.beta);
            }
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::Dimension {
                context: "flat parameters",
                expected: self.num_params(),
                found: params.len(),
            });
        }
        let mut it = params.iter().copied();
        let mut fill = |dst: &mut dyn Iterator<Item = &mut f64>| {
            for d in dst {
                *d = it.next().unwrap();
            }
        };
        for l in &mut self.layers {
            fill(&mut l.weight.iter_mut());
            fill(&mut l.bias.iter_mut());
            if let Some(a) = &mut l.attention {
                fill(&mut a.iter_mut());
            }
            if let Some(n) = &mut l.norm {
                fill(&mut n.gamma.iter_mut());
                fill(&mut n.beta.iter_mut());
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.flat_params().iter().all(|v| v.is_finite())
            && self.layers.iter().all(|l| {
                l.norm.as_ref().is_none_or(|n| {
                    n.running_mean.iter().chain(&n.running_var).all(|v| v.is_finite())
                })
            })
    }

    pub(crate) fn check_arch(&self, expected: Arch) -> Result<()> {
        if self.arch == expected {
            Ok(())
        } else {
            Err(Error::Architecture {
                expected: expected.to_string(),
                found: self.arch.to_string(),
            })
        }
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::InvalidArgument(
            "dimension chain needs an input and an output".into(),
        ));
    }
    if dims.contains(&0) {
        return Err(Error::InvalidArgument("dimensions must be positive".into()));
    }
    Ok(())
}

/// Trainable parameter count of a model with the given chain.
pub fn param_count(arch: Arch, dims: &[usize], with_norm: bool) -> usize {
    dims.windows(2)
        .map(|w| {
            let (din, dout) = (w[0], w[1]);
            din * dout
                + dout
                + if arch == Arch::Gat { 2 * dout } else { 0 }
                + if with_norm { 2 * dout } else { 0 }
        })
        .sum()
}
