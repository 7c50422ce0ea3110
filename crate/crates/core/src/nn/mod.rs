//! Minimal neural-network kit with exact analytic gradients for the
//! federated local model: 1-D convolution -> LSTM -> dropout -> dense
//! sigmoid head, binary cross-entropy with L2 weight decay, Adam.
//!
//! There is no computation graph; the layer chain is fixed by a
//! [`LayerSpec`] list and forward/backward walk it directly. Everything
//! runs in double precision.

mod io;
mod layers;
mod train;

pub use io::{decode_weights, encode_weights, read_weights, write_weights};
pub use layers::{backward, forward, ForwardCache, Mode};
pub use train::{
    adam_step, fit, fit_from, loss_bce, predict, AdamState, EpochStats, FitOutcome, TrainConfig,
};

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
}

impl Activation {
    pub(crate) fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => crate::numeric::sigmoid(z),
        }
    }

    /// d activation / d pre-activation, evaluated from the pre-activation.
    pub(crate) fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = crate::numeric::sigmoid(z);
                s * (1.0 - s)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "relu" => Ok(Self::Relu),
            "sigmoid" => Ok(Self::Sigmoid),
            other => Err(Error::Argument(format!("unknown activation '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    Conv1d {
        filters: usize,
        kernel_size: usize,
        stride: usize,
        activation: Activation,
    },
    Lstm {
        units: usize,
    },
    Dense {
        units: usize,
        activation: Activation,
    },
    Dropout {
        rate: f64,
    },
}

/// The default local-model architecture: conv1d(64, k=3) -> lstm(64) ->
/// dropout(0.3) -> dense(1, sigmoid).
pub fn default_architecture() -> Vec<LayerSpec> {
    architecture(64, 3, 64, 0.3)
}

pub fn architecture(filters: usize, kernel_size: usize, units: usize, dropout: f64) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv1d {
            filters,
            kernel_size,
            stride: 1,
            activation: Activation::Relu,
        },
        LayerSpec::Lstm { units },
        LayerSpec::Dropout { rate: dropout },
        LayerSpec::Dense {
            units: 1,
            activation: Activation::Sigmoid,
        },
    ]
}

/// Value shape flowing between layers: a time sequence or a flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueShape {
    Seq { steps: usize, dim: usize },
    Flat { dim: usize },
}

impl ValueShape {
    pub fn numel(&self) -> usize {
        match self {
            ValueShape::Seq { steps, dim } => steps * dim,
            ValueShape::Flat { dim } => *dim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum InitKind {
    Glorot { fan_in: usize, fan_out: usize },
    Zeros,
    /// Zeros with the forget-gate block set to 1.
    LstmBias { units: usize },
}

/// Planned parameter: canonical name, shape, and initializer.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ParamMeta {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: InitKind,
}

/// Resolves the layer chain against an input shape, producing the canonical
/// parameter layout and per-layer input/output shapes.
pub(crate) fn plan(
    specs: &[LayerSpec],
    input_shape: (usize, usize),
) -> Result<(Vec<ParamMeta>, Vec<ValueShape>)> {
    if specs.is_empty() {
        return Err(Error::Shape("layer list is empty".into()));
    }
    let (steps, channels) = input_shape;
    if steps == 0 || channels == 0 {
        return Err(Error::Shape(format!(
            "input shape ({steps}, {channels}) must be positive"
        )));
    }
    let mut shape = ValueShape::Seq {
        steps,
        dim: channels,
    };
    let mut metas = Vec::new();
    let mut shapes = Vec::with_capacity(specs.len() + 1);
    shapes.push(shape);
    for (idx, spec) in specs.iter().enumerate() {
        match *spec {
            LayerSpec::Conv1d {
                filters,
                kernel_size,
                stride,
                activation: _,
            } => {
                if filters == 0 || kernel_size == 0 || stride == 0 {
                    return Err(Error::Shape(format!("layer {idx}: conv sizes must be positive")));
                }
                let ValueShape::Seq { steps, dim } = shape else {
                    return Err(Error::Shape(format!(
                        "layer {idx}: conv1d needs a sequence input"
                    )));
                };
                if steps < kernel_size {
                    return Err(Error::Shape(format!(
                        "layer {idx}: kernel {kernel_size} exceeds {steps} time steps"
                    )));
                }
                metas.push(ParamMeta {
                    name: format!("conv1d_{idx}.kernel"),
                    shape: vec![kernel_size, dim, filters],
                    init: InitKind::Glorot {
                        fan_in: kernel_size * dim,
                        fan_out: kernel_size * filters,
                    },
                });
                metas.push(ParamMeta {
                    name: format!("conv1d_{idx}.bias"),
                    shape: vec![filters],
                    init: InitKind::Zeros,
                });
                shape = ValueShape::Seq {
                    steps: (steps - kernel_size) / stride + 1,
                    dim: filters,
                };
            }
            LayerSpec::Lstm { units } => {
                if units == 0 {
                    return Err(Error::Shape(format!("layer {idx}: lstm units must be positive")));
                }
                let ValueShape::Seq { dim, .. } = shape else {
                    return Err(Error::Shape(format!(
                        "layer {idx}: lstm needs a sequence input"
                    )));
                };
                metas.push(ParamMeta {
                    name: format!("lstm_{idx}.kernel"),
                    shape: vec![dim, 4 * units],
                    init: InitKind::Glorot {
                        fan_in: dim,
                        fan_out: 4 * units,
                    },
                });
                metas.push(ParamMeta {
                    name: format!("lstm_{idx}.recurrent"),
                    shape: vec![units, 4 * units],
                    init: InitKind::Glorot {
                        fan_in: units,
                        fan_out: 4 * units,
                    },
                });
                metas.push(ParamMeta {
                    name: format!("lstm_{idx}.bias"),
                    shape: vec![4 * units],
                    init: InitKind::LstmBias { units },
                });
                shape = ValueShape::Flat { dim: units };
            }
            LayerSpec::Dense { units, activation: _ } => {
                if units == 0 {
                    return Err(Error::Shape(format!("layer {idx}: dense units must be positive")));
                }
                let in_dim = shape.numel();
                metas.push(ParamMeta {
                    name: format!("dense_{idx}.kernel"),
                    shape: vec![in_dim, units],
                    init: InitKind::Glorot {
                        fan_in: in_dim,
                        fan_out: units,
                    },
                });
                metas.push(ParamMeta {
                    name: format!("dense_{idx}.bias"),
                    shape: vec![units],
                    init: InitKind::Zeros,
                });
                shape = ValueShape::Flat { dim: units };
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::Shape(format!(
                        "layer {idx}: dropout rate {rate} must be in [0,1)"
                    )));
                }
            }
        }
        shapes.push(shape);
    }
    match specs.last() {
        Some(LayerSpec::Dense {
            units: 1,
            activation: Activation::Sigmoid,
        }) => {}
        _ => {
            return Err(Error::Shape(
                "network must end with dense(1, sigmoid)".into(),
            ))
        }
    }
    Ok((metas, shapes))
}

/// One named parameter tensor, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Param {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    /// Matrix parameters (kernels and recurrent weights) carry L2 decay;
    /// biases do not.
    pub fn is_matrix(&self) -> bool {
        self.shape.len() > 1
    }
}

/// Ordered named parameter arrays; the layout is fully determined by the
/// layer specs and input shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub params: Vec<Param>,
}

impl ModelWeights {
    pub fn zeros_like(&self) -> ModelWeights {
        ModelWeights {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    values: vec![0.0; p.values.len()],
                })
                .collect(),
        }
    }

    pub fn same_layout(&self, other: &ModelWeights) -> bool {
        self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn all_finite(&self) -> bool {
        self.params
            .iter()
            .all(|p| p.values.iter().all(|v| v.is_finite()))
    }

    /// Sum of squared matrix-parameter values (the L2 term's basis).
    pub fn matrix_sq_norm(&self) -> f64 {
        self.params
            .iter()
            .filter(|p| p.is_matrix())
            .flat_map(|p| p.values.iter())
            .map(|v| v * v)
            .sum()
    }
}

/// Glorot-uniform initialization for matrices, zero biases, and an LSTM
/// forget-gate bias of 1. Deterministic per seed.
pub fn init_weights(
    specs: &[LayerSpec],
    input_shape: (usize, usize),
    seed: u64,
) -> Result<ModelWeights> {
    let (metas, _) = plan(specs, input_shape)?;
    let mut rng = rng_from(seed);
    let params = metas
        .into_iter()
        .map(|meta| {
            let count: usize = meta.shape.iter().product();
            let values = match meta.init {
                InitKind::Glorot { fan_in, fan_out } => {
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    (0..count).map(|_| rng.gen_range(-limit..limit)).collect()
                }
                InitKind::Zeros => vec![0.0; count],
                InitKind::LstmBias { units } => {
                    let mut values = vec![0.0; count];
                    for v in &mut values[units..2 * units] {
                        *v = 1.0;
                    }
                    values
                }
            };
            Param {
                name: meta.name,
                shape: meta.shape,
                values,
            }
        })
        .collect();
    Ok(ModelWeights { params })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_init_shapes_and_zero_bias() {
        let specs = [LayerSpec::Dense {
            units: 1,
            activation: Activation::Sigmoid,
        }];
        let weights = init_weights(&specs, (1, 4), 0).unwrap();
        assert_eq!(weights.params.len(), 2);
        assert_eq!(weights.params[0].shape, vec![4, 1]);
        assert_eq!(weights.params[1].shape, vec![1]);
        assert_eq!(weights.params[1].values, vec![0.0]);
    }

    #[test]
    fn init_is_deterministic() {
        let specs = default_architecture();
        let a = init_weights(&specs, (16, 7), 42).unwrap();
        let b = init_weights(&specs, (16, 7), 42).unwrap();
        assert_eq!(a, b);
        let c = init_weights(&specs, (16, 7), 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn lstm_parameter_count_closed_form() {
        let specs = [
            LayerSpec::Lstm { units: 3 },
            LayerSpec::Dense {
                units: 1,
                activation: Activation::Sigmoid,
            },
        ];
        let weights = init_weights(&specs, (5, 2), 1).unwrap();
        let lstm_count: usize = weights
            .params
            .iter()
            .filter(|p| p.name.starts_with("lstm"))
            .map(|p| p.numel())
            .sum();
        // 4 * (U*(D+U) + U) with U=3, D=2
        assert_eq!(lstm_count, 72);
    }

    #[test]
    fn forget_gate_bias_is_one() {
        let specs = [
            LayerSpec::Lstm { units: 4 },
            LayerSpec::Dense {
                units: 1,
                activation: Activation::Sigmoid,
            },
        ];
        let weights = init_weights(&specs, (3, 2), 9).unwrap();
        let bias = weights.param("lstm_0.bias").unwrap();
        assert_eq!(&bias.values[0..4], &[0.0; 4]);
        assert_eq!(&bias.values[4..8], &[1.0; 4]);
        assert_eq!(&bias.values[8..16], &[0.0; 8]);
    }

    #[test]
    fn shape_mismatch_between_layers_is_error() {
        // kernel longer than the input sequence
        let specs = [
            LayerSpec::Conv1d {
                filters: 2,
                kernel_size: 9,
                stride: 1,
                activation: Activation::Relu,
            },
            LayerSpec::Dense {
                units: 1,
                activation: Activation::Sigmoid,
            },
        ];
        assert!(matches!(
            init_weights(&specs, (4, 3), 0),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn network_must_end_with_sigmoid_unit() {
        let specs = [LayerSpec::Dense {
            units: 2,
            activation: Activation::Sigmoid,
        }];
        assert!(init_weights(&specs, (1, 4), 0).is_err());
        let specs = [LayerSpec::Dense {
            units: 1,
            activation: Activation::Relu,
        }];
        assert!(init_weights(&specs, (1, 4), 0).is_err());
    }

    #[test]
    fn conv_output_length_formula() {
        let specs = [
            LayerSpec::Conv1d {
                filters: 5,
                kernel_size: 3,
                stride: 2,
                activation: Activation::Relu,
            },
            LayerSpec::Lstm { units: 2 },
            LayerSpec::Dense {
                units: 1,
                activation: Activation::Sigmoid,
            },
        ];
        let (_, shapes) = plan(&specs, (10, 4)).unwrap();
        assert_eq!(shapes[1], ValueShape::Seq { steps: 4, dim: 5 });
    }
}
