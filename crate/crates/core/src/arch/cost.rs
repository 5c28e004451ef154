//! Analytic parameter and FLOP accounting.
//!
//! One multiply-accumulate counts as one FLOP. Batch norm contributes two
//! parameters per channel and no FLOPs; pooling and activations are free.

use std::iter::Sum;
use std::ops::{Add, AddAssign};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::{ArchError, LayerKind, LayerSpec};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
pub struct Cost {
    pub params: u64,
    pub flops: u64,
}

impl Add for Cost {
    type Output = Cost;

    fn add(self, rhs: Cost) -> Cost {
        Cost {
            params: self.params + rhs.params,
            flops: self.flops + rhs.flops,
        }
    }
}

impl AddAssign for Cost {
    fn add_assign(&mut self, rhs: Cost) {
        *self = *self + rhs;
    }
}

impl Sum for Cost {
    fn sum<I: Iterator<Item = Cost>>(iter: I) -> Cost {
        iter.fold(Cost::default(), Add::add)
    }
}

pub fn layer_cost(layer: &LayerSpec) -> Cost {
    let cin = u64::from(layer.in_channels);
    let cout = u64::from(layer.out_channels);
    let (oh, ow) = layer.output_size();
    let spatial = u64::from(oh) * u64::from(ow);
    match layer.kind {
        LayerKind::Conv => {
            let weights = cin * cout * u64::from(layer.kernel_h) * u64::from(layer.kernel_w);
            Cost {
                params: weights + if layer.has_bias { cout } else { 0 },
                flops: weights * spatial,
            }
        }
        LayerKind::BatchNorm => Cost {
            params: 2 * cout,
            flops: 0,
        },
        LayerKind::Pool => Cost::default(),
        LayerKind::FullyConnected => Cost {
            params: cin * cout + if layer.has_bias { cout } else { 0 },
            flops: cin * cout,
        },
        LayerKind::AddShortcut if layer.is_projection() => {
            let weights = cin * cout * u64::from(layer.kernel_h) * u64::from(layer.kernel_w);
            Cost {
                params: weights + 2 * cout,
                flops: weights * spatial,
            }
        }
        LayerKind::AddShortcut => Cost::default(),
    }
}

/// Cost of a layer chain. Consecutive main-path layers must agree on channel
/// count and resolution; shortcuts must match the main path they merge into.
pub fn cost(layers: &[LayerSpec]) -> Result<Cost, ArchError> {
    let mut current: Option<(u32, (u32, u32))> = None;
    for (i, layer) in layers.iter().enumerate() {
        let err = |detail: String| ArchError::Chain {
            location: format!("layer {i}"),
            detail,
        };
        let out = layer.output_size();
        if out.0 == 0 || out.1 == 0 {
            return Err(err("window does not fit its input".into()));
        }
        if layer.kind == LayerKind::AddShortcut {
            if let Some((c, hw)) = current {
                if layer.out_channels != c || out != hw {
                    return Err(err("shortcut does not match main path".into()));
                }
            }
            continue;
        }
        if let Some((c, hw)) = current {
            if layer.in_channels != c {
                return Err(err(format!(
                    "expects {} input channels, previous layer emits {c}",
                    layer.in_channels
                )));
            }
            if layer.kind != LayerKind::FullyConnected && (layer.input_h, layer.input_w) != hw {
                return Err(err(format!(
                    "expects {}x{} input, previous layer emits {}x{}",
                    layer.input_h, layer.input_w, hw.0, hw.1
                )));
            }
        }
        current = Some((layer.out_channels, out));
    }
    Ok(layers.iter().map(layer_cost).sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PruningRates {
    pub pr_params: f64,
    pub pr_flops: f64,
}

/// `1 - pruned / unpruned` for parameters and FLOPs.
pub fn pruning_rates(baseline: Cost, pruned: Cost) -> PruningRates {
    let rate = |p: u64, b: u64| if b == 0 { 0.0 } else { 1.0 - p as f64 / b as f64 };
    PruningRates {
        pr_params: rate(pruned.params, baseline.params),
        pr_flops: rate(pruned.flops, baseline.flops),
    }
}
