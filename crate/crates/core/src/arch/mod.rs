//! Declarative convolutional architectures.
//!
//! An [`ArchitectureSpec`] is an ordered chain of layers grouped into a stem,
//! a list of residual or plain blocks and a classification head. Every layer
//! carries its fully resolved channel counts and input resolution, so that
//! parameter and FLOP counts can be recomputed from the spec alone.
//!
//! Only the blocks are subject to pruning. Inside a block every convolution
//! except the last one is a *prunable position*: its output width is one gene
//! of a [`PruneCoding`]. The last convolution keeps the block's output width,
//! which is what keeps neighbouring blocks and sub-networks compatible.

mod coding;
mod cost;
mod partition;
mod presets;
#[cfg(test)]
mod props;

use std::fmt;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

pub use coding::{PruneCoding, ValidityReport, Violation, ViolationKind};
pub use cost::{cost, layer_cost, pruning_rates, Cost, PruningRates};
pub use partition::{partition_by_resolution, SubnetPartition};
pub use presets::{build_preset, PRESET_NAMES};

/// Version stamped into every JSON document this crate writes.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ArchError {
    #[error("unknown preset `{0}` (expected one of resnet56, resnet110, resnet50, vgg16)")]
    UnknownPreset(String),
    #[error("num_classes must be at least 2, got {0}")]
    TooFewClasses(u32),
    #[error("input size {size} is incompatible with the stride chain of `{preset}` (must be a positive multiple of {factor})")]
    IncompatibleInput { preset: String, size: u32, factor: u32 },
    #[error("inconsistent layer chain at {location}: {detail}")]
    Chain { location: String, detail: String },
    #[error("invalid block {index}: {detail}")]
    Block { index: usize, detail: String },
    #[error("invalid partition: {0}")]
    Partition(String),
    #[error("sub-network index {index} out of range (M = {count})")]
    SubnetOutOfRange { index: usize, count: usize },
    #[error("invalid coding for sub-network {subnet}: {report}")]
    InvalidCoding { subnet: usize, report: ValidityReport },
    #[error("unsupported format_version {found} (expected {FORMAT_VERSION})")]
    FormatVersion { found: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    Conv,
    BatchNorm,
    Pool,
    FullyConnected,
    /// Residual merge. When the shortcut changes width or resolution it is a
    /// 1x1 projection convolution followed by batch norm, and is costed as such.
    AddShortcut,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum BlockKind {
    BasicBlock,
    Bottleneck,
    #[serde(rename = "vblock")]
    VBlock,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: u32,
    pub out_channels: u32,
    pub kernel_h: u32,
    pub kernel_w: u32,
    pub stride: u32,
    pub padding: u32,
    pub input_h: u32,
    pub input_w: u32,
    pub has_bias: bool,
}

fn window_output(input: u32, kernel: u32, stride: u32, padding: u32) -> u32 {
    let span = i64::from(input) + 2 * i64::from(padding) - i64::from(kernel);
    if span < 0 || stride == 0 {
        0
    } else {
        (span / i64::from(stride) + 1) as u32
    }
}

impl LayerSpec {
    /// Spatial size produced by this layer. Zero means the window does not fit.
    pub fn output_size(&self) -> (u32, u32) {
        match self.kind {
            LayerKind::Conv | LayerKind::Pool | LayerKind::AddShortcut => (
                window_output(self.input_h, self.kernel_h, self.stride, self.padding),
                window_output(self.input_w, self.kernel_w, self.stride, self.padding),
            ),
            LayerKind::BatchNorm => (self.input_h, self.input_w),
            LayerKind::FullyConnected => (1, 1),
        }
    }

    /// True for a shortcut that needs a projection convolution.
    pub fn is_projection(&self) -> bool {
        self.kind == LayerKind::AddShortcut && (self.in_channels != self.out_channels || self.stride != 1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BlockSpec {
    pub kind: BlockKind,
    pub layers: Vec<LayerSpec>,
    /// Indices into `layers` of the convolutions whose widths are encoded.
    pub prunable_positions: Vec<usize>,
}

impl BlockSpec {
    pub fn in_channels(&self) -> u32 {
        self.layers[0].in_channels
    }

    pub fn out_channels(&self) -> u32 {
        main_path(&self.layers)
            .last()
            .map(|l| l.out_channels)
            .unwrap_or_else(|| self.in_channels())
    }

    pub fn input_size(&self) -> (u32, u32) {
        (self.layers[0].input_h, self.layers[0].input_w)
    }

    pub fn output_size(&self) -> (u32, u32) {
        main_path(&self.layers)
            .last()
            .map(LayerSpec::output_size)
            .unwrap_or_else(|| self.input_size())
    }

    /// Original widths at the prunable positions, i.e. the per-gene upper bounds.
    pub fn prunable_widths(&self) -> impl Iterator<Item = u32> + '_ {
        self.prunable_positions.iter().map(|&p| self.layers[p].out_channels)
    }

    /// Layers of this block with `genes` substituted at the prunable positions.
    /// Genes must already be validated.
    pub(crate) fn apply_genes(&self, genes: &[u32]) -> Vec<LayerSpec> {
        debug_assert_eq!(genes.len(), self.prunable_positions.len());
        let mut layers = self.layers.clone();
        for (&pos, &g) in self.prunable_positions.iter().zip(genes) {
            layers[pos].out_channels = g;
        }
        let mut channels = self.in_channels();
        for layer in &mut layers {
            match layer.kind {
                LayerKind::Conv | LayerKind::FullyConnected => {
                    layer.in_channels = channels;
                    channels = layer.out_channels;
                }
                LayerKind::BatchNorm | LayerKind::Pool => {
                    layer.in_channels = channels;
                    layer.out_channels = channels;
                }
                LayerKind::AddShortcut => {}
            }
        }
        layers
    }
}

fn main_path(layers: &[LayerSpec]) -> impl DoubleEndedIterator<Item = &LayerSpec> {
    layers.iter().filter(|l| l.kind != LayerKind::AddShortcut)
}

/// A fully resolved network description. Immutable once built; construct it
/// with [`build_preset`] or by deserializing an architecture document.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(try_from = "ArchitectureDoc", into = "ArchitectureDoc")]
pub struct ArchitectureSpec {
    name: String,
    input_h: u32,
    input_w: u32,
    num_classes: u32,
    stem: Vec<LayerSpec>,
    blocks: Vec<BlockSpec>,
    head: Vec<LayerSpec>,
}

impl ArchitectureSpec {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_size(&self) -> (u32, u32) {
        (self.input_h, self.input_w)
    }

    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    pub fn stem(&self) -> &[LayerSpec] {
        &self.stem
    }

    pub fn blocks(&self) -> &[BlockSpec] {
        &self.blocks
    }

    pub fn head(&self) -> &[LayerSpec] {
        &self.head
    }

    /// Every layer in network order.
    pub fn layers(&self) -> impl Iterator<Item = &LayerSpec> {
        self.stem
            .iter()
            .chain(self.blocks.iter().flat_map(|b| b.layers.iter()))
            .chain(self.head.iter())
    }

    /// Total number of prunable positions across all blocks.
    pub fn prunable_count(&self) -> usize {
        self.blocks.iter().map(|b| b.prunable_positions.len()).sum()
    }

    /// Cost of the unpruned network.
    pub fn cost(&self) -> Cost {
        self.layers().map(layer_cost).sum()
    }

    /// Cost of the layers that no coding can touch (stem and head).
    pub fn fixed_cost(&self) -> Cost {
        self.stem.iter().chain(&self.head).map(layer_cost).sum()
    }

    fn check_subnet(&self, part: &SubnetPartition, index: usize) -> Result<(), ArchError> {
        if index >= part.len() {
            return Err(ArchError::SubnetOutOfRange {
                index,
                count: part.len(),
            });
        }
        if part.num_blocks() != self.blocks.len() {
            return Err(ArchError::Partition(format!(
                "partition covers {} blocks but `{}` has {}",
                part.num_blocks(),
                self.name,
                self.blocks.len()
            )));
        }
        Ok(())
    }

    /// Per-gene upper bounds (original widths) of sub-network `index`.
    pub fn subnet_bounds(&self, part: &SubnetPartition, index: usize) -> Result<Vec<u32>, ArchError> {
        self.check_subnet(part, index)?;
        Ok(self.blocks[part.range(index)]
            .iter()
            .flat_map(BlockSpec::prunable_widths)
            .collect())
    }

    /// Identity coding: every prunable position keeps its original width.
    pub fn encode_baseline(&self, part: &SubnetPartition, index: usize) -> Result<PruneCoding, ArchError> {
        Ok(PruneCoding::new(index, self.subnet_bounds(part, index)?))
    }

    /// Checks gene count and bounds. Never fails; inspect the report.
    pub fn validate_coding(&self, part: &SubnetPartition, coding: &PruneCoding) -> ValidityReport {
        match self.subnet_bounds(part, coding.subnet_index) {
            Ok(bounds) => ValidityReport::check(&coding.genes, &bounds),
            Err(_) => ValidityReport::subnet_missing(coding.subnet_index, part.len()),
        }
    }

    /// Layers of the pruned sub-network described by `coding`.
    pub fn decode_coding(&self, part: &SubnetPartition, coding: &PruneCoding) -> Result<Vec<LayerSpec>, ArchError> {
        self.check_subnet(part, coding.subnet_index)?;
        let report = self.validate_coding(part, coding);
        if !report.is_valid() {
            return Err(ArchError::InvalidCoding {
                subnet: coding.subnet_index,
                report,
            });
        }
        let mut genes = coding.genes.as_slice();
        let mut out = Vec::new();
        for block in &self.blocks[part.range(coding.subnet_index)] {
            let (mine, rest) = genes.split_at(block.prunable_positions.len());
            out.extend(block.apply_genes(mine));
            genes = rest;
        }
        Ok(out)
    }

    /// Cost of sub-network `index`, pruned by `genes` or unpruned when `None`.
    pub fn subnet_cost(&self, part: &SubnetPartition, index: usize, genes: Option<&[u32]>) -> Result<Cost, ArchError> {
        match genes {
            None => {
                self.check_subnet(part, index)?;
                Ok(self.blocks[part.range(index)]
                    .iter()
                    .flat_map(|b| &b.layers)
                    .map(layer_cost)
                    .sum())
            }
            Some(g) => {
                let layers = self.decode_coding(part, &PruneCoding::new(index, g.to_vec()))?;
                Ok(layers.iter().map(layer_cost).sum())
            }
        }
    }

    /// Whole-network cost with one optional coding per sub-network.
    pub fn scheme_cost(&self, part: &SubnetPartition, selections: &[Option<Vec<u32>>]) -> Result<Cost, ArchError> {
        if selections.len() != part.len() {
            return Err(ArchError::Partition(format!(
                "{} selections for {} sub-networks",
                selections.len(),
                part.len()
            )));
        }
        let mut total = self.fixed_cost();
        for (i, sel) in selections.iter().enumerate() {
            total += self.subnet_cost(part, i, sel.as_deref())?;
        }
        Ok(total)
    }

    /// Pruning rates of a joint selection relative to this network.
    pub fn pruning_rates(
        &self,
        part: &SubnetPartition,
        selections: &[Option<Vec<u32>>],
    ) -> Result<PruningRates, ArchError> {
        Ok(pruning_rates(self.cost(), self.scheme_cost(part, selections)?))
    }

    /// Resolve an architecture document into a checked spec.
    pub fn from_doc(doc: ArchitectureDoc) -> Result<Self, ArchError> {
        if doc.format_version != FORMAT_VERSION {
            return Err(ArchError::FormatVersion {
                found: doc.format_version,
            });
        }
        if doc.num_classes < 2 {
            return Err(ArchError::TooFewClasses(doc.num_classes));
        }
        let [input_h, input_w] = doc.input;
        let mut chain = Chain {
            channels: 3,
            h: input_h,
            w: input_w,
        };
        if let Some(first) = doc
            .stem
            .first()
            .or_else(|| doc.blocks.first().and_then(|b| b.layers.first()))
        {
            chain.channels = first.in_channels;
        }

        let stem = chain.resolve(&doc.stem, None, "stem")?;
        let mut blocks = Vec::with_capacity(doc.blocks.len());
        for (index, block) in doc.blocks.iter().enumerate() {
            if block.layers.is_empty() {
                return Err(ArchError::Block {
                    index,
                    detail: "block has no layers".into(),
                });
            }
            let entry = chain;
            let layers = chain.resolve(&block.layers, Some(entry), &format!("block {index}"))?;
            let convs: Vec<usize> = layers
                .iter()
                .enumerate()
                .filter(|(_, l)| l.kind == LayerKind::Conv)
                .map(|(i, _)| i)
                .collect();
            let expected = match block.kind {
                BlockKind::BasicBlock => Some(2),
                BlockKind::Bottleneck => Some(3),
                BlockKind::VBlock => None,
            };
            if convs.is_empty() || expected.is_some_and(|n| n != convs.len()) {
                return Err(ArchError::Block {
                    index,
                    detail: format!("{:?} with {} convolutions", block.kind, convs.len()),
                });
            }
            let prunable_positions = convs[..convs.len() - 1].to_vec();
            blocks.push(BlockSpec {
                kind: block.kind,
                layers,
                prunable_positions,
            });
        }
        let head = chain.resolve(&doc.head, None, "head")?;
        if let Some(last) = head.last() {
            if last.kind == LayerKind::FullyConnected && last.out_channels != doc.num_classes {
                return Err(ArchError::Chain {
                    location: "head".into(),
                    detail: format!(
                        "classifier emits {} outputs for {} classes",
                        last.out_channels, doc.num_classes
                    ),
                });
            }
        }
        Ok(Self {
            name: doc.name,
            input_h,
            input_w,
            num_classes: doc.num_classes,
            stem,
            blocks,
            head,
        })
    }

    pub fn to_doc(&self) -> ArchitectureDoc {
        let layer_docs = |layers: &[LayerSpec]| layers.iter().map(LayerDoc::from).collect();
        ArchitectureDoc {
            format_version: FORMAT_VERSION,
            name: self.name.clone(),
            input: [self.input_h, self.input_w],
            num_classes: self.num_classes,
            stem: layer_docs(&self.stem),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockDoc {
                    kind: b.kind,
                    layers: layer_docs(&b.layers),
                })
                .collect(),
            head: layer_docs(&self.head),
        }
    }
}

#[derive(Clone, Copy)]
struct Chain {
    channels: u32,
    h: u32,
    w: u32,
}

impl Chain {
    fn resolve(
        &mut self,
        raw: &[LayerDoc],
        block_entry: Option<Chain>,
        location: &str,
    ) -> Result<Vec<LayerSpec>, ArchError> {
        let mut out = Vec::with_capacity(raw.len());
        for (i, doc) in raw.iter().enumerate() {
            let err = |detail: String| ArchError::Chain {
                location: format!("{location}, layer {i}"),
                detail,
            };
            let [kernel_h, kernel_w] = doc.k.dims();
            if doc.in_channels == 0 || doc.out_channels == 0 {
                return Err(err("channel counts must be at least 1".into()));
            }
            if kernel_h == 0 || kernel_w == 0 || doc.stride == 0 {
                return Err(err("kernel and stride must be at least 1".into()));
            }
            let source = match doc.kind {
                LayerKind::AddShortcut => block_entry.ok_or_else(|| err("shortcut outside a block".into()))?,
                _ => *self,
            };
            if doc.in_channels != source.channels {
                return Err(err(format!(
                    "expects {} input channels, chain provides {}",
                    doc.in_channels, source.channels
                )));
            }
            if matches!(doc.kind, LayerKind::BatchNorm | LayerKind::Pool) && doc.out_channels != doc.in_channels {
                return Err(err(format!("{:?} cannot change channel count", doc.kind)));
            }
            if doc.kind == LayerKind::FullyConnected && (self.h, self.w) != (1, 1) {
                return Err(err(format!(
                    "fully-connected layer needs 1x1 input, got {}x{}",
                    self.h, self.w
                )));
            }
            let layer = LayerSpec {
                kind: doc.kind,
                in_channels: doc.in_channels,
                out_channels: doc.out_channels,
                kernel_h,
                kernel_w,
                stride: doc.stride,
                padding: doc.pad,
                input_h: source.h,
                input_w: source.w,
                has_bias: doc.bias,
            };
            let (h, w) = layer.output_size();
            if h == 0 || w == 0 {
                return Err(err(format!(
                    "{}x{} input collapses under kernel {}x{}, stride {}",
                    source.h, source.w, kernel_h, kernel_w, doc.stride
                )));
            }
            if doc.kind == LayerKind::AddShortcut {
                if layer.out_channels != self.channels || (h, w) != (self.h, self.w) {
                    return Err(err(format!(
                        "shortcut yields {}x{}x{}, main path yields {}x{}x{}",
                        layer.out_channels, h, w, self.channels, self.h, self.w
                    )));
                }
                if !layer.is_projection() && (kernel_h, kernel_w) != (1, 1) {
                    return Err(err("identity shortcut must use a 1x1 window".into()));
                }
            } else {
                *self = Chain {
                    channels: layer.out_channels,
                    h,
                    w,
                };
            }
            out.push(layer);
        }
        Ok(out)
    }
}

/// Square kernels serialize as a single integer, others as `[h, w]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum KernelDoc {
    Square(u32),
    Rect([u32; 2]),
}

impl KernelDoc {
    fn dims(self) -> [u32; 2] {
        match self {
            KernelDoc::Square(k) => [k, k],
            KernelDoc::Rect(hw) => hw,
        }
    }
}

fn unit_kernel() -> KernelDoc {
    KernelDoc::Square(1)
}

fn one() -> u32 {
    1
}

fn is_one(v: &u32) -> bool {
    *v == 1
}

fn is_zero(v: &u32) -> bool {
    *v == 0
}

fn is_false(v: &bool) -> bool {
    !*v
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct LayerDoc {
    pub kind: LayerKind,
    #[serde(rename = "in")]
    pub in_channels: u32,
    #[serde(rename = "out")]
    pub out_channels: u32,
    #[serde(default = "unit_kernel")]
    pub k: KernelDoc,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub stride: u32,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub pad: u32,
    #[serde(default, skip_serializing_if = "is_false")]
    pub bias: bool,
}

impl From<&LayerSpec> for LayerDoc {
    fn from(l: &LayerSpec) -> Self {
        let k = if l.kernel_h == l.kernel_w {
            KernelDoc::Square(l.kernel_h)
        } else {
            KernelDoc::Rect([l.kernel_h, l.kernel_w])
        };
        LayerDoc {
            kind: l.kind,
            in_channels: l.in_channels,
            out_channels: l.out_channels,
            k,
            stride: l.stride,
            pad: l.padding,
            bias: l.has_bias,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct BlockDoc {
    pub kind: BlockKind,
    pub layers: Vec<LayerDoc>,
}

/// On-disk architecture document. Spatial sizes are not stored; they are
/// propagated from `input` when the document is resolved.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct ArchitectureDoc {
    pub format_version: u32,
    pub name: String,
    pub input: [u32; 2],
    pub num_classes: u32,
    #[serde(default)]
    pub stem: Vec<LayerDoc>,
    pub blocks: Vec<BlockDoc>,
    #[serde(default)]
    pub head: Vec<LayerDoc>,
}

impl TryFrom<ArchitectureDoc> for ArchitectureSpec {
    type Error = ArchError;

    fn try_from(doc: ArchitectureDoc) -> Result<Self, Self::Error> {
        ArchitectureSpec::from_doc(doc)
    }
}

impl From<ArchitectureSpec> for ArchitectureDoc {
    fn from(spec: ArchitectureSpec) -> Self {
        spec.to_doc()
    }
}

impl fmt::Display for ArchitectureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = self.cost();
        write!(
            f,
            "{} ({}x{}, {} classes): {} blocks, {} prunable positions, {} params, {} FLOPs",
            self.name,
            self.input_h,
            self.input_w,
            self.num_classes,
            self.blocks.len(),
            self.prunable_count(),
            c.params,
            c.flops
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(i: u32, o: u32, k: u32, stride: u32, pad: u32) -> LayerDoc {
        LayerDoc {
            kind: LayerKind::Conv,
            in_channels: i,
            out_channels: o,
            k: KernelDoc::Square(k),
            stride,
            pad,
            bias: false,
        }
    }

    fn bn(c: u32) -> LayerDoc {
        LayerDoc {
            kind: LayerKind::BatchNorm,
            in_channels: c,
            out_channels: c,
            k: KernelDoc::Square(1),
            stride: 1,
            pad: 0,
            bias: false,
        }
    }

    fn fc(i: u32, o: u32) -> LayerDoc {
        LayerDoc {
            kind: LayerKind::FullyConnected,
            bias: true,
            ..conv(i, o, 1, 1, 0)
        }
    }

    fn doc(blocks: Vec<BlockDoc>, head: Vec<LayerDoc>) -> ArchitectureDoc {
        ArchitectureDoc {
            format_version: FORMAT_VERSION,
            name: "toy".into(),
            input: [4, 4],
            num_classes: 2,
            stem: vec![],
            blocks,
            head,
        }
    }

    #[test]
    fn rejects_channel_mismatch() {
        let d = doc(
            vec![BlockDoc {
                kind: BlockKind::VBlock,
                layers: vec![conv(3, 8, 3, 1, 1), conv(7, 8, 3, 1, 1)],
            }],
            vec![],
        );
        let err = ArchitectureSpec::from_doc(d).unwrap_err();
        assert!(matches!(err, ArchError::Chain { .. }), "{err}");
    }

    #[test]
    fn rejects_wrong_conv_count_for_basic_block() {
        let d = doc(
            vec![BlockDoc {
                kind: BlockKind::BasicBlock,
                layers: vec![conv(3, 8, 3, 1, 1)],
            }],
            vec![],
        );
        assert!(matches!(
            ArchitectureSpec::from_doc(d),
            Err(ArchError::Block { index: 0, .. })
        ));
    }

    #[test]
    fn rejects_spatial_collapse() {
        let d = doc(
            vec![BlockDoc {
                kind: BlockKind::VBlock,
                layers: vec![conv(3, 8, 7, 1, 0)],
            }],
            vec![],
        );
        assert!(ArchitectureSpec::from_doc(d).is_err());
    }

    #[test]
    fn fc_requires_flat_input() {
        let d = doc(
            vec![BlockDoc {
                kind: BlockKind::VBlock,
                layers: vec![conv(3, 8, 3, 1, 1), bn(8)],
            }],
            vec![fc(8, 2)],
        );
        assert!(ArchitectureSpec::from_doc(d).is_err());
    }

    #[test]
    fn vblock_prunable_positions_skip_last_conv() {
        let d = doc(
            vec![BlockDoc {
                kind: BlockKind::VBlock,
                layers: vec![
                    conv(3, 8, 3, 1, 1),
                    bn(8),
                    conv(8, 6, 3, 1, 1),
                    bn(6),
                    conv(6, 5, 3, 1, 1),
                ],
            }],
            vec![],
        );
        let spec = ArchitectureSpec::from_doc(d).unwrap();
        assert_eq!(spec.blocks()[0].prunable_positions, vec![0, 2]);
        assert_eq!(spec.blocks()[0].out_channels(), 5);
    }

    #[test]
    fn json_round_trip_preserves_spec() {
        let spec = build_preset("resnet56", 10, 32).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let back: ArchitectureSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);
        assert!(json.contains("\"format_version\":1"));
    }

    #[test]
    fn json_rejects_future_version() {
        let mut d = build_preset("resnet56", 10, 32).unwrap().to_doc();
        d.format_version = 2;
        assert!(matches!(
            ArchitectureSpec::from_doc(d),
            Err(ArchError::FormatVersion { found: 2 })
        ));
    }
}
