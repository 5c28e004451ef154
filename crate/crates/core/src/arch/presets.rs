//! Reference architectures: CIFAR ResNet-56/110, ImageNet ResNet-50 and
//! CIFAR VGG-16 (13 convolutions, batch norm, single linear classifier).

use super::{
    ArchError, ArchitectureDoc, ArchitectureSpec, BlockDoc, BlockKind, KernelDoc, LayerDoc, LayerKind, FORMAT_VERSION,
};

pub const PRESET_NAMES: [&str; 4] = ["resnet56", "resnet110", "resnet50", "vgg16"];

pub fn build_preset(name: &str, num_classes: u32, input_size: u32) -> Result<ArchitectureSpec, ArchError> {
    if num_classes < 2 {
        return Err(ArchError::TooFewClasses(num_classes));
    }
    let factor = match name {
        "resnet56" | "resnet110" => 4,
        "resnet50" | "vgg16" => 32,
        other => return Err(ArchError::UnknownPreset(other.to_string())),
    };
    if input_size == 0 || !input_size.is_multiple_of(factor) {
        return Err(ArchError::IncompatibleInput {
            preset: name.to_string(),
            size: input_size,
            factor,
        });
    }
    let doc = match name {
        "resnet56" => cifar_resnet(name, 9, num_classes, input_size),
        "resnet110" => cifar_resnet(name, 18, num_classes, input_size),
        "resnet50" => resnet50(num_classes, input_size),
        _ => vgg16(num_classes, input_size),
    };
    ArchitectureSpec::from_doc(doc)
}

fn layer(kind: LayerKind, cin: u32, cout: u32, k: u32, stride: u32, pad: u32) -> LayerDoc {
    LayerDoc {
        kind,
        in_channels: cin,
        out_channels: cout,
        k: KernelDoc::Square(k),
        stride,
        pad,
        bias: false,
    }
}

fn conv(cin: u32, cout: u32, k: u32, stride: u32) -> LayerDoc {
    layer(LayerKind::Conv, cin, cout, k, stride, k / 2)
}

fn bn(c: u32) -> LayerDoc {
    layer(LayerKind::BatchNorm, c, c, 1, 1, 0)
}

fn shortcut(cin: u32, cout: u32, stride: u32) -> LayerDoc {
    layer(LayerKind::AddShortcut, cin, cout, 1, stride, 0)
}

fn global_pool(c: u32, size: u32) -> LayerDoc {
    layer(LayerKind::Pool, c, c, size, size, 0)
}

fn classifier(cin: u32, classes: u32) -> LayerDoc {
    LayerDoc {
        bias: true,
        ..layer(LayerKind::FullyConnected, cin, classes, 1, 1, 0)
    }
}

fn doc(
    name: &str,
    input: u32,
    classes: u32,
    stem: Vec<LayerDoc>,
    blocks: Vec<BlockDoc>,
    head: Vec<LayerDoc>,
) -> ArchitectureDoc {
    ArchitectureDoc {
        format_version: FORMAT_VERSION,
        name: name.to_string(),
        input: [input, input],
        num_classes: classes,
        stem,
        blocks,
        head,
    }
}

fn cifar_resnet(name: &str, per_stage: usize, classes: u32, input: u32) -> ArchitectureDoc {
    let stem = vec![conv(3, 16, 3, 1), bn(16)];
    let mut blocks = Vec::new();
    let mut cin = 16;
    for (stage, width) in [16u32, 32, 64].into_iter().enumerate() {
        for i in 0..per_stage {
            let stride = if stage > 0 && i == 0 { 2 } else { 1 };
            blocks.push(BlockDoc {
                kind: BlockKind::BasicBlock,
                layers: vec![
                    conv(cin, width, 3, stride),
                    bn(width),
                    conv(width, width, 3, 1),
                    bn(width),
                    shortcut(cin, width, stride),
                ],
            });
            cin = width;
        }
    }
    let head = vec![global_pool(64, input / 4), classifier(64, classes)];
    doc(name, input, classes, stem, blocks, head)
}

/// Torchvision layout: stride on the 3x3 convolution, projection shortcut on
/// the first block of every stage.
fn resnet50(classes: u32, input: u32) -> ArchitectureDoc {
    let stem = vec![conv(3, 64, 7, 2), bn(64), layer(LayerKind::Pool, 64, 64, 3, 2, 1)];
    let mut blocks = Vec::new();
    let mut cin = 64;
    for (stage, (width, count)) in [(64u32, 3usize), (128, 4), (256, 6), (512, 3)].into_iter().enumerate() {
        let out = width * 4;
        for i in 0..count {
            let stride = if stage > 0 && i == 0 { 2 } else { 1 };
            blocks.push(BlockDoc {
                kind: BlockKind::Bottleneck,
                layers: vec![
                    conv(cin, width, 1, 1),
                    bn(width),
                    conv(width, width, 3, stride),
                    bn(width),
                    conv(width, out, 1, 1),
                    bn(out),
                    shortcut(cin, out, stride),
                ],
            });
            cin = out;
        }
    }
    let head = vec![global_pool(2048, input / 32), classifier(2048, classes)];
    doc("resnet50", input, classes, stem, blocks, head)
}

fn vgg16(classes: u32, input: u32) -> ArchitectureDoc {
    let stages: [&[u32]; 5] = [
        &[64, 64],
        &[128, 128],
        &[256, 256, 256],
        &[512, 512, 512],
        &[512, 512, 512],
    ];
    let mut blocks = Vec::new();
    let mut cin = 3;
    for widths in stages {
        let mut layers = Vec::new();
        for &w in widths {
            layers.push(conv(cin, w, 3, 1));
            layers.push(bn(w));
            cin = w;
        }
        layers.push(layer(LayerKind::Pool, cin, cin, 2, 2, 0));
        blocks.push(BlockDoc {
            kind: BlockKind::VBlock,
            layers,
        });
    }
    let mut head = Vec::new();
    if input > 32 {
        head.push(global_pool(512, input / 32));
    }
    head.push(classifier(512, classes));
    doc("vgg16", input, classes, Vec::new(), blocks, head)
}
