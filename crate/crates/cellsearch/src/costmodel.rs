//! Analytic cost accounting: parameter counts, multiply-accumulate counts
//! (the crate's "FLOPs" unit: one multiply-add = 1 MAC, conv layers only) and
//! 4-byte-scalar memory estimates for a single op, a shaped cell and the full
//! densely-connected macro network.
//!
//! Conventions, fixed crate-wide:
//! - convolutions carry no bias; batch norm contributes its affine pair
//!   (2 * channels) to the parameter count and zero MACs;
//! - group counts are clamped to `gcd(c_in, c_out, groups)` so that a
//!   searchable cell never errors on divisibility;
//! - learned group convolution is costed in its condensed inference form,
//!   i.e. exactly like a group convolution.

use serde::{Deserialize, Serialize};

use crate::cellspace::{CellSpec, LayerOp};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CostError {
    #[error("channel counts must be at least 1 (got c_in={c_in}, c_out={c_out})")]
    ZeroChannels { c_in: usize, c_out: usize },
    #[error("depthwise conv requires c_out == c_in (got {c_in} -> {c_out})")]
    DepthwiseWidth { c_in: usize, c_out: usize },
    #[error("spatial extent must be at least 1x1 (got {h}x{w})")]
    ZeroSpatial { h: usize, w: usize },
    #[error("macro config needs at least one stage")]
    NoStages,
    #[error("feature map shrinks below 1x1 at stage {stage} ({h}x{w} after pooling)")]
    FeatureMapUnderflow { stage: usize, h: usize, w: usize },
    #[error("macro config field {field} must be at least 1")]
    ZeroField { field: &'static str },
}

/// One stage of the macro network: `cells` repetitions of the searched cell,
/// each appending `growth` channels to the running concatenation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub cells: usize,
    pub growth: usize,
}

/// Macro-network configuration: the fixed skeleton around the searched cell.
///
/// Defaults mirror the 32x32 3-channel setup: stages (14,8) (14,16) (14,32),
/// a 3x3 stem conv producing `2 * G_1` channels, 2x2 average pooling between
/// stages and a global average pool before the classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacroConfig {
    pub stages: Vec<StageConfig>,
    /// Input shape as (height, width, channels).
    pub input: (usize, usize, usize),
    pub num_classes: usize,
    /// Stem conv output channels; `None` means `2 * G_1`.
    #[serde(default)]
    pub stem_channels: Option<usize>,
    /// Requested group count for grouped convs, clamped per layer.
    #[serde(default = "default_groups")]
    pub groups: usize,
    /// Non-final convs inside a cell output `bottleneck_multiplier * G`.
    #[serde(default = "default_bottleneck")]
    pub bottleneck_multiplier: usize,
}

fn default_groups() -> usize {
    4
}

fn default_bottleneck() -> usize {
    4
}

impl MacroConfig {
    /// The 32x32 search-time macro: C = (14, 14, 14), G = (8, 16, 32).
    pub fn cifar_like() -> Self {
        MacroConfig {
            stages: vec![
                StageConfig { cells: 14, growth: 8 },
                StageConfig { cells: 14, growth: 16 },
                StageConfig { cells: 14, growth: 32 },
            ],
            input: (32, 32, 3),
            num_classes: 10,
            stem_channels: None,
            groups: 4,
            bottleneck_multiplier: 4,
        }
    }

    /// Desk-scale macro for the tiny trainer: C = (2, 2), G = (4, 8) on 8x8
    /// 3-channel inputs with 4 classes.
    pub fn desk() -> Self {
        MacroConfig {
            stages: vec![
                StageConfig { cells: 2, growth: 4 },
                StageConfig { cells: 2, growth: 8 },
            ],
            input: (8, 8, 3),
            num_classes: 4,
            stem_channels: None,
            groups: 4,
            bottleneck_multiplier: 4,
        }
    }

    /// Stages with doubled growth per stage, the default construction.
    pub fn with_doubling(num_stages: usize, cells_per_stage: usize, first_growth: usize) -> Self {
        let stages = (0..num_stages)
            .map(|s| StageConfig {
                cells: cells_per_stage,
                growth: first_growth << s,
            })
            .collect();
        MacroConfig {
            stages,
            ..Self::cifar_like()
        }
    }

    pub fn stem_channels(&self) -> usize {
        self.stem_channels
            .unwrap_or_else(|| 2 * self.stages.first().map(|s| s.growth).unwrap_or(1))
    }

    pub fn validate(&self) -> Result<(), CostError> {
        if self.stages.is_empty() {
            return Err(CostError::NoStages);
        }
        let (h, w, c) = self.input;
        if h == 0 || w == 0 {
            return Err(CostError::ZeroSpatial { h, w });
        }
        for (name, value) in [
            ("input channels", c),
            ("num_classes", self.num_classes),
            ("stem_channels", self.stem_channels()),
            ("groups", self.groups),
            ("bottleneck_multiplier", self.bottleneck_multiplier),
        ] {
            if value == 0 {
                return Err(CostError::ZeroField { field: name });
            }
        }
        for (s, stage) in self.stages.iter().enumerate() {
            if stage.cells == 0 {
                return Err(CostError::ZeroField { field: "stage cells" });
            }
            if stage.growth == 0 {
                return Err(CostError::ZeroField { field: "stage growth" });
            }
            if s > 0 {
                let (h, w) = self.stage_resolution(s);
                if h == 0 || w == 0 {
                    return Err(CostError::FeatureMapUnderflow { stage: s, h, w });
                }
            }
        }
        Ok(())
    }

    /// Feature-map resolution at stage `s` (0-based): halved by 2x2 average
    /// pooling before every stage after the first.
    pub fn stage_resolution(&self, stage: usize) -> (usize, usize) {
        let (mut h, mut w, _) = self.input;
        for _ in 0..stage {
            h /= 2;
            w /= 2;
        }
        (h, w)
    }
}

/// Group count actually used by a grouped conv: the largest divisor of the
/// requested count that divides both channel counts. Never zero.
pub fn resolve_groups(c_in: usize, c_out: usize, requested: usize) -> usize {
    gcd(gcd(c_in, c_out), requested.max(1))
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn check_channels(op: LayerOp, c_in: usize, c_out: usize) -> Result<(), CostError> {
    if c_in == 0 || c_out == 0 {
        return Err(CostError::ZeroChannels { c_in, c_out });
    }
    if op == LayerOp::Dwconv3x3 && c_in != c_out {
        return Err(CostError::DepthwiseWidth { c_in, c_out });
    }
    Ok(())
}

/// Exact parameter count of one op instance. `groups` is the requested group
/// count (clamped internally); it is ignored by ungrouped ops.
pub fn op_params(op: LayerOp, c_in: usize, c_out: usize, groups: usize) -> Result<u64, CostError> {
    check_channels(op, c_in, c_out)?;
    let g = resolve_groups(c_in, c_out, groups) as u64;
    let (c_in, c_out) = (c_in as u64, c_out as u64);
    Ok(match op {
        LayerOp::BnRelu | LayerOp::Bn => 2 * c_in,
        LayerOp::Id => 0,
        LayerOp::Conv1x1 => c_in * c_out,
        LayerOp::Conv3x3 => 9 * c_in * c_out,
        LayerOp::Gconv1x1 | LayerOp::Lgconv1x1 => c_in * c_out / g,
        LayerOp::Gconv3x3 => 9 * c_in * c_out / g,
        LayerOp::Dwconv3x3 => 9 * c_in,
    })
}

/// Exact MAC count of one op instance on an `h` x `w` feature map ("same"
/// padding, stride 1). Norm ops and identity contribute zero by convention.
pub fn op_macs(
    op: LayerOp,
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    groups: usize,
) -> Result<u64, CostError> {
    if h == 0 || w == 0 {
        return Err(CostError::ZeroSpatial { h, w });
    }
    check_channels(op, c_in, c_out)?;
    Ok(match op {
        LayerOp::BnRelu | LayerOp::Bn | LayerOp::Id => 0,
        _ => (h * w) as u64 * op_params(op, c_in, c_out, groups)?,
    })
}

/// One layer of a shaped cell with resolved widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapedLayer {
    pub op: LayerOp,
    pub c_in: usize,
    pub c_out: usize,
    /// Effective (clamped) group count; 1 for ungrouped ops.
    pub groups: usize,
}

/// A cell with every layer's channel widths resolved for a concrete input
/// width and growth rate, plus the optional appended transition conv that
/// brings a conv-free or depthwise-ending cell to exactly `G` output
/// channels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapedCell {
    pub cell: CellSpec,
    pub in_channels: usize,
    pub out_channels: usize,
    pub layers: Vec<ShapedLayer>,
    /// Fixed, non-searchable 1x1 learned-group conv appended when the cell
    /// body does not already end at `G` channels.
    pub transition: Option<ShapedLayer>,
}

impl ShapedCell {
    pub fn transition_appended(&self) -> bool {
        self.transition.is_some()
    }

    /// Body layers followed by the transition, if any.
    pub fn all_layers(&self) -> impl Iterator<Item = &ShapedLayer> {
        self.layers.iter().chain(self.transition.iter())
    }
}

/// Resolves per-layer widths with the forward width rule: every non-depthwise
/// conv outputs `bottleneck_multiplier * G` except the final conv, which
/// outputs `G`; depthwise convs keep their input width; Norm ops keep width.
pub fn shape_cell(
    cell: &CellSpec,
    in_channels: usize,
    growth: usize,
    macro_cfg: &MacroConfig,
) -> Result<ShapedCell, CostError> {
    if in_channels == 0 || growth == 0 {
        return Err(CostError::ZeroChannels {
            c_in: in_channels,
            c_out: growth,
        });
    }
    let bottleneck = macro_cfg.bottleneck_multiplier * growth;
    let last_conv = cell.layers().iter().rposition(|op| op.is_conv());

    let mut width = in_channels;
    let mut layers = Vec::with_capacity(cell.depth());
    for (i, &op) in cell.layers().iter().enumerate() {
        let c_in = width;
        let c_out = match op {
            LayerOp::BnRelu | LayerOp::Bn | LayerOp::Id => c_in,
            LayerOp::Dwconv3x3 => c_in,
            _ if Some(i) == last_conv => growth,
            _ => bottleneck,
        };
        let groups = match op {
            LayerOp::Gconv1x1 | LayerOp::Gconv3x3 | LayerOp::Lgconv1x1 => {
                resolve_groups(c_in, c_out, macro_cfg.groups)
            }
            LayerOp::Dwconv3x3 => c_in,
            _ => 1,
        };
        layers.push(ShapedLayer {
            op,
            c_in,
            c_out,
            groups,
        });
        width = c_out;
    }

    let transition = if width != growth {
        let groups = resolve_groups(width, growth, macro_cfg.groups);
        Some(ShapedLayer {
            op: LayerOp::Lgconv1x1,
            c_in: width,
            c_out: growth,
            groups,
        })
    } else {
        None
    };

    Ok(ShapedCell {
        cell: cell.clone(),
        in_channels,
        out_channels: growth,
        layers,
        transition,
    })
}

/// Where an op instance sits in the assembled network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSite {
    Stem,
    /// `(stage, cell index within stage)` for searched-cell layers,
    /// including the appended transition.
    Cell(usize, usize),
    Classifier,
}

/// One op instance of the assembled network with concrete shapes. The stem
/// appears as a `conv3x3` instance and the classifier as a `conv1x1` on a
/// 1x1 feature map, so every parameter- or MAC-carrying layer is expressible
/// in the nine-op vocabulary. Pooling layers carry no params or MACs and are
/// reported separately in [`NetworkPlan`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpInstance {
    pub op: LayerOp,
    pub site: LayerSite,
    pub c_in: usize,
    pub c_out: usize,
    pub h: usize,
    pub w: usize,
    pub groups: usize,
}

impl OpInstance {
    pub fn params(&self) -> Result<u64, CostError> {
        op_params(self.op, self.c_in, self.c_out, self.groups)
    }

    pub fn macs(&self) -> Result<u64, CostError> {
        op_macs(self.op, self.c_in, self.c_out, self.h, self.w, self.groups)
    }
}

/// One stage of the assembled network: shaped cells plus their dense
/// bookkeeping (cell `j` sees `in_channels + j * growth` input channels).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagePlan {
    pub h: usize,
    pub w: usize,
    pub growth: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub cells: Vec<ShapedCell>,
}

/// The fully resolved network: stem, dense stages with pooling in between,
/// global average pool, classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkPlan {
    pub input: (usize, usize, usize),
    pub stem_channels: usize,
    pub stages: Vec<StagePlan>,
    pub classifier_in: usize,
    pub num_classes: usize,
}

impl NetworkPlan {
    /// Every parameter/MAC-carrying op instance in forward order.
    pub fn op_instances(&self) -> Vec<OpInstance> {
        let (h0, w0, c0) = self.input;
        let mut ops = vec![OpInstance {
            op: LayerOp::Conv3x3,
            site: LayerSite::Stem,
            c_in: c0,
            c_out: self.stem_channels,
            h: h0,
            w: w0,
            groups: 1,
        }];
        for (s, stage) in self.stages.iter().enumerate() {
            for (j, shaped) in stage.cells.iter().enumerate() {
                for layer in shaped.all_layers() {
                    ops.push(OpInstance {
                        op: layer.op,
                        site: LayerSite::Cell(s, j),
                        c_in: layer.c_in,
                        c_out: layer.c_out,
                        h: stage.h,
                        w: stage.w,
                        groups: layer.groups,
                    });
                }
            }
        }
        ops.push(OpInstance {
            op: LayerOp::Conv1x1,
            site: LayerSite::Classifier,
            c_in: self.classifier_in,
            c_out: self.num_classes,
            h: 1,
            w: 1,
            groups: 1,
        });
        ops
    }
}

/// Assembles the full network plan for a macro config and cell.
pub fn plan_network(macro_cfg: &MacroConfig, cell: &CellSpec) -> Result<NetworkPlan, CostError> {
    macro_cfg.validate()?;
    let stem = macro_cfg.stem_channels();
    let mut channels = stem;
    let mut stages = Vec::with_capacity(macro_cfg.stages.len());
    for (s, stage_cfg) in macro_cfg.stages.iter().enumerate() {
        let (h, w) = macro_cfg.stage_resolution(s);
        let in_channels = channels;
        let mut cells = Vec::with_capacity(stage_cfg.cells);
        for j in 0..stage_cfg.cells {
            let cell_in = in_channels + j * stage_cfg.growth;
            cells.push(shape_cell(cell, cell_in, stage_cfg.growth, macro_cfg)?);
        }
        channels = in_channels + stage_cfg.cells * stage_cfg.growth;
        stages.push(StagePlan {
            h,
            w,
            growth: stage_cfg.growth,
            in_channels,
            out_channels: channels,
            cells,
        });
    }
    Ok(NetworkPlan {
        input: macro_cfg.input,
        stem_channels: stem,
        stages,
        classifier_in: channels,
        num_classes: macro_cfg.num_classes,
    })
}

/// Aggregate cost of one network (or one cell, via [`cell_cost`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub params: u64,
    pub macs: u64,
    /// 4 bytes x the largest (input elements + output elements) over all
    /// layer instances, batch 1.
    pub peak_activation_bytes: u64,
    /// Always `4 * params`.
    pub param_bytes: u64,
}

/// Costs of the assembled network for `cell` under `macro_cfg`: stem conv,
/// all dense cells, pooling (free), global pool (free) and the classifier.
pub fn network_cost(macro_cfg: &MacroConfig, cell: &CellSpec) -> Result<CostReport, CostError> {
    let plan = plan_network(macro_cfg, cell)?;

    let mut params = 0u64;
    let mut macs = 0u64;
    let mut peak_elems = 0u64;
    for op in plan.op_instances() {
        params += op.params()?;
        macs += op.macs()?;
        let hw = (op.h * op.w) as u64;
        peak_elems = peak_elems.max(op.c_in as u64 * hw + op.c_out as u64 * hw);
    }

    // pooling and global pooling carry no params/MACs but do hold activations
    for (s, stage) in plan.stages.iter().enumerate() {
        let c = stage.out_channels as u64;
        let (h, w) = (stage.h as u64, stage.w as u64);
        if s + 1 < plan.stages.len() {
            peak_elems = peak_elems.max(c * h * w + c * (h / 2) * (w / 2));
        } else {
            peak_elems = peak_elems.max(c * h * w + c); // global average pool
        }
    }
    peak_elems = peak_elems.max(plan.classifier_in as u64 + plan.num_classes as u64);

    Ok(CostReport {
        params,
        macs,
        peak_activation_bytes: 4 * peak_elems,
        param_bytes: 4 * params,
    })
}

/// Costs of one shaped cell alone (body plus transition) at the given
/// resolution. Used by the synthetic oracle's compute penalty and the
/// per-layer CLI table.
pub fn cell_cost(shaped: &ShapedCell, h: usize, w: usize) -> Result<CostReport, CostError> {
    let mut params = 0u64;
    let mut macs = 0u64;
    let mut peak_elems = 0u64;
    for layer in shaped.all_layers() {
        params += op_params(layer.op, layer.c_in, layer.c_out, layer.groups)?;
        macs += op_macs(layer.op, layer.c_in, layer.c_out, h, w, layer.groups)?;
        let hw = (h * w) as u64;
        peak_elems = peak_elems.max((layer.c_in + layer.c_out) as u64 * hw);
    }
    Ok(CostReport {
        params,
        macs,
        peak_activation_bytes: 4 * peak_elems,
        param_bytes: 4 * params,
    })
}

/// MACs of the maximally expensive reference sequence of the same depth: a
/// chain of `depth` 3x3 convs shaped by the same width rule (non-final at
/// `bottleneck * G`, final at `G`). Denominator of the oracle's compute
/// penalty; strictly positive for every depth and context.
pub fn conv3x3_chain_macs(
    depth: usize,
    in_channels: usize,
    growth: usize,
    macro_cfg: &MacroConfig,
    h: usize,
    w: usize,
) -> Result<u64, CostError> {
    if depth == 0 {
        return Err(CostError::ZeroChannels {
            c_in: in_channels,
            c_out: growth,
        });
    }
    let bottleneck = macro_cfg.bottleneck_multiplier * growth;
    let mut width = in_channels;
    let mut macs = 0u64;
    for i in 0..depth {
        let c_out = if i + 1 == depth { growth } else { bottleneck };
        macs += op_macs(LayerOp::Conv3x3, width, c_out, h, w, 1)?;
        width = c_out;
    }
    Ok(macs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cellspace::{enumerate, ALL_OPS};

    #[test]
    fn op_params_examples() {
        assert_eq!(op_params(LayerOp::Conv3x3, 16, 8, 1).unwrap(), 1152);
        assert_eq!(op_params(LayerOp::Dwconv3x3, 16, 16, 1).unwrap(), 144);
        assert_eq!(op_params(LayerOp::Id, 16, 16, 1).unwrap(), 0);
        assert_eq!(op_params(LayerOp::Bn, 16, 16, 1).unwrap(), 32);
        assert_eq!(op_params(LayerOp::Gconv3x3, 16, 8, 4).unwrap(), 288);
        assert_eq!(op_params(LayerOp::Lgconv1x1, 16, 8, 4).unwrap(), 32);
    }

    #[test]
    fn op_params_shape_errors() {
        assert!(matches!(
            op_params(LayerOp::Dwconv3x3, 16, 8, 1),
            Err(CostError::DepthwiseWidth { .. })
        ));
        assert!(matches!(
            op_params(LayerOp::Conv1x1, 0, 8, 1),
            Err(CostError::ZeroChannels { .. })
        ));
    }

    #[test]
    fn op_macs_examples() {
        assert_eq!(op_macs(LayerOp::Conv1x1, 16, 8, 32, 32, 1).unwrap(), 131072);
        assert_eq!(
            op_macs(LayerOp::Gconv1x1, 16, 16, 32, 32, 4).unwrap(),
            65536
        );
        assert_eq!(op_macs(LayerOp::Bn, 16, 16, 32, 32, 1).unwrap(), 0);
    }

    #[test]
    fn group_clamping_uses_gcd() {
        assert_eq!(resolve_groups(16, 8, 4), 4);
        assert_eq!(resolve_groups(6, 4, 4), 2);
        assert_eq!(resolve_groups(3, 5, 4), 1);
        assert_eq!(resolve_groups(8, 8, 0), 1);
        // clamped gconv params stay well defined on awkward widths
        assert_eq!(op_params(LayerOp::Gconv1x1, 6, 4, 4).unwrap(), 12);
    }

    #[test]
    fn dwconv_macs_equal_fully_grouped_gconv() {
        for c in [3, 8, 16] {
            let dw = op_macs(LayerOp::Dwconv3x3, c, c, 8, 8, 1).unwrap();
            let g = op_macs(LayerOp::Gconv3x3, c, c, 8, 8, c).unwrap();
            assert_eq!(dw, g);
        }
    }

    #[test]
    fn shape_cell_bottleneck_then_growth() {
        let cfg = MacroConfig::cifar_like();
        let cell: CellSpec = "bn_relu|conv1x1|bn|conv3x3".parse().unwrap();
        let shaped = shape_cell(&cell, 16, 8, &cfg).unwrap();
        let widths: Vec<(usize, usize)> =
            shaped.layers.iter().map(|l| (l.c_in, l.c_out)).collect();
        assert_eq!(widths, vec![(16, 16), (16, 32), (32, 32), (32, 8)]);
        assert!(shaped.transition.is_none());
        assert_eq!(shaped.out_channels, 8);
    }

    #[test]
    fn shape_cell_appends_transition_after_depthwise() {
        let cfg = MacroConfig::cifar_like();
        let cell: CellSpec = "bn_relu|dwconv3x3".parse().unwrap();
        let shaped = shape_cell(&cell, 16, 8, &cfg).unwrap();
        assert_eq!(shaped.layers[1].c_in, 16);
        assert_eq!(shaped.layers[1].c_out, 16);
        let t = shaped.transition.expect("transition expected");
        assert_eq!((t.c_in, t.c_out), (16, 8));
        assert_eq!(t.op, LayerOp::Lgconv1x1);
    }

    #[test]
    fn shape_cell_conv_free_cell_gets_transition() {
        let cfg = MacroConfig::cifar_like();
        let cell: CellSpec = "bn".parse().unwrap();
        let shaped = shape_cell(&cell, 16, 8, &cfg).unwrap();
        assert_eq!(shaped.layers.len(), 1);
        let t = shaped.transition.expect("transition expected");
        assert_eq!((t.c_in, t.c_out), (16, 8));
    }

    #[test]
    fn depthwise_ending_at_growth_needs_no_transition() {
        let cfg = MacroConfig::cifar_like();
        let cell: CellSpec = "bn|dwconv3x3".parse().unwrap();
        let shaped = shape_cell(&cell, 8, 8, &cfg).unwrap();
        assert!(shaped.transition.is_none());
    }

    #[test]
    fn network_cost_rejects_zero_stages() {
        let mut cfg = MacroConfig::cifar_like();
        cfg.stages.clear();
        let cell: CellSpec = "bn|conv1x1".parse().unwrap();
        assert_eq!(network_cost(&cfg, &cell), Err(CostError::NoStages));
    }

    #[test]
    fn network_cost_rejects_feature_map_underflow() {
        let mut cfg = MacroConfig::cifar_like();
        cfg.input = (2, 2, 3);
        let cell: CellSpec = "bn|conv1x1".parse().unwrap();
        assert!(matches!(
            network_cost(&cfg, &cell),
            Err(CostError::FeatureMapUnderflow { .. })
        ));
    }

    #[test]
    fn identity_cell_costs_only_structure() {
        // an all-identity cell contributes nothing itself: total conv params
        // come from stem + per-cell transitions + classifier only
        let cfg = MacroConfig::desk();
        let cell: CellSpec = "id".parse().unwrap();
        let report = network_cost(&cfg, &cell).unwrap();
        let plan = plan_network(&cfg, &cell).unwrap();
        let mut expected = op_params(LayerOp::Conv3x3, 3, cfg.stem_channels(), 1).unwrap();
        for stage in &plan.stages {
            for shaped in &stage.cells {
                let t = shaped.transition.unwrap();
                expected += op_params(t.op, t.c_in, t.c_out, t.groups).unwrap();
            }
        }
        expected += (plan.classifier_in * cfg.num_classes) as u64;
        assert_eq!(report.params, expected);
    }

    #[test]
    fn condensenet_style_cell_cost_scale() {
        // frozen scale check: "bn_relu|lgconv1x1|bn_relu|gconv3x3" under the
        // default macro must stay within 2x of 0.52M params / 63.5M MACs
        let cfg = MacroConfig::cifar_like();
        let cell: CellSpec = "bn_relu|lgconv1x1|bn_relu|gconv3x3".parse().unwrap();
        let report = network_cost(&cfg, &cell).unwrap();
        let params = report.params as f64;
        let macs = report.macs as f64;
        assert!(
            params > 0.52e6 / 2.0 && params < 0.52e6 * 2.0,
            "params {params} outside 2x of 0.52M"
        );
        assert!(
            macs > 63.5e6 / 2.0 && macs < 63.5e6 * 2.0,
            "macs {macs} outside 2x of 63.5M"
        );
    }

    #[test]
    fn appending_a_conv_layer_never_decreases_cost() {
        let cfg = MacroConfig::desk();
        for cell in enumerate(3).unwrap() {
            let base = network_cost(&cfg, &cell).unwrap();
            for child in cell.mutate() {
                let grown = network_cost(&cfg, &child).unwrap();
                assert!(grown.params >= base.params, "params shrank for {child}");
                assert!(grown.macs >= base.macs, "macs shrank for {child}");
            }
        }
    }

    #[test]
    fn param_bytes_is_four_per_param() {
        let cfg = MacroConfig::desk();
        let cell: CellSpec = "bn_relu|conv3x3".parse().unwrap();
        let report = network_cost(&cfg, &cell).unwrap();
        assert_eq!(report.param_bytes, 4 * report.params);
        assert!(report.peak_activation_bytes > 0);
    }

    #[test]
    fn conv3x3_chain_macs_positive_for_all_small_depths() {
        let cfg = MacroConfig::desk();
        for depth in 1..=5 {
            let macs = conv3x3_chain_macs(depth, 8, 4, &cfg, 8, 8).unwrap();
            assert!(macs > 0);
        }
    }

    #[test]
    fn every_op_has_defined_costs() {
        for op in ALL_OPS {
            let (c_in, c_out) = if op == LayerOp::Dwconv3x3 { (8, 8) } else { (8, 4) };
            let p = op_params(op, c_in, c_out, 4).unwrap();
            let m = op_macs(op, c_in, c_out, 6, 6, 4).unwrap();
            if op.is_norm() {
                assert_eq!(m, 0);
            } else {
                assert_eq!(m, p * 36);
            }
        }
    }
}
