//! The cell search space: a cell is an alternating sequence of normalization
//! and convolution ops. Even (0-based) positions hold one of the 3 Norm ops,
//! odd positions one of the 6 Conv ops, so a depth-3 cell has 3 * 6 * 3 = 54
//! possible structures and a depth-4 cell 324.
//!
//! Cells have a canonical text form — token names joined by `|`, e.g.
//! `bn_relu|conv3x3|bn|gconv1x1` — which is the interchange format used by
//! every CLI flag and report file. All deterministic tie-breaks elsewhere in
//! the crate use the lexicographic order of this canonical string.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Cells larger than this are refused by [`enumerate`] unless the caller
/// raises the cap explicitly.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// One layer op. The token index assignment is fixed and load-bearing:
/// indices 0..3 are the Norm set, 3..9 the Conv set, and the numeric order
/// defines enumeration order and the surrogate's token encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerOp {
    BnRelu,
    Bn,
    Id,
    Conv1x1,
    Conv3x3,
    Gconv1x1,
    Gconv3x3,
    Lgconv1x1,
    Dwconv3x3,
}

/// The Norm vocabulary, in token-index order.
pub const NORM_OPS: [LayerOp; 3] = [LayerOp::BnRelu, LayerOp::Bn, LayerOp::Id];

/// The Conv vocabulary, in token-index order.
pub const CONV_OPS: [LayerOp; 6] = [
    LayerOp::Conv1x1,
    LayerOp::Conv3x3,
    LayerOp::Gconv1x1,
    LayerOp::Gconv3x3,
    LayerOp::Lgconv1x1,
    LayerOp::Dwconv3x3,
];

/// All nine ops, indexed by token index.
pub const ALL_OPS: [LayerOp; 9] = [
    LayerOp::BnRelu,
    LayerOp::Bn,
    LayerOp::Id,
    LayerOp::Conv1x1,
    LayerOp::Conv3x3,
    LayerOp::Gconv1x1,
    LayerOp::Gconv3x3,
    LayerOp::Lgconv1x1,
    LayerOp::Dwconv3x3,
];

impl LayerOp {
    /// Fixed token index in `[0, 8]`.
    pub fn index(self) -> u8 {
        match self {
            LayerOp::BnRelu => 0,
            LayerOp::Bn => 1,
            LayerOp::Id => 2,
            LayerOp::Conv1x1 => 3,
            LayerOp::Conv3x3 => 4,
            LayerOp::Gconv1x1 => 5,
            LayerOp::Gconv3x3 => 6,
            LayerOp::Lgconv1x1 => 7,
            LayerOp::Dwconv3x3 => 8,
        }
    }

    pub fn from_index(index: u8) -> Option<Self> {
        ALL_OPS.get(index as usize).copied()
    }

    /// A token is a Norm op iff its index is < 3.
    pub fn is_norm(self) -> bool {
        self.index() < 3
    }

    pub fn is_conv(self) -> bool {
        !self.is_norm()
    }

    pub fn name(self) -> &'static str {
        match self {
            LayerOp::BnRelu => "bn_relu",
            LayerOp::Bn => "bn",
            LayerOp::Id => "id",
            LayerOp::Conv1x1 => "conv1x1",
            LayerOp::Conv3x3 => "conv3x3",
            LayerOp::Gconv1x1 => "gconv1x1",
            LayerOp::Gconv3x3 => "gconv3x3",
            LayerOp::Lgconv1x1 => "lgconv1x1",
            LayerOp::Dwconv3x3 => "dwconv3x3",
        }
    }

    pub fn parse_name(token: &str) -> Option<Self> {
        ALL_OPS.iter().copied().find(|op| op.name() == token)
    }

    /// Vocabulary legal at 0-based layer position `i`: Norm ops on even
    /// positions, Conv ops on odd ones.
    pub fn vocabulary_at(position: usize) -> &'static [LayerOp] {
        if position % 2 == 0 {
            &NORM_OPS
        } else {
            &CONV_OPS
        }
    }
}

impl fmt::Display for LayerOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CellError {
    #[error("cell depth must be at least 1")]
    EmptyCell,
    #[error("unknown op token {token:?} at layer {position}")]
    UnknownToken { position: usize, token: String },
    #[error("op {op} is a {} op but layer {position} is a {} position",
            if .op.is_norm() { "Norm" } else { "Conv" },
            if .position % 2 == 0 { "Norm" } else { "Conv" })]
    ParityViolation { position: usize, op: LayerOp },
    #[error("search space for depth {depth} has {size} cells, above the cap of {cap}")]
    CapExceeded { depth: usize, size: u128, cap: u128 },
    #[error("search space size for depth {depth} overflows the counter")]
    SizeOverflow { depth: usize },
    #[error("token index {index} at position {position} is out of range 0..=8")]
    TokenIndexOutOfRange { position: usize, index: u8 },
}

/// An ordered sequence of layer ops obeying the Norm/Conv alternation.
/// Immutable once constructed; equality and hashing follow the layers, and
/// ordering follows the canonical string — the crate's universal tie-break.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CellSpec {
    layers: Vec<LayerOp>,
}

impl Ord for CellSpec {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.canonical().cmp(&other.canonical())
    }
}

impl PartialOrd for CellSpec {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl CellSpec {
    /// Builds a cell, rejecting empty sequences and parity violations.
    pub fn new(layers: Vec<LayerOp>) -> Result<Self, CellError> {
        if layers.is_empty() {
            return Err(CellError::EmptyCell);
        }
        for (position, &op) in layers.iter().enumerate() {
            if op.is_norm() != (position % 2 == 0) {
                return Err(CellError::ParityViolation { position, op });
            }
        }
        Ok(CellSpec { layers })
    }

    pub fn layers(&self) -> &[LayerOp] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Canonical `|`-joined text form. `format` in the round-trip pair; the
    /// inverse of [`CellSpec::from_str`].
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (i, op) in self.layers.iter().enumerate() {
            if i > 0 {
                out.push('|');
            }
            out.push_str(op.name());
        }
        out
    }

    /// Token indices, position i mapping to the fixed index of `layers[i]`.
    pub fn encode_tokens(&self) -> Vec<u8> {
        self.layers.iter().map(|op| op.index()).collect()
    }

    /// Inverse of [`CellSpec::encode_tokens`].
    pub fn decode_tokens(tokens: &[u8]) -> Result<Self, CellError> {
        let layers = tokens
            .iter()
            .enumerate()
            .map(|(position, &index)| {
                LayerOp::from_index(index)
                    .ok_or(CellError::TokenIndexOutOfRange { position, index })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(layers)
    }

    /// All extensions of this cell by exactly one layer. The child count is
    /// 3 when the new position is even (Norm) and 6 when it is odd (Conv);
    /// each child's prefix equals the parent.
    pub fn mutate(&self) -> Vec<CellSpec> {
        LayerOp::vocabulary_at(self.depth())
            .iter()
            .map(|&op| {
                let mut layers = self.layers.clone();
                layers.push(op);
                CellSpec { layers }
            })
            .collect()
    }
}

impl fmt::Display for CellSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

impl FromStr for CellSpec {
    type Err = CellError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        if text.is_empty() {
            return Err(CellError::EmptyCell);
        }
        let layers = text
            .split('|')
            .enumerate()
            .map(|(position, token)| {
                LayerOp::parse_name(token).ok_or_else(|| CellError::UnknownToken {
                    position,
                    token: token.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(layers)
    }
}

impl Serialize for CellSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.canonical())
    }
}

impl<'de> Deserialize<'de> for CellSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Exact number of valid cells of the given depth:
/// the product over positions of 3 (even) or 6 (odd).
pub fn space_size(depth: usize) -> Result<u128, CellError> {
    if depth == 0 {
        return Err(CellError::EmptyCell);
    }
    let mut size: u128 = 1;
    for position in 0..depth {
        let vocab = LayerOp::vocabulary_at(position).len() as u128;
        size = size
            .checked_mul(vocab)
            .ok_or(CellError::SizeOverflow { depth })?;
    }
    Ok(size)
}

/// All valid cells of the given depth, in lexicographic token-index order,
/// with the default size cap.
pub fn enumerate(depth: usize) -> Result<Vec<CellSpec>, CellError> {
    enumerate_with_cap(depth, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_with_cap(depth: usize, cap: u128) -> Result<Vec<CellSpec>, CellError> {
    let size = space_size(depth)?;
    if size > cap {
        return Err(CellError::CapExceeded { depth, size, cap });
    }
    let mut cells = Vec::with_capacity(size as usize);
    let mut current: Vec<usize> = vec![0; depth]; // per-position vocabulary cursor
    loop {
        let layers = current
            .iter()
            .enumerate()
            .map(|(pos, &k)| LayerOp::vocabulary_at(pos)[k])
            .collect();
        cells.push(CellSpec { layers });
        // odometer increment, rightmost position fastest
        let mut pos = depth;
        loop {
            if pos == 0 {
                return Ok(cells);
            }
            pos -= 1;
            current[pos] += 1;
            if current[pos] < LayerOp::vocabulary_at(pos).len() {
                break;
            }
            current[pos] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    #[test]
    fn token_indices_are_fixed() {
        for (i, op) in ALL_OPS.iter().enumerate() {
            assert_eq!(op.index() as usize, i);
            assert_eq!(LayerOp::from_index(i as u8), Some(*op));
        }
        assert_eq!(LayerOp::from_index(9), None);
        for op in NORM_OPS {
            assert!(op.is_norm());
        }
        for op in CONV_OPS {
            assert!(op.is_conv());
        }
    }

    #[test]
    fn space_size_matches_known_counts() {
        assert_eq!(space_size(3).unwrap(), 54);
        assert_eq!(space_size(4).unwrap(), 324);
        assert_eq!(space_size(1).unwrap(), 3);
        assert_eq!(space_size(0), Err(CellError::EmptyCell));
    }

    #[test]
    fn space_size_one_agrees_with_direct_enumeration() {
        // independent count: all length-1 sequences that pass validity
        let valid = ALL_OPS
            .iter()
            .filter(|op| CellSpec::new(vec![**op]).is_ok())
            .count();
        assert_eq!(valid as u128, space_size(1).unwrap());
    }

    #[test]
    fn enumerate_depth_one_lists_norm_ops() {
        let cells = enumerate(1).unwrap();
        let names: Vec<String> = cells.iter().map(|c| c.canonical()).collect();
        assert_eq!(names, vec!["bn_relu", "bn", "id"]);
    }

    #[test]
    fn enumerate_depth_two_is_cross_product_in_index_order() {
        let cells = enumerate(2).unwrap();
        assert_eq!(cells.len(), 18);
        assert_eq!(cells[0].canonical(), "bn_relu|conv1x1");
        assert_eq!(cells[17].canonical(), "id|dwconv3x3");
    }

    #[test]
    fn enumerate_depth_four_has_324_cells() {
        assert_eq!(enumerate(4).unwrap().len(), 324);
    }

    #[test]
    fn enumerate_respects_cap() {
        let err = enumerate_with_cap(4, 100).unwrap_err();
        assert_eq!(
            err,
            CellError::CapExceeded {
                depth: 4,
                size: 324,
                cap: 100
            }
        );
    }

    #[test]
    fn enumerate_sizes_match_space_size_and_are_distinct() {
        for depth in 1..=6 {
            let cells = enumerate(depth).unwrap();
            assert_eq!(cells.len() as u128, space_size(depth).unwrap());
            let unique: HashSet<String> = cells.iter().map(|c| c.canonical()).collect();
            assert_eq!(unique.len(), cells.len());
        }
    }

    #[test]
    fn mutate_respects_parity() {
        let cell: CellSpec = "bn".parse().unwrap();
        let children = cell.mutate();
        assert_eq!(children.len(), 6);
        for (child, conv) in children.iter().zip(CONV_OPS) {
            assert_eq!(child.layers()[0], LayerOp::Bn);
            assert_eq!(child.layers()[1], conv);
        }

        let cell: CellSpec = "bn_relu|conv3x3".parse().unwrap();
        let children = cell.mutate();
        assert_eq!(children.len(), 3);
        let tails: Vec<LayerOp> = children.iter().map(|c| c.layers()[2]).collect();
        assert_eq!(tails, vec![LayerOp::BnRelu, LayerOp::Bn, LayerOp::Id]);
    }

    #[test]
    fn mutating_a_batch_multiplies_by_conv_vocabulary() {
        // 128 depth-3 parents would mutate into 128 * 6 children; the full
        // depth-3 space of 54 parents yields 324.
        let parents = enumerate(3).unwrap();
        let children: Vec<CellSpec> = parents.iter().flat_map(|c| c.mutate()).collect();
        assert_eq!(children.len(), parents.len() * 6);
        assert_eq!(children.len(), 324);
    }

    #[test]
    fn mutate_union_equals_next_depth() {
        for depth in 1..=4 {
            let mut children: Vec<CellSpec> = enumerate(depth)
                .unwrap()
                .iter()
                .flat_map(|c| c.mutate())
                .collect();
            children.sort();
            children.dedup();
            let mut next = enumerate(depth + 1).unwrap();
            next.sort();
            assert_eq!(children, next);
        }
    }

    #[test]
    fn encode_tokens_examples() {
        let cell: CellSpec = "bn|conv1x1".parse().unwrap();
        assert_eq!(cell.encode_tokens(), vec![1, 3]);
        let cell: CellSpec = "bn_relu|dwconv3x3|id".parse().unwrap();
        assert_eq!(cell.encode_tokens(), vec![0, 8, 2]);
    }

    #[test]
    fn encode_decode_round_trips_all_depth_four_cells() {
        for cell in enumerate(4).unwrap() {
            let decoded = CellSpec::decode_tokens(&cell.encode_tokens()).unwrap();
            assert_eq!(decoded, cell);
        }
    }

    #[test]
    fn encode_is_injective_per_depth() {
        for depth in 1..=4 {
            let cells = enumerate(depth).unwrap();
            let unique: HashSet<Vec<u8>> = cells.iter().map(|c| c.encode_tokens()).collect();
            assert_eq!(unique.len(), cells.len());
        }
    }

    #[test]
    fn parse_errors_name_the_offending_position() {
        assert_eq!("".parse::<CellSpec>(), Err(CellError::EmptyCell));
        assert_eq!(
            "conv3x3".parse::<CellSpec>(),
            Err(CellError::ParityViolation {
                position: 0,
                op: LayerOp::Conv3x3
            })
        );
        assert_eq!(
            "bn_relu|bn".parse::<CellSpec>(),
            Err(CellError::ParityViolation {
                position: 1,
                op: LayerOp::Bn
            })
        );
        assert_eq!(
            "bn_relu|wat".parse::<CellSpec>(),
            Err(CellError::UnknownToken {
                position: 1,
                token: "wat".to_string()
            })
        );
    }

    #[test]
    fn parse_format_round_trip() {
        let cell: CellSpec = "bn_relu|conv3x3".parse().unwrap();
        assert_eq!(cell.depth(), 2);
        assert_eq!(cell.canonical(), "bn_relu|conv3x3");
    }

    fn arb_cell(max_depth: usize) -> impl Strategy<Value = CellSpec> {
        (1..=max_depth).prop_flat_map(|depth| {
            let positions: Vec<_> = (0..depth)
                .map(|pos| 0..LayerOp::vocabulary_at(pos).len())
                .collect();
            positions.prop_map(|choice| {
                let layers = choice
                    .into_iter()
                    .enumerate()
                    .map(|(pos, k)| LayerOp::vocabulary_at(pos)[k])
                    .collect();
                CellSpec::new(layers).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn canonical_round_trips(cell in arb_cell(8)) {
            let parsed: CellSpec = cell.canonical().parse().unwrap();
            prop_assert_eq!(parsed, cell);
        }

        #[test]
        fn mutate_children_extend_parent(cell in arb_cell(6)) {
            let children = cell.mutate();
            let expected = if cell.depth() % 2 == 0 { 3 } else { 6 };
            prop_assert_eq!(children.len(), expected);
            for child in children {
                prop_assert_eq!(child.depth(), cell.depth() + 1);
                prop_assert_eq!(&child.layers()[..cell.depth()], cell.layers());
            }
        }
    }
}
