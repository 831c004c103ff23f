//! Architecture descriptions: periodic pixel grids, convolutional patches and
//! the layer sequence of a random ReLU network.
//!
//! An [`ArchSpec`] is the infinite-width description of a network (variances,
//! patches and grids). Channel counts of hidden layers only enter through
//! [`crate::randnet`]. Documents are JSON:
//!
//! ```json
//! {
//!   "input_channels": 3,
//!   "input_dims": [4, 4],
//!   "layers": [
//!     {"type": "input_conv", "patch": [[-1,-1],[-1,0],[-1,1],[0,-1],[0,0],[0,1],[1,-1],[1,0],[1,1]],
//!      "sigma_w": 1.0, "sigma_b": 0.0},
//!     {"type": "nonlinear", "patch": [[0,0]], "sigma_w": 1.414, "sigma_b": 0.1},
//!     {"type": "pool", "cell": [2, 2]},
//!     {"type": "flatten", "sigma_w": 1.414, "sigma_b": 0.0},
//!     {"type": "output"}
//!   ]
//! }
//! ```

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Periodic pixel set `Z_{h1} x ... x Z_{hD}`, flattened row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelGrid {
    dims: Vec<usize>,
}

impl PixelGrid {
    pub fn new(dims: Vec<usize>) -> Result<Self, ArchError> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(ArchError::violation(
                None,
                Rule::GridExtent,
                format!("grid dims must be a nonempty list of positive integers, got {dims:?}"),
            ));
        }
        Ok(Self { dims })
    }

    /// The single-pixel grid used by fully connected layers.
    pub fn single(rank: usize) -> Self {
        Self { dims: vec![1; rank.max(1)] }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn size(&self) -> usize {
        self.dims.iter().product()
    }

    fn unravel(&self, mut index: usize) -> Vec<usize> {
        let mut coords = vec![0; self.dims.len()];
        for (d, &h) in self.dims.iter().enumerate().rev() {
            coords[d] = index % h;
            index /= h;
        }
        coords
    }

    fn ravel(&self, coords: &[usize]) -> usize {
        coords.iter().zip(&self.dims).fold(0, |acc, (&c, &h)| acc * h + c)
    }

    /// Index of `alpha + sign * offset` with periodic wrapping in every dimension.
    pub fn shifted(&self, alpha: usize, offset: &[i64], sign: i64) -> usize {
        let mut coords = self.unravel(alpha);
        for ((c, &h), &o) in coords.iter_mut().zip(&self.dims).zip(offset) {
            let h = h as i64;
            *c = (*c as i64 + sign * o).rem_euclid(h) as usize;
        }
        self.ravel(&coords)
    }

    /// `table[g][alpha]` is the index of `alpha + sign * offsets[g]`.
    pub fn shift_table(&self, offsets: &[Vec<i64>], sign: i64) -> Vec<Vec<usize>> {
        offsets
            .iter()
            .map(|o| (0..self.size()).map(|a| self.shifted(a, o, sign)).collect())
            .collect()
    }

    /// Coarse grid and fine-to-coarse pixel map for block pooling with the
    /// given cell extent per dimension.
    pub fn pool(&self, cell: &[usize]) -> Result<(PixelGrid, Vec<usize>), ArchError> {
        if cell.len() != self.dims.len() {
            return Err(ArchError::violation(
                None,
                Rule::PoolCell,
                format!("pool cell {cell:?} has rank {} but grid has rank {}", cell.len(), self.rank()),
            ));
        }
        if let Some((d, (&h, &f))) =
            self.dims.iter().zip(cell).enumerate().find(|(_, (&h, &f))| f == 0 || h % f != 0)
        {
            return Err(ArchError::violation(
                None,
                Rule::PoolCell,
                format!("pool factor {f} does not divide extent {h} of dimension {d}"),
            ));
        }
        let coarse = PixelGrid { dims: self.dims.iter().zip(cell).map(|(h, f)| h / f).collect() };
        let map = (0..self.size())
            .map(|a| {
                let c: Vec<usize> = self.unravel(a).iter().zip(cell).map(|(x, f)| x / f).collect();
                coarse.ravel(&c)
            })
            .collect();
        Ok((coarse, map))
    }
}

/// Convolutional patch: a set of offset vectors, symmetric under negation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Patch {
    offsets: Vec<Vec<i64>>,
}

impl Patch {
    pub fn new(offsets: Vec<Vec<i64>>) -> Self {
        Self { offsets }
    }

    /// Only the zero offset; recovers fully connected layers on a one-pixel grid.
    pub fn origin(rank: usize) -> Self {
        Self { offsets: vec![vec![0; rank.max(1)]] }
    }

    /// Centered box patch, e.g. `[3, 3]` gives the usual 3x3 patch. Extents must be odd.
    pub fn centered(extent: &[usize]) -> Self {
        let mut offsets = vec![vec![]];
        for &e in extent {
            let half = (e / 2) as i64;
            offsets = offsets
                .into_iter()
                .flat_map(|prefix: Vec<i64>| {
                    (-half..=half).map(move |o| {
                        let mut v = prefix.clone();
                        v.push(o);
                        v
                    })
                })
                .collect();
        }
        Self { offsets }
    }

    pub fn offsets(&self) -> &[Vec<i64>] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    fn wrapped(&self, grid: &PixelGrid, sign: i64) -> Vec<Vec<i64>> {
        self.offsets
            .iter()
            .map(|o| {
                o.iter().zip(grid.dims()).map(|(&x, &h)| (sign * x).rem_euclid(h as i64)).collect()
            })
            .collect()
    }

    fn check(&self, grid: &PixelGrid, layer: usize, out: &mut Vec<Violation>) {
        if self.offsets.is_empty() {
            out.push(Violation::new(Some(layer), Rule::PatchNonEmpty, "patch has no offsets".into()));
            return;
        }
        if let Some(bad) = self.offsets.iter().find(|o| o.len() != grid.rank()) {
            out.push(Violation::new(
                Some(layer),
                Rule::PatchRank,
                format!("offset {bad:?} has rank {} but the grid has rank {}", bad.len(), grid.rank()),
            ));
            return;
        }
        let pos = self.wrapped(grid, 1);
        let set: HashSet<_> = pos.iter().cloned().collect();
        if set.len() != pos.len() {
            out.push(Violation::new(
                Some(layer),
                Rule::PatchDistinct,
                "patch offsets coincide after periodic wrapping".into(),
            ));
        }
        let neg: HashSet<_> = self.wrapped(grid, -1).into_iter().collect();
        if neg != set {
            out.push(Violation::new(
                Some(layer),
                Rule::PatchSymmetric,
                "patch is not symmetric under negation (-P != P)".into(),
            ));
        }
    }
}

/// One layer of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    /// First layer: affine convolution of the raw input.
    InputConv {
        #[serde(default)]
        patch: Option<Patch>,
        sigma_w: f64,
        sigma_b: f64,
    },
    /// ReLU followed by an affine convolution; fully connected on a one-pixel grid.
    Nonlinear {
        #[serde(default)]
        patch: Option<Patch>,
        sigma_w: f64,
        sigma_b: f64,
    },
    /// Adds the output of the layer `gap` steps before the previous one.
    Skip { gap: usize },
    /// Sum pooling over equal rectangular cells.
    Pool { cell: Vec<usize> },
    /// ReLU followed by a fully connected map onto a single pixel.
    Flatten { sigma_w: f64, sigma_b: f64 },
    /// Selects the scalar output; the label is its sign.
    Output,
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::InputConv { .. } => "input_conv",
            LayerSpec::Nonlinear { .. } => "nonlinear",
            LayerSpec::Skip { .. } => "skip",
            LayerSpec::Pool { .. } => "pool",
            LayerSpec::Flatten { .. } => "flatten",
            LayerSpec::Output => "output",
        }
    }

    /// `(sigma_w, sigma_b)` for layers that carry weights.
    pub fn variances(&self) -> Option<(f64, f64)> {
        match *self {
            LayerSpec::InputConv { sigma_w, sigma_b, .. }
            | LayerSpec::Nonlinear { sigma_w, sigma_b, .. }
            | LayerSpec::Flatten { sigma_w, sigma_b } => Some((sigma_w, sigma_b)),
            _ => None,
        }
    }

    pub fn patch(&self) -> Option<&Patch> {
        match self {
            LayerSpec::InputConv { patch, .. } | LayerSpec::Nonlinear { patch, .. } => patch.as_ref(),
            _ => None,
        }
    }
}

/// Named structural rules; the `Display` form is what error messages cite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    InputChannels,
    GridExtent,
    FirstLayerInputConv,
    SingleInputConv,
    SingleFlatten,
    FlattenThenOutput,
    PositiveSigmaW,
    NonNegativeSigmaB,
    PatchNonEmpty,
    PatchRank,
    PatchDistinct,
    PatchSymmetric,
    SkipGapRange,
    SkipAfterConvolution,
    SkipGridMatch,
    PoolAfterConvolution,
    PoolCell,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::InputChannels => "input_channels must be positive",
            Rule::GridExtent => "every grid extent must be positive",
            Rule::FirstLayerInputConv => "the first layer must be input_conv",
            Rule::SingleInputConv => "input_conv may only appear as the first layer",
            Rule::SingleFlatten => "exactly one flatten layer is required",
            Rule::FlattenThenOutput => "flatten must be followed only by a single output layer",
            Rule::PositiveSigmaW => "sigma_w must be positive",
            Rule::NonNegativeSigmaB => "sigma_b must be non-negative",
            Rule::PatchNonEmpty => "patch must be nonempty",
            Rule::PatchRank => "patch offsets must match the grid rank",
            Rule::PatchDistinct => "patch offsets must be distinct on the torus",
            Rule::PatchSymmetric => "patch must be symmetric under negation",
            Rule::SkipGapRange => "skip gap k must lie in 1..=l-2",
            Rule::SkipAfterConvolution => "skip must directly follow a convolutional or fully connected layer",
            Rule::SkipGridMatch => "skip must join layers with identical pixel grids",
            Rule::PoolAfterConvolution => "pool must directly follow a nonlinear convolutional layer",
            Rule::PoolCell => "pool cells must partition the grid into equal blocks",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Zero-based position in the `layers` array, if the rule is layer-local.
    pub layer: Option<usize>,
    pub rule: Rule,
    pub detail: String,
}

impl Violation {
    fn new(layer: Option<usize>, rule: Rule, detail: String) -> Self {
        Self { layer, rule, detail }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.layer {
            Some(l) => write!(f, "layers[{l}]: {} ({})", self.rule, self.detail),
            None => write!(f, "{} ({})", self.rule, self.detail),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArchError {
    #[error("architecture schema violation: {0}")]
    Schema(String),
    #[error("architecture constraint violation: {}", join(.0))]
    Constraint(Vec<Violation>),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl ArchError {
    fn violation(layer: Option<usize>, rule: Rule, detail: String) -> Self {
        ArchError::Constraint(vec![Violation::new(layer, rule, detail)])
    }

    pub fn violations(&self) -> &[Violation] {
        match self {
            ArchError::Constraint(v) => v,
            ArchError::Schema(_) => &[],
        }
    }

    pub fn breaks(&self, rule: Rule) -> bool {
        self.violations().iter().any(|v| v.rule == rule)
    }
}

/// On-disk form of an architecture.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArchDocument {
    input_channels: usize,
    input_dims: Vec<usize>,
    layers: Vec<LayerSpec>,
}

/// A validated architecture together with the pixel grid of every layer output.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchSpec {
    input_channels: usize,
    input_grid: PixelGrid,
    layers: Vec<LayerSpec>,
    grids: Vec<PixelGrid>,
}

impl Serialize for ArchSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ArchDocument {
            input_channels: self.input_channels,
            input_dims: self.input_grid.dims.clone(),
            layers: self.layers.clone(),
        }
        .serialize(s)
    }
}

/// Parse and validate a JSON architecture document.
pub fn load_arch(document: &str) -> Result<ArchSpec, ArchError> {
    let doc: ArchDocument =
        serde_json::from_str(document).map_err(|e| ArchError::Schema(e.to_string()))?;
    ArchSpec::new(doc.input_channels, doc.input_dims, doc.layers)
}

/// Output grid of every layer, starting from `input`.
pub fn layer_geometry(input: &PixelGrid, layers: &[LayerSpec]) -> Result<Vec<PixelGrid>, ArchError> {
    let mut grids = Vec::with_capacity(layers.len());
    let mut current = input.clone();
    for (i, layer) in layers.iter().enumerate() {
        current = match layer {
            LayerSpec::Pool { cell } => current.pool(cell).map_err(|e| match e {
                ArchError::Constraint(mut v) => {
                    v.iter_mut().for_each(|x| x.layer = Some(i));
                    ArchError::Constraint(v)
                }
                other => other,
            })?.0,
            LayerSpec::Flatten { .. } => PixelGrid::single(current.rank()),
            _ => current,
        };
        grids.push(current.clone());
    }
    Ok(grids)
}

impl ArchSpec {
    pub fn new(
        input_channels: usize,
        input_dims: Vec<usize>,
        layers: Vec<LayerSpec>,
    ) -> Result<Self, ArchError> {
        let input_grid = PixelGrid::new(input_dims)?;
        let rank = input_grid.rank();
        let mut layers = layers;
        for layer in &mut layers {
            if let LayerSpec::InputConv { patch, .. } | LayerSpec::Nonlinear { patch, .. } = layer {
                patch.get_or_insert_with(|| Patch::origin(rank));
            }
        }
        let mut violations = Vec::new();
        if input_channels == 0 {
            violations.push(Violation::new(None, Rule::InputChannels, "input_channels = 0".into()));
        }
        check_sequence(&layers, &mut violations);
        let grids = match layer_geometry(&input_grid, &layers) {
            Ok(g) => Some(g),
            Err(ArchError::Constraint(v)) => {
                violations.extend(v);
                None
            }
            Err(e) => return Err(e),
        };
        if let Some(grids) = &grids {
            check_layers(&input_grid, &layers, grids, &mut violations);
        }
        if !violations.is_empty() {
            return Err(ArchError::Constraint(violations));
        }
        Ok(Self { input_channels, input_grid, layers, grids: grids.unwrap_or_default() })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("architecture serializes")
    }

    pub fn input_channels(&self) -> usize {
        self.input_channels
    }

    pub fn input_grid(&self) -> &PixelGrid {
        &self.input_grid
    }

    /// Input dimension `n = n_C^(0) |I^(0)|`.
    pub fn input_len(&self) -> usize {
        self.input_channels * self.input_grid.size()
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Output grid of `layers[i]`.
    pub fn grid(&self, i: usize) -> &PixelGrid {
        &self.grids[i]
    }

    /// Grid feeding `layers[i]`.
    pub fn input_grid_of(&self, i: usize) -> &PixelGrid {
        if i == 0 {
            &self.input_grid
        } else {
            &self.grids[i - 1]
        }
    }

    /// `(layer index, output grid)` for every layer.
    pub fn geometry(&self) -> Vec<(usize, PixelGrid)> {
        self.grids.iter().cloned().enumerate().collect()
    }

    pub fn flatten_index(&self) -> usize {
        self.layers
            .iter()
            .position(|l| matches!(l, LayerSpec::Flatten { .. }))
            .expect("validated architecture has a flatten layer")
    }

    /// Pixel grid of the layer immediately before flattening.
    pub fn pre_flatten_grid(&self) -> &PixelGrid {
        self.input_grid_of(self.flatten_index())
    }

    /// Same architecture with a different number of input channels.
    pub fn with_input_channels(&self, channels: usize) -> Result<Self, ArchError> {
        Self::new(channels, self.input_grid.dims.clone(), self.layers.clone())
    }

    /// Fully connected ReLU network on `n` inputs with `hidden` hidden layers,
    /// He-style weight variance and the given bias standard deviation.
    pub fn fully_connected(n: usize, hidden: usize, sigma_b: f64) -> Result<Self, ArchError> {
        let sw = std::f64::consts::SQRT_2;
        let mut layers = vec![LayerSpec::InputConv { patch: None, sigma_w: sw, sigma_b }];
        for _ in 1..hidden {
            layers.push(LayerSpec::Nonlinear { patch: None, sigma_w: sw, sigma_b });
        }
        layers.push(LayerSpec::Flatten { sigma_w: sw, sigma_b });
        layers.push(LayerSpec::Output);
        Self::new(n, vec![1], layers)
    }
}

fn check_sequence(layers: &[LayerSpec], out: &mut Vec<Violation>) {
    if !matches!(layers.first(), Some(LayerSpec::InputConv { .. })) {
        out.push(Violation::new(Some(0), Rule::FirstLayerInputConv, "missing input_conv".into()));
    }
    for (i, l) in layers.iter().enumerate().skip(1) {
        if matches!(l, LayerSpec::InputConv { .. }) {
            out.push(Violation::new(Some(i), Rule::SingleInputConv, "second input_conv".into()));
        }
    }
    let flattens: Vec<usize> = layers
        .iter()
        .enumerate()
        .filter(|(_, l)| matches!(l, LayerSpec::Flatten { .. }))
        .map(|(i, _)| i)
        .collect();
    if flattens.len() != 1 {
        out.push(Violation::new(None, Rule::SingleFlatten, format!("found {}", flattens.len())));
    }
    let outputs = layers.iter().filter(|l| matches!(l, LayerSpec::Output)).count();
    let tail_ok = layers.len() >= 2
        && matches!(layers[layers.len() - 2], LayerSpec::Flatten { .. })
        && matches!(layers[layers.len() - 1], LayerSpec::Output)
        && outputs == 1;
    if !tail_ok {
        out.push(Violation::new(
            None,
            Rule::FlattenThenOutput,
            "layers must end with [flatten, output]".into(),
        ));
    }
}

fn check_layers(input: &PixelGrid, layers: &[LayerSpec], grids: &[PixelGrid], out: &mut Vec<Violation>) {
    for (i, layer) in layers.iter().enumerate() {
        if let Some((sw, sb)) = layer.variances() {
            if !(sw > 0.0 && sw.is_finite()) {
                out.push(Violation::new(Some(i), Rule::PositiveSigmaW, format!("sigma_w = {sw}")));
            }
            if !(sb >= 0.0 && sb.is_finite()) {
                out.push(Violation::new(Some(i), Rule::NonNegativeSigmaB, format!("sigma_b = {sb}")));
            }
        }
        let in_grid = if i == 0 { input } else { &grids[i - 1] };
        if let Some(p) = layer.patch() {
            p.check(in_grid, i, out);
        }
        let prev_is_conv = i > 0 && matches!(layers[i - 1], LayerSpec::Nonlinear { .. });
        match *layer {
            LayerSpec::Skip { gap } => {
                // layers[i] is layer l+1 with l = i, adding the output of layer l-k.
                let l = i;
                if gap < 1 || gap + 2 > l {
                    out.push(Violation::new(
                        Some(i),
                        Rule::SkipGapRange,
                        format!("gap {gap} at layer {} (l = {l})", l + 1),
                    ));
                } else if grids[l - gap - 1] != grids[i - 1] {
                    out.push(Violation::new(
                        Some(i),
                        Rule::SkipGridMatch,
                        format!("{:?} vs {:?}", grids[l - gap - 1].dims(), grids[i - 1].dims()),
                    ));
                }
                if !prev_is_conv {
                    out.push(Violation::new(
                        Some(i),
                        Rule::SkipAfterConvolution,
                        format!("preceded by {}", if i > 0 { layers[i - 1].kind() } else { "nothing" }),
                    ));
                }
            }
            LayerSpec::Pool { .. } if !prev_is_conv => {
                out.push(Violation::new(
                    Some(i),
                    Rule::PoolAfterConvolution,
                    format!("preceded by {}", if i > 0 { layers[i - 1].kind() } else { "nothing" }),
                ));
            }
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fc_doc(layers: &str) -> String {
        format!(r#"{{"input_channels": 5, "input_dims": [1], "layers": [{layers}]}}"#)
    }

    #[test]
    fn fully_connected_document_has_single_pixel_grids() {
        let doc = fc_doc(
            r#"{"type":"input_conv","sigma_w":1.0,"sigma_b":0.0},
               {"type":"nonlinear","sigma_w":1.4,"sigma_b":0.1},
               {"type":"nonlinear","sigma_w":1.4,"sigma_b":0.1},
               {"type":"flatten","sigma_w":1.4,"sigma_b":0.0},
               {"type":"output"}"#,
        );
        let arch = load_arch(&doc).unwrap();
        assert!(arch.geometry().iter().all(|(_, g)| g.size() == 1));
        assert_eq!(arch.input_len(), 5);
        assert_eq!(arch.pre_flatten_grid().size(), 1);
    }

    #[test]
    fn pool_after_pool_is_rejected() {
        let doc = r#"{"input_channels":1,"input_dims":[8,8],"layers":[
            {"type":"input_conv","sigma_w":1.0,"sigma_b":0.0},
            {"type":"nonlinear","sigma_w":1.0,"sigma_b":0.0},
            {"type":"pool","cell":[2,2]},
            {"type":"pool","cell":[2,2]},
            {"type":"flatten","sigma_w":1.0,"sigma_b":0.0},
            {"type":"output"}]}"#;
        let err = load_arch(doc).unwrap_err();
        assert!(err.breaks(Rule::PoolAfterConvolution), "{err}");
        assert!(err.to_string().contains("pool must directly follow"));
    }

    #[test]
    fn skip_gap_of_l_minus_one_is_rejected() {
        // layers[3] is layer 4 = l + 1 with l = 3; k = l - 1 = 2 is out of range.
        let mk = |gap| {
            fc_doc(&format!(
                r#"{{"type":"input_conv","sigma_w":1.0,"sigma_b":0.0}},
                   {{"type":"nonlinear","sigma_w":1.0,"sigma_b":0.0}},
                   {{"type":"nonlinear","sigma_w":1.0,"sigma_b":0.0}},
                   {{"type":"skip","gap":{gap}}},
                   {{"type":"flatten","sigma_w":1.0,"sigma_b":0.0}},
                   {{"type":"output"}}"#
            ))
        };
        assert!(load_arch(&mk(2)).unwrap_err().breaks(Rule::SkipGapRange));
        assert!(load_arch(&mk(0)).unwrap_err().breaks(Rule::SkipGapRange));
        assert!(load_arch(&mk(1)).is_ok());
    }

    #[test]
    fn pooled_geometry() {
        let arch = ArchSpec::new(
            1,
            vec![8, 8],
            vec![
                LayerSpec::InputConv { patch: Some(Patch::centered(&[3, 3])), sigma_w: 1.0, sigma_b: 0.0 },
                LayerSpec::Nonlinear { patch: Some(Patch::centered(&[3, 3])), sigma_w: 1.0, sigma_b: 0.0 },
                LayerSpec::Pool { cell: vec![2, 2] },
                LayerSpec::Flatten { sigma_w: 1.0, sigma_b: 0.0 },
                LayerSpec::Output,
            ],
        )
        .unwrap();
        assert_eq!(arch.pre_flatten_grid().size(), 16);
        assert_eq!(arch.grid(2).dims(), &[4, 4]);
        assert_eq!(arch.grid(3).size(), 1);
    }

    #[test]
    fn pool_factor_must_divide_extent() {
        let grid = PixelGrid::new(vec![4, 4]).unwrap();
        let layers = vec![
            LayerSpec::InputConv { patch: None, sigma_w: 1.0, sigma_b: 0.0 },
            LayerSpec::Nonlinear { patch: None, sigma_w: 1.0, sigma_b: 0.0 },
            LayerSpec::Pool { cell: vec![3, 3] },
        ];
        let err = layer_geometry(&grid, &layers).unwrap_err();
        assert!(err.breaks(Rule::PoolCell));
        assert_eq!(err.violations()[0].layer, Some(2));
    }

    #[test]
    fn asymmetric_patch_is_rejected() {
        let err = ArchSpec::new(
            1,
            vec![5],
            vec![
                LayerSpec::InputConv { patch: Some(Patch::new(vec![vec![0], vec![1]])), sigma_w: 1.0, sigma_b: 0.0 },
                LayerSpec::Flatten { sigma_w: 1.0, sigma_b: 0.0 },
                LayerSpec::Output,
            ],
        )
        .unwrap_err();
        assert!(err.breaks(Rule::PatchSymmetric));
    }

    #[test]
    fn schema_errors_name_the_field() {
        let err = load_arch(&fc_doc(r#"{"type":"flatten","sigma_w":1.0},{"type":"output"}"#)).unwrap_err();
        assert!(matches!(err, ArchError::Schema(_)));
        assert!(err.to_string().contains("sigma_b"), "{err}");
    }

    #[test]
    fn pool_needs_preceding_convolution_not_input_layer() {
        let err = ArchSpec::new(
            1,
            vec![4],
            vec![
                LayerSpec::InputConv { patch: None, sigma_w: 1.0, sigma_b: 0.0 },
                LayerSpec::Pool { cell: vec![2] },
                LayerSpec::Flatten { sigma_w: 1.0, sigma_b: 0.0 },
                LayerSpec::Output,
            ],
        )
        .unwrap_err();
        assert!(err.breaks(Rule::PoolAfterConvolution));
    }

    #[test]
    fn shifts_wrap_periodically() {
        let g = PixelGrid::new(vec![3, 4]).unwrap();
        // (0, 0) shifted by (-1, -1) lands on (2, 3).
        assert_eq!(g.shifted(0, &[-1, -1], 1), 2 * 4 + 3);
        assert_eq!(g.shifted(0, &[-1, -1], -1), 4 + 1);
    }
}
