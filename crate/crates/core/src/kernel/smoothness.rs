use serde::Serialize;

use crate::arch::{ArchSpec, LayerSpec};

/// Constants with `K(x,x) >= C^2 |x|^2` and `d(x,y) <= M C |x - y|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothnessConstants {
    pub c: f64,
    pub m: f64,
    /// `(C^(l), M^(l))` for the output of every layer, indexed like `arch.layers()`.
    pub per_layer: Vec<(f64, f64)>,
}

/// Layerwise recursion for `(C, M)`.
///
/// The flatten layer contracts the trace of the ReLU moment field with weight
/// `sigma_w^2 / 2`, so its lower-bound constant is `sigma_w C / sqrt(2)`; the
/// Lipschitz ratio is `sqrt(|I^(0)| / |I^(L_f)|)`.
pub fn smoothness_constants(arch: &ArchSpec) -> SmoothnessConstants {
    let i0 = arch.input_grid().size() as f64;
    let mut per_layer: Vec<(f64, f64)> = Vec::with_capacity(arch.layers().len());
    for (i, layer) in arch.layers().iter().enumerate() {
        let ratio = |pixels: usize| (i0 / pixels as f64).sqrt();
        let prev = per_layer.last().copied();
        let next = match layer {
            LayerSpec::InputConv { patch, sigma_w, .. } => {
                let p = patch.as_ref().map_or(1, |p| p.len()) as f64;
                (sigma_w * (p / arch.input_channels() as f64).sqrt(), 1.0)
            }
            LayerSpec::Nonlinear { patch, sigma_w, .. } => {
                let p = patch.as_ref().map_or(1, |p| p.len()) as f64;
                let (c, _) = prev.expect("validated");
                (sigma_w * (p / 2.0).sqrt() * c, ratio(arch.grid(i).size()))
            }
            LayerSpec::Skip { gap } => {
                let (c, _) = prev.expect("validated");
                let (c_early, _) = per_layer[i - gap - 1];
                (c.hypot(c_early), ratio(arch.grid(i).size()))
            }
            LayerSpec::Pool { .. } => {
                let (c, _) = prev.expect("validated");
                (c, ratio(arch.grid(i).size()))
            }
            LayerSpec::Flatten { sigma_w, .. } => {
                let (c, _) = prev.expect("validated");
                (sigma_w * c / 2f64.sqrt(), ratio(arch.input_grid_of(i).size()))
            }
            LayerSpec::Output => prev.expect("validated"),
        };
        per_layer.push(next);
    }
    let (c, m) = *per_layer.last().expect("nonempty");
    SmoothnessConstants { c, m, per_layer }
}
