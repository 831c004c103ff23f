use nalgebra::DMatrix;

use super::psi::{psi_clamped, CORRELATION_TOL};
use super::KernelError;
use crate::arch::{ArchSpec, LayerSpec, PixelGrid};

/// Pixel-pair covariances of one layer output for an ordered input pair.
///
/// `xx[(a, b)] = K_ab(x, x)`, `xy[(a, b)] = K_ab(x, y)`, `yy[(a, b)] = K_ab(y, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelField {
    /// Zero-based position of the layer in the architecture.
    pub layer: usize,
    pub xx: DMatrix<f64>,
    pub xy: DMatrix<f64>,
    pub yy: DMatrix<f64>,
}

impl KernelField {
    /// Field of the input layer for the pair `(x, y)`.
    pub fn input(arch: &ArchSpec, x: &[f64], y: &[f64]) -> Result<Self, KernelError> {
        let plan = Plan::new(arch);
        check_len(arch, x)?;
        check_len(arch, y)?;
        Ok(Self {
            layer: 0,
            xx: plan.input(x, x),
            xy: plan.input(x, y),
            yy: plan.input(y, y),
        })
    }

    /// Trace kernels `(K(x,x), K(x,y), K(y,y))` summed over the diagonal pixels.
    pub fn traces(&self) -> (f64, f64, f64) {
        (self.xx.trace(), self.xy.trace(), self.yy.trace())
    }

    pub fn size(&self) -> usize {
        self.xy.nrows()
    }
}

pub(crate) fn check_len(arch: &ArchSpec, x: &[f64]) -> Result<(), KernelError> {
    if x.len() != arch.input_len() {
        return Err(KernelError::Dimension { expected: arch.input_len(), got: x.len() });
    }
    Ok(())
}

/// Propagate `field` (the output of layer `layer - 1`) through `arch.layers()[layer]`.
///
/// `history` must hold the fields of all earlier layers when the layer is a skip
/// connection; it is ignored otherwise.
pub fn propagate_layer(
    arch: &ArchSpec,
    layer: usize,
    field: &KernelField,
    history: &[KernelField],
) -> Result<KernelField, KernelError> {
    if layer == 0 || layer >= arch.layers().len() || field.layer + 1 != layer {
        return Err(KernelError::Shape(format!(
            "cannot propagate a layer-{} field through layer {layer}",
            field.layer
        )));
    }
    let expected = arch.input_grid_of(layer).size();
    if field.size() != expected {
        return Err(KernelError::Shape(format!(
            "field has {} pixels but layer {layer} expects {expected}",
            field.size()
        )));
    }
    let step = Step::new(arch, layer);
    let pick = |f: fn(&KernelField) -> &DMatrix<f64>| -> Result<Vec<&DMatrix<f64>>, KernelError> {
        if let Step::Skip { source } = step {
            let earlier = history.get(source).ok_or_else(|| {
                KernelError::Shape(format!("skip at layer {layer} needs the field of layer {source}"))
            })?;
            Ok(vec![f(earlier)])
        } else {
            Ok(vec![])
        }
    };
    let dx = diagonal(&field.xx)?;
    let dy = diagonal(&field.yy)?;
    let xx = step.cross(&field.xx, &dx, &dx, pick(|f| &f.xx)?.first().copied())?;
    let xy = step.cross(&field.xy, &dx, &dy, pick(|f| &f.xy)?.first().copied())?;
    let yy = step.cross(&field.yy, &dy, &dy, pick(|f| &f.yy)?.first().copied())?;
    Ok(KernelField { layer, xx, xy, yy })
}

/// Fields of every layer for the pair `(x, y)`.
pub fn layer_fields(arch: &ArchSpec, x: &[f64], y: &[f64]) -> Result<Vec<KernelField>, KernelError> {
    let mut fields = vec![KernelField::input(arch, x, y)?];
    for layer in 1..arch.layers().len() {
        let next = propagate_layer(arch, layer, fields.last().expect("nonempty"), &fields)?;
        fields.push(next);
    }
    Ok(fields)
}

pub(crate) fn diagonal(m: &DMatrix<f64>) -> Result<Vec<f64>, KernelError> {
    let d: Vec<f64> = m.diagonal().iter().copied().collect();
    if let Some((i, &v)) = d.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(KernelError::NegativeDiagonal { pixel: i, value: v });
    }
    Ok(d)
}

/// Precomputed index tables for every layer of an architecture.
pub(crate) struct Plan {
    steps: Vec<Step>,
}

pub(crate) enum Step {
    Input { shifts: Vec<Vec<usize>>, channels: usize, pixels: usize, sw2: f64, sb2: f64 },
    Nonlinear { shifts: Vec<Vec<usize>>, sw2: f64, sb2: f64 },
    Skip { source: usize },
    Pool { map: Vec<usize>, coarse: usize },
    Flatten { sw2: f64, sb2: f64 },
    Output,
}

impl Plan {
    pub(crate) fn new(arch: &ArchSpec) -> Self {
        Self { steps: (0..arch.layers().len()).map(|i| Step::new(arch, i)).collect() }
    }

    pub(crate) fn input(&self, x: &[f64], y: &[f64]) -> DMatrix<f64> {
        match &self.steps[0] {
            Step::Input { shifts, channels, pixels, sw2, sb2 } => {
                input_cross(shifts, *channels, *pixels, *sw2, *sb2, x, y)
            }
            _ => unreachable!("validated architecture starts with input_conv"),
        }
    }

    /// Self-field history of one input.
    pub(crate) fn self_history(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>, KernelError> {
        let mut hist = vec![self.input(x, x)];
        for step in &self.steps[1..] {
            let prev = hist.last().expect("nonempty");
            let d = diagonal(prev)?;
            let skip = match step {
                Step::Skip { source } => Some(&hist[*source]),
                _ => None,
            };
            let next = step.cross(prev, &d, &d, skip)?;
            hist.push(next);
        }
        Ok(hist)
    }

    /// Scalar output kernel for a pair, given both self histories.
    pub(crate) fn cross_output(
        &self,
        x: &[f64],
        y: &[f64],
        hx: &[DMatrix<f64>],
        hy: &[DMatrix<f64>],
    ) -> Result<f64, KernelError> {
        let mut hist = vec![self.input(x, y)];
        for (l, step) in self.steps.iter().enumerate().skip(1) {
            let dx: Vec<f64> = hx[l - 1].diagonal().iter().copied().collect();
            let dy: Vec<f64> = hy[l - 1].diagonal().iter().copied().collect();
            let skip = match step {
                Step::Skip { source } => Some(&hist[*source]),
                _ => None,
            };
            let next = step.cross(hist.last().expect("nonempty"), &dx, &dy, skip)?;
            hist.push(next);
        }
        Ok(hist.last().expect("nonempty")[(0, 0)])
    }
}

impl Step {
    fn new(arch: &ArchSpec, i: usize) -> Self {
        let in_grid: &PixelGrid = arch.input_grid_of(i);
        match &arch.layers()[i] {
            LayerSpec::InputConv { patch, sigma_w, sigma_b } => Step::Input {
                shifts: in_grid.shift_table(patch.as_ref().expect("filled on load").offsets(), 1),
                channels: arch.input_channels(),
                pixels: in_grid.size(),
                sw2: sigma_w * sigma_w,
                sb2: sigma_b * sigma_b,
            },
            LayerSpec::Nonlinear { patch, sigma_w, sigma_b } => Step::Nonlinear {
                shifts: in_grid.shift_table(patch.as_ref().expect("filled on load").offsets(), 1),
                sw2: sigma_w * sigma_w,
                sb2: sigma_b * sigma_b,
            },
            // layers[i] adds the output of layer l - k with l = i, i.e. layers[i - gap - 1].
            LayerSpec::Skip { gap } => Step::Skip { source: i - gap - 1 },
            LayerSpec::Pool { cell } => {
                let (coarse, map) = in_grid.pool(cell).expect("validated pool");
                Step::Pool { map, coarse: coarse.size() }
            }
            LayerSpec::Flatten { sigma_w, sigma_b } => {
                Step::Flatten { sw2: sigma_w * sigma_w, sb2: sigma_b * sigma_b }
            }
            LayerSpec::Output => Step::Output,
        }
    }

    /// Next-layer cross covariance from the previous one and the diagonals of
    /// the two self fields.
    fn cross(
        &self,
        prev: &DMatrix<f64>,
        dx: &[f64],
        dy: &[f64],
        skip: Option<&DMatrix<f64>>,
    ) -> Result<DMatrix<f64>, KernelError> {
        Ok(match self {
            Step::Input { .. } => unreachable!("input layer has no predecessor"),
            Step::Nonlinear { shifts, sw2, sb2 } => {
                let v = relu_moment(prev, dx, dy)?;
                let n = v.nrows();
                let half = 0.5 * sw2;
                DMatrix::from_fn(n, n, |a, b| {
                    let s: f64 = shifts.iter().map(|t| v[(t[a], t[b])]).sum();
                    sb2 + half * s
                })
            }
            Step::Skip { .. } => prev + skip.expect("skip source supplied"),
            Step::Pool { map, coarse } => {
                let mut out = DMatrix::zeros(*coarse, *coarse);
                for b in 0..prev.ncols() {
                    for a in 0..prev.nrows() {
                        out[(map[a], map[b])] += prev[(a, b)];
                    }
                }
                out
            }
            Step::Flatten { sw2, sb2 } => {
                let v = relu_moment(prev, dx, dy)?;
                DMatrix::from_element(1, 1, sb2 + 0.5 * sw2 * v.trace())
            }
            Step::Output => prev.clone(),
        })
    }
}

/// `V_ab = sqrt(dx_a dy_b) * Psi(K_ab / sqrt(dx_a dy_b))`; twice the ReLU
/// second moment of the bivariate Gaussian with that covariance.
fn relu_moment(k: &DMatrix<f64>, dx: &[f64], dy: &[f64]) -> Result<DMatrix<f64>, KernelError> {
    let n = k.nrows();
    let mut v = DMatrix::zeros(n, n);
    for b in 0..n {
        for a in 0..n {
            let scale = (dx[a] * dy[b]).sqrt();
            if scale == 0.0 {
                continue;
            }
            let t = k[(a, b)] / scale;
            if !(t.abs() <= 1.0 + CORRELATION_TOL) {
                return Err(KernelError::Correlation { value: t, row: a, col: b });
            }
            v[(a, b)] = scale * psi_clamped(t.clamp(-1.0, 1.0));
        }
    }
    Ok(v)
}

fn input_cross(
    shifts: &[Vec<usize>],
    channels: usize,
    pixels: usize,
    sw2: f64,
    sb2: f64,
    x: &[f64],
    y: &[f64],
) -> DMatrix<f64> {
    let mut acc = DMatrix::<f64>::zeros(pixels, pixels);
    for c in 0..channels {
        let xc = &x[c * pixels..(c + 1) * pixels];
        let yc = &y[c * pixels..(c + 1) * pixels];
        for t in shifts {
            for b in 0..pixels {
                let yb = yc[t[b]];
                if yb == 0.0 {
                    continue;
                }
                for a in 0..pixels {
                    acc[(a, b)] += xc[t[a]] * yb;
                }
            }
        }
    }
    acc.map(|s| sb2 + sw2 * s / channels as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::Patch;
    use std::f64::consts::PI;

    fn fc(n: usize, sigma_b: f64) -> ArchSpec {
        ArchSpec::new(
            n,
            vec![1],
            vec![
                LayerSpec::InputConv { patch: None, sigma_w: 1.3, sigma_b },
                LayerSpec::Nonlinear { patch: None, sigma_w: 1.1, sigma_b },
                LayerSpec::Flatten { sigma_w: 0.9, sigma_b },
                LayerSpec::Output,
            ],
        )
        .unwrap()
    }

    #[test]
    fn fully_connected_input_layer_is_scaled_dot_product() {
        let arch = fc(3, 0.0);
        let x = [1.0, -2.0, 0.5];
        let y = [0.3, 0.1, 4.0];
        let f = KernelField::input(&arch, &x, &y).unwrap();
        let dot: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        assert!((f.xy[(0, 0)] - 1.3 * 1.3 * dot / 3.0).abs() < 1e-14);
    }

    #[test]
    fn nonlinear_layer_on_diagonal_pair() {
        let arch = ArchSpec::new(
            2,
            vec![5],
            vec![
                LayerSpec::InputConv { patch: Some(Patch::centered(&[3])), sigma_w: 1.0, sigma_b: 0.2 },
                LayerSpec::Nonlinear { patch: Some(Patch::centered(&[3])), sigma_w: 1.5, sigma_b: 0.4 },
                LayerSpec::Flatten { sigma_w: 1.0, sigma_b: 0.0 },
                LayerSpec::Output,
            ],
        )
        .unwrap();
        let x: Vec<f64> = (0..10).map(|i| (i as f64 * 0.7).sin()).collect();
        let fields = layer_fields(&arch, &x, &x).unwrap();
        let (k0, _, _) = fields[0].traces();
        let (k1, _, _) = fields[1].traces();
        let expected = 5.0 * 0.4 * 0.4 + 3.0 * 1.5 * 1.5 / 2.0 * k0;
        assert!((k1 - expected).abs() < 1e-12 * expected, "{k1} vs {expected}");
    }

    #[test]
    fn skip_adds_stored_fields() {
        let arch = ArchSpec::new(
            1,
            vec![4],
            vec![
                LayerSpec::InputConv { patch: Some(Patch::centered(&[3])), sigma_w: 1.0, sigma_b: 0.1 },
                LayerSpec::Nonlinear { patch: Some(Patch::centered(&[3])), sigma_w: 1.2, sigma_b: 0.1 },
                LayerSpec::Nonlinear { patch: Some(Patch::centered(&[3])), sigma_w: 1.2, sigma_b: 0.1 },
                LayerSpec::Skip { gap: 1 },
                LayerSpec::Flatten { sigma_w: 1.0, sigma_b: 0.0 },
                LayerSpec::Output,
            ],
        )
        .unwrap();
        let x = [0.1, 0.5, 0.9, 0.3];
        let y = [0.7, 0.2, 0.4, 0.8];
        let f = layer_fields(&arch, &x, &y).unwrap();
        assert_eq!(f[3].xy, &f[2].xy + &f[1].xy);
        assert_eq!(f[3].xx, &f[2].xx + &f[1].xx);
    }

    #[test]
    fn one_hidden_layer_is_arccos_kernel() {
        let n = 4;
        let arch = ArchSpec::new(
            n,
            vec![1],
            vec![
                LayerSpec::InputConv { patch: None, sigma_w: 2.0, sigma_b: 0.0 },
                LayerSpec::Flatten { sigma_w: 1.5, sigma_b: 0.0 },
                LayerSpec::Output,
            ],
        )
        .unwrap();
        let x = [1.0, 0.0, 2.0, -1.0];
        let y = [0.5, 1.0, -1.0, 0.0];
        let f = layer_fields(&arch, &x, &y).unwrap();
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let cos = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / (nx * ny);
        let theta = cos.acos();
        let psi = ((1.0 - cos * cos).sqrt() + (PI - theta) * cos) / PI;
        let expected = 1.5 * 1.5 / 2.0 * (4.0 / n as f64) * nx * ny * psi;
        assert!((f.last().unwrap().xy[(0, 0)] - expected).abs() < 1e-13);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let arch = fc(3, 0.0);
        assert!(matches!(
            KernelField::input(&arch, &[1.0, 2.0], &[1.0, 2.0, 3.0]),
            Err(KernelError::Dimension { expected: 3, got: 2 })
        ));
        let f = KernelField::input(&arch, &[1.0; 3], &[1.0; 3]).unwrap();
        assert!(propagate_layer(&arch, 2, &f, &[]).is_err());
    }

    #[test]
    fn corrupted_field_is_a_hard_error() {
        let arch = fc(2, 0.0);
        let mut f = KernelField::input(&arch, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        f.xx[(0, 0)] = -1.0;
        assert!(matches!(
            propagate_layer(&arch, 1, &f, &[]),
            Err(KernelError::NegativeDiagonal { .. })
        ));
        let mut g = KernelField::input(&arch, &[1.0, 0.0], &[1.0, 0.0]).unwrap();
        g.xy[(0, 0)] *= 1.5;
        assert!(matches!(propagate_layer(&arch, 1, &g, &[]), Err(KernelError::Correlation { .. })));
    }
}
