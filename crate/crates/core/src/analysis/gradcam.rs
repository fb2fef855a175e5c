//! Gradient-weighted class activation maps.

use crate::error::{Error, Result};
use crate::harness::Model;
use crate::nn::Ctx;
use crate::srp::{Mode, SrpRng};
use crate::tensor::Tensor;

use super::prepare;

/// Values in `[0, 1]`, row-major `height x width`.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

/// Bilinear resize with half-pixel centers and edge clamping.
pub fn bilinear_upsample(src: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    let coord = |o: usize, n_in: usize, n_out: usize| {
        let x = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).max(0.0);
        let i0 = (x.floor() as usize).min(n_in - 1);
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, x - i0 as f64)
    };
    let mut out = Vec::with_capacity(out_h * out_w);
    for oy in 0..out_h {
        let (y0, y1, fy) = coord(oy, h, out_h);
        for ox in 0..out_w {
            let (x0, x1, fx) = coord(ox, w, out_w);
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bottom = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Divides by the maximum; an all-zero map stays zero.
pub fn normalize_max(values: &mut [f64]) {
    let max = values.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        for v in values {
            *v = (*v / max).min(1.0);
        }
    }
}

/// Heatmap from activations `A` and gradients `dY/dA`, both `[C, h, w]`:
/// `relu(Σ_k mean(dY/dA_k) · A_k)`, upsampled to `out_h x out_w` and
/// max-normalized.
pub fn gradcam_from(
    activation: &[f64],
    grads: &[f64],
    channels: usize,
    h: usize,
    w: usize,
    out_h: usize,
    out_w: usize,
) -> Heatmap {
    let plane = h * w;
    let mut cam = vec![0.0; plane];
    for k in 0..channels {
        let g = &grads[k * plane..(k + 1) * plane];
        let weight = g.iter().sum::<f64>() / plane as f64;
        for (c, &a) in cam.iter_mut().zip(&activation[k * plane..(k + 1) * plane]) {
            *c += weight * a;
        }
    }
    for c in &mut cam {
        *c = c.max(0.0);
    }
    let mut values = bilinear_upsample(&cam, h, w, out_h, out_w);
    for v in &mut values {
        *v = v.max(0.0);
    }
    normalize_max(&mut values);
    Heatmap {
        height: out_h,
        width: out_w,
        values,
    }
}

/// Output of the last convolution in the network.
pub fn default_layer(model: &Model) -> String {
    model
        .net
        .conv_layer_names()
        .pop()
        .expect("network has a stem convolution")
}

/// Grad-CAM of `class` for one raw image (`[3, 32, 32]` in `[0, 1]`) at the
/// output of the convolution `layer`. Eval mode throughout.
pub fn gradcam(model: &Model, image: &[f32], class: usize, layer: &str) -> Result<Heatmap> {
    let names = model.net.conv_layer_names();
    if !names.iter().any(|n| n == layer) {
        return Err(Error::config(format!(
            "unknown layer `{layer}`; convolution outputs are {}",
            names.join(", ")
        )));
    }
    let classes = model.net.cfg.classes;
    if class >= classes {
        return Err(Error::config(format!(
            "class {class} out of range 0..{classes}"
        )));
    }
    let x = prepare(model, image)?;
    let (_, _, in_h, in_w) = x.dims4("gradcam")?;
    let mut buffers = model.buffers.clone();
    let mut ctx = Ctx::new(&model.params, &mut buffers, Mode::Eval, SrpRng::new(0, 0), false)?;
    // The input takes part in backward so every activation gets a gradient.
    let xv = ctx.g.param(x)?;
    let logits = model.net.forward(&mut ctx, xv)?;
    let target = ctx.tapped(layer).expect("layer name checked above");
    let mut seed = Tensor::zeros(&[1, classes]);
    seed.data_mut()[class] = 1.0;
    ctx.g.backward_with(logits, seed)?;
    let act = ctx.g.value(target);
    let (_, c, h, w) = act.dims4("gradcam")?;
    let a: Vec<f64> = act.data().iter().map(|&v| v as f64).collect();
    let g: Vec<f64> = match ctx.g.grad(target) {
        Some(t) => t.data().iter().map(|&v| v as f64).collect(),
        None => vec![0.0; a.len()],
    };
    Ok(gradcam_from(&a, &g, c, h, w, in_h, in_w))
}
