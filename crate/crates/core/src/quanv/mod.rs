//! Quanvolutional layer.
//!
//! Each `k × k` patch is angle-encoded with `R_y(π·x)` per pixel (row-major:
//! top-left pixel on qubit 0), evolved by a frozen filter circuit, and read out
//! as one `⟨Z_q⟩` channel per qubit. A 28×28 image with `k = s = 2` becomes a
//! 14×14×4 feature map.
//!
//! Input gradients use the parameter-shift rule on the encoding rotations:
//! `∂⟨Z_q⟩/∂x_i = π · (⟨Z_q⟩(φ_i + π/2) − ⟨Z_q⟩(φ_i − π/2)) / 2`.

mod cache;

pub use cache::{read_qnvf, write_qnvf, QNVF_MAGIC, QNVF_VERSION};

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::qsim::{Circuit, StateVector};
use crate::seed;

/// What pixel values the encoder accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelDomain {
    /// Only `[0, 1]`, the range of raw dataset images.
    Unit,
    /// Any finite value. Needed when adversarial pixels are left unclamped;
    /// the encoding angle is still `π·x`.
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuanvConfig {
    pub kernel_size: usize,
    pub stride: usize,
    pub circuit: Circuit,
    pub domain: PixelDomain,
    /// Map `⟨Z⟩ ∈ [−1, 1]` to `(⟨Z⟩ + 1) / 2` before emitting. Off by default.
    pub rescale: bool,
}

impl QuanvConfig {
    /// 2×2 kernel, stride 2, raw `⟨Z⟩` output, unit-range pixels.
    pub fn new(circuit: Circuit) -> Result<Self> {
        let cfg = QuanvConfig {
            kernel_size: 2,
            stride: 2,
            circuit,
            domain: PixelDomain::Unit,
            rescale: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_size == 0 || self.stride == 0 {
            return Err(Error::invalid("kernel size and stride must be >= 1"));
        }
        if self.kernel_size * self.kernel_size != self.circuit.n_qubits() {
            return Err(Error::invalid(format!(
                "kernel {}x{} needs a {}-qubit circuit, got {}",
                self.kernel_size,
                self.kernel_size,
                self.kernel_size * self.kernel_size,
                self.circuit.n_qubits()
            )));
        }
        Ok(())
    }

    pub fn output_dims(&self, height: usize, width: usize) -> Result<(usize, usize, usize)> {
        let k = self.kernel_size;
        if height < k || width < k {
            return Err(Error::invalid(format!(
                "{height}x{width} image smaller than {k}x{k} kernel"
            )));
        }
        Ok(((height - k) / self.stride + 1, (width - k) / self.stride + 1, k * k))
    }

    /// Stable 64-bit digest of everything that affects the layer's output.
    pub fn fingerprint(&self) -> u64 {
        let text = format!(
            "k={} s={} domain={:?} rescale={}\n{}",
            self.kernel_size,
            self.stride,
            self.domain,
            self.rescale,
            self.circuit.to_text()
        );
        seed::hash64(text.as_bytes())
    }

    fn check_pixel(&self, x: f64) -> Result<()> {
        let ok = match self.domain {
            PixelDomain::Unit => (0.0..=1.0).contains(&x),
            PixelDomain::Unbounded => x.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("pixel value {x} outside the encoder's domain")))
        }
    }

    fn readout(&self, z: f64) -> f64 {
        if self.rescale {
            (z + 1.0) / 2.0
        } else {
            z
        }
    }

    fn readout_slope(&self) -> f64 {
        if self.rescale {
            0.5
        } else {
            1.0
        }
    }

    fn patch(&self, image: &ImageTensor, out_row: usize, out_col: usize) -> Vec<f64> {
        let k = self.kernel_size;
        let (r0, c0) = (out_row * self.stride, out_col * self.stride);
        (0..k * k)
            .map(|i| image.get(r0 + i / k, c0 + i % k, 0))
            .collect()
    }

    fn run_angles(&self, angles: &[f64]) -> Result<Vec<f64>> {
        let mut state = StateVector::ry_product(angles)?;
        state.apply_circuit_mut(&self.circuit)?;
        Ok(state.expect_z_all())
    }
}

/// `⊗_i R_y(π·x_i)|0…0⟩` for a patch of `[0, 1]` pixels.
pub fn encode_patch(patch: &[f64]) -> Result<StateVector> {
    if let Some(x) = patch.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::invalid(format!("pixel value {x} outside [0, 1]")));
    }
    let angles: Vec<f64> = patch.iter().map(|x| PI * x).collect();
    StateVector::ry_product(&angles)
}

fn check_single_channel(image: &ImageTensor) -> Result<()> {
    if image.channels() != 1 {
        return Err(Error::invalid(format!(
            "quanvolution expects a single-channel image, got {} channels",
            image.channels()
        )));
    }
    Ok(())
}

/// Feature map of one image; output dims follow `⌊(H−k)/s⌋ + 1`.
pub fn quanvolve_image(image: &ImageTensor, cfg: &QuanvConfig) -> Result<ImageTensor> {
    cfg.validate()?;
    check_single_channel(image)?;
    let (oh, ow, oc) = cfg.output_dims(image.height(), image.width())?;
    for &x in image.data() {
        cfg.check_pixel(x)?;
    }
    let rows: Vec<Vec<f64>> = (0..oh)
        .into_par_iter()
        .map(|r| {
            let mut row = Vec::with_capacity(ow * oc);
            for c in 0..ow {
                let angles: Vec<f64> = cfg.patch(image, r, c).iter().map(|x| PI * x).collect();
                row.extend(cfg.run_angles(&angles)?.into_iter().map(|z| cfg.readout(z)));
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    ImageTensor::new(oh, ow, oc, rows.concat())
}

/// `quanvolve_image` over a list, order preserved.
pub fn quanvolve_dataset(images: &[ImageTensor], cfg: &QuanvConfig) -> Result<Vec<ImageTensor>> {
    images.par_iter().map(|img| quanvolve_image(img, cfg)).collect()
}

/// Vector-Jacobian product of the layer: `Σ_{r,c,q} upstream[r,c,q] · ∂out[r,c,q]/∂x`.
/// Pixels outside every patch get zero; overlapping patches accumulate.
pub fn input_gradient(
    image: &ImageTensor,
    cfg: &QuanvConfig,
    upstream: &ImageTensor,
) -> Result<ImageTensor> {
    cfg.validate()?;
    check_single_channel(image)?;
    let (oh, ow, oc) = cfg.output_dims(image.height(), image.width())?;
    if upstream.dims() != (oh, ow, oc) {
        return Err(Error::invalid(format!(
            "upstream gradient is {:?}, layer output is {:?}",
            upstream.dims(),
            (oh, ow, oc)
        )));
    }
    for &x in image.data() {
        cfg.check_pixel(x)?;
    }
    let k = cfg.kernel_size;
    let slope = cfg.readout_slope();
    let per_patch: Vec<Vec<f64>> = (0..oh * ow)
        .into_par_iter()
        .map(|p| {
            let (r, c) = (p / ow, p % ow);
            let up = &upstream.data()[upstream.index(r, c, 0)..upstream.index(r, c, 0) + oc];
            if up.iter().all(|&u| u == 0.0) {
                return Ok(vec![0.0; k * k]);
            }
            let base: Vec<f64> = cfg.patch(image, r, c).iter().map(|x| PI * x).collect();
            (0..k * k)
                .map(|i| {
                    let mut angles = base.clone();
                    angles[i] = base[i] + FRAC_PI_2;
                    let plus = cfg.run_angles(&angles)?;
                    angles[i] = base[i] - FRAC_PI_2;
                    let minus = cfg.run_angles(&angles)?;
                    Ok(plus
                        .iter()
                        .zip(&minus)
                        .zip(up)
                        .map(|((zp, zm), u)| u * slope * PI * (zp - zm) / 2.0)
                        .sum())
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut grad = ImageTensor::zeros(image.height(), image.width(), 1);
    for (p, contrib) in per_patch.iter().enumerate() {
        let (r0, c0) = ((p / ow) * cfg.stride, (p % ow) * cfg.stride);
        for (i, g) in contrib.iter().enumerate() {
            let idx = grad.index(r0 + i / k, c0 + i % k, 0);
            grad.data_mut()[idx] += g;
        }
    }
    Ok(grad)
}
