//! L∞ gradient-sign attacks: FGSM, PGD and MIM.
//!
//! All three share one update, `x ← Π_{B∞(x₀,ε)}(clamp(x + α·sign(d)))`, where
//! `d` is the raw loss gradient (FGSM, PGD) or the momentum buffer (MIM). No
//! randomness is involved anywhere.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::nn::{self, Model, Tensor};
use crate::quanv::{self, QuanvConfig};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttackKind {
    Fgsm,
    Pgd,
    Mim,
}

impl AttackKind {
    pub const ALL: [AttackKind; 3] = [AttackKind::Fgsm, AttackKind::Pgd, AttackKind::Mim];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Fgsm => "fgsm",
            AttackKind::Pgd => "pgd",
            AttackKind::Mim => "mim",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown attack '{s}'")))
    }
}

/// Per-iteration step `α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    /// `α = fraction · ε`.
    Relative(f64),
    Absolute(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub kind: AttackKind,
    pub epsilon: f64,
    /// Iterations for PGD and MIM; FGSM always takes one step.
    pub steps: usize,
    pub step_size: StepSize,
    /// Momentum factor `μ` for MIM.
    pub decay: f64,
    /// Inclusive pixel range enforced after every step; `None` leaves pixels unbounded.
    pub clamp: Option<(f64, f64)>,
}

impl AttackConfig {
    /// Ten steps of `α = ε/4`, `μ = 1`, pixels clamped to `[0, 1]`.
    pub fn new(kind: AttackKind, epsilon: f64) -> Self {
        AttackConfig {
            kind,
            epsilon,
            steps: 10,
            step_size: StepSize::Relative(0.25),
            decay: 1.0,
            clamp: Some((0.0, 1.0)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid(format!("epsilon must be finite and >= 0, got {}", self.epsilon)));
        }
        if self.kind != AttackKind::Fgsm && self.steps == 0 {
            return Err(Error::invalid("iterative attacks need steps >= 1"));
        }
        if !(self.decay >= 0.0 && self.decay.is_finite()) {
            return Err(Error::invalid(format!("decay must be finite and >= 0, got {}", self.decay)));
        }
        match self.step_size {
            StepSize::Relative(v) | StepSize::Absolute(v) if !(v >= 0.0 && v.is_finite()) => {
                return Err(Error::invalid(format!("step size must be finite and >= 0, got {v}")));
            }
            _ => {}
        }
        if let Some((lo, hi)) = self.clamp {
            if !(lo <= hi) {
                return Err(Error::invalid(format!("empty clamp range [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        match self.step_size {
            StepSize::Relative(f) => f * self.epsilon,
            StepSize::Absolute(a) => a,
        }
    }

    /// Stable digest, stored in the metadata field of adversarial QNVF files.
    pub fn fingerprint(&self) -> u64 {
        let text = format!(
            "{} eps={:016x} steps={} step={:?} decay={:016x} clamp={:?}",
            self.kind,
            self.epsilon.to_bits(),
            self.steps,
            self.step_size,
            self.decay.to_bits(),
            self.clamp
        );
        seed::hash64(text.as_bytes())
    }
}

/// Anything that can report its classification loss and the gradient of that
/// loss with respect to a raw input image.
pub trait LossGradient: Sync {
    fn loss_gradient(&self, image: &ImageTensor, label: usize) -> Result<ImageTensor>;
    fn loss(&self, image: &ImageTensor, label: usize) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GradientMode {
    /// Gradients of a classical model trained on raw images.
    Surrogate,
    /// Exact gradients through the quanvolutional layer and the trained head.
    EndToEnd,
}

impl GradientMode {
    pub fn name(self) -> &'static str {
        match self {
            GradientMode::Surrogate => "surrogate",
            GradientMode::EndToEnd => "end_to_end",
        }
    }
}

impl fmt::Display for GradientMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GradientMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "surrogate" => Ok(GradientMode::Surrogate),
            "end_to_end" | "endtoend" | "e2e" => Ok(GradientMode::EndToEnd),
            _ => Err(Error::invalid(format!("unknown gradient mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum GradientSource<'a> {
    Surrogate(&'a Model),
    EndToEnd { quanv: &'a QuanvConfig, head: &'a Model },
}

impl GradientSource<'_> {
    pub fn mode(&self) -> GradientMode {
        match self {
            GradientSource::Surrogate(_) => GradientMode::Surrogate,
            GradientSource::EndToEnd { .. } => GradientMode::EndToEnd,
        }
    }
}

impl LossGradient for GradientSource<'_> {
    fn loss_gradient(&self, image: &ImageTensor, label: usize) -> Result<ImageTensor> {
        match self {
            GradientSource::Surrogate(model) => nn::input_gradient(model, &Tensor::from(image), label)?.into_image(),
            GradientSource::EndToEnd { quanv: cfg, head } => {
                let features = quanv::quanvolve_image(image, cfg)?;
                let upstream = nn::input_gradient(head, &Tensor::from(features), label)?.into_image()?;
                quanv::input_gradient(image, cfg, &upstream)
            }
        }
    }

    fn loss(&self, image: &ImageTensor, label: usize) -> Result<f64> {
        match self {
            GradientSource::Surrogate(model) => model.loss(&Tensor::from(image), label),
            GradientSource::EndToEnd { quanv: cfg, head } => {
                head.loss(&Tensor::from(quanv::quanvolve_image(image, cfg)?), label)
            }
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// One signed step from `x` along `direction`, clamped, then projected back
/// into the ε-ball around `origin`.
fn signed_step(x: &mut ImageTensor, origin: &ImageTensor, direction: &[f64], alpha: f64, cfg: &AttackConfig) {
    let eps = cfg.epsilon;
    for ((v, &x0), &d) in x.data_mut().iter_mut().zip(origin.data()).zip(direction) {
        let mut next = *v + alpha * sign(d);
        if let Some((lo, hi)) = cfg.clamp {
            next = next.clamp(lo, hi);
        }
        *v = next.clamp(x0 - eps, x0 + eps);
    }
}

fn check_input(image: &ImageTensor, cfg: &AttackConfig) -> Result<()> {
    cfg.validate()?;
    if let Some((lo, hi)) = cfg.clamp {
        let (min, max) = image.min_max();
        if min < lo || max > hi {
            return Err(Error::invalid(format!(
                "image range [{min}, {max}] outside the clamp range [{lo}, {hi}]"
            )));
        }
    }
    Ok(())
}

/// `x' = clamp(x + ε·sign(∇ₓL))`.
pub fn fgsm(source: &dyn LossGradient, image: &ImageTensor, label: usize, cfg: &AttackConfig) -> Result<ImageTensor> {
    check_input(image, cfg)?;
    let mut adv = image.clone();
    if cfg.epsilon == 0.0 {
        return Ok(adv);
    }
    let grad = source.loss_gradient(image, label)?;
    signed_step(&mut adv, image, grad.data(), cfg.epsilon, cfg);
    Ok(adv)
}

/// `steps` projected sign-gradient iterations of size `α`, starting at `x`.
pub fn pgd(source: &dyn LossGradient, image: &ImageTensor, label: usize, cfg: &AttackConfig) -> Result<ImageTensor> {
    check_input(image, cfg)?;
    let mut adv = image.clone();
    if cfg.epsilon == 0.0 {
        return Ok(adv);
    }
    let alpha = cfg.alpha();
    for _ in 0..cfg.steps {
        let grad = source.loss_gradient(&adv, label)?;
        signed_step(&mut adv, image, grad.data(), alpha, cfg);
    }
    Ok(adv)
}

/// PGD driven by the momentum `g ← μ·g + ∇L/‖∇L‖₁`. A zero gradient adds nothing.
pub fn mim(source: &dyn LossGradient, image: &ImageTensor, label: usize, cfg: &AttackConfig) -> Result<ImageTensor> {
    check_input(image, cfg)?;
    let mut adv = image.clone();
    if cfg.epsilon == 0.0 {
        return Ok(adv);
    }
    let alpha = cfg.alpha();
    let mut momentum = vec![0.0; image.data().len()];
    for _ in 0..cfg.steps {
        let grad = source.loss_gradient(&adv, label)?;
        let l1: f64 = grad.data().iter().map(|g| g.abs()).sum();
        for (m, &g) in momentum.iter_mut().zip(grad.data()) {
            let normalized = if l1 > 0.0 { g / l1 } else { 0.0 };
            *m = cfg.decay * *m + normalized;
        }
        signed_step(&mut adv, image, &momentum, alpha, cfg);
    }
    Ok(adv)
}

pub fn attack(source: &dyn LossGradient, image: &ImageTensor, label: usize, cfg: &AttackConfig) -> Result<ImageTensor> {
    match cfg.kind {
        AttackKind::Fgsm => fgsm(source, image, label, cfg),
        AttackKind::Pgd => pgd(source, image, label, cfg),
        AttackKind::Mim => mim(source, image, label, cfg),
    }
}

/// Attacks every image independently; output order follows input order.
pub fn attack_batch(
    source: &dyn LossGradient,
    images: &[ImageTensor],
    labels: &[usize],
    cfg: &AttackConfig,
) -> Result<Vec<ImageTensor>> {
    if images.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    cfg.validate()?;
    images
        .par_iter()
        .zip(labels.par_iter())
        .map(|(img, &y)| attack(source, img, y, cfg))
        .collect()
}
