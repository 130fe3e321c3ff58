//! Self-checks run by `quanvbench verify`: independent oracles for the
//! simulator, both gradient paths and the attacks.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng as _;

use crate::ansatz::{self, AnsatzKind, RandomCircuitSpec};
use crate::attacks::{self, AttackConfig, AttackKind, GradientSource, LossGradient, StepSize};
use crate::data::DatasetName;
use crate::error::Result;
use crate::image::ImageTensor;
use crate::nn::{self, Architecture, Layer, LayerSpec, Model, Tensor};
use crate::qsim::oracle::{self, CMatrix};
use crate::qsim::{self, Circuit, Gate, GateKind, StateVector};
use crate::quanv::{self, PixelDomain, QuanvConfig};
use crate::seed;

pub const STATE_TOL: f64 = 1e-9;
pub const SHIFT_REL_TOL: f64 = 1e-5;
pub const BACKPROP_REL_TOL: f64 = 1e-4;
pub const FUZZ_RUNS: usize = 100;

/// Relative-error denominators are floored so near-zero derivatives are
/// compared on an absolute scale.
const SHIFT_FLOOR: f64 = 1e-3;
const BACKPROP_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

type Outcome = std::result::Result<String, String>;

fn run(name: &str, f: impl FnOnce() -> Outcome) -> Check {
    let (passed, detail) = match f() {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    Check {
        name: name.to_string(),
        passed,
        detail,
    }
}

fn lift<T>(r: Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

fn random_state(n: usize, rng: &mut seed::Rng) -> StateVector {
    let mut amps: Vec<Complex64> = (0..1usize << n)
        .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
        .collect();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    amps.iter_mut().for_each(|a| *a /= norm);
    StateVector::from_amplitudes(amps).expect("normalized")
}

fn random_gate(n: usize, kind: GateKind, rng: &mut seed::Rng) -> Gate {
    let q = rng.gen_range(0..n);
    let mut other = rng.gen_range(0..n - 1);
    if other >= q {
        other += 1;
    }
    let mut angle = || rng.gen_range(-2.0 * PI..2.0 * PI);
    match kind {
        GateKind::Rx => Gate::Rx { qubit: q, theta: angle() },
        GateKind::Ry => Gate::Ry { qubit: q, theta: angle() },
        GateKind::Rz => Gate::Rz { qubit: q, theta: angle() },
        GateKind::Rot => Gate::Rot { qubit: q, a: angle(), b: angle(), c: angle() },
        GateKind::H => Gate::H { qubit: q },
        GateKind::Cnot => Gate::Cnot { control: q, target: other },
        GateKind::Zz => Gate::Zz { a: q, b: other, theta: angle() },
    }
}

fn ansatz_circuits(seed: u64) -> Vec<(AnsatzKind, Circuit)> {
    let spec = RandomCircuitSpec {
        gate_pool: GateKind::ALL.to_vec(),
        depth: 3,
        two_qubit_prob: 0.5,
        ..RandomCircuitSpec::default()
    };
    AnsatzKind::ALL
        .iter()
        .map(|&k| (k, ansatz::instantiate(k, 4, seed, &spec).expect("valid ansatz")))
        .collect()
}

/// Largest amplitude gap between the kernel simulator and the dense oracle.
pub fn state_vs_dense(circuit: &Circuit, state: &StateVector) -> Result<f64> {
    let fast = qsim::apply_circuit(state, circuit)?;
    let u = oracle::dense_unitary_oracle(circuit)?;
    Ok(oracle::max_abs_diff(fast.amplitudes(), &oracle::apply_dense(&u, state)))
}

fn check_gates_vs_dense(seed: u64) -> Outcome {
    let mut rng = seed::rng(seed);
    let mut worst = 0.0f64;
    for n in 2..=5 {
        for kind in GateKind::ALL {
            for _ in 0..5 {
                let circuit = Circuit::from_gates(n, [random_gate(n, kind, &mut rng)]).map_err(|e| e.to_string())?;
                worst = worst.max(lift(state_vs_dense(&circuit, &random_state(n, &mut rng)))?);
            }
        }
        let gates: Vec<Gate> = (0..40)
            .map(|_| random_gate(n, GateKind::ALL[rng.gen_range(0..GateKind::ALL.len())], &mut rng))
            .collect();
        let circuit = lift(Circuit::from_gates(n, gates))?;
        worst = worst.max(lift(state_vs_dense(&circuit, &random_state(n, &mut rng)))?);
    }
    if worst <= STATE_TOL {
        Ok(format!("every gate kind on 2-5 qubits, max |Δ| = {worst:.1e}"))
    } else {
        Err(format!("max |Δ| = {worst:.3e} > {STATE_TOL:e}"))
    }
}

fn check_ansatz_vs_dense(seed: u64) -> Outcome {
    let mut rng = seed::rng(seed);
    let mut worst = 0.0f64;
    let mut unitarity = 0.0f64;
    for trial in 0..5 {
        for (_, circuit) in ansatz_circuits(seed::derive(seed, &format!("ansatz-{trial}"))) {
            let angles: Vec<f64> = (0..4).map(|_| PI * rng.gen::<f64>()).collect();
            worst = worst.max(lift(state_vs_dense(&circuit, &lift(StateVector::ry_product(&angles))?))?);
            worst = worst.max(lift(state_vs_dense(&circuit, &random_state(4, &mut rng)))?);
            let u = lift(oracle::dense_unitary_oracle(&circuit))?;
            let gap = (u.adjoint() * &u - CMatrix::identity(16, 16)).iter().map(|z| z.norm()).fold(0.0, f64::max);
            unitarity = unitarity.max(gap);
        }
    }
    if worst <= STATE_TOL && unitarity <= STATE_TOL {
        Ok(format!("5 kinds x 5 seeds, max |Δ| = {worst:.1e}, max |U†U − I| = {unitarity:.1e}"))
    } else {
        Err(format!("max |Δ| = {worst:.3e}, unitarity gap {unitarity:.3e}"))
    }
}

fn check_zz_expm(seed: u64) -> Outcome {
    let mut rng = seed::rng(seed);
    let z = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        Complex64::new(1.0, 0.0),
        Complex64::new(-1.0, 0.0),
        Complex64::new(-1.0, 0.0),
        Complex64::new(1.0, 0.0),
    ]));
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let theta = rng.gen_range(-2.0 * PI..2.0 * PI);
        let want = oracle::expm(&(&z * Complex64::new(0.0, -theta)));
        let got = lift(oracle::gate_matrix(2, &Gate::Zz { a: 0, b: 1, theta }))?;
        worst = worst.max((want - got).iter().map(|c| c.norm()).fold(0.0, f64::max));
    }
    if worst <= STATE_TOL {
        Ok(format!("20 angles, max |Δ| = {worst:.1e}"))
    } else {
        Err(format!("ZZ differs from exp(-iθ Z⊗Z) by {worst:.3e}"))
    }
}

/// A simulator whose ZZ phase has the wrong sign must be caught by the dense
/// comparison; otherwise the oracle is not sensitive enough.
fn check_zz_mutation(seed: u64) -> Outcome {
    let mut rng = seed::rng(seed);
    let (_, circuit) = ansatz_circuits(seed).remove(1);
    let mutated = lift(Circuit::from_gates(
        4,
        circuit.gates().iter().map(|g| match *g {
            Gate::Zz { a, b, theta } => Gate::Zz { a, b, theta: -theta },
            other => other,
        }),
    ))?;
    let state = random_state(4, &mut rng);
    let fast = lift(qsim::apply_circuit(&state, &mutated))?;
    let dense = oracle::apply_dense(&lift(oracle::dense_unitary_oracle(&circuit))?, &state);
    let gap = oracle::max_abs_diff(fast.amplitudes(), &dense);
    if gap > 1e-3 {
        Ok(format!("sign-flipped ZZ detected, |Δ| = {gap:.2e}"))
    } else {
        Err(format!("sign-flipped ZZ went unnoticed (|Δ| = {gap:.2e})"))
    }
}

fn check_parameter_shift(seed: u64) -> Outcome {
    let mut rng = seed::rng(seed);
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut compared = 0;
    for (kind, circuit) in ansatz_circuits(seed) {
        let mut cfg = lift(QuanvConfig::new(circuit))?;
        cfg.domain = PixelDomain::Unbounded;
        let image = lift(ImageTensor::new(4, 4, 1, (0..16).map(|_| rng.gen::<f64>()).collect()))?;
        let upstream = lift(ImageTensor::new(2, 2, 4, (0..16).map(|_| rng.gen::<f64>() - 0.5).collect()))?;
        let grad = lift(quanv::input_gradient(&image, &cfg, &upstream))?;
        let objective = |img: &ImageTensor| -> std::result::Result<f64, String> {
            let out = lift(quanv::quanvolve_image(img, &cfg))?;
            Ok(out.data().iter().zip(upstream.data()).map(|(a, b)| a * b).sum())
        };
        for _ in 0..20 {
            let i = rng.gen_range(0..16);
            let (mut up, mut down) = (image.clone(), image.clone());
            up.data_mut()[i] += h;
            down.data_mut()[i] -= h;
            let fd = (objective(&up)? - objective(&down)?) / (2.0 * h);
            let err = rel_err(grad.data()[i], fd, SHIFT_FLOOR);
            if err > SHIFT_REL_TOL {
                return Err(format!("{kind}: pixel {i} shift {} vs fd {fd} (rel {err:.2e})", grad.data()[i]));
            }
            worst = worst.max(err);
            compared += 1;
        }
    }
    Ok(format!("{compared} pixels over all 5 kinds, max rel err {worst:.1e}"))
}

fn models_under_test(seed: u64) -> Result<Vec<(String, Model)>> {
    let mut out = Vec::new();
    for ds in [DatasetName::Mnist, DatasetName::Fmnist] {
        for arch in Architecture::ALL {
            out.push((format!("{arch}/{ds}"), nn::build_model(arch, ds, seed::derive(seed, &format!("{arch}{ds}")))?));
        }
    }
    // Small stacks isolating each layer type.
    let stacks: [(&str, Vec<usize>, Vec<LayerSpec>); 3] = [
        (
            "conv",
            vec![6, 6, 2],
            vec![
                LayerSpec::Conv2d { kernel: 3, stride: 1, out_channels: 3 },
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 5 },
                LayerSpec::Softmax,
            ],
        ),
        ("dense", vec![1, 1, 7], vec![LayerSpec::Flatten, LayerSpec::Dense { units: 4 }, LayerSpec::Softmax]),
        (
            "relu+dropout",
            vec![1, 1, 7],
            vec![
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 9 },
                LayerSpec::Relu,
                LayerSpec::Dropout { prob: 0.5 },
                LayerSpec::Dense { units: 3 },
                LayerSpec::Softmax,
            ],
        ),
    ];
    for (name, shape, specs) in stacks {
        out.push((name.to_string(), Model::from_specs(&shape, &specs, seed::derive(seed, name))?));
    }
    Ok(out)
}

fn random_tensor(shape: &[usize], rng: &mut seed::Rng) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..len).map(|_| rng.gen::<f64>()).collect()).expect("shape matches")
}

fn check_backprop(seed: u64) -> Outcome {
    let mut rng = seed::rng(seed);
    let h = 1e-4;
    let mut worst = 0.0f64;
    let mut compared = 0;
    for (name, model) in lift(models_under_test(seed))? {
        let x = random_tensor(model.input_shape(), &mut rng);
        let label = rng.gen_range(0..model.num_classes());
        let (_, grad, param_grads) = lift(model.loss_and_grads(&x, label, None))?;
        let loss_at = |t: &Tensor| lift(model.loss(t, label));
        for _ in 0..50 {
            let i = rng.gen_range(0..x.len());
            let mut up = x.data().to_vec();
            let mut down = up.clone();
            up[i] += h;
            down[i] -= h;
            let fd = (loss_at(&lift(Tensor::new(x.shape().to_vec(), up))?)?
                - loss_at(&lift(Tensor::new(x.shape().to_vec(), down))?)?)
                / (2.0 * h);
            let err = rel_err(grad.data()[i], fd, BACKPROP_FLOOR);
            if err > BACKPROP_REL_TOL {
                return Err(format!("{name}: input {i} backprop {} vs fd {fd} (rel {err:.2e})", grad.data()[i]));
            }
            worst = worst.max(err);
            compared += 1;
        }
        // Parameter gradients on a handful of weights and biases per layer.
        for (layer, grads) in param_grads.iter().enumerate() {
            let Some((gw, gb)) = grads else { continue };
            for _ in 0..5 {
                let (is_bias, len) = if rng.gen::<bool>() { (true, gb.len()) } else { (false, gw.len()) };
                let j = rng.gen_range(0..len);
                let perturbed = |delta: f64| -> std::result::Result<f64, String> {
                    let mut m = model.clone();
                    m.apply_update(|i, w, b| {
                        if i == layer {
                            if is_bias {
                                b[j] += delta;
                            } else {
                                w[j] += delta;
                            }
                        }
                    });
                    lift(m.loss(&x, label))
                };
                let fd = (perturbed(h)? - perturbed(-h)?) / (2.0 * h);
                let bp = if is_bias { gb[j] } else { gw[j] };
                let err = rel_err(bp, fd, BACKPROP_FLOOR);
                if err > BACKPROP_REL_TOL {
                    return Err(format!("{name}: layer {layer} param {j} backprop {bp} vs fd {fd} (rel {err:.2e})"));
                }
                worst = worst.max(err);
                compared += 1;
            }
        }
    }
    Ok(format!("{compared} coordinates over 9 models, max rel err {worst:.1e}"))
}

/// A loss whose gradient is a fresh pseudo-random field at every iterate.
struct Scrambled(u64);

impl LossGradient for Scrambled {
    fn loss_gradient(&self, image: &ImageTensor, _: usize) -> Result<ImageTensor> {
        let mut key = self.0.to_le_bytes().to_vec();
        for v in image.data() {
            key.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        let mut rng = seed::rng(seed::hash64(&key));
        let (h, w, c) = image.dims();
        ImageTensor::new(h, w, c, (0..h * w * c).map(|_| rng.gen::<f64>() - 0.5).collect())
    }

    fn loss(&self, _: &ImageTensor, _: usize) -> Result<f64> {
        Ok(0.0)
    }
}

fn check_attack_identities(seed: u64) -> Outcome {
    let mut rng = seed::rng(seed);
    let cnn = lift(nn::build_model(Architecture::ClassicalCnn, DatasetName::Mnist, seed))?;
    let head = lift(nn::build_model(Architecture::QunnHead, DatasetName::Mnist, seed))?;
    let circuit = lift(ansatz::instantiate(AnsatzKind::ZzFull, 4, seed, &RandomCircuitSpec::default()))?;
    let q = lift(QuanvConfig::new(circuit))?;
    let surrogate = GradientSource::Surrogate(&cnn);
    let e2e = GradientSource::EndToEnd { quanv: &q, head: &head };
    let sources: [(&str, &dyn LossGradient); 3] = [("surrogate", &surrogate), ("end_to_end", &e2e), ("scrambled", &Scrambled(seed))];
    let mut count = 0;
    for (name, src) in sources {
        for _ in 0..3 {
            let img = lift(ImageTensor::new(28, 28, 1, (0..784).map(|_| rng.gen::<f64>()).collect()))?;
            let label = rng.gen_range(0..10);
            let eps = rng.gen_range(0.01..0.5);
            let fg = lift(attacks::fgsm(src, &img, label, &AttackConfig::new(AttackKind::Fgsm, eps)))?;
            let pgd1 = AttackConfig {
                steps: 1,
                step_size: StepSize::Absolute(eps),
                ..AttackConfig::new(AttackKind::Pgd, eps)
            };
            if lift(attacks::pgd(src, &img, label, &pgd1))? != fg {
                return Err(format!("{name}: PGD(steps=1, α=ε) differs from FGSM"));
            }
            let steps = rng.gen_range(2..6);
            let pgd = AttackConfig { steps, ..AttackConfig::new(AttackKind::Pgd, eps) };
            let mim0 = AttackConfig { steps, decay: 0.0, ..AttackConfig::new(AttackKind::Mim, eps) };
            if lift(attacks::mim(src, &img, label, &mim0))? != lift(attacks::pgd(src, &img, label, &pgd))? {
                return Err(format!("{name}: MIM(μ=0) differs from PGD"));
            }
            let alpha = eps * rng.gen_range(0.1..1.0);
            let mim1 = AttackConfig {
                steps: 1,
                decay: rng.gen_range(0.0..2.0),
                step_size: StepSize::Absolute(alpha),
                ..AttackConfig::new(AttackKind::Mim, eps)
            };
            let fg_alpha = lift(attacks::fgsm(src, &img, label, &AttackConfig::new(AttackKind::Fgsm, alpha)))?;
            if lift(attacks::mim(src, &img, label, &mim1))? != fg_alpha {
                return Err(format!("{name}: MIM(steps=1) differs from FGSM with step α"));
            }
            count += 3;
        }
    }
    Ok(format!("{count} identities, bit-exact"))
}

fn check_epsilon_ball(seed: u64) -> Outcome {
    let mut rng = seed::rng(seed);
    let mut worst = 0.0f64;
    for kind in AttackKind::ALL {
        for run in 0..FUZZ_RUNS {
            let src = Scrambled(seed::derive(seed, &format!("{kind}{run}")));
            let img = lift(ImageTensor::new(5, 5, 1, (0..25).map(|_| rng.gen::<f64>()).collect()))?;
            let eps: f64 = if rng.gen::<bool>() { rng.gen_range(0.0..0.3) } else { rng.gen_range(0.0..20.0) };
            let cfg = AttackConfig {
                steps: rng.gen_range(1..12),
                step_size: StepSize::Absolute(rng.gen_range(0.0..2.0) * eps.max(0.01)),
                decay: rng.gen_range(0.0..2.0),
                clamp: rng.gen::<bool>().then_some((0.0, 1.0)),
                ..AttackConfig::new(kind, eps)
            };
            let adv = lift(attacks::attack(&src, &img, 0, &cfg))?;
            let dist = adv.linf_distance(&img);
            if dist > eps + 1e-9 {
                return Err(format!("{kind} run {run}: ‖x'−x‖∞ = {dist} > ε = {eps}"));
            }
            if let Some((lo, hi)) = cfg.clamp {
                let (min, max) = adv.min_max();
                if min < lo || max > hi {
                    return Err(format!("{kind} run {run}: output range [{min}, {max}] leaves the clamp"));
                }
            }
            worst = worst.max(dist - eps);
        }
    }
    Ok(format!("{} runs per attack, max overshoot {worst:.1e}", FUZZ_RUNS))
}

fn check_structure(seed: u64) -> Outcome {
    let mut rng = seed::rng(seed);
    let img = lift(ImageTensor::new(28, 28, 1, (0..784).map(|_| rng.gen::<f64>()).collect()))?;
    for (kind, circuit) in ansatz_circuits(seed) {
        let out = lift(quanv::quanvolve_image(&img, &lift(QuanvConfig::new(circuit))?))?;
        if out.dims() != (14, 14, 4) {
            return Err(format!("{kind}: quanv output {:?}", out.dims()));
        }
        let (lo, hi) = out.min_max();
        if lo < -1.0 || hi > 1.0 {
            return Err(format!("{kind}: features outside [-1, 1]: [{lo}, {hi}]"));
        }
    }
    let cnn = lift(nn::build_model(Architecture::ClassicalCnn, DatasetName::Mnist, seed))?;
    let Layer::Conv2d { kernel, stride, out_channels, .. } = cnn.layers()[0] else {
        return Err("ClassicalCnn does not start with a convolution".into());
    };
    let conv_dims = ((28 - kernel) / stride + 1, (28 - kernel) / stride + 1, out_channels);
    if conv_dims != (14, 14, 4) {
        return Err(format!("conv output {conv_dims:?}"));
    }
    for (name, model) in lift(models_under_test(seed))? {
        let p = lift(model.forward(&random_tensor(model.input_shape(), &mut rng), false))?;
        let sum: f64 = p.data().iter().sum();
        if (sum - 1.0).abs() > 1e-6 || p.data().iter().any(|&v| v < 0.0) {
            return Err(format!("{name}: softmax sums to {sum}"));
        }
    }
    Ok("28x28 -> 14x14x4 on both paths, features in [-1, 1], softmax normalized".into())
}

/// Runs every check; deterministic in `seed`.
pub fn run_all(seed: u64) -> Vec<Check> {
    let checks: [(&str, fn(u64) -> Outcome); 9] = [
        ("statevector vs dense matrix: single gates and random circuits", check_gates_vs_dense),
        ("statevector vs dense matrix: every ansatz, unitarity", check_ansatz_vs_dense),
        ("ZZ gate vs matrix exponential", check_zz_expm),
        ("dense oracle catches a sign-flipped ZZ", check_zz_mutation),
        ("parameter shift vs finite differences: every ansatz", check_parameter_shift),
        ("backprop vs finite differences: every layer and architecture", check_backprop),
        ("attack reduction identities", check_attack_identities),
        ("epsilon-ball and clamp containment under fuzzing", check_epsilon_ball),
        ("shape laws, feature range, softmax normalization", check_structure),
    ];
    checks
        .iter()
        .map(|(name, f)| {
            let start = Instant::now();
            let mut c = run(name, || f(seed::derive(seed, name)));
            c.detail = format!("{} [{:.2}s]", c.detail, start.elapsed().as_secs_f64());
            c
        })
        .collect()
}
