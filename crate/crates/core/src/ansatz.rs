//! The five quanvolutional filter circuits.
//!
//! Every entangled family starts with one `Rot(a, b, c)` per qubit and then
//! appends its ZZ block. Parameter layout is `[a0, b0, c0, a1, b1, c1, …]`
//! followed by one angle per ZZ gate, in the order the gates are emitted:
//!
//! | kind            | ZZ pairs (q < k)                       | parameters       |
//! |-----------------|----------------------------------------|------------------|
//! | no_entanglement | none                                   | 3n               |
//! | zz_linear       | (0,1), (1,2), …, (n−2,n−1)             | 3n + (n−1)       |
//! | zz_full         | (0,1), (0,2), …, (0,n−1), (1,2), …     | 3n + n(n−1)/2    |
//! | zz_star         | (0,1), (0,2), …, (0,n−1)               | 3n + (n−1)       |
//! | random          | drawn by [`build_random`]              | 0 (spec-driven)  |
//!
//! Filter parameters are drawn once and then frozen; nothing here is trained.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::qsim::{Circuit, Gate, GateKind};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AnsatzKind {
    NoEntanglement,
    ZzFull,
    ZzLinear,
    ZzStar,
    Random,
}

impl AnsatzKind {
    pub const ALL: [AnsatzKind; 5] = [
        AnsatzKind::NoEntanglement,
        AnsatzKind::ZzFull,
        AnsatzKind::ZzLinear,
        AnsatzKind::ZzStar,
        AnsatzKind::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AnsatzKind::NoEntanglement => "no_entanglement",
            AnsatzKind::ZzFull => "zz_full",
            AnsatzKind::ZzLinear => "zz_linear",
            AnsatzKind::ZzStar => "zz_star",
            AnsatzKind::Random => "random",
        }
    }

    fn min_qubits(self) -> usize {
        match self {
            AnsatzKind::NoEntanglement | AnsatzKind::Random => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for AnsatzKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AnsatzKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        AnsatzKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::invalid(format!("unknown ansatz '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnsatzParams {
    pub thetas: Vec<f64>,
    pub seed: u64,
}

/// Recipe for the random architecture: `depth` layers, one gate per qubit
/// position per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomCircuitSpec {
    pub depth: usize,
    pub two_qubit_prob: f64,
    pub gate_pool: Vec<GateKind>,
    pub seed: u64,
}

impl Default for RandomCircuitSpec {
    fn default() -> Self {
        RandomCircuitSpec {
            depth: 2,
            two_qubit_prob: 0.3,
            gate_pool: vec![GateKind::Rx, GateKind::Ry, GateKind::Rz, GateKind::H, GateKind::Cnot],
            seed: 0,
        }
    }
}

impl RandomCircuitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::invalid("random circuit depth must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.two_qubit_prob) {
            return Err(Error::invalid(format!(
                "two_qubit_prob {} outside [0, 1]",
                self.two_qubit_prob
            )));
        }
        if !self.gate_pool.iter().any(|k| !k.is_two_qubit()) {
            return Err(Error::invalid("random gate pool needs at least one single-qubit kind"));
        }
        Ok(())
    }
}

/// Number of angles the builder for `kind` consumes on `n` qubits.
pub fn parameter_count(kind: AnsatzKind, n: usize) -> usize {
    let pairs = match kind {
        AnsatzKind::NoEntanglement | AnsatzKind::Random => 0,
        AnsatzKind::ZzLinear | AnsatzKind::ZzStar => n.saturating_sub(1),
        AnsatzKind::ZzFull => n * n.saturating_sub(1) / 2,
    };
    if kind == AnsatzKind::Random {
        0
    } else {
        3 * n + pairs
    }
}

/// Entangling pairs in emission order.
pub fn zz_pairs(kind: AnsatzKind, n: usize) -> Vec<(usize, usize)> {
    match kind {
        AnsatzKind::ZzLinear => (0..n.saturating_sub(1)).map(|q| (q, q + 1)).collect(),
        AnsatzKind::ZzFull => (0..n)
            .flat_map(|q| (q + 1..n).map(move |k| (q, k)))
            .collect(),
        AnsatzKind::ZzStar => (1..n).map(|q| (0, q)).collect(),
        AnsatzKind::NoEntanglement | AnsatzKind::Random => Vec::new(),
    }
}

/// i.i.d. uniform `[0, 2π)` angles for `kind`, deterministic per seed.
pub fn init_params(kind: AnsatzKind, n: usize, seed: u64) -> AnsatzParams {
    let mut rng = seed::rng(seed);
    let thetas = (0..parameter_count(kind, n))
        .map(|_| rng.gen_range(0.0..TAU))
        .collect();
    AnsatzParams { thetas, seed }
}

fn build_rotation_then_zz(kind: AnsatzKind, n: usize, params: &AnsatzParams) -> Result<Circuit> {
    if n < kind.min_qubits() {
        return Err(Error::invalid(format!("{kind} needs at least {} qubits", kind.min_qubits())));
    }
    let expected = parameter_count(kind, n);
    if params.thetas.len() != expected {
        return Err(Error::invalid(format!(
            "{kind} on {n} qubits takes {expected} parameters, got {}",
            params.thetas.len()
        )));
    }
    let mut circuit = Circuit::new(n)?;
    for (qubit, abc) in params.thetas[..3 * n].chunks_exact(3).enumerate() {
        circuit.push(Gate::Rot {
            qubit,
            a: abc[0],
            b: abc[1],
            c: abc[2],
        })?;
    }
    for ((a, b), &theta) in zz_pairs(kind, n).into_iter().zip(&params.thetas[3 * n..]) {
        circuit.push(Gate::Zz { a, b, theta })?;
    }
    Ok(circuit)
}

pub fn build_no_entanglement(n: usize, params: &AnsatzParams) -> Result<Circuit> {
    build_rotation_then_zz(AnsatzKind::NoEntanglement, n, params)
}

pub fn build_zz_linear(n: usize, params: &AnsatzParams) -> Result<Circuit> {
    build_rotation_then_zz(AnsatzKind::ZzLinear, n, params)
}

pub fn build_zz_full(n: usize, params: &AnsatzParams) -> Result<Circuit> {
    build_rotation_then_zz(AnsatzKind::ZzFull, n, params)
}

pub fn build_zz_star(n: usize, params: &AnsatzParams) -> Result<Circuit> {
    build_rotation_then_zz(AnsatzKind::ZzStar, n, params)
}

/// Layered random circuit. For each of `depth` layers and each qubit `q`, with
/// probability `two_qubit_prob` a two-qubit pool gate is placed with control
/// (or first operand) `q` and a uniformly drawn distinct partner; otherwise a
/// single-qubit pool gate is drawn uniformly. Angles are uniform `[0, 2π)`.
pub fn build_random(n: usize, spec: &RandomCircuitSpec) -> Result<Circuit> {
    spec.validate()?;
    let singles: Vec<GateKind> = spec.gate_pool.iter().copied().filter(|k| !k.is_two_qubit()).collect();
    let doubles: Vec<GateKind> = spec.gate_pool.iter().copied().filter(|k| k.is_two_qubit()).collect();
    let mut rng = seed::rng(spec.seed);
    let mut circuit = Circuit::new(n)?;
    for _ in 0..spec.depth {
        for qubit in 0..n {
            let entangle = rng.gen::<f64>() < spec.two_qubit_prob;
            let gate = if entangle && n >= 2 && !doubles.is_empty() {
                let kind = doubles[rng.gen_range(0..doubles.len())];
                let r = rng.gen_range(0..n - 1);
                let partner = if r < qubit { r } else { r + 1 };
                match kind {
                    GateKind::Zz => Gate::Zz {
                        a: qubit,
                        b: partner,
                        theta: rng.gen_range(0.0..TAU),
                    },
                    _ => Gate::Cnot {
                        control: qubit,
                        target: partner,
                    },
                }
            } else {
                let kind = singles[rng.gen_range(0..singles.len())];
                let mut angle = || rng.gen_range(0.0..TAU);
                match kind {
                    GateKind::Rx => Gate::Rx { qubit, theta: angle() },
                    GateKind::Ry => Gate::Ry { qubit, theta: angle() },
                    GateKind::Rz => Gate::Rz { qubit, theta: angle() },
                    GateKind::Rot => Gate::Rot {
                        qubit,
                        a: angle(),
                        b: angle(),
                        c: angle(),
                    },
                    _ => Gate::H { qubit },
                }
            };
            circuit.push(gate)?;
        }
    }
    Ok(circuit)
}

/// Builds `kind` with explicit parameters. `random` supplies the recipe for
/// the random family; its seed is replaced by `params.seed`.
pub fn build(
    kind: AnsatzKind,
    n: usize,
    params: &AnsatzParams,
    random: &RandomCircuitSpec,
) -> Result<Circuit> {
    match kind {
        AnsatzKind::Random => build_random(
            n,
            &RandomCircuitSpec {
                seed: params.seed,
                ..random.clone()
            },
        ),
        other => build_rotation_then_zz(other, n, params),
    }
}

/// Draws fresh parameters from `seed` and builds the circuit.
pub fn instantiate(
    kind: AnsatzKind,
    n: usize,
    seed: u64,
    random: &RandomCircuitSpec,
) -> Result<Circuit> {
    build(kind, n, &init_params(kind, n, seed), random)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::{apply_circuit, reduced_purity, zero_state};

    fn params(kind: AnsatzKind, n: usize, seed: u64) -> AnsatzParams {
        init_params(kind, n, seed)
    }

    #[test]
    fn parameter_count_table() {
        for n in 2..=5 {
            assert_eq!(parameter_count(AnsatzKind::NoEntanglement, n), 3 * n);
            assert_eq!(parameter_count(AnsatzKind::ZzLinear, n), 3 * n + n - 1);
            assert_eq!(parameter_count(AnsatzKind::ZzStar, n), 3 * n + n - 1);
            assert_eq!(parameter_count(AnsatzKind::ZzFull, n), 3 * n + n * (n - 1) / 2);
        }
        assert_eq!(init_params(AnsatzKind::ZzFull, 4, 9).thetas.len(), 18);
        assert_eq!(init_params(AnsatzKind::NoEntanglement, 4, 9).thetas.len(), 12);
    }

    #[test]
    fn init_params_deterministic_and_in_range() {
        let a = init_params(AnsatzKind::ZzStar, 4, 11);
        let b = init_params(AnsatzKind::ZzStar, 4, 11);
        assert_eq!(a, b);
        assert!(a.thetas.iter().all(|t| (0.0..TAU).contains(t)));
        assert_ne!(a.thetas, init_params(AnsatzKind::ZzStar, 4, 12).thetas);
    }

    #[test]
    fn no_entanglement_structure() {
        let c = build_no_entanglement(4, &params(AnsatzKind::NoEntanglement, 4, 1)).unwrap();
        assert_eq!(c.len(), 4);
        assert_eq!(c.count(GateKind::Rot), 4);
        let zero = AnsatzParams { thetas: vec![0.0; 12], seed: 0 };
        let id = build_no_entanglement(4, &zero).unwrap();
        let s = apply_circuit(&zero_state(4).unwrap(), &id).unwrap();
        assert!((s.amplitudes()[0].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_entanglement_output_is_product() {
        for seed in 0..5 {
            let c = build_no_entanglement(4, &params(AnsatzKind::NoEntanglement, 4, seed)).unwrap();
            let s = apply_circuit(&zero_state(4).unwrap(), &c).unwrap();
            for q in 0..4 {
                assert!((reduced_purity(&s, q).unwrap() - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn topologies() {
        let lin = build_zz_linear(4, &params(AnsatzKind::ZzLinear, 4, 2)).unwrap();
        let pairs: Vec<_> = lin
            .gates()
            .iter()
            .filter(|g| g.kind() == GateKind::Zz)
            .map(|g| (g.qubits()[0], g.qubits()[1]))
            .collect();
        assert_eq!(pairs, vec![(0, 1), (1, 2), (2, 3)]);

        let star = build_zz_star(4, &params(AnsatzKind::ZzStar, 4, 2)).unwrap();
        let pairs: Vec<_> = star
            .gates()
            .iter()
            .filter(|g| g.kind() == GateKind::Zz)
            .map(|g| (g.qubits()[0], g.qubits()[1]))
            .collect();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (0, 3)]);

        let full = build_zz_full(4, &params(AnsatzKind::ZzFull, 4, 2)).unwrap();
        assert_eq!(full.count(GateKind::Zz), 6);
        assert_eq!(build_zz_linear(2, &params(AnsatzKind::ZzLinear, 2, 1)).unwrap().count(GateKind::Zz), 1);
    }

    #[test]
    fn two_qubit_topologies_coincide() {
        let p = params(AnsatzKind::ZzFull, 2, 5);
        let full = build_zz_full(2, &p).unwrap();
        assert_eq!(full, build_zz_linear(2, &p).unwrap());
        assert_eq!(full, build_zz_star(2, &p).unwrap());
    }

    #[test]
    fn zero_zz_angles_reduce_to_no_entanglement() {
        let rot = params(AnsatzKind::NoEntanglement, 4, 3);
        let base = apply_circuit(&zero_state(4).unwrap(), &build_no_entanglement(4, &rot).unwrap()).unwrap();
        for kind in [AnsatzKind::ZzLinear, AnsatzKind::ZzStar, AnsatzKind::ZzFull] {
            let mut thetas = rot.thetas.clone();
            thetas.resize(parameter_count(kind, 4), 0.0);
            let p = AnsatzParams { thetas, seed: 0 };
            let circ = build(kind, 4, &p, &RandomCircuitSpec::default()).unwrap();
            let s = apply_circuit(&zero_state(4).unwrap(), &circ).unwrap();
            assert!(crate::qsim::oracle::max_abs_diff(s.amplitudes(), base.amplitudes()) < 1e-12);
        }
    }

    #[test]
    fn wrong_param_count() {
        let p = AnsatzParams { thetas: vec![0.0; 5], seed: 0 };
        assert!(build_no_entanglement(4, &p).is_err());
        assert!(build_zz_full(4, &p).is_err());
        assert!(build_zz_linear(1, &AnsatzParams { thetas: vec![0.0; 3], seed: 0 }).is_err());
    }

    #[test]
    fn random_is_deterministic() {
        let spec = RandomCircuitSpec { depth: 3, two_qubit_prob: 0.3, seed: 7, ..Default::default() };
        let a = build_random(4, &spec).unwrap();
        let b = build_random(4, &spec).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        assert!((12..=24).contains(&a.len()));
        let s = apply_circuit(&zero_state(4).unwrap(), &a).unwrap();
        assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
        let other = build_random(4, &RandomCircuitSpec { seed: 8, ..spec.clone() }).unwrap();
        assert_ne!(a.to_text(), other.to_text());
    }

    #[test]
    fn random_without_two_qubit_prob_has_no_cnot() {
        for seed in 0..20 {
            let spec = RandomCircuitSpec { two_qubit_prob: 0.0, seed, depth: 4, ..Default::default() };
            assert_eq!(build_random(4, &spec).unwrap().count(GateKind::Cnot), 0);
        }
    }

    #[test]
    fn random_spec_validation() {
        let n = 4;
        assert!(build_random(n, &RandomCircuitSpec { depth: 0, ..Default::default() }).is_err());
        assert!(build_random(n, &RandomCircuitSpec { two_qubit_prob: 1.5, ..Default::default() }).is_err());
        assert!(build_random(n, &RandomCircuitSpec { gate_pool: vec![GateKind::Cnot], ..Default::default() }).is_err());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in AnsatzKind::ALL {
            assert_eq!(k.name().parse::<AnsatzKind>().unwrap(), k);
        }
        assert!("zz_ring".parse::<AnsatzKind>().is_err());
    }
}
