use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub(crate) type Mat2 = [[Complex64; 2]; 2];

/// Gate vocabulary needed by the five ansatz families.
///
/// `Rot { a, b, c }` is `R_z(a) R_y(b) R_z(c)` as an operator product, so `R_z(c)`
/// acts first. `Zz` is `exp(-iθ Z⊗Z)`: basis states whose two target bits agree
/// pick up `e^{-iθ}`, the others `e^{+iθ}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    Rx { qubit: usize, theta: f64 },
    Ry { qubit: usize, theta: f64 },
    Rz { qubit: usize, theta: f64 },
    Rot { qubit: usize, a: f64, b: f64, c: f64 },
    H { qubit: usize },
    Cnot { control: usize, target: usize },
    Zz { a: usize, b: usize, theta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GateKind {
    Rx,
    Ry,
    Rz,
    Rot,
    H,
    Cnot,
    Zz,
}

impl GateKind {
    pub const ALL: [GateKind; 7] = [
        GateKind::Rx,
        GateKind::Ry,
        GateKind::Rz,
        GateKind::Rot,
        GateKind::H,
        GateKind::Cnot,
        GateKind::Zz,
    ];

    pub fn is_two_qubit(self) -> bool {
        matches!(self, GateKind::Cnot | GateKind::Zz)
    }

    /// Number of rotation angles the gate carries.
    pub fn param_count(self) -> usize {
        match self {
            GateKind::Rot => 3,
            GateKind::Rx | GateKind::Ry | GateKind::Rz | GateKind::Zz => 1,
            GateKind::H | GateKind::Cnot => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::Rx => "rx",
            GateKind::Ry => "ry",
            GateKind::Rz => "rz",
            GateKind::Rot => "rot",
            GateKind::H => "h",
            GateKind::Cnot => "cnot",
            GateKind::Zz => "zz",
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GateKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown gate kind '{s}'")))
    }
}

impl Gate {
    pub fn kind(&self) -> GateKind {
        match self {
            Gate::Rx { .. } => GateKind::Rx,
            Gate::Ry { .. } => GateKind::Ry,
            Gate::Rz { .. } => GateKind::Rz,
            Gate::Rot { .. } => GateKind::Rot,
            Gate::H { .. } => GateKind::H,
            Gate::Cnot { .. } => GateKind::Cnot,
            Gate::Zz { .. } => GateKind::Zz,
        }
    }

    /// Target qubits; for CNOT the control comes first.
    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            Gate::Rx { qubit, .. }
            | Gate::Ry { qubit, .. }
            | Gate::Rz { qubit, .. }
            | Gate::Rot { qubit, .. }
            | Gate::H { qubit } => vec![qubit],
            Gate::Cnot { control, target } => vec![control, target],
            Gate::Zz { a, b, .. } => vec![a, b],
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            Gate::Rx { theta, .. } | Gate::Ry { theta, .. } | Gate::Rz { theta, .. } => vec![theta],
            Gate::Zz { theta, .. } => vec![theta],
            Gate::Rot { a, b, c, .. } => vec![a, b, c],
            Gate::H { .. } | Gate::Cnot { .. } => vec![],
        }
    }

    /// Checks qubit indices against a register of `n_qubits` and rejects
    /// non-finite angles.
    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        let qubits = self.qubits();
        if let Some(&q) = qubits.iter().find(|&&q| q >= n_qubits) {
            return Err(Error::invalid(format!(
                "{} targets qubit {q} on a {n_qubits}-qubit register",
                self.kind()
            )));
        }
        if qubits.len() == 2 && qubits[0] == qubits[1] {
            return Err(Error::invalid(format!(
                "{} needs two distinct qubits, got {} twice",
                self.kind(),
                qubits[0]
            )));
        }
        if self.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("{} has a non-finite angle", self.kind())));
        }
        Ok(())
    }

    pub(crate) fn single_qubit_matrix(&self) -> Option<Mat2> {
        let m = match *self {
            Gate::Rx { theta, .. } => rx(theta),
            Gate::Ry { theta, .. } => ry(theta),
            Gate::Rz { theta, .. } => rz(theta),
            Gate::Rot { a, b, c, .. } => matmul(&matmul(&rz(a), &ry(b)), &rz(c)),
            Gate::H { .. } => {
                let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                [[h, h], [h, -h]]
            }
            Gate::Cnot { .. } | Gate::Zz { .. } => return None,
        };
        Some(m)
    }
}

fn rx(theta: f64) -> Mat2 {
    let (s, c) = (theta / 2.0).sin_cos();
    [
        [Complex64::new(c, 0.0), Complex64::new(0.0, -s)],
        [Complex64::new(0.0, -s), Complex64::new(c, 0.0)],
    ]
}

fn ry(theta: f64) -> Mat2 {
    let (s, c) = (theta / 2.0).sin_cos();
    [
        [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
        [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
    ]
}

fn rz(theta: f64) -> Mat2 {
    let zero = Complex64::new(0.0, 0.0);
    [
        [Complex64::from_polar(1.0, -theta / 2.0), zero],
        [zero, Complex64::from_polar(1.0, theta / 2.0)],
    ]
}

fn matmul(x: &Mat2, y: &Mat2) -> Mat2 {
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = x[i][0] * y[0][j] + x[i][1] * y[1][j];
        }
    }
    out
}

/// Ordered gate list over a fixed register size. Every pushed gate is
/// validated against that size.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Result<Self> {
        if !(1..=super::MAX_QUBITS).contains(&n_qubits) {
            return Err(Error::invalid(format!(
                "qubit count {n_qubits} outside 1..={}",
                super::MAX_QUBITS
            )));
        }
        Ok(Circuit {
            n_qubits,
            gates: Vec::new(),
        })
    }

    pub fn from_gates(n_qubits: usize, gates: impl IntoIterator<Item = Gate>) -> Result<Self> {
        let mut circuit = Circuit::new(n_qubits)?;
        for g in gates {
            circuit.push(g)?;
        }
        Ok(circuit)
    }

    pub fn push(&mut self, gate: Gate) -> Result<()> {
        gate.validate(self.n_qubits)?;
        self.gates.push(gate);
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn count(&self, kind: GateKind) -> usize {
        self.gates.iter().filter(|g| g.kind() == kind).count()
    }

    /// Copy of this circuit with every gate angle passed through `f`.
    pub fn map_angles(&self, mut f: impl FnMut(f64) -> f64) -> Circuit {
        let gates = self
            .gates
            .iter()
            .map(|g| match *g {
                Gate::Rx { qubit, theta } => Gate::Rx { qubit, theta: f(theta) },
                Gate::Ry { qubit, theta } => Gate::Ry { qubit, theta: f(theta) },
                Gate::Rz { qubit, theta } => Gate::Rz { qubit, theta: f(theta) },
                Gate::Rot { qubit, a, b, c } => Gate::Rot {
                    qubit,
                    a: f(a),
                    b: f(b),
                    c: f(c),
                },
                Gate::Zz { a, b, theta } => Gate::Zz { a, b, theta: f(theta) },
                other => other,
            })
            .collect();
        Circuit {
            n_qubits: self.n_qubits,
            gates,
        }
    }

    /// Stable textual form, one gate per line. Used for hashing and by the
    /// random-architecture determinism checks.
    pub fn to_text(&self) -> String {
        let mut out = format!("qubits {}\n", self.n_qubits);
        for g in &self.gates {
            out.push_str(g.kind().name());
            for q in g.qubits() {
                out.push_str(&format!(" q{q}"));
            }
            for p in g.params() {
                out.push_str(&format!(" {:016x}", p.to_bits()));
            }
            out.push('\n');
        }
        out
    }
}
