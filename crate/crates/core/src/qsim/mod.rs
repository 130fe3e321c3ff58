//! Exact statevector simulation for small registers.
//!
//! Basis-state indices use a big-endian qubit order: qubit 0 is the most
//! significant bit of the index, so `|q0 q1 ... q(n-1)⟩` maps to the integer
//! whose binary digits read left to right in that order. `expect_z` and every
//! gate kernel follow this convention.

mod gate;
pub mod oracle;

pub use gate::{Circuit, Gate, GateKind};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest register accepted by [`zero_state`].
pub const MAX_QUBITS: usize = 12;

const NORM_TOLERANCE: f64 = 1e-10;

/// Amplitudes of an `n`-qubit pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// Wraps raw amplitudes. The length must be a power of two and the vector
    /// must be normalized to within 1e-10.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::invalid(format!(
                "amplitude count {len} is not a power of two >= 2"
            )));
        }
        let n_qubits = len.trailing_zeros() as usize;
        if n_qubits > MAX_QUBITS {
            return Err(Error::invalid(format!(
                "{n_qubits} qubits exceeds the {MAX_QUBITS}-qubit ceiling"
            )));
        }
        let state = StateVector { n_qubits, amps };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::invalid(format!("state is not normalized (|ψ|² = {norm})")));
        }
        Ok(state)
    }

    /// Product state `⊗_q (cos(φ_q/2)|0⟩ + sin(φ_q/2)|1⟩)`, i.e. `R_y(φ_q)` on
    /// each qubit of `|0…0⟩`. `angles[0]` drives qubit 0.
    pub fn ry_product(angles: &[f64]) -> Result<Self> {
        let n = angles.len();
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::invalid(format!(
                "qubit count {n} outside 1..={MAX_QUBITS}"
            )));
        }
        let mut amps = vec![Complex64::new(1.0, 0.0)];
        for &phi in angles {
            let (s, c) = (phi / 2.0).sin_cos();
            amps = amps
                .iter()
                .flat_map(|&a| [a * c, a * s])
                .collect();
        }
        Ok(StateVector { n_qubits: n, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// In-place version of [`apply_gate`].
    pub fn apply_mut(&mut self, gate: &Gate) -> Result<()> {
        gate.validate(self.n_qubits)?;
        let n = self.n_qubits;
        match *gate {
            Gate::Cnot { control, target } => {
                let cmask = bit_mask(n, control);
                let tmask = bit_mask(n, target);
                for i in 0..self.amps.len() {
                    if i & cmask != 0 && i & tmask == 0 {
                        self.amps.swap(i, i | tmask);
                    }
                }
            }
            Gate::Zz { a, b, theta } => {
                let amask = bit_mask(n, a);
                let bmask = bit_mask(n, b);
                let same = Complex64::from_polar(1.0, -theta);
                let differ = Complex64::from_polar(1.0, theta);
                for (i, amp) in self.amps.iter_mut().enumerate() {
                    let equal = (i & amask == 0) == (i & bmask == 0);
                    *amp *= if equal { same } else { differ };
                }
            }
            _ => {
                // Single-qubit kinds all carry a 2x2 matrix.
                let qubit = gate.qubits()[0];
                let m = gate.single_qubit_matrix().expect("single-qubit gate");
                let stride = bit_mask(n, qubit);
                for i in 0..self.amps.len() {
                    if i & stride == 0 {
                        let j = i | stride;
                        let (a0, a1) = (self.amps[i], self.amps[j]);
                        self.amps[i] = m[0][0] * a0 + m[0][1] * a1;
                        self.amps[j] = m[1][0] * a0 + m[1][1] * a1;
                    }
                }
            }
        }
        Ok(())
    }

    /// In-place version of [`apply_circuit`].
    pub fn apply_circuit_mut(&mut self, circuit: &Circuit) -> Result<()> {
        if circuit.n_qubits() != self.n_qubits {
            return Err(Error::invalid(format!(
                "circuit acts on {} qubits but state has {}",
                circuit.n_qubits(),
                self.n_qubits
            )));
        }
        for gate in circuit.gates() {
            self.apply_mut(gate)?;
        }
        Ok(())
    }

    /// `⟨Z_q⟩` for every qubit at once. Round-off can push a sum past ±1 by
    /// an ulp; results are clamped back.
    pub fn expect_z_all(&self) -> Vec<f64> {
        let n = self.n_qubits;
        let mut out = vec![0.0; n];
        for (k, amp) in self.amps.iter().enumerate() {
            let p = amp.norm_sqr();
            for (q, acc) in out.iter_mut().enumerate() {
                if k & bit_mask(n, q) == 0 {
                    *acc += p;
                } else {
                    *acc -= p;
                }
            }
        }
        out.iter_mut().for_each(|z| *z = z.clamp(-1.0, 1.0));
        out
    }
}

#[inline]
pub(crate) fn bit_mask(n_qubits: usize, qubit: usize) -> usize {
    1 << (n_qubits - 1 - qubit)
}

/// `|0…0⟩` on `n` qubits, `1 <= n <= 12`.
pub fn zero_state(n: usize) -> Result<StateVector> {
    if !(1..=MAX_QUBITS).contains(&n) {
        return Err(Error::invalid(format!(
            "qubit count {n} outside 1..={MAX_QUBITS}"
        )));
    }
    let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
    amps[0] = Complex64::new(1.0, 0.0);
    Ok(StateVector { n_qubits: n, amps })
}

pub fn apply_gate(state: &StateVector, gate: &Gate) -> Result<StateVector> {
    let mut out = state.clone();
    out.apply_mut(gate)?;
    Ok(out)
}

pub fn apply_circuit(state: &StateVector, circuit: &Circuit) -> Result<StateVector> {
    let mut out = state.clone();
    out.apply_circuit_mut(circuit)?;
    Ok(out)
}

/// Exact `⟨Z⟩` on one qubit (no shot sampling).
pub fn expect_z(state: &StateVector, qubit: usize) -> Result<f64> {
    if qubit >= state.n_qubits {
        return Err(Error::invalid(format!(
            "qubit {qubit} out of range for {}-qubit state",
            state.n_qubits
        )));
    }
    let mask = bit_mask(state.n_qubits, qubit);
    Ok(state
        .amps
        .iter()
        .enumerate()
        .map(|(k, a)| if k & mask == 0 { a.norm_sqr() } else { -a.norm_sqr() })
        .sum::<f64>()
        .clamp(-1.0, 1.0))
}

/// Purity `tr(ρ_q²)` of the single-qubit reduced state. Equals 1 for a qubit
/// that is not entangled with the rest of the register.
pub fn reduced_purity(state: &StateVector, qubit: usize) -> Result<f64> {
    if qubit >= state.n_qubits {
        return Err(Error::invalid(format!(
            "qubit {qubit} out of range for {}-qubit state",
            state.n_qubits
        )));
    }
    let mask = bit_mask(state.n_qubits, qubit);
    let (mut p0, mut p1) = (0.0, 0.0);
    let mut coherence = Complex64::new(0.0, 0.0);
    for i in 0..state.amps.len() {
        if i & mask == 0 {
            let (a0, a1) = (state.amps[i], state.amps[i | mask]);
            p0 += a0.norm_sqr();
            p1 += a1.norm_sqr();
            coherence += a0 * a1.conj();
        }
    }
    Ok(p0 * p0 + p1 * p1 + 2.0 * coherence.norm_sqr())
}
