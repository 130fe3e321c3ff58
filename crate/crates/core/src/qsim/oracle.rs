//! Dense-matrix reference for circuit checks.
//!
//! Gate matrices here are assembled from Pauli operators and Kronecker
//! products, independently of the stride kernels in the parent module.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{Circuit, Gate, StateVector};
use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Largest register the dense oracle will build (64×64 matrices).
pub const MAX_ORACLE_QUBITS: usize = 6;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn identity2() -> CMatrix {
    CMatrix::identity(2, 2)
}

fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
}

fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)])
}

fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
}

fn projector(bit: usize) -> CMatrix {
    let mut m = CMatrix::zeros(2, 2);
    m[(bit, bit)] = c(1., 0.);
    m
}

/// `cos(θ/2) I − i sin(θ/2) P` for a Pauli `P`.
fn pauli_rotation(p: &CMatrix, theta: f64) -> CMatrix {
    let (s, co) = (theta / 2.0).sin_cos();
    identity2() * c(co, 0.) + p * c(0., -s)
}

/// Tensor product of per-qubit operators; `ops[0]` acts on qubit 0 (the most
/// significant index bit).
fn kron_all(ops: &[CMatrix]) -> CMatrix {
    ops.iter()
        .skip(1)
        .fold(ops[0].clone(), |acc, op| acc.kronecker(op))
}

fn embed(n: usize, placements: &[(usize, CMatrix)]) -> CMatrix {
    let ops: Vec<CMatrix> = (0..n)
        .map(|q| {
            placements
                .iter()
                .find(|(target, _)| *target == q)
                .map(|(_, m)| m.clone())
                .unwrap_or_else(identity2)
        })
        .collect();
    kron_all(&ops)
}

/// Full `2^n × 2^n` matrix of one gate.
pub fn gate_matrix(n: usize, gate: &Gate) -> Result<CMatrix> {
    gate.validate(n)?;
    let m = match *gate {
        Gate::Rx { qubit, theta } => embed(n, &[(qubit, pauli_rotation(&pauli_x(), theta))]),
        Gate::Ry { qubit, theta } => embed(n, &[(qubit, pauli_rotation(&pauli_y(), theta))]),
        Gate::Rz { qubit, theta } => embed(n, &[(qubit, pauli_rotation(&pauli_z(), theta))]),
        Gate::Rot { qubit, a, b, c: cc } => {
            let local = pauli_rotation(&pauli_z(), a)
                * pauli_rotation(&pauli_y(), b)
                * pauli_rotation(&pauli_z(), cc);
            embed(n, &[(qubit, local)])
        }
        Gate::H { qubit } => {
            let h = (pauli_x() + pauli_z()) * c(std::f64::consts::FRAC_1_SQRT_2, 0.);
            embed(n, &[(qubit, h)])
        }
        Gate::Cnot { control, target } => {
            embed(n, &[(control, projector(0))]) + embed(n, &[(control, projector(1)), (target, pauli_x())])
        }
        Gate::Zz { a, b, theta } => {
            // (Z⊗Z)² = I, so exp(-iθ Z⊗Z) = cos θ I − i sin θ Z⊗Z.
            let zz = embed(n, &[(a, pauli_z()), (b, pauli_z())]);
            let dim = 1 << n;
            CMatrix::identity(dim, dim) * c(theta.cos(), 0.) + zz * c(0., -theta.sin())
        }
    };
    Ok(m)
}

/// Explicit unitary of a circuit (`U_last ⋯ U_first`). Only for registers of at
/// most six qubits.
pub fn dense_unitary_oracle(circuit: &Circuit) -> Result<CMatrix> {
    let n = circuit.n_qubits();
    if n > MAX_ORACLE_QUBITS {
        return Err(Error::invalid(format!(
            "dense oracle limited to {MAX_ORACLE_QUBITS} qubits, circuit has {n}"
        )));
    }
    let dim = 1 << n;
    circuit
        .gates()
        .iter()
        .try_fold(CMatrix::identity(dim, dim), |acc, g| Ok(gate_matrix(n, g)? * acc))
}

/// Dense matrix-vector product against a statevector.
pub fn apply_dense(matrix: &CMatrix, state: &StateVector) -> Vec<Complex64> {
    let v = nalgebra::DVector::from_column_slice(state.amplitudes());
    (matrix * v).iter().copied().collect()
}

/// Matrix exponential by scaling and squaring with a Taylor core.
pub fn expm(a: &CMatrix) -> CMatrix {
    let norm: f64 = a.iter().map(|z| z.norm()).sum();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let scaled = a * c(1.0 / f64::from(1u32 << squarings), 0.);
    let dim = a.nrows();
    let mut term = CMatrix::identity(dim, dim);
    let mut sum = term.clone();
    for k in 1..30 {
        term = &term * &scaled * c(1.0 / k as f64, 0.);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

pub fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hadamard_matrix() {
        let circ = Circuit::from_gates(1, [Gate::H { qubit: 0 }]).unwrap();
        let u = dense_unitary_oracle(&circ).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let want = CMatrix::from_row_slice(2, 2, &[c(r, 0.), c(r, 0.), c(r, 0.), c(-r, 0.)]);
        assert!((u - want).norm() < 1e-12);
    }

    #[test]
    fn cnot_is_permutation() {
        let circ = Circuit::from_gates(2, [Gate::Cnot { control: 0, target: 1 }]).unwrap();
        let u = dense_unitary_oracle(&circ).unwrap();
        let o = c(1., 0.);
        let z = c(0., 0.);
        #[rustfmt::skip]
        let want = CMatrix::from_row_slice(4, 4, &[
            o, z, z, z,
            z, o, z, z,
            z, z, z, o,
            z, z, o, z,
        ]);
        assert_eq!(u, want);
    }

    #[test]
    fn zz_matches_matrix_exponential() {
        let theta = 0.73;
        let circ = Circuit::from_gates(2, [Gate::Zz { a: 0, b: 1, theta }]).unwrap();
        let u = dense_unitary_oracle(&circ).unwrap();
        let zz = pauli_z().kronecker(&pauli_z());
        let want = expm(&(zz * c(0., -theta)));
        assert!((&u - &want).norm() < 1e-12);
        let diag = [
            Complex64::from_polar(1., -theta),
            Complex64::from_polar(1., theta),
            Complex64::from_polar(1., theta),
            Complex64::from_polar(1., -theta),
        ];
        for (i, d) in diag.iter().enumerate() {
            assert!((u[(i, i)] - d).norm() < 1e-12);
        }
    }

    #[test]
    fn too_many_qubits() {
        let circ = Circuit::new(7).unwrap();
        assert!(dense_unitary_oracle(&circ).is_err());
    }
}
