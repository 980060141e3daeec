//! Exact state-vector arithmetic: joint qubit states, P0/P1 projectors,
//! expectation values and Born-rule sampling.
//!
//! Two conventions matter everywhere downstream:
//!
//! - **Qubit order is big-endian.** Qubit 0 is the most significant bit of
//!   the basis index, so the amplitudes of a 2-qubit state are listed in the
//!   order |00⟩, |01⟩, |10⟩, |11⟩.
//! - **Projection does not renormalize.** [`JointState::apply_projector`]
//!   keeps the residual amplitude factors, and
//!   [`JointState::expectation`] reads the state as given. Reading an
//!   unnormalized post-projection state is what makes a remote party's
//!   projector choice locally observable (expectation ½ versus 0). No
//!   physical measurement permits that — the no-communication theorem —
//!   so the registry built on top treats this as a deliberately idealized
//!   signaling primitive, not a model of hardware.
//!
//! All values are immutable; every operation returns a new state. Sampling
//! takes its randomness as an explicit argument, never from global state.

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

pub mod kernel;

/// A complex amplitude. States reject non-finite components on entry.
pub type Amplitude = Complex64;

/// Upper bound on qubit count; bounds the amplitude vector at 2^20.
pub const MAX_QUBITS: usize = 20;

/// Absolute tolerance for equality checks on amplitudes and expectations.
pub const AMP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantumError {
    #[error("bit string {bits:?} does not have length {expected}")]
    BitLengthMismatch { bits: String, expected: usize },
    #[error("bit string contains {0:?}; only '0' and '1' are allowed")]
    InvalidBitChar(char),
    #[error("qubit index {index} out of range for a {num_qubits}-qubit state")]
    QubitOutOfRange { index: usize, num_qubits: usize },
    #[error("{0} qubits exceeds the {MAX_QUBITS}-qubit cap")]
    TooManyQubits(usize),
    #[error("a state needs at least one qubit")]
    NoQubits,
    #[error("amplitude vector of length {got} is not 2^{num_qubits}")]
    BadAmplitudeCount { got: usize, num_qubits: usize },
    #[error("non-finite amplitude at index {0}")]
    NonFiniteAmplitude(usize),
    #[error("state is not normalized (squared norm {0})")]
    NotNormalized(f64),
    #[error("cannot sample a zero-norm state")]
    ZeroNorm,
}

/// Which one-qubit projector: |0⟩⟨0| or |1⟩⟨1|.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProjectorKind {
    P0,
    P1,
}

impl ProjectorKind {
    /// The basis bit this projector keeps.
    pub fn bit(self) -> usize {
        match self {
            ProjectorKind::P0 => 0,
            ProjectorKind::P1 => 1,
        }
    }
}

/// A P0 or P1 projector acting on one qubit of a joint state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Projector {
    pub kind: ProjectorKind,
    pub qubit: usize,
}

impl Projector {
    pub fn p0(qubit: usize) -> Self {
        Self {
            kind: ProjectorKind::P0,
            qubit,
        }
    }

    pub fn p1(qubit: usize) -> Self {
        Self {
            kind: ProjectorKind::P1,
            qubit,
        }
    }
}

/// Complex amplitude vector over the computational basis of `num_qubits`
/// qubits. Fresh states are unit-norm; applying a projector yields a state
/// with squared norm in [0, 1], kept as-is.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    num_qubits: usize,
    amps: Vec<Amplitude>,
}

impl JointState {
    /// Build a normalized state from raw amplitudes. The vector length must
    /// be exactly 2^`num_qubits` and the squared norm 1 within
    /// [`AMP_TOLERANCE`].
    pub fn new(num_qubits: usize, amps: Vec<Amplitude>) -> Result<Self, QuantumError> {
        let state = Self::from_raw(num_qubits, amps)?;
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > AMP_TOLERANCE {
            return Err(QuantumError::NotNormalized(norm));
        }
        Ok(state)
    }

    fn from_raw(num_qubits: usize, amps: Vec<Amplitude>) -> Result<Self, QuantumError> {
        if num_qubits == 0 {
            return Err(QuantumError::NoQubits);
        }
        if num_qubits > MAX_QUBITS {
            return Err(QuantumError::TooManyQubits(num_qubits));
        }
        if amps.len() != 1 << num_qubits {
            return Err(QuantumError::BadAmplitudeCount {
                got: amps.len(),
                num_qubits,
            });
        }
        if let Some(i) = amps
            .iter()
            .position(|a| !a.re.is_finite() || !a.im.is_finite())
        {
            return Err(QuantumError::NonFiniteAmplitude(i));
        }
        Ok(Self { num_qubits, amps })
    }

    /// The basis state |bits⟩, e.g. `basis_state(2, "11")` = [0, 0, 0, 1].
    pub fn basis_state(num_qubits: usize, bits: &str) -> Result<Self, QuantumError> {
        if num_qubits == 0 {
            return Err(QuantumError::NoQubits);
        }
        if num_qubits > MAX_QUBITS {
            return Err(QuantumError::TooManyQubits(num_qubits));
        }
        if bits.chars().count() != num_qubits {
            return Err(QuantumError::BitLengthMismatch {
                bits: bits.to_string(),
                expected: num_qubits,
            });
        }
        let mut index = 0usize;
        for c in bits.chars() {
            index = (index << 1)
                | match c {
                    '0' => 0,
                    '1' => 1,
                    other => return Err(QuantumError::InvalidBitChar(other)),
                };
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
        amps[index] = Complex64::new(1.0, 0.0);
        Ok(Self { num_qubits, amps })
    }

    /// The maximally entangled two-qubit state (1/√2)(|00⟩ + |11⟩).
    pub fn bell_pair() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            num_qubits: 2,
            amps: vec![
                Complex64::new(h, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(h, 0.0),
            ],
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Amplitude] {
        &self.amps
    }

    /// Squared norm ⟨ψ|ψ⟩ of the state as stored.
    pub fn norm_sqr(&self) -> f64 {
        kernel::norm_sqr(&self.amps)
    }

    fn shift_for(&self, qubit: usize) -> Result<u32, QuantumError> {
        if qubit >= self.num_qubits {
            return Err(QuantumError::QubitOutOfRange {
                index: qubit,
                num_qubits: self.num_qubits,
            });
        }
        Ok((self.num_qubits - 1 - qubit) as u32)
    }

    /// Joint state of `self` followed by `other`; amplitude (i, j) is the
    /// product of the factors' amplitudes.
    pub fn tensor(&self, other: &JointState) -> Result<JointState, QuantumError> {
        let n = self.num_qubits + other.num_qubits;
        if n > MAX_QUBITS {
            return Err(QuantumError::TooManyQubits(n));
        }
        Ok(JointState {
            num_qubits: n,
            amps: kernel::tensor(&self.amps, &other.amps),
        })
    }

    /// Apply `p`, zeroing every amplitude whose basis bit at `p.qubit`
    /// disagrees with the projector. The result is **not** renormalized.
    pub fn apply_projector(&self, p: Projector) -> Result<JointState, QuantumError> {
        let shift = self.shift_for(p.qubit)?;
        Ok(JointState {
            num_qubits: self.num_qubits,
            amps: kernel::project(&self.amps, shift, p.kind.bit()),
        })
    }

    /// ⟨ψ|P|ψ⟩ computed on the state exactly as stored; unnormalized
    /// post-projection states are not rescaled first.
    pub fn expectation(&self, p: Projector) -> Result<f64, QuantumError> {
        let shift = self.shift_for(p.qubit)?;
        Ok(kernel::masked_norm_sqr(&self.amps, shift, p.kind.bit()))
    }

    /// Single-shot Born-rule measurement of one qubit. Draws exactly one
    /// value from `rng`; returns the outcome bit and the collapsed state,
    /// renormalized to unit norm.
    pub fn measure_sample<R: Rng + ?Sized>(
        &self,
        qubit: usize,
        rng: &mut R,
    ) -> Result<(u8, JointState), QuantumError> {
        let shift = self.shift_for(qubit)?;
        let total = self.norm_sqr();
        if total <= 0.0 {
            return Err(QuantumError::ZeroNorm);
        }
        let p0 = kernel::masked_norm_sqr(&self.amps, shift, 0) / total;
        let draw: f64 = rng.random();
        let outcome: u8 = if draw < p0 { 0 } else { 1 };
        let projected = kernel::project(&self.amps, shift, outcome as usize);
        let weight = kernel::norm_sqr(&projected);
        debug_assert!(weight > 0.0);
        let collapsed = JointState {
            num_qubits: self.num_qubits,
            amps: kernel::scale(&projected, 1.0 / weight.sqrt()),
        };
        Ok((outcome, collapsed))
    }
}

/// Convenience constructor for the paper-style Bell pair.
pub fn bell_pair() -> JointState {
    JointState::bell_pair()
}
