//! Dense statevector simulation of small qubit registers.
//!
//! Sites are numbered little-endian: site 0 is the least-significant bit of
//! the amplitude index, so `|b_{L−1} … b_1 b_0⟩` lives at index
//! `Σ b_k 2^k`. The computational basis uses `|0⟩ = (1, 0)ᵀ`.
//!
//! Rotation gates follow `R(θ) = exp(−i θ/2 · σ)`, including the two-site
//! interaction gates `Rxx`, `Ryy`, `Rzz`. Under this convention the
//! parameter-shift radius of every rotation is `r = 1/2`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng as _;
use thiserror::Error;

use crate::rng::Rng;

/// Largest register the dense simulator will materialise operators for.
pub const MAX_DENSE_SITES: usize = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuantumError {
    #[error("gate targets {targets:?} invalid for {sites} sites")]
    InvalidTargets { targets: Vec<usize>, sites: usize },
    #[error("state of {0} sites exceeds the dense limit of {MAX_DENSE_SITES}")]
    DimensionTooLarge(usize),
    #[error("Pauli string length {got} does not match {want} sites")]
    StringLength { got: usize, want: usize },
    #[error("expectation has non-Hermitian residue {0:e}")]
    NonHermitian(f64),
    #[error("state norm {0} is not 1")]
    NotNormalized(f64),
}

pub type QResult<T> = Result<T, QuantumError>;

/// Normalised amplitudes of an `L`-site register.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    sites: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩`.
    pub fn zero_state(sites: usize) -> Self {
        Self::basis_state(sites, 0)
    }

    /// The computational basis state with amplitude index `bits`.
    pub fn basis_state(sites: usize, bits: usize) -> Self {
        let dim = 1usize << sites;
        assert!(bits < dim, "basis index out of range");
        let mut amps = vec![Complex64::ZERO; dim];
        amps[bits] = Complex64::ONE;
        StateVector { sites, amps }
    }

    /// `|1…1⟩`.
    pub fn all_ones(sites: usize) -> Self {
        Self::basis_state(sites, (1usize << sites) - 1)
    }

    /// Wraps raw amplitudes, verifying normalisation to 1e−10.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> QResult<Self> {
        let dim = amps.len();
        assert!(dim.is_power_of_two(), "amplitude count must be a power of two");
        let sites = dim.trailing_zeros() as usize;
        let norm: f64 = amps.iter().map(|c| c.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(QuantumError::NotNormalized(norm));
        }
        Ok(StateVector { sites, amps })
    }

    /// Haar-ish random state: complex Gaussian amplitudes, normalised.
    pub fn random(sites: usize, rng: &mut Rng) -> Self {
        let dim = 1usize << sites;
        let normal = rand_distr::StandardNormal;
        let mut amps: Vec<Complex64> = (0..dim)
            .map(|_| Complex64::new(rng.sample(normal), rng.sample(normal)))
            .collect();
        let norm: f64 = amps.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        for a in &mut amps {
            *a /= norm;
        }
        StateVector { sites, amps }
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Equality up to a global phase: `|⟨a|b⟩| > 1 − 1e−10`.
    pub fn equals_up_to_phase(&self, other: &StateVector) -> bool {
        self.sites == other.sites && self.inner(other).norm() > 1.0 - 1e-10
    }

    /// Applies `gate`, allocating the result.
    pub fn apply(&self, gate: &Gate) -> QResult<StateVector> {
        gate.validate(self.sites)?;
        let mut out = self.clone();
        gate.apply_in_place(&mut out.amps);
        Ok(out)
    }

    /// Applies a sequence of gates in order.
    pub fn apply_all<'a>(&self, gates: impl IntoIterator<Item = &'a Gate>) -> QResult<StateVector> {
        let mut out = self.clone();
        for g in gates {
            g.validate(self.sites)?;
            g.apply_in_place(&mut out.amps);
        }
        Ok(out)
    }
}

/// A quantum gate. Arity is fixed by the variant; rotation angles are in
/// radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    H(usize),
    X(usize),
    S(usize),
    T(usize),
    Rx(usize, f64),
    Ry(usize, f64),
    Rz(usize, f64),
    /// Control, then target.
    Cnot(usize, usize),
    Cz(usize, usize),
    Swap(usize, usize),
    Rxx(usize, usize, f64),
    Ryy(usize, usize, f64),
    Rzz(usize, usize, f64),
}

impl Gate {
    pub fn targets(&self) -> Vec<usize> {
        match *self {
            Gate::H(a) | Gate::X(a) | Gate::S(a) | Gate::T(a) => vec![a],
            Gate::Rx(a, _) | Gate::Ry(a, _) | Gate::Rz(a, _) => vec![a],
            Gate::Cnot(a, b) | Gate::Cz(a, b) | Gate::Swap(a, b) => vec![a, b],
            Gate::Rxx(a, b, _) | Gate::Ryy(a, b, _) | Gate::Rzz(a, b, _) => vec![a, b],
        }
    }

    pub fn angle(&self) -> Option<f64> {
        match *self {
            Gate::Rx(_, t) | Gate::Ry(_, t) | Gate::Rz(_, t) => Some(t),
            Gate::Rxx(_, _, t) | Gate::Ryy(_, _, t) | Gate::Rzz(_, _, t) => Some(t),
            _ => None,
        }
    }

    /// Same gate with the angle replaced; panics on fixed gates.
    pub fn with_angle(&self, t: f64) -> Gate {
        match *self {
            Gate::Rx(a, _) => Gate::Rx(a, t),
            Gate::Ry(a, _) => Gate::Ry(a, t),
            Gate::Rz(a, _) => Gate::Rz(a, t),
            Gate::Rxx(a, b, _) => Gate::Rxx(a, b, t),
            Gate::Ryy(a, b, _) => Gate::Ryy(a, b, t),
            Gate::Rzz(a, b, _) => Gate::Rzz(a, b, t),
            _ => panic!("gate has no angle"),
        }
    }

    fn validate(&self, sites: usize) -> QResult<()> {
        let ts = self.targets();
        let distinct = ts.len() < 2 || ts[0] != ts[1];
        if !distinct || ts.iter().any(|&t| t >= sites) {
            return Err(QuantumError::InvalidTargets {
                targets: ts,
                sites,
            });
        }
        Ok(())
    }

    fn apply_in_place(&self, amps: &mut [Complex64]) {
        let dim = amps.len();
        match *self {
            Gate::H(q) => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                one_qubit(amps, q, |a0, a1| (s * (a0 + a1), s * (a0 - a1)));
            }
            Gate::X(q) => one_qubit(amps, q, |a0, a1| (a1, a0)),
            Gate::S(q) => {
                let i = Complex64::I;
                one_qubit(amps, q, |a0, a1| (a0, i * a1));
            }
            Gate::T(q) => {
                let w = Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4);
                one_qubit(amps, q, |a0, a1| (a0, w * a1));
            }
            Gate::Rx(q, t) => {
                let (c, s) = ((t / 2.0).cos(), (t / 2.0).sin());
                let is = Complex64::new(0.0, -s);
                one_qubit(amps, q, |a0, a1| (c * a0 + is * a1, is * a0 + c * a1));
            }
            Gate::Ry(q, t) => {
                let (c, s) = ((t / 2.0).cos(), (t / 2.0).sin());
                one_qubit(amps, q, |a0, a1| (c * a0 - s * a1, s * a0 + c * a1));
            }
            Gate::Rz(q, t) => {
                let p0 = Complex64::from_polar(1.0, -t / 2.0);
                let p1 = Complex64::from_polar(1.0, t / 2.0);
                one_qubit(amps, q, |a0, a1| (p0 * a0, p1 * a1));
            }
            Gate::Cnot(c, t) => {
                let (mc, mt) = (1usize << c, 1usize << t);
                for i in 0..dim {
                    if i & mc != 0 && i & mt == 0 {
                        amps.swap(i, i | mt);
                    }
                }
            }
            Gate::Cz(a, b) => {
                let m = (1usize << a) | (1usize << b);
                for (i, amp) in amps.iter_mut().enumerate() {
                    if i & m == m {
                        *amp = -*amp;
                    }
                }
            }
            Gate::Swap(a, b) => {
                let (ma, mb) = (1usize << a, 1usize << b);
                for i in 0..dim {
                    if i & ma != 0 && i & mb == 0 {
                        amps.swap(i, (i & !ma) | mb);
                    }
                }
            }
            Gate::Rzz(a, b, t) => {
                let (ma, mb) = (1usize << a, 1usize << b);
                let same = Complex64::from_polar(1.0, -t / 2.0);
                let diff = Complex64::from_polar(1.0, t / 2.0);
                for (i, amp) in amps.iter_mut().enumerate() {
                    let aligned = (i & ma != 0) == (i & mb != 0);
                    *amp *= if aligned { same } else { diff };
                }
            }
            Gate::Rxx(a, b, t) => {
                let m = (1usize << a) | (1usize << b);
                let (c, s) = ((t / 2.0).cos(), (t / 2.0).sin());
                let is = Complex64::new(0.0, -s);
                for i in 0..dim {
                    let j = i ^ m;
                    if i < j {
                        let (ai, aj) = (amps[i], amps[j]);
                        amps[i] = c * ai + is * aj;
                        amps[j] = c * aj + is * ai;
                    }
                }
            }
            Gate::Ryy(a, b, t) => {
                // YY maps |00⟩↔|11⟩ with sign −1 and |01⟩↔|10⟩ with +1
                let (ma, mb) = (1usize << a, 1usize << b);
                let m = ma | mb;
                let (c, s) = ((t / 2.0).cos(), (t / 2.0).sin());
                let is = Complex64::new(0.0, -s);
                for i in 0..dim {
                    let j = i ^ m;
                    if i < j {
                        let aligned = (i & ma != 0) == (i & mb != 0);
                        let f = if aligned { -1.0 } else { 1.0 };
                        let (ai, aj) = (amps[i], amps[j]);
                        amps[i] = c * ai + f * is * aj;
                        amps[j] = c * aj + f * is * ai;
                    }
                }
            }
        }
    }
}

fn one_qubit(
    amps: &mut [Complex64],
    q: usize,
    f: impl Fn(Complex64, Complex64) -> (Complex64, Complex64),
) {
    let m = 1usize << q;
    for i in 0..amps.len() {
        if i & m == 0 {
            let j = i | m;
            let (n0, n1) = f(amps[i], amps[j]);
            amps[i] = n0;
            amps[j] = n1;
        }
    }
}

/// Single-site Pauli operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

/// A weighted tensor product of single-site Paulis over the full register.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliString {
    pub coeff: f64,
    pub ops: Vec<Pauli>,
}

impl PauliString {
    pub fn identity(sites: usize, coeff: f64) -> Self {
        PauliString {
            coeff,
            ops: vec![Pauli::I; sites],
        }
    }

    /// Coefficient times a single Pauli on one site.
    pub fn single(sites: usize, site: usize, op: Pauli, coeff: f64) -> Self {
        let mut s = Self::identity(sites, coeff);
        s.ops[site] = op;
        s
    }

    /// Coefficient times the same Pauli on two sites.
    pub fn pair(sites: usize, a: usize, b: usize, op: Pauli, coeff: f64) -> Self {
        let mut s = Self::identity(sites, coeff);
        s.ops[a] = op;
        s.ops[b] = op;
        s
    }

    /// Parses letters like `"XZIY"`; index 0 of the string is site 0.
    pub fn parse(letters: &str, coeff: f64) -> Self {
        let ops = letters
            .chars()
            .map(|c| match c {
                'I' => Pauli::I,
                'X' => Pauli::X,
                'Y' => Pauli::Y,
                'Z' => Pauli::Z,
                other => panic!("unknown Pauli letter {other:?}"),
            })
            .collect();
        PauliString { coeff, ops }
    }

    /// Bit mask of sites whose basis bit this string flips (X and Y sites).
    pub fn flip_mask(&self) -> usize {
        self.ops
            .iter()
            .enumerate()
            .filter(|(_, p)| matches!(p, Pauli::X | Pauli::Y))
            .fold(0, |m, (k, _)| m | (1 << k))
    }

    /// Phase φ such that `P |b⟩ = φ |b ^ flip_mask⟩` (coefficient excluded).
    pub fn phase_on(&self, bits: usize) -> Complex64 {
        let mut phase = Complex64::ONE;
        for (k, p) in self.ops.iter().enumerate() {
            let bit = (bits >> k) & 1;
            match p {
                Pauli::I | Pauli::X => {}
                Pauli::Y => {
                    // Y|0⟩ = i|1⟩, Y|1⟩ = −i|0⟩
                    phase *= if bit == 0 { Complex64::I } else { -Complex64::I };
                }
                Pauli::Z => {
                    if bit == 1 {
                        phase = -phase;
                    }
                }
            }
        }
        phase
    }

    /// `coeff · P |ψ⟩` accumulated into `out`.
    fn accumulate_applied(&self, amps: &[Complex64], out: &mut [Complex64]) {
        let mask = self.flip_mask();
        for (b, &a) in amps.iter().enumerate() {
            out[b ^ mask] += self.coeff * self.phase_on(b) * a;
        }
    }
}

/// A Hermitian operator as a real-weighted sum of Pauli strings.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliHamiltonian {
    sites: usize,
    terms: Vec<PauliString>,
}

impl PauliHamiltonian {
    pub fn new(sites: usize, terms: Vec<PauliString>) -> QResult<Self> {
        for t in &terms {
            if t.ops.len() != sites {
                return Err(QuantumError::StringLength {
                    got: t.ops.len(),
                    want: sites,
                });
            }
        }
        Ok(PauliHamiltonian { sites, terms })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn terms(&self) -> &[PauliString] {
        &self.terms
    }

    /// `H |ψ⟩` as a raw (unnormalised) amplitude vector.
    pub fn apply(&self, state: &StateVector) -> Vec<Complex64> {
        self.apply_amplitudes(&state.amps)
    }

    /// `H v` for an arbitrary (not necessarily normalised) vector.
    pub fn apply_amplitudes(&self, amps: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(amps.len(), 1usize << self.sites, "vector dimension");
        let mut out = vec![Complex64::ZERO; amps.len()];
        for t in &self.terms {
            t.accumulate_applied(amps, &mut out);
        }
        out
    }

    /// Dense matrix representation, limited to `MAX_DENSE_SITES`.
    pub fn to_dense(&self) -> QResult<DMatrix<Complex64>> {
        if self.sites > MAX_DENSE_SITES {
            return Err(QuantumError::DimensionTooLarge(self.sites));
        }
        let dim = 1usize << self.sites;
        let mut m = DMatrix::from_element(dim, dim, Complex64::ZERO);
        for t in &self.terms {
            let mask = t.flip_mask();
            for col in 0..dim {
                let row = col ^ mask;
                m[(row, col)] += t.coeff * t.phase_on(col);
            }
        }
        Ok(m)
    }
}

/// `Σ_j c_j ⟨ψ|P_j|ψ⟩`. Errs if the imaginary residue exceeds 1e−10.
pub fn expectation(state: &StateVector, h: &PauliHamiltonian) -> QResult<f64> {
    let applied = h.apply(state);
    let mut acc = Complex64::ZERO;
    for (a, hpsi) in state.amps.iter().zip(&applied) {
        acc += a.conj() * hpsi;
    }
    if acc.im.abs() > 1e-10 {
        return Err(QuantumError::NonHermitian(acc.im.abs()));
    }
    Ok(acc.re)
}

/// Eigenvalues in ascending order and a ground-state vector with
/// `‖Hv − λ₀v‖ ≤ 1e−8`.
///
/// When the ground level is degenerate the returned vector is the one that
/// maximises total `⟨Σ Z_k⟩` within the degenerate subspace. This keeps the
/// choice deterministic and picks a product state whenever one spans the
/// level, instead of an arbitrary entangled combination.
pub fn exact_diagonalize(h: &PauliHamiltonian) -> QResult<(Vec<f64>, StateVector)> {
    let m = h.to_dense()?;
    let dim = m.nrows();
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();

    let ground_energy = eigenvalues[0];
    let degenerate: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| eig.eigenvalues[i] - ground_energy <= 1e-9)
        .collect();

    let ground: DVector<Complex64> = if degenerate.len() == 1 {
        eig.eigenvectors.column(degenerate[0]).into_owned()
    } else {
        resolve_degeneracy(&eig.eigenvectors, &degenerate, h.sites)
    };

    let mut amps: Vec<Complex64> = ground.iter().copied().collect();
    let norm: f64 = amps.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    for a in &mut amps {
        *a /= norm;
    }
    Ok((eigenvalues, StateVector { sites: h.sites, amps }))
}

// Rayleigh-Ritz of Σ Z_k restricted to the candidate columns; returns the
// combination with the largest ⟨Σ Z⟩.
fn resolve_degeneracy(
    vectors: &DMatrix<Complex64>,
    cols: &[usize],
    sites: usize,
) -> DVector<Complex64> {
    let dim = vectors.nrows();
    let k = cols.len();
    let total_z = |b: usize| -> f64 {
        (0..sites)
            .map(|q| if b >> q & 1 == 0 { 1.0 } else { -1.0 })
            .sum()
    };
    let mut sz = DMatrix::from_element(k, k, Complex64::ZERO);
    for (i, &ci) in cols.iter().enumerate() {
        for (j, &cj) in cols.iter().enumerate() {
            let mut acc = Complex64::ZERO;
            for b in 0..dim {
                acc += vectors[(b, ci)].conj() * total_z(b) * vectors[(b, cj)];
            }
            sz[(i, j)] = acc;
        }
    }
    let sub = sz.symmetric_eigen();
    let best = (0..k)
        .max_by(|&a, &b| sub.eigenvalues[a].total_cmp(&sub.eigenvalues[b]))
        .unwrap();
    let mut out = DVector::from_element(dim, Complex64::ZERO);
    for (i, &ci) in cols.iter().enumerate() {
        let w = sub.eigenvectors[(i, best)];
        for b in 0..dim {
            out[b] += w * vectors[(b, ci)];
        }
    }
    out
}

/// Draws `n` basis states by inverse-transform sampling of `|c_b|²`;
/// returns one count per bitstring index.
pub fn sample_bitstrings(state: &StateVector, n: usize, rng: &mut Rng) -> Vec<u64> {
    assert!(n > 0, "sample count must be positive");
    let probs: Vec<f64> = state.amps.iter().map(|c| c.norm_sqr()).collect();
    let mut counts = vec![0u64; probs.len()];
    for _ in 0..n {
        let u: f64 = rng.random();
        let mut r = 0.0;
        let mut chosen = probs.len() - 1;
        for (b, p) in probs.iter().enumerate() {
            r += p;
            if u < r {
                chosen = b;
                break;
            }
        }
        counts[chosen] += 1;
    }
    counts
}

/// Von Neumann entropy (natural log) across the cut between sites
/// `[0, cut)` and `[cut, L)`.
pub fn entanglement_entropy(state: &StateVector, cut: usize) -> f64 {
    assert!(cut > 0 && cut < state.sites, "cut must be interior");
    let da = 1usize << cut;
    let db = 1usize << (state.sites - cut);
    // ρ_A = M M† with M[a, b] = ψ[a + (b << cut)]
    let mut rho = DMatrix::from_element(da, da, Complex64::ZERO);
    for a1 in 0..da {
        for a2 in 0..da {
            let mut acc = Complex64::ZERO;
            for b in 0..db {
                acc += state.amps[a1 + (b << cut)] * state.amps[a2 + (b << cut)].conj();
            }
            rho[(a1, a2)] = acc;
        }
    }
    let eig = rho.symmetric_eigen();
    eig.eigenvalues
        .iter()
        .filter(|&&l| l > 1e-14)
        .map(|&l| -l * l.ln())
        .sum()
}
