//! Gradient-trained parametric quantum circuits: VQE for the XXZ chain and
//! QAOA for Max-Cut.
//!
//! Circuit energies are differentiated in two independent ways:
//!
//! * **autodiff through the simulator** — the statevector evolution is
//!   unrolled onto the scalar tape with every amplitude carried as a
//!   (re, im) pair of nodes, so one reverse sweep yields the full `∇_θ C`;
//! * **parameter shift** — `∂C/∂θ = r·[C(θ + π/(4r)) − C(θ − π/(4r))]`
//!   with shift radius `r = 1/2` for the `exp(−iθ/2 σ)` rotation family,
//!   kept as an exact cross-check of the tape path.

use crate::autodiff::{NodeId, Tape, TapeBuilder, TapeScratch};
use crate::optim::{Optimizer, Rule};
use crate::quantum::{
    expectation, Gate, Pauli, PauliHamiltonian, PauliString, QResult, QuantumError, StateVector,
};
use crate::rng::Rng;
use rand::Rng as _;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VariationalError {
    #[error("theta has length {got}, circuit needs {want}")]
    ThetaLength { got: usize, want: usize },
    #[error("parameter slot {0} is not a rotation slot")]
    NotARotationSlot(usize),
    #[error("parameter slots must cover 0..{want}, slot {missing} unbound")]
    UnboundSlot { want: usize, missing: usize },
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error(transparent)]
    Ad(#[from] crate::autodiff::AdError),
    #[error(transparent)]
    Optim(#[from] crate::optim::OptimError),
}

pub type VResult<T> = Result<T, VariationalError>;

/// A gate template: fixed, or a rotation whose angle is `scale · θ[slot]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamGate {
    pub gate: Gate,
    pub binding: Option<(usize, f64)>,
}

impl ParamGate {
    pub fn fixed(gate: Gate) -> Self {
        ParamGate {
            gate,
            binding: None,
        }
    }

    pub fn bound(gate: Gate, slot: usize, scale: f64) -> Self {
        assert!(gate.angle().is_some(), "only rotation gates take parameters");
        ParamGate {
            gate,
            binding: Some((slot, scale)),
        }
    }

    fn resolve(&self, theta: &[f64]) -> Gate {
        match self.binding {
            Some((slot, scale)) => self.gate.with_angle(scale * theta[slot]),
            None => self.gate,
        }
    }
}

/// A gate sequence over `sites` qubits with `n_params` free angles, applied
/// to a fixed initial basis state.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCircuit {
    sites: usize,
    initial_bits: usize,
    gates: Vec<ParamGate>,
    n_params: usize,
}

impl ParamCircuit {
    pub fn new(
        sites: usize,
        initial_bits: usize,
        gates: Vec<ParamGate>,
        n_params: usize,
    ) -> VResult<Self> {
        let mut bound = vec![false; n_params];
        for g in &gates {
            if let Some((slot, _)) = g.binding {
                if slot >= n_params {
                    return Err(VariationalError::UnboundSlot {
                        want: n_params,
                        missing: slot,
                    });
                }
                bound[slot] = true;
            }
        }
        if let Some(missing) = bound.iter().position(|b| !b) {
            return Err(VariationalError::UnboundSlot {
                want: n_params,
                missing,
            });
        }
        Ok(ParamCircuit {
            sites,
            initial_bits,
            gates,
            n_params,
        })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn gates(&self) -> &[ParamGate] {
        &self.gates
    }

    pub fn gate_count(&self) -> usize {
        self.gates.len()
    }

    fn check_theta(&self, theta: &[f64]) -> VResult<()> {
        if theta.len() != self.n_params {
            return Err(VariationalError::ThetaLength {
                got: theta.len(),
                want: self.n_params,
            });
        }
        Ok(())
    }

    /// Runs the circuit on the plain complex simulator.
    pub fn state(&self, theta: &[f64]) -> VResult<StateVector> {
        self.check_theta(theta)?;
        let gates: Vec<Gate> = self.gates.iter().map(|g| g.resolve(theta)).collect();
        Ok(StateVector::basis_state(self.sites, self.initial_bits).apply_all(&gates)?)
    }

    /// Uniform random angles in (−π, π).
    pub fn random_theta(&self, rng: &mut Rng) -> Vec<f64> {
        (0..self.n_params)
            .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
            .collect()
    }

    /// Exact gradient component from two shifted circuit evaluations:
    /// each gate bound to `slot` contributes
    /// `scale · (1/2) · [C(angle + π/2) − C(angle − π/2)]`.
    pub fn param_shift_grad(
        &self,
        theta: &[f64],
        h: &PauliHamiltonian,
        slot: usize,
    ) -> VResult<f64> {
        self.check_theta(theta)?;
        let bound: Vec<usize> = self
            .gates
            .iter()
            .enumerate()
            .filter(|(_, g)| matches!(g.binding, Some((s, _)) if s == slot))
            .map(|(k, _)| k)
            .collect();
        if bound.is_empty() {
            return Err(VariationalError::NotARotationSlot(slot));
        }
        let mut grad = 0.0;
        for k in bound {
            let scale = self.gates[k].binding.expect("bound gate").1;
            let eval = |shift: f64| -> VResult<f64> {
                let gates: Vec<Gate> = self
                    .gates
                    .iter()
                    .enumerate()
                    .map(|(j, g)| {
                        let gate = g.resolve(theta);
                        if j == k {
                            gate.with_angle(gate.angle().expect("rotation") + shift)
                        } else {
                            gate
                        }
                    })
                    .collect();
                let s =
                    StateVector::basis_state(self.sites, self.initial_bits).apply_all(&gates)?;
                Ok(expectation(&s, h)?)
            };
            let plus = eval(std::f64::consts::FRAC_PI_2)?;
            let minus = eval(-std::f64::consts::FRAC_PI_2)?;
            grad += scale * 0.5 * (plus - minus);
        }
        Ok(grad)
    }
}

/// `C(θ) = ⟨ψ(θ)|H|ψ(θ)⟩` on the plain simulator.
pub fn vqe_energy(circuit: &ParamCircuit, theta: &[f64], h: &PauliHamiltonian) -> VResult<f64> {
    Ok(expectation(&circuit.state(theta)?, h)?)
}

// (re, im) node pair per amplitude.
type CNode = (NodeId, NodeId);

/// The circuit energy as a differentiable tape: inputs are the parameter
/// vector, output is `⟨ψ(θ)|H|ψ(θ)⟩`.
#[derive(Debug, Clone)]
pub struct EnergyTape {
    tape: Tape,
    n_params: usize,
}

impl EnergyTape {
    pub fn build(circuit: &ParamCircuit, h: &PauliHamiltonian) -> VResult<Self> {
        assert_eq!(h.sites(), circuit.sites, "Hamiltonian site count");
        let dim = 1usize << circuit.sites;
        let mut b = TapeBuilder::new();
        let theta = b.inputs(circuit.n_params);

        let zero = b.constant(0.0);
        let one = b.constant(1.0);
        let mut state: Vec<CNode> = (0..dim)
            .map(|i| {
                if i == circuit.initial_bits {
                    (one, zero)
                } else {
                    (zero, zero)
                }
            })
            .collect();

        for g in &circuit.gates {
            let angle: Option<NodeId> = match g.binding {
                Some((slot, scale)) => Some(b.scale(theta[slot], scale)),
                None => g.gate.angle().map(|a| b.constant(a)),
            };
            apply_gate_on(&mut b, &mut state, &g.gate, angle, circuit.sites);
        }

        let energy = expectation_on(&mut b, &state, h);
        Ok(EnergyTape {
            tape: b.finish(energy),
            n_params: circuit.n_params,
        })
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn node_count(&self) -> usize {
        self.tape.node_count()
    }

    pub fn value(&self, theta: &[f64]) -> VResult<f64> {
        Ok(self.tape.evaluate(theta)?)
    }

    /// Energy and its full gradient in one reverse sweep.
    pub fn value_and_grad(&self, theta: &[f64], grad: &mut [f64]) -> VResult<f64> {
        let mut scratch = TapeScratch::default();
        Ok(self.tape.reverse_grad_with(theta, &mut scratch, grad)?)
    }
}

// Complex helpers over node pairs.
fn cmul_real(b: &mut TapeBuilder, c: NodeId, z: CNode) -> CNode {
    (b.mul(c, z.0), b.mul(c, z.1))
}

fn cadd(b: &mut TapeBuilder, x: CNode, y: CNode) -> CNode {
    (b.add(x.0, y.0), b.add(x.1, y.1))
}

fn csub(b: &mut TapeBuilder, x: CNode, y: CNode) -> CNode {
    (b.sub(x.0, y.0), b.sub(x.1, y.1))
}

// (c − i s)·z = (c·re + s·im, c·im − s·re)
fn phase_minus(b: &mut TapeBuilder, c: NodeId, s: NodeId, z: CNode) -> CNode {
    let cr = b.mul(c, z.0);
    let si = b.mul(s, z.1);
    let ci = b.mul(c, z.1);
    let sr = b.mul(s, z.0);
    (b.add(cr, si), b.sub(ci, sr))
}

// (c + i s)·z = (c·re − s·im, c·im + s·re)
fn phase_plus(b: &mut TapeBuilder, c: NodeId, s: NodeId, z: CNode) -> CNode {
    let cr = b.mul(c, z.0);
    let si = b.mul(s, z.1);
    let ci = b.mul(c, z.1);
    let sr = b.mul(s, z.0);
    (b.sub(cr, si), b.add(ci, sr))
}

// −i·s·z = (s·im, −s·re)
fn minus_i_s(b: &mut TapeBuilder, s: NodeId, z: CNode) -> CNode {
    let si = b.mul(s, z.1);
    let sr = b.mul(s, z.0);
    (si, b.neg(sr))
}

fn apply_gate_on(
    b: &mut TapeBuilder,
    state: &mut [CNode],
    gate: &Gate,
    angle: Option<NodeId>,
    sites: usize,
) {
    let dim = 1usize << sites;
    let half = angle.map(|a| b.scale(a, 0.5));
    let (c, s) = match half {
        Some(h) => (Some(b.cos(h)), Some(b.sin(h))),
        None => (None, None),
    };
    match *gate {
        Gate::H(q) => {
            let m = 1usize << q;
            let r = b.constant(std::f64::consts::FRAC_1_SQRT_2);
            for i in 0..dim {
                if i & m == 0 {
                    let j = i | m;
                    let sum = cadd(b, state[i], state[j]);
                    let diff = csub(b, state[i], state[j]);
                    state[i] = cmul_real(b, r, sum);
                    state[j] = cmul_real(b, r, diff);
                }
            }
        }
        Gate::X(q) => {
            let m = 1usize << q;
            for i in 0..dim {
                if i & m == 0 {
                    state.swap(i, i | m);
                }
            }
        }
        Gate::S(q) => {
            let m = 1usize << q;
            for i in 0..dim {
                if i & m != 0 {
                    // i·z = (−im, re)
                    let (re, im) = state[i];
                    state[i] = (b.neg(im), re);
                }
            }
        }
        Gate::T(q) => {
            let m = 1usize << q;
            let c = b.constant(std::f64::consts::FRAC_PI_4.cos());
            let s = b.constant(std::f64::consts::FRAC_PI_4.sin());
            for i in 0..dim {
                if i & m != 0 {
                    state[i] = phase_plus(b, c, s, state[i]);
                }
            }
        }
        Gate::Rx(q, _) => {
            let (c, s) = (c.unwrap(), s.unwrap());
            let m = 1usize << q;
            for i in 0..dim {
                if i & m == 0 {
                    let j = i | m;
                    let (a0, a1) = (state[i], state[j]);
                    let c0 = cmul_real(b, c, a0);
                    let c1 = cmul_real(b, c, a1);
                    let is1 = minus_i_s(b, s, a1);
                    let is0 = minus_i_s(b, s, a0);
                    state[i] = cadd(b, c0, is1);
                    state[j] = cadd(b, is0, c1);
                }
            }
        }
        Gate::Ry(q, _) => {
            let (c, s) = (c.unwrap(), s.unwrap());
            let m = 1usize << q;
            for i in 0..dim {
                if i & m == 0 {
                    let j = i | m;
                    let (a0, a1) = (state[i], state[j]);
                    let c0 = cmul_real(b, c, a0);
                    let c1 = cmul_real(b, c, a1);
                    let s0 = cmul_real(b, s, a0);
                    let s1 = cmul_real(b, s, a1);
                    state[i] = csub(b, c0, s1);
                    state[j] = cadd(b, s0, c1);
                }
            }
        }
        Gate::Rz(q, _) => {
            let (c, s) = (c.unwrap(), s.unwrap());
            let m = 1usize << q;
            for i in 0..dim {
                state[i] = if i & m == 0 {
                    phase_minus(b, c, s, state[i])
                } else {
                    phase_plus(b, c, s, state[i])
                };
            }
        }
        Gate::Cnot(ctl, tgt) => {
            let (mc, mt) = (1usize << ctl, 1usize << tgt);
            for i in 0..dim {
                if i & mc != 0 && i & mt == 0 {
                    state.swap(i, i | mt);
                }
            }
        }
        Gate::Cz(a, q) => {
            let m = (1usize << a) | (1usize << q);
            for i in 0..dim {
                if i & m == m {
                    let (re, im) = state[i];
                    state[i] = (b.neg(re), b.neg(im));
                }
            }
        }
        Gate::Swap(a, q) => {
            let (ma, mb) = (1usize << a, 1usize << q);
            for i in 0..dim {
                if i & ma != 0 && i & mb == 0 {
                    state.swap(i, (i & !ma) | mb);
                }
            }
        }
        Gate::Rzz(x, y, _) => {
            let (c, s) = (c.unwrap(), s.unwrap());
            let (mx, my) = (1usize << x, 1usize << y);
            for i in 0..dim {
                let aligned = (i & mx != 0) == (i & my != 0);
                state[i] = if aligned {
                    phase_minus(b, c, s, state[i])
                } else {
                    phase_plus(b, c, s, state[i])
                };
            }
        }
        Gate::Rxx(x, y, _) => {
            let (c, s) = (c.unwrap(), s.unwrap());
            let m = (1usize << x) | (1usize << y);
            for i in 0..dim {
                let j = i ^ m;
                if i < j {
                    let (ai, aj) = (state[i], state[j]);
                    let ci = cmul_real(b, c, ai);
                    let cj = cmul_real(b, c, aj);
                    let isj = minus_i_s(b, s, aj);
                    let isi = minus_i_s(b, s, ai);
                    state[i] = cadd(b, ci, isj);
                    state[j] = cadd(b, cj, isi);
                }
            }
        }
        Gate::Ryy(x, y, _) => {
            let (c, s) = (c.unwrap(), s.unwrap());
            let (mx, my) = (1usize << x, 1usize << y);
            let m = mx | my;
            for i in 0..dim {
                let j = i ^ m;
                if i < j {
                    let aligned = (i & mx != 0) == (i & my != 0);
                    let (ai, aj) = (state[i], state[j]);
                    let ci = cmul_real(b, c, ai);
                    let cj = cmul_real(b, c, aj);
                    let mut isj = minus_i_s(b, s, aj);
                    let mut isi = minus_i_s(b, s, ai);
                    if aligned {
                        isj = (b.neg(isj.0), b.neg(isj.1));
                        isi = (b.neg(isi.0), b.neg(isi.1));
                    }
                    state[i] = cadd(b, ci, isj);
                    state[j] = cadd(b, cj, isi);
                }
            }
        }
    }
}

// Re ⟨ψ| H |ψ⟩ = Σ_terms Σ_b Re( conj(ψ[b ^ mask]) · w(b) · ψ[b] )
// with w(b) = coeff · phase(b) ∈ {±coeff, ±i·coeff}.
fn expectation_on(b: &mut TapeBuilder, state: &[CNode], h: &PauliHamiltonian) -> NodeId {
    let mut contributions: Vec<NodeId> = Vec::new();
    for term in h.terms() {
        let mask = term.flip_mask();
        for (bits, &(re, im)) in state.iter().enumerate() {
            let w = term.coeff * term.phase_on(bits);
            let (re_p, im_p) = state[bits ^ mask];
            // z = w·ψ[bits]; contribution = re'·zr + im'·zi
            let (zr, zi): (NodeId, NodeId) = if w.im == 0.0 {
                (b.scale(re, w.re), b.scale(im, w.re))
            } else {
                // purely imaginary weight: (i·wi)(re + i·im) = (−wi·im, wi·re)
                (b.scale(im, -w.im), b.scale(re, w.im))
            };
            let a = b.mul(re_p, zr);
            let c = b.mul(im_p, zi);
            contributions.push(b.add(a, c));
        }
    }
    b.sum(&contributions)
}

/// Open-chain XXZ Hamiltonian
/// `−(1/4) Σ_{i<L−1} (X_iX_{i+1} + Y_iY_{i+1} + Δ Z_iZ_{i+1})`.
pub fn build_xxz(sites: usize, delta: f64) -> PauliHamiltonian {
    assert!(sites >= 2);
    let mut terms = Vec::with_capacity(3 * (sites - 1));
    for i in 0..sites - 1 {
        terms.push(PauliString::pair(sites, i, i + 1, Pauli::X, -0.25));
        terms.push(PauliString::pair(sites, i, i + 1, Pauli::Y, -0.25));
        terms.push(PauliString::pair(sites, i, i + 1, Pauli::Z, -0.25 * delta));
    }
    PauliHamiltonian::new(sites, terms).expect("lengths match")
}

/// Open-chain transverse-field Ising Hamiltonian
/// `−Σ X_iX_{i+1} − Σ Z_i`.
pub fn build_tfim(sites: usize) -> PauliHamiltonian {
    assert!(sites >= 2);
    let mut terms = Vec::new();
    for i in 0..sites - 1 {
        terms.push(PauliString::pair(sites, i, i + 1, Pauli::X, -1.0));
    }
    for i in 0..sites {
        terms.push(PauliString::single(sites, i, Pauli::Z, -1.0));
    }
    PauliHamiltonian::new(sites, terms).expect("lengths match")
}

/// Layered hardware-style ansatz on `|1…1⟩`: per layer an Ry rotation on
/// every site, an Rz rotation on every site, then the CNOT chain
/// `(0→1), (1→2), …`; 2·sites parameters per layer.
pub fn vqe_ansatz(sites: usize, layers: usize) -> ParamCircuit {
    let mut gates = Vec::new();
    let per_layer = 2 * sites;
    for layer in 0..layers {
        let base = layer * per_layer;
        for q in 0..sites {
            gates.push(ParamGate::bound(Gate::Ry(q, 0.0), base + q, 1.0));
        }
        for q in 0..sites {
            gates.push(ParamGate::bound(Gate::Rz(q, 0.0), base + sites + q, 1.0));
        }
        for q in 0..sites - 1 {
            gates.push(ParamGate::fixed(Gate::Cnot(q, q + 1)));
        }
    }
    ParamCircuit::new(sites, (1 << sites) - 1, gates, layers * per_layer)
        .expect("all slots bound")
}

/// Per-epoch observables of a variational run.
#[derive(Debug, Clone, Default)]
pub struct TrainTrace {
    pub energy: Vec<f64>,
    /// Bipartite entanglement entropy at the requested cut, when tracked.
    pub entropy: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct VqeOptions {
    pub epochs: usize,
    pub rule: Rule,
    /// Record `S_vN` at this cut every epoch when set.
    pub entropy_cut: Option<usize>,
}

impl Default for VqeOptions {
    fn default() -> Self {
        VqeOptions {
            epochs: 500,
            rule: Rule::adam(0.05),
            entropy_cut: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VqeOutcome {
    /// Best-seen parameters.
    pub theta: Vec<f64>,
    pub best_energy: f64,
    pub trace: TrainTrace,
}

/// Minimises `⟨ψ(θ)|H|ψ(θ)⟩` from a uniform random start, differentiating
/// through the simulator. Returns the best parameters seen.
pub fn train_vqe(
    circuit: &ParamCircuit,
    h: &PauliHamiltonian,
    opts: &VqeOptions,
    rng: &mut Rng,
) -> VResult<VqeOutcome> {
    let tape = EnergyTape::build(circuit, h)?;
    let mut theta = circuit.random_theta(rng);
    let mut opt = Optimizer::new(opts.rule, theta.len());
    let mut grad = vec![0.0; theta.len()];
    let mut trace = TrainTrace::default();
    let mut best = (f64::INFINITY, theta.clone());
    for _ in 0..opts.epochs {
        let energy = tape.value_and_grad(&theta, &mut grad)?;
        if energy < best.0 {
            best = (energy, theta.clone());
        }
        trace.energy.push(energy);
        if let Some(cut) = opts.entropy_cut {
            let state = circuit.state(&theta)?;
            trace
                .entropy
                .push(crate::quantum::entanglement_entropy(&state, cut));
        }
        opt.step(&mut theta, &grad)?;
    }
    // the final θ may beat everything recorded so far
    let final_energy = tape.value(&theta)?;
    if final_energy < best.0 {
        best = (final_energy, theta);
    }
    Ok(VqeOutcome {
        theta: best.1,
        best_energy: best.0,
        trace,
    })
}

/// Undirected non-negative edge weights, zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxCutGraph {
    nodes: usize,
    weights: Vec<f64>,
}

impl MaxCutGraph {
    pub fn new(nodes: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut weights = vec![0.0; nodes * nodes];
        for &(i, j, w) in edges {
            assert!(i != j && i < nodes && j < nodes, "bad edge ({i}, {j})");
            assert!(w >= 0.0, "weights are non-negative");
            weights[i * nodes + j] = w;
            weights[j * nodes + i] = w;
        }
        MaxCutGraph { nodes, weights }
    }

    /// Erdős–Rényi-style graph: each edge present with probability
    /// `edge_prob`, weight uniform in (0.1, 1.0). Isolated graphs are
    /// avoided by wiring a path over any empty result.
    pub fn random(nodes: usize, edge_prob: f64, rng: &mut Rng) -> Self {
        let mut edges = Vec::new();
        for i in 0..nodes {
            for j in i + 1..nodes {
                if rng.random::<f64>() < edge_prob {
                    edges.push((i, j, rng.random_range(0.1..1.0)));
                }
            }
        }
        if edges.is_empty() {
            for i in 0..nodes - 1 {
                edges.push((i, i + 1, rng.random_range(0.1..1.0)));
            }
        }
        Self::new(nodes, &edges)
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.nodes + j]
    }

    /// Edges `(i, j, w)` with `i < j` and `w > 0`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.nodes {
            for j in i + 1..self.nodes {
                let w = self.weight(i, j);
                if w > 0.0 {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    /// Cut value `Σ_{i<j} W_ij (1 − z_i z_j)/2` of the assignment encoded
    /// in `bits` (bit k set ⇔ node k in the −1 part).
    pub fn cut_value(&self, bits: usize) -> f64 {
        let z = |k: usize| if bits >> k & 1 == 0 { 1.0 } else { -1.0 };
        self.edges()
            .iter()
            .map(|&(i, j, w)| w * (1.0 - z(i) * z(j)) / 2.0)
            .sum()
    }

    /// Exhaustive maximum over all `2^n` assignments; ties resolve to the
    /// lexicographically smallest bitstring (site 0 first).
    pub fn max_cut_brute_force(&self) -> (usize, f64) {
        let mut best = (0usize, f64::NEG_INFINITY);
        for bits in 0..1usize << self.nodes {
            let value = self.cut_value(bits);
            if value > best.1 + 1e-12 {
                best = (bits, value);
            } else if (value - best.1).abs() <= 1e-12
                && lex_key(bits, self.nodes) < lex_key(best.0, self.nodes)
            {
                best = (bits, value);
            }
        }
        best
    }
}

fn lex_key(bits: usize, sites: usize) -> Vec<u8> {
    (0..sites).map(|k| (bits >> k & 1) as u8).collect()
}

/// Cost Hamiltonian `Σ_{i<j} W_ij Z_i Z_j` and the depth-`p` alternating
/// ansatz: a Hadamard wall, then per layer `exp(−iγ_k H_C)` compiled as
/// `Rzz(2 γ_k W_ij)` per edge and the mixer `Rx(2 β_k)` per site.
/// Parameters are laid out `(γ₁, β₁, γ₂, β₂, …)`.
pub fn build_qaoa(graph: &MaxCutGraph, p: usize) -> (PauliHamiltonian, ParamCircuit) {
    assert!(p >= 1);
    let sites = graph.nodes();
    let terms: Vec<PauliString> = graph
        .edges()
        .iter()
        .map(|&(i, j, w)| PauliString::pair(sites, i, j, Pauli::Z, w))
        .collect();
    let cost = PauliHamiltonian::new(sites, terms).expect("lengths match");

    let mut gates: Vec<ParamGate> = (0..sites).map(|q| ParamGate::fixed(Gate::H(q))).collect();
    for layer in 0..p {
        let gamma_slot = 2 * layer;
        let beta_slot = 2 * layer + 1;
        for (i, j, w) in graph.edges() {
            gates.push(ParamGate::bound(Gate::Rzz(i, j, 0.0), gamma_slot, 2.0 * w));
        }
        for q in 0..sites {
            gates.push(ParamGate::bound(Gate::Rx(q, 0.0), beta_slot, 2.0));
        }
    }
    let circuit = ParamCircuit::new(sites, 0, gates, 2 * p).expect("all slots bound");
    (cost, circuit)
}

#[derive(Debug, Clone)]
pub struct MaxCutOptions {
    pub layers: usize,
    pub restarts: usize,
    pub epochs: usize,
    pub rule: Rule,
    /// Readout shots per restart.
    pub shots: usize,
}

impl Default for MaxCutOptions {
    fn default() -> Self {
        MaxCutOptions {
            layers: 2,
            restarts: 5,
            epochs: 200,
            rule: Rule::adam(0.05),
            shots: 2048,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MaxCutOutcome {
    /// Peak of the aggregated readout histogram.
    pub bits: usize,
    /// The same assignment as one bit per site, site 0 first.
    pub bitstring: Vec<u8>,
    pub cut_value: f64,
    /// Aggregated sample counts over all restarts, indexed by bitstring.
    pub histogram: Vec<u64>,
    /// Final cost expectation per restart.
    pub restart_energies: Vec<f64>,
}

/// Trains the QAOA ansatz `restarts` times, samples every trained state,
/// and returns the histogram peak (ties to the lexicographically smallest
/// bitstring).
pub fn solve_maxcut(
    graph: &MaxCutGraph,
    opts: &MaxCutOptions,
    rng: &mut Rng,
) -> VResult<MaxCutOutcome> {
    let (cost, circuit) = build_qaoa(graph, opts.layers);
    let tape = EnergyTape::build(&circuit, &cost)?;
    let mut histogram = vec![0u64; 1 << graph.nodes()];
    let mut restart_energies = Vec::with_capacity(opts.restarts);
    for _ in 0..opts.restarts {
        let mut theta = circuit.random_theta(rng);
        let mut opt = Optimizer::new(opts.rule, theta.len());
        let mut grad = vec![0.0; theta.len()];
        for _ in 0..opts.epochs {
            tape.value_and_grad(&theta, &mut grad)?;
            opt.step(&mut theta, &grad)?;
        }
        restart_energies.push(tape.value(&theta)?);
        let state = circuit.state(&theta)?;
        let counts = crate::quantum::sample_bitstrings(&state, opts.shots, rng);
        for (bits, c) in counts.iter().enumerate() {
            histogram[bits] += c;
        }
    }
    let mut peak = 0usize;
    for bits in 1..histogram.len() {
        if histogram[bits] > histogram[peak]
            || (histogram[bits] == histogram[peak]
                && lex_key(bits, graph.nodes()) < lex_key(peak, graph.nodes()))
        {
            peak = bits;
        }
    }
    Ok(MaxCutOutcome {
        bits: peak,
        bitstring: lex_key(peak, graph.nodes()),
        cut_value: graph.cut_value(peak),
        histogram,
        restart_energies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::exact_diagonalize;

    #[test]
    fn xxz_two_sites_has_three_terms() {
        let h = build_xxz(2, 0.7);
        assert_eq!(h.terms().len(), 3);
        let coeffs: Vec<f64> = h.terms().iter().map(|t| t.coeff).collect();
        assert_eq!(coeffs, vec![-0.25, -0.25, -0.25 * 0.7]);
        assert_eq!(h.terms()[0].ops, vec![Pauli::X, Pauli::X]);
        assert_eq!(h.terms()[1].ops, vec![Pauli::Y, Pauli::Y]);
        assert_eq!(h.terms()[2].ops, vec![Pauli::Z, Pauli::Z]);
    }

    // Independent dense oracle via explicit Kronecker products.
    fn dense_ground_energy(h: &PauliHamiltonian) -> f64 {
        use nalgebra::DMatrix;
        use num_complex::Complex64;
        let one = Complex64::ONE;
        let i = Complex64::I;
        let z = Complex64::ZERO;
        let mat = |p: &Pauli| -> DMatrix<Complex64> {
            let e = match p {
                Pauli::I => [one, z, z, one],
                Pauli::X => [z, one, one, z],
                Pauli::Y => [z, -i, i, z],
                Pauli::Z => [one, z, z, -one],
            };
            DMatrix::from_row_slice(2, 2, &e)
        };
        let dim = 1usize << h.sites();
        let mut total = DMatrix::from_element(dim, dim, z);
        for term in h.terms() {
            let mut acc = DMatrix::from_element(1, 1, one);
            for p in &term.ops {
                acc = mat(p).kronecker(&acc);
            }
            total += acc * Complex64::new(term.coeff, 0.0);
        }
        total
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn xxz_ground_energy_matches_independent_dense_build() {
        let h = build_xxz(4, 0.0);
        let (evals, _) = exact_diagonalize(&h).unwrap();
        let want = dense_ground_energy(&h);
        assert!((evals[0] - want).abs() <= 1e-10, "{} vs {want}", evals[0]);
    }

    #[test]
    fn xxz_delta_two_ground_state_is_a_product_state() {
        let h = build_xxz(4, 2.0);
        let (evals, ground) = exact_diagonalize(&h).unwrap();
        assert!((evals[0] - (-1.5)).abs() <= 1e-10);
        let s = crate::quantum::entanglement_entropy(&ground, 2);
        assert!(s <= 1e-6, "S_vN = {s}");
    }

    #[test]
    fn ansatz_has_24_parameters_and_33_gates() {
        let c = vqe_ansatz(4, 3);
        assert_eq!(c.n_params(), 24);
        assert_eq!(c.gate_count(), 33);
    }

    #[test]
    fn ansatz_at_zero_angles_maps_ones_to_a_basis_state() {
        // Ry(0) = Rz(0) = identity (up to phase); the CNOT cascade then
        // maps |1111⟩ through |1010⟩ and |1100⟩ to |1000⟩ — a basis state,
        // not |1111⟩ itself.
        let c = vqe_ansatz(4, 3);
        let state = c.state(&vec![0.0; 24]).unwrap();
        let amps = state.amplitudes();
        assert!((amps[0b0001].norm() - 1.0).abs() <= 1e-12);
        for (i, a) in amps.iter().enumerate() {
            if i != 0b0001 {
                assert!(a.norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn zero_theta_energy_is_zero_for_xy_hamiltonian() {
        let c = vqe_ansatz(4, 3);
        let h = build_xxz(4, 0.0);
        let e = vqe_energy(&c, &vec![0.0; 24], &h).unwrap();
        assert!(e.abs() <= 1e-12);
    }

    #[test]
    fn random_energies_respect_the_variational_bound() {
        let mut rng = crate::rng::seeded(150);
        let c = vqe_ansatz(4, 3);
        for delta in [-2.0, -1.0, 0.0, 2.0] {
            let h = build_xxz(4, delta);
            let (evals, _) = exact_diagonalize(&h).unwrap();
            for _ in 0..250 {
                let theta = c.random_theta(&mut rng);
                let e = vqe_energy(&c, &theta, &h).unwrap();
                assert!(e >= evals[0] - 1e-9, "Δ={delta}: {e} < {}", evals[0]);
            }
        }
    }

    #[test]
    fn energy_tape_matches_plain_simulator() {
        let mut rng = crate::rng::seeded(151);
        let c = vqe_ansatz(4, 3);
        let h = build_xxz(4, -1.0);
        let tape = EnergyTape::build(&c, &h).unwrap();
        for _ in 0..10 {
            let theta = c.random_theta(&mut rng);
            let a = tape.value(&theta).unwrap();
            let b = vqe_energy(&c, &theta, &h).unwrap();
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn parameter_shift_on_cosine_curve() {
        // ⟨Z⟩ after Ry(θ)|0⟩ is cos θ
        let circuit = ParamCircuit::new(
            1,
            0,
            vec![ParamGate::bound(Gate::Ry(0, 0.0), 0, 1.0)],
            1,
        )
        .unwrap();
        let h = PauliHamiltonian::new(1, vec![PauliString::single(1, 0, Pauli::Z, 1.0)]).unwrap();
        let g = circuit
            .param_shift_grad(&[std::f64::consts::FRAC_PI_2], &h, 0)
            .unwrap();
        assert!((g - (-1.0)).abs() <= 1e-12);
        let g0 = circuit.param_shift_grad(&[0.0], &h, 0).unwrap();
        assert!(g0.abs() <= 1e-12);
    }

    #[test]
    fn parameter_shift_matches_tape_gradient_on_both_ansaetze() {
        let mut rng = crate::rng::seeded(152);
        // VQE ansatz
        let c = vqe_ansatz(4, 3);
        let h = build_xxz(4, -1.0);
        let tape = EnergyTape::build(&c, &h).unwrap();
        let theta = c.random_theta(&mut rng);
        let mut grad = vec![0.0; theta.len()];
        tape.value_and_grad(&theta, &mut grad).unwrap();
        for slot in 0..theta.len() {
            let shift = c.param_shift_grad(&theta, &h, slot).unwrap();
            assert!(
                (shift - grad[slot]).abs() <= 1e-8,
                "slot {slot}: shift {shift} vs tape {}",
                grad[slot]
            );
        }
        // QAOA ansatz on a weighted 4-node graph
        let graph = MaxCutGraph::random(4, 0.9, &mut rng);
        let (cost, qc) = build_qaoa(&graph, 2);
        let qtape = EnergyTape::build(&qc, &cost).unwrap();
        let qtheta = qc.random_theta(&mut rng);
        let mut qgrad = vec![0.0; qtheta.len()];
        qtape.value_and_grad(&qtheta, &mut qgrad).unwrap();
        for slot in 0..qtheta.len() {
            let shift = qc.param_shift_grad(&qtheta, &cost, slot).unwrap();
            assert!(
                (shift - qgrad[slot]).abs() <= 1e-8,
                "slot {slot}: shift {shift} vs tape {}",
                qgrad[slot]
            );
        }
    }

    #[test]
    fn shift_of_unbound_slot_errors() {
        let c = vqe_ansatz(2, 1);
        let h = build_xxz(2, 0.0);
        assert!(matches!(
            c.param_shift_grad(&vec![0.0; 4], &h, 7),
            Err(VariationalError::ThetaLength { .. }) | Err(VariationalError::NotARotationSlot(7))
        ));
    }

    #[test]
    fn train_vqe_approaches_the_ground_state() {
        let mut rng = crate::rng::seeded(153);
        let h = build_xxz(4, -1.0);
        let (evals, _) = exact_diagonalize(&h).unwrap();
        let c = vqe_ansatz(4, 3);
        let opts = VqeOptions {
            epochs: 300,
            ..VqeOptions::default()
        };
        let out = train_vqe(&c, &h, &opts, &mut rng).unwrap();
        assert!(
            out.best_energy - evals[0] <= 2e-2,
            "E = {}, E_gs = {}",
            out.best_energy,
            evals[0]
        );
        assert_eq!(out.trace.energy.len(), 300);
    }

    #[test]
    fn train_vqe_is_seed_deterministic() {
        let h = build_xxz(3, 0.5);
        let c = vqe_ansatz(3, 2);
        let opts = VqeOptions {
            epochs: 40,
            ..VqeOptions::default()
        };
        let a = train_vqe(&c, &h, &opts, &mut crate::rng::seeded(154)).unwrap();
        let b = train_vqe(&c, &h, &opts, &mut crate::rng::seeded(154)).unwrap();
        assert_eq!(a.trace.energy, b.trace.energy);
        assert_eq!(a.theta, b.theta);
    }

    #[test]
    fn qaoa_triangle_encoding() {
        let graph = MaxCutGraph::new(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]);
        let (cost, circuit) = build_qaoa(&graph, 2);
        assert_eq!(cost.terms().len(), 3);
        assert!(cost.terms().iter().all(|t| t.coeff == 1.0));
        assert_eq!(circuit.n_params(), 4);
        // γ = β = 0 leaves the Hadamard wall: uniform superposition
        let state = circuit.state(&[0.0; 4]).unwrap();
        for a in state.amplitudes() {
            assert!((a.re - 1.0 / 8.0f64.sqrt()).abs() <= 1e-12 && a.im.abs() <= 1e-12);
        }
    }

    #[test]
    fn cut_values_are_flip_invariant() {
        let mut rng = crate::rng::seeded(155);
        for _ in 0..10 {
            let graph = MaxCutGraph::random(5, 0.6, &mut rng);
            let all = (1usize << 5) - 1;
            for bits in 0..=all {
                let flipped = !bits & all;
                assert!((graph.cut_value(bits) - graph.cut_value(flipped)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn brute_force_on_path_and_triangle() {
        let path = MaxCutGraph::new(3, &[(0, 1, 1.0), (1, 2, 1.0)]);
        let (bits, value) = path.max_cut_brute_force();
        assert_eq!(value, 2.0);
        // middle node alone on one side
        assert!(bits == 0b010 || bits == 0b101);

        let triangle = MaxCutGraph::new(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]);
        assert_eq!(triangle.max_cut_brute_force().1, 2.0);
    }

    #[test]
    fn qaoa_solves_the_triangle_and_the_path() {
        let mut rng = crate::rng::seeded(156);
        let opts = MaxCutOptions {
            restarts: 3,
            epochs: 120,
            ..MaxCutOptions::default()
        };
        let triangle = MaxCutGraph::new(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]);
        let out = solve_maxcut(&triangle, &opts, &mut rng).unwrap();
        assert_eq!(out.cut_value, 2.0, "histogram peak {:?}", out.bitstring);

        let path = MaxCutGraph::new(3, &[(0, 1, 1.0), (1, 2, 1.0)]);
        let out = solve_maxcut(&path, &opts, &mut rng).unwrap();
        assert_eq!(out.cut_value, 2.0);
    }
}
