//! 2D classical Ising model: Metropolis sampling, observables, Onsager
//! references and the confidence-based critical-temperature estimator.
//!
//! Conventions (J = 1, k_B = 1, h = 0): periodic boundaries, each bond
//! counted once, energy per spin `−(1/L²) Σ_bonds s_i s_j`, so the
//! ferromagnetic ground state sits at −2. A sweep attempts one flip per
//! site with `ΔE = 2 s (four-neighbour sum)`, visiting the sites in a
//! freshly shuffled order each sweep: with the flip-on-`ΔE ≤ 0` rule a
//! fixed raster order is periodic on small lattices (the 2×2 system lands
//! in a two-state limit cycle), while a random visiting order keeps the
//! chain ergodic with the same Boltzmann stationary law.

use crate::nn::Network;
use crate::rng::{child_rng, Rng};
use crate::tensor::Tensor;
use rand::{seq::SliceRandom, Rng as _};
use rayon::prelude::*;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IsingError {
    #[error("need at least 3 temperature points, got {0}")]
    TooFewTemperatures(usize),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
}

/// L×L lattice of ±1 spins with periodic boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinLattice {
    l: usize,
    spins: Vec<i8>,
}

impl SpinLattice {
    pub fn all_up(l: usize) -> Self {
        SpinLattice {
            l,
            spins: vec![1; l * l],
        }
    }

    pub fn random(l: usize, rng: &mut Rng) -> Self {
        let spins = (0..l * l)
            .map(|_| if rng.random::<bool>() { 1 } else { -1 })
            .collect();
        SpinLattice { l, spins }
    }

    pub fn size(&self) -> usize {
        self.l
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn spin(&self, row: usize, col: usize) -> i8 {
        self.spins[row * self.l + col]
    }

    /// One Monte Carlo sweep at temperature `t`: every site is offered a
    /// flip exactly once, in shuffled order. Returns the total energy
    /// change of the accepted flips (an exact integer in units of J).
    pub fn sweep(&mut self, t: f64, rng: &mut Rng) -> i64 {
        assert!(t > 0.0, "temperature must be positive");
        let l = self.l;
        // ΔE > 0 takes only the values 4 and 8
        let acc4 = (-4.0 / t).exp();
        let acc8 = (-8.0 / t).exp();
        let mut order: Vec<u32> = (0..(l * l) as u32).collect();
        order.shuffle(rng);
        let mut total = 0i64;
        for site in order {
            let site = site as usize;
            let (row, col) = (site / l, site % l);
            let up = if row == 0 { l - 1 } else { row - 1 } * l;
            let down = if row == l - 1 { 0 } else { row + 1 } * l;
            let base = row * l;
            let left = if col == 0 { l - 1 } else { col - 1 };
            let right = if col == l - 1 { 0 } else { col + 1 };
            let nb = self.spins[up + col]
                + self.spins[down + col]
                + self.spins[base + left]
                + self.spins[base + right];
            let de = 2 * i64::from(self.spins[site]) * i64::from(nb);
            let accept = de <= 0 || rng.random::<f64>() < if de == 4 { acc4 } else { acc8 };
            if accept {
                self.spins[site] = -self.spins[site];
                total += de;
            }
        }
        total
    }

    /// `|Σ s| / L²` in `[0, 1]`.
    pub fn magnetization(&self) -> f64 {
        let sum: i64 = self.spins.iter().map(|&s| i64::from(s)).sum();
        sum.unsigned_abs() as f64 / (self.l * self.l) as f64
    }

    /// Total energy `−Σ_bonds s_i s_j`, each periodic bond counted once
    /// (right and down neighbour per site).
    pub fn total_energy(&self) -> i64 {
        let l = self.l;
        let mut acc = 0i64;
        for row in 0..l {
            let down = if row == l - 1 { 0 } else { row + 1 } * l;
            let base = row * l;
            for col in 0..l {
                let right = if col == l - 1 { 0 } else { col + 1 };
                let s = i64::from(self.spins[base + col]);
                acc += s * i64::from(self.spins[base + right]);
                acc += s * i64::from(self.spins[down + col]);
            }
        }
        -acc
    }

    pub fn energy_per_spin(&self) -> f64 {
        self.total_energy() as f64 / (self.l * self.l) as f64
    }

    /// Spins as a `[1 × L × L]` tensor of ±1 reals (classifier input).
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            [1, self.l, self.l],
            self.spins.iter().map(|&s| f64::from(s)).collect(),
        )
        .expect("square lattice")
    }
}

/// `T_c = 2 / ln(1 + √2)`.
pub fn critical_temperature() -> f64 {
    2.0 / (1.0 + std::f64::consts::SQRT_2).ln()
}

/// Complete elliptic integral of the first kind,
/// `K(k) = ∫₀^{π/2} dφ / √(1 − k² sin²φ)`, by arithmetic-geometric-mean
/// iteration.
pub fn complete_elliptic_k(k: f64) -> f64 {
    assert!(k.abs() < 1.0, "K(k) diverges at |k| = 1");
    let mut a = 1.0f64;
    let mut b = (1.0 - k * k).sqrt();
    while (a - b).abs() > 1e-15 {
        let next_a = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = next_a;
    }
    std::f64::consts::FRAC_PI_2 / a
}

/// Thermodynamic-limit reference values at temperature `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnsagerPoint {
    pub magnetization: f64,
    pub energy: f64,
    pub t_c: f64,
}

/// Onsager's exact magnetization and energy per spin.
pub fn onsager_reference(t: f64) -> OnsagerPoint {
    assert!(t > 0.0);
    let t_c = critical_temperature();
    let magnetization = if t < t_c {
        (1.0 - (2.0 / t).sinh().powi(-4)).powf(0.125)
    } else {
        0.0
    };
    let energy = {
        let x = 2.0 / t;
        let k = 2.0 * x.sinh() / x.cosh().powi(2);
        // k touches 1 exactly at T_c where K diverges logarithmically
        let kk = complete_elliptic_k(k.min(1.0 - 1e-15));
        let th = x.tanh();
        -(1.0 / th) * (1.0 + (2.0 / std::f64::consts::PI) * ((2.0 * th * th - 1.0) / th) * kk)
    };
    OnsagerPoint {
        magnetization,
        energy,
        t_c,
    }
}

/// Phase tag attached to a sampled configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseLabel {
    Ordered,
    Disordered,
    Unlabeled,
}

impl PhaseLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PhaseLabel::Ordered => "ordered",
            PhaseLabel::Disordered => "disordered",
            PhaseLabel::Unlabeled => "unlabeled",
        }
    }
}

/// One equilibrated snapshot.
#[derive(Debug, Clone)]
pub struct IsingSample {
    pub lattice: SpinLattice,
    pub temperature: f64,
    pub label: PhaseLabel,
}

/// Sampling protocol for [`generate_dataset`].
#[derive(Debug, Clone)]
pub struct DatasetSpec {
    pub lattice_size: usize,
    pub temperatures: Vec<f64>,
    pub samples_per_t: usize,
    pub equilibration_sweeps: usize,
    pub decorrelation_sweeps: usize,
    /// Configurations with `T < t_min` are labelled ordered.
    pub t_min: f64,
    /// Configurations with `T > t_max` are labelled disordered.
    pub t_max: f64,
}

impl DatasetSpec {
    pub fn new(lattice_size: usize, temperatures: Vec<f64>, samples_per_t: usize) -> Self {
        DatasetSpec {
            lattice_size,
            temperatures,
            samples_per_t,
            equilibration_sweeps: 1000,
            decorrelation_sweeps: 10,
            t_min: 1.5,
            t_max: 3.0,
        }
    }
}

/// Equilibrated, decorrelated snapshots for every grid temperature.
///
/// Each temperature owns an independent Markov chain with its own RNG
/// stream, so chains run in parallel without affecting results. Chains
/// deep in the ordered phase (`T < t_min`) start from the aligned lattice
/// rather than a random quench, which below T_c can freeze into striped
/// domain-wall states that never melt within the protocol.
pub fn generate_dataset(spec: &DatasetSpec, rng: &mut Rng) -> Vec<IsingSample> {
    let chain_seeds: Vec<u64> = spec.temperatures.iter().map(|_| rng.random()).collect();
    spec.temperatures
        .par_iter()
        .zip(chain_seeds)
        .flat_map(|(&t, seed)| {
            let mut chain_rng = child_rng(seed, 0);
            let mut lattice = if t < spec.t_min {
                SpinLattice::all_up(spec.lattice_size)
            } else {
                SpinLattice::random(spec.lattice_size, &mut chain_rng)
            };
            for _ in 0..spec.equilibration_sweeps {
                lattice.sweep(t, &mut chain_rng);
            }
            let label = if t < spec.t_min {
                PhaseLabel::Ordered
            } else if t > spec.t_max {
                PhaseLabel::Disordered
            } else {
                PhaseLabel::Unlabeled
            };
            let mut out = Vec::with_capacity(spec.samples_per_t);
            for _ in 0..spec.samples_per_t {
                for _ in 0..spec.decorrelation_sweeps {
                    lattice.sweep(t, &mut chain_rng);
                }
                out.push(IsingSample {
                    lattice: lattice.clone(),
                    temperature: t,
                    label,
                });
            }
            out
        })
        .collect()
}

/// Writes snapshots as CSV: `temperature,label,s0,…,s(L²−1)` with spins in
/// row-major order.
pub fn export_snapshots_csv<W: Write>(samples: &[IsingSample], out: &mut W) -> std::io::Result<()> {
    for s in samples {
        write!(out, "{:.17e},{}", s.temperature, s.label.as_str())?;
        for &v in s.lattice.spins() {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Mean classifier confidence at one grid temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidencePoint {
    pub temperature: f64,
    pub mean_confidence: f64,
}

/// Mean max-class softmax probability per temperature.
pub fn confidence_curve(
    classifier: &Network,
    samples: &[IsingSample],
) -> Result<Vec<ConfidencePoint>, IsingError> {
    let mut by_t: Vec<(f64, Vec<&IsingSample>)> = Vec::new();
    for s in samples {
        match by_t.iter_mut().find(|(t, _)| *t == s.temperature) {
            Some((_, group)) => group.push(s),
            None => by_t.push((s.temperature, vec![s])),
        }
    }
    by_t.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut curve = Vec::with_capacity(by_t.len());
    for (t, group) in by_t {
        let results: Vec<f64> = group
            .par_iter()
            .map(|s| {
                let probs = classifier
                    .forward(&s.lattice.to_tensor())
                    .expect("classifier accepts lattice input");
                probs.data().iter().cloned().fold(f64::MIN, f64::max)
            })
            .collect();
        let mean = results.iter().sum::<f64>() / results.len() as f64;
        curve.push(ConfidencePoint {
            temperature: t,
            mean_confidence: mean,
        });
    }
    Ok(curve)
}

/// Critical-temperature estimate from a confidence curve.
#[derive(Debug, Clone, PartialEq)]
pub struct TcEstimate {
    pub t_c: f64,
    /// Set when the minimum sits on an endpoint of the grid, i.e. the
    /// curve shows no interior dip.
    pub endpoint_warning: bool,
}

/// Grid temperature with the lowest mean confidence; ties break toward
/// lower temperature. The input order of the curve does not matter.
pub fn estimate_tc(curve: &[ConfidencePoint]) -> Result<TcEstimate, IsingError> {
    if curve.len() < 3 {
        return Err(IsingError::TooFewTemperatures(curve.len()));
    }
    let mut sorted = curve.to_vec();
    sorted.sort_by(|a, b| a.temperature.total_cmp(&b.temperature));
    let mut best = 0;
    for (i, p) in sorted.iter().enumerate() {
        if p.mean_confidence < sorted[best].mean_confidence {
            best = i;
        }
    }
    Ok(TcEstimate {
        t_c: sorted[best].temperature,
        endpoint_warning: best == 0 || best == sorted.len() - 1,
    })
}

pub mod tc_experiment {
    //! End-to-end critical-temperature estimation: sample configurations,
    //! train the phase classifier on the labelled wings, locate the
    //! confidence minimum across the full grid.

    use super::*;
    use crate::nn::{
        fit, Activation, Conv2DLayer, DenseLayer, FitConfig, InitScheme, Layer, LossSpec, Network,
    };
    use crate::optim::Rule;
    use crate::tensor::Tensor;

    #[derive(Debug, Clone)]
    pub struct TcConfig {
        pub lattice_size: usize,
        /// Evaluation grid; the labelled wings used for training are the
        /// points outside `[t_min, t_max]`.
        pub temperatures: Vec<f64>,
        pub samples_per_t: usize,
        pub equilibration_sweeps: usize,
        pub decorrelation_sweeps: usize,
        pub t_min: f64,
        pub t_max: f64,
        pub epochs: usize,
        pub batch: usize,
        pub learning_rate: f64,
    }

    impl Default for TcConfig {
        fn default() -> Self {
            TcConfig {
                lattice_size: 30,
                temperatures: default_grid(),
                samples_per_t: 60,
                equilibration_sweeps: 1000,
                decorrelation_sweeps: 10,
                t_min: 1.5,
                t_max: 3.0,
                epochs: 8,
                batch: 16,
                learning_rate: 1e-3,
            }
        }
    }

    /// 1.0 to 3.5 in steps of 0.1.
    pub fn default_grid() -> Vec<f64> {
        (0..=25).map(|k| 1.0 + 0.1 * k as f64).collect()
    }

    /// One conv block (8 kernels 3×3, relu), 2×2 max-pool, dense-64 relu,
    /// softmax pair head.
    pub fn phase_classifier(lattice_size: usize, rng: &mut Rng) -> Network {
        let pooled = (lattice_size - 2) / 2;
        Network::new([1, lattice_size, lattice_size])
            .push(Layer::Conv2D(
                Conv2DLayer::new(
                    crate::nn::init_weights([8, 1, 3, 3], InitScheme::He, rng),
                    Tensor::zeros([8]),
                    1,
                    0,
                    Activation::Relu,
                )
                .expect("square kernels"),
            ))
            .push(Layer::MaxPool {
                window: 2,
                stride: 2,
            })
            .push(Layer::Dense(DenseLayer::init(
                8 * pooled * pooled,
                64,
                Activation::Relu,
                InitScheme::He,
                rng,
            )))
            .push(Layer::Dense(DenseLayer::init(
                64,
                2,
                Activation::Softmax,
                InitScheme::Xavier,
                rng,
            )))
    }

    #[derive(Debug, Clone)]
    pub struct TcResult {
        pub estimate: TcEstimate,
        pub curve: Vec<ConfidencePoint>,
        pub train_loss: Vec<f64>,
    }

    pub fn run(cfg: &TcConfig, rng: &mut Rng) -> Result<TcResult, IsingError> {
        let spec = DatasetSpec {
            lattice_size: cfg.lattice_size,
            temperatures: cfg.temperatures.clone(),
            samples_per_t: cfg.samples_per_t,
            equilibration_sweeps: cfg.equilibration_sweeps,
            decorrelation_sweeps: cfg.decorrelation_sweeps,
            t_min: cfg.t_min,
            t_max: cfg.t_max,
        };
        let samples = generate_dataset(&spec, rng);

        let labelled: Vec<&IsingSample> = samples
            .iter()
            .filter(|s| s.label != PhaseLabel::Unlabeled)
            .collect();
        let d = cfg.lattice_size * cfg.lattice_size;
        let mut features = Tensor::zeros([labelled.len(), d]);
        let mut targets = Tensor::zeros([labelled.len(), 2]);
        for (i, s) in labelled.iter().enumerate() {
            for (j, &v) in s.lattice.spins().iter().enumerate() {
                features.set2(i, j, f64::from(v));
            }
            let class = usize::from(s.label == PhaseLabel::Disordered);
            targets.set2(i, class, 1.0);
        }

        let mut net = phase_classifier(cfg.lattice_size, rng);
        let fit_cfg = FitConfig::new(
            cfg.epochs,
            cfg.batch,
            Rule::adam(cfg.learning_rate),
            LossSpec::cross_entropy(),
        );
        let log = fit(&mut net, &features, &targets, &fit_cfg, rng)?;

        let curve = confidence_curve(&net, &samples)?;
        let estimate = estimate_tc(&curve)?;
        Ok(TcResult {
            estimate,
            curve,
            train_loss: log.epoch_loss,
        })
    }
}
