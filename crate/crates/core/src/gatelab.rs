//! Closed-form segment propagators, target gates, fidelity metrics and the
//! parameter sweeps built on top of the master-equation solver.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    self, idx, DensityMatrix, DynamicsError, LindbladContext, ModelVariant, SystemParams, Tolerances, COMPUTATIONAL,
    DIM, EXC, G0, G1, QUTRIT,
};
use crate::linalg::{kron, ComplexMatrix, StateVector, C64, I, ONE, ZERO};
use crate::pulsegen::{
    build_schedule_with_clock, max_field_amplitude, EnvelopeClock, GateSpec, PchCoefficients, PulseError, Segment,
    SegmentSchedule, MIN_AMPLITUDE_SAMPLES,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GateError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Pulse(#[from] PulseError),
    #[error("empty sweep grid")]
    EmptyGrid,
    #[error("invalid input state: {0}")]
    InvalidInput(String),
    #[error("{0}")]
    InvalidArgument(String),
    #[error("at {point}: {source}")]
    AtPoint {
        point: String,
        #[source]
        source: Box<GateError>,
    },
}

impl GateError {
    fn at(self, point: impl Into<String>) -> Self {
        Self::AtPoint {
            point: point.into(),
            source: Box::new(self),
        }
    }
}

/// Target-qubit change of basis (|0⟩, |1⟩, |e⟩) → (|b⟩, |d⟩, |e⟩).
#[derive(Debug, Clone, PartialEq)]
pub struct BrightDarkTransform {
    pub theta: f64,
    pub phi: f64,
    /// Columns are |b⟩, |d⟩, |e⟩ in the level basis.
    pub matrix: ComplexMatrix,
}

impl BrightDarkTransform {
    pub fn new(theta: f64, phi: f64) -> Self {
        let (s, c) = (theta / 2.0).sin_cos();
        let mut m = ComplexMatrix::zeros(QUTRIT, QUTRIT);
        m[(G0, 0)] = C64::new(s, 0.0);
        m[(G1, 0)] = -C64::from_polar(c, phi);
        m[(G0, 1)] = C64::from_polar(c, -phi);
        m[(G1, 1)] = C64::new(s, 0.0);
        m[(EXC, 2)] = ONE;
        Self { theta, phi, matrix: m }
    }

    pub fn bright(&self) -> StateVector {
        self.column(0)
    }

    pub fn dark(&self) -> StateVector {
        self.column(1)
    }

    fn column(&self, j: usize) -> StateVector {
        StateVector::new((0..QUTRIT).map(|i| self.matrix[(i, j)]).collect())
    }
}

fn level(i: usize) -> StateVector {
    StateVector::basis(QUTRIT, i)
}

fn scaled(m: ComplexMatrix, z: C64) -> ComplexMatrix {
    m.scale(z)
}

fn ket_outer(a: &StateVector, b: &StateVector) -> ComplexMatrix {
    ComplexMatrix::outer(a, b)
}

/// Closed-form propagator of one unit-area (π/2) segment of the resonant,
/// blockade-eliminated model, in the computational two-qutrit basis.
///
/// The segment Hamiltonian is Ω_t(t)·H₀ with a time-independent H₀, so the
/// propagator depends only on the pulse area. Within the {b, d, e} target
/// basis it splits into:
/// * |1b⟩ ↔ |1e⟩, unit coupling e^{iφ_0t}: a full transfer;
/// * |0b⟩ ↔ |T⟩, coupling 2: a 2π rotation, i.e. −1 on that plane;
/// * |0d⟩ ↔ |ed⟩, coupling √3 e^{iφ_c}: a partial rotation by √3·π/2;
/// * everything else (|1d⟩, |ee⟩, and the partner of |T⟩): unchanged.
///
/// Here |T⟩ = (√3 e^{−iφ_c}|eb⟩ + e^{−iφ_0t}|0e⟩)/2 is the state that H₀ maps
/// |0b⟩ onto.
pub fn analytic_segment_propagator(segment: &Segment) -> ComplexMatrix {
    let bd = BrightDarkTransform::new(segment.theta, segment.relative_phase());
    let (b, d, e) = (bd.bright(), bd.dark(), level(EXC));
    let (zero, one) = (level(G0), level(G1));
    let phi_c = segment.phi_c;
    let phi_0 = segment.phi_0t;

    let k0b = zero.kron(&b);
    let k0d = zero.kron(&d);
    let k0e = zero.kron(&e);
    let k1b = one.kron(&b);
    let k1d = one.kron(&d);
    let k1e = one.kron(&e);
    let keb = e.kron(&b);
    let ked = e.kron(&d);
    let kee = e.kron(&e);

    let t_state = StateVector::new(
        keb.as_slice()
            .iter()
            .zip(k0e.as_slice())
            .map(|(x, y)| (x * C64::from_polar(3f64.sqrt(), -phi_c) + y * C64::from_polar(1.0, -phi_0)) * 0.5)
            .collect(),
    );
    // Partner of |T⟩ inside span{|eb⟩, |0e⟩}.
    let a_state = StateVector::new(
        keb.as_slice()
            .iter()
            .zip(k0e.as_slice())
            .map(|(x, y)| (x * C64::from_polar(1.0, -phi_c) - y * C64::from_polar(3f64.sqrt(), -phi_0)) * 0.5)
            .collect(),
    );

    let (s, c) = (3f64.sqrt() * PI / 2.0).sin_cos();
    let mut u = ComplexMatrix::zeros(DIM, DIM);
    let mut add = |m: ComplexMatrix| u = &u + &m;
    add(scaled(ket_outer(&k0b, &k0b), -ONE));
    add(scaled(ket_outer(&t_state, &t_state), -ONE));
    add(ket_outer(&a_state, &a_state));
    add(scaled(ket_outer(&k1b, &k1e), -I * C64::from_polar(1.0, phi_0)));
    add(scaled(ket_outer(&k1e, &k1b), -I * C64::from_polar(1.0, -phi_0)));
    add(scaled(
        &ket_outer(&k0d, &k0d) + &ket_outer(&ked, &ked),
        C64::new(c, 0.0),
    ));
    add(scaled(ket_outer(&k0d, &ked), -I * C64::from_polar(s, phi_c)));
    add(scaled(ket_outer(&ked, &k0d), -I * C64::from_polar(s, -phi_c)));
    add(ket_outer(&k1d, &k1d));
    add(ket_outer(&kee, &kee));
    u
}

/// Closed-form propagator for segment 1 or 2 of `gate` (no compensation).
pub fn analytic_gate_segment(gate: &GateSpec, segment_index: usize, tau: f64) -> Result<ComplexMatrix, GateError> {
    if !(1..=2).contains(&segment_index) {
        return Err(GateError::InvalidArgument(format!(
            "segment index must be 1 or 2, got {segment_index}"
        )));
    }
    let schedule = build_schedule_with_clock(gate, tau, false, EnvelopeClock::Pair);
    Ok(analytic_segment_propagator(&schedule.segments[segment_index - 1]))
}

/// Ideal controlled gate on the computational block, ordered |00⟩, |01⟩,
/// |10⟩, |11⟩: identity if the control is |0⟩, otherwise
/// e^{iγ/2}·exp(−i(γ/2)·n̂·σ) = e^{iγ}|b⟩⟨b| + |d⟩⟨d| on the target, which is
/// what the two-segment sequence produces.
pub fn target_unitary(gate: &GateSpec) -> ComplexMatrix {
    let (st, ct) = gate.theta.sin_cos();
    let (sp, cp) = gate.phi.sin_cos();
    let n = [st * cp, st * sp, ct];
    let half = gate.gamma / 2.0;
    let (sh, ch) = half.sin_cos();
    // exp(−i h n·σ) = cos h·I − i sin h·(n·σ)
    let ndots = [
        [C64::new(n[2], 0.0), C64::new(n[0], -n[1])],
        [C64::new(n[0], n[1]), C64::new(-n[2], 0.0)],
    ];
    let phase = C64::from_polar(1.0, half);
    let mut out = ComplexMatrix::identity(4);
    for i in 0..2 {
        for j in 0..2 {
            let id = if i == j { C64::new(ch, 0.0) } else { ZERO };
            out[(2 + i, 2 + j)] = phase * (id - I * sh * ndots[i][j]);
        }
    }
    out
}

/// 4×4 computational block of a 9×9 operator.
pub fn computational_block(m: &ComplexMatrix) -> ComplexMatrix {
    m.submatrix(&COMPUTATIONAL)
}

/// Embeds a 4-dimensional computational amplitude vector into the 9-dim space.
pub fn embed_computational(amps: &[C64; 4]) -> StateVector {
    let mut v = StateVector::zeros(DIM);
    for (k, &i) in COMPUTATIONAL.iter().enumerate() {
        v[i] = amps[k];
    }
    v
}

fn project_computational(psi: &StateVector) -> [C64; 4] {
    std::array::from_fn(|k| psi[COMPUTATIONAL[k]])
}

/// A named input state.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledState {
    pub label: String,
    pub state: StateVector,
}

impl LabeledState {
    /// |c t⟩ for c, t ∈ {0, 1}.
    pub fn basis(control: usize, target: usize) -> Self {
        Self {
            label: format!("{control}{target}"),
            state: StateVector::basis(DIM, idx(control, target)),
        }
    }

    /// Parses "01", "|11>", "|11⟩" or an equal-weight sum such as "10+11".
    pub fn parse(text: &str) -> Result<Self, GateError> {
        let clean: String = text.chars().filter(|c| !matches!(c, '|' | '>' | '⟩' | ' ')).collect();
        if clean.is_empty() {
            return Err(GateError::InvalidInput("empty state label".into()));
        }
        let mut v = StateVector::zeros(DIM);
        for term in clean.split('+') {
            let bits: Vec<usize> = term
                .chars()
                .map(|c| match c {
                    '0' => Ok(0),
                    '1' => Ok(1),
                    _ => Err(GateError::InvalidInput(format!("bad state label {text:?}"))),
                })
                .collect::<Result<_, _>>()?;
            if bits.len() != 2 {
                return Err(GateError::InvalidInput(format!("bad state label {text:?}")));
            }
            v[idx(bits[0], bits[1])] += ONE;
        }
        Ok(Self {
            label: clean,
            state: v.normalized(),
        })
    }

    pub fn computational() -> Vec<Self> {
        vec![
            Self::basis(0, 0),
            Self::basis(0, 1),
            Self::basis(1, 0),
            Self::basis(1, 1),
        ]
    }
}

/// Everything that defines one gate simulation apart from the input state.
#[derive(Debug, Clone, PartialEq)]
pub struct GateSetup {
    pub gate: GateSpec,
    pub params: SystemParams,
    pub coeffs: PchCoefficients,
    pub compensation: bool,
    pub clock: EnvelopeClock,
    pub tol: Tolerances,
}

impl GateSetup {
    pub fn new(gate: GateSpec, params: SystemParams, coeffs: PchCoefficients) -> Self {
        Self {
            gate,
            params,
            coeffs,
            compensation: true,
            clock: EnvelopeClock::Pair,
            tol: Tolerances::default(),
        }
    }

    pub fn schedule(&self) -> SegmentSchedule {
        build_schedule_with_clock(&self.gate, self.params.tau_us, self.compensation, self.clock)
    }

    pub fn with_params(&self, params: SystemParams) -> Self {
        Self { params, ..self.clone() }
    }

    pub fn with_delta_khz(&self, delta_khz: f64) -> Self {
        self.with_params(self.params.with_delta_khz(delta_khz))
    }

    fn context(&self) -> Result<LindbladContext, GateError> {
        self.params.validate()?;
        Ok(LindbladContext::new(&self.params, &self.schedule(), &self.coeffs))
    }

    /// Target operator on the full space (identity outside the computational
    /// block is irrelevant; only its action on computational inputs is used).
    pub fn ideal_output(&self, input: &StateVector) -> StateVector {
        let u = target_unitary(&self.gate);
        let a = project_computational(input);
        let out: [C64; 4] = std::array::from_fn(|i| (0..4).map(|j| u[(i, j)] * a[j]).sum());
        embed_computational(&out)
    }

    /// Max of √3·Ω_t/(2π), MHz.
    pub fn max_field_mhz(&self) -> Result<f64, GateError> {
        Ok(max_field_amplitude(
            &self.schedule(),
            &self.coeffs,
            MIN_AMPLITUDE_SAMPLES * 4,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateResult {
    pub fidelity: f64,
    pub leakage: f64,
    pub final_state: DensityMatrix,
    pub gate: String,
    pub delta_khz: f64,
    pub v_mhz: f64,
    pub input: String,
}

impl GateResult {
    /// Population remaining on the input state itself.
    pub fn survival(&self, input: &StateVector) -> f64 {
        self.final_state.expectation(input)
    }
}

fn check_input(input: &StateVector) -> Result<(), GateError> {
    if input.dim() != DIM {
        return Err(GateError::InvalidInput(format!(
            "dimension {} (expected {DIM})",
            input.dim()
        )));
    }
    if !input.is_normalized() {
        return Err(GateError::InvalidInput(format!("norm {} ≠ 1", input.norm())));
    }
    Ok(())
}

/// Runs the full schedule on one input and scores it against the ideal gate.
pub fn run_gate(setup: &GateSetup, input: &LabeledState) -> Result<GateResult, GateError> {
    let ctx = setup.context()?;
    run_with_context(setup, &ctx, input)
}

fn run_with_context(setup: &GateSetup, ctx: &LindbladContext, input: &LabeledState) -> Result<GateResult, GateError> {
    check_input(&input.state)?;
    let rho0 = DensityMatrix::from_pure(&input.state)?;
    let total = ctx.total_duration();
    let rho = dynamics::integrate_with(&rho0, (0.0, total), ctx, setup.tol)?;
    let ideal = setup.ideal_output(&input.state);
    Ok(GateResult {
        fidelity: rho.expectation(&ideal),
        leakage: rho.leakage(),
        final_state: rho,
        gate: setup.gate.label(),
        delta_khz: setup.params.delta_khz,
        v_mhz: setup.params.v_mhz,
        input: input.label.clone(),
    })
}

/// Output populations for each computational input: row = input, column =
/// output, both ordered 00, 01, 10, 11.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTable {
    pub rows: [[f64; 4]; 4],
    pub fidelities: [f64; 4],
    pub leakage: [f64; 4],
}

pub fn truth_table(setup: &GateSetup) -> Result<TruthTable, GateError> {
    let ctx = setup.context()?;
    let results: Vec<GateResult> = LabeledState::computational()
        .into_par_iter()
        .map(|input| {
            let label = input.label.clone();
            run_with_context(setup, &ctx, &input).map_err(|e| e.at(format!("input |{label}⟩")))
        })
        .collect::<Result<_, _>>()?;
    let mut table = TruthTable {
        rows: [[0.0; 4]; 4],
        fidelities: [0.0; 4],
        leakage: [0.0; 4],
    };
    for (r, res) in results.iter().enumerate() {
        for (c, &i) in COMPUTATIONAL.iter().enumerate() {
            table.rows[r][c] = res.final_state.population(i);
        }
        table.fidelities[r] = res.fidelity;
        table.leakage[r] = res.leakage;
    }
    Ok(table)
}

/// `n` evenly spaced points from `start` to `stop` inclusive.
pub fn uniform_grid(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (start + stop)],
        _ => (0..n)
            .map(|i| start + (stop - start) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

pub const NEAR_RANGE_KHZ: f64 = 170.0;
pub const REPORT_NEAR_POINTS: usize = 35;
pub const FAR_RANGE_MHZ: (f64, f64) = (8.5, 10.0);
pub const FAR_THRESHOLD_MHZ: f64 = 8.9;
pub const REPORT_FAR_POINTS: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub input: String,
    /// kHz for detuning sweeps, MHz for off-resonant and interaction sweeps.
    pub x: f64,
    pub value: f64,
    pub leakage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSummary {
    pub input: String,
    pub mean: f64,
    pub max: f64,
    pub min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    /// Grid-major within each input: all points for inputs[0], then inputs[1]…
    pub points: Vec<SweepPoint>,
    pub summaries: Vec<InputSummary>,
}

impl SweepTable {
    pub fn summary(&self, input: &str) -> Option<&InputSummary> {
        self.summaries.iter().find(|s| s.input == input)
    }

    pub fn values(&self, input: &str) -> Vec<f64> {
        self.points
            .iter()
            .filter(|p| p.input == input)
            .map(|p| p.value)
            .collect()
    }
}

/// Evaluates `f` at every (input, x) pair in parallel; output is in
/// (input, grid) order regardless of scheduling.
fn sweep<F>(
    inputs: &[LabeledState],
    grid: &[f64],
    unit: &str,
    include: impl Fn(f64) -> bool,
    f: F,
) -> Result<SweepTable, GateError>
where
    F: Fn(&LabeledState, f64) -> Result<(f64, f64), GateError> + Sync,
{
    if grid.is_empty() || inputs.is_empty() {
        return Err(GateError::EmptyGrid);
    }
    let jobs: Vec<(usize, f64)> = (0..inputs.len())
        .flat_map(|i| grid.iter().map(move |&x| (i, x)))
        .collect();
    let points: Vec<SweepPoint> = jobs
        .into_par_iter()
        .map(|(i, x)| {
            let input = &inputs[i];
            f(input, x)
                .map(|(value, leakage)| SweepPoint {
                    input: input.label.clone(),
                    x,
                    value,
                    leakage,
                })
                .map_err(|e| e.at(format!("input |{}⟩, {x} {unit}", input.label)))
        })
        .collect::<Result<_, _>>()?;
    let summaries = inputs
        .iter()
        .map(|input| {
            let vals: Vec<f64> = points
                .iter()
                .filter(|p| p.input == input.label && include(p.x))
                .map(|p| p.value)
                .collect();
            let n = vals.len().max(1) as f64;
            InputSummary {
                input: input.label.clone(),
                mean: vals.iter().sum::<f64>() / n,
                max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                min: vals.iter().copied().fold(f64::INFINITY, f64::min),
            }
        })
        .collect();
    Ok(SweepTable { points, summaries })
}

/// Fidelity versus common detuning (kHz). Summary statistics cover
/// |Δ| ≤ 170 kHz.
pub fn detuning_sweep(
    setup: &GateSetup,
    inputs: &[LabeledState],
    delta_grid_khz: &[f64],
) -> Result<SweepTable, GateError> {
    sweep(
        inputs,
        delta_grid_khz,
        "kHz",
        |x| x.abs() <= NEAR_RANGE_KHZ + 1e-9,
        |input, delta| {
            let r = run_gate(&setup.with_delta_khz(delta), input)?;
            Ok((r.fidelity, r.leakage))
        },
    )
}

/// Population that leaves the initial state when the pulses address a
/// transition detuned by `delta` MHz. Summary statistics cover Δ ≥ 8.9 MHz.
pub fn offresonant_sweep(
    setup: &GateSetup,
    inputs: &[LabeledState],
    delta_grid_mhz: &[f64],
) -> Result<SweepTable, GateError> {
    sweep(
        inputs,
        delta_grid_mhz,
        "MHz",
        |x| x >= FAR_THRESHOLD_MHZ - 1e-9,
        |input, delta| {
            let r = run_gate(&setup.with_delta_khz(delta * 1e3), input)?;
            Ok((1.0 - r.survival(&input.state), r.leakage))
        },
    )
}

/// Fidelity versus blockade strength V (MHz).
pub fn interaction_sweep(setup: &GateSetup, input: &LabeledState, v_grid_mhz: &[f64]) -> Result<SweepTable, GateError> {
    if let Some(v) = v_grid_mhz.iter().find(|v| !(**v > 0.0)) {
        return Err(GateError::InvalidArgument(format!("V must be positive, got {v}")));
    }
    sweep(
        std::slice::from_ref(input),
        v_grid_mhz,
        "MHz",
        |_| true,
        |input, v| {
            let r = run_gate(&setup.with_params(setup.params.with_v_mhz(v)), input)?;
            Ok((r.fidelity, r.leakage))
        },
    )
}

/// Haar-random state on the computational subspace for draw `index`.
///
/// Each draw owns a ChaCha stream keyed by its index, so the sequence does not
/// depend on how draws are scheduled.
pub fn haar_state(seed: u64, index: u64) -> [C64; 4] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut amps = [ZERO; 4];
    let mut norm = 0.0;
    for a in amps.iter_mut() {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        *a = C64::new(re, im);
        norm += a.norm_sqr();
    }
    let norm = norm.sqrt();
    amps.map(|a| a / norm)
}

/// The gate as a linear map on computational operators: `images[i][j]` is the
/// evolved E_ij = |i⟩⟨j| (i, j indexing 00, 01, 10, 11).
pub struct ComputationalChannel {
    images: Vec<Vec<ComplexMatrix>>,
}

impl ComputationalChannel {
    /// Needs 16 integrations: the four populations plus the real and
    /// imaginary Hermitian combinations of each coherence.
    pub fn compute(setup: &GateSetup) -> Result<Self, GateError> {
        let ctx = setup.context()?;
        let total = ctx.total_duration();
        let mut jobs: Vec<(usize, usize, u8)> = Vec::new();
        for i in 0..4 {
            jobs.push((i, i, 0));
            for j in (i + 1)..4 {
                jobs.push((i, j, 1));
                jobs.push((i, j, 2));
            }
        }
        let evolved: Vec<ComplexMatrix> = jobs
            .par_iter()
            .map(|&(i, j, kind)| {
                let (a, b) = (COMPUTATIONAL[i], COMPUTATIONAL[j]);
                let mut op = ComplexMatrix::zeros(DIM, DIM);
                match kind {
                    0 => op[(a, a)] = ONE,
                    1 => {
                        op[(a, b)] = ONE;
                        op[(b, a)] = ONE;
                    }
                    _ => {
                        op[(a, b)] = I;
                        op[(b, a)] = -I;
                    }
                }
                dynamics::integrate_operator(&op, (0.0, total), &ctx, setup.tol)
                    .map_err(|e| GateError::from(e).at(format!("channel element ({i}, {j})")))
            })
            .collect::<Result<_, _>>()?;
        let mut images = vec![vec![ComplexMatrix::zeros(DIM, DIM); 4]; 4];
        for (k, &(i, j, kind)) in jobs.iter().enumerate() {
            match kind {
                0 => images[i][i] = evolved[k].clone(),
                1 => images[i][j] = &images[i][j] + &evolved[k].scale_real(0.5),
                _ => images[i][j] = &images[i][j] + &evolved[k].scale(C64::new(0.0, -0.5)),
            }
        }
        for (i, j) in (0..4).flat_map(|i| ((i + 1)..4).map(move |j| (i, j))) {
            images[j][i] = images[i][j].adjoint();
        }
        Ok(Self { images })
    }

    /// Output state for computational input amplitudes `amps`.
    pub fn apply(&self, amps: &[C64; 4]) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(DIM, DIM);
        for i in 0..4 {
            for j in 0..4 {
                let w = amps[i] * amps[j].conj();
                if w != ZERO {
                    out = &out + &self.images[i][j].scale(w);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomStateReport {
    pub mean: f64,
    pub min: f64,
    pub fidelities: Vec<f64>,
}

/// Mean fidelity over `n` Haar-random computational inputs. Uses the linearity
/// of the master equation: one channel computation serves every draw.
pub fn random_state_average(setup: &GateSetup, n: usize, seed: u64) -> Result<RandomStateReport, GateError> {
    if n == 0 {
        return Err(GateError::InvalidArgument("need at least one random state".into()));
    }
    let channel = ComputationalChannel::compute(setup)?;
    let fidelities: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|k| {
            let amps = haar_state(seed, k);
            let rho = channel.apply(&amps);
            let ideal = setup.ideal_output(&embed_computational(&amps));
            let rho_ideal = &rho * &ideal;
            ideal.inner(&rho_ideal).re
        })
        .collect();
    let mean = fidelities.iter().sum::<f64>() / n as f64;
    let min = fidelities.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(RandomStateReport { mean, min, fidelities })
}

/// Numerical propagator of segment `index` (0-based) in the blockade-free
/// resonant model, for comparison with [`analytic_segment_propagator`].
pub fn numeric_segment_propagator(setup: &GateSetup, index: usize) -> Result<ComplexMatrix, GateError> {
    let schedule = setup.schedule();
    let seg = schedule
        .segments
        .get(index)
        .ok_or_else(|| GateError::InvalidArgument(format!("no segment {index}")))?;
    let params = SystemParams {
        model: ModelVariant::Rwa,
        delta_khz: 0.0,
        ..setup.params.coherent()
    };
    Ok(dynamics::propagator(
        (seg.start, seg.end()),
        &params,
        &schedule,
        &setup.coeffs,
        setup.tol,
    )?)
}

/// Kronecker embedding of a target-qutrit operator.
pub fn on_target(op: &ComplexMatrix) -> ComplexMatrix {
    kron(&ComplexMatrix::identity(QUTRIT), op)
}

/// (|0⟩ − |1⟩)/√2 on one qutrit.
pub fn minus_state() -> StateVector {
    StateVector::new(vec![C64::new(FRAC_1_SQRT_2, 0.0), C64::new(-FRAC_1_SQRT_2, 0.0), ZERO])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{expm_unitary, unitarity_defect};
    use crate::pulsegen::build_schedule;
    use std::f64::consts::FRAC_PI_2;

    fn cnot_table() -> PchCoefficients {
        PchCoefficients::from_flat([0.201, -0.412, -0.067, 0.081, -0.192, -0.230, 0.064, -0.010])
    }

    fn cs_table() -> PchCoefficients {
        PchCoefficients::from_flat([0.014, -0.361, -0.005, 0.055, -0.002, -0.410, 0.001, 0.080])
    }

    fn ideal_params() -> SystemParams {
        SystemParams {
            model: ModelVariant::Rwa,
            ..SystemParams::default().coherent()
        }
    }

    fn rwa_generator(seg: &Segment) -> ComplexMatrix {
        // H at unit envelope; the true propagator is exp(−i·(π/2)·H₀).
        let f = crate::pulsegen::segment_fields(seg, 1.0);
        let mut h = ComplexMatrix::zeros(DIM, DIM);
        for t in 0..2 {
            let (a, b) = (idx(G0, t), idx(EXC, t));
            h[(a, b)] += f.omega_c;
            h[(b, a)] += f.omega_c.conj();
        }
        for c in 0..2 {
            for (g, w) in [(G0, f.omega_0t), (G1, f.omega_1t)] {
                let (a, e) = (idx(c, g), idx(c, EXC));
                h[(a, e)] += w;
                h[(e, a)] += w.conj();
            }
        }
        h
    }

    #[test]
    fn bright_dark_is_unitary() {
        for (theta, phi) in [(0.0, 0.0), (FRAC_PI_2, 0.0), (PI / 4.0, 1.3), (PI, PI)] {
            let t = BrightDarkTransform::new(theta, phi);
            assert!(unitarity_defect(&t.matrix) < 1e-12);
        }
    }

    #[test]
    fn closed_form_matches_generator_exponential() {
        for gate in [
            GateSpec::cnot(),
            GateSpec::ch(),
            GateSpec::cz(),
            GateSpec::cs(),
            GateSpec::ct(),
        ] {
            let s = build_schedule(&gate, 0.5, true);
            for seg in &s.segments {
                let exact = expm_unitary(&rwa_generator(seg), FRAC_PI_2).unwrap();
                let closed = analytic_segment_propagator(seg);
                assert!(
                    closed.max_abs_diff(&exact) < 1e-12,
                    "{} seg at {}",
                    gate.label(),
                    seg.start
                );
            }
        }
    }

    #[test]
    fn segment_one_full_transfer() {
        for gate in [GateSpec::cnot(), GateSpec::cs(), GateSpec::ch()] {
            let u = analytic_gate_segment(&gate, 1, 0.5).unwrap();
            let seg = &build_schedule(&gate, 0.5, false).segments[0];
            let bd = BrightDarkTransform::new(seg.theta, seg.relative_phase());
            let k1b = level(G1).kron(&bd.bright());
            let out = &u * &k1b;
            assert!((out[idx(G1, EXC)] - C64::new(0.0, -1.0)).norm() < 1e-12);
            let k1d = level(G1).kron(&bd.dark());
            let moved = &u * &k1d;
            assert!((moved.inner(&k1d).norm() - 1.0).abs() < 1e-12);
            assert!((u[(8, 8)] - ONE).norm() < 1e-12);
            assert!(unitarity_defect(&u) < 1e-12);
        }
    }

    #[test]
    fn two_segment_product_is_target() {
        for gate in [
            GateSpec::cnot(),
            GateSpec::ch(),
            GateSpec::cz(),
            GateSpec::cs(),
            GateSpec::ct(),
            GateSpec::new(0.7, 2.1, 1.2),
        ] {
            let u1 = analytic_gate_segment(&gate, 1, 0.5).unwrap();
            let u2 = analytic_gate_segment(&gate, 2, 0.5).unwrap();
            let block = computational_block(&(&u2 * &u1));
            assert!(block.max_abs_diff(&target_unitary(&gate)) < 1e-12, "{}", gate.label());
        }
    }

    #[test]
    fn compensation_pair_is_identity_on_block() {
        for gate in [GateSpec::cnot(), GateSpec::cs(), GateSpec::ct()] {
            let s = build_schedule(&gate, 0.5, true);
            let u3 = analytic_segment_propagator(&s.segments[2]);
            let u4 = analytic_segment_propagator(&s.segments[3]);
            let block = computational_block(&(&u4 * &u3));
            assert!(block.max_abs_diff(&ComplexMatrix::identity(4)) < 1e-12);
        }
    }

    #[test]
    fn target_examples() {
        let cz = target_unitary(&GateSpec::cz());
        let want = ComplexMatrix::diag(&[ONE, ONE, ONE, -ONE]);
        assert!(cz.max_abs_diff(&want) < 1e-12);
        let cnot = target_unitary(&GateSpec::cnot());
        let mut want = ComplexMatrix::zeros(4, 4);
        want[(0, 0)] = ONE;
        want[(1, 1)] = ONE;
        want[(2, 3)] = ONE;
        want[(3, 2)] = ONE;
        assert!(cnot.max_abs_diff(&want) < 1e-12);
        let cs = target_unitary(&GateSpec::cs());
        assert!(cs.max_abs_diff(&ComplexMatrix::diag(&[ONE, ONE, ONE, I])) < 1e-12);
    }

    #[test]
    fn printed_convention_agrees_for_half_turn_gates() {
        // The alternative sign convention, e^{−iγ/2}·exp(+i(γ/2)·n̂·σ), agrees
        // whenever γ = π.
        for gate in [GateSpec::cnot(), GateSpec::ch(), GateSpec::cz()] {
            let flipped = target_unitary(&GateSpec::new(-gate.gamma, gate.phi, gate.theta));
            assert!(flipped.max_abs_diff(&target_unitary(&gate)) < 1e-12);
        }
    }

    #[test]
    fn inverse_rotation_composes_to_identity() {
        for gate in [GateSpec::cs(), GateSpec::ct(), GateSpec::new(1.1, 0.4, 2.0)] {
            let inv = GateSpec::new(-gate.gamma, gate.phi, gate.theta);
            let p = &target_unitary(&gate) * &target_unitary(&inv);
            assert!(p.max_abs_diff(&ComplexMatrix::identity(4)) < 1e-12);
        }
    }

    #[test]
    fn numeric_segments_match_closed_form() {
        let setup = GateSetup::new(GateSpec::cs(), ideal_params(), cs_table());
        let mut setup = setup;
        setup.tol = Tolerances::new(1e-11, 1e-13);
        for k in 0..4 {
            let num = numeric_segment_propagator(&setup, k).unwrap();
            let exact = analytic_segment_propagator(&setup.schedule().segments[k]);
            assert!(
                num.max_abs_diff(&exact) < 1e-6,
                "segment {k}: {}",
                num.max_abs_diff(&exact)
            );
        }
    }

    #[test]
    fn ideal_limit_is_exact() {
        let mut setup = GateSetup::new(GateSpec::cnot(), ideal_params(), cnot_table());
        setup.tol = Tolerances::new(1e-10, 1e-12);
        let r = run_gate(&setup, &LabeledState::basis(1, 1)).unwrap();
        assert!((r.fidelity - 1.0).abs() < 1e-6, "{}", r.fidelity);
        let tt = truth_table(&setup).unwrap();
        let perm = [0, 1, 3, 2];
        for (r, row) in tt.rows.iter().enumerate() {
            for (c, &p) in row.iter().enumerate() {
                let want = if c == perm[r] { 1.0 } else { 0.0 };
                assert!((p - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn state_labels() {
        let s = LabeledState::parse("|10>+|11>").unwrap();
        assert!((s.state[idx(1, 0)].re - FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(LabeledState::parse("01").unwrap().state, StateVector::basis(DIM, 1));
        assert!(LabeledState::parse("0e").is_err());
        assert!(LabeledState::parse("011").is_err());
    }

    #[test]
    fn haar_draws_are_reproducible_and_normalized() {
        let a = haar_state(42, 7);
        assert_eq!(a, haar_state(42, 7));
        assert_ne!(a, haar_state(42, 8));
        assert_ne!(a, haar_state(43, 7));
        let n: f64 = a.iter().map(|z| z.norm_sqr()).sum();
        assert!((n - 1.0).abs() < 1e-14);
    }

    #[test]
    fn channel_reproduces_direct_runs() {
        let setup = GateSetup::new(GateSpec::cs(), SystemParams::default(), cs_table());
        let channel = ComputationalChannel::compute(&setup).unwrap();
        for k in 0..3 {
            let amps = haar_state(5, k);
            let psi = embed_computational(&amps);
            let direct = run_gate(
                &setup,
                &LabeledState {
                    label: "r".into(),
                    state: psi.clone(),
                },
            )
            .unwrap();
            let via = channel.apply(&amps);
            assert!(via.max_abs_diff(direct.final_state.matrix()) < 1e-8);
        }
    }

    #[test]
    fn grid_spacing() {
        let g = uniform_grid(-170.0, 170.0, 35);
        assert_eq!(g.len(), 35);
        assert_eq!(g[0], -170.0);
        assert_eq!(g[34], 170.0);
        assert!(g[17].abs() < 1e-12);
        assert_eq!(uniform_grid(1.0, 3.0, 1), vec![2.0]);
    }

    #[test]
    fn sweep_rejects_empty_grid() {
        let setup = GateSetup::new(GateSpec::cs(), SystemParams::default(), cs_table());
        assert!(matches!(
            detuning_sweep(&setup, &[LabeledState::basis(0, 1)], &[]),
            Err(GateError::EmptyGrid)
        ));
    }
}
