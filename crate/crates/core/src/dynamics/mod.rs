//! Two-qutrit Hamiltonian, jump operators and master-equation integration.
//!
//! Basis ordering is `index = 3 * control + target` with single-qutrit levels
//! ordered (|0⟩, |1⟩, |e⟩), i.e. |00⟩, |01⟩, |0e⟩, |10⟩, |11⟩, |1e⟩, |e0⟩,
//! |e1⟩, |ee⟩. Internally time is in μs and energies in rad/μs; the public
//! parameters use ordinary frequencies (MHz, kHz, Hz) and are converted with 2π.

pub mod dopri;

use std::f64::consts::TAU as TWO_PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{kron, matmul_into, ComplexMatrix, LinalgError, StateVector, C64, ONE, ZERO};
use crate::pulsegen::{FieldEvaluator, Fields, PchCoefficients, PulseError, SegmentSchedule, DEFAULT_TAU_US};
use dopri::{Failure, StepControl};

pub const DIM: usize = 9;
pub const QUTRIT: usize = 3;

/// Single-qutrit level indices.
pub const G0: usize = 0;
pub const G1: usize = 1;
pub const EXC: usize = 2;

/// Index of |c t⟩.
#[inline]
pub const fn idx(control: usize, target: usize) -> usize {
    QUTRIT * control + target
}

pub const EE: usize = idx(EXC, EXC);

/// The four computational basis states |00⟩, |01⟩, |10⟩, |11⟩.
pub const COMPUTATIONAL: [usize; 4] = [idx(0, 0), idx(0, 1), idx(1, 0), idx(1, 1)];

/// States carrying the single-excitation detuning term.
const SINGLY_EXCITED: [usize; 4] = [idx(G0, EXC), idx(G1, EXC), idx(EXC, G0), idx(EXC, G1)];

pub const BASIS_LABELS: [&str; DIM] = ["00", "01", "0e", "10", "11", "1e", "e0", "e1", "ee"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Pulse(#[from] PulseError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("step size underflow at t = {t} μs (h = {h:e}); problem is stiff or mis-specified")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("integration exceeded the step budget at t = {t} μs")]
    TooManySteps { t: f64 },
    #[error("integration produced non-finite values at t = {t} μs")]
    NonFinite { t: f64 },
    #[error("pure-state propagation requires zero dissipation rates")]
    DissipationPresent,
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("time span ({0}, {1}) is outside the schedule [0, {2}]")]
    BadSpan(f64, f64, f64),
}

impl From<Failure> for DynamicsError {
    fn from(f: Failure) -> Self {
        match f {
            Failure::StepSizeUnderflow { t, h } => Self::StepSizeUnderflow { t, h },
            Failure::TooManySteps { t } => Self::TooManySteps { t },
            Failure::NonFinite { t } => Self::NonFinite { t },
        }
    }
}

/// Hamiltonian variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModelVariant {
    /// Both drives on both qutrits plus the explicit V|ee⟩⟨ee| shift.
    #[default]
    Full,
    /// Drive couplings into |ee⟩ dropped and no V term.
    Rwa,
}

/// Physical constants in ordinary-frequency units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Dipole–dipole shift V, MHz.
    pub v_mhz: f64,
    /// Segment duration τ, μs.
    pub tau_us: f64,
    /// Common detuning Δ, kHz.
    pub delta_khz: f64,
    /// Excited-state decay Γ1, Hz.
    pub gamma1_hz: f64,
    /// Excited-state pure dephasing Γ2, Hz.
    pub gamma2_hz: f64,
    /// Ground-level relaxation Γ3, Hz.
    pub gamma3_hz: f64,
    pub model: ModelVariant,
    /// Adds 2Δ|ee⟩⟨ee| to the detuning term.
    pub ee_detuning: bool,
    /// Cap on √3·Ω_t/(2π), MHz.
    pub amplitude_cap_mhz: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            v_mhz: 50.0,
            tau_us: DEFAULT_TAU_US,
            delta_khz: 0.0,
            gamma1_hz: 80.0,
            gamma2_hz: 60.0,
            gamma3_hz: 0.0,
            model: ModelVariant::Full,
            ee_detuning: false,
            amplitude_cap_mhz: 3.0,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |m: &str| Err(DynamicsError::InvalidParams(m.to_string()));
        if !(self.v_mhz > 0.0 && self.v_mhz.is_finite()) {
            return bad("v must be positive");
        }
        if !(self.tau_us > 0.0 && self.tau_us.is_finite()) {
            return bad("tau must be positive");
        }
        if !self.delta_khz.is_finite() {
            return bad("delta must be finite");
        }
        for g in [self.gamma1_hz, self.gamma2_hz, self.gamma3_hz] {
            if !(g >= 0.0 && g.is_finite()) {
                return bad("decay rates must be non-negative");
            }
        }
        if !(self.amplitude_cap_mhz > 0.0) {
            return bad("amplitude cap must be positive");
        }
        Ok(())
    }

    pub fn with_delta_khz(&self, delta_khz: f64) -> Self {
        Self {
            delta_khz,
            ..self.clone()
        }
    }

    pub fn with_v_mhz(&self, v_mhz: f64) -> Self {
        Self { v_mhz, ..self.clone() }
    }

    pub fn coherent(&self) -> Self {
        Self {
            gamma1_hz: 0.0,
            gamma2_hz: 0.0,
            gamma3_hz: 0.0,
            ..self.clone()
        }
    }

    pub fn is_dissipative(&self) -> bool {
        self.gamma1_hz > 0.0 || self.gamma2_hz > 0.0 || self.gamma3_hz > 0.0
    }

    /// V in rad/μs.
    pub fn v_angular(&self) -> f64 {
        TWO_PI * self.v_mhz
    }

    /// Δ in rad/μs.
    pub fn delta_angular(&self) -> f64 {
        TWO_PI * self.delta_khz * 1e-3
    }

    /// Rates in 1/μs for (Γ1, Γ2, Γ3).
    pub fn rates_per_us(&self) -> [f64; 3] {
        [self.gamma1_hz, self.gamma2_hz, self.gamma3_hz].map(|g| TWO_PI * g * 1e-6)
    }

    /// Step ceiling: at least 20 steps per oscillation period of the fastest
    /// diagonal phase (V in the full model, Δ otherwise). Finer caps were
    /// checked to change nothing at the 1e-6 level while costing 6× the time.
    pub fn max_step_us(&self) -> f64 {
        let mut fastest = self.delta_angular().abs() * if self.ee_detuning { 2.0 } else { 1.0 };
        if self.model == ModelVariant::Full {
            fastest = fastest.max(self.v_angular());
        }
        if fastest > 0.0 {
            TWO_PI / (20.0 * fastest)
        } else {
            f64::INFINITY
        }
    }
}

/// Integrator tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rel: 1e-8, abs: 1e-10 }
    }
}

impl Tolerances {
    pub fn new(rel: f64, abs: f64) -> Self {
        Self { rel, abs }
    }

    pub fn halved(&self) -> Self {
        Self {
            rel: self.rel / 2.0,
            abs: self.abs / 2.0,
        }
    }
}

/// 9×9 density matrix of the two-qutrit system.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(ComplexMatrix);

pub const HERMITICITY_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-8;
pub const POSITIVITY_TOL: f64 = -1e-7;

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(m: ComplexMatrix) -> Result<Self, DynamicsError> {
        if m.shape() != (DIM, DIM) {
            return Err(DynamicsError::InvalidState(format!(
                "expected {DIM}x{DIM}, got {:?}",
                m.shape()
            )));
        }
        let herm = m.hermitian_deviation();
        if herm > HERMITICITY_TOL {
            return Err(DynamicsError::InvalidState(format!(
                "not Hermitian (deviation {herm:e})"
            )));
        }
        let tr = m.trace();
        if (tr - ONE).norm() > TRACE_TOL {
            return Err(DynamicsError::InvalidState(format!("trace {} differs from 1", tr)));
        }
        let rho = Self(m.hermitian_part());
        let min = rho.min_eigenvalue()?;
        if min < POSITIVITY_TOL {
            return Err(DynamicsError::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(rho)
    }

    pub fn from_pure(psi: &StateVector) -> Result<Self, DynamicsError> {
        if psi.dim() != DIM {
            return Err(DynamicsError::InvalidState(format!(
                "state has dimension {}, expected {DIM}",
                psi.dim()
            )));
        }
        Self::new(psi.normalized().projector())
    }

    pub fn basis(index: usize) -> Self {
        Self(StateVector::basis(DIM, index).projector())
    }

    pub(crate) fn from_unchecked(m: ComplexMatrix) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn population(&self, index: usize) -> f64 {
        self.0[(index, index)].re
    }

    pub fn populations(&self) -> [f64; DIM] {
        std::array::from_fn(|i| self.population(i))
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// Tr ρ²
    pub fn purity(&self) -> f64 {
        let m = &self.0;
        m.as_slice().iter().map(|z| z.norm_sqr()).sum()
    }

    /// ⟨ψ|ρ|ψ⟩
    pub fn expectation(&self, psi: &StateVector) -> f64 {
        let rho_psi = &self.0 * psi;
        psi.inner(&rho_psi).re
    }

    pub fn min_eigenvalue(&self) -> Result<f64, DynamicsError> {
        let e = crate::linalg::hermitian_eig(&self.0.hermitian_part())?;
        Ok(e.values[0])
    }

    pub fn hermitian_deviation(&self) -> f64 {
        self.0.hermitian_deviation()
    }

    /// Population outside |00⟩, |01⟩, |10⟩, |11⟩.
    pub fn leakage(&self) -> f64 {
        self.trace() - COMPUTATIONAL.iter().map(|&i| self.population(i)).sum::<f64>()
    }
}

fn check_span(t_span: (f64, f64), total: f64) -> Result<(), DynamicsError> {
    let (t0, t1) = t_span;
    let eps = 1e-12 * total.max(1.0);
    if !(t0 >= -eps && t1 <= total + eps && t0 <= t1) {
        return Err(DynamicsError::BadSpan(t0, t1, total));
    }
    Ok(())
}

/// Writes the drive part of H(t) into `h` (overwritten); the static diagonal
/// is handled separately by [`static_energies`].
fn fill_drive(h: &mut ComplexMatrix, fields: &Fields, params: &SystemParams) {
    h.as_mut_slice().iter_mut().for_each(|z| *z = ZERO);
    let rwa = params.model == ModelVariant::Rwa;
    // Control drive |0⟩⟨e| ⊗ I.
    for t in 0..QUTRIT {
        if rwa && t == EXC {
            continue;
        }
        let (a, b) = (idx(G0, t), idx(EXC, t));
        h[(a, b)] += fields.omega_c;
        h[(b, a)] += fields.omega_c.conj();
    }
    // Target drives I ⊗ (Ω_0t |0⟩⟨e| + Ω_1t |1⟩⟨e|).
    for c in 0..QUTRIT {
        if rwa && c == EXC {
            continue;
        }
        let e = idx(c, EXC);
        for (g, omega) in [(G0, fields.omega_0t), (G1, fields.omega_1t)] {
            let a = idx(c, g);
            h[(a, e)] += omega;
            h[(e, a)] += omega.conj();
        }
    }
}

/// Time-independent diagonal of H: blockade shift V on |ee⟩ (full model) and
/// the common detuning on singly excited states (optionally 2Δ on |ee⟩).
fn static_energies(params: &SystemParams) -> [f64; DIM] {
    let mut e = [0.0; DIM];
    if params.model != ModelVariant::Rwa {
        e[EE] += params.v_angular();
    }
    let delta = params.delta_angular();
    for &i in &SINGLY_EXCITED {
        e[i] += delta;
    }
    if params.ee_detuning {
        e[EE] += 2.0 * delta;
    }
    e
}

/// Interaction picture of the static diagonal H₀: ρ = P ρ̃ P† with
/// P(t) = exp(−iH₀t). Integrating ρ̃ keeps the fast blockade phase out of the
/// integrated variable, so accuracy does not hinge on resolving it.
#[derive(Debug, Clone)]
struct Frame {
    energies: [f64; DIM],
}

impl Frame {
    fn phases(&self, t: f64) -> [C64; DIM] {
        std::array::from_fn(|k| C64::from_polar(1.0, -self.energies[k] * t))
    }

    /// Operator: out_ij = in_ij · p_i · conj(p_j); `inverse` uses conj(p).
    fn rotate_op(&self, t: f64, inverse: bool, m: &mut [C64]) {
        let mut p = self.phases(t);
        if inverse {
            p.iter_mut().for_each(|z| *z = z.conj());
        }
        for i in 0..DIM {
            for j in 0..DIM {
                if i != j {
                    m[i * DIM + j] *= p[i] * p[j].conj();
                }
            }
        }
    }

    fn rotate_vec(&self, t: f64, inverse: bool, v: &mut [C64]) {
        for (x, p) in v.iter_mut().zip(self.phases(t)) {
            *x *= if inverse { p.conj() } else { p };
        }
    }
}

/// Total Hamiltonian at absolute time `t`, rad/μs.
pub fn hamiltonian_at(
    t: f64,
    params: &SystemParams,
    schedule: &SegmentSchedule,
    coeffs: &PchCoefficients,
) -> Result<ComplexMatrix, DynamicsError> {
    let fields = crate::pulsegen::fields_at(schedule, coeffs, t)?;
    let mut h = ComplexMatrix::zeros(DIM, DIM);
    fill_drive(&mut h, &fields, params);
    for (i, e) in static_energies(params).into_iter().enumerate() {
        h[(i, i)] += C64::new(e, 0.0);
    }
    Ok(h)
}

fn single_qutrit_sum(op: &ComplexMatrix) -> ComplexMatrix {
    let id = ComplexMatrix::identity(QUTRIT);
    &kron(op, &id) + &kron(&id, op)
}

/// L₁ (decay e→0 and e→1), L₂ (excited-state dephasing), L₃ (1→0), each
/// summed over both qutrits, in √(1/μs).
pub fn jump_operators(params: &SystemParams) -> Vec<ComplexMatrix> {
    let [g1, g2, g3] = params.rates_per_us();
    let u = |i, j| ComplexMatrix::unit(QUTRIT, i, j);
    let decay = &u(G0, EXC) + &u(G1, EXC);
    let dephase = &(&u(EXC, EXC) - &u(G0, G0)) - &u(G1, G1);
    let relax = u(G0, G1);
    vec![
        single_qutrit_sum(&decay).scale_real(g1.sqrt()),
        single_qutrit_sum(&dephase).scale_real(g2.sqrt()),
        single_qutrit_sum(&relax).scale_real(g3.sqrt()),
    ]
}

/// Precomputed pieces of the master-equation generator for one problem.
pub struct LindbladContext {
    params: SystemParams,
    fields: FieldEvaluator,
    driven: bool,
    jumps: Vec<ComplexMatrix>,
    /// −½ Σ L†L
    anti: ComplexMatrix,
    frame: Frame,
}

impl LindbladContext {
    pub fn new(params: &SystemParams, schedule: &SegmentSchedule, coeffs: &PchCoefficients) -> Self {
        let jumps: Vec<ComplexMatrix> = jump_operators(params)
            .into_iter()
            .filter(|l| l.max_abs() > 0.0)
            .collect();
        let mut anti = ComplexMatrix::zeros(DIM, DIM);
        for l in &jumps {
            anti = &anti + &(&l.adjoint() * l);
        }
        Self {
            params: params.clone(),
            fields: FieldEvaluator::new(schedule, coeffs),
            driven: true,
            jumps,
            anti: anti.scale_real(-0.5),
            frame: Frame {
                energies: static_energies(params),
            },
        }
    }

    /// Same time axis as `schedule`, but with every drive switched off; only
    /// the static terms (V, Δ) and the dissipators act.
    pub fn undriven(params: &SystemParams, schedule: &SegmentSchedule) -> Self {
        Self {
            driven: false,
            ..Self::new(params, schedule, &PchCoefficients::zeros())
        }
    }

    #[inline]
    fn fields_in(&self, seg: usize, t: f64) -> Fields {
        if self.driven {
            self.fields.in_segment(seg, t)
        } else {
            Fields::ZERO
        }
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn total_duration(&self) -> f64 {
        self.fields.total_duration()
    }

    fn segment_windows(&self, t0: f64, t1: f64) -> Vec<(usize, f64, f64)> {
        let tau = self.fields.tau();
        let total = self.fields.total_duration();
        let n = (total / tau).round() as usize;
        (0..n)
            .filter_map(|i| {
                let a = (i as f64 * tau).max(t0);
                let b = ((i + 1) as f64 * tau).min(t1);
                (b > a).then_some((i, a, b))
            })
            .collect()
    }
}

/// Scratch buffers for the right-hand side.
struct Workspace {
    g: ComplexMatrix,
    rho: ComplexMatrix,
    prod: ComplexMatrix,
    tmp: ComplexMatrix,
}

impl Workspace {
    fn new() -> Self {
        Self {
            g: ComplexMatrix::zeros(DIM, DIM),
            rho: ComplexMatrix::zeros(DIM, DIM),
            prod: ComplexMatrix::zeros(DIM, DIM),
            tmp: ComplexMatrix::zeros(DIM, DIM),
        }
    }
}

/// dρ = Gρ + ρG† + Σ LρL† with G = −iH − ½ΣL†L, for Hermitian ρ. `H` is
/// the drive alone unless `with_static` adds the diagonal H₀.
fn rhs_into(
    ctx: &LindbladContext,
    fields: &Fields,
    with_static: bool,
    ws: &mut Workspace,
    rho: &[C64],
    out: &mut [C64],
) {
    fill_drive(&mut ws.g, fields, &ctx.params);
    if with_static {
        for (i, e) in ctx.frame.energies.iter().enumerate() {
            ws.g[(i, i)] += C64::new(*e, 0.0);
        }
    }
    for (g, a) in ws.g.as_mut_slice().iter_mut().zip(ctx.anti.as_slice()) {
        *g = C64::new(g.im, -g.re) + a;
    }
    ws.rho.as_mut_slice().copy_from_slice(rho);
    matmul_into(&ws.g, &ws.rho, &mut ws.prod);
    let p = ws.prod.as_slice();
    for i in 0..DIM {
        for j in 0..DIM {
            out[i * DIM + j] = p[i * DIM + j] + p[j * DIM + i].conj();
        }
    }
    for l in &ctx.jumps {
        // LρL† = L (Lρ)† for Hermitian ρ.
        matmul_into(l, &ws.rho, &mut ws.prod);
        let pa = ws.prod.adjoint();
        matmul_into(l, &pa, &mut ws.tmp);
        for (o, v) in out.iter_mut().zip(ws.tmp.as_slice()) {
            *o += v;
        }
    }
}

/// −i[H(t), ρ] + Σ_α (L_α ρ L_α† − ½{L_α†L_α, ρ}).
pub fn lindblad_rhs(rho: &DensityMatrix, t: f64, ctx: &LindbladContext) -> ComplexMatrix {
    let fields = if ctx.driven { ctx.fields.at(t) } else { Fields::ZERO };
    let mut ws = Workspace::new();
    let mut out = ComplexMatrix::zeros(DIM, DIM);
    rhs_into(ctx, &fields, true, &mut ws, rho.matrix().as_slice(), out.as_mut_slice());
    out
}

fn step_control(params: &SystemParams, tol: Tolerances) -> StepControl {
    StepControl {
        rtol: tol.rel,
        atol: tol.abs,
        h_max: params.max_step_us(),
    }
}

fn symmetrize(y: &mut [C64]) {
    for i in 0..DIM {
        y[i * DIM + i].im = 0.0;
        for j in (i + 1)..DIM {
            let avg = (y[i * DIM + j] + y[j * DIM + i].conj()) * 0.5;
            y[i * DIM + j] = avg;
            y[j * DIM + i] = avg.conj();
        }
    }
}

/// Propagates any Hermitian operator (not necessarily unit trace) under the
/// master equation. The generator is linear, so this is how channel matrix
/// elements are obtained.
pub fn integrate_operator(
    op: &ComplexMatrix,
    t_span: (f64, f64),
    ctx: &LindbladContext,
    tol: Tolerances,
) -> Result<ComplexMatrix, DynamicsError> {
    if op.shape() != (DIM, DIM) || op.hermitian_deviation() > HERMITICITY_TOL {
        return Err(DynamicsError::InvalidState(
            "operator must be a Hermitian 9x9 matrix".into(),
        ));
    }
    check_span(t_span, ctx.total_duration())?;
    let ctl = step_control(&ctx.params, tol);
    let frame = &ctx.frame;
    let mut y = op.hermitian_part().as_slice().to_vec();
    frame.rotate_op(t_span.0, true, &mut y);
    let mut ws = Workspace::new();
    let mut lab = vec![ZERO; DIM * DIM];
    for (seg, a, b) in ctx.segment_windows(t_span.0, t_span.1) {
        dopri::integrate(
            |t, rho_i, out| {
                let fields = ctx.fields_in(seg, t);
                lab.copy_from_slice(rho_i);
                frame.rotate_op(t, false, &mut lab);
                rhs_into(ctx, &fields, false, &mut ws, &lab, out);
                frame.rotate_op(t, true, out);
            },
            symmetrize,
            a,
            b,
            &mut y,
            ctl,
        )?;
    }
    frame.rotate_op(t_span.1, false, &mut y);
    Ok(ComplexMatrix::from_row_major(DIM, DIM, y))
}

/// Integrates the master equation from `rho0` over `t_span` (μs).
pub fn integrate(
    rho0: &DensityMatrix,
    t_span: (f64, f64),
    params: &SystemParams,
    schedule: &SegmentSchedule,
    coeffs: &PchCoefficients,
    tol: Tolerances,
) -> Result<DensityMatrix, DynamicsError> {
    params.validate()?;
    let ctx = LindbladContext::new(params, schedule, coeffs);
    integrate_with(rho0, t_span, &ctx, tol)
}

/// [`integrate`] with a prebuilt context.
pub fn integrate_with(
    rho0: &DensityMatrix,
    t_span: (f64, f64),
    ctx: &LindbladContext,
    tol: Tolerances,
) -> Result<DensityMatrix, DynamicsError> {
    let out = integrate_operator(rho0.matrix(), t_span, ctx, tol)?;
    Ok(DensityMatrix::from_unchecked(out))
}

/// Schrödinger propagation; only valid when every dissipation rate is zero.
pub fn propagate_pure(
    psi0: &StateVector,
    t_span: (f64, f64),
    params: &SystemParams,
    schedule: &SegmentSchedule,
    coeffs: &PchCoefficients,
    tol: Tolerances,
) -> Result<StateVector, DynamicsError> {
    if params.is_dissipative() {
        return Err(DynamicsError::DissipationPresent);
    }
    params.validate()?;
    if psi0.dim() != DIM {
        return Err(DynamicsError::InvalidState(format!(
            "state has dimension {}, expected {DIM}",
            psi0.dim()
        )));
    }
    let fields = FieldEvaluator::new(schedule, coeffs);
    check_span(t_span, fields.total_duration())?;
    let ctx = LindbladContext {
        params: params.clone(),
        fields,
        driven: true,
        jumps: Vec::new(),
        anti: ComplexMatrix::zeros(DIM, DIM),
        frame: Frame {
            energies: static_energies(params),
        },
    };
    let frame = &ctx.frame;
    let ctl = step_control(params, tol);
    let mut y = psi0.as_slice().to_vec();
    frame.rotate_vec(t_span.0, true, &mut y);
    let mut h = ComplexMatrix::zeros(DIM, DIM);
    let mut psi = [ZERO; DIM];
    for (seg, a, b) in ctx.segment_windows(t_span.0, t_span.1) {
        dopri::integrate(
            |t, psi_i, out| {
                let f = ctx.fields.in_segment(seg, t);
                fill_drive(&mut h, &f, &ctx.params);
                psi.copy_from_slice(psi_i);
                frame.rotate_vec(t, false, &mut psi);
                let hs = h.as_slice();
                for i in 0..DIM {
                    let mut acc = ZERO;
                    for j in 0..DIM {
                        let hij = hs[i * DIM + j];
                        if hij.re != 0.0 || hij.im != 0.0 {
                            acc += hij * psi[j];
                        }
                    }
                    out[i] = C64::new(acc.im, -acc.re);
                }
                frame.rotate_vec(t, true, out);
            },
            |_| {},
            a,
            b,
            &mut y,
            ctl,
        )?;
    }
    frame.rotate_vec(t_span.1, false, &mut y);
    Ok(StateVector::new(y))
}

/// Numerical propagator over `t_span`: column j is the evolved basis state j.
pub fn propagator(
    t_span: (f64, f64),
    params: &SystemParams,
    schedule: &SegmentSchedule,
    coeffs: &PchCoefficients,
    tol: Tolerances,
) -> Result<ComplexMatrix, DynamicsError> {
    let mut u = ComplexMatrix::zeros(DIM, DIM);
    for j in 0..DIM {
        let col = propagate_pure(&StateVector::basis(DIM, j), t_span, params, schedule, coeffs, tol)?;
        for i in 0..DIM {
            u[(i, j)] = col[i];
        }
    }
    Ok(u)
}
