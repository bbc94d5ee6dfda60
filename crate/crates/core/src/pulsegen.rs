//! Parametric cosine-harmonic (PCH) drive envelopes and segment phase schedules.
//!
//! Time is in microseconds and envelopes are angular frequencies in rad/μs.
//! Every envelope integrates to π/2 over one segment regardless of the
//! harmonic weights; the weights only reshape the pulse.

use std::f64::consts::{PI, TAU as TWO_PI};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Harmonics per block (q = 2 gives k = 1..4).
pub const HARMONICS: usize = 4;

/// Residual magnitude above which a block is flagged invalid.
pub const RESIDUAL_TOL: f64 = 0.01;

/// Default segment duration, μs.
pub const DEFAULT_TAU_US: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PulseError {
    #[error("local time {t} outside segment [0, {tau}]")]
    OutOfSegment { t: f64, tau: f64 },
    #[error("time {t} outside schedule [0, {total}]")]
    OutOfRange { t: f64, total: f64 },
    #[error("expected 2 coefficient blocks, got {0}")]
    BlockCount(usize),
    #[error("segment duration must be positive, got {0}")]
    BadDuration(f64),
    #[error("sample count must be at least {min}, got {got}")]
    TooFewSamples { min: usize, got: usize },
}

/// Harmonic weights (a_1, a_2, a_3, a_4) for one segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoefficientBlock(pub [f64; HARMONICS]);

impl CoefficientBlock {
    pub const ZERO: Self = Self([0.0; HARMONICS]);

    pub fn new(a1: f64, a2: f64, a3: f64, a4: f64) -> Self {
        Self([a1, a2, a3, a4])
    }

    /// a_1 + 3 a_3; zero when both segment endpoints can vanish.
    pub fn odd_residual(&self) -> f64 {
        let a = &self.0;
        a[0] + 3.0 * a[2]
    }

    /// 2 a_2 + 4 a_4 + 1/2
    pub fn even_residual(&self) -> f64 {
        let a = &self.0;
        2.0 * a[1] + 4.0 * a[3] + 0.5
    }

    pub fn is_valid(&self) -> bool {
        self.odd_residual().abs() <= RESIDUAL_TOL && self.even_residual().abs() <= RESIDUAL_TOL
    }

    /// The same waveform observed half a period (τ) later: cos(kπ(t+τ)/τ) =
    /// (−1)^k cos(kπt/τ), so odd harmonics change sign.
    pub fn shifted(&self) -> Self {
        let mut out = *self;
        for (k, a) in out.0.iter_mut().enumerate() {
            if (k + 1) % 2 == 1 {
                *a = -*a;
            }
        }
        out
    }

    /// Envelope value without range checking.
    pub(crate) fn eval(&self, tau: f64, t: f64) -> f64 {
        let mut sum = PI / (2.0 * tau);
        for (k, &a) in self.0.iter().enumerate() {
            let kf = (k + 1) as f64;
            sum += a * (kf * PI / tau) * (kf * PI * t / tau).cos();
        }
        sum
    }

    /// (Ω(0), Ω(τ)) in rad/μs.
    pub fn endpoint_values(&self, tau: f64) -> (f64, f64) {
        (self.eval(tau, 0.0), self.eval(tau, tau))
    }

    /// Closed-form ∫₀^τ Ω dt. Every cosine term integrates to zero over whole
    /// half-periods, leaving the baseline.
    pub fn pulse_area(&self, _tau: f64) -> f64 {
        let mut area = PI / 2.0;
        for (k, &a) in self.0.iter().enumerate() {
            let kf = (k + 1) as f64;
            area += a * (kf * PI).sin();
        }
        area
    }
}

/// π/(2τ) + Σ_k a_k (kπ/τ) cos(kπ t_local/τ), in rad/μs.
pub fn pch_envelope(block: &CoefficientBlock, tau: f64, t_local: f64) -> Result<f64, PulseError> {
    if !(0.0..=tau).contains(&t_local) {
        return Err(PulseError::OutOfSegment { t: t_local, tau });
    }
    Ok(block.eval(tau, t_local))
}

/// Gate-segment coefficient blocks. Compensation segments reuse them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PchCoefficients {
    blocks: Vec<CoefficientBlock>,
}

impl PchCoefficients {
    pub fn new(first: CoefficientBlock, second: CoefficientBlock) -> Self {
        Self {
            blocks: vec![first, second],
        }
    }

    pub fn from_blocks(blocks: Vec<CoefficientBlock>) -> Result<Self, PulseError> {
        if blocks.len() != 2 {
            return Err(PulseError::BlockCount(blocks.len()));
        }
        Ok(Self { blocks })
    }

    /// Eight weights a_1..a_8 as printed in coefficient tables.
    pub fn from_flat(a: [f64; 8]) -> Self {
        Self::new(
            CoefficientBlock::new(a[0], a[1], a[2], a[3]),
            CoefficientBlock::new(a[4], a[5], a[6], a[7]),
        )
    }

    pub fn zeros() -> Self {
        Self::new(CoefficientBlock::ZERO, CoefficientBlock::ZERO)
    }

    pub fn blocks(&self) -> &[CoefficientBlock] {
        &self.blocks
    }

    pub fn block(&self, index: usize) -> &CoefficientBlock {
        &self.blocks[index]
    }

    pub fn flat(&self) -> [f64; 8] {
        let mut out = [0.0; 8];
        out[..4].copy_from_slice(&self.blocks[0].0);
        out[4..].copy_from_slice(&self.blocks[1].0);
        out
    }

    /// Same weights scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let scale = |b: &CoefficientBlock| CoefficientBlock(b.0.map(|a| a * factor));
        Self::new(scale(&self.blocks[0]), scale(&self.blocks[1]))
    }
}

/// Controlled rotation: angle γ about n̂(θ, φ) on the target when the control is |1⟩.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSpec {
    pub gamma: f64,
    pub phi: f64,
    pub theta: f64,
    pub name: Option<String>,
}

impl GateSpec {
    /// Angles are wrapped into [0, 2π).
    pub fn new(gamma: f64, phi: f64, theta: f64) -> Self {
        Self {
            gamma: wrap_angle(gamma),
            phi: wrap_angle(phi),
            theta: wrap_angle(theta),
            name: None,
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn cnot() -> Self {
        Self::new(PI, 0.0, PI / 2.0).named("CNOT")
    }

    pub fn ch() -> Self {
        Self::new(PI, 0.0, PI / 4.0).named("CH")
    }

    pub fn cz() -> Self {
        Self::new(PI, 0.0, 0.0).named("CZ")
    }

    pub fn cs() -> Self {
        Self::new(PI / 2.0, 0.0, 0.0).named("CS")
    }

    pub fn ct() -> Self {
        Self::new(PI / 4.0, 0.0, 0.0).named("CT")
    }

    /// Case-insensitive preset lookup.
    pub fn by_name(name: &str) -> Option<Self> {
        match name.to_ascii_uppercase().as_str() {
            "CNOT" | "CX" => Some(Self::cnot()),
            "CH" => Some(Self::ch()),
            "CZ" => Some(Self::cz()),
            "CS" => Some(Self::cs()),
            "CT" => Some(Self::ct()),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| format!("gamma={:.6},phi={:.6},theta={:.6}", self.gamma, self.phi, self.theta))
    }
}

pub const PRESET_GATES: [&str; 5] = ["CNOT", "CH", "CZ", "CS", "CT"];

pub fn wrap_angle(x: f64) -> f64 {
    let w = x.rem_euclid(TWO_PI);
    // rem_euclid can round up to exactly 2π for tiny negative inputs.
    if w >= TWO_PI {
        0.0
    } else {
        w
    }
}

/// Where a segment's envelope clock starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EnvelopeClock {
    /// One clock per segment pair: the second segment of each pair sees the
    /// envelope formula continued past τ.
    #[default]
    Pair,
    /// Every segment restarts its clock at zero.
    Segment,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub duration: f64,
    pub theta: f64,
    pub phi_c: f64,
    pub phi_0t: f64,
    pub phi_1t: f64,
    /// Index into [`PchCoefficients::blocks`].
    pub block: usize,
    /// Envelope evaluated at local time + τ (odd harmonics flipped).
    pub shifted_clock: bool,
}

impl Segment {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    /// φ = φ_1t − φ_0t, wrapped.
    pub fn relative_phase(&self) -> f64 {
        wrap_angle(self.phi_1t - self.phi_0t)
    }

    fn effective_block(&self, coeffs: &PchCoefficients) -> CoefficientBlock {
        let block = *coeffs.block(self.block);
        if self.shifted_clock {
            block.shifted()
        } else {
            block
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSchedule {
    pub tau: f64,
    pub segments: Vec<Segment>,
}

impl SegmentSchedule {
    pub fn total_duration(&self) -> f64 {
        self.segments.last().map(Segment::end).unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Segment active at `t`. Boundaries belong to the later segment, except
    /// the final endpoint.
    pub fn locate(&self, t: f64) -> Result<(usize, &Segment), PulseError> {
        let total = self.total_duration();
        if !(0.0..=total).contains(&t) || self.segments.is_empty() {
            return Err(PulseError::OutOfRange { t, total });
        }
        let idx = self
            .segments
            .iter()
            .position(|s| t < s.end())
            .unwrap_or(self.segments.len() - 1);
        Ok((idx, &self.segments[idx]))
    }

    /// Segment boundary times, including 0 and the total duration.
    pub fn boundaries(&self) -> Vec<f64> {
        let mut out = vec![0.0];
        out.extend(self.segments.iter().map(Segment::end));
        out
    }
}

/// Gate segments with phases (φ_c, φ_0t, φ_1t) = (0, 0, φ) then
/// (π, π+γ, φ+π+γ). Compensation appends the same pair with θ' = π − θ,
/// φ' = φ + π and γ = 0.
pub fn build_schedule(gate: &GateSpec, tau: f64, with_compensation: bool) -> SegmentSchedule {
    build_schedule_with_clock(gate, tau, with_compensation, EnvelopeClock::Pair)
}

pub fn build_schedule_with_clock(
    gate: &GateSpec,
    tau: f64,
    with_compensation: bool,
    clock: EnvelopeClock,
) -> SegmentSchedule {
    let shifted = clock == EnvelopeClock::Pair;
    let pair = |start: f64, theta: f64, phi: f64, gamma: f64| {
        [
            Segment {
                start,
                duration: tau,
                theta,
                phi_c: 0.0,
                phi_0t: 0.0,
                phi_1t: wrap_angle(phi),
                block: 0,
                shifted_clock: false,
            },
            Segment {
                start: start + tau,
                duration: tau,
                theta,
                phi_c: PI,
                phi_0t: wrap_angle(PI + gamma),
                phi_1t: wrap_angle(phi + PI + gamma),
                block: 1,
                shifted_clock: shifted,
            },
        ]
    };
    let mut segments = pair(0.0, gate.theta, gate.phi, gate.gamma).to_vec();
    if with_compensation {
        segments.extend(pair(2.0 * tau, wrap_angle(PI - gate.theta), gate.phi + PI, 0.0));
    }
    SegmentSchedule { tau, segments }
}

/// Drive fields at one instant, rad/μs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fields {
    /// Ω_t(t), the target envelope (real, may be negative).
    pub envelope: f64,
    pub omega_c: C64,
    pub omega_0t: C64,
    pub omega_1t: C64,
}

impl Fields {
    pub const ZERO: Self = Self {
        envelope: 0.0,
        omega_c: C64::new(0.0, 0.0),
        omega_0t: C64::new(0.0, 0.0),
        omega_1t: C64::new(0.0, 0.0),
    };
}

/// Evaluates the three drive fields at absolute time `t`.
///
/// Ω_c = √3 Ω_t e^{iφ_c}, Ω_0t = Ω_t sin(θ/2) e^{iφ_0t}, Ω_1t = −Ω_t cos(θ/2) e^{iφ_1t}.
pub fn fields_at(schedule: &SegmentSchedule, coeffs: &PchCoefficients, t: f64) -> Result<Fields, PulseError> {
    let (_, seg) = schedule.locate(t)?;
    let t_local = (t - seg.start).clamp(0.0, seg.duration);
    let envelope = pch_envelope(&seg.effective_block(coeffs), seg.duration, t_local)?;
    Ok(segment_fields(seg, envelope))
}

pub(crate) fn segment_fields(seg: &Segment, envelope: f64) -> Fields {
    let half = seg.theta / 2.0;
    Fields {
        envelope,
        omega_c: C64::from_polar(3f64.sqrt() * envelope, seg.phi_c),
        omega_0t: C64::from_polar(envelope * half.sin(), seg.phi_0t),
        omega_1t: C64::from_polar(-envelope * half.cos(), seg.phi_1t),
    }
}

/// Precomputed per-segment phase factors so the integrator's inner loop only
/// evaluates the envelope.
#[derive(Debug, Clone)]
pub struct FieldEvaluator {
    tau: f64,
    segments: Vec<(Segment, CoefficientBlock, [C64; 3])>,
    total: f64,
}

impl FieldEvaluator {
    pub fn new(schedule: &SegmentSchedule, coeffs: &PchCoefficients) -> Self {
        let segments = schedule
            .segments
            .iter()
            .map(|seg| {
                let half = seg.theta / 2.0;
                let factors = [
                    C64::from_polar(3f64.sqrt(), seg.phi_c),
                    C64::from_polar(half.sin(), seg.phi_0t),
                    C64::from_polar(-half.cos(), seg.phi_1t),
                ];
                (*seg, seg.effective_block(coeffs), factors)
            })
            .collect();
        Self {
            tau: schedule.tau,
            segments,
            total: schedule.total_duration(),
        }
    }

    pub fn total_duration(&self) -> f64 {
        self.total
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Fields at `t`, clamped into the schedule.
    #[inline]
    pub fn at(&self, t: f64) -> Fields {
        let idx = self
            .segments
            .iter()
            .position(|(s, _, _)| t < s.end())
            .unwrap_or(self.segments.len() - 1);
        self.in_segment(idx, t)
    }

    /// Fields at `t` using segment `idx` (t is clamped into it).
    #[inline]
    pub fn in_segment(&self, idx: usize, t: f64) -> Fields {
        let (seg, block, f) = &self.segments[idx];
        let t_local = (t - seg.start).clamp(0.0, seg.duration);
        let envelope = block.eval(seg.duration, t_local);
        Fields {
            envelope,
            omega_c: f[0] * envelope,
            omega_0t: f[1] * envelope,
            omega_1t: f[2] * envelope,
        }
    }
}

/// Per-block constraint residuals and endpoint values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockReport {
    pub index: usize,
    pub odd_residual: f64,
    pub even_residual: f64,
    /// Ω(0), Ω(τ) in rad/μs on the segment's own clock.
    pub start_value: f64,
    pub end_value: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub blocks: Vec<BlockReport>,
    /// ∫Ω_t dt per gate segment, radians.
    pub segment_areas: Vec<f64>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.blocks.iter().all(|b| b.valid)
    }

    pub fn flagged(&self) -> impl Iterator<Item = &BlockReport> {
        self.blocks.iter().filter(|b| !b.valid)
    }
}

/// Reports endpoint-constraint residuals and pulse areas. Never fails.
pub fn validate_coefficients(coeffs: &PchCoefficients, tau: f64) -> ValidationReport {
    let blocks = coeffs
        .blocks()
        .iter()
        .enumerate()
        .map(|(index, b)| {
            let (start_value, end_value) = b.endpoint_values(tau);
            BlockReport {
                index,
                odd_residual: b.odd_residual(),
                even_residual: b.even_residual(),
                start_value,
                end_value,
                valid: b.is_valid(),
            }
        })
        .collect();
    let segment_areas = coeffs.blocks().iter().map(|b| b.pulse_area(tau)).collect();
    ValidationReport { blocks, segment_areas }
}

/// Minimum sample count accepted by [`max_field_amplitude`].
pub const MIN_AMPLITUDE_SAMPLES: usize = 256;

/// Strongest physical field max_t √3|Ω_t(t)|/(2π), in MHz.
///
/// Samples `samples` uniformly spaced points over each segment (endpoints
/// included) and refines the best one with a parabolic step.
pub fn max_field_amplitude(
    schedule: &SegmentSchedule,
    coeffs: &PchCoefficients,
    samples: usize,
) -> Result<f64, PulseError> {
    if samples < MIN_AMPLITUDE_SAMPLES {
        return Err(PulseError::TooFewSamples {
            min: MIN_AMPLITUDE_SAMPLES,
            got: samples,
        });
    }
    let mut best = 0.0f64;
    for seg in &schedule.segments {
        let block = seg.effective_block(coeffs);
        let h = seg.duration / (samples - 1) as f64;
        let value = |t: f64| block.eval(seg.duration, t.clamp(0.0, seg.duration)).abs();
        let mut arg = 0usize;
        let mut seg_best = 0.0f64;
        for i in 0..samples {
            let v = value(i as f64 * h);
            if v > seg_best {
                seg_best = v;
                arg = i;
            }
        }
        if arg > 0 && arg + 1 < samples {
            let (l, c, r) = (value((arg - 1) as f64 * h), seg_best, value((arg + 1) as f64 * h));
            let denom = l - 2.0 * c + r;
            if denom < 0.0 {
                let offset = 0.5 * (l - r) / denom;
                seg_best = seg_best.max(value((arg as f64 + offset) * h));
            }
        }
        best = best.max(seg_best);
    }
    Ok(3f64.sqrt() * best / TWO_PI)
}
