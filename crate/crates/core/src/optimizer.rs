//! Constrained PCH genome and an NSGA-II search over (near-resonant
//! infidelity, far-detuned excitation).

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{SystemParams, Tolerances};
use crate::gatelab::{self, GateError, GateSetup, LabeledState};
use crate::pulsegen::{CoefficientBlock, EnvelopeClock, GateSpec, PchCoefficients};

pub const GENE_BOUND: f64 = 0.6;
pub const GENES: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("gene {index} = {value} outside [-{GENE_BOUND}, {GENE_BOUND}]")]
    OutOfBounds { index: usize, value: f64 },
    #[error("expected {expected} genes, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("pop must be ≥ 8 and even (got {0})")]
    BadPopulation(usize),
    #[error("generations must be ≥ 1")]
    NoGenerations,
    #[error("no feasible member satisfies the selection policy")]
    EmptyFeasibleSet,
    #[error("front is empty")]
    EmptyFront,
    #[error(transparent)]
    Gate(#[from] GateError),
}

/// (a3, a4) of block 1 followed by (a3, a4) of block 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Genome {
    pub genes: Vec<f64>,
}

impl Genome {
    pub fn new(genes: Vec<f64>) -> Self {
        Self { genes }
    }

    /// The reference coefficient set a1 = 0.45, a3 = −0.15, a4 = a8 = −0.125.
    pub fn baseline() -> Self {
        Self::new(vec![-0.15, -0.125, 0.0, -0.125])
    }

    /// Extracts (a3, a4) per block; a1 and a2 are implied.
    pub fn encode(coeffs: &PchCoefficients) -> Self {
        let b = coeffs.blocks();
        Self::new(vec![b[0].0[2], b[0].0[3], b[1].0[2], b[1].0[3]])
    }

    /// Builds both blocks with a1 = −3·a3 and a2 = −1/4 − 2·a4, the unique
    /// completion with vanishing endpoint residuals.
    pub fn decode(&self) -> Result<PchCoefficients, OptimError> {
        if self.genes.len() != GENES {
            return Err(OptimError::WrongLength {
                expected: GENES,
                got: self.genes.len(),
            });
        }
        for (index, &value) in self.genes.iter().enumerate() {
            if !(value.abs() <= GENE_BOUND) {
                return Err(OptimError::OutOfBounds { index, value });
            }
        }
        // `+ 0.0` turns −0.0 into 0.0 so archives never print "-0".
        let block = |a3: f64, a4: f64| CoefficientBlock::new(-3.0 * a3 + 0.0, -0.25 - 2.0 * a4, a3, a4);
        Ok(PchCoefficients::new(
            block(self.genes[0], self.genes[1]),
            block(self.genes[2], self.genes[3]),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objectives {
    pub f1: f64,
    pub f2: f64,
}

impl Objectives {
    pub const PENALTY: Self = Self { f1: 1.0, f2: 1.0 };

    /// Pareto dominance for minimization.
    pub fn dominates(&self, other: &Self) -> bool {
        self.f1 <= other.f1 && self.f2 <= other.f2 && (self.f1 < other.f1 || self.f2 < other.f2)
    }
}

/// Violation assigned when a candidate cannot be simulated at all; larger than
/// any amplitude excess a bounded genome can produce.
pub const FAILURE_VIOLATION: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub objectives: Objectives,
    pub feasible: bool,
    /// How far an infeasible candidate is from feasibility (MHz above the
    /// amplitude cap, or [`FAILURE_VIOLATION`]); zero when feasible.
    #[serde(default)]
    pub violation: f64,
}

impl Evaluation {
    pub fn feasible(objectives: Objectives) -> Self {
        Self {
            objectives,
            feasible: true,
            violation: 0.0,
        }
    }

    /// Penalty objectives (1, 1) with the given violation.
    pub fn infeasible(violation: f64) -> Self {
        Self {
            objectives: Objectives::PENALTY,
            feasible: false,
            violation,
        }
    }

    /// Constrained dominance: feasible beats infeasible, the smaller
    /// violation wins between infeasible candidates, otherwise Pareto.
    pub fn dominates(&self, other: &Self) -> bool {
        match (self.feasible, other.feasible) {
            (true, false) => true,
            (false, true) => false,
            (false, false) => self.violation < other.violation,
            (true, true) => self.objectives.dominates(&other.objectives),
        }
    }
}

/// Grids and inputs used inside the search loop.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub near_grid_khz: Vec<f64>,
    pub far_grid_mhz: Vec<f64>,
    /// Control-|0⟩ branch input, weighted by `weight_branch0`.
    pub branch0: LabeledState,
    /// Control-|1⟩ branch input.
    pub branch1: LabeledState,
    pub weight_branch0: f64,
    pub tol: Tolerances,
    pub compensation: bool,
    pub clock: EnvelopeClock,
}

pub const OPT_NEAR_POINTS: usize = 11;
pub const OPT_FAR_POINTS: usize = 5;

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            near_grid_khz: gatelab::uniform_grid(-gatelab::NEAR_RANGE_KHZ, gatelab::NEAR_RANGE_KHZ, OPT_NEAR_POINTS),
            far_grid_mhz: gatelab::uniform_grid(gatelab::FAR_THRESHOLD_MHZ, gatelab::FAR_RANGE_MHZ.1, OPT_FAR_POINTS),
            branch0: LabeledState::basis(0, 1),
            branch1: LabeledState::basis(1, 1),
            weight_branch0: 0.6,
            tol: Tolerances::default(),
            compensation: true,
            clock: EnvelopeClock::Pair,
        }
    }
}

/// Scores one coefficient set. Amplitude-cap violations and integration
/// failures both yield the (1, 1) penalty with `feasible = false`; the
/// violation records how far over the cap the pulse went.
pub fn evaluate_coefficients(
    coeffs: &PchCoefficients,
    gate: &GateSpec,
    params: &SystemParams,
    cfg: &EvalConfig,
) -> Evaluation {
    let mut setup = GateSetup::new(gate.clone(), params.clone(), coeffs.clone());
    setup.tol = cfg.tol;
    setup.compensation = cfg.compensation;
    setup.clock = cfg.clock;
    match setup.max_field_mhz() {
        Ok(a) if a <= params.amplitude_cap_mhz => {}
        Ok(a) => return Evaluation::infeasible(a - params.amplitude_cap_mhz),
        Err(_) => return Evaluation::infeasible(FAILURE_VIOLATION),
    }
    let inputs = [cfg.branch0.clone(), cfg.branch1.clone()];
    let near = gatelab::detuning_sweep(&setup, &inputs, &cfg.near_grid_khz);
    let far = gatelab::offresonant_sweep(&setup, &inputs, &cfg.far_grid_mhz);
    let (Ok(near), Ok(far)) = (near, far) else {
        return Evaluation::infeasible(FAILURE_VIOLATION);
    };
    let mean = |label: &str| {
        let v = near.values(label);
        v.iter().sum::<f64>() / v.len() as f64
    };
    let w = cfg.weight_branch0;
    let f1 = 1.0 - (w * mean(&cfg.branch0.label) + (1.0 - w) * mean(&cfg.branch1.label));
    let f2 = far.points.iter().map(|p| p.value).fold(0.0, f64::max);
    Evaluation::feasible(Objectives {
        f1: f1.clamp(0.0, 1.0),
        f2: f2.clamp(0.0, 1.0),
    })
}

pub fn evaluate(
    genome: &Genome,
    gate: &GateSpec,
    params: &SystemParams,
    cfg: &EvalConfig,
) -> Result<Evaluation, OptimError> {
    Ok(evaluate_coefficients(&genome.decode()?, gate, params, cfg))
}

/// Anything NSGA-II can minimize.
pub trait Problem: Sync {
    fn dimension(&self) -> usize;
    fn bounds(&self) -> (f64, f64);
    fn evaluate(&self, genes: &[f64]) -> Evaluation;
}

/// The pulse-shaping problem for one gate.
pub struct PulseProblem<'a> {
    pub gate: &'a GateSpec,
    pub params: &'a SystemParams,
    pub cfg: &'a EvalConfig,
}

impl Problem for PulseProblem<'_> {
    fn dimension(&self) -> usize {
        GENES
    }

    fn bounds(&self) -> (f64, f64) {
        (-GENE_BOUND, GENE_BOUND)
    }

    fn evaluate(&self, genes: &[f64]) -> Evaluation {
        match Genome::new(genes.to_vec()).decode() {
            Ok(c) => evaluate_coefficients(&c, self.gate, self.params, self.cfg),
            Err(_) => Evaluation::infeasible(FAILURE_VIOLATION),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nsga2Settings {
    pub pop: usize,
    pub generations: usize,
    pub seed: u64,
    pub crossover_eta: f64,
    pub crossover_rate: f64,
    pub mutation_eta: f64,
    /// Per-gene mutation probability.
    pub mutation_rate: f64,
}

impl Nsga2Settings {
    pub fn new(pop: usize, generations: usize, seed: u64) -> Self {
        Self {
            pop,
            generations,
            seed,
            crossover_eta: 15.0,
            crossover_rate: 0.9,
            mutation_eta: 20.0,
            mutation_rate: 0.25,
        }
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        if self.pop < 8 || !self.pop.is_multiple_of(2) {
            return Err(OptimError::BadPopulation(self.pop));
        }
        if self.generations == 0 {
            return Err(OptimError::NoGenerations);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub genes: Vec<f64>,
    pub evaluation: Evaluation,
    /// Generation in which this individual was created.
    pub born: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParetoFront {
    pub members: Vec<Member>,
    pub generation: usize,
    pub seed: u64,
    /// Set when no individual in the final population was feasible.
    pub all_infeasible: bool,
    /// Hypervolume of the elite archive after each generation (index 0 is
    /// the initial population); never decreases.
    pub hypervolume_history: Vec<f64>,
}

/// Progress report handed to the observer after each generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationReport {
    pub generation: usize,
    pub hypervolume: f64,
    pub front_size: usize,
    pub feasible: usize,
}

/// Fast non-dominated sort; returns fronts as index lists.
pub fn non_dominated_sort(evals: &[Evaluation]) -> Vec<Vec<usize>> {
    let n = evals.len();
    let mut dominated_by_count = vec![0usize; n];
    let mut dominates: Vec<Vec<usize>> = vec![Vec::new(); n];
    for p in 0..n {
        for q in (p + 1)..n {
            if evals[p].dominates(&evals[q]) {
                dominates[p].push(q);
                dominated_by_count[q] += 1;
            } else if evals[q].dominates(&evals[p]) {
                dominates[q].push(p);
                dominated_by_count[p] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &p in &current {
            for &q in &dominates[p] {
                dominated_by_count[q] -= 1;
                if dominated_by_count[q] == 0 {
                    next.push(q);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of one front (same order as `front`).
pub fn crowding_distance(evals: &[Evaluation], front: &[usize]) -> Vec<f64> {
    let m = front.len();
    let mut dist = vec![0.0; m];
    if m <= 2 {
        return vec![f64::INFINITY; m];
    }
    let getters: [fn(&Objectives) -> f64; 2] = [|o| o.f1, |o| o.f2];
    for get in getters {
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            get(&evals[front[a]].objectives)
                .total_cmp(&get(&evals[front[b]].objectives))
                .then(a.cmp(&b))
        });
        let lo = get(&evals[front[order[0]]].objectives);
        let hi = get(&evals[front[order[m - 1]]].objectives);
        dist[order[0]] = f64::INFINITY;
        dist[order[m - 1]] = f64::INFINITY;
        let span = hi - lo;
        if span <= 0.0 {
            continue;
        }
        for k in 1..m - 1 {
            let prev = get(&evals[front[order[k - 1]]].objectives);
            let next = get(&evals[front[order[k + 1]]].objectives);
            dist[order[k]] += (next - prev) / span;
        }
    }
    dist
}

/// Area dominated by `points` inside the box bounded by the reference (1, 1).
pub fn hypervolume(points: &[Objectives]) -> f64 {
    let mut pts: Vec<Objectives> = points.iter().copied().filter(|p| p.f1 < 1.0 && p.f2 < 1.0).collect();
    pts.sort_by(|a, b| a.f1.total_cmp(&b.f1).then(a.f2.total_cmp(&b.f2)));
    // Horizontal strips: each point that lowers the running f2 adds the strip
    // between the previous and its own f2 level.
    let mut area = 0.0;
    let mut prev_f2 = 1.0;
    for p in &pts {
        if p.f2 < prev_f2 {
            area += (1.0 - p.f1) * (prev_f2 - p.f2);
            prev_f2 = p.f2;
        }
    }
    area
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Simulated binary crossover on one gene pair (bounded variant).
fn sbx(rng: &mut ChaCha8Rng, x1: f64, x2: f64, lo: f64, hi: f64, eta: f64) -> (f64, f64) {
    if (x1 - x2).abs() < 1e-14 {
        return (x1, x2);
    }
    let (y1, y2) = if x1 < x2 { (x1, x2) } else { (x2, x1) };
    let u: f64 = rng.gen();
    let spread = |beta: f64| {
        let alpha = 2.0 - beta.powf(-(eta + 1.0));
        if u <= 1.0 / alpha {
            (u * alpha).powf(1.0 / (eta + 1.0))
        } else {
            (1.0 / (2.0 - u * alpha)).powf(1.0 / (eta + 1.0))
        }
    };
    let beta_lo = 1.0 + 2.0 * (y1 - lo) / (y2 - y1);
    let beta_hi = 1.0 + 2.0 * (hi - y2) / (y2 - y1);
    let c1 = 0.5 * ((y1 + y2) - spread(beta_lo) * (y2 - y1));
    let c2 = 0.5 * ((y1 + y2) + spread(beta_hi) * (y2 - y1));
    let (c1, c2) = (c1.clamp(lo, hi), c2.clamp(lo, hi));
    if rng.gen::<bool>() {
        (c2, c1)
    } else {
        (c1, c2)
    }
}

/// Bounded polynomial mutation of one gene.
fn poly_mutate(rng: &mut ChaCha8Rng, x: f64, lo: f64, hi: f64, eta: f64) -> f64 {
    let span = hi - lo;
    let d1 = (x - lo) / span;
    let d2 = (hi - x) / span;
    let u: f64 = rng.gen();
    let pow = 1.0 / (eta + 1.0);
    let dq = if u < 0.5 {
        let v = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1).powf(eta + 1.0);
        v.powf(pow) - 1.0
    } else {
        let v = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2).powf(eta + 1.0);
        1.0 - v.powf(pow)
    };
    (x + dq * span).clamp(lo, hi)
}

struct Individual {
    genes: Vec<f64>,
    eval: Evaluation,
    born: usize,
}

/// Ranks and crowding for a population (lower rank, then larger crowding).
fn rank_and_crowd(evals: &[Evaluation]) -> (Vec<usize>, Vec<f64>) {
    let fronts = non_dominated_sort(evals);
    let mut rank = vec![0; evals.len()];
    let mut crowd = vec![0.0; evals.len()];
    for (r, front) in fronts.iter().enumerate() {
        let d = crowding_distance(evals, front);
        for (k, &i) in front.iter().enumerate() {
            rank[i] = r;
            crowd[i] = d[k];
        }
    }
    (rank, crowd)
}

fn better(i: usize, j: usize, rank: &[usize], crowd: &[f64]) -> usize {
    match rank[i].cmp(&rank[j]) {
        Ordering::Less => i,
        Ordering::Greater => j,
        Ordering::Equal => {
            if crowd[i] > crowd[j] || (crowd[i] == crowd[j] && i <= j) {
                i
            } else {
                j
            }
        }
    }
}

/// Non-dominated set of everything evaluated so far.
#[derive(Default)]
struct EliteArchive {
    members: Vec<Member>,
}

impl EliteArchive {
    fn offer(&mut self, ind: &Individual) {
        if self
            .members
            .iter()
            .any(|m| m.genes == ind.genes || m.evaluation.dominates(&ind.eval) || m.evaluation == ind.eval)
        {
            return;
        }
        self.members.retain(|m| !ind.eval.dominates(&m.evaluation));
        self.members.push(Member {
            genes: ind.genes.clone(),
            evaluation: ind.eval.clone(),
            born: ind.born,
        });
    }

    fn hypervolume(&self) -> f64 {
        let pts: Vec<Objectives> = self
            .members
            .iter()
            .filter(|m| m.evaluation.feasible)
            .map(|m| m.evaluation.objectives)
            .collect();
        hypervolume(&pts)
    }
}

/// Indices whose genes repeat an earlier individual's.
fn duplicates(pop: &[Individual]) -> Vec<bool> {
    let mut seen = std::collections::HashSet::new();
    pop.iter()
        .map(|p| !seen.insert(p.genes.iter().map(|x| x.to_bits()).collect::<Vec<u64>>()))
        .collect()
}

/// Elitist NSGA-II. Every random decision for offspring pair `k` of
/// generation `g` comes from its own ChaCha stream, so the result depends only
/// on the seed, not on how evaluations are scheduled across threads.
///
/// Besides the population, an archive keeps every non-dominated individual
/// ever evaluated; it is what gets returned, and its hypervolume is what the
/// history records (so the history never decreases). Exact clones are
/// demoted during survival to keep population slots diverse.
pub fn nsga2_with<P: Problem>(
    problem: &P,
    settings: Nsga2Settings,
    mut observer: impl FnMut(&GenerationReport),
) -> Result<ParetoFront, OptimError> {
    settings.validate()?;
    let n = settings.pop;
    let dim = problem.dimension();
    let (lo, hi) = problem.bounds();
    let pairs_per_gen = (n / 2) as u64;

    let evaluate_all = |genes: Vec<Vec<f64>>, born: usize| -> Vec<Individual> {
        genes
            .into_par_iter()
            .map(|g| {
                let eval = problem.evaluate(&g);
                Individual { genes: g, eval, born }
            })
            .collect()
    };

    let initial: Vec<Vec<f64>> = (0..n as u64)
        .map(|i| {
            let mut rng = stream_rng(settings.seed, i);
            (0..dim).map(|_| rng.gen_range(lo..=hi)).collect()
        })
        .collect();
    let mut pop = evaluate_all(initial, 0);
    let mut archive = EliteArchive::default();
    let mut history = Vec::with_capacity(settings.generations + 1);
    let mut record = |pop: &[Individual], archive: &EliteArchive, generation: usize| {
        let r = GenerationReport {
            generation,
            hypervolume: archive.hypervolume(),
            front_size: archive.members.len(),
            feasible: pop.iter().filter(|p| p.eval.feasible).count(),
        };
        history.push(r.hypervolume);
        observer(&r);
    };
    for ind in &pop {
        archive.offer(ind);
    }
    record(&pop, &archive, 0);

    for g in 1..=settings.generations {
        let evals: Vec<Evaluation> = pop.iter().map(|p| p.eval.clone()).collect();
        let (rank, crowd) = rank_and_crowd(&evals);
        let mut children: Vec<Vec<f64>> = Vec::with_capacity(n);
        for k in 0..pairs_per_gen {
            // Streams 0..n are the initial population.
            let mut rng = stream_rng(settings.seed, n as u64 + (g as u64 - 1) * pairs_per_gen + k);
            let pick = |rng: &mut ChaCha8Rng| {
                let a = rng.gen_range(0..n);
                let b = rng.gen_range(0..n);
                better(a, b, &rank, &crowd)
            };
            let p1 = pick(&mut rng);
            let p2 = pick(&mut rng);
            let mut c1 = pop[p1].genes.clone();
            let mut c2 = pop[p2].genes.clone();
            if rng.gen::<f64>() < settings.crossover_rate {
                for d in 0..dim {
                    if rng.gen::<bool>() {
                        let (a, b) = sbx(&mut rng, c1[d], c2[d], lo, hi, settings.crossover_eta);
                        c1[d] = a;
                        c2[d] = b;
                    }
                }
            }
            for c in [&mut c1, &mut c2] {
                for x in c.iter_mut() {
                    if rng.gen::<f64>() < settings.mutation_rate {
                        *x = poly_mutate(&mut rng, *x, lo, hi, settings.mutation_eta);
                    }
                }
            }
            children.push(c1);
            children.push(c2);
        }
        let offspring = evaluate_all(children, g);
        for ind in &offspring {
            archive.offer(ind);
        }
        pop.extend(offspring);

        // Environmental selection on the merged 2n population; clones go last.
        let evals: Vec<Evaluation> = pop.iter().map(|p| p.eval.clone()).collect();
        let dup = duplicates(&pop);
        let unique: Vec<usize> = (0..pop.len()).filter(|&i| !dup[i]).collect();
        let unique_evals: Vec<Evaluation> = unique.iter().map(|&i| evals[i].clone()).collect();
        let mut fronts: Vec<Vec<usize>> = non_dominated_sort(&unique_evals)
            .into_iter()
            .map(|f| f.into_iter().map(|k| unique[k]).collect())
            .collect();
        fronts.push((0..pop.len()).filter(|&i| dup[i]).collect());
        let mut keep: Vec<usize> = Vec::with_capacity(n);
        for front in fronts {
            if keep.len() + front.len() <= n {
                keep.extend(front);
            } else {
                let d = crowding_distance(&evals, &front);
                let mut order: Vec<usize> = (0..front.len()).collect();
                order.sort_by(|&a, &b| d[b].total_cmp(&d[a]).then(front[a].cmp(&front[b])));
                keep.extend(order.into_iter().take(n - keep.len()).map(|k| front[k]));
            }
            if keep.len() == n {
                break;
            }
        }
        keep.sort_unstable();
        let mut slots: Vec<Option<Individual>> = pop.into_iter().map(Some).collect();
        pop = keep.into_iter().map(|i| slots[i].take().expect("kept once")).collect();

        record(&pop, &archive, g);
    }

    let all_infeasible = !pop.iter().any(|p| p.eval.feasible);
    let mut members = archive.members;
    if !all_infeasible {
        members.retain(|m| m.evaluation.feasible);
    }
    members.sort_by(|a, b| {
        let (x, y) = (&a.evaluation.objectives, &b.evaluation.objectives);
        x.f1.total_cmp(&y.f1)
            .then(x.f2.total_cmp(&y.f2))
            .then(a.born.cmp(&b.born))
    });
    Ok(ParetoFront {
        members,
        generation: settings.generations,
        seed: settings.seed,
        all_infeasible,
        hypervolume_history: history,
    })
}

/// Optimizes the PCH coefficients of `gate`.
pub fn nsga2(
    gate: &GateSpec,
    params: &SystemParams,
    cfg: &EvalConfig,
    pop: usize,
    generations: usize,
    seed: u64,
) -> Result<ParetoFront, OptimError> {
    let problem = PulseProblem { gate, params, cfg };
    nsga2_with(&problem, Nsga2Settings::new(pop, generations, seed), |_| {})
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SelectionPolicy {
    /// Closest to the ideal point after min–max normalization.
    Knee,
    /// Lowest f1.
    F1Priority,
    /// Lowest f1 among members with f2 at or below the cap.
    F2Cap(f64),
}

impl std::str::FromStr for SelectionPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s.to_ascii_lowercase().as_str() {
            "knee" => return Ok(Self::Knee),
            "f1-priority" | "f1" => return Ok(Self::F1Priority),
            _ => {}
        }
        let inner = s
            .strip_prefix("f2-cap(")
            .and_then(|r| r.strip_suffix(')'))
            .or_else(|| s.strip_prefix("f2-cap:"))
            .ok_or_else(|| format!("unknown selection policy {s:?}"))?;
        let v: f64 = inner.trim().parse().map_err(|_| format!("bad f2 cap {inner:?}"))?;
        if !(v >= 0.0) {
            return Err(format!("f2 cap must be non-negative, got {v}"));
        }
        Ok(Self::F2Cap(v))
    }
}

impl std::fmt::Display for SelectionPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Knee => write!(f, "knee"),
            Self::F1Priority => write!(f, "f1-priority"),
            Self::F2Cap(v) => write!(f, "f2-cap({v})"),
        }
    }
}

pub fn select_solution(front: &ParetoFront, policy: SelectionPolicy) -> Result<&Member, OptimError> {
    if front.members.is_empty() {
        return Err(OptimError::EmptyFront);
    }
    let pool: Vec<&Member> = {
        let feasible: Vec<&Member> = front.members.iter().filter(|m| m.evaluation.feasible).collect();
        if feasible.is_empty() {
            front.members.iter().collect()
        } else {
            feasible
        }
    };
    let by_f1 = |a: &&&Member, b: &&&Member| {
        let (x, y) = (&a.evaluation.objectives, &b.evaluation.objectives);
        x.f1.total_cmp(&y.f1).then(x.f2.total_cmp(&y.f2))
    };
    match policy {
        SelectionPolicy::F1Priority => Ok(*pool.iter().min_by(by_f1).expect("non-empty")),
        SelectionPolicy::F2Cap(cap) => pool
            .iter()
            .filter(|m| m.evaluation.feasible && m.evaluation.objectives.f2 <= cap)
            .min_by(by_f1)
            .copied()
            .ok_or(OptimError::EmptyFeasibleSet),
        SelectionPolicy::Knee => {
            let f1s = pool.iter().map(|m| m.evaluation.objectives.f1);
            let f2s = pool.iter().map(|m| m.evaluation.objectives.f2);
            let (lo1, hi1) = f1s.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
            let (lo2, hi2) = f2s.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
            let norm = |x: f64, lo: f64, hi: f64| if hi > lo { (x - lo) / (hi - lo) } else { 0.0 };
            let dist = |m: &Member| {
                let o = &m.evaluation.objectives;
                norm(o.f1, lo1, hi1).hypot(norm(o.f2, lo2, hi2))
            };
            Ok(*pool
                .iter()
                .min_by(|a, b| dist(a).total_cmp(&dist(b)))
                .expect("non-empty"))
        }
    }
}
