use std::fmt::Write as _;
use std::path::Path;

use pulseforge::archive;
use pulseforge::gatelab::{self, GateSetup};
use pulseforge::optimizer::{self, EvalConfig, Genome, Nsga2Settings, PulseProblem};
use pulseforge::presets::PresetLibrary;
use pulseforge::pulsegen::{self, FieldEvaluator, PchCoefficients};

use crate::config::RunConfig;
use crate::{CliError, EXIT_FINDINGS, EXIT_OK};

/// CSV number: shortest round-trip form, exponent notation for very small or
/// large magnitudes, and no negative zero.
struct N(f64);

impl std::fmt::Display for N {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let x = if self.0 == 0.0 { 0.0 } else { self.0 };
        write!(f, "{x:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Validate,
    Waveform,
    TruthTable,
    SweepDetuning,
    SweepOffres,
    SweepV,
    RandomStates,
    Optimize,
}

/// What a command produced: the primary text (CSV, or a report for
/// `validate`) and the exit status it asks for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub text: String,
    pub exit: u8,
    /// Human-readable notes for standard error.
    pub notes: Vec<String>,
}

impl Outcome {
    fn ok(text: String) -> Self {
        Self {
            text,
            exit: EXIT_OK,
            notes: Vec::new(),
        }
    }
}

pub fn execute(cmd: Command, cfg: &RunConfig, lib: &PresetLibrary) -> Result<Outcome, CliError> {
    let setup = setup(cfg, lib)?;
    match cmd {
        Command::Validate => validate(cfg, &setup),
        Command::Waveform => Ok(Outcome::ok(waveform(&setup, cfg.waveform_points))),
        Command::TruthTable => truth_table(&setup),
        Command::SweepDetuning => {
            let t = gatelab::detuning_sweep(&setup, &cfg.labeled_inputs()?, &cfg.detuning_grid())?;
            Ok(Outcome::ok(sweep_csv(&t, "delta_khz", "fidelity")))
        }
        Command::SweepOffres => {
            let t = gatelab::offresonant_sweep(&setup, &cfg.labeled_inputs()?, &cfg.offres_grid())?;
            Ok(Outcome::ok(sweep_csv(&t, "delta_mhz", "excitation")))
        }
        Command::SweepV => {
            let mut table = gatelab::SweepTable {
                points: Vec::new(),
                summaries: Vec::new(),
            };
            for input in cfg.labeled_inputs()? {
                let t = gatelab::interaction_sweep(&setup, &input, &cfg.v_grid_mhz)?;
                table.points.extend(t.points);
                table.summaries.extend(t.summaries);
            }
            Ok(Outcome::ok(sweep_csv(&table, "v_mhz", "fidelity")))
        }
        Command::RandomStates => {
            let r = gatelab::random_state_average(&setup, cfg.n_random, cfg.seed)?;
            let mut s = String::from("kind,draw,fidelity\n");
            for (i, f) in r.fidelities.iter().enumerate() {
                let _ = writeln!(s, "point,{i},{}", N(*f));
            }
            let _ = writeln!(s, "mean,,{}", N(r.mean));
            let _ = writeln!(s, "min,,{}", N(r.min));
            Ok(Outcome::ok(s))
        }
        Command::Optimize => optimize(cfg, &setup),
    }
}

fn setup(cfg: &RunConfig, lib: &PresetLibrary) -> Result<GateSetup, CliError> {
    let mut s = GateSetup::new(cfg.gate(lib)?, cfg.params()?, cfg.coefficients(lib)?);
    s.compensation = cfg.compensation;
    s.clock = cfg.clock;
    s.tol = cfg.tolerances();
    Ok(s)
}

fn validate(cfg: &RunConfig, setup: &GateSetup) -> Result<Outcome, CliError> {
    let tau = setup.params.tau_us;
    let report = pulsegen::validate_coefficients(&setup.coeffs, tau);
    let schedule = setup.schedule();
    let mut s = String::new();
    let _ = writeln!(s, "gate {} with {} coefficients", setup.gate.label(), source_label(cfg));
    for b in &report.blocks {
        let segs: Vec<String> = schedule
            .segments
            .iter()
            .enumerate()
            .filter(|(_, seg)| seg.block == b.index)
            .map(|(i, _)| (i + 1).to_string())
            .collect();
        let _ = writeln!(
            s,
            "block {} (segments {}): odd residual {:+.3e}, even residual {:+.3e}, Omega(0) {:+.3e} rad/us, Omega(tau) {:+.3e} rad/us: {}",
            b.index + 1,
            segs.join(", "),
            b.odd_residual,
            b.even_residual,
            b.start_value,
            b.end_value,
            if b.valid { "ok" } else { "FLAGGED" }
        );
    }
    let mut findings = Vec::new();
    for b in report.flagged() {
        let first = schedule
            .segments
            .iter()
            .position(|seg| seg.block == b.index)
            .map_or(b.index + 1, |i| i + 1);
        if b.odd_residual.abs() > 1e-9 {
            findings.push(format!(
                "segment {first}: odd-harmonic residual {:+.6} (envelope does not vanish at t = 0)",
                b.odd_residual
            ));
        }
        if b.even_residual.abs() > 1e-9 {
            findings.push(format!(
                "segment {first}: even-harmonic residual {:+.6} (envelope does not vanish at t = tau)",
                b.even_residual
            ));
        }
    }
    for (i, area) in report.segment_areas.iter().enumerate() {
        let _ = writeln!(
            s,
            "pulse area block {}: {:.12} rad (pi/2 = {:.12})",
            i + 1,
            area,
            std::f64::consts::FRAC_PI_2
        );
    }
    let amp = setup.max_field_mhz()?;
    let cap = setup.params.amplitude_cap_mhz;
    let _ = writeln!(s, "max field amplitude: {amp:.6} MHz (cap {cap} MHz)");
    let mut notes = Vec::new();
    if amp > cap {
        // The optimizer treats this as infeasible, but it is not a boundary
        // condition violation, so it does not change the exit status.
        let _ = writeln!(s, "warning: max field amplitude exceeds the cap");
        notes.push(format!(
            "warning: max field amplitude {amp:.6} MHz exceeds the {cap} MHz cap"
        ));
    }
    for f in &findings {
        let _ = writeln!(s, "finding: {f}");
    }
    let _ = writeln!(s, "result: {}", if findings.is_empty() { "valid" } else { "invalid" });
    Ok(Outcome {
        text: s,
        exit: if findings.is_empty() { EXIT_OK } else { EXIT_FINDINGS },
        notes: findings.into_iter().chain(notes).collect(),
    })
}

fn source_label(cfg: &RunConfig) -> String {
    if cfg.coefficients.is_some() {
        "inline".into()
    } else if let Some(p) = &cfg.coefficients_file {
        format!("file {}", p.display())
    } else {
        format!("{} preset", cfg.preset)
    }
}

/// Samples every segment separately (endpoints included) so that each
/// segment's first and last rows sit exactly on its boundaries.
pub fn waveform(setup: &GateSetup, points: usize) -> String {
    let schedule = setup.schedule();
    let eval = FieldEvaluator::new(&schedule, &setup.coeffs);
    let n_seg = schedule.len();
    let mhz = 1.0 / std::f64::consts::TAU;
    let mut s = String::from(
        "segment,t_us,envelope_mhz,omega_c_re_mhz,omega_c_im_mhz,omega_0t_re_mhz,omega_0t_im_mhz,omega_1t_re_mhz,omega_1t_im_mhz\n",
    );
    for (k, seg) in schedule.segments.iter().enumerate() {
        let n = points / n_seg + usize::from(k < points % n_seg);
        let _ = writeln!(
            s,
            "# segment {}: t_us {} to {}, theta_pi {}, block {}",
            k + 1,
            N(seg.start),
            N(seg.end()),
            N(seg.theta / std::f64::consts::PI),
            seg.block + 1
        );
        for j in 0..n {
            let t = if j + 1 == n {
                seg.end()
            } else {
                seg.start + seg.duration * j as f64 / (n - 1) as f64
            };
            let f = eval.in_segment(k, t);
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                k + 1,
                N(t),
                N(f.envelope * mhz),
                N(f.omega_c.re * mhz),
                N(f.omega_c.im * mhz),
                N(f.omega_0t.re * mhz),
                N(f.omega_0t.im * mhz),
                N(f.omega_1t.re * mhz),
                N(f.omega_1t.im * mhz)
            );
        }
    }
    s
}

fn truth_table(setup: &GateSetup) -> Result<Outcome, CliError> {
    let t = gatelab::truth_table(setup)?;
    let mut s = String::from("input,p_00,p_01,p_10,p_11,fidelity,leakage\n");
    for (r, label) in ["00", "01", "10", "11"].iter().enumerate() {
        let row: Vec<String> = t.rows[r].iter().map(|p| N(*p).to_string()).collect();
        let _ = writeln!(
            s,
            "{label},{},{},{}",
            row.join(","),
            N(t.fidelities[r]),
            N(t.leakage[r])
        );
    }
    let mean = |v: &[f64; 4]| v.iter().sum::<f64>() / 4.0;
    let _ = writeln!(s, "mean,,,,,{},{}", N(mean(&t.fidelities)), N(mean(&t.leakage)));
    let min = t.fidelities.iter().copied().fold(f64::INFINITY, f64::min);
    let _ = writeln!(s, "min,,,,,{},", N(min));
    Ok(Outcome::ok(s))
}

fn sweep_csv(t: &gatelab::SweepTable, x_col: &str, value_col: &str) -> String {
    let mut s = format!("kind,input,{x_col},{value_col},leakage\n");
    for p in &t.points {
        let _ = writeln!(s, "point,{},{},{},{}", p.input, N(p.x), N(p.value), N(p.leakage));
    }
    for sum in &t.summaries {
        let _ = writeln!(s, "mean,{},,{},", sum.input, N(sum.mean));
        let _ = writeln!(s, "max,{},,{},", sum.input, N(sum.max));
        let _ = writeln!(s, "min,{},,{},", sum.input, N(sum.min));
    }
    s
}

fn eval_config(cfg: &RunConfig) -> Result<EvalConfig, CliError> {
    let inputs = cfg.labeled_inputs()?;
    let mut it = inputs.into_iter();
    let (Some(branch0), Some(branch1)) = (it.next(), it.next()) else {
        return Err(CliError::Config(
            "optimize needs two inputs (control-0 and control-1 branches)".into(),
        ));
    };
    Ok(EvalConfig {
        near_grid_khz: gatelab::uniform_grid(cfg.detuning_start_khz, cfg.detuning_stop_khz, cfg.opt_near_points),
        far_grid_mhz: gatelab::uniform_grid(
            cfg.offres_start_mhz.max(gatelab::FAR_THRESHOLD_MHZ),
            cfg.offres_stop_mhz,
            cfg.opt_far_points,
        ),
        branch0,
        branch1,
        tol: cfg.tolerances(),
        compensation: cfg.compensation,
        clock: cfg.clock,
        ..EvalConfig::default()
    })
}

fn optimize(cfg: &RunConfig, setup: &GateSetup) -> Result<Outcome, CliError> {
    let ecfg = eval_config(cfg)?;
    let problem = PulseProblem {
        gate: &setup.gate,
        params: &setup.params,
        cfg: &ecfg,
    };
    let mut notes = Vec::new();
    let front = optimizer::nsga2_with(&problem, Nsga2Settings::new(cfg.pop, cfg.generations, cfg.seed), |r| {
        eprintln!(
            "generation {}: hypervolume {:.6}, archive {}, feasible {}",
            r.generation, r.hypervolume, r.front_size, r.feasible
        );
    })?;
    let text = archive::write_archive(&front, &setup.gate.label());
    write_file(&cfg.archive, &text)?;

    let baseline = Genome::baseline();
    let base_eval = optimizer::evaluate(&baseline, &setup.gate, &setup.params, &ecfg)?;
    let chosen = optimizer::select_solution(&front, cfg.policy())?;
    let dominates = chosen.evaluation.feasible && chosen.evaluation.dominates(&base_eval);
    notes.push(format!(
        "selected ({}): genes {:?}, f1 {}, f2 {}, dominates baseline: {}",
        cfg.policy(),
        chosen.genes,
        chosen.evaluation.objectives.f1,
        chosen.evaluation.objectives.f2,
        if dominates { "yes" } else { "no" }
    ));
    if front.all_infeasible {
        notes.push("no feasible individual found; archive holds penalized members".into());
    }

    let mut s = String::from(
        "row,policy,gene_a3_1,gene_a4_1,gene_a3_2,gene_a4_2,a1,a2,a3,a4,a5,a6,a7,a8,f1_infidelity,f2_excitation,feasible,dominates_baseline\n",
    );
    let row = |s: &mut String,
               label: &str,
               genes: &[f64],
               coeffs: &PchCoefficients,
               f1: f64,
               f2: f64,
               feasible: bool,
               dom: &str| {
        let g: Vec<String> = genes.iter().map(|x| N(*x).to_string()).collect();
        let a: Vec<String> = coeffs.flat().iter().map(|x| N(*x).to_string()).collect();
        let _ = writeln!(
            s,
            "{label},{},{},{},{},{},{feasible},{dom}",
            cfg.policy(),
            g.join(","),
            a.join(","),
            N(f1),
            N(f2)
        );
    };
    let chosen_coeffs = Genome::new(chosen.genes.clone()).decode()?;
    row(
        &mut s,
        "selected",
        &chosen.genes,
        &chosen_coeffs,
        chosen.evaluation.objectives.f1,
        chosen.evaluation.objectives.f2,
        chosen.evaluation.feasible,
        if dominates { "true" } else { "false" },
    );
    row(
        &mut s,
        "baseline",
        &baseline.genes,
        &baseline.decode()?,
        base_eval.objectives.f1,
        base_eval.objectives.f2,
        base_eval.feasible,
        "",
    );
    Ok(Outcome {
        text: s,
        exit: EXIT_OK,
        notes,
    })
}

pub fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}
