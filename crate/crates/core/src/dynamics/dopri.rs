//! Dormand–Prince 5(4) with PI step-size control (Hairer's DOPRI5 controller).
//!
//! The state is a flat slice of complex numbers; real and imaginary parts are
//! weighted separately in the error norm.

use num_complex::Complex64 as C64;

// Butcher tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Error coefficients: 5th-order weights minus embedded 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;
const MAX_STEPS: usize = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

impl std::ops::AddAssign for Stats {
    fn add_assign(&mut self, rhs: Self) {
        self.accepted += rhs.accepted;
        self.rejected += rhs.rejected;
        self.evaluations += rhs.evaluations;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Failure {
    StepSizeUnderflow { t: f64, h: f64 },
    TooManySteps { t: f64 },
    NonFinite { t: f64 },
}

/// Integrates `y' = f(t, y)` from `t0` to `t1` in place.
///
/// `after_step` runs on every accepted state (used for re-symmetrization).
pub fn integrate<F, P>(
    mut f: F,
    mut after_step: P,
    t0: f64,
    t1: f64,
    y: &mut [C64],
    ctl: StepControl,
) -> Result<Stats, Failure>
where
    F: FnMut(f64, &[C64], &mut [C64]),
    P: FnMut(&mut [C64]),
{
    let n = y.len();
    let mut stats = Stats::default();
    if t1 <= t0 || n == 0 {
        return Ok(stats);
    }
    let span = t1 - t0;
    let h_max = ctl.h_max.min(span);
    let mut k = vec![vec![C64::new(0.0, 0.0); n]; 7];
    let mut ytmp = vec![C64::new(0.0, 0.0); n];
    let mut ynew = vec![C64::new(0.0, 0.0); n];

    let mut t = t0;
    f(t, y, &mut k[0]);
    stats.evaluations += 1;
    let mut h = initial_step(&mut f, t, y, &k[0], ctl, h_max, &mut ytmp, &mut ynew);
    stats.evaluations += 1;
    let mut err_old = 1e-4f64;
    let mut last_rejected = false;

    loop {
        if stats.accepted + stats.rejected > MAX_STEPS {
            return Err(Failure::TooManySteps { t });
        }
        let remaining = t1 - t;
        let last = h >= remaining * (1.0 - 1e-12);
        if last {
            h = remaining;
        }
        if h <= 1e-14 * t.abs().max(span) {
            return Err(Failure::StepSizeUnderflow { t, h });
        }

        // Stages 2..6.
        stage(&mut ytmp, y, h, &k, &[(0, A21)]);
        f(t + C2 * h, &ytmp, &mut k[1]);
        stage(&mut ytmp, y, h, &k, &[(0, A31), (1, A32)]);
        f(t + C3 * h, &ytmp, &mut k[2]);
        stage(&mut ytmp, y, h, &k, &[(0, A41), (1, A42), (2, A43)]);
        f(t + C4 * h, &ytmp, &mut k[3]);
        stage(&mut ytmp, y, h, &k, &[(0, A51), (1, A52), (2, A53), (3, A54)]);
        f(t + C5 * h, &ytmp, &mut k[4]);
        stage(&mut ytmp, y, h, &k, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)]);
        let t_next = if last { t1 } else { t + h };
        f(t_next, &ytmp, &mut k[5]);
        stage(&mut ynew, y, h, &k, &[(0, A71), (2, A73), (3, A74), (4, A75), (5, A76)]);
        f(t_next, &ynew, &mut k[6]);
        stats.evaluations += 6;

        let mut acc = 0.0;
        for i in 0..n {
            let e = (k[0][i] * E1 + k[2][i] * E3 + k[3][i] * E4 + k[4][i] * E5 + k[5][i] * E6 + k[6][i] * E7) * h;
            let sc_re = ctl.atol + ctl.rtol * y[i].re.abs().max(ynew[i].re.abs());
            let sc_im = ctl.atol + ctl.rtol * y[i].im.abs().max(ynew[i].im.abs());
            acc += (e.re / sc_re).powi(2) + (e.im / sc_im).powi(2);
        }
        let err = (acc / (2 * n) as f64).sqrt();
        if !err.is_finite() {
            return Err(Failure::NonFinite { t });
        }

        let expo = 0.2 - BETA * 0.75;
        if err <= 1.0 {
            let mut fac = err.max(1e-16).powf(expo) / err_old.powf(BETA);
            fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
            }
            err_old = err.max(1e-4);
            y.copy_from_slice(&ynew);
            after_step(y);
            stats.accepted += 1;
            if last {
                return Ok(stats);
            }
            t += h;
            // FSAL, unless the post-step hook changed the state.
            f(t, y, &mut k[0]);
            stats.evaluations += 1;
            h = h_new.min(h_max);
            last_rejected = false;
        } else {
            let fac = (err.powf(expo) / SAFETY).min(1.0 / FAC_MIN);
            h /= fac;
            stats.rejected += 1;
            last_rejected = true;
        }
    }
}

#[inline]
fn stage(out: &mut [C64], y: &[C64], h: f64, k: &[Vec<C64>], terms: &[(usize, f64)]) {
    out.copy_from_slice(y);
    for &(j, a) in terms {
        let ha = h * a;
        for (o, kj) in out.iter_mut().zip(&k[j]) {
            *o += kj * ha;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn initial_step<F>(
    f: &mut F,
    t: f64,
    y: &[C64],
    f0: &[C64],
    ctl: StepControl,
    h_max: f64,
    ytmp: &mut [C64],
    f1: &mut [C64],
) -> f64
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    let n = y.len();
    let scale = |v: C64| ctl.atol + ctl.rtol * v.norm();
    let mut dnf = 0.0;
    let mut dny = 0.0;
    for i in 0..n {
        let sk = scale(y[i]);
        dnf += (f0[i].norm() / sk).powi(2);
        dny += (y[i].norm() / sk).powi(2);
    }
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        (dny / dnf).sqrt() * 0.01
    };
    h = h.min(h_max);
    for i in 0..n {
        ytmp[i] = y[i] + f0[i] * h;
    }
    f(t + h, ytmp, f1);
    let mut der2 = 0.0;
    for i in 0..n {
        der2 += ((f1[i] - f0[i]).norm() / scale(y[i])).powi(2);
    }
    let der2 = der2.sqrt() / h;
    let der12 = der2.max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(0.2)
    };
    (100.0 * h).min(h1).min(h_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CTL: StepControl = StepControl {
        rtol: 1e-10,
        atol: 1e-12,
        h_max: f64::INFINITY,
    };

    #[test]
    fn exponential_decay() {
        let mut y = vec![C64::new(1.0, 0.0)];
        integrate(|_, y, dy| dy[0] = -y[0], |_| {}, 0.0, 3.0, &mut y, CTL).unwrap();
        assert!((y[0].re - (-3.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn harmonic_phase() {
        let w = 7.0;
        let mut y = vec![C64::new(1.0, 0.0)];
        integrate(
            |_, y, dy| dy[0] = C64::new(0.0, -w) * y[0],
            |_| {},
            0.0,
            2.0,
            &mut y,
            CTL,
        )
        .unwrap();
        let exact = C64::from_polar(1.0, -w * 2.0);
        assert!((y[0] - exact).norm() < 1e-8);
    }

    #[test]
    fn time_dependent_rhs() {
        // y' = cos(t) y  =>  y = exp(sin t)
        let mut y = vec![C64::new(1.0, 0.0)];
        integrate(|t, y, dy| dy[0] = y[0] * t.cos(), |_| {}, 0.0, 5.0, &mut y, CTL).unwrap();
        assert!((y[0].re - 5f64.sin().exp()).abs() < 1e-9);
    }

    #[test]
    fn respects_max_step() {
        let mut y = vec![C64::new(1.0, 0.0)];
        let stats = integrate(
            |_, _, dy| dy[0] = C64::new(0.0, 0.0),
            |_| {},
            0.0,
            1.0,
            &mut y,
            StepControl { h_max: 0.01, ..CTL },
        )
        .unwrap();
        assert!(stats.accepted >= 100);
    }

    #[test]
    fn blow_up_reports_failure() {
        let mut y = vec![C64::new(1.0, 0.0)];
        let r = integrate(
            |_, y, dy| dy[0] = y[0] * y[0] * y[0].norm() * 1e3,
            |_| {},
            0.0,
            10.0,
            &mut y,
            CTL,
        );
        assert!(r.is_err());
    }
}
