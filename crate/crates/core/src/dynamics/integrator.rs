//! Adaptive Dormand–Prince 5(4) stepping over complex state vectors.

use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Smallest step accepted before the integration is declared stiff.
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rtol: 1e-8,
            atol: 1e-10,
            h_min: 1e-22,
            h_max: f64::INFINITY,
            max_steps: 50_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepFailure {
    Underflow { time: f64 },
    TooManySteps { time: f64 },
    NonFinite { time: f64 },
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_calls: usize,
}

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
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates `dy/dt = f(t, y)` and calls `observe(t, y)` at every stop
/// point. `stops` must be sorted and start at or after `t0`. Steps never
/// straddle an entry of `breaks`, which marks discontinuities in `f`.
pub struct Dopri5<'a> {
    pub tol: Tolerances,
    rhs: Box<dyn FnMut(f64, &[Complex64], &mut [Complex64]) + 'a>,
    pub stats: StepStats,
    k: [Vec<Complex64>; 7],
    tmp: Vec<Complex64>,
    y_new: Vec<Complex64>,
}

impl<'a> Dopri5<'a> {
    pub fn new(n: usize, tol: Tolerances, rhs: impl FnMut(f64, &[Complex64], &mut [Complex64]) + 'a) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); n];
        Dopri5 {
            tol,
            rhs: Box::new(rhs),
            stats: StepStats::default(),
            k: std::array::from_fn(|_| z.clone()),
            tmp: z.clone(),
            y_new: z,
        }
    }

    fn eval(&mut self, t: f64, stage: usize, use_tmp: bool, y: &[Complex64]) {
        self.stats.rhs_calls += 1;
        let src: &[Complex64] = if use_tmp { &self.tmp } else { y };
        (self.rhs)(t, src, &mut self.k[stage]);
    }

    fn norm(&self, y: &[Complex64], v: &[Complex64], y2: Option<&[Complex64]>) -> f64 {
        // Max norm: an RMS over d² entries lets a single stiff mode grow
        // far past atol before the controller reacts.
        let mut acc: f64 = 0.0;
        for i in 0..y.len() {
            let scale_y = match y2 {
                Some(y2) => y[i].norm().max(y2[i].norm()),
                None => y[i].norm(),
            };
            let sc = self.tol.atol + self.tol.rtol * scale_y;
            acc = acc.max(v[i].norm() / sc);
        }
        acc
    }

    fn initial_step(&mut self, t0: f64, y: &[Complex64], span: f64) -> f64 {
        self.eval(t0, 0, false, y);
        let d0 = self.norm(y, y, None);
        let d1 = self.norm(y, &self.k[0], None);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 * span } else { 0.01 * d0 / d1 };
        let h0 = h0.min(span);
        for i in 0..y.len() {
            self.tmp[i] = y[i] + self.k[0][i] * h0;
        }
        self.eval(t0 + h0, 1, true, y);
        let diff: Vec<Complex64> = self.k[1].iter().zip(&self.k[0]).map(|(a, b)| a - b).collect();
        let d2 = self.norm(y, &diff, None) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6 * span)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(span)
    }

    /// Advances `y` from `t0` through every time in `stops`.
    pub fn integrate(
        &mut self,
        t0: f64,
        y: &mut [Complex64],
        stops: &[f64],
        breaks: &[f64],
        mut observe: impl FnMut(usize, f64, &[Complex64]),
    ) -> Result<(), StepFailure> {
        let Some(&t_final) = stops.last() else {
            return Ok(());
        };
        let mut t = t0;
        let mut stop_idx = 0;
        while stop_idx < stops.len() && stops[stop_idx] <= t0 {
            observe(stop_idx, t0, y);
            stop_idx += 1;
        }
        if stop_idx == stops.len() {
            return Ok(());
        }
        let mut break_idx = breaks.partition_point(|&b| b <= t0);
        let span = t_final - t0;
        let mut h = self.initial_step(t0, y, span).min(self.tol.h_max);
        let mut fsal = false;
        let mut steps = 0usize;
        while stop_idx < stops.len() {
            let next_stop = stops[stop_idx];
            while break_idx < breaks.len() && breaks[break_idx] <= t {
                break_idx += 1;
            }
            let boundary = if break_idx < breaks.len() { next_stop.min(breaks[break_idx]) } else { next_stop };
            let remaining = boundary - t;
            let (h_try, lands) = if h >= remaining * (1.0 - 1e-12) { (remaining, true) } else { (h, false) };
            if !fsal {
                self.eval(t, 0, false, y);
            }
            let err = self.step(t, h_try, y);
            steps += 1;
            if steps > self.tol.max_steps {
                return Err(StepFailure::TooManySteps { time: t });
            }
            if !err.is_finite() {
                if h_try <= self.tol.h_min {
                    return Err(StepFailure::NonFinite { time: t });
                }
                h = 0.25 * h_try;
                fsal = true;
                self.stats.rejected += 1;
                continue;
            }
            if err <= 1.0 {
                self.stats.accepted += 1;
                y.copy_from_slice(&self.y_new);
                t = if lands { boundary } else { t + h_try };
                self.k.swap(0, 6);
                fsal = true;
                if lands && break_idx < breaks.len() && boundary == breaks[break_idx] {
                    // The right-hand side jumps here, so the stored derivative is stale.
                    fsal = false;
                }
                while stop_idx < stops.len() && stops[stop_idx] <= t {
                    observe(stop_idx, t, y);
                    stop_idx += 1;
                }
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                let proposal = h_try * factor;
                h = if lands { proposal.max(h) } else { proposal };
                h = h.min(self.tol.h_max);
            } else {
                self.stats.rejected += 1;
                h = h_try * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                fsal = true;
                if h < self.tol.h_min {
                    return Err(StepFailure::Underflow { time: t });
                }
            }
        }
        Ok(())
    }

    fn step(&mut self, t: f64, h: f64, y: &[Complex64]) -> f64 {
        let n = y.len();
        macro_rules! stage {
            ($idx:expr, $c:expr, [$( ($k:expr, $a:expr) ),*]) => {{
                for i in 0..n {
                    let mut acc = y[i];
                    $( acc += self.k[$k][i] * ($a * h); )*
                    self.tmp[i] = acc;
                }
                self.eval(t + $c * h, $idx, true, y);
            }};
        }
        stage!(1, C2, [(0, A21)]);
        stage!(2, C3, [(0, A31), (1, A32)]);
        stage!(3, C4, [(0, A41), (1, A42), (2, A43)]);
        stage!(4, C5, [(0, A51), (1, A52), (2, A53), (3, A54)]);
        stage!(5, 1.0, [(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)]);
        for i in 0..n {
            self.y_new[i] = y[i]
                + (self.k[0][i] * B1 + self.k[2][i] * B3 + self.k[3][i] * B4 + self.k[4][i] * B5 + self.k[5][i] * B6) * h;
        }
        self.stats.rhs_calls += 1;
        (self.rhs)(t + h, &self.y_new, &mut self.k[6]);
        for i in 0..n {
            self.tmp[i] = (self.k[0][i] * E1
                + self.k[2][i] * E3
                + self.k[3][i] * E4
                + self.k[4][i] * E5
                + self.k[5][i] * E6
                + self.k[6][i] * E7)
                * h;
        }
        let y_new = std::mem::take(&mut self.y_new);
        let e = self.norm(y, &self.tmp, Some(&y_new));
        self.y_new = y_new;
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_and_rotation() {
        let lambda = Complex64::new(-0.5, 3.0);
        let mut solver = Dopri5::new(1, Tolerances::default(), |_, y, dy| dy[0] = lambda * y[0]);
        let mut y = [Complex64::new(1.0, 0.0)];
        let stops: Vec<f64> = (1..=10).map(|i| 0.5 * i as f64).collect();
        let mut seen = Vec::new();
        solver
            .integrate(0.0, &mut y, &stops, &[], |_, t, y| seen.push((t, y[0])))
            .unwrap();
        assert_eq!(seen.len(), 10);
        for (t, v) in seen {
            let exact = (lambda * t).exp();
            assert!((v - exact).norm() < 1e-7, "{t}: {v} vs {exact}");
        }
    }

    #[test]
    fn respects_breakpoints() {
        // dy/dt = |t - 1| has a kink at t = 1; exact y(2) = 1.
        let mut solver = Dopri5::new(1, Tolerances::default(), |t, _, dy| {
            dy[0] = Complex64::new((t - 1.0).abs(), 0.0)
        });
        let mut y = [Complex64::new(0.0, 0.0)];
        let mut last = 0.0;
        solver.integrate(0.0, &mut y, &[2.0], &[1.0], |_, _, y| last = y[0].re).unwrap();
        assert!((last - 1.0).abs() < 1e-12, "{last}");
    }
}
