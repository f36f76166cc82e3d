//! Dormand–Prince 5(4) with the standard fourth-order continuous extension.
//!
//! The stepper is driven one accepted step at a time so callers can run
//! event detection on the dense segment before continuing. A right-hand
//! side that fails (for instance because a stage point left the grid)
//! causes the step to be retried with a smaller step size; once the step
//! size underflows the caller gets the failure back with the last accepted
//! state untouched.

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

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;
const RHS_FAILURE_SHRINK: f64 = 0.25;

#[derive(Clone, Copy, Debug)]
pub struct StepperOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Smallest step magnitude before giving up.
    pub h_min: f64,
    /// Largest step magnitude (`f64::INFINITY` for none).
    pub h_max: f64,
}

impl StepperOptions {
    /// Relative tolerance `tol` with an absolute floor of `tol * 1e-2`.
    pub fn from_tol(tol: f64) -> Self {
        StepperOptions { rtol: tol, atol: tol * 1e-2, h_min: 1e-12, h_max: f64::INFINITY }
    }
}

/// Dense output over one accepted step.
#[derive(Clone, Debug)]
pub struct DenseSegment<const N: usize> {
    pub t0: f64,
    pub t1: f64,
    pub y0: [f64; N],
    pub y1: [f64; N],
    rcont: [[f64; N]; 5],
}

impl<const N: usize> DenseSegment<N> {
    pub fn eval(&self, t: f64) -> [f64; N] {
        let h = self.t1 - self.t0;
        let theta = if h == 0.0 { 0.0 } else { (t - self.t0) / h };
        let theta1 = 1.0 - theta;
        let r = &self.rcont;
        let mut out = [0.0; N];
        for i in 0..N {
            out[i] = r[0][i] + theta * (r[1][i] + theta1 * (r[2][i] + theta * (r[3][i] + theta1 * r[4][i])));
        }
        out
    }
}

pub enum StepOutcome<const N: usize, E> {
    Accepted(DenseSegment<N>),
    /// Step size fell below `h_min`; carries the last RHS failure if any.
    Failed(Option<E>),
}

pub struct Dopri5<const N: usize> {
    t: f64,
    y: [f64; N],
    k1: [f64; N],
    h: f64,
    opts: StepperOptions,
    pub accepted: usize,
    pub rejected: usize,
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] += h * acc;
    }
    out
}

impl<const N: usize> Dopri5<N> {
    /// Starts at `(t0, y0)` heading in the direction of `dir` (sign only).
    pub fn new<E>(
        f: &mut impl FnMut(f64, &[f64; N]) -> Result<[f64; N], E>,
        t0: f64,
        y0: [f64; N],
        dir: f64,
        opts: StepperOptions,
    ) -> Result<Self, E> {
        let k1 = f(t0, &y0)?;
        let mut s = Dopri5 { t: t0, y: y0, k1, h: 0.0, opts, accepted: 0, rejected: 0 };
        s.h = s.initial_step(f, dir);
        Ok(s)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64; N] {
        &self.y
    }

    fn scaled_norm(&self, v: &[f64; N], y: &[f64; N]) -> f64 {
        let mut acc = 0.0;
        for i in 0..N {
            let sc = self.opts.atol + self.opts.rtol * y[i].abs();
            acc += (v[i] / sc).powi(2);
        }
        (acc / N as f64).sqrt()
    }

    fn initial_step<E>(&self, f: &mut impl FnMut(f64, &[f64; N]) -> Result<[f64; N], E>, dir: f64) -> f64 {
        let sign = if dir < 0.0 { -1.0 } else { 1.0 };
        let d0 = self.scaled_norm(&self.y, &self.y);
        let d1 = self.scaled_norm(&self.k1, &self.y);
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(self.opts.h_max);
        let y1 = axpy(&self.y, sign * h0, &[(1.0, &self.k1)]);
        let h1 = match f(self.t + sign * h0, &y1) {
            Ok(k) => {
                let mut diff = [0.0; N];
                for i in 0..N {
                    diff[i] = k[i] - self.k1[i];
                }
                let d2 = self.scaled_norm(&diff, &self.y) / h0;
                let dmax = d1.max(d2);
                if dmax <= 1e-15 {
                    (h0 * 1e-3).max(1e-6)
                } else {
                    (0.01 / dmax).powf(0.2)
                }
            }
            Err(_) => h0,
        };
        sign * (100.0 * h0).min(h1).min(self.opts.h_max)
    }

    /// Attempts one step, never passing `t_end`.
    pub fn step<E>(
        &mut self,
        f: &mut impl FnMut(f64, &[f64; N]) -> Result<[f64; N], E>,
        t_end: f64,
    ) -> StepOutcome<N, E> {
        let dir = if t_end >= self.t { 1.0 } else { -1.0 };
        let mut h = self.h.abs().min(self.opts.h_max) * dir;
        let mut last_err: Option<E> = None;
        let mut fac_max = FAC_MAX;
        loop {
            let remaining = t_end - self.t;
            if h.abs() >= remaining.abs() {
                h = remaining;
            }
            if h.abs() < self.opts.h_min && remaining.abs() > self.opts.h_min {
                return StepOutcome::Failed(last_err);
            }
            if h == 0.0 {
                return StepOutcome::Failed(last_err);
            }
            match self.try_step(f, h) {
                Ok((y_new, k7, err, rcont)) => {
                    if err <= 1.0 {
                        let t_new = if (t_end - (self.t + h)).abs() <= 1e-15 * t_end.abs().max(1.0) {
                            t_end
                        } else {
                            self.t + h
                        };
                        let seg = DenseSegment { t0: self.t, t1: t_new, y0: self.y, y1: y_new, rcont };
                        let fac = if err == 0.0 { fac_max } else { (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, fac_max) };
                        // Keep the controller's proposal even when the step was truncated at t_end.
                        self.h = if h.abs() < self.h.abs() && remaining.abs() <= h.abs() {
                            self.h
                        } else {
                            h * fac
                        };
                        self.t = t_new;
                        self.y = y_new;
                        self.k1 = k7;
                        self.accepted += 1;
                        return StepOutcome::Accepted(seg);
                    }
                    self.rejected += 1;
                    fac_max = 1.0;
                    h *= (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, 1.0);
                }
                Err(e) => {
                    self.rejected += 1;
                    fac_max = 1.0;
                    last_err = Some(e);
                    h *= RHS_FAILURE_SHRINK;
                }
            }
        }
    }

    #[allow(clippy::type_complexity)]
    fn try_step<E>(
        &self,
        f: &mut impl FnMut(f64, &[f64; N]) -> Result<[f64; N], E>,
        h: f64,
    ) -> Result<([f64; N], [f64; N], f64, [[f64; N]; 5]), E> {
        let (t, y, k1) = (self.t, &self.y, &self.k1);
        let k2 = f(t + C2 * h, &axpy(y, h, &[(A21, k1)]))?;
        let k3 = f(t + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]))?;
        let k4 = f(t + C4 * h, &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]))?;
        let k5 = f(t + C5 * h, &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
        let k6 = f(t + h, &axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]))?;
        let y_new = axpy(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = f(t + h, &y_new)?;

        let mut err_vec = [0.0; N];
        let mut acc = 0.0;
        for i in 0..N {
            err_vec[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = self.opts.atol + self.opts.rtol * y[i].abs().max(y_new[i].abs());
            acc += (err_vec[i] / sc).powi(2);
        }
        let err = (acc / N as f64).sqrt();

        let mut rcont = [[0.0; N]; 5];
        for i in 0..N {
            let ydiff = y_new[i] - y[i];
            let bspl = h * k1[i] - ydiff;
            rcont[0][i] = y[i];
            rcont[1][i] = ydiff;
            rcont[2][i] = bspl;
            rcont[3][i] = ydiff - h * k7[i] - bspl;
            rcont[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
        Ok((y_new, k7, err, rcont))
    }
}

/// Bisection on `g(t)` over a dense segment bracket `[ta, tb]` with
/// `g(ta) * g(tb) <= 0`, stopping once the bracket is narrower than `t_tol`.
pub fn bisect_event<const N: usize>(
    seg: &DenseSegment<N>,
    mut ta: f64,
    mut tb: f64,
    g: impl Fn(&[f64; N]) -> f64,
    t_tol: f64,
) -> f64 {
    let mut ga = g(&seg.eval(ta));
    for _ in 0..200 {
        if (tb - ta).abs() <= t_tol {
            break;
        }
        let tm = 0.5 * (ta + tb);
        let gm = g(&seg.eval(tm));
        if gm == 0.0 {
            return tm;
        }
        if (ga < 0.0) == (gm < 0.0) {
            ta = tm;
            ga = gm;
        } else {
            tb = tm;
        }
    }
    0.5 * (ta + tb)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run<const N: usize>(
        f: &mut impl FnMut(f64, &[f64; N]) -> Result<[f64; N], ()>,
        t0: f64,
        y0: [f64; N],
        t1: f64,
        tol: f64,
    ) -> [f64; N] {
        let mut s = Dopri5::new(f, t0, y0, t1 - t0, StepperOptions::from_tol(tol)).unwrap();
        while s.t() != t1 {
            match s.step(f, t1) {
                StepOutcome::Accepted(_) => {}
                StepOutcome::Failed(_) => panic!("step failure"),
            }
        }
        *s.y()
    }

    #[test]
    fn exponential_decay() {
        let y = run(&mut |_t, y: &[f64; 1]| Ok([-y[0]]), 0.0, [1.0], 3.0, 1e-10);
        assert!((y[0] - (-3.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn backward_integration() {
        let y = run(&mut |_t, y: &[f64; 1]| Ok([y[0]]), 1.0, [1.0], 0.0, 1e-10);
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn harmonic_oscillator_dense_output() {
        let mut f = |_t: f64, y: &[f64; 2]| -> Result<[f64; 2], ()> { Ok([y[1], -y[0]]) };
        let mut s = Dopri5::new(&mut f, 0.0, [1.0, 0.0], 1.0, StepperOptions::from_tol(1e-10)).unwrap();
        let mut worst: f64 = 0.0;
        while s.t() < 5.0 {
            if let StepOutcome::Accepted(seg) = s.step(&mut f, 5.0) {
                for k in 0..=10 {
                    let t = seg.t0 + (seg.t1 - seg.t0) * k as f64 / 10.0;
                    let y = seg.eval(t);
                    worst = worst.max((y[0] - t.cos()).abs());
                }
            }
        }
        assert!(worst < 1e-8, "dense output error {worst}");
    }

    #[test]
    fn rhs_failure_shrinks_then_fails() {
        // Domain y < 1.5; growth y' = 1 exits at t = 0.5.
        let mut f = |_t: f64, y: &[f64; 1]| if y[0] < 1.5 { Ok([1.0]) } else { Err("left") };
        let mut s = Dopri5::new(&mut f, 0.0, [1.0], 1.0, StepperOptions::from_tol(1e-8)).unwrap();
        let last = loop {
            if let StepOutcome::Failed(e) = s.step(&mut f, 10.0) {
                break e;
            }
        };
        assert_eq!(last, Some("left"));
        assert!(s.y()[0] < 1.5 && s.y()[0] > 1.5 - 1e-6);
    }

    #[test]
    fn bisection_finds_crossing() {
        let mut f = |_t: f64, _y: &[f64; 1]| -> Result<[f64; 1], ()> { Ok([1.0]) };
        let mut s = Dopri5::new(&mut f, 0.0, [0.0], 1.0, StepperOptions::from_tol(1e-10)).unwrap();
        let seg = loop {
            let StepOutcome::Accepted(seg) = s.step(&mut f, 1.0) else { panic!() };
            if seg.t1 >= 0.3 {
                break seg;
            }
        };
        let t = bisect_event(&seg, seg.t0, seg.t1, |y| y[0] - 0.3, 1e-12);
        assert!((t - 0.3).abs() < 1e-11);
    }
}
