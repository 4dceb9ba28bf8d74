use num_complex::Complex;
use num_traits::Zero;

use super::{Integrator, McwfError, StateVector};
use crate::baths::JumpChannel;
use crate::scalar::{norm_sqr, Cplx, Real};
use crate::sparse::CsrOperator;

/// Allowed relative growth of the squared norm over one step.
pub const NORM_GROWTH_TOL: f64 = 1e-9;

/// `H_eff = H - (i/2) sum_k alpha_k E_k^+ E_k`.
pub fn effective_hamiltonian<T: Real>(
    h: &CsrOperator<T>,
    channels: &[JumpChannel<T>],
) -> Result<CsrOperator<T>, McwfError> {
    let mut out = h.clone();
    for ch in channels {
        if ch.operator.dim() != h.dim() {
            return Err(McwfError::DimensionMismatch {
                expected: h.dim(),
                got: ch.operator.dim(),
            });
        }
        let decay = ch.operator.adjoint().matmul(&ch.operator)?;
        let coeff = Complex::new(T::zero(), -ch.rate / T::lit(2.0));
        out = out.linear_combination(Complex::new(T::one(), T::zero()), &decay, coeff)?;
    }
    Ok(out.with_hermitian_flag(channels.is_empty() && h.hermitian_flag()))
}

/// Scratch buffers for one trajectory; never shared between threads.
#[derive(Debug, Clone)]
pub struct Workspace<T> {
    pub(crate) trial: Vec<Cplx<T>>,
    a: Vec<Cplx<T>>,
    b: Vec<Cplx<T>>,
    phase: Vec<Cplx<T>>,
}

impl<T: Real> Workspace<T> {
    pub fn new(dim: usize) -> Self {
        let z = vec![Complex::zero(); dim];
        Self {
            trial: z.clone(),
            a: z.clone(),
            b: z.clone(),
            phase: z,
        }
    }
}

/// Outcome of one deterministic segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub elapsed: f64,
    /// The squared norm reached the threshold before `max_time`.
    pub hit: bool,
}

/// Fixed-step integrator of `d psi/dt = -i H_eff psi`.
#[derive(Debug, Clone)]
pub struct Propagator<T> {
    h_eff: CsrOperator<T>,
    diag: Vec<Cplx<T>>,
    off: CsrOperator<T>,
    off_bound: T,
    integrator: Integrator,
    substep: T,
    nominal_half_phase: Vec<Cplx<T>>,
}

impl<T: Real> Propagator<T> {
    pub fn new(
        h_eff: CsrOperator<T>,
        integrator: Integrator,
        substep: f64,
    ) -> Result<Self, McwfError> {
        if !(substep > 0.0 && substep.is_finite()) {
            return Err(McwfError::InvalidConfig(format!(
                "substep must be > 0, got {substep}"
            )));
        }
        let (diag, off) = h_eff.split_diagonal();
        let off_bound = off.max_row_abs_sum();
        let substep = T::lit(substep);
        let nominal_half_phase = half_phase(&diag, substep);
        Ok(Self {
            h_eff,
            diag,
            off,
            off_bound,
            integrator,
            substep,
            nominal_half_phase,
        })
    }

    pub fn dim(&self) -> usize {
        self.h_eff.dim()
    }

    pub fn substep(&self) -> T {
        self.substep
    }

    pub fn h_eff(&self) -> &CsrOperator<T> {
        &self.h_eff
    }

    /// One step of length `h` from `psi` into `out`.
    pub fn step(&self, psi: &[Cplx<T>], h: T, out: &mut [Cplx<T>], ws: &mut Workspace<T>) {
        match self.integrator {
            Integrator::Rk4 => self.step_rk4(psi, h, out, ws),
            Integrator::SplitDiagonal => self.step_split(psi, h, out, ws),
        }
    }

    fn step_rk4(&self, psi: &[Cplx<T>], h: T, out: &mut [Cplx<T>], ws: &mut Workspace<T>) {
        let mi = Complex::new(T::zero(), -T::one());
        let two = T::lit(2.0);
        let sixth = h / T::lit(6.0);
        let Workspace { a: k, b: tmp, .. } = ws;
        // k1
        self.h_eff.apply(psi, k);
        for i in 0..psi.len() {
            k[i] = k[i] * mi;
            out[i] = psi[i] + k[i] * sixth;
            tmp[i] = psi[i] + k[i] * (h / two);
        }
        // k2, k3
        for next in [h / two, h] {
            self.h_eff.apply(tmp, k);
            for i in 0..psi.len() {
                k[i] = k[i] * mi;
                out[i] = out[i] + k[i] * (sixth * two);
                tmp[i] = psi[i] + k[i] * next;
            }
        }
        // k4
        self.h_eff.apply(tmp, k);
        for i in 0..psi.len() {
            out[i] = out[i] + k[i] * mi * sixth;
        }
    }

    fn step_split(&self, psi: &[Cplx<T>], h: T, out: &mut [Cplx<T>], ws: &mut Workspace<T>) {
        let nominal = h == self.substep;
        if !nominal {
            ws.phase = half_phase(&self.diag, h);
        }
        let phase = if nominal {
            &self.nominal_half_phase
        } else {
            &ws.phase
        };
        for i in 0..psi.len() {
            out[i] = phase[i] * psi[i];
        }
        self.taylor_offdiag(out, h, &mut ws.a, &mut ws.b);
        let phase = if nominal {
            &self.nominal_half_phase
        } else {
            &ws.phase
        };
        for i in 0..psi.len() {
            out[i] = phase[i] * out[i];
        }
    }

    /// `v <- exp(-i V h) v` for the off-diagonal part `V`, by truncated Taylor
    /// series on slices with `|V| h_slice <= 1`.
    fn taylor_offdiag(&self, v: &mut [Cplx<T>], h: T, term: &mut [Cplx<T>], next: &mut [Cplx<T>]) {
        if self.off.nnz() == 0 {
            return;
        }
        let slices = (self.off_bound * h).ceil().max(T::one());
        let hs = h / slices;
        let tol2 = T::epsilon() * T::epsilon();
        let n_slices = slices.as_f64() as usize;
        for _ in 0..n_slices {
            term.copy_from_slice(v);
            let vnorm = norm_sqr(v);
            for k in 1..64 {
                self.off.apply(term, next);
                let coeff = Complex::new(T::zero(), -hs / T::lit(k as f64));
                let mut tnorm = T::zero();
                for i in 0..v.len() {
                    let t = next[i] * coeff;
                    term[i] = t;
                    v[i] = v[i] + t;
                    tnorm = tnorm + t.norm_sqr();
                }
                if tnorm <= tol2 * vnorm {
                    break;
                }
            }
        }
    }

    /// Integrates without jumps for `duration`; norm is checked each step.
    pub fn propagate(
        &self,
        state: &mut StateVector<T>,
        duration: f64,
        ws: &mut Workspace<T>,
    ) -> Result<(), McwfError> {
        let seg = self.evolve_to_threshold(state, T::zero(), duration, ws)?;
        debug_assert!(!seg.hit);
        Ok(())
    }

    /// Evolves until the squared norm reaches `eta` or `max_time` passes.
    ///
    /// The crossing is located inside the final step by regula falsi on the
    /// logarithm of the norm.
    pub fn evolve_to_threshold(
        &self,
        state: &mut StateVector<T>,
        eta: T,
        max_time: f64,
        ws: &mut Workspace<T>,
    ) -> Result<Segment, McwfError> {
        if state.dim() != self.dim() {
            return Err(McwfError::DimensionMismatch {
                expected: self.dim(),
                got: state.dim(),
            });
        }
        let sub = self.substep.as_f64();
        let mut elapsed = 0.0f64;
        let mut trial = std::mem::take(&mut ws.trial);
        let result = (|| {
            let (psi, norm) = state.parts_mut();
            loop {
                let remaining = max_time - elapsed;
                if remaining <= 1e-12 * sub {
                    return Ok(Segment {
                        elapsed: max_time,
                        hit: false,
                    });
                }
                let h = if remaining < sub * (1.0 + 1e-9) {
                    remaining
                } else {
                    sub
                };
                let ht = if h == sub { self.substep } else { T::lit(h) };
                self.step(psi, ht, &mut trial, ws);
                let n = norm_sqr(&trial);
                check_growth(*norm, n)?;
                if n > eta {
                    std::mem::swap(psi, &mut trial);
                    *norm = n;
                    elapsed += h;
                    continue;
                }
                let (s, ns) = self.locate_crossing(psi, *norm, n, h, eta, &mut trial, ws)?;
                std::mem::swap(psi, &mut trial);
                *norm = ns;
                return Ok(Segment {
                    elapsed: elapsed + s,
                    hit: true,
                });
            }
        })();
        ws.trial = trial;
        result
    }

    #[allow(clippy::too_many_arguments)]
    fn locate_crossing(
        &self,
        psi: &[Cplx<T>],
        n0: T,
        n1: T,
        h: f64,
        eta: T,
        trial: &mut [Cplx<T>],
        ws: &mut Workspace<T>,
    ) -> Result<(f64, T), McwfError> {
        let ln_eta = eta.as_f64().ln();
        let f_tol = 1e-11f64.max(100.0 * T::epsilon().as_f64());
        let (mut a, mut fa) = (0.0f64, n0.as_f64().ln() - ln_eta);
        let (mut b, mut fb) = (h, n1.as_f64().ln() - ln_eta);
        if fb.abs() <= f_tol || fa <= 0.0 {
            // Crossing at the step end (or already below at its start).
            let s = if fa <= 0.0 { 0.0 } else { h };
            if s == 0.0 {
                trial.copy_from_slice(psi);
                return Ok((0.0, n0));
            }
            self.step(psi, T::lit(h), trial, ws);
            return Ok((h, norm_sqr(trial)));
        }
        let mut side = 0i8;
        let mut s = b;
        let mut ns = n1;
        for _ in 0..100 {
            s = (a * fb - b * fa) / (fb - fa);
            if !(s > a && s < b) {
                s = 0.5 * (a + b);
            }
            self.step(psi, T::lit(s), trial, ws);
            ns = norm_sqr(trial);
            check_growth(n0, ns)?;
            let fs = ns.as_f64().ln() - ln_eta;
            if fs.abs() <= f_tol || (b - a) <= 1e-14 * h {
                return Ok((s, ns));
            }
            if fs > 0.0 {
                a = s;
                fa = fs;
                if side == -1 {
                    fb *= 0.5;
                }
                side = -1;
            } else {
                b = s;
                fb = fs;
                if side == 1 {
                    fa *= 0.5;
                }
                side = 1;
            }
        }
        Ok((s, ns))
    }
}

fn half_phase<T: Real>(diag: &[Cplx<T>], h: T) -> Vec<Cplx<T>> {
    let f = Complex::new(T::zero(), -h / T::lit(2.0));
    diag.iter().map(|&d| (d * f).exp()).collect()
}

fn check_growth<T: Real>(before: T, after: T) -> Result<(), McwfError> {
    let (b, a) = (before.as_f64(), after.as_f64());
    let tol = NORM_GROWTH_TOL.max(10.0 * T::epsilon().as_f64());
    if a > b * (1.0 + tol) || !a.is_finite() {
        return Err(McwfError::NormIncrease {
            before: b,
            after: a,
        });
    }
    Ok(())
}
