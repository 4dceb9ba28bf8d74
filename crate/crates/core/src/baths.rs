//! Thermal edge baths and their Lindblad jump channels.
//!
//! Each bath contact couples to one spin through `sigma_+` and `sigma_-` with
//! the 2x2 coefficient matrix
//! `[[G(w), sqrt(G(w) G(-w))], [sqrt(G(w) G(-w)), G(-w)]]` where
//! `G(w) = lambda w / (exp(beta w) - 1)` is the Ohmic rate. Diagonalizing that
//! matrix turns the dissipator into Lindblad form with one channel per nonzero
//! eigenvalue.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, SystemSpec};
use crate::scalar::{Cplx, Real};
use crate::sparse::{pauli, CsrOperator};

/// Eigenvalues below this fraction of the trace are treated as zero.
pub const RANK_CUTOFF: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BathError {
    #[error("thermal rate undefined at zero frequency")]
    ZeroFrequency,
    #[error("invalid bath parameter `{name}` = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

/// Ohmic bath rate `lambda w / (exp(beta w) - 1)`; positive for either sign of `w`.
pub fn thermal_rate(omega: f64, beta: f64, lambda: f64) -> Result<f64, BathError> {
    if omega == 0.0 {
        return Err(BathError::ZeroFrequency);
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(BathError::InvalidParameter {
            name: "beta",
            value: beta,
        });
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(BathError::InvalidParameter {
            name: "lambda",
            value: lambda,
        });
    }
    Ok(lambda * omega / (beta * omega).exp_m1())
}

/// Coefficient matrix of one bath contact in the `(sigma_+, sigma_-)` basis.
pub fn gamma_matrix(omega: f64, beta: f64, lambda: f64) -> Result<[[f64; 2]; 2], BathError> {
    let up = thermal_rate(omega, beta, lambda)?;
    let down = thermal_rate(-omega, beta, lambda)?;
    let off = (up * down).sqrt();
    Ok([[up, off], [off, down]])
}

/// Closed-form eigenpairs of a real symmetric 2x2 matrix, largest first.
///
/// Eigenvectors are normalized with a non-negative first component.
pub fn symmetric_eigen2(m: &[[f64; 2]; 2]) -> [(f64, [f64; 2]); 2] {
    let (a, b, d) = (m[0][0], m[0][1], m[1][1]);
    let half_tr = 0.5 * (a + d);
    let disc = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    let hi = half_tr + disc;
    // det / hi avoids cancellation for the (near) zero eigenvalue
    let det = a * d - b * b;
    let lo = if hi != 0.0 { det / hi } else { half_tr - disc };

    let vector = |lam: f64| -> [f64; 2] {
        // Pick the better conditioned of the two equivalent null-vector forms.
        let v1 = [b, lam - a];
        let v2 = [lam - d, b];
        let n1 = v1[0].hypot(v1[1]);
        let n2 = v2[0].hypot(v2[1]);
        let (v, n) = if n1 >= n2 { (v1, n1) } else { (v2, n2) };
        if n == 0.0 {
            return if a >= d { [1.0, 0.0] } else { [0.0, 1.0] };
        }
        let sign = if v[0] < 0.0 || (v[0] == 0.0 && v[1] < 0.0) {
            -1.0
        } else {
            1.0
        };
        [sign * v[0] / n, sign * v[1] / n]
    };
    let v_hi = vector(hi);
    // orthogonal complement, same sign convention
    let v_lo = if v_hi[1] > 0.0 {
        [v_hi[1], -v_hi[0]]
    } else {
        [-v_hi[1], v_hi[0]]
    };
    [(hi, v_hi), (lo, v_lo)]
}

/// One heat bath and the spins its `sigma_+/-` operators act on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathSpec {
    pub side: Side,
    pub beta: f64,
    pub lambda: f64,
    /// 0-based spin indices; each gets its own private contact.
    pub target_sites: Vec<usize>,
}

pub fn bath_specs(spec: &SystemSpec) -> Vec<BathSpec> {
    let last = spec.n_sites - 1;
    let sides = [
        (Side::Left, spec.beta_left, 0),
        (Side::Right, spec.beta_right, last),
    ];
    sides
        .into_iter()
        .map(|(side, beta, site)| BathSpec {
            side,
            beta,
            lambda: spec.lambda,
            target_sites: spec.spins_of_site(site),
        })
        .collect()
}

/// A single bath-spin contact with its full coefficient matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BathContact {
    pub side: Side,
    pub spin: usize,
    pub gamma: [[f64; 2]; 2],
}

impl BathContact {
    pub fn new(
        side: Side,
        spin: usize,
        omega: f64,
        beta: f64,
        lambda: f64,
    ) -> Result<Self, BathError> {
        Ok(Self {
            side,
            spin,
            gamma: gamma_matrix(omega, beta, lambda)?,
        })
    }
}

/// All bath contacts of a model; private baths see the bare splitting `omega`.
pub fn bath_contacts(spec: &SystemSpec) -> Result<Vec<BathContact>, BathError> {
    spec.validate()?;
    let mut out = Vec::new();
    for bath in bath_specs(spec) {
        let gamma = gamma_matrix(spec.omega, bath.beta, bath.lambda)?;
        for &spin in &bath.target_sites {
            out.push(BathContact {
                side: bath.side,
                spin,
                gamma,
            });
        }
    }
    Ok(out)
}

/// Lindblad channel `alpha (E rho E^+ - {E^+ E, rho} / 2)`.
#[derive(Debug, Clone)]
pub struct JumpChannel<T> {
    pub operator: CsrOperator<T>,
    pub rate: T,
    pub side: Side,
    pub spin: usize,
}

/// Diagonalizes each contact's coefficient matrix into jump channels.
pub fn build_channels<T: Real>(spec: &SystemSpec) -> Result<Vec<JumpChannel<T>>, BathError> {
    let n = spec.n_spins();
    let mut channels = Vec::new();
    for contact in bath_contacts(spec)? {
        channels.extend(contact_channels(n, &contact)?);
    }
    Ok(channels)
}

/// Channels of a single contact on an `n_spins` register.
pub fn contact_channels<T: Real>(
    n_spins: usize,
    contact: &BathContact,
) -> Result<Vec<JumpChannel<T>>, BathError> {
    let trace = contact.gamma[0][0] + contact.gamma[1][1];
    let plus = CsrOperator::<T>::embed(n_spins, &[(contact.spin, pauli::plus())]);
    let minus = CsrOperator::<T>::embed(n_spins, &[(contact.spin, pauli::minus())]);
    let mut out = Vec::new();
    for (alpha, [u, v]) in symmetric_eigen2(&contact.gamma) {
        if alpha <= RANK_CUTOFF * trace {
            continue;
        }
        let operator = plus
            .linear_combination(
                Cplx::new(T::lit(u), T::zero()),
                &minus,
                Cplx::new(T::lit(v), T::zero()),
            )
            .map_err(ModelError::from)?
            .with_hermitian_flag(false);
        out.push(JumpChannel {
            operator,
            rate: T::lit(alpha),
            side: contact.side,
            spin: contact.spin,
        });
    }
    Ok(out)
}
