//! Spin chain and ladder Hamiltonians and energy-current operators.
//!
//! The total Hamiltonian is `H = sum_mu h_mu + J sum_mu h_{mu,mu+1}`. Local
//! terms carry the Zeeman splitting (plus the rung exchange for ladders), bond
//! terms are stored without the factor `J`, and the current across a bond is
//! `i [J h_{mu,mu+1}, h_mu]`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::scalar::{c, Real};
use crate::sparse::{pauli, CsrOperator, Local2, SparseError};

/// Largest total spin count accepted by the builders unless overridden.
pub const DEFAULT_MAX_SPINS: usize = 24;

/// Largest `J / omega` (and `J' / omega`) accepted without the override flag.
pub const WEAK_COUPLING_LIMIT: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("coupling {name}/omega = {ratio} exceeds the weak-coupling limit {limit}; set allow_strong_coupling to override")]
    WeakCoupling {
        name: &'static str,
        ratio: f64,
        limit: f64,
    },
    #[error("{spins} spins exceed the configured maximum of {max}")]
    TooManySpins { spins: usize, max: usize },
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Chain,
    Ladder,
}

/// Declarative description of one model instance.
///
/// Defaults are the reference parameter set: `J = 0.01`, `omega = 1`,
/// `lambda = 0.01`, `beta_left = 0.5`, `beta_right = 0.25`, isotropic chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSpec {
    pub topology: Topology,
    /// Spins for a chain, rungs for a ladder.
    pub n_sites: usize,
    pub omega: f64,
    /// Alternating field amplitude, chain only.
    pub epsilon: f64,
    pub j_coupling: f64,
    /// `sigma_z sigma_z` anisotropy, chain only.
    pub delta: f64,
    /// Rung exchange, ladder only.
    pub j_prime: f64,
    pub beta_left: f64,
    pub beta_right: f64,
    pub lambda: f64,
    pub allow_strong_coupling: bool,
}

impl Default for SystemSpec {
    fn default() -> Self {
        Self {
            topology: Topology::Chain,
            n_sites: 4,
            omega: 1.0,
            epsilon: 0.0,
            j_coupling: 0.01,
            delta: 1.0,
            j_prime: 0.0,
            beta_left: 0.5,
            beta_right: 0.25,
            lambda: 0.01,
            allow_strong_coupling: false,
        }
    }
}

impl SystemSpec {
    pub fn chain(n_sites: usize, delta: f64) -> Self {
        Self {
            n_sites,
            delta,
            ..Self::default()
        }
    }

    pub fn ladder(n_rungs: usize, j_prime: f64) -> Self {
        Self {
            topology: Topology::Ladder,
            n_sites: n_rungs,
            delta: 0.0,
            j_prime,
            ..Self::default()
        }
    }

    /// Total number of spins `M`.
    pub fn n_spins(&self) -> usize {
        match self.topology {
            Topology::Chain => self.n_sites,
            Topology::Ladder => 2 * self.n_sites,
        }
    }

    pub fn dim(&self) -> usize {
        1usize << self.n_spins()
    }

    pub fn n_bonds(&self) -> usize {
        self.n_sites.saturating_sub(1)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.validate_with_max_spins(DEFAULT_MAX_SPINS)
    }

    pub fn validate_with_max_spins(&self, max_spins: usize) -> Result<(), ModelError> {
        fn bad(name: &'static str, reason: impl Into<String>) -> ModelError {
            ModelError::InvalidParameter {
                name,
                reason: reason.into(),
            }
        }
        fn positive(name: &'static str, v: f64) -> Result<(), ModelError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(bad(name, format!("must be finite and > 0, got {v}")))
            }
        }
        fn non_negative(name: &'static str, v: f64) -> Result<(), ModelError> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(bad(name, format!("must be finite and >= 0, got {v}")))
            }
        }

        if self.n_sites < 2 {
            return Err(bad(
                "n_sites",
                format!("must be >= 2, got {}", self.n_sites),
            ));
        }
        positive("omega", self.omega)?;
        positive("j_coupling", self.j_coupling)?;
        positive("beta_left", self.beta_left)?;
        positive("beta_right", self.beta_right)?;
        positive("lambda", self.lambda)?;
        non_negative("epsilon", self.epsilon)?;
        non_negative("delta", self.delta)?;
        non_negative("j_prime", self.j_prime)?;
        match self.topology {
            Topology::Chain => {
                if self.j_prime != 0.0 {
                    return Err(bad("j_prime", "only meaningful for a ladder, must be 0"));
                }
                if self.epsilon >= 1.0 {
                    return Err(bad(
                        "epsilon",
                        "must be < 1 so every splitting stays positive",
                    ));
                }
            }
            Topology::Ladder => {
                if self.epsilon != 0.0 {
                    return Err(bad("epsilon", "only meaningful for a chain, must be 0"));
                }
                if self.delta != 0.0 {
                    return Err(bad("delta", "only meaningful for a chain, must be 0"));
                }
            }
        }
        if !self.allow_strong_coupling {
            for (name, v) in [("j_coupling", self.j_coupling), ("j_prime", self.j_prime)] {
                let ratio = v / self.omega;
                if ratio > WEAK_COUPLING_LIMIT {
                    return Err(ModelError::WeakCoupling {
                        name,
                        ratio,
                        limit: WEAK_COUPLING_LIMIT,
                    });
                }
            }
        }
        let spins = self.n_spins();
        if spins > max_spins || spins >= usize::BITS as usize {
            return Err(ModelError::TooManySpins {
                spins,
                max: max_spins,
            });
        }
        Ok(())
    }

    /// Zeeman splitting of each chain site (1-based `mu` alternates for `2..N-1`).
    pub fn site_omegas(&self) -> Vec<f64> {
        (1..=self.n_sites)
            .map(|mu| {
                if self.topology == Topology::Chain && mu > 1 && mu < self.n_sites {
                    let sign = if mu % 2 == 0 { 1.0 } else { -1.0 };
                    self.omega * (1.0 + sign * self.epsilon)
                } else {
                    self.omega
                }
            })
            .collect()
    }

    /// Spin indices belonging to subunit `site` (0-based).
    pub fn spins_of_site(&self, site: usize) -> Vec<usize> {
        match self.topology {
            Topology::Chain => vec![site],
            Topology::Ladder => vec![2 * site, 2 * site + 1],
        }
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn canonical_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

type Op<T> = CsrOperator<T>;

fn exchange<T: Real>(n: usize, a: usize, b: usize, zz: f64) -> Result<Op<T>, ModelError> {
    let xx = Op::embed(n, &[(a, pauli::x()), (b, pauli::x())]);
    let yy = Op::embed(n, &[(a, pauli::y()), (b, pauli::y())]);
    let mut op = xx.add(&yy)?;
    if zz != 0.0 {
        let z: Op<T> = Op::embed(n, &[(a, pauli::z()), (b, pauli::z())]);
        op = op.linear_combination(c(1.0, 0.0), &z, c(zz, 0.0))?;
    }
    Ok(op.with_hermitian_flag(true))
}

fn zeeman<T: Real>(n: usize, spin: usize, omega: f64) -> Op<T> {
    let z: Local2<T> = pauli::z();
    Op::embed(n, &[(spin, z)]).scale_real(T::lit(omega / 2.0))
}

/// One local Hamiltonian per subunit.
pub fn build_local_hamiltonians<T: Real>(spec: &SystemSpec) -> Result<Vec<Op<T>>, ModelError> {
    spec.validate()?;
    let n = spec.n_spins();
    match spec.topology {
        Topology::Chain => Ok(spec
            .site_omegas()
            .into_iter()
            .enumerate()
            .map(|(mu, w)| zeeman(n, mu, w))
            .collect()),
        Topology::Ladder => (0..spec.n_sites)
            .map(|mu| {
                let (a, b) = (2 * mu, 2 * mu + 1);
                let field = zeeman::<T>(n, a, spec.omega).add(&zeeman(n, b, spec.omega))?;
                let rung = exchange::<T>(n, a, b, 1.0)?;
                Ok(field
                    .linear_combination(c(1.0, 0.0), &rung, c(spec.j_prime, 0.0))?
                    .with_hermitian_flag(true))
            })
            .collect(),
    }
}

/// One bond operator per adjacent pair of subunits, without the factor `J`.
pub fn build_interaction_hamiltonians<T: Real>(
    spec: &SystemSpec,
) -> Result<Vec<Op<T>>, ModelError> {
    spec.validate()?;
    let n = spec.n_spins();
    (0..spec.n_bonds())
        .map(|mu| match spec.topology {
            Topology::Chain => exchange(n, mu, mu + 1, spec.delta),
            Topology::Ladder => {
                let upper = exchange::<T>(n, 2 * mu, 2 * mu + 2, 1.0)?;
                let lower = exchange::<T>(n, 2 * mu + 1, 2 * mu + 3, 1.0)?;
                Ok(upper.add(&lower)?.with_hermitian_flag(true))
            }
        })
        .collect()
}

/// Energy current operators `i [J h_{mu,mu+1}, h_mu]`, one per bond.
///
/// A positive expectation value means energy flows from subunit `mu+1`
/// into subunit `mu`, i.e. from right to left.
pub fn build_current_operators<T: Real>(spec: &SystemSpec) -> Result<Vec<Op<T>>, ModelError> {
    let local = build_local_hamiltonians::<T>(spec)?;
    let bonds = build_interaction_hamiltonians::<T>(spec)?;
    currents_from_parts(spec, &local, &bonds)
}

fn currents_from_parts<T: Real>(
    spec: &SystemSpec,
    local: &[Op<T>],
    bonds: &[Op<T>],
) -> Result<Vec<Op<T>>, ModelError> {
    bonds
        .iter()
        .zip(local)
        .map(|(bond, h)| {
            let comm = bond.commutator(h)?;
            Ok(comm
                .scale(c(0.0, spec.j_coupling))
                .with_hermitian_flag(true))
        })
        .collect()
}

/// All operators of one model instance, built once and shared read-only.
#[derive(Debug, Clone)]
pub struct Model<T> {
    pub spec: SystemSpec,
    pub local: Vec<Op<T>>,
    pub bonds: Vec<Op<T>>,
    pub currents: Vec<Op<T>>,
    pub hamiltonian: Op<T>,
}

impl<T: Real> Model<T> {
    pub fn assemble(spec: &SystemSpec) -> Result<Self, ModelError> {
        let local = build_local_hamiltonians::<T>(spec)?;
        let bonds = build_interaction_hamiltonians::<T>(spec)?;
        let currents = currents_from_parts(spec, &local, &bonds)?;
        let mut hamiltonian = Op::zeros(spec.dim());
        for h in &local {
            hamiltonian = hamiltonian.add(h)?;
        }
        for b in &bonds {
            hamiltonian =
                hamiltonian.linear_combination(c(1.0, 0.0), b, c(spec.j_coupling, 0.0))?;
        }
        Ok(Self {
            spec: spec.clone(),
            local,
            bonds,
            currents,
            hamiltonian: hamiltonian.with_hermitian_flag(true),
        })
    }
}
