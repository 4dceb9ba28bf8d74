//! Exact reference solver for small systems.
//!
//! The Liouvillian is assembled as a dense `d^2 x d^2` matrix acting on the
//! column-stacked density matrix, `vec(A X B) = (B^T kron A) vec(X)`. The
//! stationary state is the right singular vector of the smallest singular
//! value; time evolution uses the dense matrix exponential.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baths::{
    bath_contacts, build_channels, contact_channels, BathContact, BathError, JumpChannel, Side,
};
use crate::model::{Model, ModelError, SystemSpec};
use crate::sparse::{pauli, CsrOperator, SparseError};

type Op = CsrOperator<f64>;

/// Default spin limit; a dense 6-spin Liouvillian already takes 256 MiB.
pub const DEFAULT_ORACLE_MAX_SPINS: usize = 6;
/// Hard ceiling for [`OracleLimits::max_spins`].
pub const ORACLE_SPIN_CEILING: usize = 8;

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const POSITIVITY_TOL: f64 = 1e-8;
/// The second-smallest singular value must exceed this for a unique steady state.
pub const NULL_GAP_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("{spins} spins exceed the oracle limit of {max}")]
    TooLarge { spins: usize, max: usize },
    #[error("oracle limit {0} is above the ceiling of {ORACLE_SPIN_CEILING} spins")]
    InvalidLimit(usize),
    #[error("dimension {0} is not a power of two")]
    NotQubits(usize),
    #[error("steady state is not unique: second singular value {second:e} <= {NULL_GAP_TOL:e}")]
    DegenerateNullSpace { smallest: f64, second: f64 },
    #[error("density matrix invariant `{kind}` violated by {deviation:e}")]
    Invariant { kind: &'static str, deviation: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Bath(#[from] BathError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleLimits {
    pub max_spins: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self {
            max_spins: DEFAULT_ORACLE_MAX_SPINS,
        }
    }
}

impl OracleLimits {
    pub fn new(max_spins: usize) -> Result<Self, OracleError> {
        if max_spins > ORACLE_SPIN_CEILING {
            return Err(OracleError::InvalidLimit(max_spins));
        }
        Ok(Self { max_spins })
    }

    fn check(&self, dim: usize) -> Result<usize, OracleError> {
        if !dim.is_power_of_two() {
            return Err(OracleError::NotQubits(dim));
        }
        let spins = dim.trailing_zeros() as usize;
        if spins > self.max_spins {
            return Err(OracleError::TooLarge {
                spins,
                max: self.max_spins,
            });
        }
        Ok(spins)
    }
}

/// Deviations of a candidate density matrix from the physical constraints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    /// `max |rho - rho^+|`.
    pub hermiticity: f64,
    /// `|tr rho - 1|`.
    pub trace: f64,
    pub min_eigenvalue: f64,
}

impl InvariantReport {
    fn of(m: &DMatrix<Complex64>) -> Self {
        let hermiticity = (m - m.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        let trace = (m.trace() - Complex64::new(1.0, 0.0)).norm();
        let sym = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
        let min_eigenvalue = sym
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        Self {
            hermiticity,
            trace,
            min_eigenvalue,
        }
    }

    pub fn check(&self) -> Result<(), OracleError> {
        if !(self.hermiticity <= HERMITIAN_TOL) {
            return Err(OracleError::Invariant {
                kind: "hermiticity",
                deviation: self.hermiticity,
            });
        }
        if !(self.trace <= TRACE_TOL) {
            return Err(OracleError::Invariant {
                kind: "trace",
                deviation: self.trace,
            });
        }
        if !(self.min_eigenvalue >= -POSITIVITY_TOL) {
            return Err(OracleError::Invariant {
                kind: "positivity",
                deviation: -self.min_eigenvalue,
            });
        }
        Ok(())
    }
}

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    entries: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn new(entries: DMatrix<Complex64>) -> Result<Self, OracleError> {
        if !entries.is_square() {
            return Err(OracleError::NotQubits(entries.nrows()));
        }
        InvariantReport::of(&entries).check()?;
        Ok(Self { entries })
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        let entries = DMatrix::identity(dim, dim) * Complex64::new(1.0 / dim as f64, 0.0);
        Self { entries }
    }

    /// `|psi><psi| / <psi|psi>`.
    pub fn from_pure(psi: &[Complex64]) -> Self {
        let v = DVector::from_column_slice(psi);
        let n = v.norm_squared();
        let entries = (&v * v.adjoint()) / Complex64::new(n, 0.0);
        Self { entries }
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn invariants(&self) -> InvariantReport {
        InvariantReport::of(&self.entries)
    }

    /// `Re tr(A rho)`.
    pub fn expectation(&self, op: &Op) -> f64 {
        op.iter()
            .map(|(r, c, v)| (v * self.entries[(c, r)]).re)
            .sum()
    }

    pub fn to_vec(&self) -> DVector<Complex64> {
        DVector::from_column_slice(self.entries.as_slice())
    }

    fn from_vec(v: &DVector<Complex64>, dim: usize) -> DMatrix<Complex64> {
        DMatrix::from_column_slice(dim, dim, v.as_slice())
    }
}

/// One term `c (K rho L^+ - {L^+ K, rho} / 2)` of a dissipator.
#[derive(Debug, Clone)]
pub struct DissipatorTerm {
    pub k: Op,
    pub l: Op,
    pub coeff: f64,
}

/// Hamiltonian plus dissipator terms, the input of every oracle routine.
#[derive(Debug, Clone)]
pub struct OpenSystem {
    pub hamiltonian: Op,
    pub terms: Vec<DissipatorTerm>,
}

impl OpenSystem {
    /// Dissipators from the full coefficient matrices in the `(sigma_+, sigma_-)`
    /// basis, without diagonalizing them.
    pub fn from_spec(spec: &SystemSpec) -> Result<Self, OracleError> {
        let model = Model::<f64>::assemble(spec)?;
        let contacts = bath_contacts(spec)?;
        Ok(Self::from_contacts(
            model.hamiltonian,
            spec.n_spins(),
            &contacts,
        ))
    }

    /// Dissipators rebuilt from diagonalized jump channels.
    pub fn from_spec_channels(spec: &SystemSpec) -> Result<Self, OracleError> {
        let model = Model::<f64>::assemble(spec)?;
        Ok(Self::from_channels(
            model.hamiltonian,
            &build_channels(spec)?,
        ))
    }

    pub fn from_contacts(hamiltonian: Op, n_spins: usize, contacts: &[BathContact]) -> Self {
        let mut terms = Vec::new();
        for contact in contacts {
            let f = [
                Op::embed(n_spins, &[(contact.spin, pauli::plus())]),
                Op::embed(n_spins, &[(contact.spin, pauli::minus())]),
            ];
            for (a, row) in contact.gamma.iter().enumerate() {
                for (b, &coeff) in row.iter().enumerate() {
                    if coeff != 0.0 {
                        terms.push(DissipatorTerm {
                            k: f[a].clone(),
                            l: f[b].clone(),
                            coeff,
                        });
                    }
                }
            }
        }
        Self { hamiltonian, terms }
    }

    pub fn from_channels(hamiltonian: Op, channels: &[JumpChannel<f64>]) -> Self {
        let terms = channels
            .iter()
            .map(|ch| DissipatorTerm {
                k: ch.operator.clone(),
                l: ch.operator.clone(),
                coeff: ch.rate,
            })
            .collect();
        Self { hamiltonian, terms }
    }

    /// One spin `(omega/2) sigma_z` attached to a single bath.
    pub fn single_spin(omega: f64, beta: f64, lambda: f64) -> Result<Self, OracleError> {
        let h = Op::embed(1, &[(0, pauli::z())]).scale_real(omega / 2.0);
        let contact = BathContact::new(Side::Left, 0, omega, beta, lambda)?;
        Ok(Self::from_contacts(h, 1, &[contact]))
    }

    /// Same spin and bath as [`Self::single_spin`], as jump channels for trajectories.
    pub fn single_spin_channels(
        omega: f64,
        beta: f64,
        lambda: f64,
    ) -> Result<(Op, Vec<JumpChannel<f64>>), OracleError> {
        let h = Op::embed(1, &[(0, pauli::z())]).scale_real(omega / 2.0);
        let contact = BathContact::new(Side::Left, 0, omega, beta, lambda)?;
        Ok((h, contact_channels(1, &contact)?))
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn liouvillian(&self, limits: &OracleLimits) -> Result<DMatrix<Complex64>, OracleError> {
        let d = self.dim();
        limits.check(d)?;
        let id = Op::identity(d);
        let mut l = DMatrix::zeros(d * d, d * d);
        let i = Complex64::new(0.0, 1.0);
        add_kron(&mut l, &id, &self.hamiltonian, -i);
        add_kron(&mut l, &self.hamiltonian.transpose(), &id, i);
        for t in &self.terms {
            let c = Complex64::new(t.coeff, 0.0);
            // (L^+)^T = conj(L)
            let l_conj = t.l.adjoint().transpose();
            add_kron(&mut l, &l_conj, &t.k, c);
            let decay = t.l.adjoint().matmul(&t.k)?;
            add_kron(&mut l, &id, &decay, c * -0.5);
            add_kron(&mut l, &decay.transpose(), &id, c * -0.5);
        }
        Ok(l)
    }

    pub fn steady_state(&self, limits: &OracleLimits) -> Result<SteadyState, OracleError> {
        let l = self.liouvillian(limits)?;
        steady_state_of(&l, self.dim())
    }

    /// `rho(t) = exp(L t) rho0`, with the invariants re-checked.
    pub fn propagate(
        &self,
        rho0: &DensityMatrix,
        t: f64,
        limits: &OracleLimits,
    ) -> Result<DensityMatrix, OracleError> {
        if t == 0.0 {
            return Ok(rho0.clone());
        }
        let l = self.liouvillian(limits)?;
        let u = (l * Complex64::new(t, 0.0)).exp();
        let v = u * rho0.to_vec();
        DensityMatrix::new(DensityMatrix::from_vec(&v, self.dim()))
    }
}

/// `l += c (a kron b)`.
fn add_kron(l: &mut DMatrix<Complex64>, a: &Op, b: &Op, c: Complex64) {
    let d = b.dim();
    for (ar, ac, av) in a.iter() {
        let s = c * av;
        for (br, bc, bv) in b.iter() {
            l[(ar * d + br, ac * d + bc)] += s * bv;
        }
    }
}

/// Stationary state together with the singular values that certify it.
#[derive(Debug, Clone)]
pub struct SteadyState {
    pub rho: DensityMatrix,
    pub smallest_singular: f64,
    pub second_singular: f64,
}

fn steady_state_of(l: &DMatrix<Complex64>, dim: usize) -> Result<SteadyState, OracleError> {
    let svd = l.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let smallest = svd.singular_values[order[0]];
    let second = svd.singular_values[order[1]];
    if !(second > NULL_GAP_TOL) {
        return Err(OracleError::DegenerateNullSpace { smallest, second });
    }
    // Rows of V^T are conjugated right singular vectors.
    let v: DVector<Complex64> = v_t.row(order[0]).transpose().map(|z| z.conj());
    let mut m = DensityMatrix::from_vec(&v, dim);
    let tr = m.trace();
    m /= tr;
    // Remove rounding-level anti-Hermitian noise.
    let m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    Ok(SteadyState {
        rho: DensityMatrix::new(m)?,
        smallest_singular: smallest,
        second_singular: second,
    })
}

pub fn build_liouvillian(spec: &SystemSpec) -> Result<DMatrix<Complex64>, OracleError> {
    OpenSystem::from_spec(spec)?.liouvillian(&OracleLimits::default())
}

/// The same superoperator assembled from the diagonalized channels.
pub fn liouvillian_from_channels(spec: &SystemSpec) -> Result<DMatrix<Complex64>, OracleError> {
    OpenSystem::from_spec_channels(spec)?.liouvillian(&OracleLimits::default())
}

pub fn steady_state(spec: &SystemSpec) -> Result<DensityMatrix, OracleError> {
    Ok(OpenSystem::from_spec(spec)?
        .steady_state(&OracleLimits::default())?
        .rho)
}

pub fn propagate(
    rho0: &DensityMatrix,
    spec: &SystemSpec,
    t: f64,
) -> Result<DensityMatrix, OracleError> {
    OpenSystem::from_spec(spec)?.propagate(rho0, t, &OracleLimits::default())
}

/// Exact stationary observables of one model, keyed by its spec hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub spec_hash: String,
    pub spec: SystemSpec,
    /// Local energies, subunit order.
    pub site_energies: Vec<f64>,
    /// Bond currents, bond order.
    pub bond_currents: Vec<f64>,
    pub second_singular: f64,
}

impl Fixture {
    pub fn compute(spec: &SystemSpec, limits: &OracleLimits) -> Result<Self, OracleError> {
        let model = Model::<f64>::assemble(spec)?;
        let contacts = bath_contacts(spec)?;
        let system =
            OpenSystem::from_contacts(model.hamiltonian.clone(), spec.n_spins(), &contacts);
        let ss = system.steady_state(limits)?;
        Ok(Self {
            spec_hash: spec.canonical_hash(),
            spec: spec.clone(),
            site_energies: model.local.iter().map(|h| ss.rho.expectation(h)).collect(),
            bond_currents: model
                .currents
                .iter()
                .map(|j| ss.rho.expectation(j))
                .collect(),
            second_singular: ss.second_singular,
        })
    }

    /// Values in the order `site_energies ++ bond_currents`.
    pub fn values(&self) -> Vec<f64> {
        self.site_energies
            .iter()
            .chain(&self.bond_currents)
            .copied()
            .collect()
    }

    /// Writes `<dir>/<spec_hash>.json`.
    pub fn write(&self, dir: &Path) -> io::Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.json", self.spec_hash));
        fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> io::Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}
