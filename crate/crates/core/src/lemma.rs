//! Bell-projected maps, the `M_0` and `G_0` matrices, and a numerical harness
//! for the filter/witness proportionality identity.

use nalgebra::{Matrix4, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::{FRAC_PI_4, SQRT_2};

use crate::error::{check_range, Error, Result};
use crate::filtering::{activate, AncillaEmbedding};
use crate::random::{random_product_state, random_state};
use crate::states::bell_projectors;
use crate::tensor::{cr, kron_all, CMatrix, MultipartyOperator, PartyLayout};

/// `(1 - c - s, 1 + c - s, 1 - c + s, 1 + c + s)`, the eigenvalues of
/// `H_theta` on `Phi+, Phi-, Psi+, Psi-`.
pub fn n_theta(theta: f64) -> Vector4<f64> {
    let (mut s, mut c) = theta.sin_cos();
    // At the float nearest pi/4 the two differ by one rounding; equalize them.
    if (c - s).abs() <= f64::EPSILON {
        c = 0.5 * (c + s);
        s = c;
    }
    Vector4::new(1.0 - (c + s), 1.0 + (c - s), 1.0 - (c - s), 1.0 + (c + s))
}

pub fn m0(eta: f64) -> Result<Matrix4<f64>> {
    check_range("eta", eta, 0.0, 1.0)?;
    #[rustfmt::skip]
    let m = Matrix4::new(
        1.0, 0.0, 0.0, 0.0,
        0.0, 1.0 - eta, eta, 0.0,
        0.0, eta, 1.0 - eta, 0.0,
        0.0, 0.0, 0.0, 1.0,
    );
    Ok(m)
}

pub fn g0() -> Matrix4<f64> {
    #[rustfmt::skip]
    let m = Matrix4::new(
        1.0, 1.0, 0.0, 0.0,
        1.0, 1.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0,
    );
    m
}

/// A product Kraus operator `F_1 (x) ... (x) F_n` with
/// `F_i : C^2 -> H_i (x) C^2`.
#[derive(Clone, Debug)]
pub struct ProductKraus {
    factors: Vec<CMatrix>,
    out_dims: Vec<usize>,
}

impl ProductKraus {
    pub fn from_factors(factors: Vec<CMatrix>) -> Result<Self> {
        let mut out_dims = Vec::with_capacity(factors.len());
        for (i, f) in factors.iter().enumerate() {
            if f.ncols() != 2 || f.nrows() % 2 != 0 || f.nrows() == 0 {
                return Err(Error::FilterShape(format!(
                    "party {i}: factor is {}x{}, expected (2h)x2",
                    f.nrows(),
                    f.ncols()
                )));
            }
            out_dims.push(f.nrows() / 2);
        }
        Ok(Self { factors, out_dims })
    }

    /// Splits a full operator on `(C^2)^n -> prod_i (H_i (x) C^2)` into
    /// per-party factors, rejecting operators that do not factor.
    pub fn from_full(k: &CMatrix, out_dims: &[usize]) -> Result<Self> {
        let n = out_dims.len();
        let rows: Vec<usize> = out_dims.iter().map(|h| 2 * h).collect();
        let expected_rows: usize = rows.iter().product();
        if k.nrows() != expected_rows || k.ncols() != 1 << n {
            return Err(Error::DimensionMismatch {
                expected: expected_rows,
                found: k.nrows(),
            });
        }
        let mut factors = Vec::with_capacity(n);
        let mut rest = k.clone();
        for &r0 in rows.iter().take(n.saturating_sub(1)) {
            let c0 = 2;
            let (rr, cc) = (rest.nrows() / r0, rest.ncols() / c0);
            // Realignment: rank one iff `rest = A (x) B`.
            let realigned = CMatrix::from_fn(r0 * c0, rr * cc, |a, b| {
                let (i0, j0) = (a / c0, a % c0);
                let (i1, j1) = (b / cc, b % cc);
                rest[(i0 * rr + i1, j0 * cc + j1)]
            });
            let svd = realigned.svd(true, true);
            let sv = &svd.singular_values;
            let (imax, smax) = sv.argmax();
            let total = sv.norm();
            if total == 0.0 {
                return Err(Error::NonProductKraus(0.0));
            }
            let residual = (total * total - smax * smax).max(0.0).sqrt() / total;
            if residual > 1e-10 {
                return Err(Error::NonProductKraus(residual));
            }
            let u = svd.u.as_ref().expect("requested").column(imax).into_owned();
            let vt = svd.v_t.as_ref().expect("requested").row(imax).into_owned();
            let root = smax.sqrt();
            factors.push(CMatrix::from_fn(r0, c0, |a, b| u[a * c0 + b] * cr(root)));
            rest = CMatrix::from_fn(rr, cc, |a, b| vt[a * cc + b] * cr(root));
        }
        factors.push(rest);
        Self::from_factors(factors)
    }

    pub fn factors(&self) -> &[CMatrix] {
        &self.factors
    }

    pub fn n_parties(&self) -> usize {
        self.factors.len()
    }

    pub fn out_dims(&self) -> &[usize] {
        &self.out_dims
    }

    pub fn full(&self) -> CMatrix {
        kron_all(&self.factors)
    }
}

/// The sixteen operators `omega^{rs}` on `(x)_i H_i` and their traces.
#[derive(Clone, Debug)]
pub struct ProjectedMap {
    /// `omega[r][s]`.
    pub omega: Vec<Vec<MultipartyOperator>>,
    pub m: Matrix4<f64>,
}

fn omega_layout(out_dims: &[usize]) -> Result<PartyLayout> {
    PartyLayout::new(
        out_dims
            .iter()
            .map(|&h| if h > 1 { vec![h] } else { vec![] })
            .collect(),
    )
}

/// `omega^{rs} = 2^{-(n-2)} tr_{''}[(I (x) Pi_r (x) I) Omega(Pi_s (x) I)]`
/// for the separable map `Omega(x) = sum_k K_k x K_k^dagger`.
pub fn project_map(kraus: &[ProductKraus], n: usize) -> Result<ProjectedMap> {
    if n < 2 {
        return Err(Error::InvalidLayout(format!("need at least two parties, got {n}")));
    }
    let out_dims = match kraus.first() {
        Some(k) => k.out_dims().to_vec(),
        None => vec![1; n],
    };
    for k in kraus {
        if k.n_parties() != n || k.out_dims() != out_dims.as_slice() {
            return Err(Error::FilterShape(format!(
                "Kraus operator with outputs {:?}, expected {n} parties with outputs {out_dims:?}",
                k.out_dims()
            )));
        }
    }
    let big_d: usize = out_dims.iter().product();
    let rest = 1usize << (n - 2);
    let norm = 1.0 / rest as f64;
    let bell = bell_projectors();

    // Output legs are party-major (h_i, q_i); move to (h_1..h_n, q_1..q_n).
    let out_layout = PartyLayout::new(
        out_dims
            .iter()
            .map(|&h| if h > 1 { vec![h, 2] } else { vec![2] })
            .collect(),
    )?;
    let mut h_legs = Vec::new();
    let mut q_legs = Vec::new();
    let mut leg = 0;
    for &h in &out_dims {
        if h > 1 {
            h_legs.push(leg);
            leg += 1;
        }
        q_legs.push(leg);
        leg += 1;
    }
    let perm: Vec<usize> = h_legs.iter().chain(&q_legs).copied().collect();
    let mut sorted_dims: Vec<usize> = out_dims.iter().copied().filter(|&h| h > 1).collect();
    sorted_dims.extend(std::iter::repeat_n(2, n));
    let sorted_layout = PartyLayout::per_leg(&sorted_dims)?;
    let keep: Vec<usize> = (0..h_legs.len()).collect();
    let om_layout = omega_layout(&out_dims)?;

    let mut omega = Vec::with_capacity(4);
    let mut m = Matrix4::zeros();
    for (r, pr) in bell.iter().enumerate() {
        let proj = kron_all([&CMatrix::identity(big_d, big_d), pr.matrix(), &CMatrix::identity(rest, rest)]);
        let mut row = Vec::with_capacity(4);
        for (s, ps) in bell.iter().enumerate() {
            let input = ps.matrix().kronecker(&CMatrix::identity(rest, rest));
            let mut out = CMatrix::zeros(big_d << n, big_d << n);
            for k in kraus {
                let f = k.full();
                out += &f * &input * f.adjoint();
            }
            let sorted = MultipartyOperator::new(out_layout.clone(), out)?.permute_legs(&perm, sorted_layout.clone())?;
            let projected = MultipartyOperator::new(sorted_layout.clone(), &proj * sorted.matrix())?;
            let reduced = if keep.is_empty() {
                CMatrix::from_element(1, 1, projected.trace())
            } else {
                projected.partial_trace(&keep)?.into_matrix()
            };
            let w = reduced * cr(norm);
            let w = (&w + w.adjoint()) * cr(0.5);
            m[(r, s)] = w.trace().re;
            row.push(MultipartyOperator::new(om_layout.clone(), w)?);
        }
        omega.push(row);
    }
    Ok(ProjectedMap { omega, m })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum RhoSampling {
    /// Random ancilla on the full space.
    Random,
    /// Tensor product of random single-party ancillas.
    Product,
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityCase {
    pub label: String,
    pub tau_layout: PartyLayout,
    /// Omit the ancilla qubit on parties beyond the first two.
    pub reduced: bool,
    pub rho: RhoSampling,
    pub trials: usize,
}

impl IdentityCase {
    pub fn new(label: &str, tau_layout: PartyLayout, reduced: bool, rho: RhoSampling, trials: usize) -> Self {
        Self {
            label: label.to_string(),
            tau_layout,
            reduced,
            rho,
            trials,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityCaseReport {
    pub label: String,
    pub trials: usize,
    pub nu: f64,
    pub max_relative_deviation: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityReport {
    pub tolerance: f64,
    pub max_relative_deviation: f64,
    pub passed: bool,
    pub cases: Vec<IdentityCaseReport>,
}

pub const IDENTITY_TOLERANCE: f64 = 1e-10;

/// The two-party qudit and three-party reduced cases, plus product ancillas.
pub fn standard_identity_cases(trials_n2: usize, trials_n3: usize) -> Vec<IdentityCase> {
    let qudits = |d: usize| PartyLayout::new(vec![vec![d], vec![d]]).expect("valid dims");
    vec![
        IdentityCase::new("n=2 d=2", qudits(2), true, RhoSampling::Random, trials_n2),
        IdentityCase::new("n=2 d=3", qudits(3), true, RhoSampling::Random, trials_n2),
        IdentityCase::new("n=3 d=2 reduced", PartyLayout::qubits(3), true, RhoSampling::Random, trials_n3),
        IdentityCase::new("n=2 d=2 product", qudits(2), true, RhoSampling::Product, trials_n3),
    ]
}

/// Samples `rho`, `tau` per case and compares the filtered witness with
/// `nu tr[rho (tau^T (x) H (x) I)]`. The deviation is relative to
/// `nu ||tau||_op (1 + sqrt 2)`, an upper bound on the magnitude of the
/// right-hand side.
pub fn verify_eq9(cases: &[IdentityCase], seed: u64) -> Result<IdentityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::with_capacity(cases.len());
    for case in cases {
        let emb = AncillaEmbedding::for_state(&case.tau_layout, case.reduced);
        let mut worst: f64 = 0.0;
        for _ in 0..case.trials {
            let rho = match case.rho {
                RhoSampling::Random => random_state(emb.rho_layout(), &mut rng),
                RhoSampling::Product => random_product_state(emb.rho_layout(), &mut rng),
            };
            let tau = random_state(&case.tau_layout, &mut rng);
            let r = activate(&rho, &tau, FRAC_PI_4)?;
            let scale = r.nu * tau.eig()?.max() * (1.0 + SQRT_2);
            worst = worst.max(r.nu_identity_deviation / scale);
        }
        reports.push(IdentityCaseReport {
            label: case.label.clone(),
            trials: case.trials,
            nu: emb.nu(),
            max_relative_deviation: worst,
            passed: worst <= IDENTITY_TOLERANCE,
        });
    }
    let max_relative_deviation = reports.iter().map(|c| c.max_relative_deviation).fold(0.0, f64::max);
    Ok(IdentityReport {
        tolerance: IDENTITY_TOLERANCE,
        max_relative_deviation,
        passed: reports.iter().all(|c| c.passed),
        cases: reports,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: &str, deviation: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            deviation,
            tolerance,
            passed: deviation <= tolerance,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LemmaSuite {
    pub checks: Vec<Check>,
    pub identity: IdentityReport,
    pub passed: bool,
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Spot checks on `n_theta`, `M_0`, `G_0`, `project_map`, and the
/// proportionality identity.
pub fn lemma_suite(seed: u64) -> Result<LemmaSuite> {
    let mut checks = Vec::new();
    let n4 = n_theta(FRAC_PI_4);
    let mut dev: f64 = 0.0;
    for eta in [0.0, 0.25, 0.5, 1.0] {
        dev = dev.max((m0(eta)? * n4 - n4).amax());
    }
    checks.push(Check::new("m0 fixes n_theta(pi/4)", dev, 0.0));
    checks.push(Check::new(
        "g0 row sums",
        (g0().column_sum() - Vector4::new(2.0, 2.0, 0.0, 0.0)).amax(),
        0.0,
    ));

    let bell = bell_projectors();
    let mut dev: f64 = 0.0;
    for k in 0..50 {
        let theta = std::f64::consts::PI * k as f64 / 49.0 - std::f64::consts::FRAC_PI_2;
        let n = n_theta(theta);
        let mut rec = CMatrix::zeros(4, 4);
        for r in 0..4 {
            rec += bell[r].matrix() * cr(n[r]);
        }
        let h = crate::states::h_theta_any(theta);
        dev = dev.max(max_abs(&(rec - h.matrix())));
    }
    checks.push(Check::new("Bell-diagonal reconstruction of H_theta", dev, 1e-14));

    let id = ProductKraus::from_factors(vec![CMatrix::identity(2, 2), CMatrix::identity(2, 2)])?;
    let pm = project_map(&[id], 2)?;
    checks.push(Check::new("identity map gives M = I", (pm.m - Matrix4::identity()).amax(), 1e-14));

    let identity = verify_eq9(&standard_identity_cases(20, 5), seed)?;
    let passed = checks.iter().all(|c| c.passed) && identity.passed;
    Ok(LemmaSuite { checks, identity, passed })
}

/// `H_theta` reassembled from the Bell projectors.
pub fn h_theta_from_bell(theta: f64) -> Result<MultipartyOperator> {
    let n = n_theta(theta);
    let bell = bell_projectors();
    let mut acc = MultipartyOperator::zeros(PartyLayout::qubits(2));
    for r in 0..4 {
        acc = acc.add(&bell[r].scaled(n[r]))?;
    }
    Ok(acc)
}
