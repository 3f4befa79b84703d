//! Small dense SDP: minimize `tr(rho W)` over unit-trace states that stay
//! positive under a set of partial transposes.
//!
//! The solver is over-relaxed consensus ADMM. The variable `X` lives on the
//! spectraplex `{X >= 0, tr X = 1}`; one copy `Z_c` per cut lives in the cone
//! `{Z : Z^{T_c} >= 0}` and is tied to `X` by `X = Z_c`. Both projections need
//! one Hermitian eigendecomposition each. The penalty is adapted by residual
//! balancing.
//!
//! Two certificates are recomputed every few iterations:
//!
//! * upper: the iterate `X` is mixed with `I/N` just enough to satisfy every
//!   cone exactly, and `tr(rho W)` is evaluated on the mixture;
//! * lower: the scaled duals give `S_c = P_c(-rho_pen U_c)` in the (self-dual)
//!   cone, and weak duality yields `lambda_min(W - sum_c S_c)`.
//!
//! When `W` is real symmetric all iterates are kept real (partial transposes
//! of real symmetric matrices stay real symmetric, and the real restriction
//! loses nothing since `Re rho` is feasible whenever `rho` is). Complex
//! iterates are used otherwise, or when `SdpConfig::real_path` is off.

use nalgebra::{ComplexField, DMatrix};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_4;

use crate::error::{Error, Result};
use crate::filtering::AncillaEmbedding;
use crate::search::bisect;
use crate::states::werner_d;
use crate::tensor::{hermitian_defect, CMatrix, MultipartyOperator, PartialTransposeMap, PartyLayout, HERMITIAN_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SdpConfig {
    /// Allowed negative eigenvalue of the returned state and its transposes.
    pub eps_cone: f64,
    /// Target gap between the upper and lower certificates.
    pub eps_obj: f64,
    /// Target primal and dual ADMM residuals (Frobenius).
    pub eps_res: f64,
    pub max_iter: usize,
    /// Over-relaxation parameter in (0, 2).
    pub relaxation: f64,
    /// Certificates are refreshed every `check_every` iterations.
    pub check_every: usize,
    /// Keep iterates real when the cost is real symmetric.
    pub real_path: bool,
}

impl Default for SdpConfig {
    fn default() -> Self {
        Self {
            eps_cone: 1e-8,
            eps_obj: 1e-7,
            eps_res: 1e-8,
            max_iter: 50_000,
            relaxation: 1.5,
            check_every: 20,
            real_path: true,
        }
    }
}

impl SdpConfig {
    fn validate(&self) -> Result<()> {
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return Err(Error::OutOfRange {
                name: "relaxation",
                value: self.relaxation,
                min: 0.0,
                max: 2.0,
            });
        }
        for (name, v) in [("eps_cone", self.eps_cone), ("eps_obj", self.eps_obj), ("eps_res", self.eps_res)] {
            if !(v > 0.0) {
                return Err(Error::OutOfRange {
                    name,
                    value: v,
                    min: 0.0,
                    max: f64::INFINITY,
                });
            }
        }
        Ok(())
    }
}

/// Cost operator and the leg sets whose partial transposes must stay PSD.
#[derive(Clone, Debug)]
pub struct SdpProblem {
    cost: MultipartyOperator,
    cuts: Vec<Vec<usize>>,
    maps: Vec<PartialTransposeMap>,
}

impl SdpProblem {
    pub fn new(cost: MultipartyOperator, cuts: Vec<Vec<usize>>) -> Result<Self> {
        let defect = cost.hermitian_defect();
        if defect > HERMITIAN_TOL {
            return Err(Error::NotHermitian(defect));
        }
        let maps = cuts
            .iter()
            .map(|legs| PartialTransposeMap::new(cost.layout(), legs))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { cost, cuts, maps })
    }

    /// PPT constraint across all legs of `party` only.
    pub fn party_cut(cost: MultipartyOperator, party: usize) -> Result<Self> {
        if party >= cost.layout().n_parties() {
            return Err(Error::InvalidLegs(format!("no party {party}")));
        }
        let legs = cost.layout().party_legs(party).collect();
        Self::new(cost, vec![legs])
    }

    pub fn cost(&self) -> &MultipartyOperator {
        &self.cost
    }

    pub fn layout(&self) -> &PartyLayout {
        self.cost.layout()
    }

    pub fn cuts(&self) -> &[Vec<usize>] {
        &self.cuts
    }

    fn is_real(&self) -> bool {
        self.cost.matrix().iter().all(|z| z.im == 0.0)
    }
}

/// ADMM iterates, reusable as a warm start for a nearby problem with the same
/// layout and cuts.
#[derive(Clone, Debug)]
pub struct WarmStart {
    x: CMatrix,
    z: Vec<CMatrix>,
    u: Vec<CMatrix>,
    rho: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SdpSolution {
    /// `tr(rho* W)`; an upper bound on the true optimum since `rho*` is feasible.
    pub optimum: f64,
    pub optimizer: MultipartyOperator,
    /// `max_c ||X - Z_c||_F` at the last iteration.
    pub primal_residual: f64,
    /// `rho_pen * max_c ||Z_c - Z_c^prev||_F` at the last iteration.
    pub dual_residual: f64,
    /// Largest negative part among the eigenvalues of `rho*` and its transposes.
    pub cone_residual: f64,
    pub trace_residual: f64,
    pub dual_bound: f64,
    /// `optimum - dual_bound`.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Dual certificates `S_c`, one per cut.
    #[serde(skip)]
    pub duals: Vec<MultipartyOperator>,
    #[serde(skip)]
    pub warm: Option<WarmStart>,
}

impl SdpSolution {
    /// `Some(true)` when a feasible point has negative value, `Some(false)`
    /// when the dual bound is non-negative, `None` otherwise.
    pub fn certified_negative(&self) -> Option<bool> {
        if self.optimum < 0.0 {
            Some(true)
        } else if self.dual_bound >= 0.0 {
            Some(false)
        } else {
            None
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum StopRule {
    Converge,
    /// Also stop as soon as the sign of the optimum is certified.
    Sign,
}

trait Field: ComplexField<RealField = f64> + Copy {
    fn from_c64(z: Complex64) -> Self;
    fn to_c64(self) -> Complex64;
}

impl Field for f64 {
    fn from_c64(z: Complex64) -> Self {
        z.re
    }
    fn to_c64(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
}

impl Field for Complex64 {
    fn from_c64(z: Complex64) -> Self {
        z
    }
    fn to_c64(self) -> Complex64 {
        self
    }
}

fn to_field<T: Field>(m: &CMatrix) -> DMatrix<T> {
    m.map(T::from_c64)
}

fn to_complex<T: Field>(m: &DMatrix<T>) -> CMatrix {
    m.map(|x| x.to_c64())
}

fn symmetrize<T: Field>(m: DMatrix<T>) -> DMatrix<T> {
    (&m + m.adjoint()) * T::from_real(0.5)
}

/// `sum_k w_k v_k v_k^dagger` over the selected eigenpairs.
fn rebuild<T: Field>(vectors: &DMatrix<T>, picks: &[(usize, f64)]) -> DMatrix<T> {
    let n = vectors.nrows();
    let v = DMatrix::from_fn(n, picks.len(), |i, j| vectors[(i, picks[j].0)]);
    let vw = DMatrix::from_fn(n, picks.len(), |i, j| v[(i, j)] * T::from_real(picks[j].1));
    symmetrize(vw * v.adjoint())
}

fn project_psd<T: Field>(m: &DMatrix<T>) -> DMatrix<T> {
    let eig = m.clone().symmetric_eigen();
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l > 0.0 {
            pos.push((k, l));
        } else if l < 0.0 {
            neg.push((k, l));
        }
    }
    if neg.is_empty() {
        return m.clone();
    }
    if neg.len() < pos.len() {
        symmetrize(m - rebuild(&eig.eigenvectors, &neg))
    } else {
        rebuild(&eig.eigenvectors, &pos)
    }
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let (mut cum, mut theta) = (0.0, 0.0);
    for (k, &v) in sorted.iter().enumerate() {
        cum += v;
        let t = (cum - 1.0) / (k + 1) as f64;
        if v - t > 0.0 {
            theta = t;
        }
    }
    values.iter().map(|&v| (v - theta).max(0.0)).collect()
}

fn project_spectraplex<T: Field>(m: &DMatrix<T>) -> DMatrix<T> {
    let eig = m.clone().symmetric_eigen();
    let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let picks: Vec<(usize, f64)> = project_simplex(&values)
        .into_iter()
        .enumerate()
        .filter(|&(_, w)| w > 0.0)
        .collect();
    rebuild(&eig.eigenvectors, &picks)
}

fn min_eig<T: Field>(m: &DMatrix<T>) -> f64 {
    m.clone().symmetric_eigenvalues().min()
}

fn trace_product<T: Field>(a: &DMatrix<T>, b: &DMatrix<T>) -> f64 {
    a.iter().zip(b.transpose().iter()).map(|(x, y)| (*x * *y).real()).sum()
}

struct Certificates<T> {
    state: DMatrix<T>,
    upper: f64,
    lower: f64,
    duals: Vec<DMatrix<T>>,
}

/// Mixes `x` with `I/N` to satisfy every cone, and builds dual certificates.
fn certificates<T: Field>(w: &DMatrix<T>, maps: &[PartialTransposeMap], x: &DMatrix<T>, u: &[DMatrix<T>], rho: f64) -> Certificates<T> {
    let n = x.nrows();
    let inv_n = 1.0 / n as f64;
    let mut lam = min_eig(x);
    for map in maps {
        lam = lam.min(min_eig(&map.apply(x)));
    }
    let state = if lam < 0.0 {
        let t = -lam / (inv_n - lam);
        x * T::from_real(1.0 - t) + DMatrix::identity(n, n) * T::from_real(t * inv_n)
    } else {
        x.clone()
    };
    let upper = trace_product(w, &state);

    let duals: Vec<DMatrix<T>> = maps
        .iter()
        .zip(u)
        .map(|(map, uc)| map.apply(&project_psd(&map.apply(&(uc * T::from_real(-rho))))))
        .collect();
    let mut slack = w.clone();
    for s in &duals {
        slack -= s;
    }
    let lower = min_eig(&slack);
    Certificates {
        state,
        upper,
        lower,
        duals,
    }
}

fn solve_generic<T: Field>(
    problem: &SdpProblem,
    config: &SdpConfig,
    stop: StopRule,
    warm: Option<&WarmStart>,
) -> SdpSolution {
    let w: DMatrix<T> = to_field(problem.cost.matrix());
    let maps = &problem.maps;
    let n = w.nrows();
    let m = maps.len();
    let alpha = config.relaxation;
    let check_every = config.check_every.max(1);

    let (mut x, mut z, mut u, mut rho) = match warm {
        Some(ws) if ws.x.nrows() == n && ws.z.len() == m => (
            to_field::<T>(&ws.x),
            ws.z.iter().map(to_field::<T>).collect::<Vec<_>>(),
            ws.u.iter().map(to_field::<T>).collect::<Vec<_>>(),
            ws.rho,
        ),
        _ => {
            let x0 = DMatrix::<T>::identity(n, n) * T::from_real(1.0 / n as f64);
            let rho0 = (w.norm() / (n as f64).sqrt()).max(1e-6);
            (x0.clone(), vec![x0; m], vec![DMatrix::zeros(n, n); m], rho0)
        }
    };

    let (mut r, mut s) = (f64::INFINITY, f64::INFINITY);
    let mut iterations = 0;
    let mut cert = None;
    let mut converged = false;
    while iterations < config.max_iter {
        iterations += 1;
        let mut target = DMatrix::<T>::zeros(n, n);
        for (zc, uc) in z.iter().zip(&u) {
            target += zc - uc;
        }
        target = target * T::from_real(1.0 / m as f64) - &w * T::from_real(1.0 / (rho * m as f64));
        x = project_spectraplex(&target);

        r = 0.0;
        s = 0.0;
        for c in 0..m {
            let xh = &x * T::from_real(alpha) + &z[c] * T::from_real(1.0 - alpha);
            let v = &xh + &u[c];
            let zn = maps[c].apply(&project_psd(&maps[c].apply(&v)));
            u[c] += xh - &zn;
            s = s.max((&zn - &z[c]).norm());
            r = r.max((&x - &zn).norm());
            z[c] = zn;
        }
        s *= rho;

        if iterations % check_every == 0 || iterations == config.max_iter {
            let ct = certificates(&w, maps, &x, &u, rho);
            let gap = ct.upper - ct.lower;
            converged = (r <= config.eps_res && s <= config.eps_res) || gap <= config.eps_obj;
            let certified = ct.upper < 0.0 || ct.lower >= 0.0;
            cert = Some(ct);
            if converged || (stop == StopRule::Sign && certified) {
                break;
            }
            // Residual balancing.
            if r > 10.0 * s {
                rho *= 2.0;
                for uc in u.iter_mut() {
                    *uc *= T::from_real(0.5);
                }
            } else if s > 10.0 * r {
                rho *= 0.5;
                for uc in u.iter_mut() {
                    *uc *= T::from_real(2.0);
                }
            }
        }
    }
    let ct = cert.unwrap_or_else(|| certificates(&w, maps, &x, &u, rho));

    let mut cone_min = min_eig(&ct.state);
    for map in maps {
        cone_min = cone_min.min(min_eig(&map.apply(&ct.state)));
    }
    let trace: f64 = (0..n).map(|i| ct.state[(i, i)].real()).sum();
    let layout = problem.layout().clone();
    SdpSolution {
        optimum: ct.upper,
        optimizer: MultipartyOperator::new(layout.clone(), to_complex(&ct.state)).expect("dimension matches"),
        primal_residual: r,
        dual_residual: s,
        cone_residual: (-cone_min).max(0.0),
        trace_residual: (trace - 1.0).abs(),
        dual_bound: ct.lower,
        gap: ct.upper - ct.lower,
        iterations,
        converged: converged && (-cone_min) <= config.eps_cone,
        duals: ct
            .duals
            .iter()
            .map(|d| MultipartyOperator::new(layout.clone(), to_complex(d)).expect("dimension matches"))
            .collect(),
        warm: Some(WarmStart {
            x: to_complex(&x),
            z: z.iter().map(to_complex).collect(),
            u: u.iter().map(to_complex).collect(),
            rho,
        }),
    }
}

/// Without cuts the minimum over states is the smallest eigenvalue of `W`.
fn solve_unconstrained(problem: &SdpProblem) -> Result<SdpSolution> {
    let es = problem.cost.eig()?;
    let v = es.eigenvectors.column(0).into_owned();
    let state = MultipartyOperator::from_ket(problem.layout().clone(), &v)?;
    let optimum = problem.cost.expectation(&state)?;
    Ok(SdpSolution {
        optimum,
        optimizer: state,
        primal_residual: 0.0,
        dual_residual: 0.0,
        cone_residual: 0.0,
        trace_residual: (v.norm_squared() - 1.0).abs(),
        dual_bound: es.min(),
        gap: optimum - es.min(),
        iterations: 0,
        converged: true,
        duals: Vec::new(),
        warm: None,
    })
}

fn solve(problem: &SdpProblem, config: &SdpConfig, stop: StopRule, warm: Option<&WarmStart>) -> Result<SdpSolution> {
    config.validate()?;
    if problem.maps.is_empty() {
        return solve_unconstrained(problem);
    }
    Ok(if config.real_path && problem.is_real() {
        solve_generic::<f64>(problem, config, stop, warm)
    } else {
        solve_generic::<Complex64>(problem, config, stop, warm)
    })
}

/// Minimizes `tr(rho W)` over the feasible set of `problem`. A run that hits
/// `max_iter` is returned with `converged = false` and its residuals.
pub fn solve_min_witness(problem: &SdpProblem, config: &SdpConfig) -> Result<SdpSolution> {
    solve(problem, config, StopRule::Converge, None)
}

pub fn solve_min_witness_from(problem: &SdpProblem, config: &SdpConfig, warm: Option<&WarmStart>) -> Result<SdpSolution> {
    solve(problem, config, StopRule::Converge, warm)
}

/// `lambda_min(W - sum_c S_c)` for the dual certificates stored in `solution`.
pub fn dual_bound(problem: &SdpProblem, solution: &SdpSolution) -> Result<f64> {
    if !solution.converged {
        return Err(Error::NotConverged(format!(
            "{} iterations, gap {:e}",
            solution.iterations, solution.gap
        )));
    }
    if problem.maps.is_empty() {
        return problem.cost.min_eigenvalue();
    }
    if solution.duals.len() != problem.maps.len() {
        return Err(Error::LayoutMismatch("solution belongs to a different problem".into()));
    }
    let mut slack = problem.cost.clone();
    for s in &solution.duals {
        slack = slack.sub(s)?;
    }
    if hermitian_defect(slack.matrix()) > HERMITIAN_TOL {
        return Err(Error::NotHermitian(hermitian_defect(slack.matrix())));
    }
    slack.min_eigenvalue()
}

/// `werner_d(d, p)^T (x) H_{pi/4}` on the layout `[[d, 2], [d, 2]]`.
pub fn witness_cost(d: usize, p: f64) -> Result<MultipartyOperator> {
    let tau = werner_d(d, p)?;
    AncillaEmbedding::for_state(tau.layout(), true).witness_observable(&tau, FRAC_PI_4)
}

/// Witness minimization over ancillas that are PPT across party 1.
pub fn witness_problem(d: usize, p: f64) -> Result<SdpProblem> {
    SdpProblem::party_cut(witness_cost(d, p)?, 0)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Probe {
    pub p: f64,
    pub optimum: f64,
    pub dual_bound: f64,
    pub iterations: usize,
    pub negative: bool,
    /// Whether the sign is backed by a feasible point or a dual bound.
    pub certified: bool,
    pub resolves: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriticalWeight {
    pub d: usize,
    pub p_star: f64,
    pub lo: f64,
    pub hi: f64,
    /// Largest certificate gap among the probes.
    pub max_gap: f64,
    pub probes: Vec<Probe>,
}

/// Sign of the optimum at `p`. A probe whose certificates straddle zero is
/// re-solved with `eps_obj` divided by ten, at most three times, and then
/// counted as non-negative.
fn classify(d: usize, p: f64, config: &SdpConfig, warm: &mut Option<WarmStart>) -> Result<Probe> {
    let problem = witness_problem(d, p)?;
    let mut cfg = *config;
    let mut resolves = 0;
    let mut iterations = 0;
    loop {
        let sol = solve(&problem, &cfg, StopRule::Sign, warm.as_ref())?;
        iterations += sol.iterations;
        *warm = sol.warm.clone();
        let cert = sol.certified_negative();
        if cert.is_some() || resolves == 3 {
            return Ok(Probe {
                p,
                optimum: sol.optimum,
                dual_bound: sol.dual_bound,
                iterations,
                negative: cert.unwrap_or(false),
                certified: cert.is_some(),
                resolves,
            });
        }
        resolves += 1;
        cfg.eps_obj /= 10.0;
        cfg.eps_res /= 10.0;
    }
}

/// Bisection on `p in [1/(d+1), 1]` for the sign change of the PPT-ancilla
/// witness minimum.
pub fn critical_weight(d: usize, tol: f64, config: &SdpConfig) -> Result<CriticalWeight> {
    critical_weight_on(d, 1.0 / (d as f64 + 1.0), 1.0, tol, config)
}

/// As [`critical_weight`] on a caller-supplied bracket.
pub fn critical_weight_on(d: usize, lo: f64, hi: f64, tol: f64, config: &SdpConfig) -> Result<CriticalWeight> {
    crate::error::check_range("d", d as f64, 2.0, 6.0)?;
    config.validate()?;
    let mut warm = None;
    let mut probes = Vec::new();
    let bracket = bisect(lo, hi, tol, |p| {
        let probe = classify(d, p, config, &mut warm)?;
        let neg = probe.negative;
        probes.push(probe);
        Ok(neg)
    })?;
    let max_gap = probes
        .iter()
        .map(|pr| (pr.optimum - pr.dual_bound).max(0.0))
        .fold(0.0, f64::max);
    Ok(CriticalWeight {
        d,
        p_star: bracket.midpoint(),
        lo: bracket.lo,
        hi: bracket.hi,
        max_gap,
        probes,
    })
}
