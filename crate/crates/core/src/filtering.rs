//! Local filtering (product Kraus operators), the canonical activation
//! protocol, and filter-threshold searches.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::FRAC_PI_4;

use crate::chsh::{horodecki_chsh_max, lemma_witness, ChshSettings};
use crate::error::{check_range, Error, Result};
use crate::search::{bisect, nelder_mead};
use crate::states::{ancilla_rho, ancilla_rho3, h_theta, max_entangled_ket, werner2, werner_d, werner_min_p};
use crate::tensor::{c, cr, kron_all, trace_distance, CMatrix, MultipartyOperator, PartyLayout};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FilterDirection {
    /// `F_i : C^k -> H_i`, the witness convention.
    IntoParty,
    /// `K_i : H_i -> C^k`, a Kraus factor acting on the state.
    OutOfParty,
}

/// One product Kraus operator, stored as one linear map per party.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterBank {
    maps: Vec<CMatrix>,
    direction: FilterDirection,
}

impl FilterBank {
    pub fn new(maps: Vec<CMatrix>, direction: FilterDirection) -> Self {
        Self { maps, direction }
    }

    pub fn into_party(maps: Vec<CMatrix>) -> Self {
        Self::new(maps, FilterDirection::IntoParty)
    }

    pub fn kraus(maps: Vec<CMatrix>) -> Self {
        Self::new(maps, FilterDirection::OutOfParty)
    }

    /// Identity Kraus factor on every party of `layout`.
    pub fn identity(layout: &PartyLayout) -> Self {
        let maps = (0..layout.n_parties())
            .map(|p| {
                let d = layout.party_dim(p);
                CMatrix::identity(d, d)
            })
            .collect();
        Self::kraus(maps)
    }

    pub fn n_parties(&self) -> usize {
        self.maps.len()
    }

    pub fn direction(&self) -> FilterDirection {
        self.direction
    }

    pub fn maps(&self) -> &[CMatrix] {
        &self.maps
    }

    /// Maps in the `C^k -> H_i` direction.
    pub fn into_party_maps(&self) -> Vec<CMatrix> {
        match self.direction {
            FilterDirection::IntoParty => self.maps.clone(),
            FilterDirection::OutOfParty => self.maps.iter().map(|m| m.adjoint()).collect(),
        }
    }

    /// Maps in the `H_i -> C^k` direction.
    pub fn kraus_factors(&self) -> Vec<CMatrix> {
        match self.direction {
            FilterDirection::OutOfParty => self.maps.clone(),
            FilterDirection::IntoParty => self.maps.iter().map(|m| m.adjoint()).collect(),
        }
    }

    /// Multiplies the map of one party by `factor`.
    pub fn scaled(&self, party: usize, factor: f64) -> Self {
        let mut out = self.clone();
        out.maps[party] *= cr(factor);
        out
    }

    pub fn describe(&self) -> String {
        let shapes: Vec<String> = self
            .maps
            .iter()
            .map(|m| format!("{}x{}", m.nrows(), m.ncols()))
            .collect();
        format!("{:?} [{}]", self.direction, shapes.join(", "))
    }
}

/// Result of applying one product Kraus operator.
#[derive(Clone, Debug, Serialize)]
pub struct FilterOutcome {
    /// Normalized post-filter state; `None` when the filter cannot succeed.
    pub post_state: Option<MultipartyOperator>,
    pub success_probability: f64,
    /// Factor applied to the Kraus operator to bring its norm to at most one.
    pub kraus_scale: f64,
}

impl FilterOutcome {
    pub fn is_possible(&self) -> bool {
        self.post_state.is_some()
    }
}

pub(crate) fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Applies `K = K_1 (x) ... (x) K_n`: the post state is proportional to
/// `K state K^dagger`, the success probability is its trace. A product
/// operator norm above one is rescaled to one first (and reported in
/// `kraus_scale`). The output layout has one leg per party of dimension equal
/// to that party's filter output.
pub fn apply_filter(state: &MultipartyOperator, bank: &FilterBank) -> Result<FilterOutcome> {
    let kraus = bank.kraus_factors();
    let layout = state.layout();
    if kraus.len() != layout.n_parties() {
        return Err(Error::FilterShape(format!(
            "{} filters for {} parties",
            kraus.len(),
            layout.n_parties()
        )));
    }
    for (i, k) in kraus.iter().enumerate() {
        if k.ncols() != layout.party_dim(i) || k.nrows() == 0 {
            return Err(Error::FilterShape(format!(
                "party {i}: Kraus factor is {}x{}, party dimension {}",
                k.nrows(),
                k.ncols(),
                layout.party_dim(i)
            )));
        }
    }
    let norm: f64 = kraus.iter().map(spectral_norm).product();
    let kraus_scale = if norm > 1.0 { 1.0 / norm } else { 1.0 };
    let k = kron_all(&kraus) * cr(kraus_scale);
    let out = &k * state.matrix() * k.adjoint();
    let success_probability = out.trace().re;
    let out_layout = PartyLayout::new(kraus.iter().map(|k| vec![k.nrows()]).collect())?;
    let post_state = if success_probability > 1e-14 {
        let m = out * cr(1.0 / success_probability);
        Some(MultipartyOperator::new(out_layout, (&m + m.adjoint()) * cr(0.5))?)
    } else {
        None
    };
    Ok(FilterOutcome {
        post_state,
        success_probability: success_probability.max(0.0),
        kraus_scale,
    })
}

/// How an ancilla `rho` embeds the legs of a tested state `tau`.
///
/// Party `i` of `rho` holds a copy `H_i'` of every leg of party `i` of `tau`,
/// followed by one qubit `H_i''`. The qubit is mandatory on parties 1 and 2
/// and optional on the others (the reduced ancilla space).
///
/// The joint state `rho (x) tau` is regrouped party-major with party `i`
/// holding `[H_i (tau legs), H_i' (rho copy), H_i'' (qubit, if any)]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AncillaEmbedding {
    rho_layout: PartyLayout,
    tau_layout: PartyLayout,
    qubit: Vec<bool>,
}

impl AncillaEmbedding {
    pub fn new(rho_layout: &PartyLayout, tau_layout: &PartyLayout) -> Result<Self> {
        let n = tau_layout.n_parties();
        if n < 2 || rho_layout.n_parties() != n {
            return Err(Error::LayoutMismatch(format!(
                "ancilla has {} parties, state has {n}",
                rho_layout.n_parties()
            )));
        }
        let mut qubit = Vec::with_capacity(n);
        for i in 0..n {
            let t = &tau_layout.parties()[i];
            let r = &rho_layout.parties()[i];
            let prefix_ok = r.len() >= t.len() && &r[..t.len()] == t.as_slice();
            let rest = if prefix_ok { &r[t.len()..] } else { &r[..0] };
            let has_qubit = match rest {
                [2] => true,
                [] if i >= 2 => false,
                _ => {
                    return Err(Error::LayoutMismatch(format!(
                        "ancilla party {i} {r:?} does not embed state party {t:?} plus a qubit"
                    )))
                }
            };
            if !prefix_ok {
                return Err(Error::LayoutMismatch(format!(
                    "ancilla party {i} {r:?} does not start with state party {t:?}"
                )));
            }
            qubit.push(has_qubit);
        }
        Ok(Self {
            rho_layout: rho_layout.clone(),
            tau_layout: tau_layout.clone(),
            qubit,
        })
    }

    /// Ancilla layout for `tau` with qubits on parties 1, 2 only (`reduced`)
    /// or on every party.
    pub fn for_state(tau_layout: &PartyLayout, reduced: bool) -> Self {
        let qubit: Vec<bool> = (0..tau_layout.n_parties()).map(|i| i < 2 || !reduced).collect();
        let parties = tau_layout
            .parties()
            .iter()
            .zip(&qubit)
            .map(|(t, &q)| {
                let mut p = t.clone();
                if q {
                    p.push(2);
                }
                p
            })
            .collect();
        Self {
            rho_layout: PartyLayout::new(parties).expect("valid dims"),
            tau_layout: tau_layout.clone(),
            qubit,
        }
    }

    pub fn rho_layout(&self) -> &PartyLayout {
        &self.rho_layout
    }

    pub fn tau_layout(&self) -> &PartyLayout {
        &self.tau_layout
    }

    pub fn n_parties(&self) -> usize {
        self.qubit.len()
    }

    /// Filter input dimension per party: 2 where a qubit is present, else 1.
    pub fn filter_inputs(&self) -> Vec<usize> {
        self.qubit.iter().map(|&q| if q { 2 } else { 1 }).collect()
    }

    /// `nu = prod_i (dim H_i)^{-1}`.
    pub fn nu(&self) -> f64 {
        1.0 / self.tau_layout.total_dim() as f64
    }

    pub fn joint_layout(&self) -> PartyLayout {
        let parties = (0..self.n_parties())
            .map(|i| {
                let mut p = self.tau_layout.parties()[i].clone();
                p.extend(self.rho_layout.parties()[i].iter().copied());
                p
            })
            .collect();
        PartyLayout::new(parties).expect("valid dims")
    }

    /// `rho (x) tau` regrouped party-major.
    pub fn interleave(&self, rho: &MultipartyOperator, tau: &MultipartyOperator) -> Result<MultipartyOperator> {
        if rho.layout() != &self.rho_layout || tau.layout() != &self.tau_layout {
            return Err(Error::LayoutMismatch("states do not match the embedding".into()));
        }
        let rho_legs = self.rho_layout.n_legs();
        let mut perm = Vec::with_capacity(rho_legs + self.tau_layout.n_legs());
        for i in 0..self.n_parties() {
            perm.extend(self.tau_layout.party_legs(i).map(|k| rho_legs + k));
            perm.extend(self.rho_layout.party_legs(i));
        }
        rho.kron(tau).permute_legs(&perm, self.joint_layout())
    }

    /// `tau^T (x) H_theta (x) I ...` with legs arranged as the ancilla layout.
    pub fn witness_observable(&self, tau: &MultipartyOperator, theta: f64) -> Result<MultipartyOperator> {
        if tau.layout() != &self.tau_layout {
            return Err(Error::LayoutMismatch("state does not match the embedding".into()));
        }
        let h = h_theta(theta)?;
        let extra = self.qubit[2..].iter().filter(|&&q| q).count();
        let rest = 1usize << extra;
        let m = tau
            .matrix()
            .transpose()
            .kronecker(h.matrix())
            .kronecker(&CMatrix::identity(rest, rest));
        // Source legs: tau legs, then one qubit per party that carries one.
        let tau_legs = self.tau_layout.n_legs();
        let mut src_dims = self.tau_layout.leg_dims();
        src_dims.extend(std::iter::repeat_n(2, 2 + extra));
        let source = MultipartyOperator::new(PartyLayout::per_leg(&src_dims)?, m)?;
        let mut perm = Vec::with_capacity(src_dims.len());
        let mut q = 0;
        for i in 0..self.n_parties() {
            perm.extend(self.tau_layout.party_legs(i));
            if self.qubit[i] {
                perm.push(tau_legs + q);
                q += 1;
            }
        }
        source.permute_legs(&perm, self.rho_layout.clone())
    }

    /// `F_i = |Phi_{H_i H_i'}> (x) I_{H_i''}` (the qubit factor is omitted on
    /// parties without one), as maps into the joint party spaces.
    pub fn canonical_filters(&self) -> FilterBank {
        let maps = (0..self.n_parties())
            .map(|i| {
                let d = self.tau_layout.party_dim(i);
                let k = if self.qubit[i] { 2 } else { 1 };
                let phi = max_entangled_ket(d);
                let mut f = CMatrix::zeros(d * d * k, k);
                for (s, amp) in phi.iter().enumerate() {
                    for q in 0..k {
                        f[(s * k + q, q)] = *amp;
                    }
                }
                f
            })
            .collect();
        FilterBank::into_party(maps)
    }
}

/// Canonical activation filters for a state of layout `tau_layout`.
pub fn canonical_filters(tau_layout: &PartyLayout, reduced: bool) -> FilterBank {
    AncillaEmbedding::for_state(tau_layout, reduced).canonical_filters()
}

#[derive(Clone, Debug, Serialize)]
pub struct ActivationReport {
    /// Filter witness `tr[(rho (x) tau) F (H_theta (x) I) F^dagger]`.
    pub witness: f64,
    /// `tr[rho (tau^T (x) H_theta (x) I)]`.
    pub direct_witness: f64,
    pub nu: f64,
    /// `|witness - nu * direct_witness|`.
    pub nu_identity_deviation: f64,
    pub theta: f64,
    pub success_probability: f64,
    /// Post-filter state on parties 1 and 2 (two qubits).
    pub post_state: Option<MultipartyOperator>,
    pub chsh_value: f64,
    pub chsh_settings: Option<ChshSettings>,
}

/// Runs the canonical protocol on `rho (x) tau` and tests CHSH between
/// parties 1 and 2 on the filtered state.
pub fn activate(rho: &MultipartyOperator, tau: &MultipartyOperator, theta: f64) -> Result<ActivationReport> {
    let emb = AncillaEmbedding::new(rho.layout(), tau.layout())?;
    let joint = emb.interleave(rho, tau)?;
    let bank = emb.canonical_filters();
    let witness = lemma_witness(&joint, &bank, theta)?.value;
    let direct_witness = rho.expectation(&emb.witness_observable(tau, theta)?)?;
    let nu = emb.nu();

    let outcome = apply_filter(&joint, &bank)?;
    let (post_state, chsh_value, chsh_settings) = match outcome.post_state {
        Some(post) => {
            let pair = post.partial_trace_parties(&[0, 1])?;
            let (v, s) = horodecki_chsh_max(&pair)?;
            (Some(pair), v, Some(s))
        }
        None => (None, 0.0, None),
    };
    Ok(ActivationReport {
        witness,
        direct_witness,
        nu,
        nu_identity_deviation: (witness - nu * direct_witness).abs(),
        theta,
        success_probability: outcome.success_probability,
        post_state,
        chsh_value,
        chsh_settings,
    })
}

pub fn activate_default(rho: &MultipartyOperator, tau: &MultipartyOperator) -> Result<ActivationReport> {
    activate(rho, tau, FRAC_PI_4)
}

/// Horodecki value of `werner_d(d, p)` after both parties project onto
/// `span{|0>, |1>}`.
pub fn two_level_projection_chsh(d: usize, p: f64) -> Result<f64> {
    let w = werner_d(d, p)?;
    let proj = CMatrix::from_fn(2, d, |i, j| if i == j { cr(1.0) } else { cr(0.0) });
    let out = apply_filter(&w, &FilterBank::kraus(vec![proj.clone(), proj]))?;
    match out.post_state {
        Some(s) => Ok(horodecki_chsh_max(&s)?.0),
        None => Ok(0.0),
    }
}

/// Smallest Werner weight at which the two-level projection filter yields a
/// CHSH violation, located by bisection to `tol`.
pub fn popescu_threshold(d: usize, tol: f64) -> Result<f64> {
    if d < 2 {
        return Err(Error::OutOfRange {
            name: "d",
            value: d as f64,
            min: 2.0,
            max: f64::INFINITY,
        });
    }
    let lo = werner_min_p(d).max(0.0);
    let b = bisect(lo, 1.0, tol, |p| Ok(two_level_projection_chsh(d, p)? > 2.0))?;
    Ok(b.midpoint())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OptimizeOptions {
    pub restarts: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            restarts: 20,
            iterations: 2000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FilterOptimum {
    pub chsh: f64,
    #[serde(skip)]
    pub alice: CMatrix,
    #[serde(skip)]
    pub bob: CMatrix,
    pub restart: usize,
}

fn unpack_filter(x: &[f64], rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |i, j| {
        let k = 2 * (i * cols + j);
        c(x[k], x[k + 1])
    })
}

fn normalize_filter(m: CMatrix) -> CMatrix {
    let s = spectral_norm(&m);
    if s > 0.0 {
        m * cr(1.0 / s)
    } else {
        m
    }
}

/// Heuristic maximization of the post-filter Horodecki value over pairs of
/// `2 x d` filters.
///
/// Multi-restart Nelder-Mead over real and imaginary filter entries. Restart
/// 0 starts from the two-level projection, the others from seeded Gaussian
/// filters (seed `options.seed + restart`). Restarts run in parallel and are
/// reduced by maximum, ties going to the lowest restart index.
pub fn optimize_filters_chsh(state: &MultipartyOperator, options: &OptimizeOptions) -> Result<FilterOptimum> {
    let l = state.layout();
    if l.n_parties() != 2 {
        return Err(Error::LayoutMismatch(format!("expected a bipartite state, found {:?}", l.parties())));
    }
    let (da, db) = (l.party_dim(0), l.party_dim(1));
    let na = 2 * 2 * da;
    let objective = |x: &[f64]| -> f64 {
        let a = unpack_filter(&x[..na], 2, da);
        let b = unpack_filter(&x[na..], 2, db);
        let k = a.kronecker(&b);
        let out = &k * state.matrix() * k.adjoint();
        let tr = out.trace().re;
        if !(tr > 1e-12) {
            return 0.0;
        }
        let m = out * cr(1.0 / tr);
        let st = MultipartyOperator::new(PartyLayout::qubits(2), (&m + m.adjoint()) * cr(0.5)).expect("4x4");
        -horodecki_chsh_max(&st).map(|v| v.0).unwrap_or(0.0)
    };

    let restarts = options.restarts.max(1);
    let results: Vec<(usize, f64, Vec<f64>)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let x0: Vec<f64> = if r == 0 {
                let mut x = vec![0.0; na + 2 * 2 * db];
                for i in 0..2 {
                    x[2 * (i * da + i)] = 1.0;
                    x[na + 2 * (i * db + i)] = 1.0;
                }
                x
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(options.seed.wrapping_add(r as u64));
                (0..na + 2 * 2 * db).map(|_| StandardNormal.sample(&mut rng)).collect()
            };
            let first = nelder_mead(objective, &x0, 0.25, options.iterations, 1e-13);
            // One restart of the simplex around the best point.
            let second = nelder_mead(objective, &first.x, 0.05, options.iterations, 1e-15);
            let best = if second.value <= first.value { second } else { first };
            (r, -best.value, best.x)
        })
        .collect();
    let (restart, chsh, x) = results
        .into_iter()
        .fold(None::<(usize, f64, Vec<f64>)>, |acc, cur| match acc {
            Some(a) if a.1 >= cur.1 => Some(a),
            _ => Some(cur),
        })
        .expect("at least one restart");
    Ok(FilterOptimum {
        chsh,
        alice: normalize_filter(unpack_filter(&x[..na], 2, da)),
        bob: normalize_filter(unpack_filter(&x[na..], 2, db)),
        restart,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct TeleportReport {
    pub d: usize,
    pub p: f64,
    pub success_probability: f64,
    /// Trace distance between the state left on parties 1, 2 and `werner_d(d, p)`.
    pub trace_distance: f64,
    pub teleported: bool,
    pub intermediate_state: MultipartyOperator,
    /// Two-party activation with the four-qubit ancilla (only for `d = 2`).
    pub activation: Option<ActivationReport>,
}

/// Entanglement swapping of `werner_d(d, p)` from parties {2, 3} onto {1, 2}.
///
/// Parties {1, 3} share `|Phi_d>`, parties {2, 3} share the Werner state;
/// party 3 projects its two legs onto `|Phi_d>`.
pub fn teleport_activation(d: usize, p: f64) -> Result<TeleportReport> {
    let tau = werner_d(d, p)?;
    let phi = MultipartyOperator::from_ket(PartyLayout::new(vec![vec![d], vec![d]])?, &max_entangled_ket(d))?;
    // legs (A, C1, B, C2) -> parties [A], [B], [C1, C2]
    let joint = phi
        .kron(&tau)
        .permute_legs(&[0, 2, 1, 3], PartyLayout::new(vec![vec![d], vec![d], vec![d, d]])?)?;
    let bell = CMatrix::from_row_slice(1, d * d, max_entangled_ket(d).adjoint().as_slice());
    let bank = FilterBank::kraus(vec![CMatrix::identity(d, d), CMatrix::identity(d, d), bell]);
    let out = apply_filter(&joint, &bank)?;
    let post = out
        .post_state
        .ok_or_else(|| Error::InvalidState("teleportation projection cannot succeed".into()))?;
    let intermediate = post.partial_trace_parties(&[0, 1])?;
    let dist = trace_distance(&intermediate, &tau)?;
    let activation = if d == 2 {
        Some(activate(&ancilla_rho(), &intermediate, FRAC_PI_4)?)
    } else {
        None
    };
    Ok(TeleportReport {
        d,
        p,
        success_probability: out.success_probability,
        trace_distance: dist,
        teleported: dist < 1e-10,
        intermediate_state: intermediate,
        activation,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MultipartyReport {
    pub p: f64,
    pub witness: f64,
    pub nu: f64,
    pub chsh_value: f64,
    pub success_probability: f64,
    pub activation: ActivationReport,
}

/// Three-party activation: the ancilla on `[H1''] [H2', H2''] [H3']` with the
/// two-qubit Werner state on parties {2, 3}, filtered by
/// `F1 = I`, `F2 = |Phi> (x) I`, `F3 = |Phi>`.
pub fn multiparty_demo(p: f64) -> Result<MultipartyReport> {
    check_range("p", p, -1.0 / 3.0, 1.0)?;
    let tau = werner2(p)?.regroup(PartyLayout::new(vec![vec![], vec![2], vec![2]])?)?;
    let report = activate(&ancilla_rho3(), &tau, FRAC_PI_4)?;
    Ok(MultipartyReport {
        p,
        witness: report.witness,
        nu: report.nu,
        chsh_value: report.chsh_value,
        success_probability: report.success_probability,
        activation: report,
    })
}
