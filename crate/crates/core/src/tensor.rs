//! Dense complex linear algebra over multiparty tensor-product spaces.
//!
//! # Leg indexing
//!
//! Every operator carries a [`PartyLayout`]: an ordered list of parties, each
//! an ordered list of leg dimensions. All other modules address tensor factors
//! through the following single convention.
//!
//! | concept          | convention                                                  |
//! |------------------|-------------------------------------------------------------|
//! | global leg index | zero-based position in the party-major flattening           |
//! | party order      | party 0 first; all legs of party 0, then party 1, ...       |
//! | composite index  | row-major: leg 0 is the most significant digit              |
//! | local basis      | `|0>, |1>, ..., |d-1>` on each leg                           |
//!
//! For example the layout `[[2, 2], [3]]` has legs `0, 1` (party 0) and leg
//! `2` (party 1); basis vector `|a, b, c>` sits at index `a*6 + b*3 + c`.
//! A party may hold zero legs, in which case it contributes a factor of one.

use nalgebra::{DMatrix, DVector, Scalar};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::ops::Range;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Relative Hermiticity tolerance applied before eigensolves.
pub const HERMITIAN_TOL: f64 = 1e-10;

pub(crate) fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub(crate) fn cr(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Ordered parties, each an ordered list of leg dimensions.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<usize>>", into = "Vec<Vec<usize>>")]
pub struct PartyLayout {
    parties: Vec<Vec<usize>>,
}

impl TryFrom<Vec<Vec<usize>>> for PartyLayout {
    type Error = Error;
    fn try_from(parties: Vec<Vec<usize>>) -> Result<Self> {
        Self::new(parties)
    }
}

impl From<PartyLayout> for Vec<Vec<usize>> {
    fn from(layout: PartyLayout) -> Self {
        layout.parties
    }
}

impl PartyLayout {
    pub fn new(parties: Vec<Vec<usize>>) -> Result<Self> {
        if let Some(d) = parties.iter().flatten().find(|&&d| d == 0) {
            return Err(Error::InvalidLayout(format!("leg dimension {d} < 1")));
        }
        Ok(Self { parties })
    }

    /// `n` parties holding one qubit each.
    pub fn qubits(n: usize) -> Self {
        Self {
            parties: vec![vec![2]; n],
        }
    }

    /// One party per leg.
    pub fn per_leg(dims: &[usize]) -> Result<Self> {
        Self::new(dims.iter().map(|&d| vec![d]).collect())
    }

    pub fn parties(&self) -> &[Vec<usize>] {
        &self.parties
    }

    pub fn n_parties(&self) -> usize {
        self.parties.len()
    }

    pub fn n_legs(&self) -> usize {
        self.parties.iter().map(Vec::len).sum()
    }

    /// Leg dimensions in global (party-major) order.
    pub fn leg_dims(&self) -> Vec<usize> {
        self.parties.iter().flatten().copied().collect()
    }

    /// Global leg indices owned by `party`.
    pub fn party_legs(&self, party: usize) -> Range<usize> {
        let start: usize = self.parties[..party].iter().map(Vec::len).sum();
        start..start + self.parties[party].len()
    }

    pub fn party_dim(&self, party: usize) -> usize {
        self.parties[party].iter().product()
    }

    pub fn total_dim(&self) -> usize {
        self.parties.iter().flatten().product()
    }

    /// Parties of `self` followed by parties of `other`.
    pub fn concat(&self, other: &PartyLayout) -> PartyLayout {
        let mut parties = self.parties.clone();
        parties.extend(other.parties.iter().cloned());
        PartyLayout { parties }
    }
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

fn digits_into(mut index: usize, dims: &[usize], out: &mut [usize]) {
    for k in (0..dims.len()).rev() {
        out[k] = index % dims[k];
        index /= dims[k];
    }
}

fn validate_leg_set(legs: &[usize], n_legs: usize) -> Result<Vec<bool>> {
    let mut mask = vec![false; n_legs];
    for &l in legs {
        if l >= n_legs {
            return Err(Error::InvalidLegs(format!("leg {l} out of range (n_legs = {n_legs})")));
        }
        if mask[l] {
            return Err(Error::InvalidLegs(format!("leg {l} listed twice")));
        }
        mask[l] = true;
    }
    Ok(mask)
}

/// Precomputed source positions for a partial transpose, reusable across many
/// matrices of the same layout.
#[derive(Clone, Debug)]
pub struct PartialTransposeMap {
    dim: usize,
    // For target (i, j), source entry is (src_row[i*dim+j], src_col[i*dim+j]).
    src: Vec<(u32, u32)>,
}

impl PartialTransposeMap {
    pub fn new(layout: &PartyLayout, legs: &[usize]) -> Result<Self> {
        let dims = layout.leg_dims();
        let mask = validate_leg_set(legs, dims.len())?;
        let st = strides(&dims);
        let n = layout.total_dim();
        let mut di = vec![0; dims.len()];
        let mut dj = vec![0; dims.len()];
        let mut src = Vec::with_capacity(n * n);
        for i in 0..n {
            digits_into(i, &dims, &mut di);
            for j in 0..n {
                digits_into(j, &dims, &mut dj);
                let (mut si, mut sj) = (0, 0);
                for k in 0..dims.len() {
                    if mask[k] {
                        si += dj[k] * st[k];
                        sj += di[k] * st[k];
                    } else {
                        si += di[k] * st[k];
                        sj += dj[k] * st[k];
                    }
                }
                src.push((si as u32, sj as u32));
            }
        }
        Ok(Self { dim: n, src })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn apply<T: Scalar + Copy>(&self, m: &DMatrix<T>) -> DMatrix<T> {
        assert_eq!(m.nrows(), self.dim);
        let n = self.dim;
        DMatrix::from_fn(n, n, |i, j| {
            let (si, sj) = self.src[i * n + j];
            m[(si as usize, sj as usize)]
        })
    }
}

/// Dense complex square matrix on a multiparty tensor-product space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixJson", into = "MatrixJson")]
pub struct MultipartyOperator {
    layout: PartyLayout,
    matrix: CMatrix,
}

/// Wire form: `{layout: [[d,...],...], re: [...], im: [...]}`, row-major.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixJson {
    pub layout: PartyLayout,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl From<MultipartyOperator> for MatrixJson {
    fn from(op: MultipartyOperator) -> Self {
        let n = op.dim();
        let mut re = Vec::with_capacity(n * n);
        let mut im = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let z = op.matrix[(i, j)];
                re.push(z.re);
                im.push(z.im);
            }
        }
        MatrixJson {
            layout: op.layout,
            re,
            im,
        }
    }
}

impl TryFrom<MatrixJson> for MultipartyOperator {
    type Error = Error;
    fn try_from(j: MatrixJson) -> Result<Self> {
        let n = j.layout.total_dim();
        if j.re.len() != n * n || j.im.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: j.re.len().max(j.im.len()),
            });
        }
        let matrix = CMatrix::from_fn(n, n, |r, col| c(j.re[r * n + col], j.im[r * n + col]));
        MultipartyOperator::new(j.layout, matrix)
    }
}

impl MultipartyOperator {
    pub fn new(layout: PartyLayout, matrix: CMatrix) -> Result<Self> {
        let n = layout.total_dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: if matrix.nrows() != n { matrix.nrows() } else { matrix.ncols() },
            });
        }
        Ok(Self { layout, matrix })
    }

    pub fn identity(layout: PartyLayout) -> Self {
        let n = layout.total_dim();
        Self {
            layout,
            matrix: CMatrix::identity(n, n),
        }
    }

    pub fn zeros(layout: PartyLayout) -> Self {
        let n = layout.total_dim();
        Self {
            layout,
            matrix: CMatrix::zeros(n, n),
        }
    }

    /// The projector `|psi><psi|` (not normalized).
    pub fn from_ket(layout: PartyLayout, ket: &CVector) -> Result<Self> {
        Self::new(layout, ket * ket.adjoint())
    }

    pub fn layout(&self) -> &PartyLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    /// `Re tr(self * obs)`.
    pub fn expectation(&self, obs: &MultipartyOperator) -> Result<f64> {
        self.same_layout(obs)?;
        Ok(trace_of_product(&self.matrix, &obs.matrix).re)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            layout: self.layout.clone(),
            matrix: &self.matrix * cr(s),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_layout(other)?;
        Ok(Self {
            layout: self.layout.clone(),
            matrix: &self.matrix + &other.matrix,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_layout(other)?;
        Ok(Self {
            layout: self.layout.clone(),
            matrix: &self.matrix - &other.matrix,
        })
    }

    pub fn transpose(&self) -> Self {
        Self {
            layout: self.layout.clone(),
            matrix: self.matrix.transpose(),
        }
    }

    pub fn adjoint(&self) -> Self {
        Self {
            layout: self.layout.clone(),
            matrix: self.matrix.adjoint(),
        }
    }

    pub(crate) fn same_layout(&self, other: &Self) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::LayoutMismatch(format!(
                "{:?} vs {:?}",
                self.layout.parties(),
                other.layout.parties()
            )));
        }
        Ok(())
    }

    /// `||A - A^dagger||_F / ||A||_F` (zero for the zero matrix).
    pub fn hermitian_defect(&self) -> f64 {
        hermitian_defect(&self.matrix)
    }

    /// Checks Hermiticity, unit trace and positivity at the state tolerances.
    pub fn check_state(&self) -> Result<()> {
        let defect = (&self.matrix - self.matrix.adjoint()).norm();
        if defect > 1e-12 * self.matrix.norm().max(1.0) {
            return Err(Error::InvalidState(format!("Hermitian defect {defect:e}")));
        }
        let tr = self.trace();
        if (tr - cr(1.0)).norm() > 1e-12 {
            return Err(Error::InvalidState(format!("trace {tr}")));
        }
        let min = hermitian_eig(&self.matrix)?.min();
        if min < -1e-10 {
            return Err(Error::InvalidState(format!("min eigenvalue {min:e}")));
        }
        Ok(())
    }

    /// Kronecker product; the layout is the concatenation of the two layouts.
    pub fn kron(&self, other: &Self) -> Self {
        Self {
            layout: self.layout.concat(&other.layout),
            matrix: self.matrix.kronecker(&other.matrix),
        }
    }

    /// Reorders tensor legs: new global leg `k` is old leg `perm[k]`.
    ///
    /// `layout` gives the party grouping of the result; its flattened leg
    /// dimensions must equal the permuted ones.
    pub fn permute_legs(&self, perm: &[usize], layout: PartyLayout) -> Result<Self> {
        let dims = self.layout.leg_dims();
        let mask = validate_leg_set(perm, dims.len())
            .map_err(|e| Error::InvalidPermutation(e.to_string()))?;
        if perm.len() != dims.len() || mask.iter().any(|&b| !b) {
            return Err(Error::InvalidPermutation(format!(
                "{perm:?} is not a bijection on {} legs",
                dims.len()
            )));
        }
        let new_dims: Vec<usize> = perm.iter().map(|&k| dims[k]).collect();
        if layout.leg_dims() != new_dims {
            return Err(Error::LayoutMismatch(format!(
                "permuted leg dims {new_dims:?} vs target layout {:?}",
                layout.parties()
            )));
        }
        let old_st = strides(&dims);
        let n = self.dim();
        let mut d = vec![0; dims.len()];
        let map: Vec<usize> = (0..n)
            .map(|i| {
                digits_into(i, &new_dims, &mut d);
                d.iter().zip(perm).map(|(&digit, &k)| digit * old_st[k]).sum()
            })
            .collect();
        let matrix = CMatrix::from_fn(n, n, |i, j| self.matrix[(map[i], map[j])]);
        Ok(Self { layout, matrix })
    }

    /// Reorders whole parties: new party `k` is old party `perm[k]`.
    pub fn permute_parties(&self, perm: &[usize]) -> Result<Self> {
        let np = self.layout.n_parties();
        let mask = validate_leg_set(perm, np)
            .map_err(|e| Error::InvalidPermutation(e.to_string()))?;
        if perm.len() != np || mask.iter().any(|&b| !b) {
            return Err(Error::InvalidPermutation(format!(
                "{perm:?} is not a bijection on {np} parties"
            )));
        }
        let legs: Vec<usize> = perm.iter().flat_map(|&p| self.layout.party_legs(p)).collect();
        let layout = PartyLayout {
            parties: perm.iter().map(|&p| self.layout.parties[p].clone()).collect(),
        };
        self.permute_legs(&legs, layout)
    }

    /// Changes the party grouping without moving any leg.
    pub fn regroup(&self, layout: PartyLayout) -> Result<Self> {
        if layout.leg_dims() != self.layout.leg_dims() {
            return Err(Error::LayoutMismatch(format!(
                "cannot regroup {:?} as {:?}",
                self.layout.parties(),
                layout.parties()
            )));
        }
        Ok(Self {
            layout,
            matrix: self.matrix.clone(),
        })
    }

    /// Traces out every leg not in `keep`. Kept legs retain their relative
    /// order and party membership; parties left without legs are dropped.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::InvalidLegs("keep set is empty".into()));
        }
        let dims = self.layout.leg_dims();
        let mask = validate_leg_set(keep, dims.len())?;
        let st = strides(&dims);
        let kept: Vec<usize> = (0..dims.len()).filter(|&k| mask[k]).collect();
        let traced: Vec<usize> = (0..dims.len()).filter(|&k| !mask[k]).collect();
        let kept_dims: Vec<usize> = kept.iter().map(|&k| dims[k]).collect();
        let traced_dims: Vec<usize> = traced.iter().map(|&k| dims[k]).collect();
        let nk: usize = kept_dims.iter().product();
        let nt: usize = traced_dims.iter().product();

        let mut d = vec![0; dims.len()];
        let offset = |idx: usize, legs: &[usize], ldims: &[usize], d: &mut Vec<usize>| -> usize {
            digits_into(idx, ldims, &mut d[..ldims.len()]);
            legs.iter().zip(d.iter()).map(|(&k, &digit)| digit * st[k]).sum()
        };
        let kept_off: Vec<usize> = (0..nk).map(|a| offset(a, &kept, &kept_dims, &mut d)).collect();
        let traced_off: Vec<usize> =
            (0..nt).map(|t| offset(t, &traced, &traced_dims, &mut d)).collect();

        let matrix = CMatrix::from_fn(nk, nk, |a, b| {
            traced_off
                .iter()
                .map(|&t| self.matrix[(kept_off[a] + t, kept_off[b] + t)])
                .sum()
        });

        let mut parties = Vec::new();
        for p in 0..self.layout.n_parties() {
            let legs: Vec<usize> = self
                .layout
                .party_legs(p)
                .filter(|&k| mask[k])
                .map(|k| dims[k])
                .collect();
            if !legs.is_empty() {
                parties.push(legs);
            }
        }
        Ok(Self {
            layout: PartyLayout { parties },
            matrix,
        })
    }

    /// Keeps only the listed parties (all their legs), tracing out the rest.
    pub fn partial_trace_parties(&self, keep: &[usize]) -> Result<Self> {
        let legs: Vec<usize> = keep.iter().flat_map(|&p| self.layout.party_legs(p)).collect();
        if legs.is_empty() {
            // Only trivial parties kept: the result is the scalar trace.
            let layout = PartyLayout::new(vec![vec![]])?;
            return Self::new(layout, CMatrix::from_element(1, 1, self.trace()));
        }
        self.partial_trace(&legs)
    }

    /// Transpose restricted to the given legs.
    pub fn partial_transpose(&self, legs: &[usize]) -> Result<Self> {
        let map = PartialTransposeMap::new(&self.layout, legs)?;
        Ok(Self {
            layout: self.layout.clone(),
            matrix: map.apply(&self.matrix),
        })
    }

    /// Partial transpose over all legs of one party.
    pub fn partial_transpose_party(&self, party: usize) -> Result<Self> {
        let legs: Vec<usize> = self.layout.party_legs(party).collect();
        self.partial_transpose(&legs)
    }

    pub fn eig(&self) -> Result<EigenSystem> {
        hermitian_eig(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eig()?.min())
    }

    pub fn project_psd(&self) -> Result<Self> {
        Ok(Self {
            layout: self.layout.clone(),
            matrix: project_psd(&self.matrix)?,
        })
    }
}

/// `tr(a * b)` without forming the product.
pub fn trace_of_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let n = a.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let norm = m.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (m - m.adjoint()).norm() / norm
}

/// Eigenvalues in ascending order with matching eigenvector columns.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
}

impl EigenSystem {
    pub fn min(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(f64::NAN)
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(f64::NAN)
    }

    pub fn reconstruct(&self) -> CMatrix {
        let d = CVector::from_iterator(self.eigenvalues.len(), self.eigenvalues.iter().map(|&x| cr(x)));
        &self.eigenvectors * CMatrix::from_diagonal(&d) * self.eigenvectors.adjoint()
    }
}

/// Hermitian eigendecomposition. Inputs within [`HERMITIAN_TOL`] of
/// Hermitian are symmetrized first.
pub fn hermitian_eig(m: &CMatrix) -> Result<EigenSystem> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    let defect = hermitian_defect(m);
    if defect > HERMITIAN_TOL {
        return Err(Error::NotHermitian(defect));
    }
    let sym = (m + m.adjoint()) * cr(0.5);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let eigenvectors = CMatrix::from_fn(m.nrows(), m.nrows(), |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(EigenSystem {
        eigenvalues,
        eigenvectors,
    })
}

/// Frobenius-nearest positive semidefinite matrix: negative eigenvalues are
/// clipped to zero.
pub fn project_psd(m: &CMatrix) -> Result<CMatrix> {
    let mut es = hermitian_eig(m)?;
    for v in es.eigenvalues.iter_mut() {
        *v = v.max(0.0);
    }
    Ok(es.reconstruct())
}

/// `(1/2) ||a - b||_1`.
pub fn trace_distance(a: &MultipartyOperator, b: &MultipartyOperator) -> Result<f64> {
    let diff = a.sub(b)?;
    let es = diff.eig()?;
    Ok(0.5 * es.eigenvalues.iter().map(|x| x.abs()).sum::<f64>())
}

/// Kronecker product of a list of matrices (1x1 identity when empty).
pub fn kron_all<'a, I: IntoIterator<Item = &'a CMatrix>>(factors: I) -> CMatrix {
    factors
        .into_iter()
        .fold(CMatrix::identity(1, 1), |acc, f| acc.kronecker(f))
}
