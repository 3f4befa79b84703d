//! Concrete states, observables and reference data.

use serde::Serialize;
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};

use crate::error::{check_range, Error, Result};
use crate::tensor::{c, cr, kron_all, CMatrix, CVector, MultipartyOperator, PartyLayout};

/// Pauli matrices in the order `sigma_0..sigma_3 = (I, X, Y, Z)`.
pub fn pauli(i: usize) -> CMatrix {
    let z = cr(0.0);
    let o = cr(1.0);
    let entries = match i {
        0 => [o, z, z, o],
        1 => [z, o, o, z],
        2 => [z, c(0.0, -1.0), c(0.0, 1.0), z],
        3 => [o, z, z, -o],
        _ => panic!("Pauli index {i} out of range"),
    };
    CMatrix::from_row_slice(2, 2, &entries)
}

/// `I (x) I - cos(theta) X (x) X - sin(theta) Z (x) Z` for theta in `[0, pi/4]`.
pub fn h_theta(theta: f64) -> Result<MultipartyOperator> {
    check_range("theta", theta, 0.0, FRAC_PI_4)?;
    Ok(h_theta_any(theta))
}

pub(crate) fn h_theta_any(theta: f64) -> MultipartyOperator {
    let m = kron_all([&pauli(0), &pauli(0)])
        - kron_all([&pauli(1), &pauli(1)]) * cr(theta.cos())
        - kron_all([&pauli(3), &pauli(3)]) * cr(theta.sin());
    MultipartyOperator::new(PartyLayout::qubits(2), m).expect("4x4")
}

/// `|Phi_d> = d^{-1/2} sum_s |s, s>`.
pub fn max_entangled_ket(d: usize) -> CVector {
    let mut v = CVector::zeros(d * d);
    let a = cr(1.0 / (d as f64).sqrt());
    for s in 0..d {
        v[s * d + s] = a;
    }
    v
}

/// Bell kets in the order `Phi+, Phi-, Psi+, Psi-`.
pub fn bell_kets() -> [CVector; 4] {
    let h = cr(FRAC_1_SQRT_2);
    [
        CVector::from_vec(vec![h, cr(0.0), cr(0.0), h]),
        CVector::from_vec(vec![h, cr(0.0), cr(0.0), -h]),
        CVector::from_vec(vec![cr(0.0), h, h, cr(0.0)]),
        CVector::from_vec(vec![cr(0.0), h, -h, cr(0.0)]),
    ]
}

/// Bell projectors `Pi_r = |Phi_r><Phi_r|` in the order `Phi+, Phi-, Psi+, Psi-`.
pub fn bell_projectors() -> [MultipartyOperator; 4] {
    bell_kets().map(|k| MultipartyOperator::from_ket(PartyLayout::qubits(2), &k).expect("4-dim"))
}

/// Two-qubit Werner state `p |Psi-><Psi-| + (1 - p) I/4`, `p in [-1/3, 1]`.
pub fn werner2(p: f64) -> Result<MultipartyOperator> {
    check_range("p", p, -1.0 / 3.0, 1.0)?;
    let singlet = &bell_kets()[3];
    let m = singlet * singlet.adjoint() * cr(p) + CMatrix::identity(4, 4) * cr((1.0 - p) / 4.0);
    MultipartyOperator::new(PartyLayout::qubits(2), m)
}

/// Lower end of the valid weight interval of the `d`-dimensional Werner family.
pub fn werner_min_p(d: usize) -> f64 {
    1.0 - 2.0 * d as f64 / (d as f64 + 1.0)
}

/// Projector onto the antisymmetric subspace of `C^d (x) C^d`.
pub fn antisymmetric_projector(d: usize) -> CMatrix {
    let n = d * d;
    let mut m = CMatrix::identity(n, n);
    for i in 0..d {
        for j in 0..d {
            // swap |i,j> -> |j,i>
            m[(j * d + i, i * d + j)] -= cr(1.0);
        }
    }
    m * cr(0.5)
}

/// `d`-dimensional Werner state `2p Pi^- / (d(d-1)) + (1 - p) I / d^2`.
pub fn werner_d(d: usize, p: f64) -> Result<MultipartyOperator> {
    if d < 2 {
        return Err(Error::OutOfRange {
            name: "d",
            value: d as f64,
            min: 2.0,
            max: f64::INFINITY,
        });
    }
    check_range("p", p, werner_min_p(d), 1.0)?;
    let df = d as f64;
    let m = antisymmetric_projector(d) * cr(2.0 * p / (df * (df - 1.0)))
        + CMatrix::identity(d * d, d * d) * cr((1.0 - p) / (df * df));
    MultipartyOperator::new(PartyLayout::new(vec![vec![d], vec![d]])?, m)
}

/// Coefficient matrix of the four-qubit PPT ancilla.
pub const ANCILLA_R: [[f64; 4]; 4] = [
    [1.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
    [1.0 / 9.0, -1.0 / 9.0, 1.0 / 3.0, -1.0 / 9.0],
    [1.0 / 9.0, -1.0 / 9.0, 1.0 / 3.0, -1.0 / 9.0],
    [1.0 / 9.0, -1.0 / 9.0, 1.0 / 3.0, -1.0 / 9.0],
];

fn ancilla_sum(order: impl Fn(usize, usize) -> [usize; 4]) -> CMatrix {
    let mut m = CMatrix::zeros(16, 16);
    for (i, row) in ANCILLA_R.iter().enumerate() {
        for (j, &r) in row.iter().enumerate() {
            let f = order(i, j).map(pauli);
            m += kron_all(&f) * cr(r / 16.0);
        }
    }
    m
}

/// Four-qubit PPT ancilla `(1/16) sum R_ij s_i (x) s_j (x) s_i (x) s_j`.
///
/// Layout `[[2, 2], [2, 2]]`: party 0 holds `(H1', H1'')`, party 1 holds
/// `(H2', H2'')`. The primed legs pair with the tested state, the
/// double-primed legs carry the CHSH qubits.
pub fn ancilla_rho() -> MultipartyOperator {
    let m = ancilla_sum(|i, j| [i, j, i, j]);
    MultipartyOperator::new(PartyLayout::new(vec![vec![2, 2], vec![2, 2]]).expect("valid"), m)
        .expect("16x16")
}

/// Three-party ancilla `(1/16) sum R_ij s_j (x) s_i (x) s_j (x) s_i` on
/// `[H1''] (x) [H2', H2''] (x) [H3']`.
pub fn ancilla_rho3() -> MultipartyOperator {
    let m = ancilla_sum(|i, j| [j, i, j, i]);
    MultipartyOperator::new(PartyLayout::new(vec![vec![2], vec![2, 2], vec![2]]).expect("valid"), m)
        .expect("16x16")
}

/// Werner-state thresholds for one local dimension.
///
/// Table values are the tabulated four-decimal figures:
/// `p_sep` (separability), `p_star` (activation with a PPT ancilla, SDP),
/// `p_l` (known 1-local bound for projective measurements; for `d = 2` the
/// Grothendieck-constant bound 0.6595) and `p_nl_slo` (CHSH violation after
/// local filtering). `p_nl_slo_analytic` is the closed form of the
/// two-level-projection filtering protocol.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReferenceConstants {
    pub d: usize,
    pub p_sep: f64,
    pub p_sep_table: f64,
    pub p_star_table: f64,
    pub p_l: f64,
    pub p_nl_slo_table: f64,
    pub p_nl_slo_analytic: f64,
}

#[allow(clippy::approx_constant)]
pub fn reference_constants(d: usize) -> Result<ReferenceConstants> {
    let s2 = 2f64.sqrt();
    let (p_sep_table, p_star_table, p_l, p_nl_slo_table, p_nl_slo_analytic) = match d {
        2 => (0.3333, 0.6569, 0.6595, 0.7071, FRAC_1_SQRT_2),
        3 => (0.2500, 0.6360, 0.6667, 0.7630, 4.0 / 17.0 * (3.0 * s2 - 1.0)),
        4 => (0.2000, 0.6247, 0.7500, 0.7837, 3.0 / 7.0 * (2.0 * s2 - 1.0)),
        5 => (0.1667, 0.6175, 0.8000, 0.7944, 8.0 / 41.0 * (5.0 * s2 - 3.0)),
        6 => (0.1429, 0.6126, 0.8333, 0.8009, 5.0 / 14.0 * (3.0 * s2 - 2.0)),
        _ => {
            return Err(Error::OutOfRange {
                name: "d",
                value: d as f64,
                min: 2.0,
                max: 6.0,
            })
        }
    };
    Ok(ReferenceConstants {
        d,
        p_sep: 1.0 / (d as f64 + 1.0),
        p_sep_table,
        p_star_table,
        p_l,
        p_nl_slo_table,
        p_nl_slo_analytic,
    })
}

/// `4 sqrt(2) - 5`, the two-qubit activation threshold of the PPT ancilla.
pub fn p_star_qubit() -> f64 {
    4.0 * 2f64.sqrt() - 5.0
}
