//! CHSH correlators, the Horodecki maximum, and filter witnesses.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_4;

use crate::error::{Error, Result};
use crate::filtering::{AncillaEmbedding, FilterBank};
use crate::states::{h_theta, pauli};
use crate::tensor::{cr, kron_all, trace_of_product, CMatrix, MultipartyOperator};

/// Bloch directions `a0, a1` (party 1) and `b0, b1` (party 2).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChshSettings {
    pub a0: [f64; 3],
    pub a1: [f64; 3],
    pub b0: [f64; 3],
    pub b1: [f64; 3],
}

impl ChshSettings {
    pub fn new(a0: [f64; 3], a1: [f64; 3], b0: [f64; 3], b1: [f64; 3]) -> Result<Self> {
        for v in [&a0, &a1, &b0, &b1] {
            check_unit(v)?;
        }
        Ok(Self { a0, a1, b0, b1 })
    }
}

fn check_unit(v: &[f64; 3]) -> Result<()> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if (n - 1.0).abs() > 1e-12 {
        return Err(Error::NotUnitVector(n));
    }
    Ok(())
}

/// `v . sigma`.
pub fn bloch_observable(v: &[f64; 3]) -> CMatrix {
    pauli(1) * cr(v[0]) + pauli(2) * cr(v[1]) + pauli(3) * cr(v[2])
}

fn check_two_qubit(state: &MultipartyOperator) -> Result<()> {
    let l = state.layout();
    if l.n_parties() != 2 || l.party_dim(0) != 2 || l.party_dim(1) != 2 {
        return Err(Error::LayoutMismatch(format!(
            "expected a two-qubit operator, found layout {:?}",
            l.parties()
        )));
    }
    Ok(())
}

/// `E(a, b) = tr[state (a.sigma) (x) (b.sigma)]`.
pub fn correlator(state: &MultipartyOperator, a: &[f64; 3], b: &[f64; 3]) -> Result<f64> {
    check_two_qubit(state)?;
    check_unit(a)?;
    check_unit(b)?;
    let obs = bloch_observable(a).kronecker(&bloch_observable(b));
    Ok(trace_of_product(state.matrix(), &obs).re)
}

/// `E00 + E01 + E10 - E11`.
pub fn chsh_value(state: &MultipartyOperator, s: &ChshSettings) -> Result<f64> {
    Ok(correlator(state, &s.a0, &s.b0)? + correlator(state, &s.a0, &s.b1)?
        + correlator(state, &s.a1, &s.b0)?
        - correlator(state, &s.a1, &s.b1)?)
}

/// `T_ij = tr[state sigma_i (x) sigma_j]`, `i, j in {x, y, z}`.
pub fn correlation_matrix(state: &MultipartyOperator) -> Result<Matrix3<f64>> {
    check_two_qubit(state)?;
    Ok(Matrix3::from_fn(|i, j| {
        trace_of_product(state.matrix(), &pauli(i + 1).kronecker(&pauli(j + 1))).re
    }))
}

fn unit_or(v: Vector3<f64>, fallback: Vector3<f64>) -> Vector3<f64> {
    let n = v.norm();
    if n > 1e-300 {
        v / n
    } else {
        fallback
    }
}

fn arr(v: Vector3<f64>) -> [f64; 3] {
    [v[0], v[1], v[2]]
}

/// Maximal CHSH value `2 sqrt(m1 + m2)` over all projective settings, with
/// settings attaining it.
///
/// `m1 >= m2` are the two largest eigenvalues of `T^T T`. Party 2 measures
/// along `cos(phi) c +- sin(phi) d` where `c, d` are the corresponding
/// eigenvectors and `tan(phi) = sqrt(m2 / m1)`; party 1 measures along the
/// normalized images `T c` and `T d`.
pub fn horodecki_chsh_max(state: &MultipartyOperator) -> Result<(f64, ChshSettings)> {
    let t = correlation_matrix(state)?;
    let ttt = t.transpose() * t;
    let eig = ttt.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    // Descending eigenvalue; equal eigenvalues keep the solver's column order.
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let m1 = eig.eigenvalues[order[0]].max(0.0);
    let m2 = eig.eigenvalues[order[1]].max(0.0);
    let canon = |k: usize| -> Vector3<f64> {
        let v: Vector3<f64> = eig.eigenvectors.column(k).into();
        // Deterministic sign: first significant component positive.
        match v.iter().find(|x| x.abs() > 1e-12) {
            Some(&x) if x < 0.0 => -v,
            _ => v,
        }
    };
    let cvec = canon(order[0]);
    let dvec = canon(order[1]);
    let phi = m2.sqrt().atan2(m1.sqrt());
    let b0 = cvec * phi.cos() + dvec * phi.sin();
    let b1 = cvec * phi.cos() - dvec * phi.sin();
    let a0 = unit_or(t * cvec, cvec);
    let a1 = unit_or(t * dvec, dvec);
    let settings = ChshSettings {
        a0: arr(a0),
        a1: arr(a1),
        b0: arr(b0),
        b1: arr(b1),
    };
    Ok((2.0 * (m1 + m2).sqrt(), settings))
}

/// Scalar witness value together with the inputs that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub value: f64,
    pub theta: f64,
    pub filters: String,
    pub states: Vec<String>,
}

/// `tr[rho (F_1 (x) ... (x) F_n)(H_theta (x) I ...)(F_1 (x) ... (x) F_n)^dagger]`.
///
/// Each filter maps `C^{k_i}` into party `i` with `k_1 = k_2 = 2` and
/// `k_i in {1, 2}` for the remaining parties; parties with `k_i = 2` carry an
/// identity. A negative value certifies a CHSH violation between parties 1
/// and 2 after filtering.
pub fn lemma_witness(rho: &MultipartyOperator, filters: &FilterBank, theta: f64) -> Result<WitnessReport> {
    let h = h_theta(theta)?;
    let maps = filters.into_party_maps();
    let layout = rho.layout();
    if maps.len() != layout.n_parties() || maps.len() < 2 {
        return Err(Error::FilterShape(format!(
            "{} filters for {} parties",
            maps.len(),
            layout.n_parties()
        )));
    }
    for (i, f) in maps.iter().enumerate() {
        let k_ok = if i < 2 { f.ncols() == 2 } else { f.ncols() == 1 || f.ncols() == 2 };
        if f.nrows() != layout.party_dim(i) || !k_ok {
            return Err(Error::FilterShape(format!(
                "party {i}: filter is {}x{}, party dimension {}",
                f.nrows(),
                f.ncols(),
                layout.party_dim(i)
            )));
        }
    }
    let f = kron_all(&maps);
    let reduced = f.adjoint() * rho.matrix() * &f;
    let rest: usize = maps[2..].iter().map(|m| m.ncols()).product();
    let obs = h.matrix().kronecker(&CMatrix::identity(rest, rest));
    Ok(WitnessReport {
        value: trace_of_product(&reduced, &obs).re,
        theta,
        filters: filters.describe(),
        states: vec![format!("layout {:?}", layout.parties())],
    })
}

/// `tr[rho (tau^T (x) H_{pi/4} (x) I ...)]` with the observable's legs placed
/// to match the ancilla layout (each ancilla party holds a copy of the
/// corresponding `tau` legs, followed by a qubit on parties 1, 2 and
/// optionally on the others).
pub fn activation_witness(rho: &MultipartyOperator, tau: &MultipartyOperator) -> Result<f64> {
    activation_witness_theta(rho, tau, FRAC_PI_4)
}

pub fn activation_witness_theta(rho: &MultipartyOperator, tau: &MultipartyOperator, theta: f64) -> Result<f64> {
    let emb = AncillaEmbedding::new(rho.layout(), tau.layout())?;
    let obs = emb.witness_observable(tau, theta)?;
    rho.expectation(&obs)
}

/// `(3 - sqrt 2 - (1 + sqrt 2) p) / 12`: the activation witness of the
/// four-qubit PPT ancilla against the two-qubit Werner state.
pub fn closed_form_witness(p: f64) -> f64 {
    let s2 = 2f64.sqrt();
    (3.0 - s2 - (1.0 + s2) * p) / 12.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_product_state, random_state, random_unit_vector3};
    use crate::states::{ancilla_rho, bell_kets, p_star_qubit, werner2};
    use crate::tensor::PartyLayout;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

    const X: [f64; 3] = [1.0, 0.0, 0.0];
    const Z: [f64; 3] = [0.0, 0.0, 1.0];

    fn singlet() -> MultipartyOperator {
        werner2(1.0).unwrap()
    }

    #[test]
    fn correlator_examples() {
        assert!((correlator(&singlet(), &Z, &Z).unwrap() + 1.0).abs() < 1e-15);
        let mixed = werner2(0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let a = random_unit_vector3(&mut rng);
            let b = random_unit_vector3(&mut rng);
            assert!(correlator(&mixed, &a, &b).unwrap().abs() < 1e-15);
            // Direct trace oracle: Werner correlator is -p a.b
            let p = 0.37;
            let e = correlator(&werner2(p).unwrap(), &a, &a).unwrap();
            assert!((e + p).abs() < 1e-14);
        }
        assert!(matches!(
            correlator(&mixed, &[1.0, 1.0, 0.0], &Z),
            Err(Error::NotUnitVector(_))
        ));
    }

    #[test]
    fn chsh_examples() {
        let h = FRAC_1_SQRT_2;
        let s = ChshSettings::new(Z, X, [-h, 0.0, -h], [h, 0.0, -h]).unwrap();
        assert!((chsh_value(&singlet(), &s).unwrap() - 2.0 * SQRT_2).abs() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let st = random_state(&PartyLayout::qubits(2), &mut rng);
        let a = random_unit_vector3(&mut rng);
        let b = random_unit_vector3(&mut rng);
        let degenerate = ChshSettings::new(a, a, b, b).unwrap();
        let v = chsh_value(&st, &degenerate).unwrap();
        assert!((v - 2.0 * correlator(&st, &a, &b).unwrap()).abs() < 1e-14);
        assert!(v <= 2.0 + 1e-14);
    }

    /// Angle-grid oracle restricted to the x-z plane, valid for Werner states
    /// where the optimum lies in any plane.
    fn planar_grid_max(state: &MultipartyOperator, n: usize) -> f64 {
        let dir = |t: f64| [t.cos(), 0.0, t.sin()];
        let mut best = f64::MIN;
        let step = 2.0 * std::f64::consts::PI / n as f64;
        let obs: Vec<_> = (0..n).map(|k| dir(k as f64 * step)).collect();
        for b0 in &obs {
            for b1 in &obs {
                // a0 maximizes E(a, b0) + E(a, b1); a1 maximizes E(a, b0) - E(a, b1)
                let mut v = 0.0;
                for sign in [1.0, -1.0] {
                    v += obs
                        .iter()
                        .map(|a| correlator(state, a, b0).unwrap() + sign * correlator(state, a, b1).unwrap())
                        .fold(f64::MIN, f64::max);
                }
                best = best.max(v);
            }
        }
        best
    }

    #[test]
    fn werner_chsh_value_at_optimal_settings() {
        let w = werner2(0.8).unwrap();
        let grid = planar_grid_max(&w, 48);
        assert!((grid - 1.6 * SQRT_2).abs() < 1e-2, "grid {grid}");
        assert!((horodecki_chsh_max(&w).unwrap().0 - 1.6 * SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn horodecki_examples() {
        let (v, s) = horodecki_chsh_max(&singlet()).unwrap();
        assert!((v - 2.0 * SQRT_2).abs() < 1e-12);
        assert!((chsh_value(&singlet(), &s).unwrap() - v).abs() < 1e-9);
        for k in 0..=10 {
            let p = -1.0 / 3.0 + 4.0 / 3.0 * k as f64 / 10.0;
            let (v, s) = horodecki_chsh_max(&werner2(p).unwrap()).unwrap();
            assert!((v - 2.0 * SQRT_2 * p.abs()).abs() < 1e-12);
            assert!((chsh_value(&werner2(p).unwrap(), &s).unwrap() - v).abs() < 1e-9);
        }
    }

    #[test]
    fn horodecki_settings_attain_value_and_dominate() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..30 {
            let st = random_state(&PartyLayout::qubits(2), &mut rng);
            let (v, s) = horodecki_chsh_max(&st).unwrap();
            assert!((chsh_value(&st, &s).unwrap() - v).abs() < 1e-9);
            for _ in 0..50 {
                let rs = ChshSettings::new(
                    random_unit_vector3(&mut rng),
                    random_unit_vector3(&mut rng),
                    random_unit_vector3(&mut rng),
                    random_unit_vector3(&mut rng),
                )
                .unwrap();
                assert!(v >= chsh_value(&st, &rs).unwrap() - 1e-9);
            }
        }
    }

    #[test]
    fn product_states_never_violate() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for _ in 0..200 {
            let st = random_product_state(&PartyLayout::qubits(2), &mut rng);
            assert!(horodecki_chsh_max(&st).unwrap().0 <= 2.0 + 1e-12);
        }
    }

    #[test]
    fn horodecki_rejects_wrong_dimension() {
        let w = crate::states::werner_d(3, 0.5).unwrap();
        assert!(matches!(horodecki_chsh_max(&w), Err(Error::LayoutMismatch(_))));
    }

    fn identity_bank() -> FilterBank {
        FilterBank::into_party(vec![CMatrix::identity(2, 2), CMatrix::identity(2, 2)])
    }

    #[test]
    fn lemma_witness_examples() {
        let zero = FilterBank::into_party(vec![CMatrix::zeros(2, 2), CMatrix::zeros(2, 2)]);
        assert_eq!(lemma_witness(&singlet(), &zero, 0.3).unwrap().value, 0.0);

        for k in 0..=12 {
            let p = -1.0 / 3.0 + 4.0 / 3.0 * k as f64 / 12.0;
            let w = werner2(p).unwrap();
            let v = lemma_witness(&w, &identity_bank(), FRAC_PI_4).unwrap().value;
            // Direct trace oracle
            let direct = w.expectation(&h_theta(FRAC_PI_4).unwrap()).unwrap();
            assert!((v - direct).abs() < 1e-14);
            // The singlet sits in the top eigenspace of H_{pi/4}.
            assert!((v - (1.0 + p * SQRT_2)).abs() < 1e-14);
            // Y on party 1 maps the singlet to Phi+, the bottom eigenspace.
            let y = FilterBank::into_party(vec![pauli(2), CMatrix::identity(2, 2)]);
            let vy = lemma_witness(&w, &y, FRAC_PI_4).unwrap().value;
            assert!((vy - (1.0 - p * SQRT_2)).abs() < 1e-14);
            assert_eq!(vy < 0.0, p > FRAC_1_SQRT_2);
        }
    }

    #[test]
    fn lemma_witness_bell_diagonal_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        use rand::Rng;
        for _ in 0..10 {
            let mut w: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= s);
            let mut m = CMatrix::zeros(4, 4);
            for (k, ket) in bell_kets().iter().enumerate() {
                m += ket * ket.adjoint() * cr(w[k]);
            }
            let st = MultipartyOperator::new(PartyLayout::qubits(2), m).unwrap();
            let t = correlation_matrix(&st).unwrap();
            let v = lemma_witness(&st, &identity_bank(), FRAC_PI_4).unwrap().value;
            assert!((v - (1.0 - SQRT_2 * (t[(0, 0)] + t[(2, 2)]) / 2.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn lemma_witness_errors() {
        let bad = FilterBank::into_party(vec![CMatrix::identity(3, 2), CMatrix::identity(2, 2)]);
        assert!(matches!(lemma_witness(&singlet(), &bad, 0.1), Err(Error::FilterShape(_))));
        assert!(matches!(
            lemma_witness(&singlet(), &identity_bank(), 1.0),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn activation_witness_matches_closed_form() {
        let rho = ancilla_rho();
        for k in 0..100 {
            let p = -1.0 / 3.0 + 4.0 / 3.0 * k as f64 / 99.0;
            let v = activation_witness(&rho, &werner2(p).unwrap()).unwrap();
            assert!((v - closed_form_witness(p)).abs() < 1e-12, "p={p}");
        }
        let at_star = activation_witness(&rho, &werner2(p_star_qubit()).unwrap()).unwrap();
        assert!(at_star.abs() < 1e-12);
        let mixed = activation_witness(&rho, &werner2(0.0).unwrap()).unwrap();
        assert!((mixed - (3.0 - SQRT_2) / 12.0).abs() < 1e-14 && mixed > 0.0);
    }

    #[test]
    fn activation_witness_rejects_incompatible_layouts() {
        let tau = crate::states::werner_d(3, 0.5).unwrap();
        assert!(matches!(activation_witness(&ancilla_rho(), &tau), Err(Error::LayoutMismatch(_))));
    }

    #[test]
    fn closed_form_examples() {
        assert!(closed_form_witness(p_star_qubit()).abs() < 1e-15);
        assert!((closed_form_witness(1.0) - (1.0 - SQRT_2) / 6.0).abs() < 1e-15);
        assert!((closed_form_witness(1.0) + 0.06904).abs() < 1e-5);
        assert!((closed_form_witness(0.0) - (3.0 - SQRT_2) / 12.0).abs() < 1e-15);
    }
}
