//! Numerical toolkit for hidden CHSH nonlocality and its activation by
//! tensoring with PPT ancillas.
//!
//! * [`tensor`]: multiparty operators, partial traces and transposes.
//! * [`states`]: Werner states, Bell basis, `H_theta`, the PPT ancillas.
//! * [`chsh`]: correlators, the Horodecki maximum, filter witnesses.
//! * [`filtering`]: product Kraus filters and the activation protocol.
//! * [`sdp`]: the PPT-constrained witness minimization and its bisection.
//! * [`lemma`]: Bell-projected maps and identity checks.

// `!(x > 0.0)` style range checks also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chsh;
pub mod error;
pub mod filtering;
pub mod lemma;
pub mod random;
pub mod sdp;
pub mod search;
pub mod states;
pub mod tensor;

pub use chsh::{
    activation_witness, chsh_value, closed_form_witness, correlation_matrix, horodecki_chsh_max, lemma_witness,
    ChshSettings,
};
pub use error::{Error, Result};
pub use filtering::{
    activate, apply_filter, multiparty_demo, optimize_filters_chsh, popescu_threshold, teleport_activation,
    ActivationReport, FilterBank, FilterOutcome, OptimizeOptions,
};
pub use lemma::{g0, m0, n_theta, project_map, verify_eq9, ProductKraus, ProjectedMap};
pub use sdp::{critical_weight, dual_bound, solve_min_witness, SdpConfig, SdpProblem, SdpSolution};
pub use states::{ancilla_rho, ancilla_rho3, h_theta, reference_constants, werner2, werner_d};
pub use tensor::{CMatrix, MultipartyOperator, PartyLayout};
