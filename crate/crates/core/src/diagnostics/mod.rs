//! Measurements of the vector-field apparatus: weighted norms, the energy
//! inequality, null forms and decay rates.

pub mod decay;
pub mod energy;
pub mod jet;
pub mod norms;
pub mod null_forms;
pub mod vector_fields;

pub use decay::{decay_fit, DecayFit};
pub use energy::{energy_and_inequality, energy_sample, EnergyBound, EnergySample};
pub use jet::{state_jet, TimeJet};
pub use norms::{compute_norms, NormLevels, NormsRecord};
pub use null_forms::{
    det_expansion_check, null_estimate_ratio, null_form, null_form_basis, polynomial_battery, z_commutation_deviation,
    z_commutation_table, DetExpansion, NullFormId,
};
pub use vector_fields::{
    apply_vector_field, commutator_check, commutator_table, field_list, measure_commutator_constants, CommutatorReport,
    TestField, VectorFieldId,
};
