//! Parameter records and model equations for the diesel unit, the reference
//! model and the DFIG wind turbine.

mod dfig;
mod diesel;
mod statespace;

pub use dfig::{
    currents_from_fluxes, dfig_residual, electromagnetic_torque, mppt_speed, AeroCurve,
    DfigAlgebraic, DfigInputs, DfigModel, DfigResidual, DfigState, ALGEBRAIC_LABELS, DEFAULT_ETA,
    SPEED_VALIDITY, STATE_LABELS,
};
pub(crate) use dfig::{residual_raw, TorqueClosure};
pub use diesel::{diesel_state_space, reference_state_space, DieselModel, ReferenceModel};
pub use statespace::LinearStateSpace;
pub(crate) use statespace::labels;
