//! Density-matrix reconstruction from phase-resolved sideband spectra.

mod discrepancy;
mod fit;
mod operator;
mod solver;

pub use operator::{
    assemble_forward_operator, assemble_forward_operator_on, project_simplex, ForwardOperator,
    Parameterization,
};
pub use solver::{solve_tikhonov_psd, solve_tikhonov_psd_with, SolverOptions, TikhonovSolution};
pub use discrepancy::{
    infer_state_window, reconstruct_with_operator, select_alpha_discrepancy, squirrels_reconstruct,
    AlphaGrid, AlphaSelection, InitialGuess, ReconstructionConfig, ReconstructionReport,
};
pub use fit::{fit_g_single_color, fit_pure_two_color, SingleColorFit, TwoColorFit};
