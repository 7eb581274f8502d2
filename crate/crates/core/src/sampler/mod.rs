//! Random graphs on boxes and the auxiliary random variables.

mod auxiliary;
mod graph;

pub use auxiliary::{
    c0_closed_form, c0_region_volume, compute_c0, sample_w, sample_z, C0Method, Estimate,
    GammaSequence, WSample, ZLaw, DEFAULT_W_TOLERANCE, MIN_C0_BUDGET, Z_REJECTION_CAP,
};
pub use graph::{
    sample_graph, sample_graph_coupled, sample_graph_coupled_with, sample_graph_per_pair,
    sample_graph_with, GraphSample, SamplerConfig,
};
