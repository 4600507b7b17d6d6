//! Compositional symbolic models for networks of discrete-time control
//! systems.
//!
//! The pipeline is: [`netspec`] loads a network, [`graph`] splits it into
//! strongly connected components, [`gains`] builds a Lyapunov certificate
//! per component, [`design`] picks quantization parameters over the
//! component DAG, [`abstraction`] builds the finite models and [`bisim`]
//! checks approximate bisimilarity on small instances.

pub mod abstraction;
pub mod bisim;
pub mod bundled;
pub mod design;
pub mod gains;
pub mod graph;
pub mod netspec;
pub mod rational;
