//! Circle diffeomorphisms and their differential calculus.

pub mod calculus;
pub mod chart;
pub mod generators;
pub mod interval;
pub mod map;

pub use calculus::{
    differential_invariants, distortion_coeff, integral_nonlinearity,
    integral_nonlinearity_quadrature, DEFAULT_GRID,
};
pub use chart::{koenigs_chart, Chart};
pub use generators::{GeneratorSet, GeneratorSpec};
pub use interval::Interval;
pub use map::{circ_diff, circ_dist, t_to_theta, theta_to_t, wrap01, CircleMap, JetMap, Mobius, TrigMap};
