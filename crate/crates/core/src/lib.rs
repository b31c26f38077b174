//! Exact inference on discrete Bayesian networks through Bayesian proof-nets.
//!
//! A network is compiled into a multiplicative proof-net with boxes, factorized
//! into a tree of wirings along an elimination order, and interpreted as a
//! sequence of factor products and projections. Classical oracles (brute force,
//! variable elimination, clique-tree message passing) live in [`oracle`].

use std::fmt::{Debug, Display};

pub mod bayes;
pub mod dot;
pub mod factorize;
pub mod factors;
pub mod gen;
pub mod interpret;
pub mod net;
pub mod oracle;
pub mod rewrite;

/// Floating-point scalar used by factor tables.
pub trait Scalar:
    num_traits::Float + num_traits::FromPrimitive + num_traits::NumCast + Default + Debug + Display + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub use factors::{Assignment, Domain, FactorError, OpCount, VariableId};
pub use net::{Formula, Net, NodeKind, Pol};

pub type Factor<S = f64> = factors::Factor<S>;
pub type Factor64 = factors::Factor<f64>;
pub type Factor32 = factors::Factor<f32>;
pub type BayesNet64 = bayes::BayesNet<f64>;
pub type BayesNet32 = bayes::BayesNet<f32>;
pub type Valuation64 = bayes::Valuation<f64>;
pub type Valuation32 = bayes::Valuation<f32>;
