//! Prediction with history-dependent experts: the discrete regret game on
//! de Bruijn histories, its local cell problem, and the heat-equation limit.

pub mod debruijn;
pub mod error;
pub mod experts;
pub mod game;
pub mod linalg;
pub mod local;
pub mod payoff;
pub mod pde;
pub mod quadrature;
pub mod strategy;

pub use debruijn::{enumerate_states, Bit, HistoryState, MAX_WINDOW};
pub use error::{Error, Result};
pub use experts::{ExpertPanel, PanelDiagnostics};
pub use payoff::{Payoff, PropertyReport};
pub use game::{g3_step, BruteOptions, Engine, GameSpec, LatticeKey, LatticeTable, Which};
pub use local::{CellGap, HTable, HessianContext};
pub use pde::{CoordinateMap, DerivativeMode, Derivatives, PdeSolution, Quadrature};
pub use strategy::{simulate, Investor, Market, Trajectory};
