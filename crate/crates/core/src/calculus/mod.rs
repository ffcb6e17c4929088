//! First- and second-order derivatives by forward-mode dual arithmetic, an
//! independent finite-difference oracle, and tolerance-aware numerical rank.

mod diff;
mod dual;
mod map;
mod poly;
mod rank;

pub use diff::{fd_hessian_stack, fd_jacobian, relative_frobenius_error};
pub use dual::{Dual, Dual2, Real, MAX_DIM};
pub use map::{JetPoint, MapProgram, RealFn, SmoothMap};
pub use poly::PolyMap;
pub use rank::{numerical_rank, rank_with_floor, RankPolicy, RankReport};
