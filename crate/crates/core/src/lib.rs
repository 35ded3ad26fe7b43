//! Confocal quadrics, integrable billiards, Stäckel geodesics and the
//! potential theory of homeoids in Euclidean, spherical and hyperbolic space.
//!
//! The crate is organised bottom-up:
//!
//! * [`quadrics`]: confocal families, elliptic coordinates, Ivory boxes;
//! * [`billiards`]: planar billiards in confocal conics;
//! * [`staeckel`]: Liouville and Stäckel metrics, geodesics by separation;
//! * [`potentials`]: point potentials in constant curvature, homeoids,
//!   hyperbolic polynomials.
//!
//! [`quad`] and [`poly`] hold the quadrature and root-finding kernels the
//! other modules share.

pub mod billiards;
pub mod error;
pub mod poly;
pub mod potentials;
pub mod quad;
pub mod quadrics;
pub mod staeckel;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    pub struct Intro;
    #[doc = include_str!("../../../book/src/quadrics.md")]
    pub struct Quadrics;
    #[doc = include_str!("../../../book/src/billiards.md")]
    pub struct Billiards;
    #[doc = include_str!("../../../book/src/staeckel.md")]
    pub struct Staeckel;
    #[doc = include_str!("../../../book/src/potentials.md")]
    pub struct Potentials;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
