//! Exact feedback computation for combinatorial video-pod first-price
//! auctions: winner determination, VCG/core/bicore price feedback, dual
//! analysis of the assignment special case, bidding dynamics, and synthetic
//! instance generation.

pub mod assignment;
pub mod coalitional;
pub mod dynamics;
pub mod feedback;
pub mod generator;
pub mod lp;
pub mod model;
pub mod report;
pub mod solver;
