pub mod bayes;
pub mod manifold;
pub mod metrics;
pub mod mechanism;
pub mod scenarios;
pub mod stiffode;
pub mod thermokin;
