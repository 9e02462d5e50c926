pub mod align;
pub mod assess;
pub mod attribute;
pub mod corpus;
pub mod distill;
pub mod exec;
pub mod fingerprint;
pub mod metrics;
