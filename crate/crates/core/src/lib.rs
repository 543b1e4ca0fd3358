//! Feynman-Kac corrected weighted SDEs for sampling annealed, product,
//! geometric-average and reward-tilted combinations of diffusion marginals.

pub mod engine;
pub mod error;
pub mod math;
pub mod metrics;
pub mod models;
pub mod rules;
pub mod schedule;

pub use engine::{
    simulate, ParticleEnsemble, ResamplingPolicy, Scheme, SimulationConfig, SimulationOutput,
};
pub use error::{FkcError, Result};
pub use metrics::{MetricRecord, SampleSet};
pub use models::{
    gmm_integer_power, power_product, Capabilities, DiffusedGaussianMixture, GaussianMixture,
    LennardJonesSystem, ScoreModel,
};
pub use rules::{
    build_annealed, build_geometric, build_poe_cfg, build_product, build_reward_tilted,
    build_weighted_product, AnnealSpec, BetaSchedule, FkcSde, WeightedSde,
};
pub use schedule::{NoiseSchedule, ScheduleKind};
