use serde::{Deserialize, Serialize};

use crate::error::{FkcError, Result};
use crate::math::{dot, norm_sq};

/// One row of the conversion table: which term of a PDE is simulated and how.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConversionRule {
    /// `q^beta` under a continuity equation, simulated with `v`.
    AnnealContinuity,
    /// Same, simulated with `beta v`.
    AnnealContinuityScaled,
    /// `q^beta` under a diffusion term, simulated with noise `sigma`.
    AnnealDiffusion,
    /// Same, simulated with noise `sigma / sqrt(beta)`.
    AnnealDiffusionScaled,
    /// `q^beta` under a reweighting term `g`.
    AnnealReweight,
    /// Time-dependent exponent `beta_t`.
    TimeBeta,
    /// `q^1 q^2` under continuity equations, simulated with `v^1 + v^2`.
    ProductContinuity,
    /// `q^1 q^2` under a shared diffusion term, simulated with `sigma`.
    ProductDiffusion,
    /// `q^1 q^2` under reweighting terms `g^1`, `g^2`.
    ProductReweight,
}

impl ConversionRule {
    pub const ALL: [ConversionRule; 9] = [
        ConversionRule::AnnealContinuity,
        ConversionRule::AnnealContinuityScaled,
        ConversionRule::AnnealDiffusion,
        ConversionRule::AnnealDiffusionScaled,
        ConversionRule::AnnealReweight,
        ConversionRule::TimeBeta,
        ConversionRule::ProductContinuity,
        ConversionRule::ProductDiffusion,
        ConversionRule::ProductReweight,
    ];
}

/// Pointwise quantities at one `(x, t)`; each rule reads only what it needs.
#[derive(Debug, Clone, Default)]
pub struct ConversionInputs<'a> {
    pub beta: Option<f64>,
    pub dbeta_dt: Option<f64>,
    pub sigma: Option<f64>,
    pub log_q: Option<f64>,
    pub score: Option<&'a [f64]>,
    pub laplacian: Option<f64>,
    pub v: Option<&'a [f64]>,
    pub div_v: Option<f64>,
    pub g: Option<f64>,
    pub score2: Option<&'a [f64]>,
    pub v2: Option<&'a [f64]>,
    pub g2: Option<f64>,
}

/// What the simulator runs in place of the original term.
#[derive(Debug, Clone, PartialEq)]
pub enum SimulatedTerm {
    /// Drift contribution.
    VectorField(Vec<f64>),
    /// Diffusion coefficient.
    Diffusion(f64),
    /// Nothing beyond the weight.
    WeightOnly,
}

fn need<T>(v: Option<T>, rule: ConversionRule, what: &str) -> Result<T> {
    v.ok_or_else(|| FkcError::Capability(format!("{rule:?} needs {what}")))
}

/// Simulated term and additive weight-rate corrector for one row. Correctors
/// of several rows applied to one target add up.
pub fn conversion_weight(
    rule: ConversionRule,
    inp: &ConversionInputs,
) -> Result<(SimulatedTerm, f64)> {
    use ConversionRule::*;
    let beta = || need(inp.beta, rule, "beta");
    let sigma = || need(inp.sigma, rule, "sigma");
    let score = || need(inp.score, rule, "the score");
    let v = || need(inp.v, rule, "the vector field");
    Ok(match rule {
        AnnealContinuity => {
            let (b, div) = (beta()?, need(inp.div_v, rule, "the divergence of v")?);
            (SimulatedTerm::VectorField(v()?.to_vec()), -(b - 1.0) * div)
        }
        AnnealContinuityScaled => {
            let b = beta()?;
            let v = v()?;
            let w = b * (b - 1.0) * dot(score()?, v);
            (
                SimulatedTerm::VectorField(v.iter().map(|x| b * x).collect()),
                w,
            )
        }
        AnnealDiffusion => {
            let (b, s) = (beta()?, sigma()?);
            let w = -b * (b - 1.0) * 0.5 * s * s * norm_sq(score()?);
            (SimulatedTerm::Diffusion(s), w)
        }
        AnnealDiffusionScaled => {
            let (b, s) = (beta()?, sigma()?);
            let lap = need(inp.laplacian, rule, "the Laplacian of log q")?;
            if b <= 0.0 {
                return Err(FkcError::Parameter(
                    "scaled diffusion needs beta > 0".into(),
                ));
            }
            (
                SimulatedTerm::Diffusion(s / b.sqrt()),
                (b - 1.0) * 0.5 * s * s * lap,
            )
        }
        AnnealReweight => (SimulatedTerm::WeightOnly, beta()? * need(inp.g, rule, "g")?),
        TimeBeta => {
            let db = need(inp.dbeta_dt, rule, "d beta / dt")?;
            (
                SimulatedTerm::WeightOnly,
                db * need(inp.log_q, rule, "log q")?,
            )
        }
        ProductContinuity => {
            let (v1, v2) = (v()?, need(inp.v2, rule, "the second vector field")?);
            let (s1, s2) = (score()?, need(inp.score2, rule, "the second score")?);
            let sum = v1.iter().zip(v2).map(|(a, b)| a + b).collect();
            (SimulatedTerm::VectorField(sum), dot(s1, v2) + dot(s2, v1))
        }
        ProductDiffusion => {
            let s = sigma()?;
            let (s1, s2) = (score()?, need(inp.score2, rule, "the second score")?);
            (SimulatedTerm::Diffusion(s), -s * s * dot(s1, s2))
        }
        ProductReweight => (
            SimulatedTerm::WeightOnly,
            need(inp.g, rule, "g")? + need(inp.g2, rule, "g2")?,
        ),
    })
}
