//! AIC and model comparison across copula families.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copula::CopulaFamily;
use crate::error::{Error, Result};
use crate::likelihood::Series;
use crate::optimizer::{profile_fit, FitResult, ProfileConfig};

/// Parameters counted by AIC: six continuous ones and the change point.
pub const DEFAULT_AIC_PARAMS: usize = 7;

/// AIC values this close to the minimum count as tied.
pub const AIC_TIE_TOLERANCE: f64 = 1e-9;

/// `2 p - 2 loglik`.
pub fn aic(loglik: f64, n_params: usize) -> f64 {
    2.0 * n_params as f64 - 2.0 * loglik
}

/// A copula family together with the assumed dependence at the junction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub family: CopulaFamily,
    pub alpha01: f64,
}

impl Candidate {
    pub fn new(family: CopulaFamily, alpha01: f64) -> Self {
        Self { family, alpha01 }
    }

    /// Ordering used to break AIC ties: Clayton first, then smaller alpha01.
    fn tie_key(&self) -> (u8, f64) {
        let f = match self.family {
            CopulaFamily::Clayton => 0,
            CopulaFamily::Joe => 1,
        };
        (f, self.alpha01)
    }
}

impl fmt::Display for Candidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.family, self.alpha01)
    }
}

impl FromStr for Candidate {
    type Err = Error;

    /// Parses `family:alpha01`, for example `joe:2`.
    fn from_str(s: &str) -> Result<Self> {
        let (fam, a) = s
            .split_once(':')
            .ok_or_else(|| Error::domain(format!("candidate '{s}' is not of the form family:alpha01")))?;
        let family: CopulaFamily = fam.trim().parse()?;
        let alpha01: f64 = a
            .trim()
            .parse()
            .map_err(|_| Error::domain(format!("candidate '{s}' has a non-numeric alpha01")))?;
        if !alpha01.is_finite() || !family.admits(alpha01) {
            return Err(Error::domain(format!("alpha01 = {alpha01} is not admissible for {family}")));
        }
        Ok(Self { family, alpha01 })
    }
}

/// Parses a comma separated list such as `clayton:1,joe:2`.
pub fn parse_candidates(spec: &str) -> Result<Vec<Candidate>> {
    let out: Vec<Candidate> = spec
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(Error::domain("no candidates given"));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateOutcome {
    pub candidate: Candidate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aic: Option<f64>,
    /// Why the candidate was excluded, if it was.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub n_params: usize,
    pub outcomes: Vec<CandidateOutcome>,
    /// Index into `outcomes`.
    pub winner: usize,
}

impl ModelComparison {
    pub fn winner(&self) -> &CandidateOutcome {
        &self.outcomes[self.winner]
    }

    pub fn winning_fit(&self) -> &FitResult {
        self.winner().fit.as_ref().expect("the winner always has a fit")
    }
}

/// Index of the minimal AIC among `(candidate, aic)` pairs, ties resolved
/// by [`Candidate::tie_key`] so the answer does not depend on list order.
pub fn select_winner(scored: &[(Candidate, Option<f64>)]) -> Option<usize> {
    let best = scored.iter().filter_map(|(_, a)| *a).min_by(f64::total_cmp)?;
    scored
        .iter()
        .enumerate()
        .filter(|(_, (_, a))| a.is_some_and(|a| a <= best + AIC_TIE_TOLERANCE))
        .min_by(|(_, (x, _)), (_, (y, _))| {
            let (fx, ax) = x.tie_key();
            let (fy, ay) = y.tie_key();
            fx.cmp(&fy).then(ax.total_cmp(&ay))
        })
        .map(|(i, _)| i)
}

/// Fits every candidate by profile likelihood and picks the smallest AIC.
/// Candidates whose fit fails stay in the output with the failure reason.
pub fn compare(series: &Series, candidates: &[Candidate], cfg: &ProfileConfig, n_params: usize) -> Result<ModelComparison> {
    if candidates.is_empty() {
        return Err(Error::domain("no candidates given"));
    }
    if n_params == 0 {
        return Err(Error::domain("AIC needs at least one parameter"));
    }
    let outcomes: Vec<CandidateOutcome> = candidates
        .par_iter()
        .map(|&c| match profile_fit(series, c.family, c.alpha01, cfg) {
            Ok(fit) => CandidateOutcome {
                candidate: c,
                aic: Some(aic(fit.loglik, n_params)),
                fit: Some(fit),
                error: None,
            },
            Err(e) => CandidateOutcome {
                candidate: c,
                fit: None,
                aic: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let scored: Vec<(Candidate, Option<f64>)> = outcomes.iter().map(|o| (o.candidate, o.aic)).collect();
    let winner = select_winner(&scored).ok_or(Error::AllCandidatesFailed)?;
    Ok(ModelComparison {
        n_params,
        outcomes,
        winner,
    })
}
