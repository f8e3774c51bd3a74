//! Shared inputs for the benchmarks in `benches/`.
//!
//! Every benchmark draws its series from the same Weibull/copula design
//! (shape and scale (1.8, 1.2) before the change, (2.1, 1.5) after,
//! dependence 2 throughout) so timings across families are comparable.

use cpcm_core::likelihood::{ChangePoint, ModelParams, Series};
use cpcm_core::simulate::gen_series;
use cpcm_core::CopulaFamily;

pub struct Design {
    pub series: Series,
    pub params: ModelParams,
    pub change_point: ChangePoint,
}

/// A simulated series of length `len` with the change at `len / 2`.
pub fn design(family: CopulaFamily, len: usize, seed: u64) -> Design {
    let params = ModelParams::from_tuples(family, (1.8, 1.2), (2.1, 1.5), (2.0, 2.0, 2.0)).expect("valid design");
    let change_point = ChangePoint::new(len / 2, len).expect("valid change point");
    let series = gen_series(&params, change_point, len, seed).expect("simulation succeeds");
    Design {
        series,
        params,
        change_point,
    }
}
