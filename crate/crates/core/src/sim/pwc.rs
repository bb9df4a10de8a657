use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DwellSpec, ParamBox, PwcTrajectory};

/// How long each parameter value is held.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hold {
    /// Switch every `T_D` exactly.
    Exact,
    /// Hold for `U[T_D, 2T_D]`.
    Random,
}

/// Random dwell-admissible trajectory on `[0, horizon)`; values are uniform
/// over the box.
pub fn gen_pwc_trajectory(seed: u64, dwell: &DwellSpec, params: &ParamBox, horizon: f64, hold: Hold) -> Result<PwcTrajectory> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Config(format!("horizon = {horizon} must be positive")));
    }
    let td = dwell.t_dwell();
    if horizon / td > 1e7 {
        return Err(Error::Config(format!("horizon {horizon} holds too many dwell intervals of {td}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        params
            .lower()
            .iter()
            .zip(params.upper())
            .map(|(lo, hi)| if hi > lo { rng.random_range(*lo..=*hi) } else { *lo })
            .collect()
    };
    let mut times = vec![0.0];
    let mut values = vec![draw(&mut rng)];
    let mut k = 1usize;
    loop {
        let next = match hold {
            Hold::Exact => k as f64 * td,
            Hold::Random => times.last().unwrap() + td * (1.0 + rng.random::<f64>()),
        };
        if next >= horizon {
            break;
        }
        times.push(next);
        values.push(draw(&mut rng));
        k += 1;
    }
    PwcTrajectory::admissible(times, values, dwell, params)
}
