use crate::datamodel::ParamVector;
use crate::error::Result;

use super::config::TrainConfig;

/// Heavy-ball SGD:
/// `velocity' = momentum * velocity + grad`, `params' = params - lr * velocity'`.
pub fn sgd_step(
    params: &ParamVector,
    grad: &ParamVector,
    velocity: &ParamVector,
    tc: &TrainConfig,
) -> Result<(ParamVector, ParamVector)> {
    params.check_compatible(grad)?;
    params.check_compatible(velocity)?;
    let new_velocity = velocity
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&v, &g)| (tc.momentum * f64::from(v) + f64::from(g)) as f32)
        .collect::<Vec<_>>();
    let new_params = params
        .data()
        .iter()
        .zip(&new_velocity)
        .map(|(&p, &v)| (f64::from(p) - tc.learning_rate * f64::from(v)) as f32)
        .collect();
    Ok((
        ParamVector::new(params.manifest().clone(), new_params)?,
        ParamVector::new(params.manifest().clone(), new_velocity)?,
    ))
}
