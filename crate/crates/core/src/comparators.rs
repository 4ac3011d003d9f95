//! Parametric intervals for the mean of the random-effects distribution:
//! DerSimonian-Laird (moment estimator, normal quantile) and Sidik-Jonkman
//! (two-step variance estimator, t quantile).

use crate::effects::Dataset;
use crate::error::MethodError;
use crate::statistic::{normal_quantile, t_quantile};

/// Floor applied to the crude between-study variance before forming the
/// Sidik-Jonkman ratios.
pub const SJ_TAU2_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanMethod {
    Dl,
    Sj,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanMethodResult {
    pub mean_hat: f64,
    pub tau2_hat: f64,
    pub lower: f64,
    pub upper: f64,
    pub method: MeanMethod,
}

fn require_two(d: &Dataset, method: &'static str) -> Result<(), MethodError> {
    if d.k() < 2 {
        Err(MethodError::TooFewStudies { method, k: d.k() })
    } else {
        Ok(())
    }
}

pub fn dl_interval(d: &Dataset, alpha: f64) -> Result<MeanMethodResult, MethodError> {
    require_two(d, "dl")?;
    if let Some(s) = d.studies().iter().find(|s| s.sigma_hat.is_nan() || s.sigma_hat <= 0.0) {
        return Err(MethodError::ZeroVariance {
            method: "dl",
            study: s.study_id.clone(),
        });
    }
    let k = d.k() as f64;
    let thetas = d.thetas();
    let w: Vec<f64> = d.sigmas().iter().map(|s| 1.0 / (s * s)).collect();
    let sw: f64 = w.iter().sum();
    let sw2: f64 = w.iter().map(|x| x * x).sum();
    let fixed = w.iter().zip(&thetas).map(|(w, t)| w * t).sum::<f64>() / sw;
    let q: f64 = w.iter().zip(&thetas).map(|(w, t)| w * (t - fixed).powi(2)).sum();
    let tau2 = ((q - (k - 1.0)) / (sw - sw2 / sw)).max(0.0);
    let ws: Vec<f64> = d.sigmas().iter().map(|s| 1.0 / (s * s + tau2)).collect();
    let sws: f64 = ws.iter().sum();
    let mean = ws.iter().zip(&thetas).map(|(w, t)| w * t).sum::<f64>() / sws;
    let half = normal_quantile(1.0 - alpha / 2.0) / sws.sqrt();
    Ok(MeanMethodResult {
        mean_hat: mean,
        tau2_hat: tau2,
        lower: mean - half,
        upper: mean + half,
        method: MeanMethod::Dl,
    })
}

pub fn sj_interval(d: &Dataset, alpha: f64) -> Result<MeanMethodResult, MethodError> {
    require_two(d, "sj")?;
    let k = d.k() as f64;
    let thetas = d.thetas();
    let mean = thetas.iter().sum::<f64>() / k;
    let tau0 = (thetas.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / k).max(SJ_TAU2_FLOOR);
    // inverse of v_k = sigma_k^2 / tau0^2 + 1
    let inv_v: Vec<f64> = d.sigmas().iter().map(|s| 1.0 / (s * s / tau0 + 1.0)).collect();
    let s_inv: f64 = inv_v.iter().sum();
    let centre = inv_v.iter().zip(&thetas).map(|(w, t)| w * t).sum::<f64>() / s_inv;
    let tau2 = inv_v
        .iter()
        .zip(&thetas)
        .map(|(w, t)| w * (t - centre).powi(2))
        .sum::<f64>()
        / (k - 1.0);
    let half = t_quantile(1.0 - alpha / 2.0, k - 1.0) * (tau2 / s_inv).sqrt();
    Ok(MeanMethodResult {
        mean_hat: centre,
        tau2_hat: tau2,
        lower: centre - half,
        upper: centre + half,
        method: MeanMethod::Sj,
    })
}
