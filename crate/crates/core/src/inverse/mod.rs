//! Recovery of a concentric layered disk structure from one far-field
//! measurement: locate the center, fit the multipole spectrum about it,
//! peel and refine the radii, then solve for the conductivities with an
//! invertibility certificate.

mod extract;
mod locate;
mod measurement;
mod radii;
mod sigmas;

pub use extract::{extract_multipoles, extract_multipoles_with, visible_orders, ExtractOptions, Extraction};
pub use locate::{locate, refine_center, Location};
pub use measurement::MeasurementSet;
pub use radii::{recover_radii, recover_radii_weighted, RadiiEstimate};
pub use sigmas::{combinations, recover_sigmas, Attempt, SigmaEstimate, SigmaOptions};

use serde::{Deserialize, Serialize};

use crate::disks::multipole;
use crate::error::{Error, Result};
use crate::model::{ConcentricDisks, Point};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InverseOptions {
    pub layers: usize,
    pub n_max: usize,
    /// Orders tried first when solving for conductivities; defaults to the
    /// lowest `layers` orders present.
    pub sigma_orders: Option<Vec<usize>>,
    pub certificate_threshold: f64,
    pub max_combinations: usize,
    /// Refine the dipole center against the full multipole series.
    pub refine_center: bool,
    /// Known center; skips localization.
    pub center: Option<Point>,
    pub extract: ExtractOptions,
    /// Weighted residual level above which the fit is flagged as a misfit.
    pub misfit_factor: f64,
}

impl Default for InverseOptions {
    fn default() -> Self {
        InverseOptions {
            layers: 1,
            n_max: 20,
            sigma_orders: None,
            certificate_threshold: 1e-10,
            max_combinations: 20,
            refine_center: true,
            center: None,
            extract: ExtractOptions::default(),
            misfit_factor: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderResidual {
    pub n: usize,
    pub measured: f64,
    pub model: f64,
    pub uncertainty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseReport {
    pub center: Point,
    pub radii: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub peeled_radii: Vec<f64>,
    pub residuals: Vec<OrderResidual>,
    /// Root-mean-square of `(measured - model) / uncertainty` over all orders.
    pub weighted_rms: f64,
    /// Root-mean-square misfit of the multipole fit to the samples.
    pub extraction_rms: f64,
    pub extraction_condition: f64,
    pub sigma_orders: Vec<usize>,
    pub det_left: f64,
    pub det_right: f64,
    pub rel_det_left: f64,
    pub rel_det_right: f64,
    pub certificate_passed: bool,
    pub attempts: Vec<Attempt>,
    pub locate_converged: bool,
    pub radii_converged: bool,
    pub peel_repaired: bool,
    pub misfit: bool,
}

impl InverseReport {
    pub fn structure(&self) -> Result<ConcentricDisks> {
        ConcentricDisks::with_center(self.radii.clone(), self.sigmas.clone(), self.center)
    }
}

/// Runs the full pipeline. Errors carry the stage they came from.
pub fn invert(m: &MeasurementSet, options: &InverseOptions) -> Result<InverseReport> {
    m.validate()?;
    let layers = options.layers;
    if layers == 0 {
        return Err(Error::Config("layers must be at least 1".into()));
    }
    let (center, locate_converged) = match options.center {
        Some(c) => (c, true),
        None => {
            let rough = locate(m).map_err(|e| e.in_stage("locate"))?;
            if options.refine_center {
                let fine = refine_center(m, &rough.center, options.n_max).map_err(|e| e.in_stage("locate"))?;
                (fine.center, fine.converged)
            } else {
                (rough.center, rough.converged)
            }
        }
    };

    let ex = extract_multipoles_with(m, &center, options.n_max, &options.extract).map_err(|e| e.in_stage("extract"))?;
    let orders: Vec<usize> = ex.spectrum.orders().collect();
    let radii = recover_radii_weighted(&ex.spectrum, layers, &orders, Some(&ex.uncertainties))
        .map_err(|e| e.in_stage("radii"))?;

    let preferred = match &options.sigma_orders {
        Some(o) => o.clone(),
        None => orders.iter().copied().take(layers).collect(),
    };
    let sigma_options = SigmaOptions {
        certificate_threshold: options.certificate_threshold,
        max_combinations: options.max_combinations,
        initial_lambdas: Some(radii.lambdas.clone()),
        ..SigmaOptions::default()
    };
    let est =
        recover_sigmas(&ex.spectrum, &radii.radii, &preferred, &sigma_options).map_err(|e| e.in_stage("sigmas"))?;

    let mut residuals = Vec::with_capacity(orders.len());
    let mut sum = 0.0;
    let fitted = ConcentricDisks::new_unchecked(radii.radii.clone(), est.sigmas.clone(), center);
    for &n in &orders {
        let measured = ex.spectrum.get(n).unwrap_or(0.0);
        let model = multipole(&fitted, n).map_err(|e| e.in_stage("report"))?;
        let uncertainty = ex.uncertainties[&n];
        sum += ((measured - model) / uncertainty.max(f64::MIN_POSITIVE)).powi(2);
        residuals.push(OrderResidual { n, measured, model, uncertainty });
    }
    let weighted_rms = (sum / orders.len() as f64).sqrt();
    Ok(InverseReport {
        center,
        radii: radii.radii,
        sigmas: est.sigmas,
        lambdas: est.lambdas,
        peeled_radii: radii.peeled_radii,
        residuals,
        weighted_rms,
        extraction_rms: ex.residual_rms,
        extraction_condition: ex.condition,
        sigma_orders: est.orders,
        det_left: est.certificate.det_left,
        det_right: est.certificate.det_right,
        rel_det_left: est.certificate.rel_left,
        rel_det_right: est.certificate.rel_right,
        certificate_passed: est.certificate.passes(options.certificate_threshold),
        attempts: est.attempts,
        locate_converged,
        radii_converged: radii.converged,
        peel_repaired: radii.repaired,
        misfit: weighted_rms > options.misfit_factor,
    })
}
