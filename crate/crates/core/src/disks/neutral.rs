use crate::error::{Error, Result};

/// Effective conductivity of a coated disk (shell `sigma1` on `r2 < r < r1`,
/// core `sigma2` on `r < r2`):
/// `sigma0 = sigma1 + 2 sigma1 f1 (sigma2 - sigma1) / (2 sigma1 + f2 (sigma2 - sigma1))`
/// with `f1 = r2^2 / r1^2 = 1 - f2`.
pub fn hashin_shtrikman(sigma1: f64, sigma2: f64, r1: f64, r2: f64) -> Result<f64> {
    if !(sigma1 > 0.0 && sigma2 > 0.0 && r2 > 0.0 && r1 > r2) {
        return Err(Error::Config(format!(
            "need positive conductivities and r1 > r2 > 0, got sigma = ({sigma1}, {sigma2}), r = ({r1}, {r2})"
        )));
    }
    let f1 = (r2 / r1).powi(2);
    let f2 = 1.0 - f1;
    let denominator = 2.0 * sigma1 + f2 * (sigma2 - sigma1);
    if denominator.abs() <= f64::EPSILON * (sigma1 + sigma2) {
        return Err(Error::DegenerateDenominator);
    }
    Ok(sigma1 + 2.0 * sigma1 * f1 * (sigma2 - sigma1) / denominator)
}

/// Shell conductivity that makes a coated disk with core `sigma2` and area
/// fraction `f1` look like a homogeneous medium of conductivity `sigma0`.
///
/// Clearing denominators gives `f2 s^2 + (1 + f1)(sigma2 - sigma0) s - f2 sigma0 sigma2 = 0`,
/// whose roots have product `-sigma0 sigma2 < 0`; the positive one is returned.
pub fn neutral_shell(sigma0: f64, sigma2: f64, f1: f64) -> Result<f64> {
    if !(sigma0 > 0.0 && sigma2 > 0.0 && f1 > 0.0 && f1 < 1.0) {
        return Err(Error::Config(format!(
            "need positive conductivities and 0 < f1 < 1, got sigma0 = {sigma0}, sigma2 = {sigma2}, f1 = {f1}"
        )));
    }
    let f2 = 1.0 - f1;
    let b = (1.0 + f1) * (sigma2 - sigma0);
    let c = f2 * sigma0 * sigma2;
    let root = (b * b + 4.0 * f2 * c).sqrt();
    // pick the cancellation-free form of the positive root
    Ok(if b >= 0.0 { 2.0 * c / (b + root) } else { (root - b) / (2.0 * f2) })
}
