use num_complex::Complex64;

use super::system::BlockNpSystem;

/// Eigenvalues of the discretized block operator `K*_A`, sorted by real part
/// (ties by imaginary part).
pub fn np_spectrum(system: &BlockNpSystem) -> Vec<Complex64> {
    let mut values: Vec<Complex64> = system.kernel().complex_eigenvalues().iter().copied().collect();
    values.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    values
}

/// Summary of a spectrum against the interval `(-1/2, 1/2]`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SpectrumBounds {
    pub min_re: f64,
    pub max_re: f64,
    pub max_abs_im: f64,
    /// Eigenvalues within `1e-6` of `1/2`.
    pub half_multiplicity: usize,
}

pub fn spectrum_bounds(values: &[Complex64]) -> SpectrumBounds {
    SpectrumBounds {
        min_re: values.iter().map(|v| v.re).fold(f64::INFINITY, f64::min),
        max_re: values.iter().map(|v| v.re).fold(f64::NEG_INFINITY, f64::max),
        max_abs_im: values.iter().map(|v| v.im.abs()).fold(0.0, f64::max),
        half_multiplicity: values.iter().filter(|v| (v.re - 0.5).abs() < 1e-6 && v.im.abs() < 1e-6).count(),
    }
}
