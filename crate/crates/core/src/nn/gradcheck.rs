//! Central finite-difference checks for tape gradients.

use super::Tensor;

/// Result of comparing analytic and numerical derivatives.
#[derive(Debug, Clone, Copy, Default)]
pub struct CheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

impl CheckReport {
    pub fn merge(self, other: CheckReport) -> CheckReport {
        let worst = if other.max_rel_err > self.max_rel_err { other } else { self };
        CheckReport { checked: self.checked + other.checked, ..worst }
    }
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` against `(f(x + h e_i) - f(x - h e_i)) / 2h` for each
/// flat index in `indices`. `f` receives the perturbed tensor.
pub fn check_entries(
    x: &Tensor,
    analytic: &Tensor,
    indices: impl IntoIterator<Item = usize>,
    h: f64,
    floor: f64,
    mut f: impl FnMut(&Tensor) -> f64,
) -> CheckReport {
    let mut report = CheckReport::default();
    let mut probe = x.clone();
    for i in indices {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let fp = f(&probe);
        probe.data_mut()[i] = orig - h;
        let fm = f(&probe);
        probe.data_mut()[i] = orig;
        let numeric = (fp - fm) / (2.0 * h);
        let a = analytic.data()[i];
        let e = rel_err(a, numeric, floor);
        report.checked += 1;
        if e > report.max_rel_err || report.checked == 1 {
            report.max_rel_err = report.max_rel_err.max(e);
            report.worst_analytic = a;
            report.worst_numeric = numeric;
        }
    }
    report
}
