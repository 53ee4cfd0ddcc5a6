//! Normalized L1 roofline: the FPU utilization a kernel can reach at best,
//! given its memory elements per FMA (`m`) and the machine's
//! bandwidth-to-compute ratio (`r`).

use std::fmt::Write as _;

use thiserror::Error;

/// Accounting slack allowed between a measured utilization and its ceiling.
pub const SLACK: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum RooflineError {
    #[error("operational intensity must be positive, got {0}")]
    Intensity(f64),
    #[error("bandwidth-to-compute ratio must be positive, got {0}")]
    Ratio(f64),
}

/// `min(1, r / m)`.
pub fn ceiling(m: f64, r: f64) -> Result<f64, RooflineError> {
    if !(m > 0.0) {
        return Err(RooflineError::Intensity(m));
    }
    if !(r > 0.0) {
        return Err(RooflineError::Ratio(r));
    }
    Ok((r / m).min(1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RooflinePoint {
    pub kernel: String,
    pub m: f64,
    pub ratio: f64,
    pub ceiling: f64,
    pub achieved: Option<f64>,
}

impl RooflinePoint {
    pub fn new(kernel: impl Into<String>, m: f64, ratio: f64, achieved: Option<f64>) -> Result<Self, RooflineError> {
        Ok(RooflinePoint {
            kernel: kernel.into(),
            m,
            ratio,
            ceiling: ceiling(m, ratio)?,
            achieved,
        })
    }

    /// Distance below the ceiling (0 if unknown or above it).
    pub fn gap(&self) -> Option<f64> {
        self.achieved.map(|a| (self.ceiling - a).max(0.0))
    }

    pub fn within_bound(&self) -> bool {
        self.achieved.is_none_or(|a| a <= self.ceiling + SLACK)
    }
}

/// Published utilizations of other vector engines, drawn next to the
/// simulated points. Annotation only; never asserted against.
pub struct LiteraturePoint {
    pub label: &'static str,
    pub kernel: &'static str,
    pub m: f64,
    pub ratio: f64,
    pub achieved: f64,
}

pub const LITERATURE: &[LiteraturePoint] = &[
    // 4-lane Ara, bandwidth-to-compute ratio 1:2
    LiteraturePoint { label: "Ara", kernel: "dotp", m: 2.0, ratio: 0.5, achieved: 0.22 },
    // Vitruvius+, ratio 1:1
    LiteraturePoint { label: "Vitruvius+", kernel: "axpy", m: 3.0, ratio: 1.0, achieved: 0.38 },
    // the original Spatz cluster, ratio 1:1
    LiteraturePoint { label: "Spatz", kernel: "dotp", m: 2.0, ratio: 1.0, achieved: 0.33 },
    LiteraturePoint { label: "Spatz", kernel: "axpy", m: 3.0, ratio: 1.0, achieved: 0.21 },
];

/// Rows for the normalized roofline report: one per run, then the literature points.
pub fn roofline_table(runs: &[(String, f64, f64, f64)]) -> Result<Vec<RooflinePoint>, RooflineError> {
    let mut rows = Vec::new();
    for (kernel, m, r, achieved) in runs {
        rows.push(RooflinePoint::new(kernel.clone(), *m, *r, Some(*achieved))?);
    }
    for p in LITERATURE {
        rows.push(RooflinePoint::new(format!("{}:{}", p.label, p.kernel), p.m, p.ratio, Some(p.achieved))?);
    }
    Ok(rows)
}

pub const CSV_HEADER: &str = "kernel,m,ratio,ceiling,achieved,gap";

/// `kernel,m,ratio,ceiling,achieved,gap`; unknown values are left empty.
pub fn to_csv(rows: &[RooflinePoint]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.4}"));
    for p in rows {
        let _ = writeln!(
            out,
            "{},{:.4},{:.4},{:.4},{},{}",
            p.kernel,
            p.m,
            p.ratio,
            p.ceiling,
            opt(p.achieved),
            opt(p.gap())
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_positive() {
        assert_eq!(ceiling(0.0, 1.0), Err(RooflineError::Intensity(0.0)));
        assert_eq!(ceiling(2.0, -1.0), Err(RooflineError::Ratio(-1.0)));
        assert!(ceiling(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn compute_bound_limit() {
        let p = RooflinePoint::new("gemm", 1e-9, 1.0, Some(1.0)).unwrap();
        assert_eq!(p.ceiling, 1.0);
        assert_eq!(p.gap(), Some(0.0));
    }

    #[test]
    fn baseline_axpy_gap() {
        let p = RooflinePoint::new("axpy", 3.0, 1.0, Some(0.21)).unwrap();
        assert!((p.gap().unwrap() - (1.0 / 3.0 - 0.21)).abs() < 1e-12);
    }

    #[test]
    fn table_appends_literature() {
        let rows = roofline_table(&[("dotp".into(), 2.0, 2.0, 0.96)]).unwrap();
        assert_eq!(rows.len(), 1 + LITERATURE.len());
        let csv = to_csv(&rows);
        assert!(csv.starts_with("kernel,m,ratio,ceiling,achieved,gap\ndotp,2.0000,2.0000,1.0000,0.9600,0.0400\n"));
        assert!(csv.contains("Ara:dotp,2.0000,0.5000,0.2500,0.2200,0.0300"));
    }
}
