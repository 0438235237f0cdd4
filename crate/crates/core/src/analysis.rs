//! Information-theoretic comparison of ablation against random-substitution
//! noising, and plot-ready tables of the bounding constant.

use crate::combinatorics::{delta, DeltaParams};
use crate::error::{Error, Result};

/// Mutual information (bits) between an image and one ablated sample under
/// a uniform-data assumption: each of the `k` retained pixels contributes
/// `log2 |S|` bits.
pub fn mutual_info_ablate(k: u64, s_size: u64) -> Result<f64> {
    if s_size < 2 {
        return Err(Error::InvalidParams("alphabet must have at least 2 symbols".into()));
    }
    Ok(k as f64 * (s_size as f64).log2())
}

/// Mutual information (bits) between an image and one sample of the
/// random-substitution scheme, where each pixel is kept with probability
/// `kappa` and otherwise replaced by a uniformly random different value:
///
/// ```text
/// d * (log2|S| + kappa*log2(kappa) + (1-kappa)*log2((1-kappa)/(|S|-1)))
/// ```
///
/// The degenerate entropy terms at `kappa` in {0, 1} take their continuous
/// limits (x log x -> 0).
pub fn mutual_info_substitution(d: u64, s_size: u64, kappa: f64) -> Result<f64> {
    if s_size < 2 {
        return Err(Error::InvalidParams("alphabet must have at least 2 symbols".into()));
    }
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::InvalidParams(format!("kappa={kappa} out of range")));
    }
    let s = s_size as f64;
    let keep = if kappa > 0.0 { kappa * kappa.log2() } else { 0.0 };
    let replace = if kappa < 1.0 {
        (1.0 - kappa) * ((1.0 - kappa) / (s - 1.0)).log2()
    } else {
        0.0
    };
    Ok(d as f64 * (s.log2() + keep + replace))
}

/// Plot-ready table of the bounding constant: one row per `rho`, one column
/// per `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaCurve {
    pub d: u64,
    pub ks: Vec<u64>,
    pub rhos: Vec<u64>,
    /// `values[row][col] = delta(d, ks[col], rhos[row])`.
    pub values: Vec<Vec<f64>>,
}

impl DeltaCurve {
    /// Delimiter-separated text with a header row.
    pub fn to_delimited(&self, sep: char) -> String {
        let mut out = String::from("rho");
        for k in &self.ks {
            out.push(sep);
            out.push_str(&format!("k={k}"));
        }
        out.push('\n');
        for (row, rho) in self.rhos.iter().enumerate() {
            out.push_str(&rho.to_string());
            for col in 0..self.ks.len() {
                out.push(sep);
                out.push_str(&format!("{:.12}", self.values[row][col]));
            }
            out.push('\n');
        }
        out
    }
}

/// Evaluates the bounding constant over a grid of retention constants and
/// perturbation budgets.
pub fn delta_curve(d: u64, ks: &[u64], rho_max: u64) -> Result<DeltaCurve> {
    if ks.is_empty() {
        return Err(Error::InvalidParams("no retention constants given".into()));
    }
    let rhos: Vec<u64> = (0..=rho_max).collect();
    let mut values = Vec::with_capacity(rhos.len());
    for &rho in &rhos {
        let mut row = Vec::with_capacity(ks.len());
        for &k in ks {
            row.push(delta(DeltaParams::new(d, k, rho)?));
        }
        values.push(row);
    }
    Ok(DeltaCurve {
        d,
        ks: ks.to_vec(),
        rhos,
        values,
    })
}
