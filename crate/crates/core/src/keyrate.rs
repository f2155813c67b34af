//! Finite-size secret key rate of Gaussian-modulated CV-QKD with reverse
//! reconciliation, plus the PLOB bound.
//!
//! `K = N_data / N_total * (beta I_AB - chi_BE - Delta)`, with `chi_BE` the
//! Holevo bound under collective Gaussian attacks. Noises are in shot-noise
//! units.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    /// Fiber loss in dB/km.
    pub alpha: f64,
    pub distance_km: f64,
    /// Excess noise `xi`.
    pub excess_noise: f64,
    /// Electronic noise `V_el`.
    pub electronic_noise: f64,
    /// Detector efficiency `eta`.
    pub efficiency: f64,
    /// Modulation variance `V_A`.
    pub modulation_variance: f64,
    pub n_total: f64,
    pub n_data: f64,
    pub epsilon: f64,
}

impl LinkParams {
    /// Homodyne link with 0.2 dB/km fiber, `xi = 0.005`, `V_el = 0.041`,
    /// `eta = 0.606`, `N_total = 2^40 = 2 N_data` and `epsilon = 1e-10`.
    pub fn reference(distance_km: f64, modulation_variance: f64) -> Self {
        Self {
            alpha: 0.2,
            distance_km,
            excess_noise: 0.005,
            electronic_noise: 0.041,
            efficiency: 0.606,
            modulation_variance,
            n_total: 2f64.powi(40),
            n_data: 2f64.powi(39),
            epsilon: 1e-10,
        }
    }

    pub fn with_distance(mut self, distance_km: f64) -> Self {
        self.distance_km = distance_km;
        self
    }

    pub fn with_modulation(mut self, v_a: f64) -> Self {
        self.modulation_variance = v_a;
        self
    }

    pub fn transmittance(&self) -> f64 {
        10f64.powf(-self.alpha * self.distance_km / 10.0)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.alpha,
            self.distance_km,
            self.excess_noise,
            self.electronic_noise,
            self.efficiency,
            self.modulation_variance,
            self.n_total,
            self.n_data,
            self.epsilon,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("link parameters must be finite"));
        }
        if self.alpha < 0.0 || self.distance_km < 0.0 {
            return Err(Error::invalid("loss and distance must be non-negative"));
        }
        if self.excess_noise < 0.0 || self.electronic_noise < 0.0 {
            return Err(Error::invalid("noises must be non-negative"));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::invalid(format!(
                "detector efficiency must lie in (0, 1], got {}",
                self.efficiency
            )));
        }
        if !(self.modulation_variance > 0.0) {
            return Err(Error::invalid("modulation variance must be positive"));
        }
        if !(self.n_data > 0.0 && self.n_data <= self.n_total) {
            return Err(Error::invalid("need 0 < N_data <= N_total"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("security parameter must be positive"));
        }
        if self.transmittance() <= 0.0 {
            return Err(Error::invalid("transmittance underflows to zero"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelNoises {
    pub chi_line: f64,
    pub chi_hom: f64,
    pub chi_total: f64,
}

pub fn channel_noises(p: &LinkParams) -> Result<ChannelNoises> {
    p.validate()?;
    let t = p.transmittance();
    let chi_line = 1.0 / t - 1.0 + p.excess_noise;
    let chi_hom = (1.0 + p.electronic_noise) / p.efficiency - 1.0;
    Ok(ChannelNoises {
        chi_line,
        chi_hom,
        chi_total: chi_line + chi_hom / t,
    })
}

/// SNR seen by Bob, `V_A / (1 + chi_total)`.
pub fn link_snr(p: &LinkParams) -> Result<f64> {
    let n = channel_noises(p)?;
    Ok(p.modulation_variance / (1.0 + n.chi_total))
}

/// `1/2 log2((V + chi_total) / (1 + chi_total))`.
pub fn mutual_info_ab(p: &LinkParams) -> Result<f64> {
    let n = channel_noises(p)?;
    let v = p.modulation_variance + 1.0;
    Ok(0.5 * ((v + n.chi_total) / (1.0 + n.chi_total)).log2())
}

/// `G(x) = (x + 1) log2(x + 1) - x log2 x`, `G(0) = 0`.
pub fn g_function(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    (x + 1.0) * (x + 1.0).log2() - x * x.log2()
}

/// Intermediate quantities of the Holevo bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolevoDetails {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub lambdas: [f64; 4],
    pub chi_be: f64,
}

fn clamped_sqrt(v: f64, what: &str) -> Result<f64> {
    if v < -1e-12 * v.abs().max(1.0) {
        return Err(Error::Unphysical(format!("negative {what}: {v}")));
    }
    Ok(v.max(0.0).sqrt())
}

pub fn holevo_details(p: &LinkParams) -> Result<HolevoDetails> {
    let noises = channel_noises(p)?;
    let t = p.transmittance();
    let v = p.modulation_variance + 1.0;
    let (cl, ch, ct) = (noises.chi_line, noises.chi_hom, noises.chi_total);
    let a = v * v * (1.0 - 2.0 * t) + 2.0 * t + t * t * (v + cl).powi(2);
    let b = t * t * (v * cl + 1.0).powi(2);
    let sqrt_b = b.sqrt();
    let c = (v * sqrt_b + t * (v + cl) + a * ch) / (t * (v + ct));
    let d = (v * sqrt_b + b * ch) / (t * (v + ct));
    let disc_ab = clamped_sqrt(a * a - 4.0 * b, "discriminant A^2 - 4B")?;
    let disc_cd = clamped_sqrt(c * c - 4.0 * d, "discriminant C^2 - 4D")?;
    let lambdas = [
        clamped_sqrt(0.5 * (a + disc_ab), "lambda_1^2")?,
        clamped_sqrt(0.5 * (a - disc_ab), "lambda_2^2")?,
        clamped_sqrt(0.5 * (c + disc_cd), "lambda_3^2")?,
        clamped_sqrt(0.5 * (c - disc_cd), "lambda_4^2")?,
    ];
    if let Some(l) = lambdas.iter().find(|&&l| l < 1.0 - 1e-9) {
        return Err(Error::Unphysical(format!("symplectic eigenvalue {l} below 1")));
    }
    let gl = |l: f64| g_function(((l - 1.0) / 2.0).max(0.0));
    let chi_be = gl(lambdas[0]) + gl(lambdas[1]) - gl(lambdas[2]) - gl(lambdas[3]);
    Ok(HolevoDetails {
        a,
        b,
        c,
        d,
        lambdas,
        chi_be,
    })
}

/// Holevo bound `chi_BE` on Eve's information.
pub fn holevo_bound(p: &LinkParams) -> Result<f64> {
    Ok(holevo_details(p)?.chi_be)
}

/// `Delta = 7 sqrt(log2(2 / epsilon) / n_data)`, valid for `n_data > 1e4`.
pub fn finite_offset(n_data: f64, epsilon: f64) -> Result<f64> {
    if !(n_data > 1e4) {
        return Err(Error::invalid(format!(
            "finite-size offset needs N_data > 1e4, got {n_data}"
        )));
    }
    if !(epsilon > 0.0) {
        return Err(Error::invalid("security parameter must be positive"));
    }
    Ok(7.0 * ((2.0 / epsilon).log2().max(0.0) / n_data).sqrt())
}

/// Repeaterless bound `-log2(1 - T)`.
pub fn plob_bound(t: f64) -> Result<f64> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::invalid(format!("PLOB bound needs 0 < T < 1, got {t}")));
    }
    Ok(-(-t).ln_1p() / std::f64::consts::LN_2)
}

/// Ideal asymptotic CV-QKD rate `T / ln 4`.
pub fn ideal_cv_rate(t: f64) -> f64 {
    t / 4f64.ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KeyRateReport {
    pub distance_km: f64,
    pub transmittance: f64,
    pub modulation_variance: f64,
    pub snr_at_link: f64,
    pub beta: f64,
    pub i_ab: f64,
    pub chi_be: f64,
    pub delta: f64,
    /// Rate before clamping at zero.
    pub k_raw: f64,
    pub k_finite: f64,
    pub k_plob: f64,
    pub k_ideal: f64,
    pub no_key: bool,
}

pub fn finite_key_rate(p: &LinkParams, beta: f64) -> Result<KeyRateReport> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::invalid(format!(
            "reconciliation efficiency must lie in [0, 1], got {beta}"
        )));
    }
    let i_ab = mutual_info_ab(p)?;
    let chi_be = holevo_bound(p)?;
    let delta = finite_offset(p.n_data, p.epsilon)?;
    let t = p.transmittance();
    let k_raw = p.n_data / p.n_total * (beta * i_ab - chi_be - delta);
    Ok(KeyRateReport {
        distance_km: p.distance_km,
        transmittance: t,
        modulation_variance: p.modulation_variance,
        snr_at_link: link_snr(p)?,
        beta,
        i_ab,
        chi_be,
        delta,
        k_raw,
        k_finite: k_raw.max(0.0),
        k_plob: if t < 1.0 { plob_bound(t)? } else { f64::INFINITY },
        k_ideal: ideal_cv_rate(t),
        no_key: k_raw <= 0.0,
    })
}

/// Reconciliation efficiency as a function of the link SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BetaModel {
    Constant(f64),
    /// `(snr, beta)` points, interpolated linearly in `ln snr` and held
    /// constant beyond both ends.
    Table(Vec<(f64, f64)>),
}

impl BetaModel {
    pub fn table(mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("beta table is empty"));
        }
        if points
            .iter()
            .any(|&(s, b)| !(s > 0.0 && s.is_finite()) || !(0.0..=1.0).contains(&b))
        {
            return Err(Error::invalid("beta table needs snr > 0 and beta in [0, 1]"));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if points.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid("beta table has duplicate snr values"));
        }
        Ok(BetaModel::Table(points))
    }

    pub fn beta(&self, snr: f64) -> f64 {
        match self {
            BetaModel::Constant(b) => *b,
            BetaModel::Table(pts) => {
                let first = pts[0];
                let last = pts[pts.len() - 1];
                if snr <= first.0 {
                    return first.1;
                }
                if snr >= last.0 {
                    return last.1;
                }
                let i = pts.partition_point(|p| p.0 <= snr);
                let (s0, b0) = pts[i - 1];
                let (s1, b1) = pts[i];
                let w = (snr.ln() - s0.ln()) / (s1.ln() - s0.ln());
                b0 + w * (b1 - b0)
            }
        }
    }
}

/// Bounds of the modulation-variance search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VaSearch {
    pub min: f64,
    pub max: f64,
    pub scan_points: usize,
    /// Relative tolerance on `V_A`.
    pub tolerance: f64,
}

impl Default for VaSearch {
    fn default() -> Self {
        Self {
            min: 0.01,
            max: 100.0,
            scan_points: 64,
            tolerance: 1e-6,
        }
    }
}

/// Maximizes the finite-size rate over `V_A`: a log-spaced scan followed by
/// golden-section refinement in `ln V_A`. The link's own `V_A` is ignored.
pub fn optimize_modulation_variance(p: &LinkParams, model: &BetaModel, search: &VaSearch) -> Result<KeyRateReport> {
    if !(search.min > 0.0 && search.max > search.min && search.scan_points >= 3) {
        return Err(Error::invalid("empty modulation-variance range"));
    }
    let eval = |ln_va: f64| -> Result<KeyRateReport> {
        let q = p.with_modulation(ln_va.exp());
        let snr = link_snr(&q)?;
        finite_key_rate(&q, model.beta(snr).clamp(0.0, 1.0))
    };
    let (lo, hi) = (search.min.ln(), search.max.ln());
    let step = (hi - lo) / (search.scan_points - 1) as f64;
    let grid: Vec<f64> = (0..search.scan_points).map(|i| lo + i as f64 * step).collect();
    let mut scan = Vec::with_capacity(grid.len());
    for &g in &grid {
        scan.push(eval(g)?);
    }
    let best_idx = scan
        .iter()
        .enumerate()
        .fold(0, |b, (i, r)| if r.k_raw > scan[b].k_raw { i } else { b });
    let mut a = grid[best_idx.saturating_sub(1)];
    let mut b = grid[(best_idx + 1).min(grid.len() - 1)];
    let mut best = scan[best_idx];
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    while b - a > search.tolerance {
        if fc.k_raw >= fd.k_raw {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(d)?;
        }
    }
    for r in [fc, fd] {
        if r.k_raw > best.k_raw {
            best = r;
        }
    }
    Ok(best)
}

/// Modulation variance that puts the link at `snr`.
pub fn modulation_for_snr(p: &LinkParams, snr: f64) -> Result<f64> {
    let n = channel_noises(p)?;
    Ok(snr * (1.0 + n.chi_total))
}
