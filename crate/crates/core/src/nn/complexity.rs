//! Weight and multiply-accumulate counts of the mask network and the GEV
//! beamformer, evaluated from their symbolic shape formulas.

use std::fmt;

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexityRow {
    pub label: String,
    pub shape: String,
    /// Zero for the beamformer rows, which have no weights.
    pub weights: u64,
    pub macs: u64,
}

impl ComplexityRow {
    /// MACs in millions, rounded the way the tables print them: whole
    /// millions, or one decimal below a million.
    pub fn printed_macs_millions(&self) -> f64 {
        printed_millions(self.macs)
    }
}

fn printed_millions(macs: u64) -> f64 {
    let m = macs as f64 / 1e6;
    if m >= 1.0 {
        m.round()
    } else {
        (m * 10.0).round() / 10.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexityReport {
    pub mics: u64,
    pub bins: u64,
    pub frames: u64,
    pub network: Vec<ComplexityRow>,
    pub static_gev: Vec<ComplexityRow>,
    pub dynamic_gev: Vec<ComplexityRow>,
}

impl ComplexityReport {
    pub fn total_weights(&self) -> u64 {
        self.network.iter().map(|r| r.weights).sum()
    }

    pub fn network_macs(&self) -> u64 {
        self.network.iter().map(|r| r.macs).sum()
    }

    /// Sum of the printed (rounded) row values, in millions.
    pub fn printed_total(rows: &[ComplexityRow]) -> f64 {
        let s: f64 = rows.iter().map(ComplexityRow::printed_macs_millions).sum();
        (s * 10.0).round() / 10.0
    }
}

fn row(label: &str, shape: &str, weights: u64, macs: u64) -> ComplexityRow {
    ComplexityRow { label: label.into(), shape: shape.into(), weights, macs }
}

/// Per-layer counts for `m` microphones, `k` bins and `t` frames.
pub fn complexity_report(m: u64, k: u64, t: u64) -> ComplexityReport {
    let layers = [
        ("BLSTM", "16 x K x 2M x M", 16 * k * 2 * m * m),
        ("Dense", "K x M x 2", k * m * 2),
        ("Dense", "2K x K", 2 * k * k),
        ("BLSTM", "16 x K x 2K", 16 * k * 2 * k),
        ("Dense", "3 x 2K x K", 3 * 2 * k * k),
    ];
    let network = layers.iter().map(|&(l, s, w)| row(l, s, w, w * t)).collect();
    let psd = row("PSD", "T x 2 x K x M^2", 0, t * 2 * k * m * m);
    let static_gev = vec![psd.clone(), row("GEV", "K x M^3", 0, k * m * m * m)];
    let dynamic_gev = vec![psd, row("GEV", "T x K x M^3", 0, t * k * m * m * m)];
    ComplexityReport { mics: m, bins: k, frames: t, network, static_gev, dynamic_gev }
}

impl fmt::Display for ComplexityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mask network (M={}, K={}, T={})", self.mics, self.bins, self.frames)?;
        writeln!(f, "{:<8}{:<20}{:>12}{:>12}", "layer", "shape", "weights", "MAC")?;
        for r in &self.network {
            writeln!(f, "{:<8}{:<20}{:>12}{:>10}e6", r.label, r.shape, r.weights, r.printed_macs_millions())?;
        }
        writeln!(
            f,
            "{:<8}{:<20}{:>12}{:>10}e6",
            "total",
            "",
            self.total_weights(),
            ComplexityReport::printed_total(&self.network)
        )?;
        for (name, rows) in [("static", &self.static_gev), ("dynamic", &self.dynamic_gev)] {
            writeln!(f, "{name} GEV beamformer")?;
            for r in rows {
                writeln!(f, "{:<8}{:<20}{:>24}e6", r.label, r.shape, r.printed_macs_millions())?;
            }
            writeln!(f, "{:<8}{:<20}{:>24}e6", "total", "", ComplexityReport::printed_total(rows))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_mics_513_bins() {
        let r = complexity_report(6, 513, 500);
        let w: Vec<u64> = r.network.iter().map(|r| r.weights).collect();
        assert_eq!(w, vec![590976, 6156, 526338, 8421408, 1579014]);
        assert_eq!(r.total_weights(), 11123892);
        let printed: Vec<f64> = r.network.iter().map(|r| r.printed_macs_millions()).collect();
        assert_eq!(printed, vec![295.0, 3.0, 263.0, 4211.0, 790.0]);
        assert_eq!(ComplexityReport::printed_total(&r.network), 5562.0);
        assert_eq!(ComplexityReport::printed_total(&r.static_gev), 18.1);
        assert_eq!(ComplexityReport::printed_total(&r.dynamic_gev), 73.0);
    }

    #[test]
    fn macs_scale_with_frames() {
        let a = complexity_report(2, 17, 10);
        let b = complexity_report(2, 17, 20);
        assert_eq!(2 * a.network_macs(), b.network_macs());
        assert_eq!(a.static_gev[1], b.static_gev[1]);
    }
}
