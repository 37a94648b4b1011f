//! Link-state traces and 5G-NR per-resource-block rates.
//!
//! A trace is a 100 ms time series of (MCS index, throughput). Each sample is
//! turned into a per-RB bit rate ρ through the 64-QAM MCS table and into an
//! available resource-block count B = ⌊throughput / ρ⌋.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spectral efficiency (bits per resource element) per MCS index, 3GPP TS
/// 38.214 Table 5.1.3.1-1 (max 64-QAM).
pub const MCS_SPECTRAL_EFFICIENCY: [f64; 29] = [
    0.2344, 0.3066, 0.3770, 0.4902, 0.6016, 0.7402, 0.8770, 1.0273, 1.1758, 1.3262, //
    1.3281, 1.4766, 1.6953, 1.9141, 2.1602, 2.4063, 2.5703, //
    2.5664, 2.7305, 3.0293, 3.3223, 3.6094, 3.9023, 4.2129, 4.5234, 4.8164, 5.1152, 5.3320,
    5.5547,
];

pub const SUBCARRIERS_PER_RB: f64 = 12.0;
pub const SYMBOLS_PER_SLOT: f64 = 14.0;
pub const SAMPLE_PERIOD_S: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    pub scs_khz: f64,
    pub overhead_fraction: f64,
    /// Resource blocks in the carrier (1200 data subcarriers / 12).
    pub rb_ceiling: u32,
}

impl Default for RadioParams {
    fn default() -> Self {
        RadioParams { scs_khz: 15.0, overhead_fraction: 0.0, rb_ceiling: 100 }
    }
}

pub fn spectral_efficiency(mcs_index: u8) -> Result<f64> {
    MCS_SPECTRAL_EFFICIENCY
        .get(mcs_index as usize)
        .copied()
        .ok_or(Error::UnknownMcs(mcs_index))
}

/// Bits per second carried by one resource block at the given efficiency.
pub fn per_rb_rate_for_efficiency(se: f64, scs_khz: f64, overhead_fraction: f64) -> f64 {
    let slot_s = 1e-3 * 15.0 / scs_khz;
    se * SUBCARRIERS_PER_RB * SYMBOLS_PER_SLOT / slot_s * (1.0 - overhead_fraction)
}

pub fn per_rb_rate(mcs_index: u8, scs_khz: f64, overhead_fraction: f64) -> Result<f64> {
    Ok(per_rb_rate_for_efficiency(spectral_efficiency(mcs_index)?, scs_khz, overhead_fraction))
}

pub fn resource_blocks(throughput_bps: f64, rho_bps: f64) -> Result<u32> {
    if !(rho_bps > 0.0) {
        return Err(Error::NonPositiveRate(rho_bps));
    }
    Ok((throughput_bps.max(0.0) / rho_bps).floor() as u32)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    #[serde(rename = "t_s")]
    pub timestamp: f64,
    #[serde(rename = "mcs")]
    pub mcs_index: u8,
    #[serde(rename = "throughput_bps")]
    pub throughput: f64,
}

/// One (ρ, B) observation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkSample {
    pub rho: f64,
    pub blocks: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkDistribution {
    pub samples: Vec<LinkSample>,
}

impl LinkDistribution {
    pub fn constant(rho: f64, blocks: u32) -> Self {
        LinkDistribution { samples: vec![LinkSample { rho, blocks }] }
    }
}

pub fn link_sample(s: &TraceSample, params: &RadioParams) -> Result<LinkSample> {
    let rho = per_rb_rate(s.mcs_index, params.scs_khz, params.overhead_fraction)?;
    let blocks = resource_blocks(s.throughput, rho)?.min(params.rb_ceiling);
    Ok(LinkSample { rho, blocks })
}

/// (ρ, B) pairs of every raw sample in slots `[t, t + width)`.
pub fn link_window(
    trace: &[TraceSample],
    t: usize,
    width: usize,
    samples_per_slot: usize,
    params: &RadioParams,
) -> Result<LinkDistribution> {
    let horizon = trace.len() / samples_per_slot.max(1);
    if width == 0 || t + width > horizon {
        return Err(Error::OutOfRange { t: t + width.saturating_sub(1), horizon });
    }
    let lo = t * samples_per_slot;
    let hi = (t + width) * samples_per_slot;
    let samples = trace[lo..hi]
        .iter()
        .map(|s| link_sample(s, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(LinkDistribution { samples })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Outdoor,
    Indoor,
}

impl std::str::FromStr for TraceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "outdoor" => Ok(TraceKind::Outdoor),
            "indoor" => Ok(TraceKind::Indoor),
            other => Err(Error::Parse(format!("unknown trace kind {other:?}"))),
        }
    }
}

/// Generated samples plus the latent rover-to-receiver distance.
#[derive(Clone, Debug)]
pub struct SynthTrace {
    pub samples: Vec<TraceSample>,
    pub distance_m: Vec<f64>,
}

struct Profile {
    path_loss_exp: f64,
    link_budget_db: f64,
    shadow_sigma_db: f64,
    wall_penalty_db: f64,
}

const OUTDOOR: Profile =
    Profile { path_loss_exp: 2.7, link_budget_db: 78.0, shadow_sigma_db: 2.0, wall_penalty_db: 0.0 };
const INDOOR: Profile =
    Profile { path_loss_exp: 3.2, link_budget_db: 84.0, shadow_sigma_db: 4.0, wall_penalty_db: 10.0 };

const CIRCLE_RADIUS_M: f64 = 6.0;
const RECEIVER_OFFSET_M: f64 = 9.0;
const LAP_S: f64 = 37.5;
const L_PERIOD_S: f64 = 150.0;
const L_TURN_FRACTION: f64 = 0.6;

/// Position-derived distance and whether walls block line of sight.
fn geometry(kind: TraceKind, t: f64) -> (f64, bool) {
    match kind {
        TraceKind::Outdoor => {
            let th = 2.0 * std::f64::consts::PI * t / LAP_S;
            let (x, y) = (CIRCLE_RADIUS_M * th.cos(), CIRCLE_RADIUS_M * th.sin());
            (((RECEIVER_OFFSET_M - x).powi(2) + y.powi(2)).sqrt(), false)
        }
        TraceKind::Indoor => {
            let p = (t % L_PERIOD_S) / L_PERIOD_S;
            if p < L_TURN_FRACTION {
                (2.0 + 12.0 * p / L_TURN_FRACTION, false)
            } else {
                let y = 10.0 * (p - L_TURN_FRACTION) / (1.0 - L_TURN_FRACTION);
                ((14.0f64.powi(2) + y * y).sqrt(), true)
            }
        }
    }
}

fn snr_to_mcs(snr_db: f64) -> u8 {
    ((snr_db + 6.0) * 28.0 / 30.0).round().clamp(0.0, 28.0) as u8
}

/// Synthetic 100 ms link trace standing in for rover measurements.
///
/// Outdoor: circular lap around an offset receiver, mild shadowing.
/// Indoor: L-shaped walk; past the turn the link loses line of sight.
pub fn synth_trace_detailed(kind: TraceKind, duration_s: f64, seed: u64) -> SynthTrace {
    let n = ((duration_s / SAMPLE_PERIOD_S).round() as usize).max(1);
    let profile = match kind {
        TraceKind::Outdoor => &OUTDOOR,
        TraceKind::Indoor => &INDOOR,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let innovation = Normal::new(0.0, profile.shadow_sigma_db * (1.0 - 0.8f64 * 0.8).sqrt())
        .expect("finite sigma");
    let mut shadow = 0.0;
    let mut samples = Vec::with_capacity(n);
    let mut distance_m = Vec::with_capacity(n);
    let full = per_rb_rate_for_efficiency(1.0, 15.0, 0.0) * 100.0;
    for i in 0..n {
        let t = i as f64 * SAMPLE_PERIOD_S;
        let (d, blocked) = geometry(kind, t);
        shadow = 0.8 * shadow + innovation.sample(&mut rng);
        let path_loss = 40.0 + 10.0 * profile.path_loss_exp * d.log10();
        let wall = if blocked { profile.wall_penalty_db } else { 0.0 };
        let snr = profile.link_budget_db - path_loss - wall + shadow;
        let mcs = snr_to_mcs(snr);
        let efficiency: f64 = rng.random_range(0.9..1.0);
        let throughput = MCS_SPECTRAL_EFFICIENCY[mcs as usize] * full * efficiency;
        samples.push(TraceSample { timestamp: t, mcs_index: mcs, throughput });
        distance_m.push(d);
    }
    SynthTrace { samples, distance_m }
}

pub fn synth_trace(kind: TraceKind, duration_s: f64, seed: u64) -> Vec<TraceSample> {
    synth_trace_detailed(kind, duration_s, seed).samples
}

pub fn write_trace_csv(path: impl AsRef<Path>, samples: &[TraceSample]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for s in samples {
        w.serialize(s)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_trace_csv_to<W: std::io::Write>(out: W, samples: &[TraceSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in samples {
        w.serialize(s)?;
    }
    w.flush().map_err(|e| Error::io("<writer>", e))?;
    Ok(())
}

pub fn read_trace_csv(path: impl AsRef<Path>) -> Result<Vec<TraceSample>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t_s", "mcs", "throughput_bps"] {
        return Err(Error::Parse(format!(
            "{}: expected header t_s,mcs,throughput_bps",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for rec in r.deserialize() {
        let s: TraceSample = rec?;
        spectral_efficiency(s.mcs_index)?;
        if !(s.throughput >= 0.0) {
            return Err(Error::Parse(format!("negative throughput at t={}", s.timestamp)));
        }
        out.push(s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (a, b) in x.iter().zip(y) {
            sxy += (a - mx) * (b - my);
            sxx += (a - mx).powi(2);
            syy += (b - my).powi(2);
        }
        sxy / (sxx * syy).sqrt()
    }

    fn variance(x: &[f64]) -> f64 {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n
    }

    #[test]
    fn unit_efficiency_rate() {
        assert!((per_rb_rate_for_efficiency(1.0, 15.0, 0.0) - 168_000.0).abs() < 1e-9);
    }

    #[test]
    fn top_mcs_rate() {
        // 168 bits per 1 ms slot x 5.5547
        let rho = per_rb_rate(28, 15.0, 0.0).unwrap();
        assert!((rho - 933_189.6).abs() < 1e-6, "{rho}");
        let rho27 = per_rb_rate(27, 15.0, 0.0).unwrap();
        assert!((rho27 - 168.0 * 5.3320 * 1000.0).abs() < 1e-6);
    }

    #[test]
    fn mcs_zero_is_the_floor() {
        let r0 = per_rb_rate(0, 15.0, 0.0).unwrap();
        for i in 1..=28 {
            assert!(per_rb_rate(i, 15.0, 0.0).unwrap() > r0);
        }
        assert!(matches!(per_rb_rate(29, 15.0, 0.0), Err(Error::UnknownMcs(29))));
    }

    #[test]
    fn rate_is_increasing_in_efficiency() {
        let mut by_se: Vec<(f64, f64)> = (0..=28u8)
            .map(|i| (spectral_efficiency(i).unwrap(), per_rb_rate(i, 15.0, 0.0).unwrap()))
            .collect();
        by_se.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        assert!(by_se.windows(2).all(|w| w[0].1 < w[1].1));
    }

    #[test]
    fn block_counts() {
        let rho = per_rb_rate(28, 15.0, 0.0).unwrap();
        assert_eq!(resource_blocks(93.32e6, rho).unwrap(), 100);
        assert_eq!(resource_blocks(0.0, rho).unwrap(), 0);
        assert_eq!(resource_blocks(rho * 0.99, rho).unwrap(), 0);
        assert!(resource_blocks(1.0, 0.0).is_err());
        assert!(resource_blocks(1.0, -3.0).is_err());
    }

    #[test]
    fn outdoor_trace_statistics() {
        let tr = synth_trace_detailed(TraceKind::Outdoor, 150.0, 42);
        assert_eq!(tr.samples.len(), 1500);
        let mcs: Vec<f64> = tr.samples.iter().map(|s| s.mcs_index as f64).collect();
        let thr: Vec<f64> = tr.samples.iter().map(|s| s.throughput).collect();
        assert!(pearson(&mcs, &thr) > 0.7);
        assert!(pearson(&thr, &tr.distance_m) < -0.5);
        let max = thr.iter().cloned().fold(0.0, f64::max);
        assert!(max <= 100e6 && max > 50e6, "{max}");
    }

    #[test]
    fn indoor_is_more_variable_than_outdoor() {
        for seed in [1, 7, 42, 1234] {
            let o = synth_trace_detailed(TraceKind::Outdoor, 150.0, seed);
            let i = synth_trace_detailed(TraceKind::Indoor, 150.0, seed);
            let vo = variance(&o.samples.iter().map(|s| s.mcs_index as f64).collect::<Vec<_>>());
            let vi = variance(&i.samples.iter().map(|s| s.mcs_index as f64).collect::<Vec<_>>());
            assert!(vi > vo, "seed {seed}: indoor {vi} outdoor {vo}");
            let thr: Vec<f64> = i.samples.iter().map(|s| s.throughput).collect();
            assert!(pearson(&thr, &i.distance_m) < -0.5);
        }
    }

    #[test]
    fn short_trace_has_one_sample() {
        assert_eq!(synth_trace(TraceKind::Indoor, 0.1, 3).len(), 1);
    }

    #[test]
    fn traces_are_reproducible() {
        assert_eq!(
            synth_trace(TraceKind::Indoor, 20.0, 9),
            synth_trace(TraceKind::Indoor, 20.0, 9)
        );
        assert_ne!(
            synth_trace(TraceKind::Indoor, 20.0, 9),
            synth_trace(TraceKind::Indoor, 20.0, 10)
        );
    }

    #[test]
    fn window_counts_and_recomputation() {
        let p = RadioParams::default();
        let tr = synth_trace(TraceKind::Outdoor, 30.0, 5);
        let w = link_window(&tr, 3, 1, 10, &p).unwrap();
        assert_eq!(w.samples.len(), 10);
        for (k, ls) in w.samples.iter().enumerate() {
            let s = tr[30 + k];
            let rho = per_rb_rate(s.mcs_index, 15.0, 0.0).unwrap();
            assert_eq!(ls.rho, rho);
            assert_eq!(ls.blocks, ((s.throughput / rho).floor() as u32).min(100));
        }
        assert!(link_window(&tr, 29, 2, 10, &p).is_err());
    }

    #[test]
    fn constant_trace_gives_identical_pairs() {
        let p = RadioParams::default();
        let tr: Vec<TraceSample> = (0..20)
            .map(|i| TraceSample { timestamp: i as f64 * 0.1, mcs_index: 12, throughput: 40e6 })
            .collect();
        let w = link_window(&tr, 0, 2, 10, &p).unwrap();
        assert!(w.samples.windows(2).all(|x| x[0] == x[1]));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let tr = synth_trace(TraceKind::Indoor, 3.0, 1);
        write_trace_csv(&path, &tr).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t_s,mcs,throughput_bps\n"));
        assert_eq!(read_trace_csv(&path).unwrap(), tr);
    }
}
