//! Hourly demand profiles: residential base load, EV charging and rooftop
//! solar from non-battery homes, plus the per-bus home mix that decides how
//! much of that solar reaches the feeder.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Bus, RadialNetwork, SLACK_BUS};

pub const HOURS: usize = 24;
pub type Hourly = [f64; HOURS];

/// Double-peaked weekday residential shape, 1.0 at the evening peak.
pub const RESIDENTIAL_SHAPE: Hourly = [
    0.55, 0.50, 0.47, 0.46, 0.47, 0.55, 0.70, 0.82, 0.80, 0.72, 0.68, 0.66, //
    0.65, 0.64, 0.66, 0.72, 0.82, 0.93, 1.00, 0.98, 0.92, 0.82, 0.70, 0.60,
];

/// Weekday EV charging start-hour distribution, peaked in the early evening.
pub const EV_START_PMF: Hourly = [
    0.010, 0.005, 0.005, 0.005, 0.005, 0.010, 0.015, 0.025, 0.030, 0.030, 0.025, 0.025, //
    0.030, 0.030, 0.035, 0.050, 0.080, 0.120, 0.140, 0.120, 0.090, 0.060, 0.035, 0.020,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidentialShape {
    /// Spot loads scaled by [`RESIDENTIAL_SHAPE`].
    DoublePeak,
    /// Spot loads held constant for all 24 hours.
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyProfileSet {
    pub p_res: BTreeMap<u32, Hourly>,
    pub q_res: BTreeMap<u32, Hourly>,
    pub p_ev: BTreeMap<u32, Hourly>,
    /// Generation of one non-battery solar home (kW).
    pub p_solar_unit: Hourly,
}

impl HourlyProfileSet {
    /// All-zero profiles for every non-slack bus.
    pub fn zeros(net: &RadialNetwork) -> Self {
        let z: BTreeMap<u32, Hourly> = net
            .load_bus_ids()
            .into_iter()
            .map(|b| (b, [0.0; HOURS]))
            .collect();
        Self {
            p_res: z.clone(),
            q_res: z.clone(),
            p_ev: z,
            p_solar_unit: [0.0; HOURS],
        }
    }

    /// Every non-slack bus of `net` must have all three series.
    pub fn validate_for(&self, net: &RadialNetwork) -> Result<()> {
        let missing: Vec<u32> = net
            .load_bus_ids()
            .into_iter()
            .filter(|b| {
                !(self.p_res.contains_key(b)
                    && self.q_res.contains_key(b)
                    && self.p_ev.contains_key(b))
            })
            .collect();
        if !missing.is_empty() {
            return Err(Error::Schema(format!(
                "profiles missing for buses {missing:?}"
            )));
        }
        let finite = |m: &BTreeMap<u32, Hourly>| m.values().flatten().all(|v| v.is_finite());
        if !(finite(&self.p_res) && finite(&self.q_res) && finite(&self.p_ev)) {
            return Err(Error::Schema("profiles contain non-finite values".into()));
        }
        if self
            .p_solar_unit
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::Schema(
                "unit solar output must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Per-bus split of homes into non-battery (NBBSR) and battery (BBSR) solar
/// residences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusMix {
    pub n_nbbsr: u32,
    pub n_bbsr: u32,
}

impl BusMix {
    /// Rounds `alpha * n_residences` to the nearest whole home.
    pub fn from_alpha(alpha: f64, n_residences: u32) -> Self {
        let n_nbbsr = (alpha * n_residences as f64).round() as u32;
        let n_nbbsr = n_nbbsr.min(n_residences);
        Self {
            n_nbbsr,
            n_bbsr: n_residences - n_nbbsr,
        }
    }

    /// Effective fraction of non-battery homes; 0 for a bus with no homes.
    pub fn alpha(&self) -> f64 {
        alpha_from_counts(self.n_nbbsr, self.n_bbsr).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixConfig {
    /// Requested fraction of non-battery homes.
    pub alpha: f64,
    pub per_bus: BTreeMap<u32, BusMix>,
}

impl MixConfig {
    /// Same target fraction at every non-slack bus.
    pub fn uniform(net: &RadialNetwork, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Config(format!(
                "alpha must lie in [0, 1], got {alpha}"
            )));
        }
        let per_bus = net
            .buses
            .iter()
            .filter(|b| b.id != SLACK_BUS)
            .map(|b| (b.id, BusMix::from_alpha(alpha, b.n_residences)))
            .collect();
        Ok(Self { alpha, per_bus })
    }

    pub fn bus(&self, id: u32) -> BusMix {
        self.per_bus.get(&id).copied().unwrap_or(BusMix {
            n_nbbsr: 0,
            n_bbsr: 0,
        })
    }
}

/// Fraction of non-battery homes among all solar homes at a bus.
pub fn alpha_from_counts(n_nbbsr: u32, n_bbsr: u32) -> Result<f64> {
    let total = n_nbbsr + n_bbsr;
    if total == 0 {
        return Err(Error::Config("degenerate mix: no homes at the bus".into()));
    }
    Ok(n_nbbsr as f64 / total as f64)
}

/// Solar power injected by the non-battery homes of one bus:
/// `alpha * N_B * unit(t)`.
pub fn net_solar(bus: &Bus, mix: &BusMix, p_solar_unit: &Hourly) -> Hourly {
    let scale = mix.alpha() * bus.n_residences as f64;
    p_solar_unit.map(|p| scale * p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadFlags {
    pub ev: bool,
    pub solar: bool,
}

impl LoadFlags {
    pub const ALL: LoadFlags = LoadFlags {
        ev: true,
        solar: true,
    };
    pub const GRID_ONLY: LoadFlags = LoadFlags {
        ev: false,
        solar: false,
    };
}

/// Net consumption of one bus in one hour as `(kW, kVAR)`.
///
/// Solar generation and battery discharge (`battery_kw < 0`) reduce the
/// load; charging adds to it. EV and solar run at unity power factor.
pub fn compose_bus_injection(
    bus: &Bus,
    mix: &BusMix,
    profiles: &HourlyProfileSet,
    hour: usize,
    battery_kw: f64,
    flags: LoadFlags,
) -> (f64, f64) {
    debug_assert!(hour < HOURS);
    let series = |m: &BTreeMap<u32, Hourly>| m.get(&bus.id).map_or(0.0, |s| s[hour]);
    let mut p = series(&profiles.p_res);
    if flags.ev {
        p += series(&profiles.p_ev);
    }
    if flags.solar {
        p -= mix.alpha() * bus.n_residences as f64 * profiles.p_solar_unit[hour];
    }
    (p + battery_kw, series(&profiles.q_res))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvProfileParams {
    pub start_hour_pmf: Hourly,
    pub charger_kw: f64,
    pub session_hours: u32,
    pub vehicles_per_bus: u32,
    pub seed: u64,
}

impl Default for EvProfileParams {
    fn default() -> Self {
        Self {
            start_hour_pmf: EV_START_PMF,
            charger_kw: 6.6,
            session_hours: 3,
            vehicles_per_bus: 10,
            seed: 7,
        }
    }
}

impl EvProfileParams {
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.start_hour_pmf.iter().sum();
        if self
            .start_hour_pmf
            .iter()
            .any(|p| !(p.is_finite() && *p >= 0.0))
            || (sum - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!(
                "EV start-hour pmf must be non-negative and sum to 1 (sum = {sum})"
            )));
        }
        if !(self.charger_kw.is_finite() && self.charger_kw >= 0.0) {
            return Err(Error::Config("EV charger power must be >= 0".into()));
        }
        Ok(())
    }
}

/// Draws one start hour per vehicle and stacks `charger_kw` over the
/// session, wrapping past midnight.
pub fn synth_ev_profile(params: &EvProfileParams) -> Result<Hourly> {
    params.validate()?;
    let mut out = [0.0; HOURS];
    if params.vehicles_per_bus == 0 || params.session_hours == 0 {
        return Ok(out);
    }
    let dist = WeightedIndex::new(params.start_hour_pmf)
        .map_err(|e| Error::Config(format!("EV start-hour pmf: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut sessions = [0u32; HOURS];
    for _ in 0..params.vehicles_per_bus {
        let start = dist.sample(&mut rng);
        for h in 0..params.session_hours as usize {
            sessions[(start + h) % HOURS] += 1;
        }
    }
    for (o, &n) in out.iter_mut().zip(&sessions) {
        *o = n as f64 * params.charger_kw;
    }
    Ok(out)
}

/// Daylight half-sine from 06:00 to 18:00, sampled at hour midpoints.
pub fn synth_solar_unit(peak_kw: f64) -> Hourly {
    std::array::from_fn(|h| {
        let t = h as f64 + 0.5;
        if (6.0..18.0).contains(&t) {
            peak_kw * (PI * (t - 6.0) / 12.0).sin()
        } else {
            0.0
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub residential: ResidentialShape,
    pub solar_unit_peak_kw: f64,
    pub ev: EvProfileParams,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            residential: ResidentialShape::DoublePeak,
            solar_unit_peak_kw: 1.5,
            ev: EvProfileParams::default(),
        }
    }
}

/// Builds a full profile set from the network's spot loads. Each bus draws
/// its EV sessions from its own stream derived from `params.ev.seed`.
pub fn synthesize(net: &RadialNetwork, params: &SynthParams) -> Result<HourlyProfileSet> {
    if !(params.solar_unit_peak_kw.is_finite() && params.solar_unit_peak_kw >= 0.0) {
        return Err(Error::Config("solar peak must be >= 0".into()));
    }
    let shape = match params.residential {
        ResidentialShape::DoublePeak => RESIDENTIAL_SHAPE,
        ResidentialShape::Flat => [1.0; HOURS],
    };
    let mut set = HourlyProfileSet {
        p_res: BTreeMap::new(),
        q_res: BTreeMap::new(),
        p_ev: BTreeMap::new(),
        p_solar_unit: synth_solar_unit(params.solar_unit_peak_kw),
    };
    for b in net.buses.iter().filter(|b| b.id != SLACK_BUS) {
        set.p_res.insert(b.id, shape.map(|s| s * b.p_load_kw));
        set.q_res.insert(b.id, shape.map(|s| s * b.q_load_kvar));
        let ev = EvProfileParams {
            seed: crate::mix_seed(params.ev.seed, b.id as u64),
            ..params.ev.clone()
        };
        set.p_ev.insert(b.id, synth_ev_profile(&ev)?);
    }
    Ok(set)
}

/// `(p_res, q_res, p_ev)` for one bus and hour.
type HourRow = (f64, f64, f64);

#[derive(Debug, Deserialize)]
struct BusHourRow {
    bus_id: u32,
    hour: usize,
    p_res_kw: f64,
    q_res_kvar: f64,
    p_ev_kw: f64,
}

#[derive(Debug, Deserialize)]
struct SolarRow {
    hour: usize,
    p_solar_unit_kw: f64,
}

/// Reads the per-bus table (`bus_id,hour,p_res_kw,q_res_kvar,p_ev_kw`) and
/// the global solar table (`hour,p_solar_unit_kw`).
pub fn load_profiles<B: Read, S: Read>(bus_table: B, solar_table: S) -> Result<HourlyProfileSet> {
    let mut seen: BTreeMap<u32, [Option<HourRow>; HOURS]> = BTreeMap::new();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bus_table);
    for row in rdr.deserialize::<BusHourRow>() {
        let r = row.map_err(|e| Error::Schema(format!("profile table: {e}")))?;
        if r.hour >= HOURS {
            return Err(Error::Schema(format!(
                "bus {} has hour {} outside 0..23",
                r.bus_id, r.hour
            )));
        }
        if ![r.p_res_kw, r.q_res_kvar, r.p_ev_kw]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::Schema(format!(
                "non-finite value at ({}, {})",
                r.bus_id, r.hour
            )));
        }
        let slot = &mut seen.entry(r.bus_id).or_insert([None; HOURS])[r.hour];
        if slot.is_some() {
            return Err(Error::Schema(format!(
                "duplicate row ({}, {})",
                r.bus_id, r.hour
            )));
        }
        *slot = Some((r.p_res_kw, r.q_res_kvar, r.p_ev_kw));
    }

    let gaps: Vec<(u32, usize)> = seen
        .iter()
        .flat_map(|(&b, hours)| {
            hours
                .iter()
                .enumerate()
                .filter(|(_, v)| v.is_none())
                .map(move |(h, _)| (b, h))
        })
        .collect();
    if !gaps.is_empty() {
        return Err(Error::Schema(format!(
            "profile table missing (bus, hour) rows {gaps:?}"
        )));
    }

    let mut solar = [None; HOURS];
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(solar_table);
    for row in rdr.deserialize::<SolarRow>() {
        let r = row.map_err(|e| Error::Schema(format!("solar table: {e}")))?;
        if r.hour >= HOURS {
            return Err(Error::Schema(format!(
                "solar hour {} outside 0..23",
                r.hour
            )));
        }
        if !(r.p_solar_unit_kw.is_finite() && r.p_solar_unit_kw >= 0.0) {
            return Err(Error::Schema(format!(
                "negative or non-finite p_solar_unit_kw at hour {}",
                r.hour
            )));
        }
        solar[r.hour] = Some(r.p_solar_unit_kw);
    }
    let missing: BTreeSet<usize> = (0..HOURS).filter(|&h| solar[h].is_none()).collect();
    if !missing.is_empty() {
        return Err(Error::Schema(format!(
            "solar table missing hours {missing:?}"
        )));
    }

    let mut set = HourlyProfileSet {
        p_res: BTreeMap::new(),
        q_res: BTreeMap::new(),
        p_ev: BTreeMap::new(),
        p_solar_unit: solar.map(|v| v.unwrap()),
    };
    for (b, hours) in seen {
        let hours = hours.map(|v| v.unwrap());
        set.p_res.insert(b, hours.map(|v| v.0));
        set.q_res.insert(b, hours.map(|v| v.1));
        set.p_ev.insert(b, hours.map(|v| v.2));
    }
    Ok(set)
}

pub fn load_profiles_csv(bus_path: &Path, solar_path: &Path) -> Result<HourlyProfileSet> {
    let b = File::open(bus_path).map_err(|e| Error::io(bus_path, e))?;
    let s = File::open(solar_path).map_err(|e| Error::io(solar_path, e))?;
    load_profiles(b, s)
}

/// Inverse of [`load_profiles`]: `(bus table, solar table)` as CSV text.
pub fn profiles_to_csv(set: &HourlyProfileSet) -> (String, String) {
    let mut bus = String::from("bus_id,hour,p_res_kw,q_res_kvar,p_ev_kw\n");
    for (b, p) in &set.p_res {
        let q = set.q_res.get(b).copied().unwrap_or([0.0; HOURS]);
        let ev = set.p_ev.get(b).copied().unwrap_or([0.0; HOURS]);
        for h in 0..HOURS {
            bus.push_str(&format!("{b},{h},{},{},{}\n", p[h], q[h], ev[h]));
        }
    }
    let mut solar = String::from("hour,p_solar_unit_kw\n");
    for (h, v) in set.p_solar_unit.iter().enumerate() {
        solar.push_str(&format!("{h},{v}\n"));
    }
    (bus, solar)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bus92() -> Bus {
        Bus {
            id: 5,
            p_load_kw: 60.0,
            q_load_kvar: 30.0,
            n_residences: 92,
        }
    }

    #[test]
    fn alpha_examples() {
        assert!((alpha_from_counts(64, 28).unwrap() - 0.6957).abs() < 1e-4);
        assert_eq!(alpha_from_counts(46, 46).unwrap(), 0.5);
        assert_eq!(alpha_from_counts(0, 92).unwrap(), 0.0);
        assert!(alpha_from_counts(0, 0).is_err());
    }

    #[test]
    fn seventy_percent_of_92_rounds_to_64() {
        let m = BusMix::from_alpha(0.7, 92);
        assert_eq!((m.n_nbbsr, m.n_bbsr), (64, 28));
        assert_eq!(m.alpha(), 64.0 / 92.0);
    }

    #[test]
    fn net_solar_products() {
        let b = bus92();
        let mut unit = [0.0; HOURS];
        unit[12] = 10.0;
        let none = net_solar(&b, &BusMix::from_alpha(0.0, 92), &unit);
        assert!(none.iter().all(|&v| v == 0.0));
        let all = net_solar(&b, &BusMix::from_alpha(1.0, 92), &unit);
        assert_eq!(all[12], 920.0);
        unit[12] = 4.0;
        let half = net_solar(&b, &BusMix::from_alpha(0.5, 92), &unit);
        assert_eq!(half[12], 184.0);
    }

    fn one_bus_profiles(res: f64, ev: f64, solar_unit: f64) -> HourlyProfileSet {
        let mut s = HourlyProfileSet {
            p_res: BTreeMap::new(),
            q_res: BTreeMap::new(),
            p_ev: BTreeMap::new(),
            p_solar_unit: [solar_unit; HOURS],
        };
        s.p_res.insert(5, [res; HOURS]);
        s.q_res.insert(5, [3.0; HOURS]);
        s.p_ev.insert(5, [ev; HOURS]);
        s
    }

    #[test]
    fn compose_sign_convention() {
        let b = Bus {
            n_residences: 1,
            ..bus92()
        };
        let mix = BusMix {
            n_nbbsr: 1,
            n_bbsr: 0,
        };
        let p = one_bus_profiles(50.0, 20.0, 30.0);
        assert_eq!(
            compose_bus_injection(&b, &mix, &p, 3, 0.0, LoadFlags::ALL),
            (40.0, 3.0)
        );
        let z = one_bus_profiles(0.0, 0.0, 0.0);
        assert_eq!(
            compose_bus_injection(&b, &mix, &z, 3, 0.0, LoadFlags::ALL).0,
            0.0
        );
        let s = one_bus_profiles(0.0, 0.0, 100.0);
        assert_eq!(
            compose_bus_injection(&b, &mix, &s, 3, 100.0, LoadFlags::ALL).0,
            0.0
        );
        assert_eq!(
            compose_bus_injection(&b, &mix, &p, 3, 0.0, LoadFlags::GRID_ONLY).0,
            50.0
        );
    }

    #[test]
    fn point_mass_ev_profile() {
        let mut pmf = [0.0; HOURS];
        pmf[18] = 1.0;
        let p = EvProfileParams {
            start_hour_pmf: pmf,
            charger_kw: 7.0,
            session_hours: 2,
            vehicles_per_bus: 10,
            seed: 1,
        };
        let s = synth_ev_profile(&p).unwrap();
        for (h, v) in s.iter().enumerate() {
            let want = if h == 18 || h == 19 { 70.0 } else { 0.0 };
            assert_eq!(*v, want, "hour {h}");
        }
    }

    #[test]
    fn session_wraps_past_midnight() {
        let mut pmf = [0.0; HOURS];
        pmf[23] = 1.0;
        let p = EvProfileParams {
            start_hour_pmf: pmf,
            charger_kw: 1.0,
            session_hours: 3,
            vehicles_per_bus: 1,
            seed: 1,
        };
        let s = synth_ev_profile(&p).unwrap();
        assert_eq!((s[23], s[0], s[1], s[2]), (1.0, 1.0, 1.0, 0.0));
    }

    #[test]
    fn zero_vehicles_zero_profile() {
        let p = EvProfileParams {
            vehicles_per_bus: 0,
            ..Default::default()
        };
        assert_eq!(synth_ev_profile(&p).unwrap(), [0.0; HOURS]);
    }

    #[test]
    fn invalid_pmf_rejected() {
        let p = EvProfileParams {
            start_hour_pmf: [0.5; HOURS],
            ..Default::default()
        };
        assert!(matches!(synth_ev_profile(&p), Err(Error::Config(_))));
        let mut pmf = EV_START_PMF;
        pmf[0] -= 0.02;
        pmf[1] += 0.02;
        let p = EvProfileParams {
            start_hour_pmf: pmf,
            ..Default::default()
        };
        assert!(synth_ev_profile(&p).is_err());
    }

    #[test]
    fn default_pmf_sums_to_one() {
        assert!((EV_START_PMF.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn solar_shape_is_daylight_only() {
        let s = synth_solar_unit(10.0);
        assert!(s.iter().all(|&v| (0.0..=10.0).contains(&v)));
        assert_eq!(s[3], 0.0);
        assert_eq!(s[20], 0.0);
        assert!(s[11] > 9.9);
    }

    #[test]
    fn synthesized_set_covers_load_buses() {
        let net = RadialNetwork::ieee33();
        let set = synthesize(&net, &SynthParams::default()).unwrap();
        set.validate_for(&net).unwrap();
        assert_eq!(set.p_res.len(), 32);
        assert_eq!(set.p_res[&30][18], 200.0);
        assert!(!set.p_res.contains_key(&1));
    }
}
