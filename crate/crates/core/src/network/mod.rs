//! Radial feeder model, feeder-file ingestion, yearly profiles and hourly
//! withdrawal scenarios.
//!
//! Buses are numbered `0..=n`, bus 0 being the root. Line `l` ends at bus `l`,
//! so lines are numbered `1..=n` as well. Squared quantities (`v`, current
//! bounds) are stored in p.u.².

mod format;
mod profiles;
mod scenario;

use std::collections::BTreeMap;
use std::io;

use num_complex::Complex64;
use thiserror::Error;

pub use format::{feeder_to_string, load_feeder, parse_feeder, write_feeder, Units, FEEDER_FORMAT};
pub use profiles::{load_profiles, ProfileSet};
pub use scenario::{build_scenario, pv_capacities, CapacitorMode, Region, Scenario, ScenarioOptions};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing base declaration: {0}")]
    MissingBase(String),
    #[error("feeder is not radial: {0}")]
    Radiality(String),
    #[error("invalid feeder: {0}")]
    Invalid(String),
    #[error("profile error: {0}")]
    Profile(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub name: String,
    pub zone: String,
    /// Squared voltage bounds, p.u.².
    pub vmin: f64,
    pub vmax: f64,
    /// Default (peak) load before the multiplier, p.u.
    pub load: Complex64,
    /// Scales `load`; used e.g. for single-phase loads carried as three-phase.
    pub load_multiplier: f64,
    /// Profile series driving this bus's load.
    pub profile: String,
}

impl Bus {
    pub fn peak_load(&self) -> Complex64 {
        self.load * self.load_multiplier
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    /// Upstream bus `up(l)`.
    pub up: usize,
    pub z: Complex64,
    /// Half shunt susceptance, p.u.
    pub b: f64,
    /// Squared current bound, p.u.².
    pub imax: Option<f64>,
    /// Apparent flow bound, p.u.
    pub smax: Option<f64>,
    /// Voltage zone whose base converts the physical impedance.
    pub zone: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Capacitor {
    pub bus: usize,
    /// Rated reactive injection, p.u.
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PvSites {
    /// Every bus with a nonzero peak load.
    Loaded,
    Buses(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PvPlan {
    pub sites: PvSites,
    /// Installed active capacity as a multiple of the feeder's total peak load.
    pub capacity_share: f64,
    /// Nameplate apparent capacity as a multiple of the installed active capacity.
    pub nameplate_ratio: f64,
    pub profile: String,
}

impl Default for PvPlan {
    fn default() -> Self {
        PvPlan {
            sites: PvSites::Loaded,
            capacity_share: 2.5,
            nameplate_ratio: 1.1,
            profile: "pv".into(),
        }
    }
}

/// Raw feeder description. Bus `l` and line `l` sit at position `l - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeederData {
    pub name: String,
    /// Three-phase power base, MVA.
    pub base_power: f64,
    /// Line-to-line voltage base per zone, kV.
    pub base_voltages: BTreeMap<String, f64>,
    pub root_name: String,
    pub root_zone: String,
    /// Squared root voltage, p.u.².
    pub v0: f64,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub capacitors: Vec<Capacitor>,
    pub pv: PvPlan,
}

/// Validated, immutable radial feeder.
#[derive(Debug, Clone, PartialEq)]
pub struct Feeder {
    data: FeederData,
    children: Vec<Vec<usize>>,
    order: Vec<usize>,
}

impl Feeder {
    pub fn new(data: FeederData) -> Result<Feeder, NetworkError> {
        let n = data.buses.len();
        let invalid = |m: String| Err(NetworkError::Invalid(m));
        if n == 0 {
            return invalid("feeder has no buses besides the root".into());
        }
        if data.lines.len() != n {
            return Err(NetworkError::Radiality(format!(
                "{} lines for {} non-root buses",
                data.lines.len(),
                n
            )));
        }
        if !(data.base_power > 0.0 && data.base_power.is_finite()) {
            return Err(NetworkError::MissingBase("power base must be positive".into()));
        }
        for (zone, kv) in &data.base_voltages {
            if !(*kv > 0.0 && kv.is_finite()) {
                return Err(NetworkError::MissingBase(format!("voltage base of zone {zone:?} must be positive")));
            }
        }
        if !data.base_voltages.contains_key(&data.root_zone) {
            return Err(NetworkError::MissingBase(format!("voltage base for root zone {:?}", data.root_zone)));
        }
        if !(data.v0 > 0.0 && data.v0.is_finite()) {
            return invalid(format!("root voltage {} must be positive", data.v0));
        }
        for (i, bus) in data.buses.iter().enumerate() {
            let l = i + 1;
            if !data.base_voltages.contains_key(&bus.zone) {
                return Err(NetworkError::MissingBase(format!("voltage base for zone {:?} (bus {})", bus.zone, bus.name)));
            }
            if !(bus.vmin > 0.0 && bus.vmin < bus.vmax && bus.vmax.is_finite()) {
                return invalid(format!("bus {l} ({}): need 0 < vmin < vmax, got {} / {}", bus.name, bus.vmin, bus.vmax));
            }
            if !(bus.load.re.is_finite() && bus.load.im.is_finite()) {
                return invalid(format!("bus {l} ({}): load is not finite", bus.name));
            }
            if !(bus.load_multiplier >= 0.0 && bus.load_multiplier.is_finite()) {
                return invalid(format!("bus {l} ({}): load multiplier must be nonnegative", bus.name));
            }
        }
        let mut children = vec![Vec::new(); n + 1];
        for (i, line) in data.lines.iter().enumerate() {
            let l = i + 1;
            if line.up > n || line.up == l {
                return Err(NetworkError::Radiality(format!("line {l} has invalid upstream bus {}", line.up)));
            }
            if !data.base_voltages.contains_key(&line.zone) {
                return Err(NetworkError::MissingBase(format!("voltage base for zone {:?} (line {l})", line.zone)));
            }
            let (r, x) = (line.z.re, line.z.im);
            if !(r >= 0.0 && r.is_finite() && x.is_finite()) || (r == 0.0 && x == 0.0) {
                return invalid(format!("line {l}: impedance {r}+{x}j must have r >= 0 and |z| > 0"));
            }
            if !(line.b >= 0.0 && line.b.is_finite()) {
                return invalid(format!("line {l}: half shunt susceptance must be nonnegative"));
            }
            if let Some(i) = line.imax {
                if !(i > 0.0 && i.is_finite()) {
                    return invalid(format!("line {l}: current bound must be positive"));
                }
            }
            if let Some(s) = line.smax {
                if !(s > 0.0 && s.is_finite()) {
                    return invalid(format!("line {l}: apparent flow bound must be positive"));
                }
            }
            children[line.up].push(l);
        }
        let mut order = Vec::with_capacity(n);
        let mut queue = std::collections::VecDeque::from([0usize]);
        while let Some(k) = queue.pop_front() {
            for &c in &children[k] {
                order.push(c);
                queue.push_back(c);
            }
        }
        if order.len() != n {
            let mut seen = vec![false; n + 1];
            for &l in &order {
                seen[l] = true;
            }
            let lost = (1..=n).find(|&l| !seen[l]).unwrap_or(0);
            return Err(NetworkError::Radiality(format!(
                "bus {lost} ({}) is not reachable from the root (cycle or island)",
                data.buses[lost - 1].name
            )));
        }
        for cap in &data.capacitors {
            if cap.bus == 0 || cap.bus > n {
                return invalid(format!("capacitor at invalid bus {}", cap.bus));
            }
            if !(cap.q >= 0.0 && cap.q.is_finite()) {
                return invalid(format!("capacitor at bus {}: rating must be nonnegative", cap.bus));
            }
        }
        if !(data.pv.capacity_share >= 0.0 && data.pv.nameplate_ratio >= 1.0) {
            return invalid("pv capacity share must be >= 0 and nameplate ratio >= 1".into());
        }
        if let PvSites::Buses(b) = &data.pv.sites {
            if let Some(bad) = b.iter().find(|&&l| l == 0 || l > n) {
                return invalid(format!("pv site at invalid bus {bad}"));
            }
        }
        Ok(Feeder { data, children, order })
    }

    pub fn data(&self) -> &FeederData {
        &self.data
    }

    pub fn into_data(self) -> FeederData {
        self.data
    }

    pub fn name(&self) -> &str {
        &self.data.name
    }

    /// Number of non-root buses (and of lines).
    pub fn n(&self) -> usize {
        self.data.buses.len()
    }

    pub fn v0(&self) -> f64 {
        self.data.v0
    }

    pub fn base_power(&self) -> f64 {
        self.data.base_power
    }

    pub fn bus(&self, l: usize) -> &Bus {
        &self.data.buses[l - 1]
    }

    pub fn line(&self, l: usize) -> &Line {
        &self.data.lines[l - 1]
    }

    pub fn up(&self, l: usize) -> usize {
        self.data.lines[l - 1].up
    }

    pub fn children(&self, k: usize) -> &[usize] {
        &self.children[k]
    }

    /// Non-root buses in breadth-first order from the root; every bus appears
    /// after its upstream bus.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn capacitors(&self) -> &[Capacitor] {
        &self.data.capacitors
    }

    pub fn pv_plan(&self) -> &PvPlan {
        &self.data.pv
    }

    /// Lines attached to the root.
    pub fn root_lines(&self) -> &[usize] {
        &self.children[0]
    }

    /// Total peak active load, p.u.
    pub fn peak_load(&self) -> f64 {
        self.data.buses.iter().map(|b| b.peak_load().re).sum()
    }

    pub fn bus_index(&self, name: &str) -> Option<usize> {
        if name == self.data.root_name {
            return Some(0);
        }
        self.data.buses.iter().position(|b| b.name == name).map(|i| i + 1)
    }

    pub fn bus_name(&self, k: usize) -> &str {
        if k == 0 {
            &self.data.root_name
        } else {
            &self.data.buses[k - 1].name
        }
    }

    pub fn is_leaf(&self, l: usize) -> bool {
        self.children[l].is_empty()
    }

    /// Impedance base of a zone, ohm.
    pub fn z_base(&self, zone: &str) -> f64 {
        let kv = self.data.base_voltages[zone];
        kv * kv / self.data.base_power
    }

    /// Current base of a zone, A.
    pub fn i_base(&self, zone: &str) -> f64 {
        let kv = self.data.base_voltages[zone];
        self.data.base_power * 1e3 / (3f64.sqrt() * kv)
    }

    /// Copy of this feeder with every line modified by `f`, revalidated.
    pub fn map_lines(&self, mut f: impl FnMut(usize, &mut Line)) -> Result<Feeder, NetworkError> {
        let mut data = self.data.clone();
        for (i, line) in data.lines.iter_mut().enumerate() {
            f(i + 1, line);
        }
        Feeder::new(data)
    }

    /// Copy of this feeder with every bus modified by `f`, revalidated.
    pub fn map_buses(&self, mut f: impl FnMut(usize, &mut Bus)) -> Result<Feeder, NetworkError> {
        let mut data = self.data.clone();
        for (i, bus) in data.buses.iter_mut().enumerate() {
            f(i + 1, bus);
        }
        Feeder::new(data)
    }
}

/// Downstream sets: entry `l` lists the buses of the subtree rooted at `l`
/// (including `l`), sorted. Entry 0 covers every non-root bus.
pub fn downstream_sets(feeder: &Feeder) -> Vec<Vec<usize>> {
    let n = feeder.n();
    let mut sets: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    for &l in feeder.order().iter().rev() {
        let mut set = vec![l];
        for &c in feeder.children(l) {
            set.extend_from_slice(&sets[c]);
        }
        set.sort_unstable();
        sets[l] = set;
    }
    let mut all: Vec<usize> = (1..=n).collect();
    all.sort_unstable();
    sets[0] = all;
    sets
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn path_feeder(edges: &[(usize, usize)]) -> Feeder {
        let n = edges.len();
        let mut buses = Vec::new();
        let mut lines = vec![None; n];
        for l in 1..=n {
            buses.push(Bus {
                name: format!("b{l}"),
                zone: "mv".into(),
                vmin: 0.81,
                vmax: 1.21,
                load: Complex64::new(0.01, 0.005),
                load_multiplier: 1.0,
                profile: "load".into(),
            });
        }
        for &(up, to) in edges {
            lines[to - 1] = Some(Line {
                up,
                z: Complex64::new(0.01, 0.02),
                b: 0.0,
                imax: None,
                smax: None,
                zone: "mv".into(),
            });
        }
        Feeder::new(FeederData {
            name: "t".into(),
            base_power: 1.0,
            base_voltages: BTreeMap::from([("mv".to_string(), 4.16)]),
            root_name: "root".into(),
            root_zone: "mv".into(),
            v0: 1.0,
            buses,
            lines: lines.into_iter().map(|l| l.unwrap()).collect(),
            capacitors: vec![],
            pv: PvPlan::default(),
        })
        .unwrap()
    }

    #[test]
    fn path_and_star_downstream_sets() {
        let path = path_feeder(&[(0, 1), (1, 2), (2, 3)]);
        let d = downstream_sets(&path);
        assert_eq!(d[1], vec![1, 2, 3]);
        assert_eq!(d[3], vec![3]);
        let star = path_feeder(&[(0, 1), (1, 2), (1, 3)]);
        let d = downstream_sets(&star);
        assert_eq!(d[1], vec![1, 2, 3]);
        assert_eq!(d[2], vec![2]);
    }

    #[test]
    fn cycle_is_rejected() {
        let f = path_feeder(&[(0, 1), (1, 2)]);
        let mut data = f.into_data();
        data.lines[0].up = 2;
        assert!(matches!(Feeder::new(data), Err(NetworkError::Radiality(_))));
    }

    #[test]
    fn order_visits_parents_first() {
        let f = path_feeder(&[(2, 1), (0, 2), (1, 3)]);
        let pos: Vec<usize> = (0..=3).map(|l| f.order().iter().position(|&k| k == l).map_or(0, |p| p + 1)).collect();
        for l in 1..=3 {
            assert!(pos[f.up(l)] < pos[l]);
        }
    }

    #[test]
    fn bad_impedance_is_rejected() {
        let f = path_feeder(&[(0, 1)]);
        assert!(f.map_lines(|_, line| line.z = Complex64::new(0.0, 0.0)).is_err());
        assert!(f.map_lines(|_, line| line.z = Complex64::new(-0.1, 0.1)).is_err());
        assert!(f.map_lines(|_, line| line.b = -1.0).is_err());
        assert!(f.map_buses(|_, bus| bus.vmin = bus.vmax).is_err());
    }
}
