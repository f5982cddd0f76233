//! Hourly withdrawal regions.
//!
//! A bus withdraws `s = load - (p_pv + j q_pv) - j q_cap` where
//! `0 <= p_pv <= pv_avail`, `|p_pv + j q_pv| <= pv_nameplate` and the
//! capacitor injection `q_cap` is either its rating or anywhere in
//! `[0, rating]`.

use num_complex::Complex64;

use super::{Feeder, NetworkError, ProfileSet, PvSites};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CapacitorMode {
    #[default]
    Fixed,
    Variable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioOptions {
    pub capacitor_mode: CapacitorMode,
    /// Extra factor on every load after the profile multiplier.
    pub load_scale: f64,
    /// Extra factor on PV availability after the profile multiplier.
    pub pv_scale: f64,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        ScenarioOptions {
            capacitor_mode: CapacitorMode::Fixed,
            load_scale: 1.0,
            pv_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub load: Complex64,
    pub pv_avail: f64,
    pub pv_nameplate: f64,
    pub cap_q: f64,
    pub cap_variable: bool,
}

impl Region {
    pub fn fixed(load: Complex64) -> Region {
        Region {
            load,
            pv_avail: 0.0,
            pv_nameplate: 0.0,
            cap_q: 0.0,
            cap_variable: false,
        }
    }

    pub fn has_pv(&self) -> bool {
        self.pv_nameplate > 0.0
    }

    /// Capacitor injection when it is not a decision.
    pub fn fixed_cap(&self) -> f64 {
        if self.cap_variable {
            0.0
        } else {
            self.cap_q
        }
    }

    /// The single admissible withdrawal, if the region is a point.
    pub fn point(&self) -> Option<Complex64> {
        if self.has_pv() || (self.cap_variable && self.cap_q > 0.0) {
            None
        } else {
            Some(self.load - Complex64::new(0.0, self.cap_q))
        }
    }

    /// Componentwise lower corner of the region.
    pub fn min_withdrawal(&self) -> Complex64 {
        Complex64::new(
            self.load.re - self.pv_avail.min(self.pv_nameplate),
            self.load.im - self.pv_nameplate - self.cap_q,
        )
    }

    /// Componentwise upper corner of the region.
    pub fn max_withdrawal(&self) -> Complex64 {
        Complex64::new(self.load.re, self.load.im + self.pv_nameplate - self.fixed_cap())
    }

    /// Whether `s` is admissible, allowing `tol` slack.
    pub fn contains(&self, s: Complex64, tol: f64) -> bool {
        let pv_p = self.load.re - s.re;
        if pv_p < -tol || pv_p > self.pv_avail + tol {
            return false;
        }
        // the best capacitor setting is the one that leaves the smallest PV reactive output
        let pv_q_raw = self.load.im - s.im;
        let pv_q = if self.cap_variable {
            if pv_q_raw > self.cap_q {
                pv_q_raw - self.cap_q
            } else if pv_q_raw < 0.0 {
                pv_q_raw
            } else {
                0.0
            }
        } else {
            pv_q_raw - self.cap_q
        };
        pv_p.max(0.0).hypot(pv_q) <= self.pv_nameplate + tol
    }
}

/// One hour's regions; region `l` sits at position `l - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub hour: usize,
    pub regions: Vec<Region>,
}

impl Scenario {
    pub fn region(&self, l: usize) -> &Region {
        &self.regions[l - 1]
    }

    /// Every bus at a fixed withdrawal.
    pub fn fixed(loads: &[Complex64]) -> Scenario {
        Scenario {
            hour: 0,
            regions: loads.iter().map(|&s| Region::fixed(s)).collect(),
        }
    }
}

/// Installed PV active capacity per bus (entry `l - 1`), p.u.
pub fn pv_capacities(feeder: &Feeder) -> Vec<f64> {
    let n = feeder.n();
    let plan = feeder.pv_plan();
    let sites: Vec<usize> = match &plan.sites {
        PvSites::Loaded => (1..=n).filter(|&l| feeder.bus(l).peak_load().re > 0.0).collect(),
        PvSites::Buses(b) => b.clone(),
    };
    let total = feeder.peak_load();
    let site_load: f64 = sites.iter().map(|&l| feeder.bus(l).peak_load().re.max(0.0)).sum();
    let mut cap = vec![0.0; n];
    if site_load > 0.0 {
        for &l in &sites {
            cap[l - 1] = plan.capacity_share * total * feeder.bus(l).peak_load().re.max(0.0) / site_load;
        }
    }
    cap
}

pub fn build_scenario(
    feeder: &Feeder,
    profiles: &ProfileSet,
    hour: usize,
    options: &ScenarioOptions,
) -> Result<Scenario, NetworkError> {
    if hour >= profiles.hours() {
        return Err(NetworkError::Profile(format!(
            "hour {hour} outside profile range 0..{}",
            profiles.hours()
        )));
    }
    let caps = pv_capacities(feeder);
    let pv_key = &feeder.pv_plan().profile;
    let pv_mult = if caps.iter().any(|&c| c > 0.0) {
        profiles
            .get(pv_key, hour)
            .ok_or_else(|| NetworkError::Profile(format!("no profile series {pv_key:?} for PV")))?
    } else {
        0.0
    };
    let ratio = feeder.pv_plan().nameplate_ratio;
    let mut regions = Vec::with_capacity(feeder.n());
    for l in 1..=feeder.n() {
        let bus = feeder.bus(l);
        let mult = profiles
            .get(&bus.profile, hour)
            .ok_or_else(|| NetworkError::Profile(format!("no profile series {:?} for bus {}", bus.profile, bus.name)))?;
        let cap_q: f64 = feeder.capacitors().iter().filter(|c| c.bus == l).map(|c| c.q).sum();
        regions.push(Region {
            load: bus.peak_load() * mult * options.load_scale,
            pv_avail: caps[l - 1] * pv_mult * options.pv_scale,
            pv_nameplate: caps[l - 1] * ratio,
            cap_q,
            cap_variable: options.capacitor_mode == CapacitorMode::Variable,
        });
    }
    Ok(Scenario { hour, regions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::tests::path_feeder;

    #[test]
    fn pv_capacity_totals_share_of_peak() {
        let f = path_feeder(&[(0, 1), (1, 2), (1, 3)]);
        let caps = pv_capacities(&f);
        let total: f64 = caps.iter().sum();
        assert!((total - 2.5 * f.peak_load()).abs() < 1e-12);
    }

    #[test]
    fn night_has_no_pv_and_nameplate_is_ten_percent_over() {
        let f = path_feeder(&[(0, 1), (1, 2)]);
        let p = ProfileSet::constant(2, &[("load", 0.5), ("pv", 0.0)]).unwrap();
        let s = build_scenario(&f, &p, 1, &ScenarioOptions::default()).unwrap();
        let caps = pv_capacities(&f);
        for l in 1..=2 {
            assert_eq!(s.region(l).pv_avail, 0.0);
            assert!((s.region(l).pv_nameplate - 1.1 * caps[l - 1]).abs() < 1e-15);
            assert!((s.region(l).load - f.bus(l).peak_load() * 0.5).norm() < 1e-15);
        }
        assert!(build_scenario(&f, &p, 2, &ScenarioOptions::default()).is_err());
    }

    #[test]
    fn missing_key_is_an_error() {
        let f = path_feeder(&[(0, 1)]);
        let p = ProfileSet::constant(1, &[("load", 0.5)]).unwrap();
        assert!(build_scenario(&f, &p, 0, &ScenarioOptions::default()).is_err());
    }

    #[test]
    fn region_membership() {
        let r = Region {
            load: Complex64::new(0.1, 0.05),
            pv_avail: 0.2,
            pv_nameplate: 0.3,
            cap_q: 0.1,
            cap_variable: true,
        };
        // full PV output, no reactive
        assert!(r.contains(Complex64::new(-0.1, 0.05), 1e-12));
        // full PV output, capacitor on, PV reactive at the nameplate edge
        let q_edge = (0.3f64 * 0.3 - 0.2 * 0.2).sqrt();
        assert!(r.contains(Complex64::new(-0.1, 0.05 - 0.1 - q_edge), 1e-12));
        assert!(!r.contains(Complex64::new(-0.1, 0.05 - 0.1 - q_edge - 1e-6), 1e-12));
        assert!(!r.contains(Complex64::new(-0.11, 0.05), 1e-12));
        assert!(!r.contains(Complex64::new(0.11, 0.05), 1e-12));
        assert!(!r.contains(Complex64::new(0.1, 0.05 + 0.31), 1e-12));
        assert!(Region::fixed(Complex64::new(0.1, 0.0)).point().is_some());
        assert!(r.point().is_none());
    }
}
