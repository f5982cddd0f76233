//! Hourly multiplier series, stored as CSV with header `hour,key,multiplier`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::NetworkError;

/// Named hourly multiplier series of equal length, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSet {
    series: BTreeMap<String, Vec<f64>>,
    hours: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    hour: usize,
    key: String,
    multiplier: f64,
}

impl ProfileSet {
    pub fn new(series: BTreeMap<String, Vec<f64>>) -> Result<ProfileSet, NetworkError> {
        let hours = series.values().next().map_or(0, Vec::len);
        for (key, s) in &series {
            if s.len() != hours {
                return Err(NetworkError::Profile(format!(
                    "series {key:?} has {} hours, expected {hours}",
                    s.len()
                )));
            }
            if let Some((h, v)) = s.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
                return Err(NetworkError::Profile(format!(
                    "series {key:?} hour {h}: multiplier {v} outside [0, 1]"
                )));
            }
        }
        Ok(ProfileSet { series, hours })
    }

    /// Every key set to a constant multiplier.
    pub fn constant(hours: usize, keys: &[(&str, f64)]) -> Result<ProfileSet, NetworkError> {
        ProfileSet::new(keys.iter().map(|(k, v)| (k.to_string(), vec![*v; hours])).collect())
    }

    pub fn hours(&self) -> usize {
        self.hours
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.series.keys().map(String::as_str)
    }

    pub fn series(&self, key: &str) -> Option<&[f64]> {
        self.series.get(key).map(Vec::as_slice)
    }

    pub fn get(&self, key: &str, hour: usize) -> Option<f64> {
        self.series.get(key).and_then(|s| s.get(hour)).copied()
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<ProfileSet, NetworkError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| NetworkError::Profile(e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["hour", "key", "multiplier"] {
            return Err(NetworkError::Profile(format!(
                "header must be `hour,key,multiplier`, found {:?}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut raw: BTreeMap<String, BTreeMap<usize, f64>> = BTreeMap::new();
        for (i, rec) in rdr.deserialize::<Record>().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| NetworkError::Parse {
                line: row,
                message: e.to_string(),
            })?;
            if raw.entry(rec.key.clone()).or_default().insert(rec.hour, rec.multiplier).is_some() {
                return Err(NetworkError::Parse {
                    line: row,
                    message: format!("duplicate hour {} for key {:?}", rec.hour, rec.key),
                });
            }
        }
        let mut series = BTreeMap::new();
        for (key, hours) in raw {
            let n = hours.len();
            if hours.keys().copied().ne(0..n) {
                return Err(NetworkError::Profile(format!("series {key:?} does not cover hours 0..{n} contiguously")));
            }
            series.insert(key, hours.into_values().collect());
        }
        ProfileSet::new(series)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), NetworkError> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| NetworkError::Profile(e.to_string());
        for (key, s) in &self.series {
            for (hour, &multiplier) in s.iter().enumerate() {
                w.serialize(Record {
                    hour,
                    key: key.clone(),
                    multiplier,
                })
                .map_err(err)?;
            }
        }
        w.flush().map_err(|e| NetworkError::Profile(e.to_string()))
    }

    /// Synthetic year (or shorter span) with keys `load` and `pv`.
    ///
    /// Load follows a two-peak daily shape, a weekday/weekend factor and a
    /// winter/summer swing plus noise, rescaled to span exactly `[0.15, 1]`.
    /// PV availability is clear-sky irradiance at 45° latitude times a daily
    /// cloudiness draw, normalized to a maximum of 1.
    pub fn synthetic(hours: usize, seed: u64) -> ProfileSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let days = hours.div_ceil(24).max(1);
        let clouds: Vec<f64> = {
            let mut c = Vec::with_capacity(days);
            let mut state: f64 = 0.8;
            for _ in 0..days {
                state = (0.6 * state + 0.4 * rng.gen_range(0.25..1.0)).clamp(0.2, 1.0);
                c.push(state);
            }
            c
        };
        let mut load = Vec::with_capacity(hours);
        let mut pv = Vec::with_capacity(hours);
        let lat = 45f64.to_radians();
        for h in 0..hours {
            let day = h / 24;
            let t = (h % 24) as f64 + 0.5;
            let doy = (day % 365) as f64;
            let morning = (-((t - 8.0) / 2.0).powi(2)).exp();
            let evening = (-((t - 19.0) / 2.5).powi(2)).exp();
            let daily = 0.35 + 0.35 * morning + 0.6 * evening;
            let weekly = if day % 7 >= 5 { 0.85 } else { 1.0 };
            let seasonal = 1.0 + 0.25 * (2.0 * PI * (doy + 10.0) / 365.0).cos();
            load.push(daily * weekly * seasonal * (1.0 + 0.05 * rng.gen_range(-1.0..1.0)));

            let decl = 23.44f64.to_radians() * (2.0 * PI * (284.0 + doy) / 365.0).sin();
            let omega = (15.0 * (t - 12.0)).to_radians();
            let elev = lat.sin() * decl.sin() + lat.cos() * decl.cos() * omega.cos();
            pv.push(elev.max(0.0).powf(1.2) * clouds[day]);
        }
        let (lo, hi) = load
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        for v in &mut load {
            *v = if hi > lo { 0.15 + 0.85 * (*v - lo) / (hi - lo) } else { 1.0 };
        }
        let pmax = pv.iter().cloned().fold(0.0, f64::max);
        if pmax > 0.0 {
            for v in &mut pv {
                *v = (*v / pmax).min(1.0);
            }
        }
        ProfileSet::new(BTreeMap::from([("load".to_string(), load), ("pv".to_string(), pv)]))
            .expect("synthetic series are in range")
    }
}

pub fn load_profiles(path: &Path) -> Result<ProfileSet, NetworkError> {
    let f = std::fs::File::open(path).map_err(|source| NetworkError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ProfileSet::read_csv(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let p = ProfileSet::synthetic(48, 3);
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("hour,key,multiplier\n"));
        assert_eq!(ProfileSet::read_csv(text.as_bytes()).unwrap(), p);
    }

    #[test]
    fn synthetic_year_ranges() {
        let p = ProfileSet::synthetic(8760, 1);
        let load = p.series("load").unwrap();
        let pv = p.series("pv").unwrap();
        assert_eq!(load.len(), 8760);
        let lo = load.iter().cloned().fold(1.0, f64::min);
        let hi = load.iter().cloned().fold(0.0, f64::max);
        assert!((lo - 0.15).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
        assert_eq!(pv[0], 0.0, "midnight has no sun");
        assert!(pv.iter().any(|&v| v == 1.0));
        assert_eq!(p, ProfileSet::synthetic(8760, 1));
    }

    #[test]
    fn rejects_gaps_and_out_of_range() {
        let gap = "hour,key,multiplier\n0,load,0.5\n2,load,0.5\n";
        assert!(ProfileSet::read_csv(gap.as_bytes()).is_err());
        let big = "hour,key,multiplier\n0,load,1.5\n";
        assert!(ProfileSet::read_csv(big.as_bytes()).is_err());
        let uneven = "hour,key,multiplier\n0,load,0.5\n1,load,0.5\n0,pv,0.1\n";
        assert!(ProfileSet::read_csv(uneven.as_bytes()).is_err());
        let header = "h,key,multiplier\n0,load,0.5\n";
        assert!(ProfileSet::read_csv(header.as_bytes()).is_err());
    }
}
