//! Feeder text format.
//!
//! ```text
//! feeder-format 1
//!
//! [bases]
//! name = four-bus
//! power_mva = 1            # three-phase power base
//! kv.mv = 4.16             # line-to-line voltage base of zone "mv"
//! root = sub               # root bus name
//! root_zone = mv
//! v0_pu = 1.0              # root voltage magnitude
//!
//! [buses]
//! name zone vmin_pu vmax_pu p_kw q_kvar load_mult profile
//! b1   mv   0.9     1.1     20   10     1         load
//!
//! [lines]
//! from to r_ohm x_ohm b_half_us imax_a smax_kva
//! sub  b1 0.5   1.0   0         -      -
//!
//! [capacitors]
//! bus q_kvar
//!
//! [pv]
//! buses = loaded           # or a comma-separated list of bus names
//! capacity_share = 2.5     # installed active capacity / total peak load
//! nameplate_ratio = 1.1    # nameplate apparent capacity / installed capacity
//! profile = pv
//! ```
//!
//! Table sections start with a header naming their columns; the unit is part
//! of the column name. Accepted columns:
//!
//! | section      | column           | meaning                                   |
//! |--------------|------------------|-------------------------------------------|
//! | buses        | `name`, `zone`   | required                                  |
//! | buses        | `vmin_pu`, `vmax_pu` | voltage magnitude bounds (required)   |
//! | buses        | `p_kw`/`p_mw`/`p_pu`, `q_kvar`/`q_mvar`/`q_pu` | peak load (default 0) |
//! | buses        | `load_mult`      | load multiplier (default 1)               |
//! | buses        | `profile`        | load profile key (default `load`)         |
//! | lines        | `from`, `to`     | bus names, `from` upstream (required)     |
//! | lines        | `r_ohm`/`r_pu`, `x_ohm`/`x_pu` | series impedance (required) |
//! | lines        | `b_half_us`/`b_half_pu` | half shunt susceptance (default 0) |
//! | lines        | `imax_a`/`imax_pu` | current magnitude bound (`-` for none)  |
//! | lines        | `smax_kva`/`smax_pu` | apparent flow bound (`-` for none)    |
//! | lines        | `zone`           | zone of the physical values (default: zone of `to`) |
//! | capacitors   | `bus`, `q_kvar`/`q_mvar`/`q_pu` | rated injection            |
//!
//! Transformers are lines whose impedance is given in the zone named by the
//! `zone` column. `#` starts a comment.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use super::{Bus, Capacitor, Feeder, FeederData, Line, NetworkError, PvPlan, PvSites};

pub const FEEDER_FORMAT: &str = "feeder-format 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    PerUnit,
    Physical,
}

pub fn load_feeder(path: &Path) -> Result<Feeder, NetworkError> {
    let text = std::fs::read_to_string(path).map_err(|source| NetworkError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_feeder(&text)
}

fn perr(line: usize, message: impl Into<String>) -> NetworkError {
    NetworkError::Parse {
        line,
        message: message.into(),
    }
}

struct Table {
    header_line: usize,
    columns: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    fn col(&self, names: &[&str]) -> Result<Option<(usize, &'static str)>, NetworkError> {
        let mut found = None;
        for (i, c) in self.columns.iter().enumerate() {
            if let Some(n) = names.iter().find(|n| **n == c) {
                if found.is_some() {
                    return Err(perr(self.header_line, format!("columns {names:?} are alternatives; give only one")));
                }
                let unit: &'static str = match n.rsplit_once('_') {
                    Some((_, u)) => unit_name(u),
                    None => "",
                };
                found = Some((i, unit));
            }
        }
        Ok(found)
    }

    fn need(&self, names: &[&str]) -> Result<(usize, &'static str), NetworkError> {
        self.col(names)?
            .ok_or_else(|| perr(self.header_line, format!("missing column {}", names.join(" or "))))
    }
}

fn unit_name(u: &str) -> &'static str {
    match u {
        "pu" => "pu",
        "kw" | "kvar" | "kva" => "k",
        "mw" | "mvar" => "M",
        "ohm" => "ohm",
        "us" => "us",
        "a" => "A",
        _ => "",
    }
}

fn num(line: usize, field: &str, what: &str) -> Result<f64, NetworkError> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(perr(line, format!("field {what}: bad number {field:?}"))),
    }
}

fn opt_num(line: usize, field: &str, what: &str) -> Result<Option<f64>, NetworkError> {
    if field == "-" {
        Ok(None)
    } else {
        num(line, field, what).map(Some)
    }
}

pub fn parse_feeder(text: &str) -> Result<Feeder, NetworkError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (i + 1, l)
    });
    let header = lines.by_ref().find(|(_, l)| !l.is_empty());
    match header {
        Some((_, l)) if l == FEEDER_FORMAT => {}
        Some((n, l)) if l.starts_with("feeder-format") => {
            return Err(perr(n, format!("unsupported version {l:?}, expected {FEEDER_FORMAT:?}")))
        }
        Some((n, _)) => return Err(perr(n, format!("expected header {FEEDER_FORMAT:?}"))),
        None => return Err(perr(1, "empty file")),
    }

    let mut kv: HashMap<&str, Vec<(usize, String, String)>> = HashMap::new();
    let mut tables: HashMap<&str, Table> = HashMap::new();
    let mut section: Option<&str> = None;
    for (n, l) in lines {
        if l.is_empty() {
            continue;
        }
        if let Some(name) = l.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = match name {
                "bases" => "bases",
                "buses" => "buses",
                "lines" => "lines",
                "capacitors" => "capacitors",
                "pv" => "pv",
                other => return Err(perr(n, format!("unknown section [{other}]"))),
            };
            if kv.contains_key(name) || tables.contains_key(name) {
                return Err(perr(n, format!("section [{name}] appears twice")));
            }
            match name {
                "bases" | "pv" => {
                    kv.insert(name, Vec::new());
                }
                _ => {
                    tables.insert(
                        name,
                        Table {
                            header_line: 0,
                            columns: Vec::new(),
                            rows: Vec::new(),
                        },
                    );
                }
            }
            section = Some(name);
            continue;
        }
        let Some(sec) = section else {
            return Err(perr(n, "content before the first section"));
        };
        if let Some(entries) = kv.get_mut(sec) {
            let (k, v) = l
                .split_once('=')
                .ok_or_else(|| perr(n, format!("expected `key = value` in [{sec}]")))?;
            entries.push((n, k.trim().to_string(), v.trim().to_string()));
        } else {
            let t = tables.get_mut(sec).expect("section registered");
            let fields: Vec<String> = l.split_whitespace().map(str::to_string).collect();
            if t.columns.is_empty() {
                t.header_line = n;
                t.columns = fields;
            } else {
                if fields.len() != t.columns.len() {
                    return Err(perr(
                        n,
                        format!("[{sec}] row has {} fields, header has {}", fields.len(), t.columns.len()),
                    ));
                }
                t.rows.push((n, fields));
            }
        }
    }

    let bases = kv
        .remove("bases")
        .ok_or_else(|| NetworkError::MissingBase("section [bases]".into()))?;
    let mut name = "feeder".to_string();
    let mut base_power = None;
    let mut base_voltages = BTreeMap::new();
    let mut root_name = None;
    let mut root_zone = None;
    let mut v0_mag = 1.0;
    for (n, k, v) in &bases {
        match k.as_str() {
            "name" => name = v.clone(),
            "power_mva" => base_power = Some(num(*n, v, "power_mva")?),
            "root" => root_name = Some(v.clone()),
            "root_zone" => root_zone = Some(v.clone()),
            "v0_pu" => v0_mag = num(*n, v, "v0_pu")?,
            _ => match k.strip_prefix("kv.") {
                Some(zone) if !zone.is_empty() => {
                    if base_voltages.insert(zone.to_string(), num(*n, v, k)?).is_some() {
                        return Err(perr(*n, format!("zone {zone:?} declared twice")));
                    }
                }
                _ => return Err(perr(*n, format!("unknown key {k:?} in [bases]"))),
            },
        }
    }
    let base_power = base_power.ok_or_else(|| NetworkError::MissingBase("power_mva".into()))?;
    if base_voltages.is_empty() {
        return Err(NetworkError::MissingBase("at least one kv.<zone>".into()));
    }
    let root_name = root_name.ok_or_else(|| NetworkError::MissingBase("root".into()))?;
    let root_zone = match root_zone {
        Some(z) => z,
        None if base_voltages.len() == 1 => base_voltages.keys().next().unwrap().clone(),
        None => return Err(NetworkError::MissingBase("root_zone (several zones declared)".into())),
    };
    let zbase = |zone: &str| base_voltages.get(zone).map(|kv| kv * kv / base_power);
    let ibase = |zone: &str| base_voltages.get(zone).map(|kv| base_power * 1e3 / (3f64.sqrt() * kv));
    let power_scale = |unit: &str| match unit {
        "k" => 1e-3 / base_power,
        "M" => 1.0 / base_power,
        _ => 1.0,
    };

    let buses_t = tables
        .remove("buses")
        .ok_or_else(|| perr(0, "missing section [buses]"))?;
    let c_name = buses_t.need(&["name"])?.0;
    let c_zone = buses_t.need(&["zone"])?.0;
    let c_vmin = buses_t.need(&["vmin_pu"])?.0;
    let c_vmax = buses_t.need(&["vmax_pu"])?.0;
    let c_p = buses_t.col(&["p_kw", "p_mw", "p_pu"])?;
    let c_q = buses_t.col(&["q_kvar", "q_mvar", "q_pu"])?;
    let c_mult = buses_t.col(&["load_mult"])?;
    let c_prof = buses_t.col(&["profile"])?;
    let mut index: HashMap<String, usize> = HashMap::new();
    index.insert(root_name.clone(), 0);
    let mut buses = Vec::new();
    for (n, f) in &buses_t.rows {
        let bname = f[c_name].clone();
        if index.insert(bname.clone(), buses.len() + 1).is_some() {
            return Err(perr(*n, format!("duplicate bus name {bname:?}")));
        }
        let zone = f[c_zone].clone();
        if !base_voltages.contains_key(&zone) {
            return Err(NetworkError::MissingBase(format!("kv.{zone} (line {n}, bus {bname})")));
        }
        let vmin = num(*n, &f[c_vmin], "vmin_pu")?;
        let vmax = num(*n, &f[c_vmax], "vmax_pu")?;
        let p = match c_p {
            Some((i, u)) => num(*n, &f[i], "p")? * power_scale(u),
            None => 0.0,
        };
        let q = match c_q {
            Some((i, u)) => num(*n, &f[i], "q")? * power_scale(u),
            None => 0.0,
        };
        buses.push(Bus {
            name: bname,
            zone,
            vmin: vmin * vmin,
            vmax: vmax * vmax,
            load: Complex64::new(p, q),
            load_multiplier: match c_mult {
                Some((i, _)) => num(*n, &f[i], "load_mult")?,
                None => 1.0,
            },
            profile: match c_prof {
                Some((i, _)) => f[i].clone(),
                None => "load".into(),
            },
        });
    }

    let lines_t = tables
        .remove("lines")
        .ok_or_else(|| perr(0, "missing section [lines]"))?;
    let c_from = lines_t.need(&["from"])?.0;
    let c_to = lines_t.need(&["to"])?.0;
    let c_r = lines_t.need(&["r_ohm", "r_pu"])?;
    let c_x = lines_t.need(&["x_ohm", "x_pu"])?;
    let c_b = lines_t.col(&["b_half_us", "b_half_pu"])?;
    let c_i = lines_t.col(&["imax_a", "imax_pu"])?;
    let c_s = lines_t.col(&["smax_kva", "smax_mva", "smax_pu"])?;
    let c_lz = lines_t.col(&["zone"])?;
    let nb = buses.len();
    let mut slots: Vec<Option<Line>> = vec![None; nb];
    for (n, f) in &lines_t.rows {
        let from = *index
            .get(&f[c_from])
            .ok_or_else(|| perr(*n, format!("field from: unknown bus {:?}", f[c_from])))?;
        let to = *index
            .get(&f[c_to])
            .ok_or_else(|| perr(*n, format!("field to: unknown bus {:?}", f[c_to])))?;
        if to == 0 {
            return Err(NetworkError::Radiality(format!("line {n} feeds the root bus")));
        }
        if slots[to - 1].is_some() {
            return Err(NetworkError::Radiality(format!(
                "bus {} has two upstream lines (second on line {n})",
                f[c_to]
            )));
        }
        let zone = match c_lz {
            Some((i, _)) => f[i].clone(),
            None => buses[to - 1].zone.clone(),
        };
        let zb = zbase(&zone).ok_or_else(|| NetworkError::MissingBase(format!("kv.{zone} (line {n})")))?;
        let ib = ibase(&zone).unwrap();
        let imp = |(i, u): (usize, &str), what| -> Result<f64, NetworkError> {
            let v = num(*n, &f[i], what)?;
            Ok(if u == "ohm" { v / zb } else { v })
        };
        let r = imp(c_r, "r")?;
        let x = imp(c_x, "x")?;
        let b = match c_b {
            Some((i, u)) => {
                let v = num(*n, &f[i], "b_half")?;
                if u == "us" {
                    v * 1e-6 * zb
                } else {
                    v
                }
            }
            None => 0.0,
        };
        let imax = match c_i {
            Some((i, u)) => opt_num(*n, &f[i], "imax")?.map(|v| {
                let m = if u == "A" { v / ib } else { v };
                m * m
            }),
            None => None,
        };
        let smax = match c_s {
            Some((i, u)) => opt_num(*n, &f[i], "smax")?.map(|v| v * power_scale(u)),
            None => None,
        };
        slots[to - 1] = Some(Line {
            up: from,
            z: Complex64::new(r, x),
            b,
            imax,
            smax,
            zone,
        });
    }
    let mut lines = Vec::with_capacity(nb);
    for (i, s) in slots.into_iter().enumerate() {
        match s {
            Some(l) => lines.push(l),
            None => {
                return Err(NetworkError::Radiality(format!(
                    "bus {} has no upstream line",
                    buses[i].name
                )))
            }
        }
    }

    let mut capacitors = Vec::new();
    if let Some(t) = tables.remove("capacitors") {
        if !t.rows.is_empty() {
            let c_bus = t.need(&["bus"])?.0;
            let c_cq = t.need(&["q_kvar", "q_mvar", "q_pu"])?;
            for (n, f) in &t.rows {
                let bus = *index
                    .get(&f[c_bus])
                    .ok_or_else(|| perr(*n, format!("field bus: unknown bus {:?}", f[c_bus])))?;
                capacitors.push(Capacitor {
                    bus,
                    q: num(*n, &f[c_cq.0], "q")? * power_scale(c_cq.1),
                });
            }
        }
    }

    let mut pv = PvPlan::default();
    for (n, k, v) in kv.remove("pv").unwrap_or_default() {
        match k.as_str() {
            "buses" if v == "loaded" => pv.sites = PvSites::Loaded,
            "buses" if v == "none" => pv.sites = PvSites::Buses(vec![]),
            "buses" => {
                let mut sites = Vec::new();
                for name in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    let idx = *index
                        .get(name)
                        .ok_or_else(|| perr(n, format!("field buses: unknown bus {name:?}")))?;
                    sites.push(idx);
                }
                pv.sites = PvSites::Buses(sites);
            }
            "capacity_share" => pv.capacity_share = num(n, &v, "capacity_share")?,
            "nameplate_ratio" => pv.nameplate_ratio = num(n, &v, "nameplate_ratio")?,
            "profile" => pv.profile = v,
            _ => return Err(perr(n, format!("unknown key {k:?} in [pv]"))),
        }
    }

    Feeder::new(FeederData {
        name,
        base_power,
        base_voltages,
        root_name,
        root_zone,
        v0: v0_mag * v0_mag,
        buses,
        lines,
        capacitors,
        pv,
    })
}

pub fn feeder_to_string(feeder: &Feeder, units: Units) -> String {
    let d = feeder.data();
    let phys = units == Units::Physical;
    let kilo = d.base_power * 1e3;
    let mut s = String::new();
    let _ = writeln!(s, "{FEEDER_FORMAT}\n\n[bases]");
    let _ = writeln!(s, "name = {}", d.name);
    let _ = writeln!(s, "power_mva = {}", d.base_power);
    for (zone, kv) in &d.base_voltages {
        let _ = writeln!(s, "kv.{zone} = {kv}");
    }
    let _ = writeln!(s, "root = {}\nroot_zone = {}\nv0_pu = {}", d.root_name, d.root_zone, d.v0.sqrt());

    let _ = writeln!(s, "\n[buses]");
    let (pc, qc) = if phys { ("p_kw", "q_kvar") } else { ("p_pu", "q_pu") };
    let _ = writeln!(s, "name zone vmin_pu vmax_pu {pc} {qc} load_mult profile");
    let ps = if phys { kilo } else { 1.0 };
    for b in &d.buses {
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {} {}",
            b.name,
            b.zone,
            b.vmin.sqrt(),
            b.vmax.sqrt(),
            b.load.re * ps,
            b.load.im * ps,
            b.load_multiplier,
            b.profile
        );
    }

    let _ = writeln!(s, "\n[lines]");
    if phys {
        let _ = writeln!(s, "from to zone r_ohm x_ohm b_half_us imax_a smax_kva");
    } else {
        let _ = writeln!(s, "from to zone r_pu x_pu b_half_pu imax_pu smax_pu");
    }
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| v.to_string());
    for (i, line) in d.lines.iter().enumerate() {
        let l = i + 1;
        let (zs, bs, is) = if phys {
            let zb = feeder.z_base(&line.zone);
            (zb, 1e6 / zb, feeder.i_base(&line.zone))
        } else {
            (1.0, 1.0, 1.0)
        };
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {} {}",
            feeder.bus_name(line.up),
            feeder.bus_name(l),
            line.zone,
            line.z.re * zs,
            line.z.im * zs,
            line.b * bs,
            opt(line.imax.map(|i| i.sqrt() * is)),
            opt(line.smax.map(|v| v * ps)),
        );
    }

    let _ = writeln!(s, "\n[capacitors]\nbus {qc}");
    for c in &d.capacitors {
        let _ = writeln!(s, "{} {}", feeder.bus_name(c.bus), c.q * ps);
    }

    let _ = writeln!(s, "\n[pv]");
    match &d.pv.sites {
        PvSites::Loaded => {
            let _ = writeln!(s, "buses = loaded");
        }
        PvSites::Buses(b) if b.is_empty() => {
            let _ = writeln!(s, "buses = none");
        }
        PvSites::Buses(b) => {
            let names: Vec<&str> = b.iter().map(|&l| feeder.bus_name(l)).collect();
            let _ = writeln!(s, "buses = {}", names.join(", "));
        }
    }
    let _ = writeln!(
        s,
        "capacity_share = {}\nnameplate_ratio = {}\nprofile = {}",
        d.pv.capacity_share, d.pv.nameplate_ratio, d.pv.profile
    );
    s
}

pub fn write_feeder(feeder: &Feeder, path: &Path, units: Units) -> Result<(), NetworkError> {
    std::fs::write(path, feeder_to_string(feeder, units)).map_err(|source| NetworkError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = "\
feeder-format 1
[bases]
power_mva = 1
kv.mv = 4.16
root = sub
v0_pu = 1.0
[buses]
name zone vmin_pu vmax_pu p_pu q_pu
b1 mv 0.9 1.1 0.1 0.05
[lines]
from to r_pu x_pu
sub b1 0.01 0.02
";

    #[test]
    fn two_bus_file() {
        let f = parse_feeder(TWO_BUS).unwrap();
        assert_eq!(f.n(), 1);
        assert_eq!(f.up(1), 0);
        assert_eq!(f.line(1).z, Complex64::new(0.01, 0.02));
        assert_eq!(f.line(1).b, 0.0);
        assert_eq!(f.v0(), 1.0);
    }

    #[test]
    fn voltage_bounds_are_squared() {
        let f = parse_feeder(TWO_BUS).unwrap();
        assert!((f.bus(1).vmin - 0.81).abs() < 1e-15);
        assert!((f.bus(1).vmax - 1.21).abs() < 1e-15);
    }

    #[test]
    fn two_upstream_lines_is_radiality_error() {
        let text = TWO_BUS.replace("b1 mv 0.9 1.1 0.1 0.05", "b1 mv 0.9 1.1 0.1 0.05\nb2 mv 0.9 1.1 0 0")
            + "sub b2 0.01 0.02\nb1 b2 0.01 0.02\n";
        match parse_feeder(&text) {
            Err(NetworkError::Radiality(m)) => assert!(m.contains("b2"), "{m}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_power_base() {
        let text = TWO_BUS.replace("power_mva = 1\n", "");
        assert!(matches!(parse_feeder(&text), Err(NetworkError::MissingBase(_))));
    }

    #[test]
    fn bad_field_names_its_line() {
        let text = TWO_BUS.replace("sub b1 0.01 0.02", "sub b1 0.01 oops");
        match parse_feeder(&text) {
            Err(NetworkError::Parse { line, message }) => {
                assert_eq!(line, 12);
                assert!(message.contains('x'), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn physical_units_convert_on_zone_base() {
        let text = "\
feeder-format 1
[bases]
power_mva = 2
kv.mv = 10
root = s
[buses]
name zone vmin_pu vmax_pu p_kw q_kvar load_mult
a mv 0.95 1.05 200 100 3
[lines]
from to r_ohm x_ohm b_half_us imax_a
s a 5 10 100 115.47005383792516
";
        let f = parse_feeder(text).unwrap();
        // z base = 100 / 2 = 50 ohm, i base = 2000 / (sqrt3 * 10) A
        assert!((f.line(1).z.re - 0.1).abs() < 1e-15);
        assert!((f.line(1).z.im - 0.2).abs() < 1e-15);
        assert!((f.line(1).b - 100e-6 * 50.0).abs() < 1e-15);
        assert!((f.line(1).imax.unwrap() - 1.0).abs() < 1e-12);
        assert!((f.bus(1).load.re - 0.1).abs() < 1e-15);
        assert!((f.bus(1).peak_load().re - 0.3).abs() < 1e-15);
    }

    #[test]
    fn version_mismatch() {
        let text = TWO_BUS.replace("feeder-format 1", "feeder-format 9");
        assert!(matches!(parse_feeder(&text), Err(NetworkError::Parse { line: 1, .. })));
    }
}
