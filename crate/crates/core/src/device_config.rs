//! Device parameter registry.
//!
//! A device file is JSON (see `device.schema.json` at the repository root).
//! Every physical value may be written as a bare number in base SI units or
//! as a string with a unit suffix (`"4.83 GHz"`, `"35.6 us"`, `"464 nH/m"`).
//! After [`load_device_config`] all values are plain base-unit numbers:
//! ordinary frequencies in Hz, capacitances in F, inductances in H,
//! currents in A and times in s.
//!
//! Transmon anharmonicities are stored negative. A positive value in the
//! file is taken as a magnitude and negated; the convention is recorded in
//! [`DeviceConfig::anharmonicity_convention`].

use crate::circuit_model::coupling_from_capacitance;
use crate::units::{capacitance_from_charging_energy, Dimension, Quantity};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;
use thiserror::Error;

pub const ANHARMONICITY_CONVENTION: &str = "negative";
/// Default relative tolerance between a stated coupling and its capacitive
/// derivation.
pub const DEFAULT_COUPLING_TOLERANCE: f64 = 0.1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{element}: missing required field `{field}`")]
    MissingField { element: String, field: String },
    #[error("{element}.{field}: {reason}")]
    Invalid {
        element: String,
        field: String,
        reason: String,
    },
    #[error("{element}: unknown element id `{reference}`")]
    UnknownReference { element: String, reference: String },
}

fn invalid(element: &str, field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        element: element.to_string(),
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QubitParams {
    pub id: String,
    pub freq_idle: f64,
    pub anharmonicity: f64,
    pub t1: f64,
    pub t2: f64,
    /// Charging energy E_C/h.
    pub ec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplerParams {
    pub id: String,
    pub freq_max: f64,
    pub ec: f64,
    pub ej: f64,
    /// Junction asymmetry d.
    pub asymmetry: f64,
    /// Flux per unit Z amplitude, rad per amplitude unit.
    pub flux_map_k: f64,
    /// Flux offset, rad.
    pub flux_map_b: f64,
    pub anharmonicity: f64,
}

impl CouplerParams {
    /// Builds a coupler from its sweet-spot frequency, inverting
    /// f_max = sqrt(8 E_J E_C) - E_C for E_J.
    pub fn from_max_frequency(
        id: &str,
        freq_max: f64,
        ec: f64,
        asymmetry: f64,
        flux_map_k: f64,
        flux_map_b: f64,
    ) -> Self {
        CouplerParams {
            id: id.to_string(),
            freq_max,
            ec,
            ej: ej_from_max_frequency(freq_max, ec),
            asymmetry,
            flux_map_k,
            flux_map_b,
            anharmonicity: -ec,
        }
    }
}

pub fn ej_from_max_frequency(freq_max: f64, ec: f64) -> f64 {
    (freq_max + ec).powi(2) / (8.0 * ec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    pub id: String,
    /// Frequency of the bare half-wave line without the SQUID.
    pub omega0_bare: f64,
    pub ic1: f64,
    pub ic2: f64,
    /// Inductance per unit length, H/m.
    pub lu: f64,
    /// Capacitance per unit length, F/m.
    pub cu: f64,
    pub c_in: f64,
    pub c_out: f64,
    /// Kerr coefficient magnitude; the frequency shift per photon is -anharmonicity.
    pub anharmonicity: f64,
    pub kappa: f64,
    pub z0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_out_ground: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonatorParams {
    pub id: String,
    pub freq_bare: f64,
    pub c_r: f64,
    pub c_qr: f64,
    pub c_rf: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_qr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_rf: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qubit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<String>,
    pub coupling_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingEdge {
    pub a: String,
    pub b: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_mutual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceConfig {
    pub anharmonicity_convention: String,
    pub qubits: Vec<QubitParams>,
    pub couplers: Vec<CouplerParams>,
    pub resonators: Vec<ResonatorParams>,
    pub filters: Vec<FilterParams>,
    pub topology: Vec<CouplingEdge>,
}

impl DeviceConfig {
    pub fn qubit(&self, id: &str) -> Option<&QubitParams> {
        self.qubits.iter().find(|q| q.id == id)
    }

    pub fn coupler(&self, id: &str) -> Option<&CouplerParams> {
        self.couplers.iter().find(|c| c.id == id)
    }

    pub fn resonator(&self, id: &str) -> Option<&ResonatorParams> {
        self.resonators.iter().find(|r| r.id == id)
    }

    pub fn filter(&self, id: &str) -> Option<&FilterParams> {
        self.filters.iter().find(|f| f.id == id)
    }

    /// Coupling strength of the edge joining `a` and `b`, in either order.
    pub fn edge_coupling(&self, a: &str, b: &str) -> Option<f64> {
        self.topology
            .iter()
            .find(|e| (e.a == a && e.b == b) || (e.a == b && e.b == a))
            .and_then(|e| e.g)
    }

    /// Serializes to pretty JSON in base units.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Re-validates an already-built config (used after programmatic edits).
    pub fn validate(&self) -> Result<(), ConfigError> {
        let raw: RawDeviceConfig = serde_json::from_str(&self.to_json())
            .map_err(|e| ConfigError::Parse(e.to_string()))?;
        raw.validate().map(|_| ())
    }
}

pub fn load_device_config(path: impl AsRef<Path>) -> Result<DeviceConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_device_config(&text)
}

pub fn parse_device_config(text: &str) -> Result<DeviceConfig, ConfigError> {
    let raw: RawDeviceConfig =
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    raw.validate()
}

/// Load followed by serialization: the canonical base-unit form of a config.
pub fn normalize(text: &str) -> Result<String, ConfigError> {
    Ok(parse_device_config(text)?.to_json())
}

type Q = Option<Quantity>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDeviceConfig {
    #[serde(default)]
    anharmonicity_convention: Option<String>,
    #[serde(default)]
    qubits: Vec<RawQubit>,
    #[serde(default)]
    couplers: Vec<RawCoupler>,
    #[serde(default)]
    resonators: Vec<RawResonator>,
    #[serde(default)]
    filters: Vec<RawFilter>,
    #[serde(default)]
    topology: Vec<RawEdge>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQubit {
    id: Option<String>,
    freq_idle: Q,
    anharmonicity: Q,
    t1: Q,
    t2: Q,
    ec: Q,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoupler {
    id: Option<String>,
    freq_max: Q,
    ec: Q,
    ej: Q,
    asymmetry: Q,
    flux_map_k: Q,
    flux_map_b: Q,
    anharmonicity: Q,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFilter {
    id: Option<String>,
    omega0_bare: Q,
    ic1: Q,
    ic2: Q,
    lu: Q,
    cu: Q,
    c_in: Q,
    c_out: Q,
    anharmonicity: Q,
    kappa: Q,
    z0: Q,
    c_out_ground: Q,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawResonator {
    id: Option<String>,
    freq_bare: Q,
    c_r: Q,
    c_qr: Q,
    c_rf: Q,
    g_qr: Q,
    g_rf: Q,
    qubit: Option<String>,
    filter: Option<String>,
    coupling_tolerance: Q,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdge {
    a: Option<String>,
    b: Option<String>,
    g: Q,
    c_mutual: Q,
}

struct Fields<'a> {
    element: &'a str,
}

impl Fields<'_> {
    fn opt(&self, q: &Q, field: &str, dim: Dimension) -> Result<Option<f64>, ConfigError> {
        match q {
            None => Ok(None),
            Some(q) => {
                let v = q.to_base(dim).map_err(|r| invalid(self.element, field, r))?;
                if !v.is_finite() {
                    return Err(invalid(self.element, field, "value is not finite"));
                }
                Ok(Some(v))
            }
        }
    }

    fn req(&self, q: &Q, field: &str, dim: Dimension) -> Result<f64, ConfigError> {
        self.opt(q, field, dim)?.ok_or_else(|| ConfigError::MissingField {
            element: self.element.to_string(),
            field: field.to_string(),
        })
    }

    fn positive(&self, q: &Q, field: &str, dim: Dimension) -> Result<f64, ConfigError> {
        let v = self.req(q, field, dim)?;
        self.check_positive(v, field)
    }

    fn check_positive(&self, v: f64, field: &str) -> Result<f64, ConfigError> {
        if v > 0.0 {
            Ok(v)
        } else {
            Err(invalid(self.element, field, format!("must be strictly positive, got {v}")))
        }
    }
}

fn element_name(kind: &str, id: &Option<String>, index: usize) -> String {
    match id {
        Some(id) => format!("{kind}[{id}]"),
        None => format!("{kind}[#{index}]"),
    }
}

fn require_id(kind: &str, id: &Option<String>, index: usize) -> Result<String, ConfigError> {
    id.clone().ok_or_else(|| ConfigError::MissingField {
        element: element_name(kind, id, index),
        field: "id".into(),
    })
}

fn signed_anharmonicity(v: f64) -> f64 {
    -v.abs()
}

impl RawDeviceConfig {
    fn validate(self) -> Result<DeviceConfig, ConfigError> {
        use Dimension::*;
        if let Some(conv) = &self.anharmonicity_convention {
            if conv != ANHARMONICITY_CONVENTION {
                return Err(invalid(
                    "device",
                    "anharmonicity_convention",
                    format!("only \"{ANHARMONICITY_CONVENTION}\" is supported"),
                ));
            }
        }
        let mut ids = HashSet::new();
        let mut claim = |name: &str, id: &str| -> Result<(), ConfigError> {
            if ids.insert(id.to_string()) {
                Ok(())
            } else {
                Err(invalid(name, "id", format!("duplicate element id `{id}`")))
            }
        };

        let mut qubits = Vec::new();
        for (i, q) in self.qubits.iter().enumerate() {
            let name = element_name("qubits", &q.id, i);
            let f = Fields { element: &name };
            let id = require_id("qubits", &q.id, i)?;
            claim(&name, &id)?;
            let freq_idle = f.positive(&q.freq_idle, "freq_idle", Frequency)?;
            let alpha = f.req(&q.anharmonicity, "anharmonicity", Frequency)?;
            if alpha == 0.0 {
                return Err(invalid(&name, "anharmonicity", "transmon anharmonicity cannot be zero"));
            }
            let anharmonicity = signed_anharmonicity(alpha);
            if anharmonicity.abs() >= freq_idle {
                return Err(invalid(&name, "anharmonicity", "|anharmonicity| must be below freq_idle"));
            }
            let t1 = f.positive(&q.t1, "t1", Time)?;
            let t2 = f.positive(&q.t2, "t2", Time)?;
            let ec = match f.opt(&q.ec, "ec", Frequency)? {
                Some(v) => f.check_positive(v, "ec")?,
                None => anharmonicity.abs(),
            };
            qubits.push(QubitParams { id, freq_idle, anharmonicity, t1, t2, ec });
        }

        let mut couplers = Vec::new();
        for (i, c) in self.couplers.iter().enumerate() {
            let name = element_name("couplers", &c.id, i);
            let f = Fields { element: &name };
            let id = require_id("couplers", &c.id, i)?;
            claim(&name, &id)?;
            let ec = f.positive(&c.ec, "ec", Frequency)?;
            let freq_max = f.opt(&c.freq_max, "freq_max", Frequency)?;
            let ej = f.opt(&c.ej, "ej", Frequency)?;
            let (freq_max, ej) = match (freq_max, ej) {
                (Some(fm), Some(ej)) => {
                    let implied = (8.0 * ej * ec).sqrt() - ec;
                    if ((implied - fm) / fm).abs() > 1e-3 {
                        return Err(invalid(
                            &name,
                            "ej",
                            format!("implies freq_max {implied:.6e} Hz, stated {fm:.6e} Hz"),
                        ));
                    }
                    (fm, ej)
                }
                (Some(fm), None) => (f.check_positive(fm, "freq_max")?, ej_from_max_frequency(fm, ec)),
                (None, Some(ej)) => ((8.0 * ej * ec).sqrt() - ec, ej),
                (None, None) => {
                    return Err(ConfigError::MissingField { element: name, field: "freq_max".into() })
                }
            };
            f.check_positive(freq_max, "freq_max")?;
            if ej <= ec {
                return Err(invalid(&name, "ej", "E_J must exceed E_C"));
            }
            let d = f.req(&c.asymmetry, "asymmetry", Dimensionless)?;
            if !(0.0..1.0).contains(&d) {
                return Err(invalid(&name, "asymmetry", format!("must satisfy 0 <= d < 1, got {d}")));
            }
            let k = f.req(&c.flux_map_k, "flux_map_k", Dimensionless)?;
            if k == 0.0 {
                return Err(invalid(&name, "flux_map_k", "must be nonzero"));
            }
            let b = f.opt(&c.flux_map_b, "flux_map_b", Angle)?.unwrap_or(0.0);
            let anharmonicity = match f.opt(&c.anharmonicity, "anharmonicity", Frequency)? {
                Some(a) if a != 0.0 => signed_anharmonicity(a),
                Some(_) => return Err(invalid(&name, "anharmonicity", "cannot be zero")),
                None => -ec,
            };
            couplers.push(CouplerParams {
                id,
                freq_max,
                ec,
                ej,
                asymmetry: d,
                flux_map_k: k,
                flux_map_b: b,
                anharmonicity,
            });
        }

        let mut filters = Vec::new();
        for (i, p) in self.filters.iter().enumerate() {
            let name = element_name("filters", &p.id, i);
            let f = Fields { element: &name };
            let id = require_id("filters", &p.id, i)?;
            claim(&name, &id)?;
            let ic1 = f.req(&p.ic1, "ic1", Current)?;
            let ic2 = f.req(&p.ic2, "ic2", Current)?;
            if ic1 < 0.0 {
                return Err(invalid(&name, "ic1", "critical current cannot be negative"));
            }
            if ic2 < 0.0 {
                return Err(invalid(&name, "ic2", "critical current cannot be negative"));
            }
            if ic1 + ic2 <= 0.0 {
                return Err(invalid(&name, "ic1", "ic1 + ic2 must be positive"));
            }
            let c_out_ground = match f.opt(&p.c_out_ground, "c_out_ground", Capacitance)? {
                Some(v) => Some(f.check_positive(v, "c_out_ground")?),
                None => None,
            };
            let anharmonicity = f.opt(&p.anharmonicity, "anharmonicity", Frequency)?.unwrap_or(0.0);
            if anharmonicity < 0.0 {
                return Err(invalid(&name, "anharmonicity", "filter Kerr coefficient is a magnitude"));
            }
            filters.push(FilterParams {
                omega0_bare: f.positive(&p.omega0_bare, "omega0_bare", Frequency)?,
                ic1,
                ic2,
                lu: f.positive(&p.lu, "lu", InductancePerLength)?,
                cu: f.positive(&p.cu, "cu", CapacitancePerLength)?,
                c_in: f.positive(&p.c_in, "c_in", Capacitance)?,
                c_out: f.positive(&p.c_out, "c_out", Capacitance)?,
                anharmonicity,
                kappa: f.positive(&p.kappa, "kappa", Frequency)?,
                z0: match f.opt(&p.z0, "z0", Resistance)? {
                    Some(z) => f.check_positive(z, "z0")?,
                    None => 50.0,
                },
                c_out_ground,
                id,
            });
        }

        let mut resonators = Vec::new();
        for (i, r) in self.resonators.iter().enumerate() {
            let name = element_name("resonators", &r.id, i);
            let f = Fields { element: &name };
            let id = require_id("resonators", &r.id, i)?;
            claim(&name, &id)?;
            let optional_positive = |q: &Q, field: &str| -> Result<Option<f64>, ConfigError> {
                match f.opt(q, field, Frequency)? {
                    Some(v) => Ok(Some(f.check_positive(v, field)?)),
                    None => Ok(None),
                }
            };
            let tol = f.opt(&r.coupling_tolerance, "coupling_tolerance", Dimensionless)?
                .unwrap_or(DEFAULT_COUPLING_TOLERANCE);
            if tol <= 0.0 {
                return Err(invalid(&name, "coupling_tolerance", "must be positive"));
            }
            resonators.push(ResonatorParams {
                freq_bare: f.positive(&r.freq_bare, "freq_bare", Frequency)?,
                c_r: f.positive(&r.c_r, "c_r", Capacitance)?,
                c_qr: f.positive(&r.c_qr, "c_qr", Capacitance)?,
                c_rf: f.positive(&r.c_rf, "c_rf", Capacitance)?,
                g_qr: optional_positive(&r.g_qr, "g_qr")?,
                g_rf: optional_positive(&r.g_rf, "g_rf")?,
                qubit: r.qubit.clone(),
                filter: r.filter.clone(),
                coupling_tolerance: tol,
                id,
            });
        }

        let mut topology = Vec::new();
        for (i, e) in self.topology.iter().enumerate() {
            let name = format!("topology[#{i}]");
            let f = Fields { element: &name };
            let a = e.a.clone().ok_or_else(|| ConfigError::MissingField {
                element: name.clone(),
                field: "a".into(),
            })?;
            let b = e.b.clone().ok_or_else(|| ConfigError::MissingField {
                element: name.clone(),
                field: "b".into(),
            })?;
            for end in [&a, &b] {
                if !ids.contains(end) {
                    return Err(ConfigError::UnknownReference {
                        element: name.clone(),
                        reference: end.clone(),
                    });
                }
            }
            let g = match f.opt(&e.g, "g", Frequency)? {
                Some(v) => Some(f.check_positive(v, "g")?),
                None => None,
            };
            let c_mutual = match f.opt(&e.c_mutual, "c_mutual", Capacitance)? {
                Some(v) => Some(f.check_positive(v, "c_mutual")?),
                None => None,
            };
            if g.is_none() && c_mutual.is_none() {
                return Err(ConfigError::MissingField { element: name, field: "g".into() });
            }
            topology.push(CouplingEdge { a, b, g, c_mutual });
        }

        let cfg = DeviceConfig {
            anharmonicity_convention: ANHARMONICITY_CONVENTION.to_string(),
            qubits,
            couplers,
            resonators,
            filters,
            topology,
        };
        check_resonator_links(&cfg)?;
        Ok(cfg)
    }
}

fn check_resonator_links(cfg: &DeviceConfig) -> Result<(), ConfigError> {
    for r in &cfg.resonators {
        let name = format!("resonators[{}]", r.id);
        if let Some(qid) = &r.qubit {
            let q = cfg.qubit(qid).ok_or_else(|| ConfigError::UnknownReference {
                element: name.clone(),
                reference: qid.clone(),
            })?;
            if let Some(g) = r.g_qr {
                let c_q = capacitance_from_charging_energy(q.ec);
                let derived = coupling_from_capacitance(r.c_qr, q.freq_idle, r.freq_bare, c_q, r.c_r);
                check_agreement(&name, "g_qr", g, derived, r.coupling_tolerance)?;
            }
        }
        if let Some(fid) = &r.filter {
            let filt = cfg.filter(fid).ok_or_else(|| ConfigError::UnknownReference {
                element: name.clone(),
                reference: fid.clone(),
            })?;
            if let (Some(g), Some(c_f)) = (r.g_rf, filt.c_out_ground) {
                let derived = coupling_from_capacitance(r.c_rf, r.freq_bare, r.freq_bare, r.c_r, c_f);
                check_agreement(&name, "g_rf", g, derived, r.coupling_tolerance)?;
            }
        }
    }
    Ok(())
}

fn check_agreement(element: &str, field: &str, stated: f64, derived: f64, tol: f64) -> Result<(), ConfigError> {
    if ((stated - derived) / derived).abs() > tol {
        Err(invalid(
            element,
            field,
            format!(
                "stated {stated:.4e} Hz disagrees with capacitive value {derived:.4e} Hz beyond tolerance {tol}"
            ),
        ))
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "qubits": [{"id": "Q", "freq_idle": 5e9, "anharmonicity": -2e8, "t1": 2e-5, "t2": 1e-5}],
        "resonators": [{"id": "R", "freq_bare": 6.5e9, "c_r": 4e-13, "c_qr": 5e-15, "c_rf": 2e-15,
                        "qubit": "Q", "filter": "F"}],
        "filters": [{"id": "F", "omega0_bare": 9.3e9, "ic1": 8.5e-8, "ic2": 3.15e-7,
                     "lu": 4.64e-7, "cu": 2.03e-10, "c_in": 1.57e-14, "c_out": 1.065e-13,
                     "anharmonicity": 4.47e6, "kappa": 1.5e8}],
        "topology": [{"a": "Q", "b": "R", "g": 1e8}]
    }"#;

    #[test]
    fn minimal_config_round_trips() {
        let cfg = parse_device_config(MINIMAL).unwrap();
        assert_eq!(cfg.qubits.len(), 1);
        assert_eq!(cfg.resonators.len(), 1);
        assert_eq!(cfg.filters.len(), 1);
        let again = parse_device_config(&cfg.to_json()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn table_row_is_stored_in_base_units() {
        let text = r#"{"qubits": [{"id": "Q6", "freq_idle": "4.83 GHz", "anharmonicity": "188 MHz",
                        "t1": "35.6 us", "t2": "7.4 us"}]}"#;
        let cfg = parse_device_config(text).unwrap();
        let q = &cfg.qubits[0];
        assert!((q.freq_idle - 4.83e9).abs() < 1.0);
        assert!((q.anharmonicity + 188e6).abs() < 1e-3);
        assert!((q.t1 - 35.6e-6).abs() < 1e-15);
        assert!((q.ec - 188e6).abs() < 1e-3);
        assert_eq!(cfg.anharmonicity_convention, "negative");
    }

    #[test]
    fn negative_capacitance_names_field() {
        let text = MINIMAL.replace("\"c_out\": 1.065e-13", "\"c_out\": -1.0e-13");
        match parse_device_config(&text) {
            Err(ConfigError::Invalid { element, field, .. }) => {
                assert_eq!(element, "filters[F]");
                assert_eq!(field, "c_out");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_field_is_reported() {
        let text = MINIMAL.replace("\"t1\": 2e-5, ", "");
        match parse_device_config(&text) {
            Err(ConfigError::MissingField { element, field }) => {
                assert_eq!(element, "qubits[Q]");
                assert_eq!(field, "t1");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dangling_edge_is_rejected() {
        let text = MINIMAL.replace("\"b\": \"R\"", "\"b\": \"R9\"");
        assert!(matches!(
            parse_device_config(&text),
            Err(ConfigError::UnknownReference { .. })
        ));
    }

    #[test]
    fn coupler_ej_derived_from_sweet_spot() {
        let text = r#"{"couplers": [{"id": "C", "freq_max": "8.6 GHz", "ec": "330 MHz",
                         "asymmetry": 0.23, "flux_map_k": 0.7}]}"#;
        let cfg = parse_device_config(text).unwrap();
        let c = &cfg.couplers[0];
        assert!((c.ej / 1e9 - 30.206).abs() < 1e-3);
        assert_eq!(c.anharmonicity, -330e6);
    }

    #[test]
    fn asymmetry_out_of_range() {
        let text = r#"{"couplers": [{"id": "C", "freq_max": 8.6e9, "ec": 3.3e8,
                         "asymmetry": 1.0, "flux_map_k": 0.7}]}"#;
        assert!(matches!(
            parse_device_config(text),
            Err(ConfigError::Invalid { field, .. }) if field == "asymmetry"
        ));
    }

    #[test]
    fn inconsistent_direct_coupling_is_rejected() {
        let text = MINIMAL.replace("\"qubit\": \"Q\"", "\"qubit\": \"Q\", \"g_qr\": 5e9");
        assert!(matches!(
            parse_device_config(&text),
            Err(ConfigError::Invalid { field, .. }) if field == "g_qr"
        ));
    }

    #[test]
    fn unknown_keys_fail_to_parse() {
        let text = MINIMAL.replace("\"t2\": 1e-5", "\"t2\": 1e-5, \"t3\": 1");
        assert!(matches!(parse_device_config(&text), Err(ConfigError::Parse(_))));
    }
}
