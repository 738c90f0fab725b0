//! Refractive-index dispersion: named Sellmeier-style coefficient sets
//! loaded from a structured text file with validity ranges and provenance.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// The coefficient file bundled with the crate.
pub const BUNDLED_DISPERSION: &str = include_str!("../data/dispersion.toml");

#[derive(Debug, Clone)]
enum Model {
    /// n² = a1 + b1·f + (a2 + b2·f)/(L − (a3 + b3·f)²) + (a4 + b4·f)/(L − a5²) − a6·L
    /// with L = λ²[µm²] and f = (T − t0)(T + t1).
    ThermalPoles { a: [f64; 6], b: [f64; 4], f_t0: f64, f_t1: f64 },
    /// n² = 1 + Σ Bᵢ·L/(L − Cᵢ²), temperature independent.
    Sellmeier { terms: Vec<(f64, f64)> },
    /// Fixed index, for closed-form checks.
    Constant(f64),
}

/// One material's dispersion relation n(λ, T) with its validity domain.
#[derive(Debug, Clone)]
pub struct MaterialDispersion {
    pub name: String,
    pub citation: String,
    pub lambda_um_range: (f64, f64),
    pub temp_c_range: (f64, f64),
    model: Model,
}

impl MaterialDispersion {
    /// Dispersionless material with a fixed refractive index.
    pub fn constant(name: &str, n: f64) -> Self {
        MaterialDispersion {
            name: name.to_string(),
            citation: "constant test material".to_string(),
            lambda_um_range: (0.0, f64::INFINITY),
            temp_c_range: (f64::NEG_INFINITY, f64::INFINITY),
            model: Model::Constant(n),
        }
    }

    /// Refractive index at wavelength (meters) and temperature (°C).
    pub fn index(&self, lambda_m: f64, temp_c: f64) -> Result<f64> {
        let lambda_um = lambda_m * 1e6;
        if !(lambda_um >= self.lambda_um_range.0 && lambda_um <= self.lambda_um_range.1) {
            return Err(Error::config(format!(
                "wavelength {:.4} um outside the {} dispersion domain [{}, {}] um",
                lambda_um, self.name, self.lambda_um_range.0, self.lambda_um_range.1
            )));
        }
        if !(temp_c >= self.temp_c_range.0 && temp_c <= self.temp_c_range.1) {
            return Err(Error::config(format!(
                "temperature {temp_c} C outside the {} dispersion domain [{}, {}] C",
                self.name, self.temp_c_range.0, self.temp_c_range.1
            )));
        }
        let l2 = lambda_um * lambda_um;
        let n2 = match &self.model {
            Model::Constant(n) => n * n,
            Model::Sellmeier { terms } => {
                1.0 + terms.iter().map(|&(b, c)| b * l2 / (l2 - c * c)).sum::<f64>()
            }
            Model::ThermalPoles { a, b, f_t0, f_t1 } => {
                let f = (temp_c - f_t0) * (temp_c + f_t1);
                a[0] + b[0] * f + (a[1] + b[1] * f) / (l2 - (a[2] + b[2] * f).powi(2))
                    + (a[3] + b[3] * f) / (l2 - a[4] * a[4])
                    - a[5] * l2
            }
        };
        if !(n2 > 1.0) {
            return Err(Error::numerical(format!(
                "dispersion model {} gives n^2 = {n2} at {lambda_um} um",
                self.name
            )));
        }
        Ok(n2.sqrt())
    }

    /// Group index n_g = n − λ·dn/dλ via a central difference.
    pub fn group_index(&self, lambda_m: f64, temp_c: f64) -> Result<f64> {
        let h = lambda_m * 1e-5;
        let n_hi = self.index(lambda_m + h, temp_c)?;
        let n_lo = self.index(lambda_m - h, temp_c)?;
        let n = self.index(lambda_m, temp_c)?;
        Ok(n - lambda_m * (n_hi - n_lo) / (2.0 * h))
    }
}

#[derive(Deserialize)]
struct RawMaterial {
    name: String,
    citation: String,
    model: String,
    lambda_um_range: [f64; 2],
    temp_c_range: [f64; 2],
    a: Option<[f64; 6]>,
    b: Option<[f64; 4]>,
    f_t0: Option<f64>,
    f_t1: Option<f64>,
    terms: Option<Vec<[f64; 2]>>,
}

#[derive(Deserialize)]
struct RawTable {
    material: Vec<RawMaterial>,
}

/// Named dispersion sets, immutable after load.
#[derive(Debug, Clone)]
pub struct DispersionTable {
    materials: BTreeMap<String, MaterialDispersion>,
}

impl DispersionTable {
    pub fn from_str(text: &str) -> Result<Self> {
        let raw: RawTable = toml::from_str(text)
            .map_err(|e| Error::Format(format!("dispersion file: {e}")))?;
        let mut materials = BTreeMap::new();
        for m in raw.material {
            let model = match m.model.as_str() {
                "thermal-poles" => Model::ThermalPoles {
                    a: m.a.ok_or_else(|| missing(&m.name, "a"))?,
                    b: m.b.ok_or_else(|| missing(&m.name, "b"))?,
                    f_t0: m.f_t0.ok_or_else(|| missing(&m.name, "f_t0"))?,
                    f_t1: m.f_t1.ok_or_else(|| missing(&m.name, "f_t1"))?,
                },
                "sellmeier" => Model::Sellmeier {
                    terms: m
                        .terms
                        .ok_or_else(|| missing(&m.name, "terms"))?
                        .into_iter()
                        .map(|t| (t[0], t[1]))
                        .collect(),
                },
                other => {
                    return Err(Error::format(format!(
                        "unknown dispersion model '{other}' for material {}",
                        m.name
                    )))
                }
            };
            materials.insert(
                m.name.clone(),
                MaterialDispersion {
                    name: m.name,
                    citation: m.citation,
                    lambda_um_range: (m.lambda_um_range[0], m.lambda_um_range[1]),
                    temp_c_range: (m.temp_c_range[0], m.temp_c_range[1]),
                    model,
                },
            );
        }
        Ok(DispersionTable { materials })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_str(&std::fs::read_to_string(path)?)
    }

    /// The coefficient sets shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_str(BUNDLED_DISPERSION).expect("bundled dispersion file is valid")
    }

    pub fn get(&self, name: &str) -> Result<&MaterialDispersion> {
        self.materials.get(name).ok_or_else(|| {
            Error::config(format!(
                "material '{name}' not found; available: {}",
                self.materials.keys().cloned().collect::<Vec<_>>().join(", ")
            ))
        })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.materials.keys().map(|s| s.as_str())
    }
}

fn missing(name: &str, field: &str) -> Error {
    Error::format(format!("material {name}: missing field '{field}'"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bundled_table_loads() {
        let t = DispersionTable::bundled();
        assert!(t.get("linbo3_mgo5_e").is_ok());
        assert!(t.get("linbo3_mgo5_o").is_ok());
        assert!(t.get("diamond").is_ok());
        assert!(t.get("unobtainium").is_err());
    }

    #[test]
    fn lithium_niobate_room_temperature_indices() {
        let t = DispersionTable::bundled();
        let ne = t.get("linbo3_mgo5_e").unwrap();
        let no = t.get("linbo3_mgo5_o").unwrap();
        // reference points at 24.5 C where the thermal term vanishes
        assert_relative_eq!(ne.index(1.064e-6, 24.5).unwrap(), 2.148, epsilon = 2e-3);
        assert_relative_eq!(no.index(1.064e-6, 24.5).unwrap(), 2.230, epsilon = 2e-3);
        assert_relative_eq!(ne.index(532e-9, 24.5).unwrap(), 2.224, epsilon = 2e-3);
        assert_relative_eq!(no.index(532e-9, 24.5).unwrap(), 2.319, epsilon = 2e-3);
    }

    #[test]
    fn diamond_index() {
        let t = DispersionTable::bundled();
        let d = t.get("diamond").unwrap();
        assert_relative_eq!(d.index(1.064e-6, 25.0).unwrap(), 2.391, epsilon = 2e-3);
        assert_relative_eq!(d.index(532e-9, 25.0).unwrap(), 2.426, epsilon = 2e-3);
    }

    #[test]
    fn prism_index_exceeds_resonator_index_over_band() {
        let t = DispersionTable::bundled();
        let d = t.get("diamond").unwrap();
        let no = t.get("linbo3_mgo5_o").unwrap();
        for &lam in &[532e-9, 800e-9, 1.064e-6, 1.6e-6] {
            assert!(d.index(lam, 25.0).unwrap() > no.index(lam, 25.0).unwrap());
        }
    }

    #[test]
    fn domain_errors() {
        let t = DispersionTable::bundled();
        let ne = t.get("linbo3_mgo5_e").unwrap();
        assert!(ne.index(0.2e-6, 25.0).is_err());
        assert!(ne.index(1.064e-6, 400.0).is_err());
    }

    #[test]
    fn group_index_exceeds_phase_index_in_normal_dispersion() {
        let t = DispersionTable::bundled();
        let no = t.get("linbo3_mgo5_o").unwrap();
        let n = no.index(1.064e-6, 25.0).unwrap();
        let ng = no.group_index(1.064e-6, 25.0).unwrap();
        assert!(ng > n, "ng {ng} n {n}");
        assert!(ng < n + 0.2);
    }
}
