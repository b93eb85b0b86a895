//! Grid fields and the `EKFIELD1` file format.

use std::io::{BufRead, Write};

use super::{GridError, Topology};

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub nx: usize,
    pub ny: usize,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        ScalarField {
            nx,
            ny,
            data: vec![0.0; nx * ny],
        }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.nx + i]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Face-centred vector field. `x` has `nfx * ny` entries, `y` has `nx * nfy`.
#[derive(Debug, Clone, PartialEq)]
pub struct MacVectorField {
    pub nx: usize,
    pub ny: usize,
    pub topology: Topology,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl MacVectorField {
    pub fn zeros(nx: usize, ny: usize, topology: Topology) -> Self {
        let (fx, fy) = match topology {
            Topology::Periodic => (nx, ny),
            Topology::Walled => (nx + 1, ny + 1),
        };
        MacVectorField {
            nx,
            ny,
            topology,
            x: vec![0.0; fx * ny],
            y: vec![0.0; nx * fy],
        }
    }

    pub fn nfx(&self) -> usize {
        self.x.len() / self.ny
    }

    pub fn max_abs(&self) -> f64 {
        self.x
            .iter()
            .chain(&self.y)
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&mut self, a: f64) {
        self.x
            .iter_mut()
            .chain(self.y.iter_mut())
            .for_each(|v| *v *= a);
    }

    pub fn axpy(&mut self, a: f64, other: &MacVectorField) {
        for (v, o) in self.x.iter_mut().zip(&other.x) {
            *v += a * o;
        }
        for (v, o) in self.y.iter_mut().zip(&other.y) {
            *v += a * o;
        }
    }
}

/// Contents of an `EKFIELD1` file.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldData {
    Scalar {
        nx: usize,
        ny: usize,
        values: Vec<f64>,
    },
    /// `x` holds (nx+1) * ny values, `y` holds nx * (ny+1).
    VectorMac {
        nx: usize,
        ny: usize,
        x: Vec<f64>,
        y: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldFile {
    pub h: f64,
    pub l: f64,
    pub config_hash: Option<String>,
    pub data: FieldData,
}

const MAGIC: &str = "EKFIELD1";

impl FieldFile {
    pub fn scalar(s: &ScalarField, h: f64) -> Self {
        FieldFile {
            h,
            l: s.nx as f64 * h,
            config_hash: None,
            data: FieldData::Scalar {
                nx: s.nx,
                ny: s.ny,
                values: s.data.clone(),
            },
        }
    }

    /// Periodic fields repeat the wrapped face column/row so the file always
    /// stores the full (nx+1) and (ny+1) face sets.
    pub fn vector(v: &MacVectorField, h: f64) -> Self {
        let (nx, ny) = (v.nx, v.ny);
        let (x, y) = match v.topology {
            Topology::Walled => (v.x.clone(), v.y.clone()),
            Topology::Periodic => {
                let mut x = Vec::with_capacity((nx + 1) * ny);
                for j in 0..ny {
                    x.extend_from_slice(&v.x[j * nx..(j + 1) * nx]);
                    x.push(v.x[j * nx]);
                }
                let mut y = v.y.clone();
                y.extend_from_slice(&v.y[..nx]);
                (x, y)
            }
        };
        FieldFile {
            h,
            l: nx as f64 * h,
            config_hash: None,
            data: FieldData::VectorMac { nx, ny, x, y },
        }
    }

    pub fn with_hash(mut self, hash: &str) -> Self {
        self.config_hash = Some(hash.to_string());
        self
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        let (kind, nx, ny) = match &self.data {
            FieldData::Scalar { nx, ny, .. } => ("scalar", *nx, *ny),
            FieldData::VectorMac { nx, ny, .. } => ("vector_mac", *nx, *ny),
        };
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "kind={kind}")?;
        writeln!(w, "nx={nx} ny={ny} h={:?} L={:?}", self.h, self.l)?;
        if let Some(hash) = &self.config_hash {
            writeln!(w, "config_hash={hash}")?;
        }
        let mut buf = Vec::new();
        let mut put = |vals: &[f64]| {
            vals.iter()
                .for_each(|v| buf.extend_from_slice(&v.to_le_bytes()))
        };
        match &self.data {
            FieldData::Scalar { values, .. } => put(values),
            FieldData::VectorMac { x, y, .. } => {
                put(x);
                put(y);
            }
        }
        w.write_all(&buf)
    }

    pub fn read_from(r: &mut impl BufRead) -> Result<Self, GridError> {
        let bad = |m: &str| GridError::Format(m.to_string());
        let mut line = String::new();
        let mut next_line = |r: &mut dyn BufRead| -> Result<String, GridError> {
            line.clear();
            r.read_line(&mut line)
                .map_err(|e| GridError::Format(e.to_string()))?;
            Ok(line.trim_end_matches('\n').to_string())
        };
        if next_line(r)? != MAGIC {
            return Err(bad("missing EKFIELD1 magic"));
        }
        let kind = next_line(r)?;
        let kind = kind
            .strip_prefix("kind=")
            .ok_or_else(|| bad("missing kind"))?
            .to_string();
        let dims = next_line(r)?;
        let mut nx = None;
        let mut ny = None;
        let mut h = None;
        let mut l = None;
        for tok in dims.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| bad("bad dimension token"))?;
            match k {
                "nx" => nx = v.parse::<usize>().ok(),
                "ny" => ny = v.parse::<usize>().ok(),
                "h" => h = v.parse::<f64>().ok(),
                "L" => l = v.parse::<f64>().ok(),
                _ => return Err(bad("unknown dimension key")),
            }
        }
        let (nx, ny, h, l) = match (nx, ny, h, l) {
            (Some(a), Some(b), Some(c), Some(d)) => (a, b, c, d),
            _ => return Err(bad("incomplete dimension line")),
        };
        let mut config_hash = None;
        if r.fill_buf()
            .map_err(|e| GridError::Format(e.to_string()))?
            .starts_with(b"config_hash=")
        {
            let l = next_line(r)?;
            config_hash = Some(l["config_hash=".len()..].to_string());
        }
        let mut take = |count: usize| -> Result<Vec<f64>, GridError> {
            let mut bytes = vec![0u8; count * 8];
            r.read_exact(&mut bytes)
                .map_err(|e| GridError::Format(e.to_string()))?;
            Ok(bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };
        let data = match kind.as_str() {
            "scalar" => FieldData::Scalar {
                nx,
                ny,
                values: take(nx * ny)?,
            },
            "vector_mac" => {
                let x = take((nx + 1) * ny)?;
                let y = take(nx * (ny + 1))?;
                FieldData::VectorMac { nx, ny, x, y }
            }
            _ => return Err(bad("unknown kind")),
        };
        Ok(FieldFile {
            h,
            l,
            config_hash,
            data,
        })
    }

    pub fn to_scalar(&self) -> Option<ScalarField> {
        match &self.data {
            FieldData::Scalar { nx, ny, values } => Some(ScalarField {
                nx: *nx,
                ny: *ny,
                data: values.clone(),
            }),
            _ => None,
        }
    }

    pub fn to_vector(&self, topology: Topology) -> Option<MacVectorField> {
        let FieldData::VectorMac { nx, ny, x, y } = &self.data else {
            return None;
        };
        let (nx, ny) = (*nx, *ny);
        Some(match topology {
            Topology::Walled => MacVectorField {
                nx,
                ny,
                topology,
                x: x.clone(),
                y: y.clone(),
            },
            Topology::Periodic => {
                let mut xs = Vec::with_capacity(nx * ny);
                for j in 0..ny {
                    xs.extend_from_slice(&x[j * (nx + 1)..j * (nx + 1) + nx]);
                }
                MacVectorField {
                    nx,
                    ny,
                    topology,
                    x: xs,
                    y: y[..nx * ny].to_vec(),
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_round_trip_periodic() {
        let mut v = MacVectorField::zeros(3, 2, Topology::Periodic);
        for (k, x) in v.x.iter_mut().enumerate() {
            *x = k as f64 + 0.25;
        }
        for (k, y) in v.y.iter_mut().enumerate() {
            *y = -(k as f64) / 3.0;
        }
        let file = FieldFile::vector(&v, 0.5).with_hash("abc");
        let mut bytes = Vec::new();
        file.write_to(&mut bytes).unwrap();
        let back = FieldFile::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.to_vector(Topology::Periodic).unwrap(), v);
        match back.data {
            FieldData::VectorMac { x, y, .. } => {
                assert_eq!(x.len(), 4 * 2);
                assert_eq!(y.len(), 3 * 3);
                assert_eq!(x[3], x[0]);
            }
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn scalar_round_trip_without_hash() {
        let s = ScalarField {
            nx: 2,
            ny: 2,
            data: vec![1.0, -2.0, 3.5, 1e-300],
        };
        let mut bytes = Vec::new();
        FieldFile::scalar(&s, 0.1).write_to(&mut bytes).unwrap();
        let back = FieldFile::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back.to_scalar().unwrap(), s);
        assert_eq!(back.config_hash, None);
    }
}
