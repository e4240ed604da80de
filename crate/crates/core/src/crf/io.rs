//! Versioned JSON model files.
//!
//! Non-zero state weights are listed as `[attribute, label, weight]` triples
//! sorted by attribute then label; every weight is written with 17
//! significant digits so a load restores it bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Deserialize;
use serde_json::Value;

use super::lattice::{Row, NUM_LABELS};
use super::{CrfModel, ModelMetadata, Weights};
use crate::error::{Error, Result};
use crate::spans::Label;

pub const FORMAT_VERSION: u32 = 1;

fn num(w: f64) -> String {
    format!("{w:.16e}")
}

fn row(r: &Row) -> String {
    let items: Vec<String> = r.iter().map(|&w| num(w)).collect();
    format!("[{}]", items.join(", "))
}

pub fn write_model<W: Write>(model: &CrfModel, mut w: W) -> Result<()> {
    if !model.weights.is_finite() {
        return Err(Error::CorruptModel(
            "refusing to save non-finite weights".into(),
        ));
    }
    let io = |e| Error::io("<model>", e);
    let json = |v: &str| serde_json::to_string(v).expect("strings serialize");
    let labels: Vec<String> = Label::ALL.iter().map(|l| json(l.as_str())).collect();

    writeln!(w, "{{").map_err(io)?;
    writeln!(w, "  \"version\": {FORMAT_VERSION},").map_err(io)?;
    writeln!(w, "  \"labels\": [{}],", labels.join(", ")).map_err(io)?;
    writeln!(w, "  \"state_weights\": [").map_err(io)?;
    let mut first = true;
    for (attr, weights) in model.attributes().iter().zip(&model.weights.state) {
        for (label, &wt) in Label::ALL.iter().zip(weights) {
            if wt == 0.0 {
                continue;
            }
            if !first {
                writeln!(w, ",").map_err(io)?;
            }
            first = false;
            write!(w, "    [{}, \"{}\", {}]", json(attr), label, num(wt)).map_err(io)?;
        }
    }
    if !first {
        writeln!(w).map_err(io)?;
    }
    writeln!(w, "  ],").map_err(io)?;
    let pot = &model.weights.potentials;
    let transitions: Vec<String> = pot.transitions.iter().map(row).collect();
    writeln!(w, "  \"transitions\": [{}],", transitions.join(", ")).map_err(io)?;
    writeln!(w, "  \"start\": {},", row(&pot.start)).map_err(io)?;
    writeln!(w, "  \"end\": {},", row(&pot.end)).map_err(io)?;
    let meta = serde_json::to_string(&model.metadata).expect("metadata serializes");
    writeln!(w, "  \"metadata\": {meta}").map_err(io)?;
    writeln!(w, "}}").map_err(io)?;
    Ok(())
}

pub fn save_model(model: &CrfModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_model(model, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    #[allow(dead_code)]
    version: u32,
    labels: Vec<String>,
    state_weights: Vec<(String, String, f64)>,
    transitions: Vec<Vec<f64>>,
    start: Vec<f64>,
    end: Vec<f64>,
    metadata: ModelMetadata,
}

fn fixed_row(v: &[f64], what: &str) -> Result<Row> {
    v.try_into()
        .map_err(|_| Error::CorruptModel(format!("{what} must have {NUM_LABELS} entries")))
}

pub fn read_model<R: Read>(reader: R) -> Result<CrfModel> {
    let value: Value =
        serde_json::from_reader(reader).map_err(|e| Error::CorruptModel(e.to_string()))?;
    match value.get("version") {
        Some(Value::Number(n)) if n.as_u64() == Some(FORMAT_VERSION as u64) => {}
        Some(other) => {
            return Err(Error::ModelVersion {
                found: other.to_string(),
                expected: FORMAT_VERSION,
            })
        }
        None => return Err(Error::CorruptModel("missing version".into())),
    }
    let file: ModelFile =
        serde_json::from_value(value).map_err(|e| Error::CorruptModel(e.to_string()))?;

    let expected: Vec<&str> = Label::ALL.iter().map(|l| l.as_str()).collect();
    if file.labels != expected {
        return Err(Error::CorruptModel(format!(
            "labels must be {expected:?}, got {:?}",
            file.labels
        )));
    }
    if file.transitions.len() != NUM_LABELS {
        return Err(Error::CorruptModel("transitions must be 5x5".into()));
    }

    let mut attributes: Vec<String> = Vec::new();
    let mut state: Vec<Row> = Vec::new();
    for (attr, label, w) in file.state_weights {
        let label: Label = label.parse().map_err(Error::CorruptModel)?;
        match attributes.last() {
            Some(last) if *last == attr => {}
            Some(last) if *last > attr => {
                return Err(Error::CorruptModel(format!(
                    "state weights not sorted at {attr:?}"
                )))
            }
            _ => {
                attributes.push(attr);
                state.push([0.0; NUM_LABELS]);
            }
        }
        state.last_mut().unwrap()[label.index()] = w;
    }

    let mut weights = Weights::zeros(0);
    weights.state = state;
    for (dst, src) in weights
        .potentials
        .transitions
        .iter_mut()
        .zip(&file.transitions)
    {
        *dst = fixed_row(src, "transition row")?;
    }
    weights.potentials.start = fixed_row(&file.start, "start")?;
    weights.potentials.end = fixed_row(&file.end, "end")?;
    if !weights.is_finite() {
        return Err(Error::CorruptModel("non-finite weight".into()));
    }
    Ok(CrfModel::from_parts(attributes, weights, file.metadata))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<CrfModel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_model() -> CrfModel {
        let mut m = CrfModel::new(vec![
            "bias".into(),
            "0:special=End".into(),
            "q=\"x\"".into(),
        ]);
        m.set_state_weight("bias", Label::U, 0.1);
        m.set_state_weight("0:special=End", Label::L, -1.0 / 3.0);
        m.set_state_weight("q=\"x\"", Label::O, 1e-300);
        m.potentials_mut().transitions[0][2] = std::f64::consts::PI;
        m.potentials_mut().end[4] = -2.5;
        m
    }

    #[test]
    fn round_trip_is_exact() {
        let m = small_model();
        let mut buf = Vec::new();
        write_model(&m, &mut buf).unwrap();
        let back = read_model(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        let mut again = Vec::new();
        write_model(&back, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn unknown_version() {
        let mut buf = Vec::new();
        write_model(&small_model(), &mut buf).unwrap();
        let text = String::from_utf8(buf)
            .unwrap()
            .replace("\"version\": 1", "\"version\": 99");
        assert!(matches!(
            read_model(text.as_bytes()),
            Err(Error::ModelVersion { .. })
        ));
    }

    #[test]
    fn corrupt_file() {
        assert!(matches!(
            read_model("{\"version\": 1, \"labels\": ".as_bytes()),
            Err(Error::CorruptModel(_))
        ));
        assert!(matches!(
            read_model("[]".as_bytes()),
            Err(Error::CorruptModel(_))
        ));
    }
}
