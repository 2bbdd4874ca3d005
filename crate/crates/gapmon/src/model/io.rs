//! Model bundle file format: a single JSON document with top-level keys
//! `alphabet`, `hmm` (`pi`/`A`/`B`), optional `dfsm` (`states`, `delta`,
//! `initial`, `verdict`, `absorbing_violations`), optional `peek`
//! (`values`/`C`), and `gap_dists`.
//!
//! DFSM transitions are written as one map per state, keyed by symbol name
//! and pointing at destination state names. Gap distributions carry either
//! an explicit `mass` list of `[length, probability]` pairs or a `geometric`
//! parameter that is truncated and renormalized at load time.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Alphabet, Dfsm, GapDist, Hmm, ModelBundle, PeekModel, Verdict};
use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleFile {
    alphabet: Vec<String>,
    hmm: HmmFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dfsm: Option<DfsmFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    peek: Option<PeekFile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    gap_dists: Vec<GapDistFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HmmFile {
    pi: Vec<f64>,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DfsmFile {
    states: Vec<String>,
    delta: Vec<BTreeMap<String, String>>,
    initial: String,
    verdict: Vec<Verdict>,
    #[serde(default)]
    absorbing_violations: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PeekFile {
    values: Vec<String>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GapDistFile {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mass: Option<Vec<(u32, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    geometric: Option<f64>,
}

fn parse_err(origin: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        origin: origin.to_string(),
        message: message.into(),
    }
}

fn resolve_dfsm(file: DfsmFile, alphabet: &Alphabet, origin: &str) -> Result<Dfsm> {
    let q = file.states.len();
    let k = alphabet.len();
    let state_index = |name: &str| file.states.iter().position(|s| s == name);

    let mut delta: Vec<Vec<usize>> = Vec::with_capacity(file.delta.len());
    for (i, row) in file.delta.iter().enumerate() {
        let mut cells: Vec<Option<usize>> = vec![None; k];
        for (sym, dest) in row {
            let col = alphabet.index_of(sym).ok_or_else(|| {
                parse_err(origin, format!("unknown symbol {sym:?} in dfsm.delta[{i}]"))
            })?;
            let to = state_index(dest).ok_or_else(|| {
                parse_err(origin, format!("unknown state {dest:?} in dfsm.delta[{i}][{sym}]"))
            })?;
            cells[col] = Some(to);
        }
        let mut resolved = Vec::with_capacity(k);
        for (col, cell) in cells.into_iter().enumerate() {
            match cell {
                Some(to) => resolved.push(to),
                None => {
                    return Err(Error::InvalidModel {
                        at: format!("dfsm.delta[{i}][{}]", alphabet.symbol(col)),
                        reason: "missing transition".into(),
                    })
                }
            }
        }
        delta.push(resolved);
    }
    if delta.len() != q {
        return Err(Error::InvalidModel {
            at: "dfsm.delta".into(),
            reason: format!("expected {q} rows, found {}", delta.len()),
        });
    }

    let initial = state_index(&file.initial)
        .ok_or_else(|| parse_err(origin, format!("unknown initial state {:?}", file.initial)))?;

    Ok(Dfsm {
        states: file.states,
        alphabet: alphabet.clone(),
        delta,
        initial,
        verdict: file.verdict,
        absorbing_violations: file.absorbing_violations,
    })
}

fn resolve_gap_dist(file: GapDistFile, origin: &str) -> Result<GapDist> {
    match (file.mass, file.geometric) {
        (Some(mass), None) => GapDist::new(file.id, mass),
        (None, Some(p)) => GapDist::geometric(file.id, p),
        (Some(_), Some(_)) => Err(parse_err(
            origin,
            format!("gap distribution {:?} declares both mass and geometric", file.id),
        )),
        (None, None) => Err(parse_err(
            origin,
            format!("gap distribution {:?} declares neither mass nor geometric", file.id),
        )),
    }
}

fn resolve_bundle(file: BundleFile, origin: &str) -> Result<ModelBundle> {
    let alphabet = Alphabet::new(file.alphabet)?;
    let hmm = Hmm {
        pi: file.hmm.pi,
        a: file.hmm.a,
        b: file.hmm.b,
        alphabet: alphabet.clone(),
    };
    let dfsm = file
        .dfsm
        .map(|d| resolve_dfsm(d, &alphabet, origin))
        .transpose()?;
    let peek = file.peek.map(|p| PeekModel {
        values: p.values,
        c: p.c,
    });
    let gap_dists = file
        .gap_dists
        .into_iter()
        .map(|g| resolve_gap_dist(g, origin))
        .collect::<Result<Vec<_>>>()?;
    let bundle = ModelBundle {
        hmm,
        dfsm,
        peek,
        gap_dists,
    };
    bundle.validate()?;
    Ok(bundle)
}

fn bundle_to_file(bundle: &ModelBundle) -> BundleFile {
    let alphabet = &bundle.hmm.alphabet;
    BundleFile {
        alphabet: alphabet.symbols().to_vec(),
        hmm: HmmFile {
            pi: bundle.hmm.pi.clone(),
            a: bundle.hmm.a.clone(),
            b: bundle.hmm.b.clone(),
        },
        dfsm: bundle.dfsm.as_ref().map(|dfsm| DfsmFile {
            states: dfsm.states.clone(),
            delta: dfsm
                .delta
                .iter()
                .map(|row| {
                    row.iter()
                        .enumerate()
                        .map(|(col, &to)| (alphabet.symbol(col).to_string(), dfsm.states[to].clone()))
                        .collect()
                })
                .collect(),
            initial: dfsm.states[dfsm.initial].clone(),
            verdict: dfsm.verdict.clone(),
            absorbing_violations: dfsm.absorbing_violations,
        }),
        peek: bundle.peek.as_ref().map(|p| PeekFile {
            values: p.values.clone(),
            c: p.c.clone(),
        }),
        gap_dists: bundle
            .gap_dists
            .iter()
            .map(|g| GapDistFile {
                id: g.id.clone(),
                mass: Some(g.mass.clone()),
                geometric: None,
            })
            .collect(),
    }
}

/// Canonical compact JSON bytes, the input of [`ModelBundle::digest`].
pub(crate) fn to_canonical_json(bundle: &ModelBundle) -> Vec<u8> {
    serde_json::to_vec(&bundle_to_file(bundle)).expect("bundle serialization cannot fail")
}

/// Parse a model bundle from a JSON string. `origin` names the source in
/// error messages.
pub fn load_model_str(text: &str, origin: &str) -> Result<ModelBundle> {
    let file: BundleFile =
        serde_json::from_str(text).map_err(|e| parse_err(origin, e.to_string()))?;
    resolve_bundle(file, origin)
}

/// Load and validate a model bundle file.
pub fn load_model(path: impl AsRef<Path>) -> Result<ModelBundle> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    let text = fs::read_to_string(path)
        .map_err(|e| parse_err(&origin, format!("cannot read file: {e}")))?;
    load_model_str(&text, &origin)
}

/// Serialize a bundle to pretty JSON. Probabilities keep full precision, so
/// save-then-load reproduces every matrix bit-exactly.
pub fn model_to_string(bundle: &ModelBundle) -> String {
    let mut text = serde_json::to_string_pretty(&bundle_to_file(bundle))
        .expect("bundle serialization cannot fail");
    text.push('\n');
    text
}

/// Write a model bundle file.
pub fn save_model(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model_to_string(bundle))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::m1_bundle;

    #[test]
    fn round_trip_is_bit_exact() {
        let bundle = m1_bundle();
        let text = model_to_string(&bundle);
        let loaded = load_model_str(&text, "mem").unwrap();
        assert_eq!(loaded, bundle);
        assert_eq!(loaded.digest(), bundle.digest());
    }

    #[test]
    fn unknown_symbol_in_delta_is_a_parse_error() {
        let bundle = m1_bundle();
        let text = model_to_string(&bundle).replace("\"a\": \"s1\"", "\"z\": \"s1\"");
        let err = load_model_str(&text, "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "got {err:?}");
    }

    #[test]
    fn negative_probability_is_invalid_model() {
        let bundle = m1_bundle();
        let text = model_to_string(&bundle).replacen("1.0", "-1.0", 1);
        let err = load_model_str(&text, "mem").unwrap_err();
        assert!(matches!(err, Error::InvalidModel { .. }), "got {err:?}");
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let bundle = m1_bundle();
        let text = model_to_string(&bundle);
        let err = load_model_str(&text[..text.len() / 2], "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "got {err:?}");
    }

    #[test]
    fn geometric_dist_loads_truncated() {
        let text = r#"{
            "alphabet": ["a"],
            "hmm": {"pi": [1.0], "A": [[1.0]], "B": [[1.0]]},
            "gap_dists": [{"id": "g", "geometric": 0.5}]
        }"#;
        let bundle = load_model_str(text, "mem").unwrap();
        let g = bundle.gap_dist("g").unwrap();
        let total: f64 = g.mass.iter().map(|&(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
