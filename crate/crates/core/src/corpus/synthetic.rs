//! Seeded generator for small (code, summary) corpora in which the summary is
//! a function of one statement in the middle of each function body.
//!
//! Every function is laid out as
//!
//! ```text
//! header <NL> filler <NL> ... key statement <NL> ... filler <NL> return <NL>
//! ```
//!
//! with the key statement at index `statement_count / 2`. Fillers draw only
//! from variable and number pools, so the key statement is the only place the
//! template slot tokens occur.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::vocab::NL;
use crate::corpus::Sample;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotValue {
    /// Token placed in the code.
    pub code: String,
    /// Words placed in the summary.
    pub words: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Template {
    pub name: String,
    /// Whitespace-separated tokens; `{slot}` tokens are substituted.
    pub key_statement: String,
    pub summary: String,
    pub slots: BTreeMap<String, Vec<SlotValue>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub projects: usize,
    pub samples_per_project: usize,
    /// Inclusive range of statements per function, header and return included.
    pub min_statements: usize,
    pub max_statements: usize,
    pub templates: Vec<Template>,
    /// Filler statement patterns using `{var}` and `{num}`.
    pub fillers: Vec<String>,
    pub method_names: Vec<String>,
}

fn slot_values(pairs: &[(&str, &str)]) -> Vec<SlotValue> {
    pairs
        .iter()
        .map(|(c, w)| SlotValue {
            code: c.to_string(),
            words: w.to_string(),
        })
        .collect()
}

const VARS: [&str; 6] = ["i", "j", "k", "n", "tmp", "count"];

impl Default for SyntheticSpec {
    fn default() -> Self {
        let compute = Template {
            name: "compute".into(),
            key_statement: "result = {op} ( {obj} ) ;".into(),
            summary: "{op} the {obj}".into(),
            slots: BTreeMap::from([
                (
                    "op".into(),
                    slot_values(&[
                        ("sum", "sums"),
                        ("max", "finds max of"),
                        ("sort", "sorts"),
                        ("reverse", "reverses"),
                        ("count", "counts"),
                    ]),
                ),
                (
                    "obj".into(),
                    slot_values(&[
                        ("items", "items"),
                        ("scores", "scores"),
                        ("names", "names"),
                        ("prices", "prices"),
                    ]),
                ),
            ]),
        };
        let store = Template {
            name: "store".into(),
            key_statement: "this . {field} = {src} . get ( ) ;".into(),
            summary: "sets {field} from {src}".into(),
            slots: BTreeMap::from([
                (
                    "field".into(),
                    slot_values(&[
                        ("width", "width"),
                        ("height", "height"),
                        ("label", "label"),
                        ("owner", "owner"),
                    ]),
                ),
                (
                    "src".into(),
                    slot_values(&[
                        ("config", "config"),
                        ("request", "request"),
                        ("cache", "cache"),
                    ]),
                ),
            ]),
        };
        SyntheticSpec {
            projects: 10,
            samples_per_project: 20,
            min_statements: 5,
            max_statements: 7,
            templates: vec![compute, store],
            fillers: vec![
                "int {var} = {num} ;".into(),
                "{var} = {var} + {num} ;".into(),
                "if ( {var} > {num} ) {var} = {num} ;".into(),
                "log ( {var} ) ;".into(),
            ],
            method_names: ["run", "apply", "handle", "process", "update"]
                .map(String::from)
                .to_vec(),
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.projects == 0 || self.samples_per_project == 0 {
            return Err(Error::usage("synthetic corpus needs projects and samples"));
        }
        if self.min_statements < 3 || self.max_statements < self.min_statements {
            return Err(Error::usage(
                "statement range must satisfy 3 <= min_statements <= max_statements",
            ));
        }
        if self.templates.is_empty() || self.fillers.is_empty() || self.method_names.is_empty() {
            return Err(Error::usage("synthetic spec needs templates, fillers and method names"));
        }
        for t in &self.templates {
            for tok in t.key_statement.split_whitespace().chain(t.summary.split_whitespace()) {
                if let Some(slot) = slot_name(tok) {
                    if t.slots.get(slot).is_none_or(|v| v.is_empty()) {
                        return Err(Error::usage(format!(
                            "template `{}` uses undefined slot `{slot}`",
                            t.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// `{name}` -> `name`.
pub fn slot_name(token: &str) -> Option<&str> {
    token.strip_prefix('{').and_then(|t| t.strip_suffix('}'))
}

fn render(pattern: &str, pick: impl Fn(&str) -> String) -> Vec<String> {
    pattern
        .split_whitespace()
        .flat_map(|tok| match slot_name(tok) {
            Some(slot) => pick(slot)
                .split_whitespace()
                .map(str::to_string)
                .collect::<Vec<_>>(),
            None => vec![tok.to_string()],
        })
        .collect()
}

fn filler(pattern: &str, rng: &mut ChaCha8Rng) -> Vec<String> {
    pattern
        .split_whitespace()
        .map(|tok| match tok {
            "{var}" => VARS.choose(rng).expect("non-empty").to_string(),
            "{num}" => rng.random_range(0..10).to_string(),
            other => other.to_string(),
        })
        .collect()
}

/// Builds the corpus in project order. The same spec and seed always give
/// the same samples.
pub fn generate_synthetic_corpus(spec: &SyntheticSpec, seed: u64) -> Result<Vec<Sample>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(spec.projects * spec.samples_per_project);
    for p in 0..spec.projects {
        let project_id = format!("proj{p:03}");
        for i in 0..spec.samples_per_project {
            let template = spec.templates.choose(&mut rng).expect("validated");
            let chosen: BTreeMap<&str, &SlotValue> = template
                .slots
                .iter()
                .map(|(k, v)| (k.as_str(), v.choose(&mut rng).expect("validated")))
                .collect();
            let count = rng.random_range(spec.min_statements..=spec.max_statements);
            let key_at = count / 2;
            let mut code: Vec<String> = Vec::new();
            for s in 0..count {
                let stmt = if s == 0 {
                    let name = spec.method_names.choose(&mut rng).expect("validated");
                    vec!["void".into(), name.clone(), "(".into(), ")".into(), "{".into()]
                } else if s == key_at {
                    render(&template.key_statement, |slot| chosen[slot].code.clone())
                } else if s == count - 1 {
                    vec!["return".into(), "result".into(), ";".into()]
                } else {
                    filler(spec.fillers.choose(&mut rng).expect("validated"), &mut rng)
                };
                code.extend(stmt);
                code.push(NL.to_string());
            }
            let summary = render(&template.summary, |slot| chosen[slot].words.clone());
            out.push(Sample {
                sample_id: format!("{project_id}-{i:04}"),
                project_id: project_id.clone(),
                code_tokens: code,
                summary_tokens: summary,
            });
        }
    }
    Ok(out)
}
