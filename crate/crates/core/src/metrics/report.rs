//! Plain-text metric tables.

use serde::Serialize;

/// Marker printed in place of the sentence-embedding metric.
pub const USE_MARKER: &str = "n/a (out of scope)";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub system: String,
    /// Mean METEOR in `[0, 1]`; printed on a 0..100 scale.
    pub meteor: f64,
    pub bleu: f64,
    /// `None` prints as a dash (the reference row).
    pub t: Option<f64>,
    pub p: Option<f64>,
}

/// Tab-separated table: `system, METEOR, USE, BLEU, t, p`.
pub fn format_table(rows: &[ReportRow]) -> String {
    let mut out = String::from("system\tMETEOR\tUSE\tBLEU\tt\tp\n");
    for r in rows {
        let num = |v: Option<f64>, digits: usize| match v {
            Some(x) => format!("{x:.digits$}"),
            None => "\u{2014}".to_string(),
        };
        out.push_str(&format!(
            "{}\t{:.2}\t{}\t{:.2}\t{}\t{}\n",
            r.system,
            100.0 * r.meteor,
            USE_MARKER,
            r.bleu,
            num(r.t, 3),
            num(r.p, 4)
        ));
    }
    out
}
