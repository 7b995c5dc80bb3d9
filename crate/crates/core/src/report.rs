//! Static HTML overview and growth CSV.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bush::escape_xml as escape;
use crate::matrix::SparseCountMatrix;
use crate::nmf::{top_loadings, LoadingAxis, StoredModel};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DumpSummary {
    pub dump_id: String,
    pub total_citations: u64,
    pub n_articles: usize,
    pub n_journal_columns: usize,
}

pub fn summarize_dump(m: &SparseCountMatrix, dump_id: &str) -> DumpSummary {
    let (n_articles, n_journal_columns) = m.shape();
    DumpSummary {
        dump_id: dump_id.to_string(),
        total_citations: m.total_count(),
        n_articles,
        n_journal_columns,
    }
}

/// Header plus one row per summary, in input order.
pub fn write_growth_csv(summaries: &[DumpSummary]) -> String {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    writer
        .write_record(["dump_id", "total_citations", "n_articles", "n_journal_columns"])
        .expect("in-memory write");
    for s in summaries {
        writer
            .write_record([
                s.dump_id.clone(),
                s.total_citations.to_string(),
                s.n_articles.to_string(),
                s.n_journal_columns.to_string(),
            ])
            .expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

const STYLE: &str = "body{font-family:sans-serif;margin:2em;color:#222}\
table{border-collapse:collapse;margin:0 0 1.5em 0}\
th,td{border:1px solid #bbb;padding:3px 8px;text-align:left;vertical-align:top}\
th{background:#eee}td.num{text-align:right}\
p.empty{color:#888;font-style:italic}";

fn fmt_loading(v: f64) -> String {
    format!("{v:.4}")
}

/// Single self-contained page: dump summaries, most cited journals and one
/// table per cluster with its hub articles and authoritative journals.
pub fn render_html_report(
    models: &[StoredModel],
    m: &SparseCountMatrix,
    summaries: &[DumpSummary],
    top_n: usize,
) -> String {
    let mut h = String::new();
    h.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n");
    h.push_str("<title>Journal citations from Wikipedia</title>\n");
    writeln!(h, "<style>{STYLE}</style>\n</head>\n<body>").unwrap();
    h.push_str("<h1>Journal citations from Wikipedia</h1>\n");

    h.push_str("<section id=\"dumps\">\n<h2>Dumps</h2>\n");
    if summaries.is_empty() {
        h.push_str("<p class=\"empty\">No data.</p>\n");
    } else {
        h.push_str("<table class=\"summary\">\n<tr><th>Dump</th><th>Citations</th><th>Articles</th><th>Journal columns</th></tr>\n");
        for s in summaries {
            writeln!(
                h,
                "<tr><td>{}</td><td class=\"num\">{}</td><td class=\"num\">{}</td><td class=\"num\">{}</td></tr>",
                escape(&s.dump_id),
                s.total_citations,
                s.n_articles,
                s.n_journal_columns
            )
            .unwrap();
        }
        h.push_str("</table>\n");
    }
    h.push_str("</section>\n");

    h.push_str("<section id=\"top-journals\">\n<h2>Most cited journals</h2>\n");
    let top = m.top_cited_journals(top_n);
    if top.is_empty() {
        h.push_str("<p class=\"empty\">No data.</p>\n");
    } else {
        h.push_str("<table class=\"top-journals\">\n<tr><th>Citations</th><th>Journal name</th></tr>\n");
        for (journal, count) in &top {
            writeln!(
                h,
                "<tr><td class=\"num\">{count}</td><td>{}</td></tr>",
                escape(journal)
            )
            .unwrap();
        }
        h.push_str("</table>\n");
    }
    h.push_str("</section>\n");

    h.push_str("<section id=\"clusters\">\n<h2>Clusters</h2>\n");
    if models.is_empty() {
        h.push_str("<p class=\"empty\">No data.</p>\n");
    }
    for stored in models {
        let model = &stored.model;
        writeln!(
            h,
            "<section class=\"model\" id=\"k{}\">\n<h3>{} cluster{} (reconstruction error {:.6})</h3>",
            model.k,
            model.k,
            if model.k == 1 { "" } else { "s" },
            model.final_error
        )
        .unwrap();
        for c in 0..model.k {
            let hubs =
                top_loadings(model, c, LoadingAxis::Articles, top_n, &stored.row_labels).unwrap_or_default();
            let authorities =
                top_loadings(model, c, LoadingAxis::Journals, top_n, &stored.col_labels).unwrap_or_default();
            writeln!(
                h,
                "<table class=\"cluster\">\n<tr><th>Cluster</th><th>Wikipedia hub articles</th><th>Loading</th><th>Authoritative journals</th><th>Loading</th></tr>"
            )
            .unwrap();
            for r in 0..hubs.len().max(authorities.len()) {
                let cluster = if r == 0 {
                    (c + 1).to_string()
                } else {
                    String::new()
                };
                let (hub, hub_l) = hubs
                    .get(r)
                    .map(|(l, v)| (escape(l), fmt_loading(*v)))
                    .unwrap_or_default();
                let (auth, auth_l) = authorities
                    .get(r)
                    .map(|(l, v)| (escape(l), fmt_loading(*v)))
                    .unwrap_or_default();
                writeln!(
                    h,
                    "<tr><td>{cluster}</td><td>{hub}</td><td class=\"num\">{hub_l}</td><td>{auth}</td><td class=\"num\">{auth_l}</td></tr>"
                )
                .unwrap();
            }
            h.push_str("</table>\n");
        }
        h.push_str("</section>\n");
    }
    h.push_str("</section>\n</body>\n</html>\n");
    h
}
