//! Template parsing and `cite journal` extraction from raw wikitext.

use std::collections::HashSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dump::WikiPage;

/// The only template name selected for citation extraction, in normalized form.
pub const CITE_JOURNAL: &str = "cite journal";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateParam {
    /// `None` for positional parameters.
    pub key: Option<String>,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateInstance {
    /// Trimmed name as written.
    pub name: String,
    pub params: Vec<TemplateParam>,
    /// Byte range `[start, end)` of `{{ ... }}` in the parsed text.
    pub span: (usize, usize),
}

impl TemplateInstance {
    pub fn normalized_name(&self) -> String {
        normalize_template_name(&self.name)
    }

    /// First named parameter with this exact key.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.params
            .iter()
            .find(|p| p.key.as_deref() == Some(key))
            .map(|p| p.value.as_str())
    }

    pub fn is_cite_journal(&self) -> bool {
        self.normalized_name() == CITE_JOURNAL
    }
}

/// Case-folds and collapses whitespace; underscores count as spaces the way
/// MediaWiki treats them in page names.
pub fn normalize_template_name(name: &str) -> String {
    name.replace('_', " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Parses every template, nested ones included, ordered by start offset.
pub fn parse_templates(wikitext: &str) -> Vec<TemplateInstance> {
    parse_templates_counted(wikitext).0
}

/// Like [`parse_templates`], also returning the number of `{{` openers that
/// were never closed and therefore skipped.
pub fn parse_templates_counted(wikitext: &str) -> (Vec<TemplateInstance>, usize) {
    let bytes = wikitext.as_bytes();
    let mut open: Vec<usize> = Vec::new();
    let mut spans: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i + 1 < bytes.len() {
        match (bytes[i], bytes[i + 1]) {
            (b'{', b'{') => {
                open.push(i);
                i += 2;
            }
            (b'}', b'}') => {
                if let Some(start) = open.pop() {
                    spans.push((start, i + 2));
                }
                i += 2;
            }
            _ => i += 1,
        }
    }
    spans.sort_unstable();
    let instances = spans
        .into_iter()
        .map(|span| build_instance(wikitext, span))
        .collect();
    (instances, open.len())
}

fn build_instance(text: &str, span: (usize, usize)) -> TemplateInstance {
    let inner = &text[span.0 + 2..span.1 - 2];
    let mut segments = split_top_level(inner).into_iter();
    let name = segments.next().unwrap_or_default().trim().to_string();
    let params = segments
        .map(|segment| match segment.find('=') {
            Some(eq) if !segment[..eq].trim().is_empty() && top_level_prefix(&segment[..eq]) => {
                TemplateParam {
                    key: Some(segment[..eq].trim().to_string()),
                    value: segment[eq + 1..].trim().to_string(),
                }
            }
            _ => TemplateParam {
                key: None,
                value: segment.to_string(),
            },
        })
        .collect();
    TemplateInstance { name, params, span }
}

/// A key may not contain the start of a nested template or link.
fn top_level_prefix(s: &str) -> bool {
    !s.contains("{{") && !s.contains("[[")
}

/// Splits on `|` outside nested `{{ }}` and `[[ ]]`.
fn split_top_level(inner: &str) -> Vec<&str> {
    let bytes = inner.as_bytes();
    let mut out = Vec::new();
    let (mut braces, mut links) = (0usize, 0usize);
    let mut last = 0;
    let mut i = 0;
    while i < bytes.len() {
        let pair = bytes.get(i + 1).map(|&b| (bytes[i], b));
        match pair {
            Some((b'{', b'{')) => {
                braces += 1;
                i += 2;
                continue;
            }
            Some((b'}', b'}')) if braces > 0 => {
                braces -= 1;
                i += 2;
                continue;
            }
            Some((b'[', b'[')) => {
                links += 1;
                i += 2;
                continue;
            }
            Some((b']', b']')) if links > 0 => {
                links -= 1;
                i += 2;
                continue;
            }
            _ => {}
        }
        if bytes[i] == b'|' && braces == 0 && links == 0 {
            out.push(&inner[last..i]);
            last = i + 1;
        }
        i += 1;
    }
    out.push(&inner[last..]);
    out
}

/// Removes `<!-- ... -->`; an unterminated comment runs to the end of the text.
pub fn strip_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("<!--") {
        out.push_str(&rest[..start]);
        match rest[start + 4..].find("-->") {
            Some(end) => rest = &rest[start + 4 + end + 3..],
            None => rest = "",
        }
    }
    out.push_str(rest);
    out
}

static LABELED_LINK: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\[\[[^\[\]|]*\|([^\[\]]*)\]\]").unwrap());
static PLAIN_LINK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[\[([^\[\]|]*)\]\]").unwrap());

/// Reduces a field value to plain text: links become their label (or
/// target), italic/bold quotes are dropped, whitespace is collapsed and one
/// trailing period is removed.
pub fn clean_field_value(value: &str) -> String {
    let s = LABELED_LINK.replace_all(value.trim(), "$1");
    let s = PLAIN_LINK.replace_all(&s, "$1");
    let s = s.replace("'''", "").replace("''", "");
    let mut s = s.split_whitespace().collect::<Vec<_>>().join(" ");
    if s.ends_with('.') {
        s.pop();
        s.truncate(s.trim_end().len());
    }
    s
}

/// One resolved `cite journal` occurrence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationInstance {
    #[serde(rename = "article")]
    pub article_title: String,
    /// Cleaned `journal` value; empty when the field is missing.
    #[serde(rename = "journal_raw")]
    pub raw_journal: String,
    pub dedup_key: String,
}

static REF_OPEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)<ref(\s[^>]*|\s*/)?>").unwrap());
static REF_CLOSE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)</ref\s*>").unwrap());
static REF_NAME: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"(?i)(?:^|\s)name\s*=\s*(?:"([^"]*)"|'([^']*)'|([^\s"'/>]+))"#).unwrap());

#[derive(Debug)]
struct RefRegion {
    /// Content range between `<ref ...>` and `</ref>`.
    content: (usize, usize),
    name: Option<String>,
}

fn ref_name(attrs: &str) -> Option<String> {
    REF_NAME.captures(attrs).and_then(|c| {
        c.get(1)
            .or_else(|| c.get(2))
            .or_else(|| c.get(3))
            .map(|m| m.as_str().to_string())
    })
}

/// Scans `<ref>` container tags; self-closing references are skipped.
fn scan_refs(text: &str) -> Vec<RefRegion> {
    let mut regions = Vec::new();
    let mut pos = 0;
    while let Some(open) = REF_OPEN.captures_at(text, pos) {
        let whole = open.get(0).unwrap();
        let attrs = open.get(1).map_or("", |m| m.as_str());
        if attrs.trim_end().ends_with('/') {
            pos = whole.end();
            continue;
        }
        match REF_CLOSE.find_at(text, whole.end()) {
            Some(close) => {
                regions.push(RefRegion {
                    content: (whole.end(), close.start()),
                    name: ref_name(attrs),
                });
                pos = close.end();
            }
            // Unterminated tag: not treated as a container.
            None => pos = whole.end(),
        }
    }
    regions
}

/// Key for a citation outside any named reference. It holds both quote
/// characters, which no parsed ref name can contain.
fn anonymous_key(start: usize) -> String {
    format!("#{start}\"'")
}

/// Per-worker counters; merge with [`ExtractDiagnostics::merge`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractDiagnostics {
    pub pages: u64,
    pub skipped_non_article: u64,
    pub unbalanced_braces: u64,
    pub cite_journal_templates: u64,
    pub citations: u64,
    pub duplicate_refs: u64,
}

impl ExtractDiagnostics {
    pub fn merge(&mut self, other: &ExtractDiagnostics) {
        self.pages += other.pages;
        self.skipped_non_article += other.skipped_non_article;
        self.unbalanced_braces += other.unbalanced_braces;
        self.cite_journal_templates += other.cite_journal_templates;
        self.citations += other.citations;
        self.duplicate_refs += other.duplicate_refs;
    }
}

/// Extracts citations from an article page. Pages outside namespace 0
/// yield nothing.
pub fn extract_citations(page: &WikiPage) -> Vec<CitationInstance> {
    extract_citations_counted(page, &mut ExtractDiagnostics::default())
}

pub fn extract_citations_counted(page: &WikiPage, diag: &mut ExtractDiagnostics) -> Vec<CitationInstance> {
    diag.pages += 1;
    if !page.is_article() {
        diag.skipped_non_article += 1;
        return Vec::new();
    }
    let text = strip_comments(&page.wikitext);
    let (templates, unmatched) = parse_templates_counted(&text);
    diag.unbalanced_braces += unmatched as u64;

    let regions = scan_refs(&text);
    let mut emitted: HashSet<String> = HashSet::new();
    let mut out = Vec::new();
    for template in templates.iter().filter(|t| t.is_cite_journal()) {
        diag.cite_journal_templates += 1;
        let (start, end) = template.span;
        let enclosing = regions
            .iter()
            .find(|r| r.content.0 <= start && end <= r.content.1);
        let key = enclosing
            .and_then(|r| r.name.clone())
            .unwrap_or_else(|| anonymous_key(start));
        if !emitted.insert(key.clone()) {
            diag.duplicate_refs += 1;
            continue;
        }
        out.push(CitationInstance {
            article_title: page.title.clone(),
            raw_journal: template.get("journal").map(clean_field_value).unwrap_or_default(),
            dedup_key: key,
        });
    }
    diag.citations += out.len() as u64;
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn article(text: &str) -> WikiPage {
        WikiPage {
            title: "A".into(),
            namespace: 0,
            wikitext: text.into(),
        }
    }

    fn named(k: &str, v: &str) -> TemplateParam {
        TemplateParam {
            key: Some(k.into()),
            value: v.into(),
        }
    }

    #[test]
    fn simple_template() {
        let t = parse_templates("{{cite journal | journal = Nature | year=2005}}");
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].name, "cite journal");
        assert_eq!(
            t[0].params,
            vec![named("journal", "Nature"), named("year", "2005")]
        );
    }

    #[test]
    fn pipe_inside_link_is_kept() {
        let t = parse_templates("{{cite journal|journal=[[Nature (journal)|Nature]]}}");
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].params, vec![named("journal", "[[Nature (journal)|Nature]]")]);
    }

    #[test]
    fn no_templates() {
        assert!(parse_templates("no templates here").is_empty());
    }

    #[test]
    fn nested_templates_are_reported_twice() {
        let text = "{{Infobox|ref={{cite journal|journal=Gene}}|x=1}}";
        let t = parse_templates(text);
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].name, "Infobox");
        assert_eq!(t[0].get("ref"), Some("{{cite journal|journal=Gene}}"));
        assert_eq!(t[0].get("x"), Some("1"));
        assert_eq!(t[1].get("journal"), Some("Gene"));
        assert_eq!(&text[t[1].span.0..t[1].span.1], "{{cite journal|journal=Gene}}");
    }

    #[test]
    fn positional_params_keep_whitespace() {
        let t = parse_templates("{{lang| fr | bonjour }}");
        assert_eq!(
            t[0].params[0],
            TemplateParam {
                key: None,
                value: " fr ".into()
            }
        );
        assert_eq!(t[0].params.len(), 2);
    }

    #[test]
    fn unmatched_opener_is_skipped_and_counted() {
        let (t, unmatched) = parse_templates_counted("{{a|{{b}} and {{c");
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].name, "b");
        assert_eq!(unmatched, 2);
        let (t, unmatched) = parse_templates_counted("}} {{x}}");
        assert_eq!((t.len(), unmatched), (1, 0));
    }

    #[test]
    fn clean_examples() {
        assert_eq!(clean_field_value("  The Lancet "), "The Lancet");
        assert_eq!(clean_field_value("[[Nature (journal)|Nature]]"), "Nature");
        assert_eq!(
            clean_field_value("''Proc R Soc Lond B Biol Sci.''"),
            "Proc R Soc Lond B Biol Sci"
        );
        assert_eq!(clean_field_value("[[Genomics]]"), "Genomics");
        assert_eq!(clean_field_value("'''J.''' \n Virol.."), "J. Virol.");
    }

    #[test]
    fn named_ref_is_counted_once() {
        let page = article("a<ref name=\"a\">{{cite journal|journal=Cell}}</ref> b <ref name=\"a\"/> c");
        let c = extract_citations(&page);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].raw_journal, "Cell");
        assert_eq!(c[0].dedup_key, "a");
    }

    #[test]
    fn bare_duplicates_are_distinct() {
        let page = article("{{cite journal|journal=Cell}} {{cite journal|journal=Cell}}");
        let c = extract_citations(&page);
        assert_eq!(c.len(), 2);
        assert_ne!(c[0].dedup_key, c[1].dedup_key);
    }

    #[test]
    fn name_match_is_case_insensitive() {
        let c = extract_citations(&article("{{Cite Journal|journal=Gene}}"));
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].raw_journal, "Gene");
        assert_eq!(
            extract_citations(&article("{{ cite_journal |journal=Gene}}")).len(),
            1
        );
        assert!(extract_citations(&article("{{citation|journal=Gene}}")).is_empty());
    }

    #[test]
    fn repeated_named_definitions_collapse() {
        let page = article(
            "<ref name='x'>{{cite journal|journal=A}}</ref><ref name=x>{{cite journal|journal=A}}</ref>",
        );
        assert_eq!(extract_citations(&page).len(), 1);
    }

    #[test]
    fn comments_and_other_namespaces_are_ignored() {
        let page = article("<!-- {{cite journal|journal=Cell}} -->{{cite journal|journal=Gene}}");
        let c = extract_citations(&page);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].raw_journal, "Gene");

        let mut talk = article("{{cite journal|journal=Gene}}");
        talk.namespace = 1;
        let mut diag = ExtractDiagnostics::default();
        assert!(extract_citations_counted(&talk, &mut diag).is_empty());
        assert_eq!(diag.skipped_non_article, 1);
    }

    #[test]
    fn missing_journal_is_empty() {
        let c = extract_citations(&article("{{cite journal|title=T}}"));
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].raw_journal, "");
    }

    #[test]
    fn anonymous_key_avoids_ref_names() {
        let plain = extract_citations(&article("{{cite journal|journal=A}}"));
        assert_eq!(plain[0].dedup_key, "#0\"'");
        let page = article("{{cite journal|journal=A}}<ref name=\"#0\"/><ref name='#0\"'/>");
        assert_eq!(extract_citations(&page), plain);
        let named = extract_citations(&article("<ref name='#0\"'>{{cite journal|journal=A}}</ref>"));
        assert_eq!(named[0].dedup_key, "#0\"");
    }

    #[test]
    fn references_tag_is_not_a_ref() {
        let page = article("{{cite journal|journal=A}}<references/>{{cite journal|journal=A}}");
        assert_eq!(extract_citations(&page).len(), 2);
    }

    #[test]
    fn strip_comments_unterminated() {
        assert_eq!(strip_comments("a<!--b-->c<!--d"), "ac");
    }
}
