//! Canonical journal names and their variants.
//!
//! File format:
//!
//! ```xml
//! <journals>
//!   <journal>
//!     <canonical>The Journal of Biological Chemistry</canonical>
//!     <variant>J Biol Chem</variant>
//!     <variant>J. Biol. Chem.</variant>
//!   </journal>
//! </journals>
//! ```

use std::collections::HashMap;
use std::path::Path;

use quick_xml::events::Event;
use quick_xml::Reader;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconEntry {
    pub canonical: String,
    pub variants: Vec<String>,
}

/// Immutable after construction.
#[derive(Debug, Clone, Default)]
pub struct JournalLexicon {
    entries: Vec<LexiconEntry>,
    lookup: HashMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedJournal {
    pub name: String,
    pub matched: bool,
}

/// Collapses whitespace and drops trailing periods, keeping case.
fn tidy(raw: &str) -> String {
    let collapsed = raw.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed.trim_end_matches(['.', ' ']).to_string()
}

/// Matching key: case-folded, whitespace-collapsed, trailing periods removed.
pub fn journal_key(raw: &str) -> String {
    tidy(&caseless::default_case_fold_str(raw))
}

impl JournalLexicon {
    pub fn from_entries(entries: Vec<LexiconEntry>) -> Result<Self> {
        let mut lookup: HashMap<String, usize> = HashMap::new();
        for (idx, entry) in entries.iter().enumerate() {
            for name in std::iter::once(&entry.canonical).chain(&entry.variants) {
                let key = journal_key(name);
                if key.is_empty() {
                    continue;
                }
                match lookup.get(&key) {
                    Some(&other) if entries[other].canonical != entry.canonical => {
                        return Err(Error::Collision {
                            key,
                            first: entries[other].canonical.clone(),
                            second: entry.canonical.clone(),
                        });
                    }
                    Some(_) => {}
                    None => {
                        lookup.insert(key, idx);
                    }
                }
            }
        }
        Ok(JournalLexicon { entries, lookup })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_xml_str(&text)
    }

    pub fn from_xml_str(xml: &str) -> Result<Self> {
        let mut reader = Reader::from_str(xml);
        let mut entries = Vec::new();
        let mut current: Option<LexiconEntry> = None;
        let mut field: Option<&'static str> = None;
        let mut text = String::new();
        let mut root: Option<String> = None;
        let mut depth = 0usize;
        let err = |reader: &Reader<&[u8]>, message: String| Error::Xml {
            offset: reader.buffer_position(),
            page: None,
            message,
        };
        loop {
            match reader.read_event() {
                Err(e) => return Err(err(&reader, e.to_string())),
                Ok(Event::Start(e)) => {
                    depth += 1;
                    let name = String::from_utf8_lossy(e.local_name().as_ref()).into_owned();
                    if root.is_none() {
                        if name != "journals" {
                            return Err(err(&reader, format!("expected <journals>, found <{name}>")));
                        }
                        root = Some(name);
                        continue;
                    }
                    match name.as_str() {
                        "journal" => {
                            current = Some(LexiconEntry {
                                canonical: String::new(),
                                variants: vec![],
                            })
                        }
                        "canonical" => field = Some("canonical"),
                        "variant" => field = Some("variant"),
                        _ => {}
                    }
                    text.clear();
                }
                Ok(Event::Empty(e)) => {
                    if root.is_none() {
                        if e.local_name().as_ref() != b"journals" {
                            return Err(err(&reader, "expected <journals>".into()));
                        }
                        root = Some("journals".into());
                    }
                }
                Ok(Event::Text(t)) => {
                    if field.is_some() {
                        let s = t.unescape().map_err(|e| err(&reader, e.to_string()))?;
                        text.push_str(&s);
                    }
                }
                Ok(Event::CData(t)) => {
                    if field.is_some() {
                        text.push_str(&String::from_utf8_lossy(&t));
                    }
                }
                Ok(Event::End(e)) => {
                    depth = depth.saturating_sub(1);
                    match e.local_name().as_ref() {
                        b"canonical" | b"variant" => {
                            let value = text.split_whitespace().collect::<Vec<_>>().join(" ");
                            if let (Some(entry), Some(f)) = (current.as_mut(), field) {
                                if f == "canonical" {
                                    entry.canonical = value;
                                } else if !value.is_empty() {
                                    entry.variants.push(value);
                                }
                            }
                            field = None;
                            text.clear();
                        }
                        b"journal" => match current.take() {
                            Some(entry) if !entry.canonical.is_empty() => entries.push(entry),
                            _ => return Err(err(&reader, "journal entry without a canonical name".into())),
                        },
                        _ => {}
                    }
                }
                Ok(Event::Eof) if depth > 0 => return Err(err(&reader, "unexpected end of document".into())),
                Ok(Event::Eof) => break,
                Ok(_) => {}
            }
        }
        if root.is_none() {
            return Err(err(&reader, "document has no <journals> root".into()));
        }
        Self::from_entries(entries)
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Canonical name for any spelling known to the lexicon.
    pub fn canonical(&self, raw: &str) -> Option<&str> {
        self.lookup
            .get(&journal_key(raw))
            .map(|&i| self.entries[i].canonical.as_str())
    }

    /// Canonical name on a hit; otherwise the tidied raw string, which keeps
    /// its own column identity.
    pub fn normalize(&self, raw: &str) -> NormalizedJournal {
        match self.canonical(raw) {
            Some(c) => NormalizedJournal {
                name: c.to_string(),
                matched: true,
            },
            None => NormalizedJournal {
                name: tidy(raw),
                matched: false,
            },
        }
    }
}

pub fn normalize_journal(raw: &str, lexicon: &JournalLexicon) -> NormalizedJournal {
    lexicon.normalize(raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ROYAL: &str = "Proceedings of the Royal Society of London, Series B, Biological Sciences";

    fn fixture() -> JournalLexicon {
        JournalLexicon::from_xml_str(&format!(
            "<journals><journal><canonical>{ROYAL}</canonical>\
             <variant>Proc R Soc Lond B Biol Sci</variant>\
             <variant>Proc. R. Soc. B</variant></journal>\
             <journal><canonical>The Lancet</canonical><variant>Lancet</variant></journal>\
             </journals>"
        ))
        .unwrap()
    }

    #[test]
    fn variant_resolves_to_canonical() {
        let lex = fixture();
        assert_eq!(lex.len(), 2);
        assert_eq!(lex.canonical("Proc R Soc Lond B Biol Sci"), Some(ROYAL));
        assert_eq!(
            lex.normalize("proc r soc lond b biol sci"),
            NormalizedJournal {
                name: ROYAL.into(),
                matched: true
            }
        );
        assert_eq!(lex.normalize("  PROC. R. SOC. B. ").name, ROYAL);
    }

    #[test]
    fn empty_lexicon() {
        let lex = JournalLexicon::from_xml_str("<journals/>").unwrap();
        assert!(lex.is_empty());
        assert!(!lex.normalize("Nature").matched);
        let lex = JournalLexicon::from_xml_str("<journals></journals>").unwrap();
        assert!(lex.is_empty());
    }

    #[test]
    fn shared_variant_is_a_collision() {
        let xml = "<journals><journal><canonical>The Journal of Biological Chemistry</canonical><variant>JBC</variant></journal>\
                   <journal><canonical>Journal of Bone Chemistry</canonical><variant>JBC</variant></journal></journals>";
        match JournalLexicon::from_xml_str(xml) {
            Err(Error::Collision { key, first, second }) => {
                assert_eq!(key, "jbc");
                assert_eq!(first, "The Journal of Biological Chemistry");
                assert_eq!(second, "Journal of Bone Chemistry");
            }
            other => panic!("expected collision, got {other:?}"),
        }
    }

    #[test]
    fn misses_keep_their_spelling() {
        let lex = fixture();
        assert_eq!(
            lex.normalize("Journal of Obscure Results"),
            NormalizedJournal {
                name: "Journal of Obscure Results".into(),
                matched: false
            }
        );
        assert_eq!(
            lex.normalize(""),
            NormalizedJournal {
                name: String::new(),
                matched: false
            }
        );
    }

    #[test]
    fn malformed_documents() {
        assert!(matches!(
            JournalLexicon::from_xml_str("<journals><journal>"),
            Err(Error::Xml { .. })
        ));
        assert!(JournalLexicon::from_xml_str("<foo/>").is_err());
        assert!(
            JournalLexicon::from_xml_str("<journals><journal><variant>x</variant></journal></journals>")
                .is_err()
        );
        assert!(matches!(
            JournalLexicon::load("/nonexistent/lexicon.xml"),
            Err(Error::FileNotFound { .. })
        ));
    }
}
