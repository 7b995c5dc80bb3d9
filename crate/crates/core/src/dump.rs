//! Streaming reader for MediaWiki XML exports.
//!
//! Pages are yielded one at a time; only the page currently being assembled
//! is held in memory. Only `title`, `ns` and the `text` of the last
//! `revision` are kept from each `page` element.

use std::cell::Cell;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read};
use std::path::Path;
use std::rc::Rc;
use std::str::FromStr;

use bzip2::bufread::MultiBzDecoder;
use quick_xml::events::Event;
use quick_xml::Reader;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One page of the dump.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WikiPage {
    pub title: String,
    /// 0 for articles.
    pub namespace: u32,
    pub wikitext: String,
}

impl WikiPage {
    pub fn is_article(&self) -> bool {
        self.namespace == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Compression {
    None,
    Bzip2,
    #[default]
    Auto,
}

impl FromStr for Compression {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Compression::None),
            "bzip2" | "bz2" => Ok(Compression::Bzip2),
            "auto" => Ok(Compression::Auto),
            other => Err(Error::InvalidArgument(format!(
                "unknown compression {other:?} (expected none, bzip2 or auto)"
            ))),
        }
    }
}

const BZIP2_MAGIC: &[u8; 3] = b"BZh";

/// Counters collected while reading a dump.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct DumpDiagnostics {
    pub pages: u64,
    /// Invalid UTF-8 sequences replaced with U+FFFD.
    pub replaced_sequences: u64,
}

/// Counts bytes pulled from the underlying file so decompression errors can
/// be located in the compressed input.
struct CountingReader<R> {
    inner: R,
    count: Rc<Cell<u64>>,
}

impl<R: Read> Read for CountingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.count.set(self.count.get() + n as u64);
        Ok(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Title,
    Namespace,
    Text,
    SiteNamespace,
}

#[derive(Default)]
struct PartialPage {
    title: String,
    namespace: String,
    text: String,
}

/// Lazily evaluated sequence of pages. Single consumer; fused after the
/// first error.
pub struct PageStream {
    reader: Reader<Box<dyn BufRead>>,
    buf: Vec<u8>,
    compressed_offset: Option<Rc<Cell<u64>>>,
    finished: bool,
    seen_root: bool,
    /// Element names from the root down to the current element.
    path: Vec<Vec<u8>>,
    /// Named namespaces from `<siteinfo>`, used for exports without `<ns>`.
    site_namespaces: Vec<(u32, String)>,
    diagnostics: DumpDiagnostics,
}

/// Opens a dump file. `Compression::Auto` sniffs the `BZh` magic.
pub fn open_dump_stream(path: impl AsRef<Path>, compression: Compression) -> Result<PageStream> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let count = Rc::new(Cell::new(0));
    let mut raw = BufReader::new(CountingReader {
        inner: file,
        count: Rc::clone(&count),
    });
    let bzipped = match compression {
        Compression::None => false,
        Compression::Bzip2 => true,
        Compression::Auto => {
            let head = raw.fill_buf().map_err(|e| Error::io(path, e))?;
            head.starts_with(BZIP2_MAGIC)
        }
    };
    if bzipped {
        let decoder = BufReader::new(MultiBzDecoder::new(raw));
        let mut stream = PageStream::from_reader(decoder);
        stream.compressed_offset = Some(count);
        Ok(stream)
    } else {
        Ok(PageStream::from_reader(raw))
    }
}

impl PageStream {
    /// Reads an uncompressed export from any buffered reader.
    pub fn from_reader(reader: impl BufRead + 'static) -> Self {
        let boxed: Box<dyn BufRead> = Box::new(reader);
        let mut reader = Reader::from_reader(boxed);
        reader.config_mut().trim_text(false);
        PageStream {
            reader,
            buf: Vec::with_capacity(64 * 1024),
            compressed_offset: None,
            finished: false,
            seen_root: false,
            path: Vec::new(),
            site_namespaces: Vec::new(),
            diagnostics: DumpDiagnostics::default(),
        }
    }

    pub fn diagnostics(&self) -> DumpDiagnostics {
        self.diagnostics
    }

    /// Returns the next page, or `None` once the document is exhausted.
    /// Calling again after exhaustion keeps returning `None`.
    pub fn next_page(&mut self) -> Result<Option<WikiPage>> {
        if self.finished {
            return Ok(None);
        }
        let result = self.read_page();
        if !matches!(result, Ok(Some(_))) {
            self.finished = true;
        }
        result
    }

    fn position(&self) -> u64 {
        self.reader.buffer_position()
    }

    fn xml_error(&self, page: Option<&PartialPage>, message: impl Into<String>) -> Error {
        Error::Xml {
            offset: self.position(),
            page: page.map(|p| p.title.trim().to_string()).filter(|t| !t.is_empty()),
            message: message.into(),
        }
    }

    fn map_reader_error(&self, page: Option<&PartialPage>, err: quick_xml::Error) -> Error {
        if let (quick_xml::Error::Io(io), Some(count)) = (&err, &self.compressed_offset) {
            return Error::Decompression {
                offset: count.get(),
                message: io.to_string(),
            };
        }
        self.xml_error(page, err.to_string())
    }

    fn decode_text(&mut self, raw: &[u8], unescape: bool, page: &PartialPage) -> Result<String> {
        let mut invalid = 0u64;
        let text = match std::str::from_utf8(raw) {
            Ok(s) => std::borrow::Cow::Borrowed(s),
            Err(_) => {
                invalid = raw
                    .utf8_chunks()
                    .filter(|chunk| !chunk.invalid().is_empty())
                    .count() as u64;
                String::from_utf8_lossy(raw)
            }
        };
        self.diagnostics.replaced_sequences += invalid;
        if !unescape {
            return Ok(text.into_owned());
        }
        match quick_xml::escape::unescape(&text) {
            Ok(s) => Ok(s.into_owned()),
            Err(e) => Err(self.xml_error(Some(page), e.to_string())),
        }
    }

    fn read_page(&mut self) -> Result<Option<WikiPage>> {
        let mut page: Option<PartialPage> = None;
        let mut field: Option<Field> = None;

        loop {
            self.buf.clear();
            let event = match self.reader.read_event_into(&mut self.buf) {
                Ok(ev) => ev.into_owned(),
                Err(e) => return Err(self.map_reader_error(page.as_ref(), e)),
            };
            match event {
                Event::Start(start) => {
                    let name = start.local_name().as_ref().to_vec();
                    if self.path.is_empty() && !self.seen_root {
                        self.seen_root = true;
                    }
                    match (page.as_mut(), name.as_slice()) {
                        (None, b"page") => page = Some(PartialPage::default()),
                        (Some(p), b"title") if last_is(&self.path, b"page") => {
                            p.title.clear();
                            field = Some(Field::Title);
                        }
                        (Some(p), b"ns") if last_is(&self.path, b"page") => {
                            p.namespace.clear();
                            field = Some(Field::Namespace);
                        }
                        (Some(p), b"revision") if last_is(&self.path, b"page") => p.text.clear(),
                        (Some(p), b"text") if last_is(&self.path, b"revision") => {
                            p.text.clear();
                            field = Some(Field::Text);
                        }
                        (None, b"namespace") if last_is(&self.path, b"namespaces") => {
                            if let Some(key) = namespace_key(&start) {
                                self.site_namespaces.push((key, String::new()));
                                field = Some(Field::SiteNamespace);
                            }
                        }
                        _ => {}
                    }
                    self.path.push(name);
                }
                Event::Empty(empty) => {
                    if self.path.is_empty() && !self.seen_root {
                        self.seen_root = true;
                    }
                    if let Some(p) = page.as_mut() {
                        let name = empty.local_name();
                        if name.as_ref() == b"text" && last_is(&self.path, b"revision") {
                            p.text.clear();
                        }
                    }
                }
                Event::End(end) => {
                    let name = end.local_name().as_ref().to_vec();
                    self.path.pop();
                    field = None;
                    if name == b"page" {
                        if let Some(p) = page.take() {
                            let wiki_page = self.finish_page(p)?;
                            self.diagnostics.pages += 1;
                            return Ok(Some(wiki_page));
                        }
                    }
                }
                Event::Text(text) if field == Some(Field::SiteNamespace) => {
                    let name = String::from_utf8_lossy(&text);
                    let name = quick_xml::escape::unescape(&name)
                        .map(|n| n.into_owned())
                        .unwrap_or_default();
                    if let Some((_, n)) = self.site_namespaces.last_mut() {
                        n.push_str(&name);
                    }
                }
                Event::Text(text) => {
                    if let (Some(f), Some(p)) = (field, page.as_mut()) {
                        let decoded = self.decode_text(&text, true, p)?;
                        push_field(p, f, &decoded);
                    }
                }
                Event::CData(data) => {
                    if let (Some(f), Some(p)) = (field, page.as_mut()) {
                        let decoded = self.decode_text(&data, false, p)?;
                        push_field(p, f, &decoded);
                    }
                }
                Event::Eof => {
                    if !self.path.is_empty() || page.is_some() {
                        return Err(self.xml_error(page.as_ref(), "unexpected end of document"));
                    }
                    if !self.seen_root {
                        return Err(self.xml_error(None, "document has no root element"));
                    }
                    return Ok(None);
                }
                _ => {}
            }
        }
    }

    fn finish_page(&self, p: PartialPage) -> Result<WikiPage> {
        let title = p.title.trim().to_string();
        if title.is_empty() {
            return Err(self.xml_error(None, "page without a title"));
        }
        let ns = p.namespace.trim();
        let namespace = if ns.is_empty() {
            self.namespace_from_title(&title)
        } else {
            ns.parse::<u32>().map_err(|_| {
                self.xml_error(
                    Some(&p),
                    format!("namespace {ns:?} is not a non-negative integer"),
                )
            })?
        };
        Ok(WikiPage {
            title,
            namespace,
            wikitext: p.text,
        })
    }
}

impl PageStream {
    /// Older exports have no `<ns>`; the namespace is the title prefix.
    fn namespace_from_title(&self, title: &str) -> u32 {
        let Some((prefix, _)) = title.split_once(':') else {
            return 0;
        };
        self.site_namespaces
            .iter()
            .find(|(_, name)| !name.is_empty() && name.trim() == prefix)
            .map_or(0, |(key, _)| *key)
    }
}

fn namespace_key(start: &quick_xml::events::BytesStart) -> Option<u32> {
    let attr = start.try_get_attribute("key").ok().flatten()?;
    std::str::from_utf8(&attr.value).ok()?.trim().parse().ok()
}

fn last_is(path: &[Vec<u8>], name: &[u8]) -> bool {
    path.last().is_some_and(|n| n.as_slice() == name)
}

fn push_field(page: &mut PartialPage, field: Field, s: &str) {
    match field {
        Field::Title => page.title.push_str(s),
        Field::Namespace => page.namespace.push_str(s),
        Field::Text => page.text.push_str(s),
        Field::SiteNamespace => {}
    }
}

impl Iterator for PageStream {
    type Item = Result<WikiPage>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_page().transpose()
    }
}
