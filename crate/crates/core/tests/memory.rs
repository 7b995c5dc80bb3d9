//! Peak heap use while streaming must not grow with the number of pages.

use std::alloc::{GlobalAlloc, Layout, System};
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use wikicite::{open_dump_stream, Compression};

struct Tracking;

static LIVE: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Tracking {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            let now = LIVE.fetch_add(layout.size(), Ordering::Relaxed) + layout.size();
            PEAK.fetch_max(now, Ordering::Relaxed);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        LIVE.fetch_sub(layout.size(), Ordering::Relaxed);
        System.dealloc(ptr, layout)
    }
}

#[global_allocator]
static GLOBAL: Tracking = Tracking;

/// Writes the fixture's `<page>` elements `n` times inside one document.
fn repeated_dump(dir: &Path, n: usize, bzip2: bool) -> std::path::PathBuf {
    let src = std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/sample-pages-articles.xml"),
    )
    .unwrap();
    let first = src.find("  <page>").unwrap();
    let last = src.rfind("</mediawiki>").unwrap();
    let (head, pages) = (&src[..first], &src[first..last]);
    let path = dir.join(format!("rep{n}-{bzip2}.xml"));
    let file = std::fs::File::create(&path).unwrap();
    let mut out: Box<dyn Write> = if bzip2 {
        Box::new(bzip2::write::BzEncoder::new(file, bzip2::Compression::fast()))
    } else {
        Box::new(std::io::BufWriter::new(file))
    };
    out.write_all(head.as_bytes()).unwrap();
    for _ in 0..n {
        out.write_all(pages.as_bytes()).unwrap();
    }
    out.write_all(b"</mediawiki>\n").unwrap();
    out.flush().unwrap();
    drop(out);
    path
}

fn peak_while_streaming(path: &Path) -> (usize, usize) {
    let base = LIVE.load(Ordering::SeqCst);
    PEAK.store(base, Ordering::SeqCst);
    let mut pages = 0;
    for page in open_dump_stream(path, Compression::Auto).unwrap() {
        page.unwrap();
        pages += 1;
    }
    (PEAK.load(Ordering::SeqCst) - base, pages)
}

#[test]
fn peak_heap_is_flat_in_dump_length() {
    let tmp = tempfile::tempdir().unwrap();
    for bzip2 in [false, true] {
        let one = repeated_dump(tmp.path(), 1, bzip2);
        let fifty = repeated_dump(tmp.path(), 50, bzip2);
        let size50 = std::fs::metadata(&fifty).unwrap().len() as usize;
        let (peak1, pages1) = peak_while_streaming(&one);
        let (peak50, pages50) = peak_while_streaming(&fifty);
        assert_eq!(pages50, 50 * pages1);
        println!("bzip2={bzip2}: peak heap {peak1} B for N=1, {peak50} B for N=50 ({size50} B file)");
        assert!(peak50 < 2 * peak1, "peak grew from {peak1} to {peak50}");
    }
}
