"""Exercise the pywikicite extension on the bundled fixtures."""

import math
import sys
import tempfile
from pathlib import Path

import pywikicite as wc

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "crates" / "core" / "fixtures"


def main() -> int:
    templates = wc.parse_templates("a {{cite journal|journal=Nature|year=2001}} b {{fact}}")
    assert [t.name for t in templates] == ["cite journal", "fact"]
    assert templates[0].is_cite_journal() and templates[0].get("journal") == "Nature"

    assert wc.clean_field_value("[[Nature (journal)|Nature]]") == "Nature"

    lexicon = wc.Lexicon.load(str(FIXTURES / "journals.xml"))
    assert lexicon.normalize("nature.") == ("Nature", True)

    citations = []
    pages = wc.DumpReader(str(FIXTURES / "sample-pages-articles.xml"))
    for page in pages:
        citations.extend(wc.extract_citations(page.title, page.wikitext, page.namespace))
    matrix = wc.CountMatrix.build(citations, lexicon)
    assert matrix.shape == (8, 20), matrix
    assert matrix.nnz == 23 and matrix.total_count == 36

    reduced, missing = matrix.exclude_journals(["Nature", "Science", "PNAS"])
    assert missing == [] and reduced.shape[1] == 17

    models = wc.sweep(matrix, 1, 3, iterations=500, seed=7, jobs=2)
    assert [m.k for m in models] == [1, 2, 3]
    single = wc.factorize(matrix, 2, iterations=500, seed=9)
    assert single.w == models[1].w and single.h == models[1].h
    assert math.isclose(wc.reconstruction_error(matrix, single), single.final_error, rel_tol=1e-12)
    assert all(v >= 0 for row in single.w for v in row)

    hubs = wc.top_loadings(single, 0, "articles", 3, matrix.row_labels)
    assert len(hubs) == 3 and hubs[0][1] >= hubs[-1][1]
    overlap = wc.cluster_overlap(models[1], 0, models[2], 0)
    assert 0.0 <= overlap <= 1.0 + 1e-12

    svg = wc.bush_svg(models, matrix.row_labels, min_overlap=0.1)
    assert svg.startswith("<svg") or svg.startswith("<?xml"), svg[:40]

    try:
        wc.factorize(matrix, 0)
    except ValueError:
        pass
    else:
        raise AssertionError("k = 0 accepted")

    with tempfile.TemporaryDirectory() as tmp:
        record = wc.run_pipeline(
            dump_path=str(FIXTURES / "sample-pages-articles.xml"),
            lexicon_path=str(FIXTURES / "journals.xml"),
            output_dir=str(Path(tmp) / "out"),
            k_max=2,
            iterations=200,
        )
        assert [s["name"] for s in record["stages"]] == ["extract", "matrix", "nmf", "bush", "report"]
        assert (Path(tmp) / "out" / "report.html").is_file()

    print("pywikicite smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
