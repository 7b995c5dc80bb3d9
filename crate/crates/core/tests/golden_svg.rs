use std::path::Path;

use ndarray::{array, Array2};
use wikicite::{build_bush, render_bush_svg, BushConfig, NmfModel, RenderStyle};

fn model(w: Array2<f64>) -> NmfModel {
    let k = w.ncols();
    NmfModel {
        k,
        w,
        h: Array2::ones((k, 2)),
        iterations_run: 100,
        final_error: 0.0,
        seed: 0,
    }
}

fn three_runs() -> Vec<NmfModel> {
    vec![
        model(array![[1.0], [0.8], [0.6], [0.4], [0.2]]),
        model(array![[1.2, 0.0], [0.9, 0.1], [0.0, 0.7], [0.1, 0.5], [0.0, 0.3]]),
        model(array![
            [1.3, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 0.8],
            [0.0, 0.1, 0.6],
            [0.2, 0.0, 0.3]
        ]),
    ]
}

#[test]
fn three_run_bush_matches_golden_file() {
    let labels: Vec<String> = [
        "Uranus",
        "Neptune",
        "Papillomavirus",
        "HPV vaccine",
        "Q & A <test>",
    ]
    .map(String::from)
    .to_vec();
    let bush = build_bush(&three_runs(), &labels, &BushConfig::default()).unwrap();
    let svg = render_bush_svg(&bush, &RenderStyle::default());
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/three_runs.svg");
    if std::env::var_os("WIKICITE_BLESS").is_some() {
        std::fs::write(&path, &svg).unwrap();
    }
    let golden = std::fs::read_to_string(&path).expect("golden file; set WIKICITE_BLESS=1 to create it");
    assert_eq!(svg, golden);
}
