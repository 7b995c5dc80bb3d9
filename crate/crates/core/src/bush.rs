//! Cluster bush: clusters of runs with consecutive `k`, stacked in rows and
//! joined by lines whose thickness encodes overlap.

use std::collections::HashSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::nmf::{top_loadings, LoadingAxis, NmfModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OverlapMeasure {
    /// Cosine similarity of the two W columns.
    #[default]
    Cosine,
    /// Jaccard index of the top-N hub article sets.
    TopHubJaccard(usize),
}

fn check_column(model: &NmfModel, i: usize) -> Result<()> {
    if i >= model.k {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: model.k,
        });
    }
    Ok(())
}

/// Cosine similarity between article-loading column `i` of `a` and column
/// `j` of `b`. Zero when either column is all zero.
pub fn cluster_overlap(a: &NmfModel, i: usize, b: &NmfModel, j: usize) -> Result<f64> {
    overlap_with(OverlapMeasure::Cosine, a, i, b, j)
}

pub fn overlap_with(measure: OverlapMeasure, a: &NmfModel, i: usize, b: &NmfModel, j: usize) -> Result<f64> {
    if a.n_rows() != b.n_rows() {
        return Err(Error::AxisMismatch);
    }
    check_column(a, i)?;
    check_column(b, j)?;
    let (u, v) = (a.w.column(i), b.w.column(j));
    match measure {
        OverlapMeasure::Cosine => {
            let dot: f64 = u.iter().zip(v.iter()).map(|(x, y)| x * y).sum();
            let uu: f64 = u.iter().map(|x| x * x).sum();
            let vv: f64 = v.iter().map(|x| x * x).sum();
            // sqrt(uu * vv) rather than sqrt(uu) * sqrt(vv): exact self-overlap.
            let mut norm = (uu * vv).sqrt();
            if !norm.is_finite() {
                norm = uu.sqrt() * vv.sqrt();
            }
            if norm == 0.0 {
                return Ok(0.0);
            }
            Ok((dot / norm).clamp(0.0, 1.0))
        }
        OverlapMeasure::TopHubJaccard(n) => {
            let top = |col: ndarray::ArrayView1<f64>| -> HashSet<usize> {
                let mut idx: Vec<usize> = (0..col.len()).filter(|&r| col[r] > 0.0).collect();
                idx.sort_by(|&p, &q| col[q].total_cmp(&col[p]).then(p.cmp(&q)));
                idx.truncate(n);
                idx.into_iter().collect()
            };
            let (sa, sb) = (top(u), top(v));
            let union = sa.union(&sb).count();
            if union == 0 {
                return Ok(0.0);
            }
            Ok(sa.intersection(&sb).count() as f64 / union as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BushNode {
    pub run_k: usize,
    pub cluster: usize,
    /// Top hub article titles, best first.
    pub labels: Vec<String>,
    /// Sum of the cluster's W column.
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BushEdge {
    /// Node index in the run with smaller k.
    pub lower: usize,
    /// Node index in the run with k + 1.
    pub upper: usize,
    pub overlap: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClusterBush {
    pub nodes: Vec<BushNode>,
    pub edges: Vec<BushEdge>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BushConfig {
    /// Edges below this overlap are left out.
    pub min_overlap: f64,
    pub labels_per_node: usize,
    pub measure: OverlapMeasure,
}

impl Default for BushConfig {
    fn default() -> Self {
        BushConfig {
            min_overlap: 0.1,
            labels_per_node: 1,
            measure: OverlapMeasure::Cosine,
        }
    }
}

impl ClusterBush {
    /// Node indices of one run, in cluster order.
    pub fn row(&self, k: usize) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].run_k == k)
            .collect()
    }

    pub fn run_ks(&self) -> Vec<usize> {
        let mut ks: Vec<usize> = self.nodes.iter().map(|n| n.run_k).collect();
        ks.dedup();
        ks
    }
}

pub fn build_bush(models: &[NmfModel], row_labels: &[String], config: &BushConfig) -> Result<ClusterBush> {
    let mut bush = ClusterBush::default();
    let mut previous: Option<(&NmfModel, usize)> = None;
    for model in models {
        if model.n_rows() != row_labels.len() {
            return Err(Error::AxisMismatch);
        }
        if let Some((prev, _)) = previous {
            if model.k != prev.k + 1 {
                return Err(Error::NonConsecutiveK {
                    previous: prev.k,
                    found: model.k,
                });
            }
        }
        let first = bush.nodes.len();
        for c in 0..model.k {
            let labels = top_loadings(
                model,
                c,
                LoadingAxis::Articles,
                config.labels_per_node.max(1),
                row_labels,
            )?
            .into_iter()
            .map(|(label, _)| label)
            .collect();
            bush.nodes.push(BushNode {
                run_k: model.k,
                cluster: c,
                labels,
                mass: model.w.column(c).sum(),
            });
        }
        if let Some((prev, prev_first)) = previous {
            for a in 0..prev.k {
                for b in 0..model.k {
                    let overlap = overlap_with(config.measure, prev, a, model, b)?;
                    if overlap >= config.min_overlap {
                        bush.edges.push(BushEdge {
                            lower: prev_first + a,
                            upper: first + b,
                            overlap,
                        });
                    }
                }
            }
        }
        previous = Some((model, first));
    }
    Ok(bush)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderStyle {
    pub width: f64,
    pub row_height: f64,
    pub margin: f64,
    pub min_radius: f64,
    pub max_radius: f64,
    pub min_stroke: f64,
    pub max_stroke: f64,
    pub font_size: f64,
}

impl Default for RenderStyle {
    fn default() -> Self {
        RenderStyle {
            width: 1200.0,
            row_height: 90.0,
            margin: 40.0,
            min_radius: 4.0,
            max_radius: 24.0,
            min_stroke: 0.5,
            max_stroke: 10.0,
            font_size: 11.0,
        }
    }
}

pub(crate) fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

/// Horizontal position of every node in [0, 1]. The lowest run keeps
/// cluster order; each following run is sorted by the overlap-weighted mean
/// position of its neighbours below (one barycenter pass).
fn layout_slots(bush: &ClusterBush) -> Vec<f64> {
    let mut slot = vec![0.0; bush.nodes.len()];
    for (r, k) in bush.run_ks().into_iter().enumerate() {
        let mut keyed: Vec<(f64, usize, usize)> = bush
            .row(k)
            .into_iter()
            .map(|n| {
                let (mut sum, mut weight) = (0.0, 0.0);
                for e in bush.edges.iter().filter(|e| e.upper == n) {
                    sum += e.overlap * slot[e.lower];
                    weight += e.overlap;
                }
                let bary = if r == 0 || weight == 0.0 {
                    0.5
                } else {
                    sum / weight
                };
                (bary, bush.nodes[n].cluster, n)
            })
            .collect();
        if r > 0 {
            keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        }
        let len = keyed.len() as f64;
        for (pos, &(_, _, n)) in keyed.iter().enumerate() {
            slot[n] = (pos as f64 + 0.5) / len;
        }
    }
    slot
}

impl RenderStyle {
    /// Affine in sqrt(mass), scaled so the heaviest node gets `max_radius`.
    pub fn node_radius(&self, mass: f64, max_mass: f64) -> f64 {
        if max_mass <= 0.0 {
            return self.min_radius;
        }
        self.min_radius + (self.max_radius - self.min_radius) * (mass.max(0.0) / max_mass).sqrt()
    }

    /// Affine in the overlap, from `min_stroke` at 0 to `max_stroke` at 1.
    pub fn edge_width(&self, overlap: f64) -> f64 {
        self.min_stroke + (self.max_stroke - self.min_stroke) * overlap.clamp(0.0, 1.0)
    }
}

/// Standalone SVG 1.1 document; the run with the smallest k is the bottom row.
pub fn render_bush_svg(bush: &ClusterBush, style: &RenderStyle) -> String {
    let ks = bush.run_ks();
    let rows = ks.len().max(1) as f64;
    let height = 2.0 * style.margin + rows * style.row_height;
    let plot_width = style.width - 2.0 * style.margin;
    let slots = layout_slots(bush);
    let max_mass = bush.nodes.iter().map(|n| n.mass).fold(0.0, f64::max);

    let position = |n: usize| {
        let node = &bush.nodes[n];
        let row = ks.iter().position(|&k| k == node.run_k).unwrap_or(0) as f64;
        let x = style.margin + slots[n] * plot_width;
        let y = height - style.margin - (row + 0.5) * style.row_height;
        (x, y)
    };

    let mut svg = String::new();
    writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{:.0}" height="{:.0}" viewBox="0 0 {:.0} {:.0}">"#,
        style.width, height, style.width, height
    )
    .unwrap();
    writeln!(
        svg,
        r##"<rect x="0" y="0" width="{:.0}" height="{:.0}" fill="#ffffff"/>"##,
        style.width, height
    )
    .unwrap();

    writeln!(
        svg,
        r##"<g class="edges" stroke="#4a6fa5" stroke-opacity="0.6">"##
    )
    .unwrap();
    for e in &bush.edges {
        let (x1, y1) = position(e.lower);
        let (x2, y2) = position(e.upper);
        writeln!(
            svg,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke-width="{:.3}"><title>{:.4}</title></line>"#,
            style.edge_width(e.overlap),
            e.overlap
        )
        .unwrap();
    }
    writeln!(svg, "</g>").unwrap();

    writeln!(
        svg,
        r##"<g class="nodes" fill="#f2b134" stroke="#7a5200" stroke-width="1">"##
    )
    .unwrap();
    for (n, node) in bush.nodes.iter().enumerate() {
        let (x, y) = position(n);
        writeln!(
            svg,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="{:.2}"><title>k={} cluster {}</title></circle>"#,
            style.node_radius(node.mass, max_mass),
            node.run_k,
            node.cluster + 1
        )
        .unwrap();
    }
    writeln!(svg, "</g>").unwrap();

    writeln!(
        svg,
        r#"<g class="labels" font-family="sans-serif" font-size="{:.0}">"#,
        style.font_size
    )
    .unwrap();
    for (n, node) in bush.nodes.iter().enumerate() {
        let (x, y) = position(n);
        let r = style.node_radius(node.mass, max_mass);
        for (line, label) in node.labels.iter().enumerate() {
            writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
                x + r + 3.0,
                y + style.font_size * (line as f64 + 0.35),
                escape_xml(label)
            )
            .unwrap();
        }
    }
    writeln!(svg, "</g>").unwrap();

    writeln!(
        svg,
        r##"<g class="rows" font-family="sans-serif" font-size="{:.0}" fill="#555555">"##,
        style.font_size
    )
    .unwrap();
    for (row, k) in ks.iter().enumerate() {
        let y = height - style.margin - (row as f64 + 0.5) * style.row_height;
        writeln!(
            svg,
            r#"<text x="4" y="{:.2}">k={k}</text>"#,
            y + style.font_size * 0.35
        )
        .unwrap();
    }
    writeln!(svg, "</g>").unwrap();
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn model(w: Array2<f64>) -> NmfModel {
        let k = w.ncols();
        NmfModel {
            k,
            w,
            h: Array2::ones((k, 2)),
            iterations_run: 0,
            final_error: 0.0,
            seed: 0,
        }
    }

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("Article {i}")).collect()
    }

    #[test]
    fn overlap_cases() {
        let a = model(array![[1.0, 1.0], [1.0, 0.0], [0.0, 0.0]]);
        let b = model(array![[1.0], [0.0], [0.0]]);
        let c = model(array![[0.0], [1.0], [0.0]]);
        assert_eq!(cluster_overlap(&b, 0, &b, 0).unwrap(), 1.0);
        assert_eq!(cluster_overlap(&b, 0, &c, 0).unwrap(), 0.0);
        let v = cluster_overlap(&a, 0, &b, 0).unwrap();
        assert!((v - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        let zero = model(array![[0.0], [0.0], [0.0]]);
        assert_eq!(cluster_overlap(&zero, 0, &b, 0).unwrap(), 0.0);
    }

    #[test]
    fn overlap_errors() {
        let a = model(array![[1.0], [1.0]]);
        let b = model(array![[1.0], [1.0], [1.0]]);
        assert!(matches!(cluster_overlap(&a, 0, &b, 0), Err(Error::AxisMismatch)));
        assert!(matches!(
            cluster_overlap(&a, 1, &a, 0),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn jaccard_measure() {
        let a = model(array![[3.0, 0.0], [2.0, 1.0], [0.0, 5.0]]);
        let j = overlap_with(OverlapMeasure::TopHubJaccard(2), &a, 0, &a, 1).unwrap();
        assert!((j - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn two_runs_two_edges() {
        let m1 = model(array![[1.0], [1.0], [1.0]]);
        let m2 = model(array![[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]]);
        let bush = build_bush(&[m1, m2], &labels(3), &BushConfig::default()).unwrap();
        assert_eq!(bush.nodes.len(), 3);
        assert_eq!(bush.edges.len(), 2);
        assert!(bush.edges.iter().all(|e| e.lower == 0));
        assert_eq!(bush.nodes[1].labels, vec!["Article 0".to_string()]);
        assert_eq!(bush.nodes[0].mass, 3.0);
    }

    #[test]
    fn build_errors() {
        let m1 = model(array![[1.0], [1.0], [1.0]]);
        let m3 = model(Array2::ones((3, 3)));
        assert!(matches!(
            build_bush(&[m1.clone(), m3], &labels(3), &BushConfig::default()),
            Err(Error::NonConsecutiveK {
                previous: 1,
                found: 3
            })
        ));
        assert!(matches!(
            build_bush(&[m1], &labels(2), &BushConfig::default()),
            Err(Error::AxisMismatch)
        ));
    }

    #[test]
    fn single_node_svg() {
        let m1 = model(array![[1.0], [2.0]]);
        let bush = build_bush(&[m1], &labels(2), &BushConfig::default()).unwrap();
        assert_eq!(bush.edges.len(), 0);
        let svg = render_bush_svg(&bush, &RenderStyle::default());
        assert_eq!(svg.matches("<circle").count(), 1);
        assert_eq!(svg.matches("<line").count(), 0);
        assert!(svg.contains(">Article 1</text>"));
    }

    #[test]
    fn stroke_and_radius_are_monotone() {
        let style = RenderStyle::default();
        assert!(style.edge_width(1.0) > style.edge_width(0.2));
        assert!(style.node_radius(2.0, 4.0) > style.node_radius(1.0, 4.0));
    }

    #[test]
    fn labels_are_escaped() {
        let m1 = model(array![[1.0]]);
        let bush = build_bush(&[m1], &["<b>&".to_string()], &BushConfig::default()).unwrap();
        let svg = render_bush_svg(&bush, &RenderStyle::default());
        assert!(svg.contains("&lt;b&gt;&amp;"));
    }
}
