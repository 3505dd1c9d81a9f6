//! PCA to 2-D and scatter-plot emission (CSV plus a self-contained SVG).
//!
//! The eigendecomposition is a cyclic Jacobi iteration on the d x d sample
//! covariance; at embedding widths of 16 this costs nothing and keeps the
//! crate dependency-free. A sign rule (largest-magnitude entry positive)
//! pins component orientation so plots reproduce exactly.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// k rows of d, orthonormal, ordered by explained variance.
    pub components: Vec<Vec<f64>>,
    /// Non-increasing, one per component.
    pub explained_variance: Vec<f64>,
}

/// Symmetric eigendecomposition by cyclic Jacobi sweeps. Returns
/// (eigenvalues, eigenvectors as columns).
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = a.len();
    let mut v: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let off = |a: &Vec<Vec<f64>>| -> f64 {
        let mut s = 0.0f64;
        for p in 0..d {
            for q in 0..d {
                if p != q {
                    s = s.max(a[p][q].abs());
                }
            }
        }
        s
    };
    let scale = (0..d).map(|i| a[i][i].abs()).fold(1e-300, f64::max);
    for _sweep in 0..100 {
        if off(&a) <= 1e-14 * scale {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                if a[p][q].abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..d {
                    let aip = a[i][p];
                    let aiq = a[i][q];
                    a[i][p] = c * aip - s * aiq;
                    a[i][q] = s * aip + c * aiq;
                }
                for j in 0..d {
                    let apj = a[p][j];
                    let aqj = a[q][j];
                    a[p][j] = c * apj - s * aqj;
                    a[q][j] = s * apj + c * aqj;
                }
                for i in 0..d {
                    let vip = v[i][p];
                    let viq = v[i][q];
                    v[i][p] = c * vip - s * viq;
                    v[i][q] = s * vip + c * viq;
                }
            }
        }
    }
    let eigenvalues: Vec<f64> = (0..d).map(|i| a[i][i]).collect();
    (eigenvalues, v)
}

/// Fit a k-component PCA: center by column means, eigendecompose the sample
/// covariance, keep the top-k eigenvectors.
pub fn pca_fit(rows: &[Vec<f64>], k: usize) -> Result<PcaModel> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::BadComponentCount { k, max: 0 });
    }
    let d = rows[0].len();
    let max_k = (n - 1).min(d);
    if k == 0 || k > max_k {
        return Err(Error::BadComponentCount { k, max: max_k });
    }
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::Config { detail: "ragged matrix passed to pca_fit".into() });
    }
    if rows.iter().all(|r| r == &rows[0]) {
        return Err(Error::DegenerateData);
    }

    let mut mean = vec![0.0; d];
    for row in rows {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    let mut cov = vec![vec![0.0; d]; d];
    for row in rows {
        let centered: Vec<f64> = row.iter().zip(&mean).map(|(v, m)| v - m).collect();
        for i in 0..d {
            for j in i..d {
                cov[i][j] += centered[i] * centered[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= (n - 1) as f64;
            cov[j][i] = cov[i][j];
        }
    }

    let (eigenvalues, vectors) = jacobi_eigen(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eigenvalues[b].partial_cmp(&eigenvalues[a]).unwrap());

    let mut components = Vec::with_capacity(k);
    let mut explained = Vec::with_capacity(k);
    for &col in order.iter().take(k) {
        let mut component: Vec<f64> = (0..d).map(|row| vectors[row][col]).collect();
        // Sign rule: the largest-magnitude entry comes out positive.
        let pivot = component
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if component[pivot] < 0.0 {
            for v in &mut component {
                *v = -*v;
            }
        }
        components.push(component);
        explained.push(eigenvalues[col].max(0.0));
    }
    Ok(PcaModel { mean, components, explained_variance: explained })
}

/// Project rows onto the fitted components: (x - mean) . components^T.
pub fn pca_transform(model: &PcaModel, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let d = model.mean.len();
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        if row.len() != d {
            return Err(Error::ShapeMismatch {
                op: "pca_transform",
                detail: format!("row width {} != fitted dimension {d}", row.len()),
            });
        }
        let centered: Vec<f64> = row.iter().zip(&model.mean).map(|(v, m)| v - m).collect();
        out.push(
            model
                .components
                .iter()
                .map(|c| c.iter().zip(&centered).map(|(a, b)| a * b).sum())
                .collect(),
        );
    }
    Ok(out)
}

fn csv_field(label: &str) -> String {
    if label.contains(',') || label.contains('"') || label.contains('\n') {
        format!("\"{}\"", label.replace('"', "\"\""))
    } else {
        label.to_string()
    }
}

/// Write `label,x,y` CSV and a self-contained labeled SVG scatter.
pub fn emit_scatter(
    coords: &[Vec<f64>],
    labels: &[String],
    csv_path: &Path,
    svg_path: &Path,
) -> Result<()> {
    assert_eq!(coords.len(), labels.len(), "one label per coordinate row");
    let mut csv = String::from("label,x,y\n");
    for (coord, label) in coords.iter().zip(labels) {
        csv.push_str(&format!("{},{:.6},{:.6}\n", csv_field(label), coord[0], coord[1]));
    }
    if let Some(parent) = csv_path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(csv_path, csv).map_err(|e| Error::io(csv_path, e))?;

    let (width, height, margin) = (800.0, 600.0, 50.0);
    let min = |axis: usize| coords.iter().map(|c| c[axis]).fold(f64::INFINITY, f64::min);
    let max = |axis: usize| coords.iter().map(|c| c[axis]).fold(f64::NEG_INFINITY, f64::max);
    let (x0, x1) = (min(0), max(0));
    let (y0, y1) = (min(1), max(1));
    let span_x = (x1 - x0).max(1e-9);
    let span_y = (y1 - y0).max(1e-9);
    let px = |x: f64| margin + (x - x0) / span_x * (width - 2.0 * margin);
    let py = |y: f64| height - margin - (y - y0) / span_y * (height - 2.0 * margin);

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    for (coord, label) in coords.iter().zip(labels) {
        let cx = px(coord[0]);
        let cy = py(coord[1]);
        svg.push_str(&format!(
            "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"3\" fill=\"steelblue\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" font-family=\"sans-serif\">{}</text>\n",
            cx + 4.0,
            cy - 4.0,
            label.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
        ));
    }
    svg.push_str("</svg>\n");
    if let Some(parent) = svg_path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(svg_path, svg).map_err(|e| Error::io(svg_path, e))?;
    Ok(())
}
