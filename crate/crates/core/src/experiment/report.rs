use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Rgb};

use super::{stage, ExperimentError, RESULTS_CSV};
use crate::imaging::io::{load_gray_png, load_mask_png};
use crate::imaging::{BinaryMask, GrayImage};

pub const OVERLAY_LTP: [u8; 3] = [220, 30, 30];
pub const OVERLAY_LFP: [u8; 3] = [30, 60, 230];
pub const OVERLAY_LFN: [u8; 3] = [30, 200, 60];

/// Gray image with logical true positives, false positives and false
/// negatives painted in red, blue and green.
pub fn overlay(img: &GrayImage, t_f: &BinaryMask, target1: &BinaryMask, target2: &BinaryMask) -> Vec<[u8; 3]> {
    img.data()
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let (f, a, b) = (t_f.bits()[k], target1.bits()[k], target2.bits()[k]);
            if f && b {
                OVERLAY_LTP
            } else if f && !a {
                OVERLAY_LFP
            } else if !f && b {
                OVERLAY_LFN
            } else {
                [*v, *v, *v]
            }
        })
        .collect()
}

const METRICS: [(&str, &str); 5] = [
    ("lprecision", "Lprecision"),
    ("lrecall", "Lrecall"),
    ("lf1", "Lf1"),
    ("lfiou", "LfIoU"),
    ("oracle_iou", "Oracle IoU"),
];

const PALETTE: [&str; 3] = ["#4c72b0", "#dd8452", "#55a868"];

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_results(path: &Path) -> Result<Table, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::Stage { stage: "report", message: format!("{}: {e}", path.display()) })?;
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap_or_default().split(',').map(str::to_owned).collect();
    let rows: Vec<Vec<String>> = lines.filter(|l| !l.trim().is_empty()).map(|l| l.split(',').map(str::to_owned).collect()).collect();
    if rows.is_empty() {
        return Err(ExperimentError::NothingToReport);
    }
    Ok(Table { header, rows })
}

/// Grouped bar chart: one group per method, one bar per target regime.
fn bar_chart(title: &str, values: &[(String, f64)]) -> String {
    let mut groups: Vec<(String, Vec<(String, f64)>)> = Vec::new();
    for (name, v) in values {
        let (method, regime) = name.rsplit_once('_').unwrap_or((name.as_str(), ""));
        match groups.iter_mut().find(|g| g.0 == method) {
            Some(g) => g.1.push((regime.to_owned(), *v)),
            None => groups.push((method.to_owned(), vec![(regime.to_owned(), *v)])),
        }
    }
    let regimes: Vec<String> = {
        let mut seen: Vec<String> = Vec::new();
        for (_, bars) in &groups {
            for (r, _) in bars {
                if !seen.contains(r) {
                    seen.push(r.clone());
                }
            }
        }
        seen
    };
    let (bar_w, gap, plot_h, left, top) = (22.0, 26.0, 240.0, 50.0, 40.0);
    let group_w = regimes.len() as f64 * bar_w + gap;
    let width = left + groups.len() as f64 * group_w + 20.0;
    let height = top + plot_h + 70.0;
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="11">"#).unwrap();
    writeln!(s, r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, width / 2.0).unwrap();
    for tick in 0..=5 {
        let v = tick as f64 / 5.0;
        let y = top + plot_h * (1.0 - v);
        writeln!(s, r##"<line x1="{left}" x2="{:.1}" y1="{y:.1}" y2="{y:.1}" stroke="#ddd"/>"##, width - 20.0).unwrap();
        writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.1}</text>"#, left - 6.0, y + 4.0).unwrap();
    }
    for (gi, (method, bars)) in groups.iter().enumerate() {
        let gx = left + gap / 2.0 + gi as f64 * group_w;
        for (regime, v) in bars {
            let ri = regimes.iter().position(|r| r == regime).unwrap_or(0);
            let x = gx + ri as f64 * bar_w;
            let h = plot_h * v.clamp(0.0, 1.0);
            writeln!(
                s,
                r#"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{h:.1}" fill="{}"><title>{method}_{regime}: {v:.4}</title></rect>"#,
                top + plot_h - h,
                bar_w - 2.0,
                PALETTE[ri % PALETTE.len()]
            )
            .unwrap();
        }
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{method}</text>"#,
            gx + regimes.len() as f64 * bar_w / 2.0,
            top + plot_h + 16.0
        )
        .unwrap();
    }
    for (ri, r) in regimes.iter().enumerate() {
        let x = left + ri as f64 * 90.0;
        let y = top + plot_h + 40.0;
        writeln!(s, r#"<rect x="{x:.1}" y="{:.1}" width="12" height="12" fill="{}"/>"#, y - 10.0, PALETTE[ri % PALETTE.len()]).unwrap();
        writeln!(s, r#"<text x="{:.1}" y="{y:.1}">{r}</text>"#, x + 16.0).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Writes bar charts per metric and prediction overlays under
/// `result_dir/report`; returns the written paths.
pub fn cmd_report(result_dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let table = read_results(&result_dir.join(RESULTS_CSV))?;
    let out = result_dir.join("report");
    std::fs::create_dir_all(&out)?;
    let mut written = Vec::new();
    for (key, title) in METRICS {
        let col = table.header.iter().position(|h| h == key).ok_or_else(|| ExperimentError::Stage {
            stage: "report",
            message: format!("results lack column {key}"),
        })?;
        let values = table
            .rows
            .iter()
            .map(|r| {
                let v: f64 = r.get(col).and_then(|v| v.parse().ok()).ok_or_else(|| ExperimentError::Stage {
                    stage: "report",
                    message: format!("bad {key} value in row {}", r[0]),
                })?;
                Ok((r[0].clone(), v))
            })
            .collect::<Result<Vec<_>, ExperimentError>>()?;
        let path = out.join(format!("{key}.svg"));
        std::fs::write(&path, bar_chart(title, &values))?;
        written.push(path);
    }

    // Overlays for the saved test patches.
    let patches = result_dir.join("test_patches");
    let mut indices: BTreeMap<String, ()> = BTreeMap::new();
    if patches.is_dir() {
        for e in std::fs::read_dir(&patches)? {
            let name = e?.file_name().to_string_lossy().into_owned();
            if let Some(idx) = name.strip_suffix("_image.png") {
                indices.insert(idx.to_owned(), ());
            }
        }
    }
    for idx in indices.keys() {
        let img = load_gray_png(&patches.join(format!("{idx}_image.png"))).map_err(stage("report"))?;
        let t1 = load_mask_png(&patches.join(format!("{idx}_t1.png"))).map_err(stage("report"))?;
        let t2 = load_mask_png(&patches.join(format!("{idx}_t2.png"))).map_err(stage("report"))?;
        for row in &table.rows {
            let pred = result_dir.join("predictions").join(&row[0]).join(format!("{idx}.png"));
            if !pred.is_file() {
                continue;
            }
            let tf = load_mask_png(&pred).map_err(stage("report"))?;
            let rgb: Vec<u8> = overlay(&img, &tf, &t1, &t2).concat();
            let buf: ImageBuffer<Rgb<u8>, Vec<u8>> =
                ImageBuffer::from_raw(img.width() as u32, img.height() as u32, rgb).expect("overlay size");
            let dir = out.join("overlays");
            std::fs::create_dir_all(&dir)?;
            let path = dir.join(format!("{}_{idx}.png", row[0]));
            buf.save_with_format(&path, image::ImageFormat::Png).map_err(stage("report"))?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laf::laf_counts;

    #[test]
    fn overlay_colors_match_counts() {
        let img = GrayImage::new(4, 4, (0..16).map(|v| v as u8 * 10).collect()).unwrap();
        let t1 = BinaryMask::from_fn(4, 4, |x, _| x < 3);
        let t2 = BinaryMask::from_fn(4, 4, |x, y| x < 2 && y < 3);
        let tf = BinaryMask::from_fn(4, 4, |x, y| (x + y) % 2 == 0);
        let px = overlay(&img, &tf, &t1, &t2);
        let c = laf_counts(&tf, &tf.not(), &t1, &t2).unwrap();
        let count = |col: [u8; 3]| px.iter().filter(|p| **p == col).count() as f64;
        assert_eq!((count(OVERLAY_LTP), count(OVERLAY_LFP), count(OVERLAY_LFN)), (c.ltp, c.lfp, c.lfn));
    }

    #[test]
    fn empty_results_report_nothing() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(RESULTS_CSV), "solution,lf1\n").unwrap();
        assert!(matches!(cmd_report(dir.path()), Err(ExperimentError::NothingToReport)));
    }

    #[test]
    fn one_solution_one_group_per_metric() {
        let svg = bar_chart("Lf1", &[("None_T1".into(), 0.5)]);
        assert_eq!(svg.matches("<rect x").count(), 2, "one bar plus one legend swatch");
        assert_eq!(svg.matches(">None</text>").count(), 1);
    }
}
