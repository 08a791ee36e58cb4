//! Artifacts of a solve: masks, contours, convergence table, and the
//! temp-and-rename output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use cheeger_core::extract::boundary_loops;
use cheeger_core::{ClusterResult, Error, GridDomain, Result, SolverReport};

const PALETTE: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

pub fn convergence_csv(report: &SolverReport) -> String {
    let mut out = String::from("iter,energy,residual\n");
    for ((it, e), r) in report.trace_iterations().zip(&report.energy_trace).zip(&report.residual_trace) {
        writeln!(out, "{it},{e},{r}").unwrap();
    }
    out
}

/// 8-bit mask over the whole grid, 255 inside `set`, top row first.
pub fn write_mask_png(path: &Path, dom: &GridDomain, set: &[bool]) -> Result<()> {
    let (nx, ny) = (dom.nx(), dom.ny());
    let img = image::GrayImage::from_fn(nx as u32, ny as u32, |x, y| {
        let k = dom.index(x as usize, ny - 1 - y as usize);
        image::Luma([if set[k] { 255 } else { 0 }])
    });
    img.save(path).map_err(|e| Error::Image { path: path.to_path_buf(), reason: e.to_string() })
}

/// Domain outline in gray, chamber boundaries in color, in length units.
pub fn contours_svg(cluster: &ClusterResult) -> Result<String> {
    let dom = &cluster.domain;
    let h = dom.h();
    let (ox, oy) = dom.origin();
    let (w, ht) = (dom.nx() as f64 * h, dom.ny() as f64 * h);
    let point = |(x, y): (f64, f64)| format!("{:.6},{:.6}", x - ox, oy + ht - y);
    let path_of = |pts: &[(f64, f64)]| {
        let mut d = String::new();
        for (k, &p) in pts.iter().enumerate() {
            write!(d, "{}{} ", if k == 0 { "M" } else { "L" }, point(p)).unwrap();
        }
        d.push('Z');
        d
    };

    let mut svg = String::new();
    writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {w:.6} {ht:.6}" width="600" height="{:.0}">"#, 600.0 * ht / w).unwrap();
    let outline: Vec<String> = boundary_loops(dom, dom.mask())?.iter().map(|l| path_of(&l.crack)).collect();
    writeln!(
        svg,
        r##"<path d="{}" fill="#eeeeee" fill-rule="evenodd" stroke="#777777" stroke-width="{:.6}"/>"##,
        outline.join(" "),
        h
    )
    .unwrap();
    for (i, c) in cluster.chambers.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let loops: Vec<String> = boundary_loops(dom, &c.mask)?.iter().map(|l| path_of(&l.taut)).collect();
        writeln!(
            svg,
            r#"<path id="chamber_{i}" d="{}" fill="{color}" fill-opacity="0.25" fill-rule="evenodd" stroke="{color}" stroke-width="{:.6}"/>"#,
            loops.join(" "),
            1.5 * h
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// A fresh directory next to `target` that replaces it on [`Staging::commit`]
/// and disappears if dropped first.
pub struct Staging {
    dir: tempfile::TempDir,
    target: PathBuf,
}

impl Staging {
    pub fn new(target: &Path) -> Result<Self> {
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).map_err(io_err(&parent))?;
        let dir = tempfile::Builder::new().prefix(".cheeger-").tempdir_in(&parent).map_err(io_err(&parent))?;
        Ok(Self { dir, target: target.to_path_buf() })
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn commit(self) -> Result<()> {
        let parent = self.dir.path().parent().expect("staging has a parent").to_path_buf();
        // Move an existing target aside first; it is deleted with `old`.
        let old = tempfile::Builder::new().prefix(".cheeger-old-").tempdir_in(&parent).map_err(io_err(&parent))?;
        if fs::symlink_metadata(&self.target).is_ok() {
            fs::rename(&self.target, old.path().join("previous")).map_err(io_err(&self.target))?;
        }
        let staged = self.dir.keep();
        fs::rename(&staged, &self.target).map_err(|e| {
            let _ = fs::remove_dir_all(&staged);
            Error::Io { path: self.target.clone(), source: e }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cheeger_core::{extract_cluster, make_rectangle, MultiField, ScalarField, ThresholdStrategy};

    #[test]
    fn csv_rows_follow_the_trace() {
        let report = SolverReport {
            energy: 1.0,
            iterations: 25,
            level_iterations: vec![25],
            restart_index: 0,
            energy_trace: vec![3.0, 2.0, 1.0],
            residual_trace: vec![0.5, 0.25, 0.0],
            constraint_residual: 0.0,
            converged: true,
            restart_energies: vec![Some(1.0)],
        };
        assert_eq!(convergence_csv(&report), "iter,energy,residual\n10,3,0.5\n20,2,0.25\n25,1,0\n");
    }

    #[test]
    fn staging_replaces_and_cleans_up() {
        let root = tempfile::tempdir().unwrap();
        let target = root.path().join("out");
        fs::create_dir(&target).unwrap();
        fs::write(target.join("stale.txt"), "x").unwrap();

        let dropped = Staging::new(&target).unwrap();
        write_text(&dropped.path().join("a.txt"), "a").unwrap();
        drop(dropped);
        assert!(target.join("stale.txt").exists());

        let staged = Staging::new(&target).unwrap();
        write_text(&staged.path().join("a.txt"), "a").unwrap();
        staged.commit().unwrap();
        assert!(target.join("a.txt").exists() && !target.join("stale.txt").exists());
        let names: Vec<_> = fs::read_dir(root.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, vec![std::ffi::OsString::from("out")]);
    }

    #[test]
    fn masks_and_contours() {
        let dom = make_rectangle(2.0, 1.0, 0.25).unwrap().shared();
        let left = ScalarField::from_fn(&dom, |x, _| if x < 1.0 { 1.0 } else { 0.0 });
        let right = ScalarField::from_fn(&dom, |x, _| if x >= 1.0 { 1.0 } else { 0.0 });
        let u = MultiField::new(vec![left, right]).unwrap();
        let cluster = extract_cluster(&u, &ThresholdStrategy::MedianT).unwrap();

        let svg = contours_svg(&cluster).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("chamber_0") && svg.contains("chamber_1"));

        let root = tempfile::tempdir().unwrap();
        let path = root.path().join("m.png");
        write_mask_png(&path, &dom, &cluster.chambers[0].mask).unwrap();
        let img = image::open(&path).unwrap().into_luma8();
        assert_eq!((img.width() as usize, img.height() as usize), (dom.nx(), dom.ny()));
        let on = img.pixels().filter(|p| p.0[0] == 255).count();
        assert_eq!(on, cluster.chambers[0].mask.iter().filter(|&&b| b).count());
        assert!(img.pixels().all(|p| p.0[0] == 0 || p.0[0] == 255));
    }
}
