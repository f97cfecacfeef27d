//! CSV tables: kernels, co-occurrence matrices, loss curves and attack summaries.

use advsmo_core::blackbox::AttackReport;
use advsmo_core::gabor::Kernel;
use advsmo_core::image::Channel;
use advsmo_core::search::CandidateRecord;
use advsmo_core::texture::Glcm;

pub type CsvResult = Result<Vec<u8>, csv::Error>;

fn finish(w: csv::Writer<Vec<u8>>) -> CsvResult {
    w.into_inner().map_err(|e| e.into_error().into())
}

/// `{:?}` on f64 is the shortest string that parses back to the same value.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Row-major, one kernel row per line, no header.
pub fn kernel_csv(kernel: &Kernel) -> CsvResult {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for row in kernel.rows() {
        w.write_record(row.iter().map(|&v| num(v)))?;
    }
    finish(w)
}

/// Raw counts; row `i` is the reference level, column `j` the neighbour level.
pub fn glcm_csv(g: &Glcm) -> CsvResult {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for i in 0..g.levels() {
        w.write_record((0..g.levels()).map(|j| g.count(i, j).to_string()))?;
    }
    finish(w)
}

pub fn loss_csv(curve: &[f64]) -> CsvResult {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "mse"])?;
    for (e, l) in curve.iter().enumerate() {
        w.write_record([(e + 1).to_string(), num(*l)])?;
    }
    finish(w)
}

pub fn report_csv(report: &AttackReport) -> CsvResult {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sample_id", "y", "y_hat", "success", "k1", "theta", "ssim", "mse", "linf"])?;
    for e in &report.entries {
        w.write_record([
            e.id.clone(),
            e.label.to_string(),
            opt(e.adversarial_label),
            opt(e.success),
            opt(e.pair.map(|p| p.k1)),
            opt(e.pair.map(|p| p.theta)),
            opt(e.metrics.map(|m| num(m.ssim))),
            opt(e.metrics.map(|m| num(m.mse))),
            opt(e.metrics.map(|m| num(m.linf))),
        ])?;
    }
    finish(w)
}

/// One row per grid pair; metrics are blank for skipped pairs.
pub fn surface_csv(records: &[CandidateRecord]) -> CsvResult {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["k1", "theta", "ssim", "mse", "linf"])?;
    for r in records {
        let m = r.metrics();
        w.write_record([
            r.pair.k1.to_string(),
            r.pair.theta.to_string(),
            opt(m.map(|m| num(m.ssim))),
            opt(m.map(|m| num(m.mse))),
            opt(m.map(|m| num(m.linf))),
        ])?;
    }
    finish(w)
}

/// Row-major plane values, no header.
pub fn channel_csv(ch: &Channel) -> CsvResult {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for row in ch.values().chunks(ch.width()) {
        w.write_record(row.iter().map(|&v| num(v)))?;
    }
    finish(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use advsmo_core::texture::{glcm, Offset};

    #[test]
    fn glcm_rows_are_reference_levels() {
        let ch = Channel::new(2, 2, vec![0.0, 0.0, 0.99, 0.99]).unwrap();
        let g = glcm(&ch, Offset::new(1, 0), 2).unwrap();
        assert_eq!(String::from_utf8(glcm_csv(&g).unwrap()).unwrap(), "1,0\n0,1\n");
    }

    #[test]
    fn loss_curve_is_one_based() {
        let out = String::from_utf8(loss_csv(&[0.5, 0.25]).unwrap()).unwrap();
        assert_eq!(out, "epoch,mse\n1,0.5\n2,0.25\n");
    }
}
