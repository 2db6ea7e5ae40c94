//! CSV and JSON renderings. Floats are written in shortest round-trip form,
//! so parsing a file back reproduces the in-memory values exactly.
//!
//! | file | columns |
//! |------|---------|
//! | KLD report | `term,kld_bits,p_d,p_q,p_value,significant` |
//! | sync series | `slice,partial,n_cohort_docs,n_field_docs,summed_significant_bits,summed_all_bits` (empty sums mark gaps) |
//! | matrix | `cohort_slice,<field slices...>,argmin_slice,argmin_offset_years` |
//! | EDE | `reference,slice,density,n,bandwidth` |
//! | EDE median | `slice,median,mean,count` |
//! | trends | `slice,total_tokens,excluded,<terms...>` |

use serde::Serialize;

use super::{FrequencyTrendTable, Provenance};
use crate::corpus::SliceId;
use crate::divergence::{KldMatrix, KldReport, SyncSeries, TermContribution};
use crate::embedding::{EdeTrajectory, MedianSeries};
use crate::error::{Error, Result};

fn render<F>(provenance: &Provenance, header: &[String], fill: F) -> Result<String>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> Result<()>,
{
    let mut buf = provenance.comment_lines().into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        fill(&mut w)?;
        w.flush().map_err(|e| Error::Serialization(e.to_string()))?;
    }
    String::from_utf8(buf).map_err(|e| Error::Serialization(e.to_string()))
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn cols(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

pub fn kld_report_csv(report: &KldReport, provenance: &Provenance) -> Result<String> {
    let p = provenance
        .clone()
        .with("d_slice", report.d_slice)
        .with("q_slice", report.q_slice)
        .with("alpha", report.alpha);
    render(&p, &cols(&["term", "kld_bits", "p_d", "p_q", "p_value", "significant"]), |w| {
        for c in &report.contributions {
            w.write_record([
                c.term.clone(),
                c.kld_bits.to_string(),
                c.p_d.to_string(),
                c.p_q.to_string(),
                c.p_value.to_string(),
                c.significant.to_string(),
            ])?;
        }
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedKldReport {
    pub provenance: Provenance,
    pub contributions: Vec<TermContribution>,
}

impl ParsedKldReport {
    /// Sum over significant terms in term order, as computed for the report.
    pub fn summed_significant_bits(&self) -> f64 {
        ordered(self.contributions.iter().filter(|c| c.significant))
    }

    pub fn summed_all_bits(&self) -> f64 {
        ordered(self.contributions.iter())
    }
}

fn ordered<'a>(it: impl Iterator<Item = &'a TermContribution>) -> f64 {
    let mut v: Vec<&TermContribution> = it.collect();
    v.sort_by(|a, b| a.term.cmp(&b.term));
    v.iter().map(|c| c.kld_bits).sum()
}

pub fn read_kld_report_csv(text: &str) -> Result<ParsedKldReport> {
    let provenance = Provenance::from_comment_lines(text);
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let bad = |line: usize, message: String| Error::MalformedRecord {
        path: "<kld csv>".into(),
        line,
        message,
    };
    let mut contributions = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(i + 2, |p| p.line() as usize);
        if rec.len() != 6 {
            return Err(bad(line, format!("expected 6 fields, found {}", rec.len())));
        }
        let num = |k: usize| rec[k].parse::<f64>().map_err(|e| bad(line, format!("field {k}: {e}")));
        contributions.push(TermContribution {
            term: rec[0].to_string(),
            kld_bits: num(1)?,
            p_d: num(2)?,
            p_q: num(3)?,
            p_value: num(4)?,
            significant: rec[5].parse().map_err(|e| bad(line, format!("significant: {e}")))?,
        });
    }
    Ok(ParsedKldReport {
        provenance,
        contributions,
    })
}

pub fn sync_series_csv(series: &SyncSeries, provenance: &Provenance) -> Result<String> {
    let header = cols(&["slice", "partial", "n_cohort_docs", "n_field_docs", "summed_significant_bits", "summed_all_bits"]);
    render(provenance, &header, |w| {
        for p in &series.points {
            w.write_record([
                p.slice.to_string(),
                p.partial.to_string(),
                p.n_cohort_docs.to_string(),
                p.n_field_docs.to_string(),
                opt(p.report.as_ref().map(|r| r.summed_significant_bits)),
                opt(p.report.as_ref().map(|r| r.summed_all_bits)),
            ])?;
        }
        Ok(())
    })
}

pub fn matrix_csv(matrix: &KldMatrix, provenance: &Provenance) -> Result<String> {
    let mut header = vec!["cohort_slice".to_string()];
    header.extend(matrix.cols.iter().map(SliceId::to_string));
    header.extend(cols(&["argmin_slice", "argmin_offset_years"]));
    let offsets = matrix.argmin_offsets();
    render(provenance, &header, |w| {
        for (i, row) in matrix.rows.iter().enumerate() {
            let mut rec = vec![row.to_string()];
            rec.extend(matrix.values[i].iter().map(f64::to_string));
            rec.push(matrix.cols[matrix.argmin_per_row[i]].to_string());
            rec.push(offsets[i].to_string());
            w.write_record(&rec)?;
        }
        Ok(())
    })
}

pub fn ede_csv(trajectories: &[EdeTrajectory], provenance: &Provenance) -> Result<String> {
    render(provenance, &cols(&["reference", "slice", "density", "n", "bandwidth"]), |w| {
        for t in trajectories {
            for p in &t.points {
                w.write_record([
                    t.reference_doc.clone(),
                    p.slice.to_string(),
                    p.density.to_string(),
                    p.n.to_string(),
                    p.bandwidth.to_string(),
                ])?;
            }
        }
        Ok(())
    })
}

pub fn median_csv(series: &MedianSeries, provenance: &Provenance) -> Result<String> {
    render(provenance, &cols(&["slice", "median", "mean", "count"]), |w| {
        for p in &series.points {
            w.write_record([p.slice.to_string(), p.median.to_string(), p.mean.to_string(), p.count.to_string()])?;
        }
        Ok(())
    })
}

/// Raw (unsmoothed) relative frequencies; excluded bins have empty cells.
pub fn trends_csv(table: &FrequencyTrendTable, provenance: &Provenance) -> Result<String> {
    let mut header = cols(&["slice", "total_tokens", "excluded"]);
    header.extend(table.terms.iter().cloned());
    render(provenance, &header, |w| {
        for (k, bin) in table.bins.iter().enumerate() {
            let mut rec = vec![
                bin.to_string(),
                table.bin_totals[k].to_string(),
                table.excluded_bins.contains(bin).to_string(),
            ];
            rec.extend(table.terms.iter().map(|t| opt(table.values[t][k])));
            w.write_record(&rec)?;
        }
        Ok(())
    })
}

#[derive(Serialize)]
struct JsonDoc<'a, T: Serialize> {
    #[serde(flatten)]
    provenance: &'a Provenance,
    data: &'a T,
}

/// Pretty JSON with provenance keys beside `data`.
pub fn to_json<T: Serialize>(data: &T, provenance: &Provenance) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&JsonDoc { provenance, data })?;
    s.push('\n');
    Ok(s)
}
