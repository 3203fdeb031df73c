use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// One output record. Fields that do not apply to a row are `None` and
/// written as empty cells.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsRow {
    pub task: String,
    /// Test construction or estimator.
    pub method: String,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub rep: u64,
    /// Value of `β*` at the tested coordinate, or the signal size.
    pub signal: f64,
    pub coordinate: Option<usize>,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub reject: Option<bool>,
    pub err_l2: Option<f64>,
    pub err_linf: Option<f64>,
    pub err_dc_gap: Option<f64>,
    /// Empty when the computation succeeded cleanly.
    pub flag: String,
    pub runtime_ms: f64,
}

pub const HEADER: [&str; 16] = [
    "task",
    "method",
    "n",
    "d",
    "k",
    "rep",
    "signal",
    "coordinate",
    "statistic",
    "p_value",
    "reject",
    "err_l2",
    "err_linf",
    "err_dc_gap",
    "flag",
    "runtime_ms",
];

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_float(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

impl MetricsRow {
    fn record(&self) -> [String; 16] {
        [
            self.task.clone(),
            self.method.clone(),
            self.n.to_string(),
            self.d.to_string(),
            self.k.to_string(),
            self.rep.to_string(),
            float(self.signal),
            self.coordinate.map(|c| c.to_string()).unwrap_or_default(),
            opt_float(self.statistic),
            opt_float(self.p_value),
            self.reject.map(|r| r.to_string()).unwrap_or_default(),
            opt_float(self.err_l2),
            opt_float(self.err_linf),
            opt_float(self.err_dc_gap),
            self.flag.clone(),
            float(self.runtime_ms),
        ]
    }

    fn parse(rec: &csv::StringRecord, line: usize) -> Result<Self> {
        if rec.len() != HEADER.len() {
            return Err(Error::Data(format!("line {line}: {} fields, expected {}", rec.len(), HEADER.len())));
        }
        let err = |col: &str, v: &str| Error::Data(format!("line {line}: bad {col} `{v}`"));
        let int = |i: usize| rec[i].parse::<u64>().map_err(|_| err(HEADER[i], &rec[i]));
        let f = |i: usize| rec[i].parse::<f64>().map_err(|_| err(HEADER[i], &rec[i]));
        let opt = |i: usize| if rec[i].is_empty() { Ok(None) } else { f(i).map(Some) };
        Ok(Self {
            task: rec[0].to_string(),
            method: rec[1].to_string(),
            n: int(2)? as usize,
            d: int(3)? as usize,
            k: int(4)? as usize,
            rep: int(5)?,
            signal: f(6)?,
            coordinate: if rec[7].is_empty() { None } else { Some(int(7)? as usize) },
            statistic: opt(8)?,
            p_value: opt(9)?,
            reject: match &rec[10] {
                "" => None,
                "true" => Some(true),
                "false" => Some(false),
                other => return Err(err("reject", other)),
            },
            err_l2: opt(11)?,
            err_linf: opt(12)?,
            err_dc_gap: opt(13)?,
            flag: rec[14].to_string(),
            runtime_ms: f(15)?,
        })
    }
}

/// Writes the header and `rows` to any sink.
pub fn write_csv<W: Write>(rows: &[MetricsRow], sink: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(rows: &[MetricsRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_csv(rows, std::io::BufWriter::new(file)).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let path = path.as_ref();
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(Error::Data(format!("{}: unexpected header", path.display())));
    }
    rdr.records()
        .enumerate()
        .map(|(i, r)| MetricsRow::parse(&r.map_err(csv_err)?, i + 2))
        .collect()
}
