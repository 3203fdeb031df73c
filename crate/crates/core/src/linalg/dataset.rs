use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, ShapeBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Real;

/// Response family. Both are canonical-link GLMs with unit dispersion
/// (the Gaussian noise variance is estimated separately).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    GaussianLinear,
    Logistic,
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "gaussian-linear" | "linear" => Ok(Family::GaussianLinear),
            "logistic" | "binomial" => Ok(Family::Logistic),
            other => Err(Error::InvalidConfig(format!("unknown family `{other}`"))),
        }
    }
}

/// Design matrix, response and family tag.
///
/// `x` is kept in column-major layout since coordinate sweeps read whole
/// columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    x: Array2<T>,
    y: Array1<T>,
    family: Family,
}

impl<T: Real> Dataset<T> {
    pub fn new(x: Array2<T>, y: Array1<T>, family: Family) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Dimension(format!(
                "design has {} rows but response has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite entry in dataset".into()));
        }
        if family == Family::Logistic
            && y.iter().any(|&v| v != T::zero() && v != T::one())
        {
            return Err(Error::Data("logistic response must be 0 or 1".into()));
        }
        let x = if x.is_standard_layout() && x.ncols() > 1 {
            let mut f = Array2::zeros(x.raw_dim().f());
            f.assign(&x);
            f
        } else {
            x
        };
        Ok(Self { x, y, family })
    }

    pub fn x(&self) -> ArrayView2<'_, T> {
        self.x.view()
    }

    pub fn y(&self) -> ArrayView1<'_, T> {
        self.y.view()
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    /// Sub-dataset made of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset<T> {
        Dataset {
            x: gather_rows(&self.x, rows),
            y: self.y.select(Axis(0), rows),
            family: self.family,
        }
    }

    /// Sub-dataset keeping only the given columns of `x`.
    pub fn select_columns(&self, cols: &[usize]) -> Dataset<T> {
        let mut x = Array2::zeros((self.n(), cols.len()).f());
        for (dst, &c) in cols.iter().enumerate() {
            x.column_mut(dst).assign(&self.x.column(c));
        }
        Dataset {
            x,
            y: self.y.clone(),
            family: self.family,
        }
    }

    /// Copy with a replaced response vector.
    pub fn with_response(&self, y: Array1<T>) -> Result<Dataset<T>> {
        Dataset::new(self.x.clone(), y, self.family)
    }

    /// Reads a numeric CSV. The response column is removed and every other
    /// column becomes a covariate, in file order.
    pub fn from_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Self> {
        let path = path.as_ref();
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(opts.has_header)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(csv_err)?;
        let response_idx = match &opts.response {
            ResponseColumn::Index(i) => *i,
            ResponseColumn::Name(name) => {
                if !opts.has_header {
                    return Err(Error::InvalidConfig(
                        "response selected by name but the file has no header".into(),
                    ));
                }
                let headers = rdr.headers().map_err(csv_err)?;
                headers.iter().position(|h| h == name).ok_or_else(|| {
                    Error::Data(format!("no column named `{name}` in {}", path.display()))
                })?
            }
        };

        let mut xs: Vec<T> = Vec::new();
        let mut ys: Vec<T> = Vec::new();
        let mut width = None;
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(csv_err)?;
            let w = *width.get_or_insert(record.len());
            if record.len() != w {
                return Err(Error::Data(format!("row {} has {} fields, expected {w}", line + 1, record.len())));
            }
            if response_idx >= w {
                return Err(Error::Index {
                    index: response_idx,
                    len: w,
                });
            }
            for (c, field) in record.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Data(format!("row {}, column {}: `{field}` is not a number", line + 1, c + 1))
                })?;
                if c == response_idx {
                    ys.push(T::of(v));
                } else {
                    xs.push(T::of(v));
                }
            }
        }
        let n = ys.len();
        if n == 0 {
            return Err(Error::Data(format!("{} contains no data rows", path.display())));
        }
        let d = width.unwrap_or(1) - 1;
        let x = Array2::from_shape_vec((n, d), xs).expect("row-major buffer has n*d entries");
        Dataset::new(x, Array1::from(ys), opts.family)
    }
}

fn gather_rows<T: Real>(x: &Array2<T>, rows: &[usize]) -> Array2<T> {
    let mut out = Array2::zeros((rows.len(), x.ncols()).f());
    for (mut dst, src) in out.columns_mut().into_iter().zip(x.columns()) {
        for (d, &r) in dst.iter_mut().zip(rows) {
            *d = src[r];
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ResponseColumn {
    Index(usize),
    Name(String),
}

impl FromStr for ResponseColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => ResponseColumn::Index(i),
            Err(_) => ResponseColumn::Name(s.to_string()),
        })
    }
}

#[derive(Clone, Debug)]
pub struct CsvOptions {
    pub has_header: bool,
    pub response: ResponseColumn,
    pub family: Family,
}
