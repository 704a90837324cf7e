use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{BssError, Result};
use crate::linalg::{center_columns_with_means, ensure_finite, Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Pls1,
    Pls2,
    Pca,
}

impl ModelKind {
    pub fn needs_response(self) -> bool {
        !matches!(self, ModelKind::Pca)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Pls1 => "pls1",
            ModelKind::Pls2 => "pls2",
            ModelKind::Pca => "pca",
        })
    }
}

impl FromStr for ModelKind {
    type Err = BssError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pls1" => Ok(ModelKind::Pls1),
            "pls2" => Ok(ModelKind::Pls2),
            "pca" => Ok(ModelKind::Pca),
            other => Err(BssError::config(format!("unknown model {other:?}"))),
        }
    }
}

/// PLS deflation scheme for the response block.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlsMode {
    #[default]
    Regression,
    Canonical,
}

impl fmt::Display for PlsMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlsMode::Regression => "regression",
            PlsMode::Canonical => "canonical",
        })
    }
}

impl FromStr for PlsMode {
    type Err = BssError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "regression" => Ok(PlsMode::Regression),
            "canonical" => Ok(PlsMode::Canonical),
            other => Err(BssError::config(format!("unknown PLS mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub mode: PlsMode,
    pub components: usize,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        ModelSpec {
            kind,
            mode: PlsMode::Regression,
            components: 1,
        }
    }

    pub fn with_mode(mut self, mode: PlsMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_components(mut self, h: usize) -> Self {
        self.components = h;
        self
    }
}

/// Design matrix `X` (n x p) and, for PLS, response matrix `Y` (n x q).
///
/// The constructors do not center; use [`Dataset::centered`] for raw data.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Matrix,
    y: Option<Matrix>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Option<Matrix>) -> Result<Self> {
        ensure_finite(&x, "X")?;
        if let Some(y) = &y {
            ensure_finite(y, "Y")?;
            if y.nrows() != x.nrows() {
                return Err(BssError::dimension(format!(
                    "X has {} rows but Y has {}",
                    x.nrows(),
                    y.nrows()
                )));
            }
        }
        Ok(Dataset { x, y })
    }

    pub fn pca(x: Matrix) -> Result<Self> {
        Dataset::new(x, None)
    }

    pub fn pls(x: Matrix, y: Matrix) -> Result<Self> {
        Dataset::new(x, Some(y))
    }

    /// Centers `X` (and `Y`) and returns the removed column means.
    pub fn centered(x: &Matrix, y: Option<&Matrix>) -> Result<(Self, Vector, Option<Vector>)> {
        let (xc, xm) = center_columns_with_means(x)?;
        let (yc, ym) = match y {
            Some(y) => {
                let (yc, ym) = center_columns_with_means(y)?;
                (Some(yc), Some(ym))
            }
            None => (None, None),
        };
        Ok((Dataset::new(xc, yc)?, xm, ym))
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> Option<&Matrix> {
        self.y.as_ref()
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn q(&self) -> usize {
        self.y.as_ref().map_or(0, |y| y.ncols())
    }

    pub(crate) fn response_for(&self, kind: ModelKind) -> Result<Option<&Matrix>> {
        match kind {
            ModelKind::Pca => Ok(None),
            ModelKind::Pls1 => match &self.y {
                Some(y) if y.ncols() == 1 => Ok(Some(y)),
                Some(y) => Err(BssError::dimension(format!(
                    "PLS1 needs a single response column, got {}",
                    y.ncols()
                ))),
                None => Err(BssError::dimension("PLS1 needs a response vector")),
            },
            ModelKind::Pls2 => match &self.y {
                Some(y) => Ok(Some(y)),
                None => Err(BssError::dimension("PLS2 needs a response matrix (q = 0)")),
            },
        }
    }

    /// Keeps only the rows in `rows`, in that order.
    pub fn subset_rows(&self, rows: &[usize]) -> Dataset {
        let pick = |m: &Matrix| Matrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)]);
        Dataset {
            x: pick(&self.x),
            y: self.y.as_ref().map(pick),
        }
    }
}
