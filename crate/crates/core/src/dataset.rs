//! Observed experimental data: outcomes, treatment, partially observed
//! covariates, optional cluster and stratum labels.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::{pattern_string, Mask, Matrix};

/// Column names carried alongside the data so output files keep their headers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnNames {
    pub outcome: String,
    pub treatment: String,
    pub covariates: Vec<String>,
    pub cluster: Option<String>,
    pub stratum: Option<String>,
}

impl ColumnNames {
    fn default_for(j: usize) -> Self {
        ColumnNames {
            outcome: "y".into(),
            treatment: "z".into(),
            covariates: (1..=j).map(|k| format!("x{k}")).collect(),
            cluster: None,
            stratum: None,
        }
    }
}

/// Observed data from a two-arm experiment.
///
/// Immutable after construction. Covariate cells flagged in the mask are
/// stored as `0.0`; every read of a covariate goes through the mask, so the
/// stored payload under a missing cell carries no information.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentData {
    outcome: Vec<f64>,
    treatment: Vec<bool>,
    covariates: Matrix,
    mask: Mask,
    cluster_id: Option<Vec<i64>>,
    stratum_id: Option<Vec<i64>>,
    names: ColumnNames,
}

impl ExperimentData {
    /// Validates and builds a dataset. `covariates` and `mask` must both be `N × J`.
    pub fn new(
        outcome: Vec<f64>,
        treatment: Vec<bool>,
        mut covariates: Matrix,
        mask: Mask,
    ) -> Result<Self> {
        let n = outcome.len();
        if treatment.len() != n || covariates.nrows() != n || mask.nrows() != n {
            return Err(Error::InvalidData(format!(
                "length mismatch: outcome {}, treatment {}, covariates {}, mask {}",
                n,
                treatment.len(),
                covariates.nrows(),
                mask.nrows()
            )));
        }
        if covariates.ncols() != mask.ncols() {
            return Err(Error::InvalidData(format!(
                "covariates have {} columns but mask has {}",
                covariates.ncols(),
                mask.ncols()
            )));
        }
        if n < 2 {
            return Err(Error::InvalidData(format!("need at least 2 units, got {n}")));
        }
        let n1 = treatment.iter().filter(|&&t| t).count();
        if n1 == 0 || n1 == n {
            return Err(Error::InvalidData(format!(
                "both arms must be nonempty (treated {n1}, control {})",
                n - n1
            )));
        }
        if outcome.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("outcome".into()));
        }
        for j in 0..covariates.ncols() {
            for i in 0..n {
                if mask.get(i, j) {
                    covariates.set(i, j, 0.0);
                } else if !covariates.get(i, j).is_finite() {
                    return Err(Error::NonFinite(format!("covariate column {} row {}", j + 1, i + 1)));
                }
            }
        }
        let names = ColumnNames::default_for(covariates.ncols());
        Ok(ExperimentData {
            outcome,
            treatment,
            covariates,
            mask,
            cluster_id: None,
            stratum_id: None,
            names,
        })
    }

    /// Dataset without missing covariates.
    pub fn complete(outcome: Vec<f64>, treatment: Vec<bool>, covariates: Matrix) -> Result<Self> {
        let mask = Mask::new(covariates.nrows(), covariates.ncols());
        Self::new(outcome, treatment, covariates, mask)
    }

    /// Attaches cluster labels; treatment must be constant within each cluster.
    pub fn with_clusters(mut self, cluster_id: Vec<i64>) -> Result<Self> {
        if cluster_id.len() != self.n() {
            return Err(Error::InvalidData("cluster id length mismatch".into()));
        }
        let mut arm: BTreeMap<i64, bool> = BTreeMap::new();
        for (i, &c) in cluster_id.iter().enumerate() {
            match arm.get(&c) {
                Some(&t) if t != self.treatment[i] => {
                    return Err(Error::InvalidData(format!(
                        "treatment varies within cluster {c} (row {})",
                        i + 1
                    )))
                }
                Some(_) => {}
                None => {
                    arm.insert(c, self.treatment[i]);
                }
            }
        }
        self.cluster_id = Some(cluster_id);
        if self.names.cluster.is_none() {
            self.names.cluster = Some("cluster".into());
        }
        Ok(self)
    }

    pub fn with_strata(mut self, stratum_id: Vec<i64>) -> Result<Self> {
        if stratum_id.len() != self.n() {
            return Err(Error::InvalidData("stratum id length mismatch".into()));
        }
        self.stratum_id = Some(stratum_id);
        if self.names.stratum.is_none() {
            self.names.stratum = Some("stratum".into());
        }
        Ok(self)
    }

    pub fn with_names(mut self, names: ColumnNames) -> Result<Self> {
        if names.covariates.len() != self.j() {
            return Err(Error::InvalidData("covariate name count mismatch".into()));
        }
        self.names = names;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.outcome.len()
    }

    /// Number of covariates.
    pub fn j(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn n_treated(&self) -> usize {
        self.treatment.iter().filter(|&&t| t).count()
    }

    pub fn n_control(&self) -> usize {
        self.n() - self.n_treated()
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn treatment(&self) -> &[bool] {
        &self.treatment
    }

    /// Treatment as a `0.0`/`1.0` regressor.
    pub fn treatment_f64(&self) -> Vec<f64> {
        self.treatment.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect()
    }

    /// Covariate matrix with `0.0` stored in missing cells.
    pub fn covariates(&self) -> &Matrix {
        &self.covariates
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    /// Observed value of covariate `j` for unit `i`, or `None` when missing.
    pub fn covariate(&self, i: usize, j: usize) -> Option<f64> {
        if self.mask.get(i, j) {
            None
        } else {
            Some(self.covariates.get(i, j))
        }
    }

    pub fn cluster_id(&self) -> Option<&[i64]> {
        self.cluster_id.as_deref()
    }

    pub fn stratum_id(&self) -> Option<&[i64]> {
        self.stratum_id.as_deref()
    }

    pub fn names(&self) -> &ColumnNames {
        &self.names
    }

    /// Units with every covariate observed.
    pub fn complete_cases(&self) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| (0..self.j()).all(|j| !self.mask.get(i, j)))
            .collect()
    }

    /// Restriction to the given units, keeping covariate columns and labels.
    /// Fails with [`Error::EmptyArm`] when the subset loses an arm.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let n1 = rows.iter().filter(|&&i| self.treatment[i]).count();
        if rows.len() < 2 || n1 == 0 || n1 == rows.len() {
            return Err(Error::EmptyArm(format!(
                "subset of {} units has {} treated and {} control",
                rows.len(),
                n1,
                rows.len() - n1
            )));
        }
        Ok(ExperimentData {
            outcome: rows.iter().map(|&i| self.outcome[i]).collect(),
            treatment: rows.iter().map(|&i| self.treatment[i]).collect(),
            covariates: self.covariates.select_rows(rows),
            mask: self.mask.select_rows(rows),
            cluster_id: self.cluster_id.as_ref().map(|c| rows.iter().map(|&i| c[i]).collect()),
            stratum_id: self.stratum_id.as_ref().map(|s| rows.iter().map(|&i| s[i]).collect()),
            names: self.names.clone(),
        })
    }

    /// Same units under a different assignment (used by randomization tests).
    pub fn with_treatment(&self, treatment: Vec<bool>) -> Result<Self> {
        let mut out = ExperimentData::new(
            self.outcome.clone(),
            treatment,
            self.covariates.clone(),
            self.mask.clone(),
        )?;
        out.names = self.names.clone();
        out.stratum_id = self.stratum_id.clone();
        if let Some(c) = &self.cluster_id {
            out = out.with_clusters(c.clone())?;
        }
        Ok(out)
    }
}

/// Realized missingness patterns in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternTable {
    pub patterns: Vec<Vec<bool>>,
    pub counts: Vec<usize>,
    pub proportions: Vec<f64>,
    /// Pattern index of every unit.
    pub membership: Vec<usize>,
    /// `[control, treated]` counts per pattern.
    pub arm_counts: Vec<[usize; 2]>,
}

impl PatternTable {
    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// Units belonging to pattern `k`.
    pub fn members(&self, k: usize) -> Vec<usize> {
        self.membership
            .iter()
            .enumerate()
            .filter(|(_, &m)| m == k)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn label(&self, k: usize) -> String {
        pattern_string(&self.patterns[k])
    }
}

pub fn pattern_table(data: &ExperimentData) -> PatternTable {
    let n = data.n();
    let mut index: BTreeMap<Vec<bool>, usize> = BTreeMap::new();
    let rows: Vec<Vec<bool>> = (0..n).map(|i| data.mask().row(i)).collect();
    for r in &rows {
        let next = index.len();
        index.entry(r.clone()).or_insert(next);
    }
    // BTreeMap iteration is lexicographic (false < true); renumber accordingly.
    let patterns: Vec<Vec<bool>> = index.keys().cloned().collect();
    let order: BTreeMap<&Vec<bool>, usize> = patterns.iter().enumerate().map(|(k, p)| (p, k)).collect();
    let membership: Vec<usize> = rows.iter().map(|r| order[r]).collect();
    let mut counts = vec![0usize; patterns.len()];
    let mut arm_counts = vec![[0usize; 2]; patterns.len()];
    for (i, &k) in membership.iter().enumerate() {
        counts[k] += 1;
        arm_counts[k][data.treatment()[i] as usize] += 1;
    }
    let proportions = counts.iter().map(|&c| c as f64 / n as f64).collect();
    PatternTable {
        patterns,
        counts,
        proportions,
        membership,
        arm_counts,
    }
}

/// Columns with no missing value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompleteCovariateSet {
    pub indices: Vec<usize>,
}

pub fn complete_covariate_set(data: &ExperimentData) -> CompleteCovariateSet {
    CompleteCovariateSet {
        indices: (0..data.j())
            .filter(|&j| data.mask().col(j).iter().all(|&m| !m))
            .collect(),
    }
}

/// Which CSV columns are covariates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CovariateColumns {
    Named(Vec<String>),
    /// Every column not assigned another role.
    Rest,
}

/// Column-role mapping for [`load_csv`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub outcome: String,
    pub treatment: String,
    pub covariates: CovariateColumns,
    pub cluster: Option<String>,
    pub stratum: Option<String>,
}

impl Schema {
    pub fn new(outcome: impl Into<String>, treatment: impl Into<String>) -> Self {
        Schema {
            outcome: outcome.into(),
            treatment: treatment.into(),
            covariates: CovariateColumns::Rest,
            cluster: None,
            stratum: None,
        }
    }
}

/// Empty, `NA` or `nan` (case-insensitive, surrounding whitespace ignored).
pub fn is_missing_cell(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<ExperimentData> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, schema)
}

/// Parses CSV from any reader. Row numbers in errors count data rows from 1.
pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<ExperimentData> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Csv {
            row: 0,
            message: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidData(format!("column {name:?} not found in header")))
    };
    let y_col = find(&schema.outcome)?;
    let z_col = find(&schema.treatment)?;
    let cl_col = schema.cluster.as_deref().map(find).transpose()?;
    let st_col = schema.stratum.as_deref().map(find).transpose()?;
    let x_cols: Vec<usize> = match &schema.covariates {
        CovariateColumns::Named(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
        CovariateColumns::Rest => (0..headers.len())
            .filter(|&c| c != y_col && c != z_col && Some(c) != cl_col && Some(c) != st_col)
            .collect(),
    };
    let j = x_cols.len();

    let mut outcome = Vec::new();
    let mut treatment = Vec::new();
    let mut xs: Vec<Vec<f64>> = vec![Vec::new(); j];
    let mut ms: Vec<Vec<bool>> = vec![Vec::new(); j];
    let mut clusters = Vec::new();
    let mut strata = Vec::new();

    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| Error::Csv {
            row,
            message: e.to_string(),
        })?;
        if rec.len() != headers.len() {
            return Err(Error::Csv {
                row,
                message: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        let cell = |c: usize| rec.get(c).unwrap_or("");
        let y = cell(y_col);
        if is_missing_cell(y) {
            return Err(Error::Csv {
                row,
                message: format!("missing outcome in column {:?}", schema.outcome),
            });
        }
        outcome.push(parse_number(y, row, &schema.outcome)?);
        let z = cell(z_col);
        if is_missing_cell(z) {
            return Err(Error::Csv {
                row,
                message: format!("missing treatment in column {:?}", schema.treatment),
            });
        }
        let zv = parse_number(z, row, &schema.treatment)?;
        treatment.push(if zv == 0.0 {
            false
        } else if zv == 1.0 {
            true
        } else {
            return Err(Error::Csv {
                row,
                message: format!("treatment value {:?} is not 0 or 1", z.trim()),
            });
        });
        for (k, &c) in x_cols.iter().enumerate() {
            let v = cell(c);
            if is_missing_cell(v) {
                xs[k].push(0.0);
                ms[k].push(true);
            } else {
                xs[k].push(parse_number(v, row, &headers[c])?);
                ms[k].push(false);
            }
        }
        if let Some(c) = cl_col {
            clusters.push(parse_label(cell(c), row, &headers[c])?);
        }
        if let Some(c) = st_col {
            strata.push(parse_label(cell(c), row, &headers[c])?);
        }
    }
    let n = outcome.len();
    let covariates = Matrix::from_columns(n, &xs);
    let mask = Mask::from_fn(n, j, |i, k| ms[k][i]);
    let mut data = ExperimentData::new(outcome, treatment, covariates, mask)?;
    let names = ColumnNames {
        outcome: schema.outcome.clone(),
        treatment: schema.treatment.clone(),
        covariates: x_cols.iter().map(|&c| headers[c].clone()).collect(),
        cluster: schema.cluster.clone(),
        stratum: schema.stratum.clone(),
    };
    if cl_col.is_some() {
        data = data.with_clusters(clusters)?;
    }
    if st_col.is_some() {
        data = data.with_strata(strata)?;
    }
    data.with_names(names)
}

fn parse_number(cell: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| Error::Csv {
        row,
        message: format!("cannot parse {:?} in column {column:?} as a number", cell.trim()),
    })?;
    if !v.is_finite() {
        return Err(Error::Csv {
            row,
            message: format!("non-finite value in column {column:?}"),
        });
    }
    Ok(v)
}

fn parse_label(cell: &str, row: usize, column: &str) -> Result<i64> {
    cell.trim().parse().map_err(|_| Error::Csv {
        row,
        message: format!("label {:?} in column {column:?} is not an integer", cell.trim()),
    })
}

/// Writes the data back in the layout [`load_csv`] reads; missing cells become `NA`.
pub fn write_csv<W: Write>(data: &ExperimentData, writer: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let names = data.names();
    let mut header = vec![names.outcome.clone(), names.treatment.clone()];
    header.extend(names.covariates.iter().cloned());
    if data.cluster_id().is_some() {
        header.push(names.cluster.clone().unwrap_or_else(|| "cluster".into()));
    }
    if data.stratum_id().is_some() {
        header.push(names.stratum.clone().unwrap_or_else(|| "stratum".into()));
    }
    wtr.write_record(&header).map_err(csv_write_err)?;
    for i in 0..data.n() {
        let mut rec = vec![
            format!("{}", data.outcome()[i]),
            if data.treatment()[i] { "1".into() } else { "0".into() },
        ];
        for j in 0..data.j() {
            rec.push(match data.covariate(i, j) {
                Some(v) => format!("{v}"),
                None => "NA".into(),
            });
        }
        if let Some(c) = data.cluster_id() {
            rec.push(c[i].to_string());
        }
        if let Some(s) = data.stratum_id() {
            rec.push(s[i].to_string());
        }
        wtr.write_record(&rec).map_err(csv_write_err)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_csv(data: &ExperimentData, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_csv(data, std::io::BufWriter::new(file))
}

fn csv_write_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema::new("y", "z")
    }

    fn read(s: &str) -> Result<ExperimentData> {
        read_csv(s.as_bytes(), &schema())
    }

    #[test]
    fn na_cell_sets_mask() {
        let d = read("y,z,x1\n1.0,1,2\n2.0,0,NA\n3.0,1,4\n").unwrap();
        assert!(d.mask().get(1, 0));
        assert!(!d.mask().get(0, 0));
        assert!(!d.mask().get(2, 0));
        assert_eq!(d.covariate(1, 0), None);
        assert_eq!(d.covariates().get(1, 0), 0.0);
    }

    #[test]
    fn missing_encodings() {
        for enc in ["", "NA", "na", "NaN", "nan", " NA "] {
            let d = read(&format!("y,z,x1\n1,1,{enc}\n2,0,1\n")).unwrap();
            assert!(d.mask().get(0, 0), "encoding {enc:?}");
        }
    }

    #[test]
    fn non_binary_treatment_names_row() {
        let err = read("y,z,x1\n1,1,2\n2,2,3\n3,0,1\n").unwrap_err();
        match err {
            Error::Csv { row, message } => {
                assert_eq!(row, 2);
                assert!(message.contains("not 0 or 1"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_outcome_and_treatment_rejected() {
        assert!(matches!(read("y,z\nNA,1\n2,0\n"), Err(Error::Csv { row: 1, .. })));
        assert!(matches!(read("y,z\n1,1\n2,\n"), Err(Error::Csv { row: 2, .. })));
    }

    #[test]
    fn ragged_row_rejected() {
        assert!(matches!(
            read("y,z,x1\n1,1,2\n2,0\n"),
            Err(Error::Csv { row: 2, .. })
        ));
    }

    #[test]
    fn four_pattern_layout() {
        let d = read("y,z,x1,x2\n1,1,1,2\n2,0,1,NA\n3,1,NA,2\n4,0,NA,NA\n").unwrap();
        let t = pattern_table(&d);
        assert_eq!(
            t.patterns,
            vec![
                vec![false, false],
                vec![false, true],
                vec![true, false],
                vec![true, true]
            ]
        );
        assert_eq!(t.counts, vec![1, 1, 1, 1]);
    }

    #[test]
    fn pattern_table_counts() {
        let n = 5;
        let mask = Mask::from_fn(n, 1, |i, _| i >= 2);
        let d = ExperimentData::new(
            vec![0.0; n],
            vec![true, false, true, false, true],
            Matrix::zeros(n, 1),
            mask,
        )
        .unwrap();
        let t = pattern_table(&d);
        assert_eq!(t.patterns, vec![vec![false], vec![true]]);
        assert_eq!(t.counts, vec![2, 3]);
        assert!((t.proportions.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn absent_pattern_not_stored() {
        let rows = [[false, false], [false, true], [false, true], [true, true]];
        let mask = Mask::from_fn(4, 2, |i, j| rows[i][j]);
        let d = ExperimentData::new(
            vec![0.0; 4],
            vec![true, false, true, false],
            Matrix::zeros(4, 2),
            mask,
        )
        .unwrap();
        let t = pattern_table(&d);
        assert_eq!(t.len(), 3);
        assert_eq!(t.counts, vec![1, 2, 1]);
        assert!(!t.patterns.contains(&vec![true, false]));
    }

    #[test]
    fn zero_mask_single_pattern() {
        let d = ExperimentData::complete(vec![1.0, 2.0, 3.0], vec![true, false, true], Matrix::zeros(3, 2)).unwrap();
        let t = pattern_table(&d);
        assert_eq!(t.patterns, vec![vec![false, false]]);
        assert_eq!(t.counts, vec![3]);
        assert_eq!(complete_covariate_set(&d).indices, vec![0, 1]);
    }

    #[test]
    fn complete_covariates_subset_and_empty() {
        let mask = Mask::from_fn(4, 3, |i, j| j > 0 && i == j);
        let d = ExperimentData::new(vec![0.0; 4], vec![true, false, true, false], Matrix::zeros(4, 3), mask).unwrap();
        assert_eq!(complete_covariate_set(&d).indices, vec![0]);
        let mask = Mask::from_fn(4, 2, |i, j| i == j);
        let d = ExperimentData::new(vec![0.0; 4], vec![true, false, true, false], Matrix::zeros(4, 2), mask).unwrap();
        assert!(complete_covariate_set(&d).indices.is_empty());
    }

    #[test]
    fn cluster_treatment_must_be_constant() {
        let d = ExperimentData::complete(vec![0.0; 4], vec![true, true, false, false], Matrix::zeros(4, 0)).unwrap();
        assert!(d.clone().with_clusters(vec![1, 1, 2, 2]).is_ok());
        assert!(d.with_clusters(vec![1, 2, 2, 3]).is_err());
    }

    #[test]
    fn rest_excludes_role_columns() {
        let s = Schema {
            cluster: Some("g".into()),
            ..schema()
        };
        let d = read_csv("g,y,z,a,b\n1,1,1,2,3\n2,2,0,NA,1\n".as_bytes(), &s).unwrap();
        assert_eq!(d.names().covariates, vec!["a".to_string(), "b".to_string()]);
        assert_eq!(d.cluster_id(), Some(&[1i64, 2][..]));
    }

    #[test]
    fn write_uses_lf_and_na() {
        let d = read("y,z,x1\n1.5,1,NA\n-2.25,0,3\n").unwrap();
        let mut buf = Vec::new();
        write_csv(&d, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "y,z,x1\n1.5,1,NA\n-2.25,0,3\n");
    }
}
