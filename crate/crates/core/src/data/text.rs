use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    User,
    Item,
}

impl std::fmt::Display for EntityKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EntityKind::User => "user",
            EntityKind::Item => "item",
        })
    }
}

/// Precomputed profile embeddings, one row per dense entity id.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEmbeddings {
    pub matrix: Array2<f64>,
    pub kind: EntityKind,
}

impl TextEmbeddings {
    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }
}

/// Reads a header `n d` followed by `n` rows of `d` reals.
pub fn load_text_embeddings(path: &Path, expected_entities: usize, kind: EntityKind) -> Result<TextEmbeddings> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_owned(),
        line: line + 1,
        msg,
    };

    let (hline, header) = lines
        .next()
        .ok_or_else(|| Error::EmptyDataset(path.to_owned()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| parse_err(hline, format!("bad header: {e}")))?;
    let [n, d] = dims[..] else {
        return Err(parse_err(hline, "header must be `n d`".into()));
    };
    if n != expected_entities {
        return Err(Error::Shape(format!(
            "{}: {} {kind} rows declared, dataset has {expected_entities}",
            path.display(),
            n
        )));
    }

    let mut matrix = Array2::<f64>::zeros((n, d));
    let mut rows = 0;
    for (lineno, line) in lines {
        if rows == n {
            return Err(Error::Shape(format!("{}: more than {n} rows", path.display())));
        }
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(lineno, format!("bad value: {e}")))?;
        if values.len() != d {
            return Err(Error::Shape(format!(
                "{}: line {} has {} values, expected {d}",
                path.display(),
                lineno + 1,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "{}: line {}: non-finite value {bad}",
                path.display(),
                lineno + 1
            )));
        }
        matrix.row_mut(rows).assign(&ndarray::ArrayView1::from(&values));
        rows += 1;
    }
    if rows != n {
        return Err(Error::Shape(format!(
            "{}: header declares {n} rows, found {rows}",
            path.display()
        )));
    }
    Ok(TextEmbeddings { matrix, kind })
}

/// Deterministic stand-in for profile embeddings. With `labels`, each row is
/// its label's random centroid plus `noise`-scaled Gaussian jitter; without,
/// rows are pure noise.
pub fn synth_text_embeddings(
    n: usize,
    dim: usize,
    kind: EntityKind,
    labels: Option<&[usize]>,
    noise: f64,
    seed: u64,
) -> TextEmbeddings {
    let salt = match kind {
        EntityKind::User => 0x75,
        EntityKind::Item => 0x69,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (salt << 56));
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let n_labels = labels.map_or(0, |l| l.iter().copied().max().map_or(0, |m| m + 1));
    let centroids = Array2::from_shape_simple_fn((n_labels, dim), &mut normal);
    let mut matrix = Array2::from_shape_simple_fn((n, dim), || noise * normal());
    if let Some(labels) = labels {
        for (mut row, &l) in matrix.rows_mut().into_iter().zip(labels) {
            row += &centroids.row(l);
        }
    } else if noise == 0.0 {
        matrix.mapv_inplace(|_| normal());
    }
    TextEmbeddings { matrix, kind }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(body: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.txt");
        fs::write(&path, body).unwrap();
        (dir, path)
    }

    #[test]
    fn loads_matrix() {
        let (_d, p) = write("2 3\n1 2 3\n4 5 6.5\n");
        let t = load_text_embeddings(&p, 2, EntityKind::Item).unwrap();
        assert_eq!(t.matrix.dim(), (2, 3));
        assert_eq!(t.matrix[[1, 2]], 6.5);
    }

    #[test]
    fn missing_row_is_shape_error() {
        let (_d, p) = write("2 3\n1 2 3\n");
        assert!(matches!(load_text_embeddings(&p, 2, EntityKind::Item), Err(Error::Shape(_))));
    }

    #[test]
    fn entity_count_mismatch_is_shape_error() {
        let (_d, p) = write("2 1\n1\n2\n");
        assert!(matches!(load_text_embeddings(&p, 3, EntityKind::User), Err(Error::Shape(_))));
    }

    #[test]
    fn non_finite_is_data_error() {
        let (_d, p) = write("1 2\n1 NaN\n");
        assert!(matches!(load_text_embeddings(&p, 1, EntityKind::User), Err(Error::Data(_))));
        let (_d, p) = write("1 2\n1 inf\n");
        assert!(matches!(load_text_embeddings(&p, 1, EntityKind::User), Err(Error::Data(_))));
    }

    #[test]
    fn synth_is_reproducible_from_seed() {
        let a = synth_text_embeddings(5, 4, EntityKind::User, None, 0.0, 42);
        let b = synth_text_embeddings(5, 4, EntityKind::User, None, 0.0, 42);
        assert_eq!(a, b);
        let c = synth_text_embeddings(5, 4, EntityKind::User, None, 0.0, 43);
        assert_ne!(a, c);
        assert!(a.matrix.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn labelled_synth_clusters_by_label() {
        let labels = [0, 1, 0, 1];
        let t = synth_text_embeddings(4, 8, EntityKind::Item, Some(&labels), 0.0, 3);
        assert_eq!(t.matrix.row(0), t.matrix.row(2));
        assert_ne!(t.matrix.row(0), t.matrix.row(1));
    }
}
