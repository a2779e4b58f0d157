//! Subset utilities built from per-datum gradients and losses.
//!
//! * `Chg`: `||α||² − ||α − mean_{i∈S} l_i·∇f_i||²` with `α` the dataset mean of `l_i·∇f_i`
//! * `Gradient`: the same quadratic form on raw gradients `∇f_i`
//! * `Hardness`: `mean_{i∈S} l_i`
//!
//! Losses are detached snapshots; nothing here differentiates through them.

use std::fmt;
use std::io::{BufRead, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dist_sq, norm_sq, Matrix};
use crate::shapley::{chg_closed_form_shapley, HarmonicSums, Method, ShapleyValues};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UtilityKind {
    Chg,
    Hardness,
    Gradient,
}

impl fmt::Display for UtilityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UtilityKind::Chg => "chg",
            UtilityKind::Hardness => "hardness",
            UtilityKind::Gradient => "gradient",
        })
    }
}

impl FromStr for UtilityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "chg" => Ok(UtilityKind::Chg),
            "hardness" => Ok(UtilityKind::Hardness),
            "gradient" => Ok(UtilityKind::Gradient),
            other => Err(Error::Input(format!("unknown utility scheme {other:?}"))),
        }
    }
}

/// Per-datum vectors and losses: the players of the valuation game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSet {
    vectors: Matrix,
    losses: Vec<f64>,
    /// Whether `vectors` already hold `l_i·∇f_i` rather than `∇f_i`.
    weighted: bool,
}

impl GradientSet {
    pub fn new(vectors: Matrix, losses: Vec<f64>, weighted: bool) -> Result<Self> {
        if vectors.rows() == 0 || vectors.cols() == 0 {
            return Err(Error::Domain("gradient set must be non-empty".into()));
        }
        if losses.len() != vectors.rows() {
            return Err(Error::Input(format!(
                "{} losses for {} vectors",
                losses.len(),
                vectors.rows()
            )));
        }
        if !vectors.is_finite() {
            return Err(Error::Input("non-finite gradient entry".into()));
        }
        if let Some(i) = losses.iter().position(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::Input(format!(
                "loss {i} is {} (must be finite and >= 0)",
                losses[i]
            )));
        }
        Ok(GradientSet {
            vectors,
            losses,
            weighted,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn is_weighted(&self) -> bool {
        self.weighted
    }

    /// Restrict to the given rows.
    pub fn subset(&self, indices: &[usize]) -> Result<GradientSet> {
        check_indices(indices, self.len())?;
        GradientSet::new(
            self.vectors.select_rows(indices),
            indices.iter().map(|&i| self.losses[i]).collect(),
            self.weighted,
        )
    }

    /// The vectors a quadratic scheme plays with.
    fn scheme_vectors(&self, kind: UtilityKind) -> Result<Matrix> {
        match (kind, self.weighted) {
            (UtilityKind::Chg, true) | (UtilityKind::Gradient, false) => Ok(self.vectors.clone()),
            (UtilityKind::Chg, false) => {
                let mut x = self.vectors.clone();
                for (i, &l) in self.losses.iter().enumerate() {
                    x.row_mut(i).iter_mut().for_each(|v| *v *= l);
                }
                Ok(x)
            }
            (UtilityKind::Gradient, true) => Err(Error::Input(
                "gradient scheme needs raw gradients, but this set is loss-weighted".into(),
            )),
            (UtilityKind::Hardness, _) => Err(Error::Input(
                "hardness scheme has no vector representation".into(),
            )),
        }
    }

    // --- serialization -------------------------------------------------

    /// Text form: a header line `n d weighted_flag`, then `n` rows of `d`
    /// floats, then `n` loss values. Tokens are whitespace separated.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {} {}", self.len(), self.dim(), self.weighted as u8)?;
        for row in self.vectors.iter_rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        let line: Vec<String> = self.losses.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", line.join(" "))
    }

    pub fn read_text<R: Read>(r: R) -> Result<Self> {
        let mut text = String::new();
        std::io::BufReader::new(r)
            .read_to_string(&mut text)
            .map_err(|e| Error::Input(format!("gradient set: {e}")))?;
        let mut lines = text.lines();
        let (n, d, weighted) = parse_header(lines.next().unwrap_or(""))?;
        let mut values = Vec::with_capacity(n * d + n);
        for tok in lines.flat_map(str::split_whitespace) {
            values.push(
                tok.parse::<f64>()
                    .map_err(|e| Error::Input(format!("bad number {tok:?}: {e}")))?,
            );
        }
        if values.len() != n * d + n {
            return Err(Error::Input(format!(
                "expected {} numbers after header, found {}",
                n * d + n,
                values.len()
            )));
        }
        let losses = values.split_off(n * d);
        GradientSet::new(Matrix::from_vec(n, d, values)?, losses, weighted)
    }

    /// Binary form: the same ASCII header line (terminated by `\n`), then
    /// `n·d` row-major vector entries and `n` losses as little-endian IEEE-754
    /// `f64`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {} {}", self.len(), self.dim(), self.weighted as u8)?;
        for v in self.vectors.as_slice().iter().chain(&self.losses) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(r: R) -> Result<Self> {
        let mut r = std::io::BufReader::new(r);
        let mut header = String::new();
        r.read_line(&mut header)
            .map_err(|e| Error::Input(format!("gradient set header: {e}")))?;
        let (n, d, weighted) = parse_header(header.trim_end())?;
        let total = n * d + n;
        let mut bytes = Vec::with_capacity(total * 8);
        r.read_to_end(&mut bytes)
            .map_err(|e| Error::Input(format!("gradient set body: {e}")))?;
        if bytes.len() != total * 8 {
            return Err(Error::Input(format!(
                "expected {} payload bytes, found {}",
                total * 8,
                bytes.len()
            )));
        }
        let mut values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let losses = values.split_off(n * d);
        GradientSet::new(Matrix::from_vec(n, d, values)?, losses, weighted)
    }

    /// Load by extension: `.bin` is binary, anything else text.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "bin") {
            Self::read_binary(file)
        } else {
            Self::read_text(file)
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let w = std::io::BufWriter::new(file);
        let res = if path.extension().is_some_and(|e| e == "bin") {
            self.write_binary(w)
        } else {
            self.write_text(w)
        };
        res.map_err(|e| Error::io(path, e))
    }
}

fn parse_header(line: &str) -> Result<(usize, usize, bool)> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    let bad = || {
        Error::Input(format!(
            "bad gradient set header {line:?}, want `n d weighted_flag`"
        ))
    };
    if parts.len() != 3 {
        return Err(bad());
    }
    let n = parts[0].parse().map_err(|_| bad())?;
    let d = parts[1].parse().map_err(|_| bad())?;
    let weighted = match parts[2] {
        "0" => false,
        "1" => true,
        _ => return Err(bad()),
    };
    Ok((n, d, weighted))
}

fn check_indices(indices: &[usize], n: usize) -> Result<()> {
    match indices.iter().find(|&&i| i >= n) {
        Some(i) => Err(Error::Input(format!("index {i} out of range for {n} data"))),
        None => Ok(()),
    }
}

/// A utility kind together with its reference vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityScheme {
    pub kind: UtilityKind,
    pub alpha: Vec<f64>,
}

impl UtilityScheme {
    /// Scheme with `α` computed from `gs`.
    pub fn for_set(gs: &GradientSet, kind: UtilityKind) -> Result<Self> {
        Ok(UtilityScheme {
            kind,
            alpha: reference_vector(gs, kind)?,
        })
    }
}

/// Mean of the scheme's vectors over the whole set; zeros for hardness.
pub fn reference_vector(gs: &GradientSet, kind: UtilityKind) -> Result<Vec<f64>> {
    if gs.is_empty() {
        return Err(Error::Domain("reference vector of an empty set".into()));
    }
    match kind {
        UtilityKind::Hardness => Ok(vec![0.0; gs.dim()]),
        _ => Ok(gs.scheme_vectors(kind)?.column_means()),
    }
}

/// `U(S)` for the scheme; `U(∅) = 0` for every kind.
pub fn subset_utility(scheme: &UtilityScheme, gs: &GradientSet, subset: &[usize]) -> Result<f64> {
    check_indices(subset, gs.len())?;
    if subset.is_empty() {
        return Ok(0.0);
    }
    let k = subset.len() as f64;
    match scheme.kind {
        UtilityKind::Hardness => Ok(subset.iter().map(|&i| gs.losses[i]).sum::<f64>() / k),
        kind => {
            if scheme.alpha.len() != gs.dim() {
                return Err(Error::Input(format!(
                    "alpha has dimension {}, set has {}",
                    scheme.alpha.len(),
                    gs.dim()
                )));
            }
            let mut mean = vec![0.0; gs.dim()];
            for &i in subset {
                let scale = match (kind, gs.weighted) {
                    (UtilityKind::Chg, false) => gs.losses[i],
                    (UtilityKind::Gradient, true) => {
                        return Err(Error::Input("gradient scheme needs raw gradients".into()))
                    }
                    _ => 1.0,
                };
                for (m, v) in mean.iter_mut().zip(gs.vectors.row(i)) {
                    *m += scale * v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= k);
            Ok(norm_sq(&scheme.alpha) - dist_sq(&scheme.alpha, &mean))
        }
    }
}

/// The `(X, α)` pair whose closed-form Shapley values are the scheme's values.
pub fn chg_inputs_for_closed_form(
    gs: &GradientSet,
    kind: UtilityKind,
) -> Result<(Matrix, Vec<f64>)> {
    if kind == UtilityKind::Hardness {
        return Err(Error::Input(
            "hardness utility is not quadratic; use hardness_shapley".into(),
        ));
    }
    let x = gs.scheme_vectors(kind)?;
    let alpha = x.column_means();
    Ok((x, alpha))
}

/// Shapley values of the mean game `U(S) = mean_{i∈S} l_i`.
///
/// The game is linear in `l`, so `φ_j = a_n·l_j + b_n·Σ_{i≠j} l_i` with
/// `a_n = H_n/n` and `b_n = −(H_n − 1)/(n(n−1))`.
pub fn hardness_shapley(losses: &[f64]) -> Result<ShapleyValues> {
    let n = losses.len();
    if n == 0 {
        return Err(Error::Domain("hardness Shapley of an empty set".into()));
    }
    if let Some(i) = losses.iter().position(|l| !l.is_finite() || *l < 0.0) {
        return Err(Error::Input(format!(
            "loss {i} is {} (must be finite and >= 0)",
            losses[i]
        )));
    }
    let (own, others) = hardness_coefficients(n)?;
    let total = crate::linalg::stable_sum(losses.iter().copied());
    let values = losses
        .iter()
        .map(|&l| own * l + others * (total - l))
        .collect();
    Ok(ShapleyValues {
        values,
        method: Method::ClosedForm,
    })
}

/// `(a_n, b_n)` for [`hardness_shapley`].
pub fn hardness_coefficients(n: usize) -> Result<(f64, f64)> {
    let h1 = HarmonicSums::new(n)?.h1;
    let nf = n as f64;
    let others = if n == 1 {
        0.0
    } else {
        -(h1 - 1.0) / (nf * (nf - 1.0))
    };
    Ok((h1 / nf, others))
}

/// Shapley values of every datum under the given scheme, recomputing `α`
/// from `gs`.
pub fn scheme_shapley(gs: &GradientSet, kind: UtilityKind) -> Result<ShapleyValues> {
    match kind {
        UtilityKind::Hardness => hardness_shapley(&gs.losses),
        _ => {
            let (x, alpha) = chg_inputs_for_closed_form(gs, kind)?;
            chg_closed_form_shapley(&x, &alpha)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapley::{exact_shapley, FnGame};

    fn two_by_two(losses: Vec<f64>) -> GradientSet {
        let v = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        GradientSet::new(v, losses, false).unwrap()
    }

    #[test]
    fn reference_vectors() {
        let gs = two_by_two(vec![1.0, 1.0]);
        assert_eq!(
            reference_vector(&gs, UtilityKind::Chg).unwrap(),
            vec![0.5, 0.5]
        );
        let gs = two_by_two(vec![0.0, 0.0]);
        assert_eq!(
            reference_vector(&gs, UtilityKind::Chg).unwrap(),
            vec![0.0, 0.0]
        );
        let gs = two_by_two(vec![7.0, 0.1]);
        assert_eq!(
            reference_vector(&gs, UtilityKind::Gradient).unwrap(),
            vec![0.5, 0.5]
        );
        assert_eq!(
            reference_vector(&gs, UtilityKind::Hardness).unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn subset_utilities() {
        let gs = GradientSet::new(
            Matrix::from_rows(&[[2.0, 0.0], [0.0, 1.0], [0.0, 2.0]]).unwrap(),
            vec![0.5, 1.0, 0.5],
            false,
        )
        .unwrap();
        // mean of x over {0,1} is (0.5, 0.5); use that as α
        let scheme = UtilityScheme {
            kind: UtilityKind::Chg,
            alpha: vec![0.5, 0.5],
        };
        assert_eq!(subset_utility(&scheme, &gs, &[0, 1]).unwrap(), 0.5);
        assert_eq!(subset_utility(&scheme, &gs, &[]).unwrap(), 0.0);

        let scheme = UtilityScheme {
            kind: UtilityKind::Gradient,
            alpha: vec![1.0, 0.0],
        };
        assert_eq!(subset_utility(&scheme, &gs, &[1]).unwrap(), -1.0);

        let gs = GradientSet::new(Matrix::zeros(2, 1), vec![0.2, 0.4], false).unwrap();
        let scheme = UtilityScheme {
            kind: UtilityKind::Hardness,
            alpha: vec![0.0],
        };
        let u = subset_utility(&scheme, &gs, &[0, 1]).unwrap();
        assert!((u - 0.3).abs() < 1e-15);
        assert!(subset_utility(&scheme, &gs, &[2]).is_err());
    }

    #[test]
    fn closed_form_inputs() {
        let gs = two_by_two(vec![2.0, 0.0]);
        let (x, a) = chg_inputs_for_closed_form(&gs, UtilityKind::Chg).unwrap();
        assert_eq!(x.as_slice(), &[2.0, 0.0, 0.0, 0.0]);
        assert_eq!(a, vec![1.0, 0.0]);
        let (x, a) = chg_inputs_for_closed_form(&gs, UtilityKind::Gradient).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(a, vec![0.5, 0.5]);
        assert!(chg_inputs_for_closed_form(&gs, UtilityKind::Hardness).is_err());
    }

    #[test]
    fn weighted_sets_refuse_gradient_scheme() {
        let v = Matrix::from_rows(&[[1.0], [2.0]]).unwrap();
        let gs = GradientSet::new(v, vec![1.0, 1.0], true).unwrap();
        assert!(reference_vector(&gs, UtilityKind::Gradient).is_err());
        assert_eq!(reference_vector(&gs, UtilityKind::Chg).unwrap(), vec![1.5]);
    }

    #[test]
    fn invalid_sets_rejected() {
        assert!(GradientSet::new(Matrix::zeros(2, 2), vec![1.0], false).is_err());
        assert!(GradientSet::new(Matrix::zeros(2, 2), vec![1.0, -0.1], false).is_err());
        assert!(GradientSet::new(Matrix::zeros(0, 2), vec![], false).is_err());
    }

    /// Solve `(a_n, b_n)` from the enumeration oracle at `l = e_0` and `l = 1`.
    fn calibrate(n: usize) -> (f64, f64) {
        let mean_game = |l: Vec<f64>| {
            FnGame::new(n, move |s: &[usize]| {
                s.iter().map(|&i| l[i]).sum::<f64>() / s.len() as f64
            })
        };
        let mut e0 = vec![0.0; n];
        e0[0] = 1.0;
        let basis = exact_shapley(&mean_game(e0), 20).unwrap();
        let a = basis.values[0];
        let b = if n > 1 { basis.values[1] } else { 0.0 };
        let ones = exact_shapley(&mean_game(vec![1.0; n]), 20).unwrap();
        // consistency of the linear form on the all-ones input
        assert!((ones.values[0] - (a + (n - 1) as f64 * b)).abs() < 1e-12);
        (a, b)
    }

    #[test]
    fn hardness_coefficients_match_oracle_calibration() {
        for n in 1..=12 {
            let (a, b) = hardness_coefficients(n).unwrap();
            let (ea, eb) = calibrate(n);
            assert!((a - ea).abs() < 1e-12 && (b - eb).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn hardness_shapley_cases() {
        let v = hardness_shapley(&[0.7; 5]).unwrap();
        assert!(v.values.iter().all(|p| (p - 0.14).abs() < 1e-12));
        assert_eq!(hardness_shapley(&[2.5]).unwrap().values, vec![2.5]);

        // n = 4, l = e_0; frozen from exact_shapley on the mean game
        let v = hardness_shapley(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        let expected = [
            0.520_833_333_333_333_3,
            -0.090_277_777_777_777_78,
            -0.090_277_777_777_777_78,
            -0.090_277_777_777_777_78,
        ];
        for (p, e) in v.values.iter().zip(expected) {
            assert!((p - e).abs() < 1e-12);
        }
    }

    #[test]
    fn text_and_binary_round_trip() {
        let gs = GradientSet::new(
            Matrix::from_rows(&[[0.1, -2.5e-7, 3.0], [1.0 / 3.0, 0.0, -1e300]]).unwrap(),
            vec![0.25, 1.0 / 7.0],
            true,
        )
        .unwrap();
        let mut buf = Vec::new();
        gs.write_text(&mut buf).unwrap();
        assert!(buf.starts_with(b"2 3 1\n"));
        assert_eq!(GradientSet::read_text(&buf[..]).unwrap(), gs);

        let mut buf = Vec::new();
        gs.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 6 + 8 * 8);
        assert_eq!(GradientSet::read_binary(&buf[..]).unwrap(), gs);
    }

    #[test]
    fn truncated_files_rejected() {
        assert!(GradientSet::read_text(&b"2 2 0\n1 2\n3 4\n0.5\n"[..]).is_err());
        assert!(GradientSet::read_text(&b"2 2 x\n"[..]).is_err());
        assert!(GradientSet::read_binary(&b"1 1 0\n\0\0"[..]).is_err());
    }
}
