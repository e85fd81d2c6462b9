//! Interval vectors and sign-split matrix arithmetic.
//!
//! Every matrix `M` is written as `M = M⁺ - M⁻` with `M⁺ = max(M, 0)` and
//! `M⁻ = max(-M, 0)`. For `x ∈ [lower, upper]` this gives the tight enclosure
//! `M⁺·lower - M⁻·upper ≤ M·x ≤ M⁺·upper - M⁻·lower`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A closed axis-aligned box `[lower, upper] ⊂ Rⁿ`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalVector {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl IntervalVector {
    /// Builds an interval, rejecting non-finite bounds and any coordinate with
    /// `lower > upper`.
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::shape("IntervalVector::new", lower.len(), upper.len()));
        }
        for (idx, (l, u)) in lower.iter().zip(upper.iter()).enumerate() {
            if !l.is_finite() || !u.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "non-finite interval bound at coordinate {idx}"
                )));
            }
            if l > u {
                return Err(Error::EmptyIntersection {
                    index: idx,
                    lower: *l,
                    upper: *u,
                });
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn from_slices(lower: &[f64], upper: &[f64]) -> Result<Self> {
        Self::new(
            DVector::from_column_slice(lower),
            DVector::from_column_slice(upper),
        )
    }

    /// Degenerate interval `[x, x]`.
    pub fn point(x: DVector<f64>) -> Result<Self> {
        Self::new(x.clone(), x)
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn width(&self) -> DVector<f64> {
        &self.upper - &self.lower
    }

    /// Closed-interval membership test with exact comparisons.
    pub fn contains(&self, x: &DVector<f64>) -> Result<bool> {
        if x.len() != self.len() {
            return Err(Error::shape("IntervalVector::contains", self.len(), x.len()));
        }
        Ok(self
            .lower
            .iter()
            .zip(self.upper.iter())
            .zip(x.iter())
            .all(|((l, u), v)| l <= v && v <= u))
    }

    /// Coordinate-wise intersection. Disjoint coordinates are an error.
    pub fn intersect(&self, other: &IntervalVector) -> Result<IntervalVector> {
        if other.len() != self.len() {
            return Err(Error::shape("IntervalVector::intersect", self.len(), other.len()));
        }
        let lower = self.lower.zip_map(&other.lower, f64::max);
        let upper = self.upper.zip_map(&other.upper, f64::min);
        IntervalVector::new(lower, upper)
    }
}

/// `M = plus - minus` with disjoint, nonnegative supports.
#[derive(Debug, Clone, PartialEq)]
pub struct SignSplitMatrix {
    pub plus: DMatrix<f64>,
    pub minus: DMatrix<f64>,
}

impl SignSplitMatrix {
    /// `|M| = M⁺ + M⁻`.
    pub fn abs(&self) -> DMatrix<f64> {
        &self.plus + &self.minus
    }

    pub fn nrows(&self) -> usize {
        self.plus.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.plus.ncols()
    }

    /// Lower end of the enclosure of `M·x` over `x ∈ iv`.
    pub(crate) fn image_lower(&self, lower: &DVector<f64>, upper: &DVector<f64>) -> DVector<f64> {
        &self.plus * lower - &self.minus * upper
    }

    pub(crate) fn image_upper(&self, lower: &DVector<f64>, upper: &DVector<f64>) -> DVector<f64> {
        &self.plus * upper - &self.minus * lower
    }
}

pub fn sign_split(m: &DMatrix<f64>) -> Result<SignSplitMatrix> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    // `-0.0` is mapped to `0.0` so that both parts compare cleanly.
    let plus = m.map(|v| if v > 0.0 { v } else { 0.0 });
    let minus = m.map(|v| if v < 0.0 { -v } else { 0.0 });
    Ok(SignSplitMatrix { plus, minus })
}

/// Sound enclosure of `{A·x : x ∈ iv}`.
pub fn interval_image(a: &DMatrix<f64>, iv: &IntervalVector) -> Result<IntervalVector> {
    if a.ncols() != iv.len() {
        return Err(Error::shape("interval_image", a.ncols(), iv.len()));
    }
    let split = sign_split(a)?;
    let lower = split.image_lower(iv.lower(), iv.upper());
    let upper = split.image_upper(iv.lower(), iv.upper());
    IntervalVector::new(lower, upper)
}

pub fn intersect(a: &IntervalVector, b: &IntervalVector) -> Result<IntervalVector> {
    a.intersect(b)
}

pub fn contains(iv: &IntervalVector, x: &DVector<f64>) -> Result<bool> {
    iv.contains(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iv(l: &[f64], u: &[f64]) -> IntervalVector {
        IntervalVector::from_slices(l, u).unwrap()
    }

    #[test]
    fn sign_split_examples() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, -3.0, 4.0]);
        let s = sign_split(&m).unwrap();
        assert_eq!(s.plus, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]));
        assert_eq!(s.minus, DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 3.0, 0.0]));

        let z = sign_split(&DMatrix::zeros(3, 2)).unwrap();
        assert_eq!(z.plus, DMatrix::zeros(3, 2));
        assert_eq!(z.minus, DMatrix::zeros(3, 2));

        let id = sign_split(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(id.plus, DMatrix::identity(3, 3));
        assert_eq!(id.minus, DMatrix::zeros(3, 3));
    }

    #[test]
    fn sign_split_rejects_nan() {
        let m = DMatrix::from_row_slice(1, 2, &[1.0, f64::NAN]);
        assert!(matches!(sign_split(&m), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn image_examples() {
        let box_ = iv(&[-1.0, 2.0], &[3.0, 5.0]);
        assert_eq!(interval_image(&DMatrix::identity(2, 2), &box_).unwrap(), box_);

        let nonneg = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.5, 0.0]);
        let out = interval_image(&nonneg, &box_).unwrap();
        assert_eq!(out.lower(), &(&nonneg * box_.lower()));
        assert_eq!(out.upper(), &(&nonneg * box_.upper()));

        // vertices of [0,1]^2 under [1,-1]: 0, -1, 1, 0
        let a = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let out = interval_image(&a, &iv(&[0.0, 0.0], &[1.0, 1.0])).unwrap();
        assert_eq!(out, iv(&[-1.0], &[1.0]));

        assert!(interval_image(&DMatrix::zeros(1, 3), &box_).is_err());
    }

    #[test]
    fn intersect_examples() {
        let a = iv(&[0.0, 0.0], &[2.0, 2.0]);
        assert_eq!(a.intersect(&a).unwrap(), a);
        let b = iv(&[1.0, -1.0], &[3.0, 1.0]);
        assert_eq!(a.intersect(&b).unwrap(), iv(&[1.0, 0.0], &[2.0, 1.0]));
        let err = iv(&[0.0], &[1.0]).intersect(&iv(&[2.0], &[3.0])).unwrap_err();
        assert!(matches!(err, Error::EmptyIntersection { index: 0, .. }));
    }

    #[test]
    fn contains_examples() {
        let a = iv(&[0.0], &[1.0]);
        assert!(a.contains(&DVector::from_element(1, 0.5)).unwrap());
        assert!(a.contains(&DVector::from_element(1, 1.0)).unwrap());
        assert!(!a.contains(&DVector::from_element(1, 1.0000001)).unwrap());
        assert!(a.contains(&DVector::zeros(2)).is_err());
    }

    #[test]
    fn construction_rejects_inverted_bounds() {
        assert!(IntervalVector::from_slices(&[1.0, 0.0], &[2.0, -1.0]).is_err());
    }

    fn matrix_strategy(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
        prop::collection::vec(-5.0..5.0f64, rows * cols)
            .prop_map(move |v| DMatrix::from_row_slice(rows, cols, &v))
    }

    fn box_strategy(n: usize) -> impl Strategy<Value = (IntervalVector, Vec<f64>)> {
        (
            prop::collection::vec(-10.0..10.0f64, n),
            prop::collection::vec(0.0..5.0f64, n),
            prop::collection::vec(0.0..=1.0f64, n),
        )
            .prop_map(|(lo, w, t)| {
                let up: Vec<f64> = lo.iter().zip(&w).map(|(l, w)| l + w).collect();
                let x: Vec<f64> = lo
                    .iter()
                    .zip(&up)
                    .zip(&t)
                    .map(|((l, u), t)| (l + t * (u - l)).clamp(*l, *u))
                    .collect();
                (IntervalVector::from_slices(&lo, &up).unwrap(), x)
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn image_is_sound(
            (a, (b, x)) in (1usize..5, 1usize..7).prop_flat_map(|(p, n)| (matrix_strategy(p, n), box_strategy(n)))
        ) {
            let x = DVector::from_vec(x);
            let img = interval_image(&a, &b).unwrap();
            // A·x is itself rounded; allow for that rounding only.
            let ax = &a * &x;
            let slack = 1e-12 * (a.abs() * x.abs()).max().max(1.0);
            for r in 0..a.nrows() {
                prop_assert!(img.lower()[r] <= ax[r] + slack);
                prop_assert!(ax[r] <= img.upper()[r] + slack);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn image_matches_vertex_enumeration(
            a in (1usize..4, 1usize..9).prop_flat_map(|(p, n)| (matrix_strategy(p, n), box_strategy(n)))
        ) {
            let (a, (b, _)) = a;
            let n = b.len();
            let img = interval_image(&a, &b).unwrap();
            let mut lo = vec![f64::INFINITY; a.nrows()];
            let mut hi = vec![f64::NEG_INFINITY; a.nrows()];
            for mask in 0u32..(1 << n) {
                let v = DVector::from_fn(n, |k, _| {
                    if mask & (1 << k) != 0 { b.upper()[k] } else { b.lower()[k] }
                });
                let av = &a * v;
                for r in 0..a.nrows() {
                    lo[r] = lo[r].min(av[r]);
                    hi[r] = hi[r].max(av[r]);
                }
            }
            for r in 0..a.nrows() {
                prop_assert!((img.lower()[r] - lo[r]).abs() <= 1e-9);
                prop_assert!((img.upper()[r] - hi[r]).abs() <= 1e-9);
            }
        }

        #[test]
        fn sign_split_reconstructs(m in (1usize..6, 1usize..6).prop_flat_map(|(r, c)| matrix_strategy(r, c))) {
            let s = sign_split(&m).unwrap();
            prop_assert_eq!(&s.plus - &s.minus, m.clone());
            prop_assert!(s.plus.iter().all(|v| *v >= 0.0));
            prop_assert!(s.minus.iter().all(|v| *v >= 0.0));
            prop_assert!(s.plus.component_mul(&s.minus).iter().all(|v| *v == 0.0));
        }

        #[test]
        fn intersection_laws(
            (a, b, c) in (1usize..5).prop_flat_map(|n| (box_strategy(n), box_strategy(n), box_strategy(n)))
        ) {
            let (a, b, c) = (a.0, b.0, c.0);
            match (a.intersect(&b), b.intersect(&a)) {
                (Ok(x), Ok(y)) => {
                    prop_assert_eq!(&x, &y);
                    let w = x.width();
                    for k in 0..a.len() {
                        prop_assert!(w[k] <= a.width()[k].min(b.width()[k]));
                    }
                }
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "commutativity broken"),
            }
            prop_assert_eq!(a.intersect(&a).unwrap(), a.clone());
            let left = a.intersect(&b).and_then(|ab| ab.intersect(&c));
            let right = b.intersect(&c).and_then(|bc| a.intersect(&bc));
            if let (Ok(l), Ok(r)) = (&left, &right) {
                prop_assert_eq!(l, r);
            } else {
                // Either order reports emptiness iff some coordinate is disjoint.
                let lo = a.lower().zip_map(b.lower(), f64::max).zip_map(c.lower(), f64::max);
                let hi = a.upper().zip_map(b.upper(), f64::min).zip_map(c.upper(), f64::min);
                prop_assert!(lo.iter().zip(hi.iter()).any(|(l, h)| l > h));
            }
        }
    }
}
