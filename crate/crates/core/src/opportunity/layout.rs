//! Field layout of the 176-wide user feature vector.

use thiserror::Error;

use crate::domain::FEATURE_DIM;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    OneHot,
    IntegerCount,
    RealAmount,
}

/// Indices `start, start + stride, ...` (`len` of them).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub len: usize,
    pub stride: usize,
}

impl Span {
    const fn range(start: usize, end: usize) -> Self {
        Self { start, len: end - start, stride: 1 }
    }

    pub fn indices(self) -> impl Iterator<Item = usize> {
        (0..self.len).map(move |k| self.start + k * self.stride)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FieldDescriptor {
    pub name: &'static str,
    pub kind: FieldKind,
    pub span: Span,
}

const fn field(name: &'static str, kind: FieldKind, start: usize, end: usize) -> FieldDescriptor {
    FieldDescriptor { name, kind, span: Span::range(start, end) }
}

use FieldKind::{IntegerCount, OneHot, RealAmount};

#[rustfmt::skip]
const STANDARD_FIELDS: [FieldDescriptor; 31] = [
    field("idAgeLevel", OneHot, 0, 9),
    field("idGender", OneHot, 9, 12),
    field("isForeign", OneHot, 12, 15),
    field("cityLevel", OneHot, 15, 22),
    field("isCap", OneHot, 22, 24),
    field("buyerStarName", OneHot, 24, 47),
    field("tmLevel", OneHot, 47, 53),
    field("vipLevelName", OneHot, 53, 62),
    field("phonePriceLevelPrefer", OneHot, 62, 72),
    // zip code: one one-hot block per digit
    field("zipCode0", OneHot, 72, 82),
    field("zipCode1", OneHot, 82, 92),
    field("zipCode2", OneHot, 92, 102),
    field("zipCode3", OneHot, 102, 112),
    field("zipCode4", OneHot, 112, 122),
    field("zipCode5", OneHot, 122, 132),
    field("idBirthyear", IntegerCount, 132, 133),
    field("nationId", IntegerCount, 133, 134),
    field("payOrdAmt", RealAmount, 134, 138),
    field("payOrdCnt", IntegerCount, 138, 142),
    field("payOrdDays", IntegerCount, 142, 146),
    field("payOrdItmCnt", IntegerCount, 146, 150),
    field("payOrdItmQty", IntegerCount, 150, 154),
    field("pvAndIpv", RealAmount, 154, 156),
    field("vstSlrCnt", IntegerCount, 156, 157),
    field("vstCateCnt", IntegerCount, 157, 158),
    field("vstItmCnt", IntegerCount, 158, 159),
    field("vstDays", IntegerCount, 159, 160),
    field("stayTimeLen", IntegerCount, 160, 161),
    field("cartItmCnt", IntegerCount, 161, 166),
    // the two "collected" fields interleave over [166, 176)
    FieldDescriptor { name: "cltSlrCnt", kind: IntegerCount, span: Span { start: 166, len: 5, stride: 2 } },
    FieldDescriptor { name: "cltItmCnt", kind: IntegerCount, span: Span { start: 167, len: 5, stride: 2 } },
];

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("feature vector has {0} entries, expected 176")]
    Dimension(usize),
    #[error("one-hot field {field} sums to {sum}")]
    OneHot { field: &'static str, sum: f64 },
    #[error("field {field} has a negative or non-finite entry {value}")]
    Negative { field: &'static str, value: f64 },
    #[error("integer field {field} has non-integral entry {value}")]
    NotIntegral { field: &'static str, value: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureLayout {
    fields: Vec<FieldDescriptor>,
}

impl Default for FeatureLayout {
    fn default() -> Self {
        Self::standard()
    }
}

impl FeatureLayout {
    pub fn standard() -> Self {
        Self { fields: STANDARD_FIELDS.to_vec() }
    }

    pub fn fields(&self) -> &[FieldDescriptor] {
        &self.fields
    }

    pub fn field(&self, name: &str) -> Option<&FieldDescriptor> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn validate(&self, features: &[f64]) -> Result<(), FeatureError> {
        if features.len() != FEATURE_DIM {
            return Err(FeatureError::Dimension(features.len()));
        }
        for f in &self.fields {
            let mut sum = 0.0;
            for i in f.span.indices() {
                let x = features[i];
                if !(x >= 0.0 && x.is_finite()) {
                    return Err(FeatureError::Negative { field: f.name, value: x });
                }
                match f.kind {
                    FieldKind::OneHot => {
                        if x != 0.0 && x != 1.0 {
                            return Err(FeatureError::OneHot { field: f.name, sum: x });
                        }
                        sum += x;
                    }
                    FieldKind::IntegerCount if x.fract() != 0.0 => {
                        return Err(FeatureError::NotIntegral { field: f.name, value: x });
                    }
                    _ => {}
                }
            }
            if f.kind == FieldKind::OneHot && sum != 1.0 {
                return Err(FeatureError::OneHot { field: f.name, sum });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fields_partition_the_vector() {
        let layout = FeatureLayout::standard();
        let mut hits = [0u8; FEATURE_DIM];
        for f in layout.fields() {
            for i in f.span.indices() {
                hits[i] += 1;
            }
        }
        assert!(hits.iter().all(|&h| h == 1));
        assert_eq!(layout.field("idAgeLevel").unwrap().span.start, 0);
        assert_eq!(layout.field("cltItmCnt").unwrap().span.indices().last(), Some(175));
        assert_eq!(layout.fields().iter().filter(|f| f.kind == FieldKind::OneHot).count(), 15);
    }

    #[test]
    fn validation_catches_bad_one_hot() {
        let layout = FeatureLayout::standard();
        let mut v = vec![0.0; FEATURE_DIM];
        for f in layout.fields().iter().filter(|f| f.kind == FieldKind::OneHot) {
            v[f.span.start] = 1.0;
        }
        assert_eq!(layout.validate(&v), Ok(()));
        v[1] = 1.0;
        assert!(matches!(layout.validate(&v), Err(FeatureError::OneHot { field: "idAgeLevel", .. })));
        assert_eq!(layout.validate(&v[..10]), Err(FeatureError::Dimension(10)));
    }
}
