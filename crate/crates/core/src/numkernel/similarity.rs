use crate::error::{Error, Result};

/// A cosine value together with a flag raised when either argument was the
/// zero vector (the value is then defined as 0).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cosine {
    pub value: f64,
    pub zero_vector: bool,
}

pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<Cosine> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            op: "cosine_similarity",
            left: (1, a.len()),
            right: (1, b.len()),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(Cosine {
            value: 0.0,
            zero_vector: true,
        });
    }
    Ok(Cosine {
        value: dot / (na.sqrt() * nb.sqrt()),
        zero_vector: false,
    })
}
