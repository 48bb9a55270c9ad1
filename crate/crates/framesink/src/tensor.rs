//! Dense vector and per-head tensor math: rotary position embeddings, a
//! reference multi-head attention, and cosine similarity.
//!
//! Everything here is pure and reentrant; values are safe to share across
//! threads once constructed. Tensors are row-major `(token, head, dim)`.

use crate::error::{Error, Result};
use crate::scalar::{count, real, Scalar};

/// A finite, nonempty real vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector<S: Scalar> {
    data: Vec<S>,
}

impl<S: Scalar> Vector<S> {
    pub fn new(data: Vec<S>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyInput("vector"));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("vector"));
        }
        Ok(Self { data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn into_inner(self) -> Vec<S> {
        self.data
    }

    /// Euclidean norm, accumulated in index order.
    pub fn norm(&self) -> S {
        norm_slice(&self.data)
    }

    /// Scale every entry by `c`.
    pub fn scaled(&self, c: S) -> Result<Self> {
        Self::new(self.data.iter().map(|&x| x * c).collect())
    }
}

impl<S: Scalar> std::ops::Index<usize> for Vector<S> {
    type Output = S;
    fn index(&self, i: usize) -> &S {
        &self.data[i]
    }
}

pub(crate) fn dot_slices<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = S::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

pub(crate) fn norm_slice<S: Scalar>(a: &[S]) -> S {
    dot_slices(a, a).sqrt()
}

/// Row-major `(tokens, heads, head_dim)` tensor holding per-head query, key,
/// or value vectors. `head_dim` must be even so rotary pairing applies.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadTensor<S: Scalar> {
    tokens: usize,
    heads: usize,
    head_dim: usize,
    data: Vec<S>,
}

impl<S: Scalar> HeadTensor<S> {
    pub fn new(tokens: usize, heads: usize, head_dim: usize, data: Vec<S>) -> Result<Self> {
        if heads == 0 || head_dim == 0 {
            return Err(Error::InvalidParameter(
                "heads and head_dim must be positive".into(),
            ));
        }
        if !head_dim.is_multiple_of(2) {
            return Err(Error::OddHeadDim(head_dim));
        }
        let expected = tokens * heads * head_dim;
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "tensor data length {} does not match {}x{}x{}",
                data.len(),
                tokens,
                heads,
                head_dim
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("tensor"));
        }
        Ok(Self { tokens, heads, head_dim, data })
    }

    pub fn zeros(tokens: usize, heads: usize, head_dim: usize) -> Result<Self> {
        Self::new(tokens, heads, head_dim, vec![S::zero(); tokens * heads * head_dim])
    }

    pub fn tokens(&self) -> usize {
        self.tokens
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn head_dim(&self) -> usize {
        self.head_dim
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    /// The `(token, head)` vector of length `head_dim`.
    pub fn vec_at(&self, token: usize, head: usize) -> &[S] {
        let start = (token * self.heads + head) * self.head_dim;
        &self.data[start..start + self.head_dim]
    }

    fn vec_at_mut(&mut self, token: usize, head: usize) -> &mut [S] {
        let start = (token * self.heads + head) * self.head_dim;
        &mut self.data[start..start + self.head_dim]
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.heads == other.heads && self.head_dim == other.head_dim
    }

    /// Copy of the token range `[start, end)`.
    pub fn slice_tokens(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.tokens {
            return Err(Error::ShapeMismatch(format!(
                "token slice {}..{} out of range 0..{}",
                start, end, self.tokens
            )));
        }
        let row = self.heads * self.head_dim;
        Self::new(end - start, self.heads, self.head_dim, self.data[start * row..end * row].to_vec())
    }

    /// Token-axis concatenation in the given order. All parts must share
    /// heads and head_dim.
    pub fn concat_tokens(parts: &[&Self]) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::EmptyInput("concat_tokens parts"));
        }
        let heads = parts[0].heads;
        let head_dim = parts[0].head_dim;
        let mut tokens = 0;
        let mut data = Vec::new();
        for p in parts {
            if p.heads != heads || p.head_dim != head_dim {
                return Err(Error::ShapeMismatch(
                    "concat_tokens parts disagree on heads/head_dim".into(),
                ));
            }
            tokens += p.tokens;
            data.extend_from_slice(&p.data);
        }
        Self::new(tokens, heads, head_dim, data)
    }
}

/// Rotary position embedding parameters: frequency base and per-head
/// dimension. Pair `i` of a head vector rotates by `position * base^(-2i/d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RopeParams<S: Scalar> {
    base: S,
    head_dim: usize,
    inv_freq: Vec<S>,
}

impl<S: Scalar> RopeParams<S> {
    pub fn new(base: S, head_dim: usize) -> Result<Self> {
        if base <= S::one() || !base.is_finite() {
            return Err(Error::InvalidParameter("rope base must exceed 1".into()));
        }
        if head_dim == 0 {
            return Err(Error::InvalidParameter("rope head_dim must be positive".into()));
        }
        if !head_dim.is_multiple_of(2) {
            return Err(Error::OddHeadDim(head_dim));
        }
        let d = real::<S>(head_dim as f64);
        let inv_freq = (0..head_dim / 2)
            .map(|i| base.powf(-real::<S>(2.0 * i as f64) / d))
            .collect();
        Ok(Self { base, head_dim, inv_freq })
    }

    pub fn base(&self) -> S {
        self.base
    }

    pub fn head_dim(&self) -> usize {
        self.head_dim
    }

    /// Rotation frequency of dimension pair `i` (dims `2i`, `2i+1`).
    pub fn pair_frequency(&self, pair: usize) -> S {
        self.inv_freq[pair]
    }

    /// Rotation angle of dimension pair `i` at the given absolute position.
    pub fn angle(&self, position: u64, pair: usize) -> S {
        S::from_u64(position).expect("position converts to scalar") * self.inv_freq[pair]
    }
}

pub(crate) fn rotate_head_in_place<S: Scalar>(chunk: &mut [S], position: u64, params: &RopeParams<S>) {
    for (i, pair) in chunk.chunks_exact_mut(2).enumerate() {
        let theta = params.angle(position, i);
        let (sin, cos) = theta.sin_cos();
        let x = pair[0];
        let y = pair[1];
        pair[0] = x * cos - y * sin;
        pair[1] = x * sin + y * cos;
    }
}

/// Inverse rotation: undoes `rotate_head_in_place` at the same position.
pub(crate) fn unrotate_head_in_place<S: Scalar>(chunk: &mut [S], position: u64, params: &RopeParams<S>) {
    for (i, pair) in chunk.chunks_exact_mut(2).enumerate() {
        let theta = params.angle(position, i);
        let (sin, cos) = theta.sin_cos();
        let x = pair[0];
        let y = pair[1];
        pair[0] = x * cos + y * sin;
        pair[1] = -(x * sin) + y * cos;
    }
}

/// Rotate a single head vector at an absolute position. Interleaved pairing:
/// dims `(2i, 2i+1)` rotate together. Norm-preserving.
pub fn rope_rotate<S: Scalar>(v: &Vector<S>, position: u64, params: &RopeParams<S>) -> Result<Vector<S>> {
    if v.len() != params.head_dim() {
        return Err(Error::DimensionMismatch { expected: params.head_dim(), got: v.len() });
    }
    let mut out = v.as_slice().to_vec();
    rotate_head_in_place(&mut out, position, params);
    Vector::new(out)
}

/// Rotate every `(token, head)` vector of a tensor; token `r` rotates at
/// absolute position `start_position + r`.
pub fn rope_rotate_tensor<S: Scalar>(
    t: &HeadTensor<S>,
    start_position: u64,
    params: &RopeParams<S>,
) -> Result<HeadTensor<S>> {
    if t.head_dim() != params.head_dim() {
        return Err(Error::DimensionMismatch { expected: params.head_dim(), got: t.head_dim() });
    }
    let mut out = t.clone();
    for token in 0..t.tokens() {
        let position = start_position + token as u64;
        for head in 0..t.heads() {
            rotate_head_in_place(out.vec_at_mut(token, head), position, params);
        }
    }
    Ok(out)
}

/// Reference softmax attention: per head, `out_t = sum_r softmax_r(scale * q_t . k_r) * v_r`.
/// Softmax subtracts the per-row maximum before exponentiation.
pub fn attention<S: Scalar>(
    q: &HeadTensor<S>,
    k: &HeadTensor<S>,
    v: &HeadTensor<S>,
    scale: S,
) -> Result<HeadTensor<S>> {
    if k.tokens() == 0 {
        return Err(Error::EmptyInput("attention keys"));
    }
    if k.tokens() != v.tokens() {
        return Err(Error::ShapeMismatch(format!(
            "key tokens {} != value tokens {}",
            k.tokens(),
            v.tokens()
        )));
    }
    if !q.same_layout(k) || !q.same_layout(v) {
        return Err(Error::ShapeMismatch("q/k/v disagree on heads or head_dim".into()));
    }
    if scale <= S::zero() || !scale.is_finite() {
        return Err(Error::InvalidParameter("attention scale must be positive".into()));
    }
    let mut out = HeadTensor::zeros(q.tokens(), q.heads(), q.head_dim())?;
    let mut scores = vec![S::zero(); k.tokens()];
    for head in 0..q.heads() {
        for t in 0..q.tokens() {
            let qv = q.vec_at(t, head);
            let mut max = S::neg_infinity();
            for (r, s) in scores.iter_mut().enumerate() {
                *s = scale * dot_slices(qv, k.vec_at(r, head));
                if *s > max {
                    max = *s;
                }
            }
            let mut denom = S::zero();
            for s in scores.iter_mut() {
                *s = (*s - max).exp();
                denom += *s;
            }
            let row = out.vec_at_mut(t, head);
            for (r, s) in scores.iter().enumerate() {
                let w = *s / denom;
                for (o, &val) in row.iter_mut().zip(v.vec_at(r, head)) {
                    *o += w * val;
                }
            }
        }
    }
    Ok(out)
}

/// Cosine similarity `a.b / (|a||b|)`, clamped into `[-1, 1]` against
/// rounding. Errors on zero-norm inputs.
pub fn cosine<S: Scalar>(a: &Vector<S>, b: &Vector<S>) -> Result<S> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    let dot = dot_slices(a.as_slice(), b.as_slice());
    let na = a.norm();
    let nb = b.norm();
    if na == S::zero() || nb == S::zero() {
        return Err(Error::ZeroNorm("cosine input"));
    }
    let c = dot / (na * nb);
    Ok(if c > S::one() {
        S::one()
    } else if c < -S::one() {
        -S::one()
    } else {
        c
    })
}

/// Mean of a nonempty feature list, accumulated in index order.
pub(crate) fn mean_rows<S: Scalar>(rows: &[&[S]]) -> Result<Vec<S>> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("mean_rows"));
    }
    let dim = rows[0].len();
    let mut acc = vec![S::zero(); dim];
    for row in rows {
        if row.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: row.len() });
        }
        for (a, &x) in acc.iter_mut().zip(*row) {
            *a += x;
        }
    }
    let n = count::<S>(rows.len());
    for a in acc.iter_mut() {
        *a = *a / n;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v64(data: &[f64]) -> Vector<f64> {
        Vector::new(data.to_vec()).unwrap()
    }

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
    }

    /// Oracle: rotate via explicit 2x2 rotation matrices per pair.
    fn rotate_oracle(v: &[f64], position: u64, params: &RopeParams<f64>) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for i in 0..v.len() / 2 {
            let theta = position as f64 * params.pair_frequency(i);
            let (m00, m01) = (theta.cos(), -theta.sin());
            let (m10, m11) = (theta.sin(), theta.cos());
            out[2 * i] = m00 * v[2 * i] + m01 * v[2 * i + 1];
            out[2 * i + 1] = m10 * v[2 * i] + m11 * v[2 * i + 1];
        }
        out
    }

    #[test]
    fn rope_zero_position_is_identity() {
        let params = RopeParams::new(10000.0, 8).unwrap();
        let v = v64(&[0.3, -1.2, 4.0, 0.01, 2.0, -2.0, 0.5, 0.25]);
        let r = rope_rotate(&v, 0, &params).unwrap();
        assert_eq!(r, v);
    }

    #[test]
    fn rope_single_pair_rotates_unit_x() {
        // (1, 0) at position p with head_dim=2 rotates to (cos p, sin p):
        // pair 0 has frequency base^0 = 1.
        let params = RopeParams::new(10000.0, 2).unwrap();
        for p in [1u64, 2, 7, 100] {
            let r = rope_rotate(&v64(&[1.0, 0.0]), p, &params).unwrap();
            assert!((r[0] - (p as f64).cos()).abs() < 1e-12);
            assert!((r[1] - (p as f64).sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn rope_matches_rotation_matrix_oracle() {
        let params = RopeParams::new(10000.0, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let v = rand_vec(&mut rng, 16);
            let p = rng.random_range(0..1_000_000u64);
            let got = rope_rotate(&v64(&v), p, &params).unwrap();
            let want = rotate_oracle(&v, p, &params);
            for (g, w) in got.as_slice().iter().zip(&want) {
                assert!((g - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rope_relative_position_property() {
        // dot(rope(q,p1), rope(k,p2)) depends only on p1 - p2.
        let params = RopeParams::new(10000.0, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let q = v64(&rand_vec(&mut rng, 16));
            let k = v64(&rand_vec(&mut rng, 16));
            let p1 = rng.random_range(0..100_000u64);
            let p2 = rng.random_range(0..100_000u64);
            let s = rng.random_range(0..900_000u64);
            let base = dot_slices(
                rope_rotate(&q, p1, &params).unwrap().as_slice(),
                rope_rotate(&k, p2, &params).unwrap().as_slice(),
            );
            let shifted = dot_slices(
                rope_rotate(&q, p1 + s, &params).unwrap().as_slice(),
                rope_rotate(&k, p2 + s, &params).unwrap().as_slice(),
            );
            assert!((base - shifted).abs() < 1e-9, "base={base} shifted={shifted}");
        }
    }

    #[test]
    fn rope_preserves_norm_up_to_1e6() {
        let params = RopeParams::new(10000.0, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let v = v64(&rand_vec(&mut rng, 16));
            let p = rng.random_range(0..=1_000_000u64);
            let r = rope_rotate(&v, p, &params).unwrap();
            assert!((r.norm() - v.norm()).abs() < 1e-9);
        }
    }

    #[test]
    fn rope_dimension_errors() {
        let params = RopeParams::new(10000.0, 8).unwrap();
        let v = v64(&[1.0, 2.0]);
        assert!(matches!(
            rope_rotate(&v, 3, &params),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(RopeParams::<f64>::new(10000.0, 7), Err(Error::OddHeadDim(7))));
        assert!(matches!(RopeParams::<f64>::new(1.0, 8), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn rope_tensor_matches_per_vector_loop() {
        let params = RopeParams::new(10000.0, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let tokens = 5;
        let heads = 3;
        let data = rand_vec(&mut rng, tokens * heads * 8);
        let t = HeadTensor::new(tokens, heads, 8, data).unwrap();
        let start = 1234u64;
        let rotated = rope_rotate_tensor(&t, start, &params).unwrap();
        for token in 0..tokens {
            for head in 0..heads {
                let per_vec = rope_rotate(
                    &v64(t.vec_at(token, head)),
                    start + token as u64,
                    &params,
                )
                .unwrap();
                assert_eq!(per_vec.as_slice(), rotated.vec_at(token, head));
            }
        }
        // single token at start 0 is the identity
        let one = t.slice_tokens(0, 1).unwrap();
        assert_eq!(rope_rotate_tensor(&one, 0, &params).unwrap(), one);
        // per-vector norms preserved
        for token in 0..tokens {
            for head in 0..heads {
                let before = norm_slice(t.vec_at(token, head));
                let after = norm_slice(rotated.vec_at(token, head));
                assert!((before - after).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn attention_single_key_returns_value() {
        let q = HeadTensor::new(3, 2, 4, vec![0.5; 3 * 2 * 4]).unwrap();
        let k = HeadTensor::new(1, 2, 4, vec![1.0; 8]).unwrap();
        let v = HeadTensor::new(1, 2, 4, (0..8).map(|i| i as f64).collect()).unwrap();
        let out = attention(&q, &k, &v, 0.5).unwrap();
        for t in 0..3 {
            for h in 0..2 {
                assert_eq!(out.vec_at(t, h), v.vec_at(0, h));
            }
        }
    }

    #[test]
    fn attention_identical_keys_average_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let heads = 2;
        let hd = 4;
        let key_row = rand_vec(&mut rng, heads * hd);
        let k = HeadTensor::new(3, heads, hd, [key_row.clone(), key_row.clone(), key_row].concat()).unwrap();
        let v = HeadTensor::new(3, heads, hd, rand_vec(&mut rng, 3 * heads * hd)).unwrap();
        let q = HeadTensor::new(1, heads, hd, rand_vec(&mut rng, heads * hd)).unwrap();
        let out = attention(&q, &k, &v, 0.5).unwrap();
        for h in 0..heads {
            for d in 0..hd {
                let mean = (v.vec_at(0, h)[d] + v.vec_at(1, h)[d] + v.vec_at(2, h)[d]) / 3.0;
                assert!((out.vec_at(0, h)[d] - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attention_matches_naive_two_loop_oracle() {
        // Naive oracle: no max subtraction, separate loops.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let (tokens, heads, hd) = (3, 2, 4);
        let q = HeadTensor::new(tokens, heads, hd, rand_vec(&mut rng, tokens * heads * hd)).unwrap();
        let k = HeadTensor::new(tokens, heads, hd, rand_vec(&mut rng, tokens * heads * hd)).unwrap();
        let v = HeadTensor::new(tokens, heads, hd, rand_vec(&mut rng, tokens * heads * hd)).unwrap();
        let scale = 1.0 / (hd as f64).sqrt();
        let out = attention(&q, &k, &v, scale).unwrap();
        for h in 0..heads {
            for t in 0..tokens {
                let mut exps = Vec::new();
                for r in 0..tokens {
                    exps.push((scale * dot_slices(q.vec_at(t, h), k.vec_at(r, h))).exp());
                }
                let denom: f64 = exps.iter().sum();
                for d in 0..hd {
                    let mut want = 0.0;
                    for r in 0..tokens {
                        want += exps[r] / denom * v.vec_at(r, h)[d];
                    }
                    assert!((out.vec_at(t, h)[d] - want).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn attention_errors() {
        let q = HeadTensor::<f64>::zeros(1, 2, 4).unwrap();
        let empty_k = HeadTensor::<f64>::zeros(0, 2, 4).unwrap();
        let v1 = HeadTensor::<f64>::zeros(1, 2, 4).unwrap();
        assert!(matches!(attention(&q, &empty_k, &v1, 0.5), Err(Error::EmptyInput(_))));
        let k2 = HeadTensor::<f64>::zeros(2, 2, 4).unwrap();
        assert!(matches!(attention(&q, &k2, &v1, 0.5), Err(Error::ShapeMismatch(_))));
        let k_other_heads = HeadTensor::<f64>::zeros(1, 3, 4).unwrap();
        let v_other_heads = HeadTensor::<f64>::zeros(1, 3, 4).unwrap();
        assert!(matches!(
            attention(&q, &k_other_heads, &v_other_heads, 0.5),
            Err(Error::ShapeMismatch(_))
        ));
    }

    /// Compensated (Kahan) dot for the extended-precision cosine oracle.
    fn kahan_dot(a: &[f64], b: &[f64]) -> f64 {
        let mut sum = 0.0;
        let mut c = 0.0;
        for (x, y) in a.iter().zip(b) {
            let term = x * y - c;
            let t = sum + term;
            c = (t - sum) - term;
            sum = t;
        }
        sum
    }

    fn cosine_oracle(a: &[f64], b: &[f64]) -> f64 {
        (kahan_dot(a, b) / (kahan_dot(a, a).sqrt() * kahan_dot(b, b).sqrt())).clamp(-1.0, 1.0)
    }

    #[test]
    fn cosine_basics() {
        let x = v64(&[0.3, -0.4, 1.7]);
        assert_eq!(cosine(&x, &x).unwrap(), 1.0);
        let e0 = v64(&[1.0, 0.0]);
        let e1 = v64(&[0.0, 1.0]);
        assert_eq!(cosine(&e0, &e1).unwrap(), 0.0);
        let zero = Vector::new(vec![0.0, 0.0]).unwrap();
        assert!(matches!(cosine(&zero, &e0), Err(Error::ZeroNorm(_))));
        assert!(matches!(
            cosine(&e0, &v64(&[1.0, 2.0, 3.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cosine_matches_high_precision_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..500 {
            let a = rand_vec(&mut rng, 64);
            let b = rand_vec(&mut rng, 64);
            let got = cosine(&v64(&a), &v64(&b)).unwrap();
            assert!((got - cosine_oracle(&a, &b)).abs() < 1e-12);
        }
    }

    #[test]
    fn cosine_symmetric_and_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..200 {
            let a = v64(&rand_vec(&mut rng, 16));
            let b = v64(&rand_vec(&mut rng, 16));
            let c = rng.random::<f64>() * 4.0 + 0.25;
            let ab = cosine(&a, &b).unwrap();
            let ba = cosine(&b, &a).unwrap();
            let scaled = cosine(&a.scaled(c).unwrap(), &b).unwrap();
            assert!((ab - ba).abs() < 1e-12);
            assert!((ab - scaled).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_rows_stay_inside_value_envelope() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..50 {
            let (tq, tk, heads, hd) = (2, 5, 2, 4);
            let q = HeadTensor::new(tq, heads, hd, rand_vec(&mut rng, tq * heads * hd)).unwrap();
            let k = HeadTensor::new(tk, heads, hd, rand_vec(&mut rng, tk * heads * hd)).unwrap();
            let v = HeadTensor::new(tk, heads, hd, rand_vec(&mut rng, tk * heads * hd)).unwrap();
            let out = attention(&q, &k, &v, 0.5).unwrap();
            for h in 0..heads {
                for t in 0..tq {
                    for d in 0..hd {
                        let col: Vec<f64> = (0..tk).map(|r| v.vec_at(r, h)[d]).collect();
                        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let x = out.vec_at(t, h)[d];
                        assert!(x >= lo - 1e-9 && x <= hi + 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn head_tensor_shape_validation() {
        assert!(matches!(
            HeadTensor::<f64>::new(1, 2, 3, vec![0.0; 6]),
            Err(Error::OddHeadDim(3))
        ));
        assert!(matches!(
            HeadTensor::<f64>::new(1, 2, 4, vec![0.0; 7]),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(matches!(
            HeadTensor::<f64>::new(1, 1, 2, vec![f64::NAN, 0.0]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn generic_scalar_f32_instantiation() {
        let params = RopeParams::<f32>::new(10000.0, 4).unwrap();
        let v = Vector::<f32>::new(vec![1.0, 0.0, 0.5, -0.5]).unwrap();
        let r = rope_rotate(&v, 100, &params).unwrap();
        assert!((r.norm() - v.norm()).abs() < 1e-5);
        let c = cosine(&v, &v).unwrap();
        assert!((c - 1.0f32).abs() <= f32::EPSILON);
    }
}
