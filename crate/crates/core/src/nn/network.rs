use std::collections::BTreeMap;
use std::ops::Range;

use crate::autodiff::{Graph, SegmentPair, Var};
use crate::nn::params::{Bound, Init, ParamLayout};
use crate::scalar::Scalar;
use crate::tensor::Matrix;
use crate::{Error, Result};

/// Architecture of the frame-sequence network.
///
/// With both attention flags off the network acts on every frame
/// independently, which is what the low-dimensional toy problems use.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    pub feature_dim: usize,
    pub cond_dim: usize,
    pub width: usize,
    pub blocks: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub self_attention: bool,
    pub cross_attention: bool,
}

impl NetworkConfig {
    pub fn mlp(feature_dim: usize, width: usize, blocks: usize) -> Self {
        NetworkConfig {
            feature_dim,
            cond_dim: 0,
            width,
            blocks,
            heads: 1,
            mlp_ratio: 2,
            self_attention: false,
            cross_attention: false,
        }
    }

    pub fn transformer(feature_dim: usize, cond_dim: usize, width: usize, blocks: usize, heads: usize) -> Self {
        NetworkConfig {
            feature_dim,
            cond_dim,
            width,
            blocks,
            heads,
            mlp_ratio: 2,
            self_attention: true,
            cross_attention: cond_dim > 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive".into());
        }
        if self.width < 2 || self.width % 2 != 0 {
            return bad(format!("width must be even and at least 2, got {}", self.width));
        }
        if self.heads == 0 || self.width % self.heads != 0 {
            return bad(format!("width {} is not divisible by {} heads", self.width, self.heads));
        }
        if self.mlp_ratio == 0 {
            return bad("mlp_ratio must be positive".into());
        }
        if self.cross_attention && self.cond_dim == 0 {
            return bad("cross attention needs a conditioning input".into());
        }
        Ok(())
    }

    pub fn to_kv(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("net.feature_dim".into(), self.feature_dim.to_string());
        m.insert("net.cond_dim".into(), self.cond_dim.to_string());
        m.insert("net.width".into(), self.width.to_string());
        m.insert("net.blocks".into(), self.blocks.to_string());
        m.insert("net.heads".into(), self.heads.to_string());
        m.insert("net.mlp_ratio".into(), self.mlp_ratio.to_string());
        m.insert("net.self_attention".into(), self.self_attention.to_string());
        m.insert("net.cross_attention".into(), self.cross_attention.to_string());
        m
    }

    pub fn from_kv(m: &BTreeMap<String, String>) -> Result<Self> {
        fn get<T: std::str::FromStr>(m: &BTreeMap<String, String>, k: &str) -> Result<T> {
            let v = m.get(k).ok_or_else(|| Error::Invalid(format!("missing key {k}")))?;
            v.parse().map_err(|_| Error::Invalid(format!("bad value {v:?} for {k}")))
        }
        let cfg = NetworkConfig {
            feature_dim: get(m, "net.feature_dim")?,
            cond_dim: get(m, "net.cond_dim")?,
            width: get(m, "net.width")?,
            blocks: get(m, "net.blocks")?,
            heads: get(m, "net.heads")?,
            mlp_ratio: get(m, "net.mlp_ratio")?,
            self_attention: get(m, "net.self_attention")?,
            cross_attention: get(m, "net.cross_attention")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn layout(&self) -> ParamLayout {
        let (d, w, c) = (self.feature_dim, self.width, self.cond_dim);
        let h = w * self.mlp_ratio;
        let mut l = ParamLayout::default();
        l.add("in.w", d, w, Init::FanIn(1.0));
        l.add("in.b", 1, w, Init::Zeros);
        l.add("time.w1", w, w, Init::FanIn(1.0));
        l.add("time.b1", 1, w, Init::Zeros);
        l.add("time.w2", w, w, Init::FanIn(1.0));
        l.add("time.b2", 1, w, Init::Zeros);
        if c > 0 {
            l.add("cond.w", c, w, Init::FanIn(1.0));
            l.add("cond.b", 1, w, Init::Zeros);
        }
        for b in 0..self.blocks {
            l.add(format!("b{b}.time.w"), w, w, Init::FanIn(1.0));
            l.add(format!("b{b}.time.b"), 1, w, Init::Zeros);
            if self.self_attention {
                attention_slots(&mut l, &format!("b{b}.sa"), w);
            }
            if self.cross_attention {
                attention_slots(&mut l, &format!("b{b}.ca"), w);
            } else if c > 0 {
                l.add(format!("b{b}.cond.w"), w, w, Init::FanIn(1.0));
                l.add(format!("b{b}.cond.b"), 1, w, Init::Zeros);
            }
            l.add(format!("b{b}.mlp.ln.g"), 1, w, Init::Ones);
            l.add(format!("b{b}.mlp.ln.b"), 1, w, Init::Zeros);
            l.add(format!("b{b}.mlp.w1"), w, h, Init::FanIn(1.0));
            l.add(format!("b{b}.mlp.b1"), 1, h, Init::Zeros);
            l.add(format!("b{b}.mlp.w2"), h, w, Init::FanIn(1.0));
            l.add(format!("b{b}.mlp.b2"), 1, w, Init::Zeros);
        }
        l.add("out.ln.g", 1, w, Init::Ones);
        l.add("out.ln.b", 1, w, Init::Zeros);
        l.add("out.w", w, d, Init::FanIn(1.0));
        l.add("out.b", 1, d, Init::Zeros);
        l
    }

    /// Evaluates the network on packed rows.
    ///
    /// `x` is `R × feature_dim`, `c_noise` holds one noise level per row,
    /// `cond` (if any) is `R × cond_dim` aligned with `x`, and `segments`
    /// partitions the rows into independent sequences.
    pub fn forward<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        p: &Bound<'_>,
        x: Var,
        c_noise: &[S],
        cond: Option<Var>,
        segments: &[Range<usize>],
    ) -> Var {
        let rows = g.value(x).rows();
        assert_eq!(g.value(x).cols(), self.feature_dim, "network input width");
        assert_eq!(c_noise.len(), rows, "one noise level per row");
        let w = self.width;

        let mut h = affine(g, p, x, "in.w", "in.b");
        let attends = self.self_attention || self.cross_attention;
        if attends {
            let pe = g.constant(positional_encoding(rows, w, segments));
            h = g.add(h, pe);
        }

        let temb = g.constant(time_features(c_noise, w));
        let t1 = affine(g, p, temb, "time.w1", "time.b1");
        let t1 = g.silu(t1);
        let t2 = affine(g, p, t1, "time.w2", "time.b2");
        let temb = g.silu(t2);

        let cond_h = match (cond, self.cond_dim) {
            (Some(c), cd) if cd > 0 => {
                assert_eq!(g.value(c).shape(), (rows, cd), "conditioning shape");
                let mut ch = affine(g, p, c, "cond.w", "cond.b");
                if self.cross_attention {
                    let pe = g.constant(positional_encoding(rows, w, segments));
                    ch = g.add(ch, pe);
                }
                Some(ch)
            }
            (None, cd) if cd > 0 => panic!("network expects a conditioning input"),
            _ => None,
        };

        let pairs: Vec<SegmentPair> =
            segments.iter().map(|s| SegmentPair { queries: s.clone(), keys: s.clone() }).collect();

        for b in 0..self.blocks {
            let tb = affine(g, p, temb, &format!("b{b}.time.w"), &format!("b{b}.time.b"));
            h = g.add(h, tb);
            if self.self_attention {
                let a = self.attention_block(g, p, &format!("b{b}.sa"), h, None, pairs.clone());
                h = g.add(h, a);
            }
            if let Some(ch) = cond_h {
                let a = if self.cross_attention {
                    self.attention_block(g, p, &format!("b{b}.ca"), h, Some(ch), pairs.clone())
                } else {
                    let s = g.silu(ch);
                    affine(g, p, s, &format!("b{b}.cond.w"), &format!("b{b}.cond.b"))
                };
                h = g.add(h, a);
            }
            let n = norm(g, p, h, &format!("b{b}.mlp.ln"));
            let m = affine(g, p, n, &format!("b{b}.mlp.w1"), &format!("b{b}.mlp.b1"));
            let m = g.silu(m);
            let m = affine(g, p, m, &format!("b{b}.mlp.w2"), &format!("b{b}.mlp.b2"));
            h = g.add(h, m);
        }
        let n = norm(g, p, h, "out.ln");
        affine(g, p, n, "out.w", "out.b")
    }

    fn attention_block<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        p: &Bound<'_>,
        prefix: &str,
        h: Var,
        context: Option<Var>,
        pairs: Vec<SegmentPair>,
    ) -> Var {
        let n = norm(g, p, h, &format!("{prefix}.ln"));
        let kv_src = context.unwrap_or(n);
        let q = g.matmul(n, p.get(&format!("{prefix}.q")));
        let k = g.matmul(kv_src, p.get(&format!("{prefix}.k")));
        let v = g.matmul(kv_src, p.get(&format!("{prefix}.v")));
        let a = g.attention(q, k, v, self.heads, pairs);
        affine(g, p, a, &format!("{prefix}.o"), &format!("{prefix}.o.b"))
    }
}

fn attention_slots(l: &mut ParamLayout, prefix: &str, w: usize) {
    l.add(format!("{prefix}.ln.g"), 1, w, Init::Ones);
    l.add(format!("{prefix}.ln.b"), 1, w, Init::Zeros);
    l.add(format!("{prefix}.q"), w, w, Init::FanIn(1.0));
    l.add(format!("{prefix}.k"), w, w, Init::FanIn(1.0));
    l.add(format!("{prefix}.v"), w, w, Init::FanIn(1.0));
    l.add(format!("{prefix}.o"), w, w, Init::FanIn(1.0));
    l.add(format!("{prefix}.o.b"), 1, w, Init::Zeros);
}

fn affine<S: Scalar>(g: &mut Graph<S>, p: &Bound<'_>, x: Var, w: &str, b: &str) -> Var {
    let y = g.matmul(x, p.get(w));
    g.add_row(y, p.get(b))
}

fn norm<S: Scalar>(g: &mut Graph<S>, p: &Bound<'_>, x: Var, prefix: &str) -> Var {
    let n = g.layer_norm(x);
    let n = g.mul_row(n, p.get(&format!("{prefix}.g")));
    g.add_row(n, p.get(&format!("{prefix}.b")))
}

/// Sinusoidal features of the noise level; frequencies spaced geometrically
/// between 1/4 and 64.
pub fn time_features<S: Scalar>(c_noise: &[S], width: usize) -> Matrix<S> {
    let half = width / 2;
    let freqs: Vec<f64> = (0..half)
        .map(|k| {
            let f = if half > 1 { k as f64 / (half - 1) as f64 } else { 0.0 };
            0.25 * 256f64.powf(f)
        })
        .collect();
    Matrix::from_fn(c_noise.len(), width, |r, c| {
        let a = c_noise[r].to_f64_lossy() * freqs[c % half];
        S::of(if c < half { a.sin() } else { a.cos() })
    })
}

/// Standard sinusoidal position code, restarting at zero in every segment.
pub fn positional_encoding<S: Scalar>(rows: usize, width: usize, segments: &[Range<usize>]) -> Matrix<S> {
    let mut out = Matrix::zeros(rows, width);
    let half = width / 2;
    for seg in segments {
        for (i, r) in seg.clone().enumerate() {
            let row = out.row_mut(r);
            for k in 0..half {
                let w = 10000f64.powf(-(k as f64) / half as f64);
                row[2 * k] = S::of((i as f64 * w).sin());
                row[2 * k + 1] = S::of((i as f64 * w).cos());
            }
        }
    }
    out
}
