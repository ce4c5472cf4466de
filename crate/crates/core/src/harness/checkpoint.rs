//! Versioned binary checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic "FZOOCKPT" | u32 version
//! config: u8 kind | f64 lr | f64 eps | u64 directions | opt<u64> batch_size
//!         | u8 budget tag | u64 budget | u64 run_seed | u8 engine | opt<f64> cap
//! state:  u64 step | u64 forward_passes | u64 degenerate_sigma
//!         | u32 shape count | (u32 len, utf-8 name, u64 rows, u64 cols)*
//!         | vec<f64> theta | opt<vec<f64>> prev_losses | opt<vec<f64>> adam_m | opt<vec<f64>> adam_v
//! reports: u64 count | report*
//! magic "FZOOEND."
//! ```
//!
//! `opt<T>` is a `u8` presence flag followed by `T` when present; `vec<f64>`
//! is a `u64` length followed by the values.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{FzooError, Result};
use crate::estimators::Engine;
use crate::optimizers::{Budget, OptimizerConfig, OptimizerKind, OptimizerState, StepReport};
use crate::perturbation::{LayerShape, ParamVector};

pub const MAGIC: &[u8; 8] = b"FZOOCKPT";
const END: &[u8; 8] = b"FZOOEND.";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: OptimizerConfig,
    pub state: OptimizerState,
    /// Reports of every step taken so far.
    pub reports: Vec<StepReport>,
}

impl Checkpoint {
    pub fn new(config: OptimizerConfig, state: OptimizerState, reports: Vec<StepReport>) -> Self {
        Checkpoint {
            version: FORMAT_VERSION,
            config,
            state,
            reports,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.bytes(MAGIC);
        w.u32(self.version);

        let c = &self.config;
        w.u8(c.kind.code());
        w.f64(c.lr);
        w.f64(c.eps);
        w.u64(c.directions as u64);
        w.opt(c.batch_size, |w, b| w.u64(b as u64));
        match c.budget {
            Budget::Steps(t) => {
                w.u8(0);
                w.u64(t);
            }
            Budget::ForwardPasses(b) => {
                w.u8(1);
                w.u64(b);
            }
        }
        w.u64(c.run_seed);
        w.u8(match c.engine {
            Engine::Sequential => 0,
            Engine::Batched => 1,
        });
        w.opt(c.max_effective_step, Writer::f64);

        let s = &self.state;
        w.u64(s.step);
        w.u64(s.forward_passes);
        w.u64(s.degenerate_sigma);
        w.u32(s.theta.shapes().len() as u32);
        for shape in s.theta.shapes() {
            w.u32(shape.name.len() as u32);
            w.bytes(shape.name.as_bytes());
            w.u64(shape.rows as u64);
            w.u64(shape.cols as u64);
        }
        w.f64s(s.theta.values());
        w.opt(s.prev_losses.as_deref(), Writer::f64s);
        w.opt(s.adam_m.as_deref(), Writer::f64s);
        w.opt(s.adam_v.as_deref(), Writer::f64s);

        w.u64(self.reports.len() as u64);
        for r in &self.reports {
            w.u64(r.step);
            w.f64(r.loss);
            w.opt(r.sigma, Writer::f64);
            w.f64(r.effective_step);
            w.u64(r.forward_passes);
            w.u64(r.forward_cum);
            w.opt(r.grad_norm, Writer::f64);
            w.u8(r.degenerate as u8);
            w.u8(r.updated as u8);
        }
        w.bytes(END);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if bytes.is_empty() {
            return Err(FzooError::Checkpoint("empty file".into()));
        }
        if r.take(8)? != MAGIC {
            return Err(FzooError::Checkpoint("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(FzooError::Checkpoint(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }

        let code = r.u8()?;
        let kind = OptimizerKind::from_code(code)
            .ok_or_else(|| FzooError::Checkpoint(format!("unknown optimizer code {code}")))?;
        let lr = r.f64()?;
        let eps = r.f64()?;
        let directions = r.u64()? as usize;
        let batch_size = r.opt(|r| Ok(r.u64()? as usize))?;
        let budget = match r.u8()? {
            0 => Budget::Steps(r.u64()?),
            1 => Budget::ForwardPasses(r.u64()?),
            t => return Err(FzooError::Checkpoint(format!("unknown budget tag {t}"))),
        };
        let run_seed = r.u64()?;
        let engine = match r.u8()? {
            0 => Engine::Sequential,
            1 => Engine::Batched,
            t => return Err(FzooError::Checkpoint(format!("unknown engine tag {t}"))),
        };
        let max_effective_step = r.opt(Reader::f64)?;
        let config = OptimizerConfig {
            kind,
            lr,
            eps,
            directions,
            batch_size,
            budget,
            run_seed,
            engine,
            max_effective_step,
        };

        let step = r.u64()?;
        let forward_passes = r.u64()?;
        let degenerate_sigma = r.u64()?;
        let n_shapes = r.u32()?;
        let mut shapes = Vec::new();
        for _ in 0..n_shapes {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| FzooError::Checkpoint("layer name is not utf-8".into()))?
                .to_string();
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            shapes.push(LayerShape::new(name, rows, cols));
        }
        let values = r.f64s()?;
        let theta = ParamVector::new(values, shapes)
            .map_err(|e| FzooError::Checkpoint(format!("invalid parameters: {e}")))?;
        let state = OptimizerState {
            theta,
            step,
            forward_passes,
            prev_losses: r.opt(Reader::f64s)?,
            adam_m: r.opt(Reader::f64s)?,
            adam_v: r.opt(Reader::f64s)?,
            degenerate_sigma,
        };

        let count = r.u64()?;
        let mut reports = Vec::new();
        for _ in 0..count {
            reports.push(StepReport {
                step: r.u64()?,
                loss: r.f64()?,
                sigma: r.opt(Reader::f64)?,
                effective_step: r.f64()?,
                forward_passes: r.u64()?,
                forward_cum: r.u64()?,
                grad_norm: r.opt(Reader::f64)?,
                degenerate: r.u8()? != 0,
                updated: r.u8()? != 0,
            });
        }
        if r.take(8)? != END {
            return Err(FzooError::Checkpoint("corrupt trailer".into()));
        }
        if r.pos != bytes.len() {
            return Err(FzooError::Checkpoint(format!(
                "{} unexpected trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint {
            version,
            config,
            state,
            reports,
        })
    }

    /// Writes via a temporary file and rename, so readers never see a
    /// partial checkpoint.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("ckpt.tmp");
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            FzooError::Checkpoint(m) => FzooError::Checkpoint(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    /// Human-readable dump for inspection; not read back.
    pub fn to_debug_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        v.iter().for_each(|x| self.f64(*x));
    }
    fn opt<T>(&mut self, v: Option<T>, f: impl FnOnce(&mut Self, T)) {
        match v {
            Some(x) => {
                self.u8(1);
                f(self, x);
            }
            None => self.u8(0),
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(FzooError::Checkpoint(format!(
                "truncated at byte {} (needed {n} more)",
                self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()? as usize;
        if n > (self.bytes.len() - self.pos) / 8 {
            return Err(FzooError::Checkpoint(format!("truncated vector of {n} values")));
        }
        (0..n).map(|_| self.f64()).collect()
    }
    fn opt<T>(&mut self, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<Option<T>> {
        match self.u8()? {
            0 => Ok(None),
            1 => f(self).map(Some),
            t => Err(FzooError::Checkpoint(format!("bad presence flag {t}"))),
        }
    }
}
