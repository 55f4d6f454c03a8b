//! `key = value` run files. Keys are the long flag names (`grid-res`,
//! `heatmap-at`, ...); underscores are accepted in place of dashes. A value
//! from the file is used only when the flag was not given.

use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

use crate::RunArgs;

pub fn load(path: &Path) -> Result<Vec<(usize, String, String)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse(&text).with_context(|| format!("in config {}", path.display()))
}

pub fn parse(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| anyhow!("line {}: expected `key = value`", k + 1))?;
        out.push((k + 1, key.trim().replace('_', "-"), value.trim().to_string()));
    }
    Ok(out)
}

fn value<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e| anyhow!("line {line}: bad value `{v}` for `{key}`: {e}"))
}

fn fill<T: FromStr>(slot: &mut Option<T>, line: usize, key: &str, v: &str) -> Result<()>
where
    T::Err: std::fmt::Display,
{
    if slot.is_none() {
        *slot = Some(value(line, key, v)?);
    }
    Ok(())
}

impl RunArgs {
    pub fn merge(&mut self, entries: &[(usize, String, String)]) -> Result<()> {
        for (line, key, v) in entries {
            let (line, key, v) = (*line, key.as_str(), v.as_str());
            match key {
                "polygon" => fill(&mut self.polygon, line, key, v)?,
                "scheme" => fill(&mut self.scheme, line, key, v)?,
                "r" => fill(&mut self.r, line, key, v)?,
                "iters" => fill(&mut self.iters, line, key, v)?,
                "inner-iters" => fill(&mut self.inner_iters, line, key, v)?,
                "grid-res" => fill(&mut self.grid_res, line, key, v)?,
                "grid-radius" => fill(&mut self.grid_radius, line, key, v)?,
                "tol" => fill(&mut self.tol, line, key, v)?,
                "eps" => fill(&mut self.eps, line, key, v)?,
                "out" => fill(&mut self.out, line, key, v)?,
                "threads" => fill(&mut self.threads, line, key, v)?,
                "weights" => fill(&mut self.weights, line, key, v)?,
                "dump-weights" => self.dump_weights |= value::<bool>(line, key, v)?,
                "timing" => self.timing |= value::<bool>(line, key, v)?,
                "heatmap-at" => {
                    if self.heatmap_at.is_empty() {
                        self.heatmap_at = v
                            .split(',')
                            .filter(|s| !s.trim().is_empty())
                            .map(|s| value(line, key, s.trim()))
                            .collect::<Result<_>>()?;
                    }
                }
                _ => bail!("line {line}: unknown key `{key}`"),
            }
        }
        Ok(())
    }
}
