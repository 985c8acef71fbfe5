//! Minimal flag parsing shared by all commands.

use anyhow::{bail, Context, Result};

#[derive(Debug, Clone, Default)]
pub struct Opts {
    pub positionals: Vec<String>,
    pub config: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub iou_threshold: Option<f64>,
    pub emit_coasted: bool,
}

impl Opts {
    pub fn out_dir(&self) -> &str {
        self.out.as_deref().unwrap_or(".")
    }
}

pub fn parse(args: &[String]) -> Result<Opts> {
    let mut o = Opts::default();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let mut value_of = |flag: &str| -> Result<String> {
            it.next()
                .cloned()
                .with_context(|| format!("flag {flag} expects a value"))
        };
        match arg.as_str() {
            "--config" => o.config = Some(value_of("--config")?),
            "--out" => o.out = Some(value_of("--out")?),
            "--seed" => {
                let v = value_of("--seed")?;
                o.seed = Some(v.parse().with_context(|| format!("bad seed '{v}'"))?);
            }
            "--iou-threshold" => {
                let v = value_of("--iou-threshold")?;
                o.iou_threshold = Some(
                    v.parse()
                        .with_context(|| format!("bad iou threshold '{v}'"))?,
                );
            }
            "--emit-coasted" => o.emit_coasted = true,
            s if s.starts_with("--") => bail!("unknown flag '{s}'"),
            s => o.positionals.push(s.to_string()),
        }
    }
    Ok(o)
}

pub fn expect_positionals(o: &Opts, names: &[&str]) -> Result<()> {
    if o.positionals.len() != names.len() {
        bail!(
            "expected {} positional argument(s) ({}), got {}",
            names.len(),
            names.join(", "),
            o.positionals.len()
        );
    }
    Ok(())
}
