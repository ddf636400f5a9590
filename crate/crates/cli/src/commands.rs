//! `run` and `sweep`. Outputs are staged next to the target directory and
//! moved into place only after everything has been written, so a failed
//! invocation leaves no partial files behind.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cvdep::clock::ClockMode;
use cvdep::harness::{reports_csv, run_scenario_with, run_sweep, ReportFormat, RunOptions, Scenario};

pub struct RunArgs {
    pub scenario: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub clock: Option<ClockMode>,
    pub format: ReportFormat,
}

pub struct SweepArgs {
    pub template: PathBuf,
    pub mobile: Vec<usize>,
    pub fixed: usize,
    pub seeds: u64,
    pub out: PathBuf,
}

/// Runs one scenario and returns the report as CSV.
pub fn run(args: &RunArgs) -> Result<String> {
    let scenario = Scenario::from_file(&args.scenario)?;
    check_target(&args.out)?;
    let staged = Staging::new(&args.out)?;
    let opts = RunOptions {
        out_dir: Some(staged.path.clone()),
        format: args.format,
        seed: args.seed,
        clock: args.clock,
        ..Default::default()
    };
    let outcome = run_scenario_with(&scenario, &opts, &mut |_| {})?;
    staged.commit()?;
    Ok(reports_csv(std::slice::from_ref(&outcome.report)))
}

/// Runs the template for every mobile count and returns the pooled CSV.
pub fn sweep(args: &SweepArgs) -> Result<String> {
    let template = Scenario::from_file(&args.template)?;
    check_target(&args.out)?;
    let staged = Staging::new(&args.out)?;
    let result = run_sweep(&template, &args.mobile, args.fixed, args.seeds, Some(&staged.path))?;
    staged.commit()?;
    Ok(reports_csv(&result.pooled))
}

fn check_target(out: &Path) -> Result<()> {
    if out.is_file() {
        bail!("{} is a file", out.display());
    }
    if out.is_dir() && std::fs::read_dir(out)?.next().is_some() {
        bail!("{} is not empty", out.display());
    }
    Ok(())
}

/// Hidden sibling directory that becomes the output directory on commit and
/// is removed otherwise.
struct Staging {
    path: PathBuf,
    target: PathBuf,
    done: bool,
}

impl Staging {
    fn new(target: &Path) -> Result<Self> {
        let name = target.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        let path = parent.join(format!(".{name}.partial-{}", std::process::id()));
        if path.exists() {
            std::fs::remove_dir_all(&path)?;
        }
        Ok(Self { path, target: target.to_path_buf(), done: false })
    }

    fn commit(mut self) -> Result<()> {
        if self.target.is_dir() {
            std::fs::remove_dir(&self.target).with_context(|| format!("replacing {}", self.target.display()))?;
        }
        std::fs::rename(&self.path, &self.target).with_context(|| format!("moving outputs to {}", self.target.display()))?;
        self.done = true;
        Ok(())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.done && self.path.exists() {
            let _ = std::fs::remove_dir_all(&self.path);
        }
    }
}
