//! Figure-data emission: digests task outputs into plain curve/histogram
//! CSVs with headers matching the plot axes. Binning parameters are
//! recorded inside each file as a comment line.

use crate::spec::ExperimentSpec;
use anyhow::{anyhow, bail, Context, Result};
use serde_json::json;
use spg_core::math::normal_cdf;
use std::path::Path;

pub fn run(spec: &ExperimentSpec) -> Result<serde_json::Value> {
    let kind = spec
        .options
        .kind
        .as_deref()
        .ok_or_else(|| anyhow!("figure-data requires --kind"))?;
    let input = spec
        .options
        .input
        .as_ref()
        .ok_or_else(|| anyhow!("figure-data requires --input <dir>"))?;
    match kind {
        "entropy-curve" => entropy_curve(spec, input),
        "gamma-scan" => gamma_scan(spec, input),
        "mirror-hist" => mirror_hist(spec, input),
        other => bail!("unknown figure kind '{other}' (entropy-curve | gamma-scan | mirror-hist)"),
    }
}

fn list_inputs(dir: &Path, prefix: &str) -> Result<Vec<std::path::PathBuf>> {
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with(prefix) && name.ends_with(".csv") {
            found.push(path);
        }
    }
    found.sort();
    if found.is_empty() {
        bail!("no {prefix}*.csv files in {}", dir.display());
    }
    Ok(found)
}

/// Entropy-vs-utility curves from musweep output, one (U, S) file per
/// sweep direction with the branch label kept.
fn entropy_curve(spec: &ExperimentSpec, input: &Path) -> Result<serde_json::Value> {
    let mut emitted = 0usize;
    for prefix in ["musweep_up_", "musweep_down_"] {
        let files = match list_inputs(input, prefix) {
            Ok(f) => f,
            Err(_) => continue,
        };
        for path in files {
            let text = std::fs::read_to_string(&path)?;
            let mut rows = vec!["U,S,branch".to_string()];
            for line in text.lines().skip(1) {
                let cols: Vec<&str> = line.split(',').collect();
                // mu,U,D,Cstar,S,muF,converged,iterations,branch
                if cols.len() == 9 && cols[6] == "true" {
                    rows.push(format!("{},{},{}", cols[1], cols[4], cols[8]));
                }
            }
            let name = path.file_name().unwrap().to_str().unwrap();
            let out = spec.out.join(format!("entropy_vs_utility_{name}"));
            std::fs::write(&out, rows.join("\n") + "\n")?;
            emitted += 1;
        }
    }
    if emitted == 0 {
        bail!("missing inputs: no musweep_up_*.csv or musweep_down_*.csv found");
    }
    Ok(json!({"files": emitted}))
}

/// Per-γ means from a γ-grid dyn run: initial and final utility plus the
/// fraction of runs ending above the good-equilibrium threshold.
fn gamma_scan(spec: &ExperimentSpec, input: &Path) -> Result<serde_json::Value> {
    let files = list_inputs(input, "dyn_")?;
    let threshold_frac = spec.options.good_threshold.unwrap_or(0.5);
    let mut emitted = 0usize;
    for path in files {
        let text = std::fs::read_to_string(&path)?;
        let mut header_ok = false;
        let mut per_gamma: std::collections::BTreeMap<u64, (f64, Vec<f64>, Vec<f64>)> =
            Default::default();
        for (ln, line) in text.lines().enumerate() {
            if ln == 0 {
                header_ok = line.ends_with(",gamma");
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 7 {
                continue;
            }
            let gamma: f64 = cols[6].parse()?;
            let entry = per_gamma
                .entry(gamma.to_bits())
                .or_insert((gamma, Vec::new(), Vec::new()));
            entry.1.push(cols[1].parse()?);
            entry.2.push(cols[2].parse()?);
        }
        if !header_ok {
            bail!(
                "{} was not produced by a gamma-grid dyn run (missing gamma column)",
                path.display()
            );
        }
        // Threshold as a fraction of the largest observed final utility.
        let max_final = per_gamma
            .values()
            .flat_map(|(_, _, f)| f.iter().copied())
            .fold(f64::NEG_INFINITY, f64::max);
        let threshold = threshold_frac * max_final;
        let mut rows = vec![format!(
            "gamma,init_U_mean,final_U_mean,good_fraction"
        )];
        let mut ordered: Vec<&(f64, Vec<f64>, Vec<f64>)> = per_gamma.values().collect();
        ordered.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (gamma, init, fin) in ordered {
            let im = init.iter().sum::<f64>() / init.len() as f64;
            let fm = fin.iter().sum::<f64>() / fin.len() as f64;
            let good = fin.iter().filter(|&&u| u >= threshold).count() as f64 / fin.len() as f64;
            rows.push(format!("{gamma},{im},{fm},{good}"));
        }
        rows.insert(
            1,
            format!("# good threshold = {threshold_frac} * max final U = {threshold}"),
        );
        let name = path.file_name().unwrap().to_str().unwrap();
        std::fs::write(spec.out.join(format!("gamma_scan_{name}")), rows.join("\n") + "\n")?;
        emitted += 1;
    }
    Ok(json!({"files": emitted}))
}

/// Histograms of the mirror-validation errors: raw Δ and normalized δ with
/// the standard-normal reference density per bin.
fn mirror_hist(spec: &ExperimentSpec, input: &Path) -> Result<serde_json::Value> {
    let files = list_inputs(input, "mirror_validate_")?;
    let bins = spec.options.bins.unwrap_or(40);
    let mut deltas = Vec::new();
    let mut normalized = Vec::new();
    for path in &files {
        let text = std::fs::read_to_string(path)?;
        for line in text.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() == 7 {
                deltas.push(cols[5].parse::<f64>()?);
                if !cols[6].is_empty() {
                    normalized.push(cols[6].parse::<f64>()?);
                }
            }
        }
    }
    if deltas.is_empty() {
        bail!("missing inputs: no rows found in mirror_validate_*.csv");
    }
    write_hist(&spec.out.join("delta_hist.csv"), &deltas, bins, false)?;
    write_hist(&spec.out.join("delta_norm_hist.csv"), &normalized, bins, true)?;
    Ok(json!({"edges": deltas.len(), "normalized": normalized.len()}))
}

fn write_hist(path: &Path, values: &[f64], bins: usize, with_normal: bool) -> Result<()> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = ((hi - lo) / bins as f64).max(1e-300);
    let mut counts = vec![0usize; bins];
    for &v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let mut rows = vec![if with_normal {
        "bin_center,density,normal_reference".to_string()
    } else {
        "bin_center,density".to_string()
    }];
    rows.insert(0, format!("# bins={bins} lo={lo} hi={hi} n={}", values.len()));
    let n = values.len() as f64;
    for (k, &c) in counts.iter().enumerate() {
        let center = lo + (k as f64 + 0.5) * width;
        let density = c as f64 / (n * width);
        if with_normal {
            let a = lo + k as f64 * width;
            let b = a + width;
            let reference = (normal_cdf(b) - normal_cdf(a)) / width;
            rows.push(format!("{center},{density},{reference}"));
        } else {
            rows.push(format!("{center},{density}"));
        }
    }
    std::fs::write(path, rows.join("\n") + "\n")?;
    Ok(())
}
