//! Result directories: CSV tables plus a JSON manifest that echoes the full
//! configuration, so a run can be repeated from its manifest alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LatentState, Param, ParamVector};
use crate::products::{Bands, ForecastFan, PooledState, Quantity, StatePosterior, BAND_LEVELS};
use crate::smc2::{ParamSummary, RunDiagnostics, StepSummary};

pub const PARAM_HISTORY: &str = "param_history.csv";
pub const STATE_BANDS: &str = "state_bands.csv";
pub const POSTERIOR_SAMPLES: &str = "posterior_samples.csv";
pub const FINAL_STATES: &str = "final_states.csv";
pub const FORECAST: &str = "forecast.csv";
pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    /// `complete` or `aborted`.
    pub status: String,
    pub error: Option<String>,
    pub seed: u64,
    /// Every configuration key; see `ExperimentConfig::to_pairs`.
    pub config: BTreeMap<String, String>,
    pub diagnostics: Option<RunDiagnostics>,
    pub metrics: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    pub files: Vec<String>,
}

#[derive(Clone, Debug, Default)]
pub struct RunArtifacts<'a> {
    pub history: &'a [StepSummary],
    pub bands: Option<&'a StatePosterior>,
    /// Final parameter particles with their log-weights.
    pub samples: &'a [(ParamVector, f64)],
    pub forecast: Option<&'a ForecastFan>,
    pub manifest: Manifest,
}

const PARAM_HEADER: &str = "time,param,mean,sd,q2.5,q25,q50,q75,q97.5";
const THETA_COLUMNS: [Param; 5] = [Param::Alpha, Param::Gamma, Param::NuBeta, Param::Phi, Param::Beta0];

fn bands_header(first: &str) -> String {
    let mut h = format!("{first},quantity,mean,median");
    for l in BAND_LEVELS {
        let pct = (l * 100.0).round();
        write!(h, ",lo{pct},hi{pct}").unwrap();
    }
    h
}

fn push_bands(out: &mut String, key: usize, name: &str, b: &Bands) {
    write!(out, "{key},{name},{},{}", b.mean, b.median).unwrap();
    for k in 0..BAND_LEVELS.len() {
        write!(out, ",{},{}", b.lower[k], b.upper[k]).unwrap();
    }
    out.push('\n');
}

fn write_file(dir: &Path, name: &str, body: &str, files: &mut Vec<String>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    files.push(name.to_string());
    Ok(())
}

/// Writes the tables present in `artifacts` and the manifest into `dir`.
/// With an empty parameter history only the manifest is written.
pub fn write_results(dir: &Path, artifacts: RunArtifacts<'_>) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = artifacts.manifest;
    manifest.files.clear();
    if manifest.version.is_empty() {
        manifest.version = env!("CARGO_PKG_VERSION").to_string();
    }
    if !artifacts.history.is_empty() {
        let mut s = format!("{PARAM_HEADER}\n");
        for step in artifacts.history {
            for p in &step.params {
                write!(s, "{},{},{},{}", step.t, p.param, p.mean, p.sd).unwrap();
                for q in p.quantiles {
                    write!(s, ",{q}").unwrap();
                }
                s.push('\n');
            }
        }
        write_file(dir, PARAM_HISTORY, &s, &mut manifest.files)?;

        if !artifacts.samples.is_empty() {
            let mut s = THETA_COLUMNS.map(Param::name).join(",") + ",log_weight\n";
            for (theta, lw) in artifacts.samples {
                for p in THETA_COLUMNS {
                    write!(s, "{},", theta.get(p)).unwrap();
                }
                writeln!(s, "{lw}").unwrap();
            }
            write_file(dir, POSTERIOR_SAMPLES, &s, &mut manifest.files)?;
        }

        if let Some(post) = artifacts.bands {
            let mut s = bands_header("time") + "\n";
            for (t, row) in post.bands.iter().enumerate() {
                for (q, b) in Quantity::ALL.iter().zip(row) {
                    push_bands(&mut s, t + 1, q.name(), b);
                }
            }
            write_file(dir, STATE_BANDS, &s, &mut manifest.files)?;

            let mut s = THETA_COLUMNS.map(Param::name).join(",") + ",S,E,I,R,Z,log_beta,weight\n";
            for p in &post.final_states {
                for q in THETA_COLUMNS {
                    write!(s, "{},", p.theta.get(q)).unwrap();
                }
                for c in p.state.coords() {
                    write!(s, "{c},").unwrap();
                }
                writeln!(s, "{}", p.weight).unwrap();
            }
            write_file(dir, FINAL_STATES, &s, &mut manifest.files)?;
        }
    }
    if let Some(fan) = artifacts.forecast {
        let mut s = bands_header("horizon") + "\n";
        for (k, h) in fan.horizons.iter().enumerate() {
            push_bands(&mut s, *h, "observation", &fan.observations[k]);
            for (q, b) in Quantity::ALL.iter().zip(&fan.states[k]) {
                push_bands(&mut s, *h, q.name(), b);
            }
        }
        write_file(dir, FORECAST, &s, &mut manifest.files)?;
    }
    manifest.files.push(MANIFEST.to_string());
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Numerical(format!("cannot encode manifest: {e}")))?;
    let path = dir.join(MANIFEST);
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Data rows of a CSV file with the expected header, as `(line, fields)`.
fn read_rows(path: &Path, header: &str) -> Result<Vec<(usize, Vec<String>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let origin = path.display().to_string();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        _ => {
            return Err(Error::Parse {
                path: origin,
                line: 1,
                msg: format!("expected header '{header}'"),
            })
        }
    }
    let width = header.split(',').count();
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            let fields: Vec<String> = l.split(',').map(|f| f.trim().to_string()).collect();
            if fields.len() != width {
                return Err(Error::Parse {
                    path: origin.clone(),
                    line: n + 1,
                    msg: format!("expected {width} fields, found {}", fields.len()),
                });
            }
            Ok((n + 1, fields))
        })
        .collect()
}

fn parse_f64(path: &Path, line: usize, s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Parse {
        path: path.display().to_string(),
        line,
        msg: format!("'{s}' is not a number"),
    })
}

fn parse_usize(path: &Path, line: usize, s: &str) -> Result<usize> {
    s.parse().map_err(|_| Error::Parse {
        path: path.display().to_string(),
        line,
        msg: format!("'{s}' is not an index"),
    })
}

pub fn read_param_history(path: &Path) -> Result<Vec<StepSummary>> {
    let mut out: Vec<StepSummary> = Vec::new();
    for (line, f) in read_rows(path, PARAM_HEADER)? {
        let t = parse_usize(path, line, &f[0])?;
        let param: Param = f[1].parse().map_err(|e: Error| Error::Parse {
            path: path.display().to_string(),
            line,
            msg: e.to_string(),
        })?;
        let mut nums = [0.0; 7];
        for (k, v) in nums.iter_mut().enumerate() {
            *v = parse_f64(path, line, &f[k + 2])?;
        }
        let summary = ParamSummary {
            param,
            mean: nums[0],
            sd: nums[1],
            quantiles: [nums[2], nums[3], nums[4], nums[5], nums[6]],
        };
        match out.last_mut() {
            Some(step) if step.t == t => step.params.push(summary),
            _ => out.push(StepSummary {
                t,
                params: vec![summary],
            }),
        }
    }
    Ok(out)
}

fn read_bands_rows(path: &Path, first: &str) -> Result<Vec<(usize, usize, String, Bands)>> {
    let header = bands_header(first);
    read_rows(path, &header)?
        .into_iter()
        .map(|(line, f)| {
            let key = parse_usize(path, line, &f[0])?;
            let nums: Vec<f64> = f[2..]
                .iter()
                .map(|v| parse_f64(path, line, v))
                .collect::<Result<_>>()?;
            let mut b = Bands {
                mean: nums[0],
                median: nums[1],
                lower: [0.0; 4],
                upper: [0.0; 4],
            };
            for k in 0..BAND_LEVELS.len() {
                b.lower[k] = nums[2 + 2 * k];
                b.upper[k] = nums[3 + 2 * k];
            }
            if !b.is_nested() {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line,
                    msg: "credible bands are not nested".into(),
                });
            }
            Ok((line, key, f[1].clone(), b))
        })
        .collect()
}

/// `bands[t - 1][k]` for `Quantity::ALL[k]`; rejects bands that do not nest.
pub fn read_state_bands(path: &Path) -> Result<Vec<Vec<Bands>>> {
    let mut out: Vec<Vec<Bands>> = Vec::new();
    for (line, t, name, b) in read_bands_rows(path, "time")? {
        let k = out.last().map_or(Quantity::ALL.len(), Vec::len);
        let expected = if k == Quantity::ALL.len() { 0 } else { k };
        let q = Quantity::from_name(&name)?;
        if q != Quantity::ALL[expected] || (expected == 0 && t != out.len() + 1) {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line,
                msg: format!("unexpected row {t},{name}"),
            });
        }
        if expected == 0 {
            out.push(Vec::with_capacity(Quantity::ALL.len()));
        }
        out.last_mut().expect("row started").push(b);
    }
    if out.last().is_some_and(|r| r.len() != Quantity::ALL.len()) {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: "last time point is missing quantities".into(),
        });
    }
    Ok(out)
}

/// Horizon-major rows of `forecast.csv`: `(horizon, quantity, bands)`, with
/// `quantity` either `observation` or a state quantity name.
pub fn read_forecast(path: &Path) -> Result<Vec<(usize, String, Bands)>> {
    Ok(read_bands_rows(path, "horizon")?
        .into_iter()
        .map(|(_, h, q, b)| (h, q, b))
        .collect())
}

fn theta_from(path: &Path, line: usize, f: &[String]) -> Result<ParamVector> {
    let mut theta = ParamVector::default();
    for (k, p) in THETA_COLUMNS.iter().enumerate() {
        theta.set(*p, parse_f64(path, line, &f[k])?);
    }
    Ok(theta)
}

pub fn read_posterior_samples(path: &Path) -> Result<Vec<(ParamVector, f64)>> {
    let header = THETA_COLUMNS.map(Param::name).join(",") + ",log_weight";
    read_rows(path, &header)?
        .into_iter()
        .map(|(line, f)| Ok((theta_from(path, line, &f)?, parse_f64(path, line, &f[5])?)))
        .collect()
}

pub fn read_final_states(path: &Path) -> Result<Vec<PooledState>> {
    let header = THETA_COLUMNS.map(Param::name).join(",") + ",S,E,I,R,Z,log_beta,weight";
    read_rows(path, &header)?
        .into_iter()
        .map(|(line, f)| {
            let theta = theta_from(path, line, &f)?;
            let mut c = [0.0; 6];
            for (k, v) in c.iter_mut().enumerate() {
                *v = parse_f64(path, line, &f[5 + k])?;
            }
            Ok(PooledState {
                theta,
                state: LatentState::from_coords(c),
                weight: parse_f64(path, line, &f[11])?,
            })
        })
        .collect()
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        msg: e.to_string(),
    })
}
