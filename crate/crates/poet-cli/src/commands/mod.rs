pub mod backtest;
pub mod calibrate;
pub mod cv;
pub mod estimate;
pub mod select_k;
pub mod simulate;

use poet::factors::IcVariant;
use poet::panel::Orientation;
use poet::portfolio::{CSelect, PortfolioEstimator};
use poet::threshold::{ShrinkageRule, ThresholdStyle};
use poet::{KChoice, PoetError, Result, SimEstimator};

pub fn parse_orientation(s: &str) -> Result<Orientation> {
    match s.to_ascii_lowercase().as_str() {
        "cols" | "columns" | "assets-as-columns" => Ok(Orientation::AssetsAsColumns),
        "rows" | "assets-as-rows" => Ok(Orientation::AssetsAsRows),
        other => Err(PoetError::InvalidParameter(format!(
            "unknown orientation '{other}' (expected cols or rows)"
        ))),
    }
}

pub fn parse_ic(s: &str) -> Result<IcVariant> {
    match s.to_ascii_lowercase().as_str() {
        "ic1" => Ok(IcVariant::Ic1),
        "ic2" => Ok(IcVariant::Ic2),
        other => Err(PoetError::InvalidParameter(format!(
            "unknown criterion '{other}' (expected ic1 or ic2)"
        ))),
    }
}

pub fn parse_rule(s: &str, scad_a: f64, al_eta: f64) -> Result<ShrinkageRule> {
    let rule = match s.to_ascii_lowercase().as_str() {
        "hard" => ShrinkageRule::Hard,
        "soft" => ShrinkageRule::Soft,
        "scad" => ShrinkageRule::Scad { a: scad_a },
        "adaptive-lasso" | "adaptive_lasso" | "al" => ShrinkageRule::AdaptiveLasso { eta: al_eta },
        other => {
            return Err(PoetError::InvalidParameter(format!(
                "unknown rule '{other}' (expected hard, soft, scad, adaptive-lasso)"
            )))
        }
    };
    rule.validate()?;
    Ok(rule)
}

pub fn parse_style(s: &str) -> Result<ThresholdStyle> {
    match s.to_ascii_lowercase().as_str() {
        "theta" | "adaptive" | "adaptive-theta" | "adaptive_theta" => {
            Ok(ThresholdStyle::AdaptiveTheta)
        }
        "correlation" | "corr" => Ok(ThresholdStyle::Correlation),
        "constant" | "const" => Ok(ThresholdStyle::Constant),
        other => Err(PoetError::InvalidParameter(format!(
            "unknown threshold style '{other}' (expected theta, correlation, constant)"
        ))),
    }
}

/// Key-value estimator spec used by `simulate`:
/// `poet:k=3,c=0.5,rule=hard,style=theta`, `poet:k=auto`,
/// `known-factors:c=0.5,rule=hard`, `sample`.
pub fn parse_sim_estimator(spec: &str) -> Result<SimEstimator> {
    let (head, opts) = split_spec(spec);
    match head.as_str() {
        "sample" => Ok(SimEstimator::Sample),
        "poet" => {
            let k = parse_k_option(opts_get(&opts, "k").as_deref(), opts_get(&opts, "ic"))?;
            Ok(SimEstimator::Poet {
                k,
                c: parse_f64_opt(&opts, "c")?.unwrap_or(0.5),
                rule: parse_rule(
                    &opts_get(&opts, "rule").unwrap_or_else(|| "hard".into()),
                    parse_f64_opt(&opts, "scad_a")?.unwrap_or(3.7),
                    parse_f64_opt(&opts, "al_eta")?.unwrap_or(1.0),
                )?,
                style: parse_style(&opts_get(&opts, "style").unwrap_or_else(|| "theta".into()))?,
            })
        }
        "known-factors" | "known_factors" | "obs" => Ok(SimEstimator::KnownFactors {
            c: parse_f64_opt(&opts, "c")?.unwrap_or(0.5),
            rule: parse_rule(
                &opts_get(&opts, "rule").unwrap_or_else(|| "hard".into()),
                parse_f64_opt(&opts, "scad_a")?.unwrap_or(3.7),
                parse_f64_opt(&opts, "al_eta")?.unwrap_or(1.0),
            )?,
        }),
        other => Err(PoetError::InvalidParameter(format!(
            "unknown estimator '{other}' (expected poet, known-factors, sample)"
        ))),
    }
}

/// Estimator spec used by `backtest`:
/// `poet:k=auto,c=cv,rule=soft`, `poet:k=3,c=0.5`, `sfm:k=auto`, `sample`.
pub fn parse_portfolio_estimator(spec: &str, seed: u64) -> Result<PortfolioEstimator> {
    let (head, opts) = split_spec(spec);
    match head.as_str() {
        "sample" => Ok(PortfolioEstimator::Sample),
        "sfm" | "strict-factor" => Ok(PortfolioEstimator::StrictFactor {
            k: parse_k_option(opts_get(&opts, "k").as_deref(), opts_get(&opts, "ic"))?,
        }),
        "poet" => {
            let c = match opts_get(&opts, "c").as_deref() {
                Some("cv") | None => CSelect::CrossValidate {
                    h: 10,
                    grid_points: 50,
                    seed,
                },
                Some(v) => CSelect::Fixed {
                    c: v.parse().map_err(|_| {
                        PoetError::InvalidParameter(format!("invalid c '{v}'"))
                    })?,
                },
            };
            Ok(PortfolioEstimator::Poet {
                k: parse_k_option(opts_get(&opts, "k").as_deref(), opts_get(&opts, "ic"))?,
                c,
                rule: parse_rule(
                    &opts_get(&opts, "rule").unwrap_or_else(|| "soft".into()),
                    parse_f64_opt(&opts, "scad_a")?.unwrap_or(3.7),
                    parse_f64_opt(&opts, "al_eta")?.unwrap_or(1.0),
                )?,
                style: parse_style(&opts_get(&opts, "style").unwrap_or_else(|| "theta".into()))?,
            })
        }
        other => Err(PoetError::InvalidParameter(format!(
            "unknown estimator '{other}' (expected poet, sfm, sample)"
        ))),
    }
}

fn parse_k_option(k: Option<&str>, ic: Option<String>) -> Result<KChoice> {
    match k {
        None | Some("auto") => {
            let variant = parse_ic(&ic.unwrap_or_else(|| "ic1".into()))?;
            Ok(KChoice::auto(variant))
        }
        Some(v) => {
            let k: usize = v
                .parse()
                .map_err(|_| PoetError::InvalidParameter(format!("invalid k '{v}'")))?;
            Ok(KChoice::fixed(k))
        }
    }
}

fn split_spec(spec: &str) -> (String, Vec<(String, String)>) {
    match spec.split_once(':') {
        None => (spec.trim().to_ascii_lowercase(), Vec::new()),
        Some((head, rest)) => {
            let opts = rest
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .filter_map(|kv| {
                    kv.split_once('=')
                        .map(|(k, v)| (k.trim().to_ascii_lowercase(), v.trim().to_string()))
                })
                .collect();
            (head.trim().to_ascii_lowercase(), opts)
        }
    }
}

fn opts_get(opts: &[(String, String)], key: &str) -> Option<String> {
    opts.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.clone())
}

fn parse_f64_opt(opts: &[(String, String)], key: &str) -> Result<Option<f64>> {
    match opts_get(opts, key) {
        None => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| PoetError::InvalidParameter(format!("invalid {key} '{v}'"))),
    }
}
