//! Schema check and effective parameter table, without running anything.

use erwlab_core::contiguity::contiguity_constant;
use erwlab_core::recurrence::{lemma_window, return_window};
use erwlab_core::scaling::{geometric_grid, is_near_critical};
use erwlab_core::srw::green_window;
use erwlab_core::walk::Alpha;

use crate::config::{ExperimentConfig, Params};
use crate::error::Result;

/// `(key, value)` rows: every parameter, then derived quantities.
pub fn parameter_table(cfg: &ExperimentConfig) -> Result<Vec<(String, String)>> {
    let mut rows = vec![
        ("experiment".to_string(), cfg.experiment().to_string()),
        ("seed".into(), cfg.master_seed.to_string()),
        ("workers".into(), cfg.workers.to_string()),
        ("out".into(), cfg.output_dir.display().to_string()),
        ("config_hash".into(), cfg.hash()),
    ];
    let value = serde_json::to_value(&cfg.params)?;
    if let serde_json::Value::Object(map) = value {
        for (k, v) in map {
            if k != "experiment" {
                rows.push((k, v.to_string()));
            }
        }
    }
    let mut derived = |k: &str, v: String| rows.push((format!("derived.{k}"), v));
    let p_of = |a: f64| Alpha::new(a).map(|a| a.replay_probability());
    match &cfg.params {
        Params::Simulate(p) => {
            let a = p.alpha.expect("validated");
            derived("p", p_of(a)?.to_string());
            derived(
                "checkpoints",
                format!("{:?}", geometric_grid(1, p.n, p.checkpoints)),
            );
        }
        Params::Oracle(p) => {
            let a = p.alpha.expect("validated");
            derived("p", p_of(a)?.to_string());
            derived("paths", 4usize.pow(p.m as u32).to_string());
        }
        Params::Contiguity(p) => {
            derived("p", p_of(p.alpha)?.to_string());
            derived("window", format!("[{}, {}]", p.n, 2 * p.n));
            if let Some(a_eps) = p.a_eps {
                let c = erwlab_core::contiguity::ContiguityConfig::new(p.epsilon, p.a, a_eps, p.n)?;
                derived(
                    "c_eps_A",
                    contiguity_constant(&c, Alpha::new(p.alpha)?).to_string(),
                );
                derived("h_threshold", c.h_threshold().to_string());
            } else {
                derived(
                    "a_eps",
                    format!("calibrated from {} windows", p.calibration_samples),
                );
            }
        }
        Params::Recurrence(p) => {
            for &n in &p.second_moment_ns {
                let (lo, hi) = lemma_window(n);
                derived(&format!("lemma_window.n{n}"), format!("[{lo}, {hi}]"));
            }
            for &a in &p.alphas {
                derived(&format!("p.alpha{a}"), p_of(a)?.to_string());
            }
            for &n in &p.window_ns {
                let (lo, hi) = return_window(n);
                derived(&format!("return_window.n{n}"), format!("[{lo}, {hi}]"));
            }
            if p.triadic {
                derived("triadic.p", p_of(p.triadic_alpha)?.to_string());
                for j in p.j_min..=p.j_max {
                    let t = 3u64.pow(j);
                    derived(&format!("triadic_window.j{j}"), format!("[{t}, {}]", 3 * t));
                }
            }
        }
        Params::Scaling(p) => {
            derived(
                "n_grid",
                format!("{:?}", geometric_grid(p.n_min, p.n_max, p.points)),
            );
            for &a in &p.alphas {
                let alpha = Alpha::new(a)?;
                let regime = if is_near_critical(alpha) {
                    "critical (reported only)"
                } else if alpha.is_diffusive() {
                    "diffusive"
                } else {
                    "superdiffusive"
                };
                derived(
                    &format!("alpha{a}"),
                    format!("p = {}, {regime}", alpha.replay_probability()),
                );
            }
        }
        Params::Kernels(p) => {
            let (lo, hi) = green_window(p.n);
            derived("green_window", format!("[{lo}, {hi}]"));
            derived(
                "top_octave",
                format!("[{}, {}]", (p.k_max / 2).max(1), p.k_max),
            );
        }
    }
    Ok(rows)
}

pub fn render(rows: &[(String, String)]) -> String {
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    rows.iter()
        .map(|(k, v)| format!("{k:<width$}  {v}\n"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ConfigFile, Experiment, Overrides};

    #[test]
    fn derived_quantities_listed() {
        let file = ConfigFile::parse(
            "[recurrence]\nwindow_ns = [5]\nsecond_moment_ns = [7]\ntriadic = false\n",
        )
        .unwrap();
        let cfg = ExperimentConfig::resolve(Experiment::Recurrence, &file, &Overrides::default())
            .unwrap();
        let rows = parameter_table(&cfg).unwrap();
        let get = |k: &str| {
            rows.iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.clone())
        };
        assert_eq!(get("derived.return_window.n5").as_deref(), Some("[13, 15]"));
        assert_eq!(get("derived.lemma_window.n7").as_deref(), Some("[11, 14]"));
        assert_eq!(get("derived.p.alpha0.3").as_deref(), Some("0.475"));
    }
}
