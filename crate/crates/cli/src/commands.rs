use std::fmt::Write as _;

use svexp_core::expansion::{
    implied_variance_expansion, put_expansion, skew_atm, skew_generic, total_volatility_expansion,
};
use svexp_core::mc::{
    conditional_iv_from_bundle, convergence_from_bundles, simulate_paths, simulate_paths_crn,
    ConditionalIvRow, ConvergenceRow, SimConfig, SimGrid,
};
use svexp_core::model::{expansion_inputs, ConditionalMean, ExpansionInputs};

use crate::config::RunConfig;
use crate::error::{CliResult, ExitStatus};
use crate::output::{csv_table, num, opt_num};

/// Log-moneyness step of the skew finite difference.
pub const SKEW_FD_STEP: f64 = 1e-4;

pub const PRICE_COLUMNS: [&str; 7] = [
    "strike",
    "k",
    "bs_price",
    "correction",
    "price_form_a",
    "price_form_c",
    "equiv_total_variance",
];
pub const SMILE_COLUMNS: [&str; 4] = ["strike", "k", "implied_total_variance", "implied_vol"];
pub const SKEW_COLUMNS: [&str; 6] = [
    "method",
    "skew",
    "fd_skew",
    "difference",
    "fd_sqrt_implied_variance",
    "difference_sqrt_implied_variance",
];
pub const VALIDATE_COLUMNS: [&str; 7] = ["eps", "p_mc", "se", "p_exp", "err", "err_over_eps", "ratio"];
pub const CONDITIONAL_IV_COLUMNS: [&str; 5] = ["strike", "regression_iv", "mc_iv", "expansion_iv", "flag"];

/// What a command produced: a CSV table, a human summary, and the status.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub csv: String,
    pub summary: String,
    pub status: ExitStatus,
}

fn expansion_setup(cfg: &RunConfig) -> CliResult<(ExpansionInputs, ConditionalMean)> {
    let inputs = expansion_inputs(&cfg.model)?;
    let mean = cfg.mean_override().unwrap_or_else(|| inputs.conditional_mean());
    Ok((inputs, mean))
}

fn sim_setup(cfg: &RunConfig) -> CliResult<(SimGrid, SimConfig)> {
    let grid = SimGrid::for_model(&cfg.model, cfg.n_steps)?;
    let mut sim = SimConfig::new(cfg.n_paths, cfg.seed);
    sim.antithetic = cfg.antithetic;
    Ok((grid, sim))
}

pub fn cmd_price(cfg: &RunConfig) -> CliResult<Report> {
    let (inputs, mean) = expansion_setup(cfg)?;
    let spot = cfg.model.spot();
    let rows = cfg
        .strikes()?
        .iter()
        .map(|&strike| {
            let r = put_expansion(&inputs, &mean, strike)?;
            Ok(vec![
                num(strike),
                num((strike / spot).ln()),
                num(r.leading),
                num(r.correction),
                num(r.form_a),
                num(r.form_c),
                num(r.equivalent_variance),
            ])
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(Report {
        csv: csv_table(&PRICE_COLUMNS, &rows)?,
        summary: format!(
            "v = {}, E[XY] = {}, eps = {}; {} strikes priced",
            num(inputs.v_eps),
            num(inputs.exy),
            inputs.eps,
            rows.len()
        ),
        status: ExitStatus::Success,
    })
}

pub fn cmd_smile(cfg: &RunConfig) -> CliResult<Report> {
    let (inputs, mean) = expansion_setup(cfg)?;
    let horizon = cfg.model.horizon();
    let rows = cfg
        .strikes()?
        .iter()
        .map(|&strike| {
            let p = implied_variance_expansion(&inputs, &mean, strike)?;
            Ok(vec![
                num(strike),
                num(p.log_moneyness),
                num(p.implied_total_variance),
                num((p.implied_total_variance / horizon).sqrt()),
            ])
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(Report {
        csv: csv_table(&SMILE_COLUMNS, &rows)?,
        summary: format!("{} smile points", rows.len()),
        status: ExitStatus::Success,
    })
}

pub fn cmd_skew(cfg: &RunConfig) -> CliResult<Report> {
    let (inputs, mean) = expansion_setup(cfg)?;
    let (method, skew) = match &mean {
        ConditionalMean::Affine { .. } => ("atm", skew_atm(&inputs, &mean)?),
        ConditionalMean::Custom(_) => ("generic", skew_generic(&inputs, &mean, 0.0)),
    };
    let spot = inputs.spot;
    let (up, down) = (spot * SKEW_FD_STEP.exp(), spot * (-SKEW_FD_STEP).exp());
    let fd_vol = (total_volatility_expansion(&inputs, &mean, up)?
        - total_volatility_expansion(&inputs, &mean, down)?)
        / (2.0 * SKEW_FD_STEP);
    let sqrt_iv = |k: f64| -> CliResult<f64> {
        Ok(implied_variance_expansion(&inputs, &mean, k)?.implied_total_variance.sqrt())
    };
    let fd_sqrt = (sqrt_iv(up)? - sqrt_iv(down)?) / (2.0 * SKEW_FD_STEP);
    let row = vec![
        method.to_string(),
        num(skew),
        num(fd_vol),
        num(skew - fd_vol),
        num(fd_sqrt),
        num(skew - fd_sqrt),
    ];
    Ok(Report {
        csv: csv_table(&SKEW_COLUMNS, &[row])?,
        summary: format!(
            "skew ({method}) = {}; finite difference of first-order total vol = {} (diff {:.3e}); \
             of sqrt(v_hat) = {} (diff {:.3e}, second order in eps)",
            num(skew),
            num(fd_vol),
            skew - fd_vol,
            num(fd_sqrt),
            skew - fd_sqrt
        ),
        status: ExitStatus::Success,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub pass: bool,
    pub message: String,
}

/// PASS when `err/ε` strictly decreases over the rows with `ε > 0` and the
/// last such row has `err ≤ max(3 se, err_prev / 2)`: an error that halves
/// (or better) when ε halves, unless it is already inside the noise.
///
/// Rows at ε = 0 carry no rate information and are ignored. With a single
/// positive ε there is no previous error to budget against, so the last row
/// must sit within 3 se on its own.
pub fn validation_verdict(rows: &[ConvergenceRow]) -> Verdict {
    let pos: Vec<&ConvergenceRow> = rows.iter().filter(|r| r.eps > 0.0).collect();
    let Some(last) = pos.last() else {
        return Verdict {
            pass: true,
            message: "PASS (no positive eps: nothing to test)".into(),
        };
    };
    let mut reasons = Vec::new();
    for w in pos.windows(2) {
        let (a, b) = (w[0].err / w[0].eps, w[1].err / w[1].eps);
        if !(b < a) {
            reasons.push(format!(
                "err/eps not decreasing: {:.4e} at eps={} then {:.4e} at eps={}",
                a, w[0].eps, b, w[1].eps
            ));
        }
    }
    let noise = 3.0 * last.p_mc.std_error;
    let budget = if pos.len() >= 2 {
        noise.max(0.5 * pos[pos.len() - 2].err)
    } else {
        noise
    };
    if !(last.err <= budget) {
        reasons.push(format!(
            "final err {:.4e} exceeds budget {:.4e} at eps={}",
            last.err, budget, last.eps
        ));
    }
    if reasons.is_empty() {
        return Verdict {
            pass: true,
            message: format!(
                "PASS: err/eps decreasing; final err {:.4e} <= {:.4e}",
                last.err, budget
            ),
        };
    }
    let smallest_gap = pos
        .windows(2)
        .map(|w| (w[0].err - w[1].err).abs())
        .fold(f64::INFINITY, f64::min);
    let noisy = last.p_mc.std_error >= smallest_gap || pos.len() < 2;
    let hint = if noisy {
        format!(
            "; Monte Carlo noise (se {:.3e}) dominates the differences between rows, increase n_paths",
            last.p_mc.std_error
        )
    } else {
        String::new()
    };
    Verdict {
        pass: false,
        message: format!("FAIL: {}{hint}", reasons.join("; ")),
    }
}

fn joint_z(row: &ConditionalIvRow) -> Option<f64> {
    let mc = row.mc_iv?;
    let sd = (row.regression_std_error.powi(2) + mc.std_error.powi(2)).sqrt();
    Some((row.regression_iv - mc.mean) / sd)
}

pub fn cmd_validate(cfg: &RunConfig) -> CliResult<Report> {
    let eps_list = cfg.eps_list()?;
    let (grid, sim) = sim_setup(cfg)?;
    let bundles = simulate_paths_crn(&cfg.model, eps_list, &grid, &sim)?;
    let rows = convergence_from_bundles(&cfg.model, cfg.validate_strike, &bundles)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                num(r.eps),
                num(r.p_mc.mean),
                num(r.p_mc.std_error),
                num(r.p_exp),
                num(r.err),
                opt_num(r.err_over_eps),
                opt_num(r.ratio),
            ]
        })
        .collect();
    let verdict = validation_verdict(&rows);
    let mut summary = format!(
        "strike {}, {} samples{}, {} steps, seed {}\n{}",
        cfg.validate_strike,
        sim.n_paths,
        if sim.antithetic { " (antithetic pairs)" } else { "" },
        grid.n_steps(),
        sim.seed,
        verdict.message
    );
    // Conditional-expectation reading of the implied variance, reported only.
    if let Some(b) = bundles.iter().find(|b| b.eps == cfg.model.eps()) {
        let row = conditional_iv_from_bundle(&cfg.model, b, &[cfg.validate_strike], cfg.bandwidth)?[0];
        let _ = write!(
            summary,
            "\ninformational: E[int V | S_T = K] = {:.6e} +- {:.1e} vs implied {} vs expansion {:.6e}",
            row.regression_iv,
            row.regression_std_error,
            row.mc_iv
                .map(|m| format!("{:.6e} +- {:.1e}", m.mean, m.std_error))
                .unwrap_or_else(|| "omitted".into()),
            row.expansion_iv
        );
        if let Some(z) = joint_z(&row) {
            let _ = write!(summary, " (joint z = {z:.2})");
        }
    }
    Ok(Report {
        csv: csv_table(&VALIDATE_COLUMNS, &table)?,
        summary,
        status: if verdict.pass {
            ExitStatus::Success
        } else {
            ExitStatus::ValidationFail
        },
    })
}

fn flag(row: &ConditionalIvRow) -> &'static str {
    match (row.effective_samples < svexp_core::mc::MIN_EFFECTIVE_SAMPLES, row.mc_iv.is_none()) {
        (false, false) => "ok",
        (true, false) => "sparse",
        (false, true) => "omitted",
        (true, true) => "sparse;omitted",
    }
}

pub fn cmd_conditional_iv(cfg: &RunConfig) -> CliResult<Report> {
    let strikes = cfg.strikes()?;
    let (grid, sim) = sim_setup(cfg)?;
    let bundle = simulate_paths(&cfg.model, &grid, &sim)?;
    let rows = conditional_iv_from_bundle(&cfg.model, &bundle, strikes, cfg.bandwidth)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                num(r.strike),
                num(r.regression_iv),
                opt_num(r.mc_iv.map(|m| m.mean)),
                num(r.expansion_iv),
                flag(r).to_string(),
            ]
        })
        .collect();
    let mut summary = format!(
        "bandwidth {:.4e} in log price, {} paths",
        rows.first().map(|r| r.bandwidth).unwrap_or(f64::NAN),
        bundle.n_paths()
    );
    for r in &rows {
        let _ = write!(
            summary,
            "\nK={}: regression se {:.2e}, effective samples {:.0}, mc_iv se {}, joint z {}",
            r.strike,
            r.regression_std_error,
            r.effective_samples,
            r.mc_iv.map(|m| format!("{:.2e}", m.std_error)).unwrap_or_else(|| "-".into()),
            joint_z(r).map(|z| format!("{z:.2}")).unwrap_or_else(|| "-".into()),
        );
    }
    Ok(Report {
        csv: csv_table(&CONDITIONAL_IV_COLUMNS, &table)?,
        summary,
        status: ExitStatus::Success,
    })
}
