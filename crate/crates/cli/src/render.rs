use std::fmt::Write as _;
use std::io::Write;

use bibt_core::measures::ranked_triads;
use bibt_core::sim::reference::{ICBT_SPARSITY_HALF, ICBT_SPARSITY_ONE};
use bibt_core::{
    ComparisonData, EdgeFlow, HodgeProjection, MeasureSummary, ModelKind, OperatorSet,
    PosteriorDraws, Quantity, StudyReport, Trials,
};

const TOP_TRIADS: usize = 5;

fn find(summaries: &[MeasureSummary], q: Quantity) -> Option<&MeasureSummary> {
    summaries.iter().find(|s| s.quantity == q)
}

pub fn global_line(summaries: &[MeasureSummary]) -> String {
    let Some(g) = find(summaries, Quantity::GlobalMeasure) else {
        return String::new();
    };
    let lo = g.quantile(0.025).map_or(f64::NAN, |q| q[0]);
    let hi = g.quantile(0.975).map_or(f64::NAN, |q| q[0]);
    format!("global intransitivity: mean {:.4}, 95% CI [{lo:.4}, {hi:.4}]\n", g.mean[0])
}

pub fn fit_summary(draws: &PosteriorDraws, summaries: &[MeasureSummary], data: &ComparisonData) -> String {
    let mut out = String::new();
    let games: u64 = data.trials().iter().map(|&t| u64::from(t)).sum();
    let _ = writeln!(
        out,
        "model={} entities={} games={games} draws={} seconds={:.2}",
        draws.model.as_str(),
        data.n_entities(),
        draws.n_draws(),
        draws.elapsed_seconds
    );
    if draws.model == ModelKind::Bibt {
        out.push_str(&global_line(summaries));
    }
    if let Some(m) = find(summaries, Quantity::Matchup) {
        let _ = writeln!(out, "matchups with 95% CI excluding zero: {}/{}", m.flagged_count, m.len());
    }
    if draws.model == ModelKind::Baseline {
        return out;
    }
    let Some(v) = find(summaries, Quantity::Vorticity) else {
        return out;
    };
    let ops_idx = match bibt_core::ComplexIndex::new(data.n_entities()) {
        Ok(i) => i,
        Err(_) => return out,
    };
    let _ = writeln!(out, "triads with 95% CI excluding zero: {}/{}", v.flagged_count, v.len());
    if let Ok(top) = ranked_triads(v, &ops_idx, Some(TOP_TRIADS)) {
        let _ = writeln!(out, "{:<24} {:>9} {:>9} {:>9}", "triad", "mean", "2.5%", "97.5%");
        for t in top {
            let mark = if t.excludes_zero { " *" } else { "" };
            let _ = writeln!(
                out,
                "{:<24} {:>9.4} {:>9.4} {:>9.4}{mark}",
                t.label, t.mean, t.lower95, t.upper95
            );
        }
    }
    out
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

fn reference_row(report: &StudyReport) -> Option<(f64, f64, f64, f64)> {
    let c = &report.config;
    if c.n_entities != 10 || c.trials != Trials::Constant(100) {
        return None;
    }
    if c.sparsity == 0.5 {
        Some(ICBT_SPARSITY_HALF)
    } else if c.sparsity == 1.0 {
        Some(ICBT_SPARSITY_ONE)
    } else {
        None
    }
}

/// Coverage table with one row per model.
pub fn study_table(report: &StudyReport) -> String {
    let mut out = String::new();
    let c = &report.config;
    let _ = writeln!(
        out,
        "N={} sparsity={} replications={} seed={}",
        c.n_entities, c.sparsity, c.replications, c.master_seed
    );
    let _ = writeln!(
        out,
        "{:<10} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>8} {:>8} {:>8}",
        "model", "CP90 M", "CP95 M", "CP90 g", "CP95 g", "CP90 c", "CP95 c", "MSE M", "MSE g", "MSE c"
    );
    for agg in std::iter::once(&report.bibt).chain(report.baseline.as_ref()) {
        let cov = |i: usize, f: fn(&bibt_core::sim::AggregateCoverage) -> Option<f64>| {
            cell(agg.coverage.get(i).and_then(f))
        };
        let mse = |f: fn(&bibt_core::sim::Mse) -> f64| cell(agg.mse.map(|m| f(&m)));
        let _ = writeln!(
            out,
            "{:<10} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>8} {:>8} {:>8}",
            agg.model.as_str(),
            cov(0, |c| c.m),
            cov(1, |c| c.m),
            cov(0, |c| c.grad),
            cov(1, |c| c.grad),
            cov(0, |c| c.curl),
            cov(1, |c| c.curl),
            mse(|m| m.m),
            mse(|m| m.grad),
            mse(|m| m.curl),
        );
        if agg.failed > 0 {
            let _ = writeln!(out, "  {} of {} replications failed", agg.failed, agg.failed + agg.succeeded);
        }
    }
    if let Some((m90, m95, c90, c95)) = reference_row(report) {
        let _ = writeln!(
            out,
            "{:<10} {m90:>7.3} {m95:>7.3} {:>7} {:>7} {c90:>7.3} {c95:>7.3}   (published)",
            "icbt", "-", "-"
        );
    }
    if let Some(g) = report.bibt.mean_global_measure {
        let _ = writeln!(out, "mean global intransitivity (bibt): {g:.4}");
    }
    out
}

pub fn decomposition_csv(
    w: &mut dyn Write,
    ops: &OperatorSet,
    m: &EdgeFlow,
    p: &HodgeProjection,
) -> std::io::Result<()> {
    use bibt_core::io::fmt_f64;
    writeln!(w, "i,j,value,grad,curl")?;
    for (e, &(i, j)) in ops.index().edges().iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{}",
            i + 1,
            j + 1,
            fmt_f64(m.0[e]),
            fmt_f64(p.grad.0[e]),
            fmt_f64(p.curl.0[e])
        )?;
    }
    Ok(())
}
