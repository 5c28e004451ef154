use std::fmt::Write;

use crate::arch::{pruning_rates, Cost};
use crate::gpir::JointScheme;

fn millions(v: u64) -> String {
    format!("{:.2}M", v as f64 / 1e6)
}

fn percent(v: f64) -> String {
    format!("{:.2}%", v * 100.0)
}

/// Markdown table of the baseline and every scheme. Error is left as a
/// placeholder: a fused scheme has no error until it is retrained.
/// Rates are recomputed from the scheme totals, not copied.
pub fn render_report(network: &str, baseline: Cost, schemes: &[JointScheme]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Pruning schemes for {network}\n");
    let _ = writeln!(out, "| Scheme | Err | Params | FLOPs | PR-P | PR-F | Reached | Steps |");
    let _ = writeln!(out, "|---|---|---|---|---|---|---|---|");
    let _ = writeln!(
        out,
        "| baseline | - | {} | {} | {} | {} | - | 0 |",
        millions(baseline.params),
        millions(baseline.flops),
        percent(0.0),
        percent(0.0)
    );
    for s in schemes {
        let rates = pruning_rates(baseline, s.totals);
        let _ = writeln!(
            out,
            "| target {} | - | {} | {} | {} | {} | {} | {} |",
            percent(s.target_pr),
            millions(s.totals.params),
            millions(s.totals.flops),
            percent(rates.pr_params),
            percent(rates.pr_flops),
            if s.reached { "yes" } else { "NO" },
            s.trace.len()
        );
    }
    if schemes.iter().any(|s| !s.reached) {
        let _ = writeln!(
            out,
            "\nRows marked NO did not reach their target; they show the highest rate the ranking allows."
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::PruningRates;
    use std::collections::BTreeMap;

    fn scheme(target: f64, params: u64, flops: u64, reached: bool) -> JointScheme {
        let totals = Cost { params, flops };
        JointScheme {
            format_version: 1,
            target_pr: target,
            selections: BTreeMap::new(),
            totals,
            rates: PruningRates {
                pr_params: 0.0,
                pr_flops: 0.0,
            },
            reached,
            trace: Vec::new(),
        }
    }

    #[test]
    fn rates_come_from_totals() {
        let base = Cost {
            params: 200_000,
            flops: 1_000_000,
        };
        let text = render_report("toy", base, &[scheme(0.5, 90_000, 400_000, true)]);
        assert!(text.contains("| 55.00% | 60.00% | yes |"), "{text}");
        let text = render_report("toy", base, &[scheme(0.99, 90_000, 400_000, false)]);
        assert!(text.contains("| NO |") && text.contains("did not reach"), "{text}");
    }
}
