//! Plot-ready CSV writers. Columns are fixed; floats use 17 significant
//! digits (`{:.16e}`) so values round-trip exactly.

use std::io::Write;

use crate::error::Result;
use crate::landscape::LandscapeReport;

use super::concentration::ConcentrationStat;
use super::transition::TransitionTrial;

pub const TRANSITION_HEADER: &str = "n,m,multiplier,trial,outcome,iters,final_dist";
pub const CONCENTRATION_HEADER: &str = "check_id,n,m,epsilon,trial,value,fail";
pub const LANDSCAPE_HEADER: &str = "lemma_id,n,m,seed,worst_statistic,pass";

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_transition_csv<W: Write>(mut w: W, trials: &[TransitionTrial]) -> Result<()> {
    writeln!(w, "{TRANSITION_HEADER}")?;
    let mut rows: Vec<&TransitionTrial> = trials.iter().collect();
    rows.sort_by_key(|t| (t.n, t.m, t.trial));
    for t in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            t.n,
            t.m,
            fmt_f64(t.multiplier),
            t.trial,
            t.outcome,
            t.iters,
            fmt_f64(t.final_dist)
        )?;
    }
    Ok(())
}

pub fn write_concentration_csv<W: Write>(mut w: W, stats: &[ConcentrationStat]) -> Result<()> {
    writeln!(w, "{CONCENTRATION_HEADER}")?;
    for s in stats {
        for (trial, v) in s.values.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                s.check_id.as_str(),
                s.n,
                s.m,
                fmt_f64(s.epsilon),
                trial,
                fmt_f64(*v),
                u8::from(s.trial_fails(trial))
            )?;
        }
    }
    Ok(())
}

pub fn write_landscape_csv<W: Write>(mut w: W, reports: &[LandscapeReport]) -> Result<()> {
    writeln!(w, "{LANDSCAPE_HEADER}")?;
    for r in reports {
        for v in &r.verdicts {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                v.lemma_id,
                r.n,
                r.m,
                r.seed,
                fmt_f64(v.worst_statistic),
                u8::from(v.pass)
            )?;
        }
    }
    Ok(())
}
