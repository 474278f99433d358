//! Command-line front end of the joint-distribution test.

use std::io::Write;

use bptd_core::baselines::bptf_q_for_parity;
use bptd_core::geweke::{geweke_test, BptdSubject, BptfSubject, GewekeConfig, GewekeReport, GewekeSubject, GpirmSubject};
use bptd_core::model::ModelDims;
use bptd_core::{AllocationMode, Hyperparams, ModelKind, RngStream};

use crate::error::Result;

/// |z| above which a statistic is flagged.
pub const Z_THRESHOLD: f64 = 3.0;

pub fn run_geweke(
    model: ModelKind,
    dims: ModelDims,
    hyper: Hyperparams,
    mode: AllocationMode,
    cfg: GewekeConfig,
    seed: u64,
) -> Result<GewekeReport> {
    let mut rng = RngStream::new(seed);
    let mut subject: Box<dyn GewekeSubject> = match model {
        ModelKind::Bptd => Box::new(BptdSubject::new(dims, hyper, mode, &mut rng)?),
        ModelKind::Bptf => {
            let q = bptf_q_for_parity(
                dims.countries,
                dims.actions,
                dims.steps,
                dims.communities,
                dims.topics,
                dims.regimes,
            );
            Box::new(BptfSubject::new(dims, q, hyper, &mut rng)?)
        }
        ModelKind::Gpirm => Box::new(GpirmSubject::new(dims, hyper, false, &mut rng)?),
        ModelKind::Dcgpirm => Box::new(GpirmSubject::new(dims, hyper, true, &mut rng)?),
    };
    Ok(geweke_test(subject.as_mut(), cfg, &mut rng)?)
}

pub fn write_report<W: Write>(mut out: W, report: &GewekeReport) -> Result<()> {
    writeln!(out, "statistic\tforward_mean\tsuccessive_mean\tz")?;
    for (i, name) in report.names.iter().enumerate() {
        writeln!(
            out,
            "{name}\t{:.6}\t{:.6}\t{:.3}",
            report.forward_mean[i], report.successive_mean[i], report.z[i]
        )?;
    }
    out.flush()?;
    Ok(())
}
