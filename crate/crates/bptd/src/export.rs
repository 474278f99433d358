//! Plot-ready TSV exports of a BPTD state.
//!
//! * `theta.tsv`, `phi.tsv`, `psi.tsv`: one row per country, action and time
//!   step, labelled, with one column per community, topic and regime.
//! * `core.tsv`: `regime topic sender_community receiver_community value`.
//! * `networks.tsv`: per topic, the community-to-community weights
//!   `Σ_r λ^(r)_{c→k d} Σ_t ψ_tr`.
//! * `weights.tsv`: the shrinkage weights `η↻`, `η↔`, `ν`, `ρ`.
//! * `effective_dims.tsv`: counts of weights above the threshold.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use bptd_core::linalg::Matrix;
use bptd_core::model::effective_dims;
use bptd_core::{BptdState, Vocabulary};

use crate::error::{AppError, Result};

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).map_err(AppError::io(format!("creating {}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn label(vocab: Option<&Vocabulary>, i: usize) -> String {
    vocab
        .and_then(|v| v.label(i))
        .map_or_else(|| i.to_string(), str::to_owned)
}

fn write_factor(path: &Path, m: &Matrix, row_name: &str, col_prefix: &str, vocab: Option<&Vocabulary>) -> Result<()> {
    let mut w = create(path)?;
    write!(w, "{row_name}")?;
    for c in 0..m.cols() {
        write!(w, "\t{col_prefix}{c}")?;
    }
    writeln!(w)?;
    for i in 0..m.rows() {
        write!(w, "{}", label(vocab, i))?;
        for x in m.row(i) {
            write!(w, "\t{x}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Labels for the rows of the exported factors. Missing vocabularies fall
/// back to indices.
#[derive(Debug, Clone, Copy, Default)]
pub struct Labels<'a> {
    pub countries: Option<&'a Vocabulary>,
    pub actions: Option<&'a Vocabulary>,
    pub steps: Option<&'a Vocabulary>,
}

pub fn export_state(state: &BptdState, labels: Labels<'_>, threshold: f64, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(AppError::io(format!("creating {}", out.display())))?;
    let p = &state.params;
    write_factor(&out.join("theta.tsv"), &p.theta, "country", "c", labels.countries)?;
    write_factor(&out.join("phi.tsv"), &p.phi, "action", "k", labels.actions)?;
    write_factor(&out.join("psi.tsv"), &p.psi, "step", "r", labels.steps)?;

    let (c_n, k_n, r_n) = (p.core.communities(), p.core.topics(), p.core.regimes());
    let mut w = create(&out.join("core.tsv"))?;
    writeln!(w, "regime\ttopic\tsender_community\treceiver_community\tvalue")?;
    for r in 0..r_n {
        for k in 0..k_n {
            for c in 0..c_n {
                for d in 0..c_n {
                    writeln!(w, "{r}\t{k}\t{c}\t{d}\t{}", p.core.get(c, d, k, r))?;
                }
            }
        }
    }
    w.flush()?;

    let psi_mass = p.psi.col_sums();
    let mut w = create(&out.join("networks.tsv"))?;
    writeln!(w, "topic\tsender_community\treceiver_community\tweight")?;
    for k in 0..k_n {
        for c in 0..c_n {
            for d in 0..c_n {
                let weight: f64 = (0..r_n).map(|r| p.core.get(c, d, k, r) * psi_mass[r]).sum();
                writeln!(w, "{k}\t{c}\t{d}\t{weight}")?;
            }
        }
    }
    w.flush()?;

    let mut w = create(&out.join("weights.tsv"))?;
    writeln!(w, "weight\tindex\tvalue")?;
    for (name, v) in [
        ("eta_within", &state.eta_within),
        ("eta_between", &state.eta_between),
        ("nu", &state.nu),
        ("rho", &state.rho),
    ] {
        for (i, x) in v.iter().enumerate() {
            writeln!(w, "{name}\t{i}\t{x}")?;
        }
    }
    w.flush()?;

    let (ce, ke, re) = effective_dims(state, threshold)?;
    let mut w = create(&out.join("effective_dims.tsv"))?;
    writeln!(w, "mode\teffective\ttruncation\tthreshold")?;
    writeln!(w, "communities\t{ce}\t{c_n}\t{threshold}")?;
    writeln!(w, "topics\t{ke}\t{k_n}\t{threshold}")?;
    writeln!(w, "regimes\t{re}\t{r_n}\t{threshold}")?;
    w.flush()?;
    Ok(())
}
