//! `filters`: generate a seeded bank assignment, print the Gram matrix of
//! every bank, and export/import assignments through the checkpoint format.
//! Imported banks are re-validated; a non-orthonormal bank exits 2.

use std::path::PathBuf;

use wavenet_core::filterbank::{build_assignment_scaled, FilterAssignment};
use wavenet_core::Rng;

use crate::checkpoint::Checkpoint;
use crate::error::Result;
use crate::model::{assignment_from, assignment_into};

#[derive(Debug, Clone)]
pub struct FiltersOptions {
    pub seed: u64,
    pub d: usize,
    pub scale: usize,
    pub export: Option<PathBuf>,
    pub import: Option<PathBuf>,
}

const ORTHONORMALITY_TOL: f64 = 1e-10;

pub fn cmd_filters(opts: &FiltersOptions) -> Result<i32> {
    let assignment = match &opts.import {
        Some(path) => assignment_from(&Checkpoint::load(path)?)?,
        None => build_assignment_scaled(&mut Rng::new(opts.seed), opts.d, opts.scale)?,
    };
    println!(
        "d {} scale {} groups {:?} chunk {}",
        assignment.d(),
        assignment.scale(),
        assignment.group_sizes(),
        assignment.chunk_size()
    );
    let mut all_ok = true;
    for (slot, bank) in assignment.labeled_banks() {
        let ok = bank.is_orthonormal(ORTHONORMALITY_TOL);
        all_ok &= ok;
        println!("bank {slot} orthonormal {ok}");
        let g = bank.gram();
        for i in 0..4 {
            let row: Vec<String> = (0..4)
                .map(|j| format!("{:+.12}", g.data()[i * 4 + j]))
                .collect();
            println!("  {}", row.join(" "));
        }
    }
    if let Some(path) = &opts.export {
        export_assignment(&assignment, path)?;
        println!("exported {}", path.display());
    }
    Ok(if all_ok { 0 } else { 2 })
}

pub fn export_assignment(assignment: &FilterAssignment, path: &std::path::Path) -> Result<()> {
    let mut ck = Checkpoint::new();
    assignment_into(&mut ck, assignment)?;
    ck.save(path)
}
