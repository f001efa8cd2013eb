//! Problem files, result records and subcommands behind the `ncupper` binary.

pub mod bundled;
pub mod error;
pub mod problem;
pub mod record;
pub mod run;

pub use error::CliError;
pub use problem::{parse_problem, parse_problem_str, Problem, ProblemFile};
pub use record::ResultRecord;
pub use run::{run_eval_state, run_mc_check, run_solve, weingarten_table, SolveOptions};
