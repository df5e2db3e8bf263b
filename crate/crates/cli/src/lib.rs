//! Library half of the `lowrank-shield` binary: the defense config grammar,
//! classifier persistence, report emission, and the command implementations.
//! `main.rs` only parses flags and maps errors to exit codes.

pub mod commands;
pub mod config;
pub mod model;
pub mod report;

use lowrank_shield::Error;

/// Process exit code for an error: 2 for usage/config problems, 4 for
/// numerical failures, 3 for everything data-shaped (I/O, parse, domain).
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        Error::Numerical(_) => 4,
        Error::Domain(_) | Error::Parse { .. } | Error::Io(_) => 3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_map_error_categories() {
        assert_eq!(exit_code(&Error::config("x")), 2);
        assert_eq!(exit_code(&Error::numerical("x")), 4);
        assert_eq!(exit_code(&Error::domain("x")), 3);
        assert_eq!(exit_code(&Error::parse(0, "x")), 3);
        assert_eq!(
            exit_code(&Error::Io(std::io::Error::other("x"))),
            3
        );
    }
}
