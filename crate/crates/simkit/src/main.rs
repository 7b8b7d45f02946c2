use std::process::ExitCode;

fn main() -> ExitCode {
    rla_simkit::cli::main_with_args(std::env::args_os())
}
