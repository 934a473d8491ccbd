use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(risro_bench::cli::main_with(std::env::args_os()))
}
