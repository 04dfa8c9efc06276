use std::process::ExitCode;

fn main() -> ExitCode {
    spatial_css::cli::run(std::env::args_os())
}
